#pragma once

#include <cmath>
#include <cstdint>

#include "gridlm/params.hpp"

namespace gridlm {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;
    int warmup_steps = 0; // linear warmup from 0 to lr, then constant
};

/// AdamW with bias correction and decoupled weight decay. Moments live in the
/// ParamStore so checkpoints capture the full optimizer state.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {
        if (cfg.beta1 <= 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 <= 0.0 || cfg.beta2 >= 1.0) {
            throw ConfigError("adamw: betas must lie in (0,1)");
        }
    }

    const AdamWConfig& config() const { return cfg_; }
    int64_t step_count() const { return step_count_; }
    void set_step_count(int64_t s) { step_count_ = s; }

    double current_lr() const {
        if (cfg_.warmup_steps > 0 && step_count_ < cfg_.warmup_steps) {
            return cfg_.lr * static_cast<double>(step_count_ + 1) / cfg_.warmup_steps;
        }
        return cfg_.lr;
    }

    /// One update from the gradients currently held in the store; zeroes them.
    void step(ParamStore& store) {
        const double lr = current_lr();
        const int64_t t = step_count_ + 1;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
        for (ParamId pid = 0; pid < store.count(); ++pid) {
            Tensor& p = store.value(pid);
            Tensor& g = store.grad(pid);
            Tensor& m = store.moment1(pid);
            Tensor& v = store.moment2(pid);
            if (!p.same_shape(g)) throw ConfigError("adamw: gradient shape mismatch");
            for (size_t i = 0; i < p.data.size(); ++i) {
                m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g.data[i];
                v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g.data[i] * g.data[i];
                const double mhat = m.data[i] / bc1;
                const double vhat = v.data[i] / bc2;
                p.data[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p.data[i]);
            }
        }
        step_count_ = t;
        store.zero_grads();
    }

private:
    AdamWConfig cfg_;
    int64_t step_count_ = 0;
};

} // namespace gridlm

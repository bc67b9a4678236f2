#pragma once

#include <string>
#include <vector>

#include "gridlm/errors.hpp"
#include "gridlm/rng.hpp"
#include "gridlm/tensor.hpp"

namespace gridlm {

using ParamId = int32_t;

/// Named trainable tensors plus their gradients and AdamW moments, in a fixed
/// registration order. The order defines gradient-reduction and update order,
/// which keeps training bit-deterministic.
class ParamStore {
public:
    ParamId add(const std::string& name, Tensor value) {
        for (const auto& s : slots_) {
            if (s.name == name) throw ConfigError("duplicate parameter name: " + name);
        }
        Slot s;
        s.name = name;
        s.grad = Tensor(value.rows, value.cols);
        s.m = Tensor(value.rows, value.cols);
        s.v = Tensor(value.rows, value.cols);
        s.value = std::move(value);
        slots_.push_back(std::move(s));
        return static_cast<ParamId>(slots_.size() - 1);
    }

    int count() const { return static_cast<int>(slots_.size()); }

    const std::string& name(ParamId id) const { return slots_[static_cast<size_t>(id)].name; }
    Tensor& value(ParamId id) { return slots_[static_cast<size_t>(id)].value; }
    const Tensor& value(ParamId id) const { return slots_[static_cast<size_t>(id)].value; }
    Tensor& grad(ParamId id) { return slots_[static_cast<size_t>(id)].grad; }
    const Tensor& grad(ParamId id) const { return slots_[static_cast<size_t>(id)].grad; }
    Tensor& moment1(ParamId id) { return slots_[static_cast<size_t>(id)].m; }
    Tensor& moment2(ParamId id) { return slots_[static_cast<size_t>(id)].v; }
    const Tensor& moment1(ParamId id) const { return slots_[static_cast<size_t>(id)].m; }
    const Tensor& moment2(ParamId id) const { return slots_[static_cast<size_t>(id)].v; }

    ParamId find(const std::string& name) const {
        for (size_t i = 0; i < slots_.size(); ++i) {
            if (slots_[i].name == name) return static_cast<ParamId>(i);
        }
        return -1;
    }

    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& s : slots_) n += s.value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& s : slots_) s.grad.fill(0.0);
    }

    double grad_norm() const {
        double sq = 0.0;
        for (const auto& s : slots_) {
            for (double g : s.grad.data) sq += g * g;
        }
        return std::sqrt(sq);
    }

private:
    struct Slot {
        std::string name;
        Tensor value;
        Tensor grad;
        Tensor m;
        Tensor v;
    };
    std::vector<Slot> slots_;
};

inline void init_normal(Tensor& t, Rng& rng, double std_dev) {
    for (double& v : t.data) v = std_dev * rng.gaussian();
}

} // namespace gridlm

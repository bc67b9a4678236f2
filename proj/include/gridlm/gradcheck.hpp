#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gridlm/params.hpp"
#include "gridlm/rng.hpp"

namespace gridlm {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int swept = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_tensor;
    double max_rel_err = 0.0;
    bool within(double tol) const { return max_rel_err < tol; }
};

/// Compares analytic gradients against central finite differences.
///
/// `loss_and_grad` must populate store gradients and return the loss;
/// `loss_only` must leave the store untouched. Tensors larger than
/// `max_entries_per_tensor` are probed at a seeded random subset of entries so
/// that large models stay sweepable.
inline GradCheckReport grad_check(ParamStore& store,
                                  const std::function<double()>& loss_and_grad,
                                  const std::function<double()>& loss_only,
                                  double fd_step = 1e-3,
                                  int max_entries_per_tensor = 1 << 30,
                                  uint64_t probe_seed = 17) {
    store.zero_grads();
    loss_and_grad();

    std::vector<Tensor> analytic;
    analytic.reserve(static_cast<size_t>(store.count()));
    for (ParamId pid = 0; pid < store.count(); ++pid) analytic.push_back(store.grad(pid));

    GradCheckReport report;
    Rng probe(probe_seed);
    for (ParamId pid = 0; pid < store.count(); ++pid) {
        Tensor& p = store.value(pid);
        const int64_t n = p.numel();
        std::vector<int64_t> entries;
        if (n <= max_entries_per_tensor) {
            entries.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) entries[static_cast<size_t>(i)] = i;
        } else {
            Rng r = probe.split(static_cast<uint64_t>(pid));
            for (int i = 0; i < max_entries_per_tensor; ++i) {
                entries.push_back(static_cast<int64_t>(r.below(static_cast<uint64_t>(n))));
            }
        }
        GradCheckEntry e;
        e.name = store.name(pid);
        e.swept = static_cast<int>(entries.size());
        for (int64_t i : entries) {
            const double saved = p.data[static_cast<size_t>(i)];
            p.data[static_cast<size_t>(i)] = saved + fd_step;
            const double lp = loss_only();
            p.data[static_cast<size_t>(i)] = saved - fd_step;
            const double lm = loss_only();
            p.data[static_cast<size_t>(i)] = saved;
            const double numeric = (lp - lm) / (2.0 * fd_step);
            const double exact = analytic[static_cast<size_t>(pid)].data[static_cast<size_t>(i)];
            const double abs_err = std::abs(numeric - exact);
            const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-8});
            e.max_abs_err = std::max(e.max_abs_err, abs_err);
            e.max_rel_err = std::max(e.max_rel_err, abs_err / denom);
        }
        report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
        report.per_tensor.push_back(std::move(e));
    }
    return report;
}

} // namespace gridlm

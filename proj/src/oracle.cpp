#include "gridlm/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "gridlm/errors.hpp"

namespace gridlm {

std::string to_string(JointKind k) {
    switch (k) {
        case JointKind::kFactorized: return "factorized";
        case JointKind::kPairwiseMarkov: return "pairwise-markov";
        case JointKind::kCopyPairs: return "copy-pairs";
    }
    return "?";
}

JointKind joint_kind_from_string(const std::string& s) {
    if (s == "factorized") return JointKind::kFactorized;
    if (s == "pairwise-markov") return JointKind::kPairwiseMarkov;
    if (s == "copy-pairs") return JointKind::kCopyPairs;
    throw ConfigError("unknown joint kind: " + s);
}

double JointSpec::outcome_count() const {
    return std::pow(static_cast<double>(vocab), static_cast<double>(cells()));
}

double JointSpec::unnormalized_prob(const std::vector<int32_t>& assignment) const {
    const int n = cells();
    switch (kind) {
        case JointKind::kFactorized: {
            double p = 1.0;
            for (int i = 0; i < n; ++i) p *= marginals.at(i, assignment[static_cast<size_t>(i)]);
            return p;
        }
        case JointKind::kPairwiseMarkov: {
            double lp = 0.0;
            for (size_t e = 0; e < edges.size(); ++e) {
                const int a = assignment[static_cast<size_t>(edges[e].u)];
                const int b = assignment[static_cast<size_t>(edges[e].v)];
                lp += potentials.at(static_cast<int>(e), a * vocab + b);
            }
            return std::exp(lp);
        }
        case JointKind::kCopyPairs: {
            const double inv_v = 1.0 / vocab;
            double p = 1.0;
            std::vector<bool> covered(static_cast<size_t>(n), false);
            for (const auto& [left, right] : pairs) {
                covered[static_cast<size_t>(left)] = covered[static_cast<size_t>(right)] = true;
                const bool eq = assignment[static_cast<size_t>(left)] == assignment[static_cast<size_t>(right)];
                p *= inv_v * ((eq ? 1.0 - eps : 0.0) + eps * inv_v);
            }
            for (int i = 0; i < n; ++i) {
                if (!covered[static_cast<size_t>(i)]) p *= inv_v;
            }
            return p;
        }
    }
    return 0.0;
}

JointSpec JointSpec::factorized_uniform(int h, int w, int v) {
    JointSpec s;
    s.kind = JointKind::kFactorized;
    s.grid_h = h;
    s.grid_w = w;
    s.vocab = v;
    s.marginals = Tensor(h * w, v, 1.0 / v);
    return s;
}

JointSpec JointSpec::factorized_random(int h, int w, int v, uint64_t seed) {
    JointSpec s = factorized_uniform(h, w, v);
    Rng rng(seed);
    for (int i = 0; i < s.cells(); ++i) {
        double total = 0.0;
        for (int j = 0; j < v; ++j) {
            s.marginals.at(i, j) = 0.1 + rng.uniform01();
            total += s.marginals.at(i, j);
        }
        for (int j = 0; j < v; ++j) s.marginals.at(i, j) /= total;
    }
    return s;
}

JointSpec JointSpec::pairwise_markov(int h, int w, int v, uint64_t seed, double coupling) {
    JointSpec s;
    s.kind = JointKind::kPairwiseMarkov;
    s.grid_h = h;
    s.grid_w = w;
    s.vocab = v;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (c + 1 < w) s.edges.push_back({r * w + c, r * w + c + 1});
            if (r + 1 < h) s.edges.push_back({r * w + c, (r + 1) * w + c});
        }
    }
    s.potentials = Tensor(static_cast<int>(s.edges.size()), v * v);
    Rng rng(seed);
    for (double& p : s.potentials.data) p = rng.uniform(-coupling, coupling);
    return s;
}

JointSpec JointSpec::copy_pairs(int h, int w, int v, double eps) {
    JointSpec s;
    s.kind = JointKind::kCopyPairs;
    s.grid_h = h;
    s.grid_w = w;
    s.vocab = v;
    s.eps = eps;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w / 2; ++c) {
            const int partner_r = (r + h / 2) % h;
            const int partner_c = w - 1 - c;
            s.pairs.emplace_back(r * w + c, partner_r * w + partner_c);
        }
    }
    return s;
}

std::vector<int32_t> assignment_from_index(const JointSpec& spec, int64_t index) {
    const int n = spec.cells();
    std::vector<int32_t> a(static_cast<size_t>(n));
    for (int i = n - 1; i >= 0; --i) {
        a[static_cast<size_t>(i)] = static_cast<int32_t>(index % spec.vocab);
        index /= spec.vocab;
    }
    return a;
}

int64_t index_from_assignment(const JointSpec& spec, const std::vector<int32_t>& assignment) {
    int64_t idx = 0;
    for (int i = 0; i < spec.cells(); ++i) {
        idx = idx * spec.vocab + assignment[static_cast<size_t>(i)];
    }
    return idx;
}

std::vector<double> enumerate_joint(const JointSpec& spec) {
    if (!spec.enumerable()) throw ConfigError("joint: V^N exceeds the enumeration bound");
    const int64_t count = static_cast<int64_t>(spec.outcome_count());
    std::vector<double> table(static_cast<size_t>(count));
    std::vector<int32_t> a(static_cast<size_t>(spec.cells()), 0);
    double total = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        const double p = spec.unnormalized_prob(a);
        table[static_cast<size_t>(i)] = p;
        total += p;
        for (int d = spec.cells() - 1; d >= 0; --d) {
            if (++a[static_cast<size_t>(d)] < spec.vocab) break;
            a[static_cast<size_t>(d)] = 0;
        }
    }
    if (!(total > 0.0)) throw NumericError("joint: zero total mass");
    for (double& p : table) p /= total;
    return table;
}

std::vector<double> exact_conditional(const JointSpec& spec, const std::vector<double>& table,
                                      const Revealed& revealed, int query_cell) {
    const int n = spec.cells();
    if (query_cell < 0 || query_cell >= n) throw ConfigError("conditional: bad query cell");
    for (int32_t c : revealed.cells) {
        if (c == query_cell) throw ConfigError("conditional: query cell already revealed");
    }
    std::vector<int32_t> fixed(static_cast<size_t>(n), -1);
    for (int i = 0; i < revealed.len(); ++i) {
        fixed[static_cast<size_t>(revealed.cells[static_cast<size_t>(i)])] =
            revealed.values[static_cast<size_t>(i)];
    }
    std::vector<double> num(static_cast<size_t>(spec.vocab), 0.0);
    std::vector<int32_t> a(static_cast<size_t>(n), 0);
    for (size_t idx = 0; idx < table.size(); ++idx) {
        bool match = true;
        for (int i = 0; i < n && match; ++i) {
            if (fixed[static_cast<size_t>(i)] >= 0 && a[static_cast<size_t>(i)] != fixed[static_cast<size_t>(i)]) {
                match = false;
            }
        }
        if (match) num[static_cast<size_t>(a[static_cast<size_t>(query_cell)])] += table[idx];
        for (int d = n - 1; d >= 0; --d) {
            if (++a[static_cast<size_t>(d)] < spec.vocab) break;
            a[static_cast<size_t>(d)] = 0;
        }
    }
    double denom = 0.0;
    for (double v : num) denom += v;
    if (!(denom > 0.0)) throw DomainError("conditional: zero-probability context");
    for (double& v : num) v /= denom;
    return num;
}

std::vector<double> exact_conditional_direct(const JointSpec& spec, const Revealed& revealed,
                                             int query_cell) {
    const int n = spec.cells();
    for (int32_t c : revealed.cells) {
        if (c == query_cell) throw ConfigError("conditional: query cell already revealed");
    }
    std::vector<int32_t> a(static_cast<size_t>(n), -1);
    for (int i = 0; i < revealed.len(); ++i) {
        a[static_cast<size_t>(revealed.cells[static_cast<size_t>(i)])] =
            revealed.values[static_cast<size_t>(i)];
    }
    std::vector<int> free_cells;
    for (int i = 0; i < n; ++i) {
        if (a[static_cast<size_t>(i)] < 0 && i != query_cell) free_cells.push_back(i);
    }
    std::vector<double> num(static_cast<size_t>(spec.vocab), 0.0);
    for (int32_t qv = 0; qv < spec.vocab; ++qv) {
        a[static_cast<size_t>(query_cell)] = qv;
        for (int f : free_cells) a[static_cast<size_t>(f)] = 0;
        // odometer over the free cells
        while (true) {
            num[static_cast<size_t>(qv)] += spec.unnormalized_prob(a);
            int d = static_cast<int>(free_cells.size()) - 1;
            for (; d >= 0; --d) {
                if (++a[static_cast<size_t>(free_cells[static_cast<size_t>(d)])] < spec.vocab) break;
                a[static_cast<size_t>(free_cells[static_cast<size_t>(d)])] = 0;
            }
            if (d < 0) break;
        }
    }
    double denom = 0.0;
    for (double v : num) denom += v;
    if (!(denom > 0.0)) throw DomainError("conditional: zero-probability context");
    for (double& v : num) v /= denom;
    return num;
}

std::vector<double> exact_marginal(const JointSpec& spec, int cell) {
    if (spec.kind == JointKind::kFactorized) {
        std::vector<double> p(static_cast<size_t>(spec.vocab));
        for (int v = 0; v < spec.vocab; ++v) p[static_cast<size_t>(v)] = spec.marginals.at(cell, v);
        return p;
    }
    if (spec.kind == JointKind::kCopyPairs) {
        // left cells are uniform and the pair channel preserves uniformity
        return std::vector<double>(static_cast<size_t>(spec.vocab), 1.0 / spec.vocab);
    }
    const std::vector<double> table = enumerate_joint(spec);
    return exact_conditional(spec, table, Revealed{}, cell);
}

double entropy_per_cell(const JointSpec& spec, const std::vector<double>& table) {
    double h = 0.0;
    for (double p : table) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h / spec.cells();
}

TokenGrid grid_from_assignment(const JointSpec& spec, const std::vector<int32_t>& assignment) {
    TokenGrid g;
    g.height = spec.grid_h;
    g.width = spec.grid_w;
    g.kind = GridKind::kDiscrete;
    g.ids = assignment;
    return g;
}

JointSampler::JointSampler(const JointSpec& spec) : spec_(spec) {
    if (spec_.kind == JointKind::kPairwiseMarkov) {
        const std::vector<double> table = enumerate_joint(spec_);
        cdf_.resize(table.size());
        double acc = 0.0;
        for (size_t i = 0; i < table.size(); ++i) {
            acc += table[i];
            cdf_[i] = acc;
        }
    }
}

TokenGrid JointSampler::sample(Rng& rng) const {
    const int n = spec_.cells();
    std::vector<int32_t> a(static_cast<size_t>(n), 0);
    switch (spec_.kind) {
        case JointKind::kFactorized: {
            for (int i = 0; i < n; ++i) {
                const double r = rng.uniform01();
                double acc = 0.0;
                int32_t pick = spec_.vocab - 1;
                for (int v = 0; v < spec_.vocab; ++v) {
                    acc += spec_.marginals.at(i, v);
                    if (r < acc) {
                        pick = v;
                        break;
                    }
                }
                a[static_cast<size_t>(i)] = pick;
            }
            break;
        }
        case JointKind::kCopyPairs: {
            std::vector<bool> covered(static_cast<size_t>(n), false);
            for (const auto& [left, right] : spec_.pairs) {
                covered[static_cast<size_t>(left)] = covered[static_cast<size_t>(right)] = true;
                const int32_t lv = static_cast<int32_t>(rng.below(static_cast<uint64_t>(spec_.vocab)));
                a[static_cast<size_t>(left)] = lv;
                a[static_cast<size_t>(right)] =
                    rng.uniform01() < 1.0 - spec_.eps
                        ? lv
                        : static_cast<int32_t>(rng.below(static_cast<uint64_t>(spec_.vocab)));
            }
            for (int i = 0; i < n; ++i) {
                if (!covered[static_cast<size_t>(i)]) {
                    a[static_cast<size_t>(i)] = static_cast<int32_t>(rng.below(static_cast<uint64_t>(spec_.vocab)));
                }
            }
            break;
        }
        case JointKind::kPairwiseMarkov: {
            const double r = rng.uniform01();
            const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), r);
            const int64_t idx = it == cdf_.end() ? static_cast<int64_t>(cdf_.size()) - 1
                                                 : static_cast<int64_t>(it - cdf_.begin());
            a = assignment_from_index(spec_, idx);
            break;
        }
    }
    return grid_from_assignment(spec_, a);
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ConfigError("total_variation: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

} // namespace gridlm

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gridlm/rng.hpp"
#include "gridlm/tensor.hpp"
#include "gridlm/tokenizer.hpp"

namespace gridlm {

enum class JointKind { kFactorized, kPairwiseMarkov, kCopyPairs };

std::string to_string(JointKind k);
JointKind joint_kind_from_string(const std::string& s);

/// An exactly enumerable synthetic distribution over small token grids — the
/// verification oracle. Outcomes are indexed with cell 0 as the most
/// significant base-V digit.
struct JointSpec {
    JointKind kind = JointKind::kFactorized;
    int grid_h = 2;
    int grid_w = 2;
    int vocab = 2;

    Tensor marginals; // factorized: (N, V), rows normalized

    struct Edge {
        int u = 0;
        int v = 0;
    };
    std::vector<Edge> edges; // pairwise-markov: 4-neighbor grid edges
    Tensor potentials;       // (E, V*V) log-potentials

    std::vector<std::pair<int, int>> pairs; // copy-pairs: (left cell, distant partner)
    double eps = 0.1;

    int cells() const { return grid_h * grid_w; }

    /// V^N as a double (may exceed integer range for large grids).
    double outcome_count() const;
    bool enumerable() const { return outcome_count() <= 4194304.0; } // 2^22

    /// Product-form probability of a full assignment (normalized for the
    /// factorized and copy-pairs kinds; unnormalized for pairwise-markov).
    double unnormalized_prob(const std::vector<int32_t>& assignment) const;

    static JointSpec factorized_uniform(int h, int w, int v);
    static JointSpec factorized_random(int h, int w, int v, uint64_t seed);
    /// Seeded log-potentials uniform in [-coupling, coupling] on grid edges.
    static JointSpec pairwise_markov(int h, int w, int v, uint64_t seed, double coupling);
    /// Pairs cell (r, c), c < W/2, with ((r + H/2) mod H, W-1-c): equal with
    /// probability 1 - eps, otherwise uniform. Unpaired cells are uniform.
    static JointSpec copy_pairs(int h, int w, int v, double eps);
};

std::vector<int32_t> assignment_from_index(const JointSpec& spec, int64_t index);
int64_t index_from_assignment(const JointSpec& spec, const std::vector<int32_t>& assignment);

/// Full probability table over all V^N outcomes, normalized.
std::vector<double> enumerate_joint(const JointSpec& spec);

/// Ordered revealed context for conditional queries.
struct Revealed {
    std::vector<int32_t> cells;
    std::vector<int32_t> values;

    int len() const { return static_cast<int>(cells.size()); }
};

/// p(x_query = v | revealed) by summation over the joint table.
std::vector<double> exact_conditional(const JointSpec& spec, const std::vector<double>& table,
                                      const Revealed& revealed, int query_cell);

/// Same quantity by direct summation over completions of the unassigned
/// cells, computed from the spec parameters without the table (independent
/// oracle route).
std::vector<double> exact_conditional_direct(const JointSpec& spec, const Revealed& revealed,
                                             int query_cell);

/// Single-cell marginal; uses the table when enumerable, the analytic uniform
/// form for copy-pairs, and the row for factorized kinds.
std::vector<double> exact_marginal(const JointSpec& spec, int cell);

/// Entropy in nats per cell, from the enumerated table.
double entropy_per_cell(const JointSpec& spec, const std::vector<double>& table);

TokenGrid grid_from_assignment(const JointSpec& spec, const std::vector<int32_t>& assignment);

/// Exact sampler: ancestral for factorized/copy-pairs, table CDF inversion
/// for pairwise-markov.
class JointSampler {
public:
    explicit JointSampler(const JointSpec& spec);
    TokenGrid sample(Rng& rng) const;

private:
    JointSpec spec_;
    std::vector<double> cdf_; // markov only
};

/// Total variation distance between two distributions on the same support.
double total_variation(const std::vector<double>& p, const std::vector<double>& q);

} // namespace gridlm

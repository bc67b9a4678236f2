#pragma once

#include <functional>

#include "gridlm/objective.hpp"
#include "gridlm/oracle.hpp"
#include "gridlm/sampler.hpp"

namespace gridlm {

/// Conditional distribution of one cell given an ordered revealed context.
using ConditionalFn = std::function<std::vector<double>(const Revealed&, int query_cell)>;

/// The model's conditional at `query_cell`: revealed pairs feed the backbone
/// in the given order, the head runs with every unrevealed cell masked, and
/// the payload at the query is softmaxed. Discrete output law only.
std::vector<double> model_conditional(const GridModel& model, const Revealed& revealed,
                                      int query_cell, int class_id = 0);

/// Evaluation subject: conditionals plus (optionally) a sample stream.
struct EvalModel {
    ConditionalFn conditional;
    std::function<TokenGrid(uint64_t)> generate; // null = skip sample-marginal checks
};

EvalModel eval_model_from_grid_model(const GridModel& model, const SamplingConfig& sampling,
                                     int class_id = 0);
/// Oracle-as-model stub: exact conditionals and exact sampling.
EvalModel eval_model_from_table(const JointSpec& spec);
EvalModel eval_model_uniform(int vocab, const JointSpec& shape_spec);

struct EvalSuiteConfig {
    int query_count = 200;
    int nll_examples = 200;
    int sample_count = 0; // 0 disables the generated-sample marginal check
    int order_sens_queries = 50;
    uint64_t seed = 1;
};

struct EvalReport {
    double tv_mean = 0.0;
    double tv_p95 = 0.0;
    double nll = 0.0;         // per supervised term (steps 1..N-1), nats
    double marginal_tv = -1.0; // -1 when no samples were requested
    double order_sens = 0.0;
    int query_count = 0;
};

/// Ground-truth evaluation against an enumerable spec: conditional TV
/// (mean/p95), held-out NLL per term, generated-sample marginal TV, and the
/// order-sensitivity statistic.
EvalReport eval_suite(const EvalModel& subject, const JointSpec& spec,
                      const EvalSuiteConfig& cfg);

/// Efficient held-out NLL for a trained model: one causal pass per example,
/// then per-step head reads at the next revealed cell. Orders are derived
/// from (seed, example index); the raster baseline uses its fixed order.
double heldout_nll(const GridModel& model, std::span<const Example> examples, ObjectiveTag tag,
                   uint64_t seed);

// ---- visualization exports ----

/// H x W map of cosine similarity between the reference cell's embedding row
/// and every other row. Zero-norm rows have similarity 0 by convention.
Tensor cosine_similarity_map(const Tensor& embeddings, int ref_cell, int grid_h, int grid_w);

/// Per-cell embedding rows for a grid: the codebook entry (discrete) or the
/// latent vector (continuous).
Tensor token_embeddings_for_grid(const TokenGrid& grid, const Tokenizer& tok);

/// Final-layer attention from the reference cell's step over grid positions,
/// head-averaged, for the grid fed in raster order. Unattended (future) cells
/// are zero.
Tensor attention_map(const GridModel& model, const TokenGrid& grid, int ref_cell,
                     int class_id = 0);

} // namespace gridlm

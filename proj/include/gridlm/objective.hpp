#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gridlm/model.hpp"
#include "gridlm/optimizer.hpp"

namespace gridlm {

enum class ObjectiveTag { k2d, k1dRaster, k1dRandom };

std::string to_string(ObjectiveTag tag);
ObjectiveTag objective_from_string(const std::string& s);

/// One training example's cell order, supervised timesteps, and window size.
struct OrderPlan {
    ObjectiveTag tag = ObjectiveTag::k2d;
    std::vector<int32_t> perm;       // bijection over cells; reveal order
    std::vector<int32_t> supervised; // ascending timesteps in {1..N-1}
    int window = 0;                  // w: chunk size or N (full grid)
};

/// 1d_raster fixes the identity order; 1d_random and 2d draw a uniform
/// permutation. Supervised timesteps are n draws without replacement from
/// {1..N-1} for the 2d objective; the 1d baselines supervise every step.
OrderPlan make_order_plan(ObjectiveTag tag, int n_cells, int window, int density, Rng& rng);

struct LossTerm {
    int t = 0;            // supervised timestep (prefix length in tokens)
    int target_count = 0; // masked positions contributing at this step
    double sum_loss = 0.0;
};

struct LossBreakdown {
    ObjectiveTag tag = ObjectiveTag::k2d;
    double total = 0.0; // mean over all (timestep, masked position) pairs
    int target_total = 0;
    std::vector<LossTerm> terms;
    std::vector<double> per_position;
};

struct LossGraph {
    LossBreakdown breakdown;
    int loss_node = -1; // (1,1) node: total target-count-normalized loss
};

/// Builds the training-loss graph for one example under the plan's objective.
/// The 2d path embeds tokens at their own positions and invokes the 2D head at
/// each supervised timestep; the 1d paths shift positions to name the next
/// target and take a single next-token loss per step. `rng` drives diffusion
/// noise draws (unused under the categorical law).
LossGraph build_loss(const GridModel& model, Tape& tape, const TokenGrid& grid, int class_id,
                     const OrderPlan& plan, Rng& rng);

struct Example {
    TokenGrid grid;
    int class_id = 0;
};

struct ObjectiveConfig {
    ObjectiveTag tag = ObjectiveTag::k2d;
    int window = 0;  // 0 or N = full grid
    int density = 1; // n
};

struct StepMetrics {
    int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
    int target_total = 0;
};

struct TrainOptions {
    int reduction_slices = 8; // fixed gradient-reduction layout, not thread count
    int threads = 1;
};

/// Resolves worker count from GRIDLM_THREADS (capped by hardware), default 1
/// thread when unset.
int resolve_thread_count();

/// Reusable per-slice tapes and gradient buffers; keeping these across steps
/// avoids re-allocating every node tensor each step.
class TrainContext {
public:
    TrainContext(const ParamStore* store, const TrainOptions& options);
    const TrainOptions& options() const { return options_; }

private:
    friend StepMetrics training_step(GridModel&, std::span<const Example>,
                                     const ObjectiveConfig&, AdamW&, Rng&, TrainContext&);
    TrainOptions options_;
    std::vector<std::unique_ptr<Tape>> tapes_;       // one per slice
    std::vector<std::vector<Tensor>> sinks_;         // per slice, per param
};

/// One optimizer step over a batch: a fresh OrderPlan per example, gradient
/// accumulation over a fixed slice layout (bit-deterministic for any thread
/// count), one AdamW update. `step_rng` must be derived from (seed, step).
StepMetrics training_step(GridModel& model, std::span<const Example> batch,
                          const ObjectiveConfig& objective, AdamW& opt, Rng& step_rng,
                          TrainContext& ctx);

/// Convenience wrapper constructing a throwaway context.
StepMetrics training_step(GridModel& model, std::span<const Example> batch,
                          const ObjectiveConfig& objective, AdamW& opt, Rng& step_rng,
                          const TrainOptions& options);

} // namespace gridlm

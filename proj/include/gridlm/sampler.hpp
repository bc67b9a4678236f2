#pragma once

#include <functional>
#include <vector>

#include "gridlm/model.hpp"

namespace gridlm {

enum class PositionPolicy { kUniform, kRaster };

PositionPolicy position_policy_from_string(const std::string& s);
std::string to_string(PositionPolicy p);

struct SamplingConfig {
    double temperature = 1.0;
    int top_k = 0;           // 0 = no truncation
    int diffusion_steps = 0; // 0 = full schedule
    PositionPolicy policy = PositionPolicy::kUniform;

    void validate() const {
        if (!(temperature > 0.0)) throw ConfigError("sampling: temperature must be positive");
        if (top_k < 0) throw ConfigError("sampling: top_k must be >= 0");
    }
};

/// Picks the next cell to reveal. `uniform` matches the training-time order
/// distribution; `raster` takes the lowest remaining index.
int32_t choose_position(const std::vector<int32_t>& remaining, PositionPolicy policy, Rng& rng);

/// Temperature-scaled, optionally top-k-truncated draw from logits.
/// Temperature below 1e-6 degenerates to argmax (ties to the lowest id).
int32_t sample_categorical(const std::vector<double>& logits, double temperature, int top_k,
                           Rng& rng);

/// Called once per reveal with the step index, the chosen cell, and the
/// pre-sampling payload (categorical probabilities, or the sampled latent).
using StepObserver =
    std::function<void(int step, int32_t cell, const std::vector<double>& payload)>;

/// Autoregressive grid generation: choose a position, sample its token from
/// the 2D prediction with every remaining cell masked, feed (token, own cell)
/// back, until the grid is full. `use_cache=false` re-runs the full causal
/// pass at each step (reference path for the cache-consistency property).
TokenGrid generate_grid(const GridModel& model, int class_id, const SamplingConfig& cfg,
                        uint64_t seed, const StepObserver& observer = nullptr,
                        bool use_cache = true);

/// Raw text dump: header "H W kind", then row-major ids or latent vectors.
std::string dump_token_grid(const TokenGrid& grid);
TokenGrid parse_token_grid(const std::string& text);

} // namespace gridlm

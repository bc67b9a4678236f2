#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridlm/nn.hpp"
#include "gridlm/tokenizer.hpp"

namespace gridlm {

enum class HeadKind { kGlobal, kChunk, kLinear1d };
enum class OutputLaw { kCategorical, kDiffusion };

struct DiffusionConfig {
    int blocks = 3;
    int width = 256;
    int steps = 100; // T
};

struct ModelConfig {
    int grid_h = 3;
    int grid_w = 3;
    int depth = 2;
    int hidden = 64;
    int ffn = 256;
    int heads = 4;
    int head_depth = 2;
    HeadKind head_kind = HeadKind::kGlobal;
    OutputLaw law = OutputLaw::kCategorical;
    int vocab = 0;      // categorical law
    int latent_m = 0;   // diffusion law
    int chunk_w = 0;    // window size w for the chunk head
    int class_count = 0; // 0 = unconditional (single learned start token)
    DiffusionConfig diffusion;

    int cells() const { return grid_h * grid_w; }
    void validate() const;
};

/// Row-major rectangular chunk tiling: sqrt(w) x sqrt(w) blocks when w is a
/// perfect square dividing both extents, otherwise 1 x w runs.
struct ChunkTiling {
    int grid_h = 0;
    int grid_w = 0;
    int tile_h = 1;
    int tile_w = 1;

    static ChunkTiling make(int grid_h, int grid_w, int w);

    int chunk_count() const { return (grid_h / tile_h) * (grid_w / tile_w); }
    int cells_per_chunk() const { return tile_h * tile_w; }
    int chunk_of(int cell) const {
        const int r = cell / grid_w, c = cell % grid_w;
        return (r / tile_h) * (grid_w / tile_w) + c / tile_w;
    }
    int offset_in_chunk(int cell) const {
        const int r = cell / grid_w, c = cell % grid_w;
        return (r % tile_h) * tile_w + c % tile_w;
    }
    std::vector<int32_t> cells_of_chunk(int chunk) const {
        const int cw = grid_w / tile_w;
        const int r0 = (chunk / cw) * tile_h, c0 = (chunk % cw) * tile_w;
        std::vector<int32_t> out;
        out.reserve(static_cast<size_t>(cells_per_chunk()));
        for (int r = 0; r < tile_h; ++r) {
            for (int c = 0; c < tile_w; ++c) out.push_back((r0 + r) * grid_w + (c0 + c));
        }
        return out;
    }
};

/// An ordered reveal prefix: cell indices plus token payloads, with the class
/// (or unconditional start) id for the prepended start row.
struct RevealSeq {
    std::vector<int32_t> cells;
    std::vector<int32_t> ids; // discrete payloads
    Tensor latents;           // continuous payloads, (len, m)
    int class_id = 0;

    int len() const { return static_cast<int>(cells.size()); }
};

/// Per-layer cached keys/values plus the final-norm hidden rows of the
/// processed prefix; incremental forward must match the full pass.
struct DecodeCache {
    std::vector<Tensor> k; // per layer, (len, hidden)
    std::vector<Tensor> v;
    Tensor hidden_final;   // (len, hidden), after the backbone final norm
    int len = 0;
};

/// Cosine noise schedule for the denoising head; alpha_bar(0) = 1 and the
/// final step is clamped just above zero so posterior terms stay finite.
std::vector<double> cosine_alpha_bar(int steps);

/// The grid model: a 1D causal transformer over (token, own 2D position)
/// inputs, a 2D prediction head (global bidirectional or chunked
/// cross-attention), and a categorical or diffusion output law. The shifted
/// 1D-baseline embedding (next-target positions) is provided for contrast
/// experiments; the 2D path never sees a next-position argument.
class GridModel {
public:
    GridModel(ModelConfig cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ChunkTiling& tiling() const { return tiling_; }

    // ---- embeddings ----

    /// Input rows for the 2D objective: [start] + [token(i) + pos(own cell i)].
    int embed_rows_own(Tape& t, const RevealSeq& seq) const;

    /// Input rows for the shifted 1D baseline: row i carries the position of
    /// target_cells[i], the *next* cell to predict. target_cells.size() must
    /// equal seq.len() + 1 (the start row names the first target).
    int embed_rows_shifted(Tape& t, const RevealSeq& seq,
                           const std::vector<int32_t>& target_cells) const;

    // ---- backbone ----

    /// Full causal pass over the input rows; returns (rows, hidden) after the
    /// final norm. `attn_nodes` receives one mha node id per layer.
    int backbone(Tape& t, int input_rows, std::vector<int>* attn_nodes = nullptr) const;

    DecodeCache new_cache() const;

    /// One incremental step; appends to the cache and returns the new
    /// final-norm hidden row. Equals the last row of a full pass on the
    /// extended prefix.
    std::vector<double> cache_step(DecodeCache& cache, const std::vector<double>& input_row) const;

    /// Input row(s) as plain vectors for the incremental path.
    std::vector<double> embed_start_row(int class_id) const;
    std::vector<double> embed_token_row_own(int32_t id, const double* latent, int cell) const;

    // ---- prediction heads ----

    /// Global head: [prefix hidden rows; mask_token(c) + pos(c)] through
    /// bidirectional blocks; returns payload rows for masked cells only.
    /// Rejects masked cells that overlap the prefix.
    int global_head_payload(Tape& t, int hidden_prefix, const std::vector<int32_t>& prefix_cells,
                            const std::vector<int32_t>& masked_cells) const;

    /// Chunk head: learnable within-chunk queries cross-attend to the prefix,
    /// then self-attend within the chunk. All masked cells must lie in the
    /// chunk; the prefix must be non-empty.
    int chunk_head_payload(Tape& t, int hidden_prefix, int chunk_id,
                           const std::vector<int32_t>& masked_cells) const;

    /// Categorical logits from payload rows (also the 1D baseline head).
    int logits_from_payload(Tape& t, int payload) const;

    // ---- diffusion law ----

    const std::vector<double>& alpha_bar() const { return alpha_bar_; }

    /// Noise-prediction MSE at a uniformly drawn timestep: (1, 1) node.
    int diffusion_loss_node(Tape& t, int z_row, const double* x0, Rng& rng) const;

    /// Denoiser forward eps_hat(x_t, t, z) as a tape node; z_row is (1, hidden).
    int denoiser_eps(Tape& t, int x_row, int timestep, int z_row) const;

    /// Ancestral DDPM sampling conditioned on z (hidden-width vector).
    std::vector<double> diffusion_sample(const std::vector<double>& z, Rng& rng,
                                         int sample_steps) const;

private:
    ModelConfig cfg_;
    ParamStore store_;
    ChunkTiling tiling_;

    ParamId token_table_ = -1;   // (vocab, hidden), discrete
    LinearP latent_proj_;        // m -> hidden, continuous
    ParamId pos_table_ = -1;     // (N, hidden)
    ParamId start_table_ = -1;   // (max(1, class_count), hidden)
    std::vector<BlockP> blocks_;
    LayerNormP ln_f_;
    ParamId mask_table_ = -1;    // (N, hidden) global / (w, hidden) chunk
    std::vector<BlockP> head_blocks_;
    LayerNormP head_ln_f_;
    LinearP out_proj_;           // hidden -> vocab; categorical law only (diffusion reads z directly)

    // diffusion denoiser
    LinearP cond_proj_;          // hidden -> width
    ParamId time_table_ = -1;    // (T, width)
    LinearP in_proj_;            // m -> width
    struct DenoiserBlock {
        LinearP scale, shift, fc1, fc2;
    };
    std::vector<DenoiserBlock> dblocks_;
    LinearP final_scale_, final_shift_, eps_proj_;
    std::vector<double> alpha_bar_;
};

} // namespace gridlm

#include "gridlm/model.hpp"

#include <cmath>

namespace gridlm {

void ModelConfig::validate() const {
    if (grid_h < 1 || grid_w < 1 || cells() < 1) throw ConfigError("model: grid extents must be positive");
    if (hidden % heads != 0) throw ConfigError("model: hidden not divisible by head count");
    if (depth < 1) throw ConfigError("model: depth must be >= 1");
    if (law == OutputLaw::kCategorical) {
        if (vocab < 2) throw ConfigError("model: categorical law needs vocab >= 2");
        if (latent_m != 0) throw ConfigError("model: categorical law excludes a latent width");
    } else {
        if (latent_m < 1) throw ConfigError("model: diffusion law needs latent width >= 1");
        if (vocab != 0) throw ConfigError("model: diffusion law excludes a vocabulary");
        if (diffusion.steps < 10) throw ConfigError("model: diffusion needs T >= 10");
        if (diffusion.blocks < 1 || diffusion.width < 1) throw ConfigError("model: bad denoiser size");
    }
    if (head_kind == HeadKind::kChunk) {
        if (chunk_w < 1) throw ConfigError("model: chunk head needs a window size");
        ChunkTiling::make(grid_h, grid_w, chunk_w); // throws when the tiling is impossible
    }
    if (head_kind != HeadKind::kLinear1d && head_depth < 1) {
        throw ConfigError("model: prediction head depth must be >= 1");
    }
    if (class_count < 0) throw ConfigError("model: negative class count");
}

ChunkTiling ChunkTiling::make(int grid_h, int grid_w, int w) {
    ChunkTiling t;
    t.grid_h = grid_h;
    t.grid_w = grid_w;
    const int n = grid_h * grid_w;
    if (w < 1 || n % w != 0) throw ConfigError("chunking: window size must divide the cell count");
    if (w == n) {
        t.tile_h = grid_h;
        t.tile_w = grid_w;
        return t;
    }
    const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(w))));
    if (root * root == w && grid_h % root == 0 && grid_w % root == 0) {
        t.tile_h = root;
        t.tile_w = root;
        return t;
    }
    if (grid_w % w == 0) {
        t.tile_h = 1;
        t.tile_w = w;
        return t;
    }
    throw ConfigError("chunking: window does not tile the grid as contiguous rectangles");
}

std::vector<double> cosine_alpha_bar(int steps) {
    const double s = 0.008;
    auto f = [&](double t) {
        const double x = (t / steps + s) / (1.0 + s) * 1.5707963267948966;
        const double c = std::cos(x);
        return c * c;
    };
    const double f0 = f(0.0);
    std::vector<double> ab(static_cast<size_t>(steps) + 1);
    ab[0] = 1.0;
    for (int t = 1; t <= steps; ++t) {
        ab[static_cast<size_t>(t)] = std::clamp(f(static_cast<double>(t)) / f0, 1e-5, 1.0);
    }
    return ab;
}

GridModel::GridModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.head_kind == HeadKind::kChunk) {
        tiling_ = ChunkTiling::make(cfg_.grid_h, cfg_.grid_w, cfg_.chunk_w);
    } else {
        tiling_ = ChunkTiling::make(cfg_.grid_h, cfg_.grid_w, cfg_.cells());
    }

    Rng rng(seed);
    const int n = cfg_.cells();
    const double init_std = 0.02;

    if (cfg_.law == OutputLaw::kCategorical) {
        Tensor tok(cfg_.vocab, cfg_.hidden);
        init_normal(tok, rng, init_std);
        token_table_ = store_.add("embed.token", std::move(tok));
    } else {
        latent_proj_ = LinearP::create(store_, "embed.latent", cfg_.hidden, cfg_.latent_m, rng);
    }
    {
        Tensor pos(n, cfg_.hidden);
        init_normal(pos, rng, init_std);
        pos_table_ = store_.add("embed.pos", std::move(pos));
        Tensor start(std::max(1, cfg_.class_count), cfg_.hidden);
        init_normal(start, rng, init_std);
        start_table_ = store_.add("embed.start", std::move(start));
    }
    for (int i = 0; i < cfg_.depth; ++i) {
        blocks_.push_back(BlockP::create(store_, "backbone.b" + std::to_string(i), cfg_.hidden,
                                         cfg_.ffn, cfg_.heads, false, rng));
    }
    ln_f_ = LayerNormP::create(store_, "backbone.lnf", cfg_.hidden);

    if (cfg_.head_kind == HeadKind::kGlobal) {
        Tensor mt(n, cfg_.hidden);
        init_normal(mt, rng, init_std);
        mask_table_ = store_.add("head.mask", std::move(mt));
        for (int i = 0; i < cfg_.head_depth; ++i) {
            head_blocks_.push_back(BlockP::create(store_, "head.b" + std::to_string(i), cfg_.hidden,
                                                  cfg_.ffn, cfg_.heads, false, rng));
        }
        head_ln_f_ = LayerNormP::create(store_, "head.lnf", cfg_.hidden);
    } else if (cfg_.head_kind == HeadKind::kChunk) {
        Tensor qt(cfg_.chunk_w, cfg_.hidden);
        init_normal(qt, rng, init_std);
        mask_table_ = store_.add("head.query", std::move(qt));
        for (int i = 0; i < cfg_.head_depth; ++i) {
            head_blocks_.push_back(BlockP::create(store_, "head.b" + std::to_string(i), cfg_.hidden,
                                                  cfg_.ffn, cfg_.heads, true, rng));
        }
        head_ln_f_ = LayerNormP::create(store_, "head.lnf", cfg_.hidden);
    }

    if (cfg_.law == OutputLaw::kCategorical) {
        out_proj_ = LinearP::create(store_, "out", cfg_.vocab, cfg_.hidden, rng);
    } else {
        const int w = cfg_.diffusion.width;
        cond_proj_ = LinearP::create(store_, "diff.cond", w, cfg_.hidden, rng);
        Tensor tt(cfg_.diffusion.steps, w);
        init_normal(tt, rng, init_std);
        time_table_ = store_.add("diff.time", std::move(tt));
        in_proj_ = LinearP::create(store_, "diff.in", w, cfg_.latent_m, rng);
        for (int i = 0; i < cfg_.diffusion.blocks; ++i) {
            const std::string base = "diff.b" + std::to_string(i);
            DenoiserBlock b;
            b.scale = LinearP::create(store_, base + ".scale", w, w, rng);
            b.shift = LinearP::create(store_, base + ".shift", w, w, rng);
            b.fc1 = LinearP::create(store_, base + ".fc1", w, w, rng);
            b.fc2 = LinearP::create(store_, base + ".fc2", w, w, rng);
            dblocks_.push_back(b);
        }
        final_scale_ = LinearP::create(store_, "diff.final.scale", w, w, rng);
        final_shift_ = LinearP::create(store_, "diff.final.shift", w, w, rng);
        eps_proj_ = LinearP::create(store_, "diff.out", cfg_.latent_m, w, rng);
        alpha_bar_ = cosine_alpha_bar(cfg_.diffusion.steps);
    }
}

// ---- embeddings ----

namespace {

void check_cells(const std::vector<int32_t>& cells, int n, const char* who) {
    for (int32_t c : cells) {
        if (c < 0 || c >= n) throw ConfigError(std::string(who) + ": cell index out of range");
    }
}

} // namespace

int GridModel::embed_rows_own(Tape& t, const RevealSeq& seq) const {
    check_cells(seq.cells, cfg_.cells(), "embed");
    if (seq.class_id < 0 || seq.class_id >= std::max(1, cfg_.class_count)) {
        throw ConfigError("embed: class id out of range");
    }
    const int start = t.gather_rows(start_table_, {seq.class_id});
    if (seq.len() == 0) return start;
    int tok;
    if (cfg_.law == OutputLaw::kCategorical) {
        for (int32_t id : seq.ids) {
            if (id < 0 || id >= cfg_.vocab) throw ConfigError("embed: token id outside vocabulary");
        }
        tok = t.gather_rows(token_table_, seq.ids);
    } else {
        tok = latent_proj_.apply(t, t.leaf(seq.latents));
    }
    const int pos = t.gather_rows(pos_table_, seq.cells);
    return t.concat_rows(start, t.add(tok, pos));
}

int GridModel::embed_rows_shifted(Tape& t, const RevealSeq& seq,
                                  const std::vector<int32_t>& target_cells) const {
    check_cells(seq.cells, cfg_.cells(), "embed");
    check_cells(target_cells, cfg_.cells(), "embed(shifted)");
    if (static_cast<int>(target_cells.size()) != seq.len() + 1) {
        throw ConfigError("embed(shifted): need one target position per row");
    }
    const int start = t.add(t.gather_rows(start_table_, {seq.class_id}),
                            t.gather_rows(pos_table_, {target_cells[0]}));
    if (seq.len() == 0) return start;
    int tok;
    if (cfg_.law == OutputLaw::kCategorical) {
        tok = t.gather_rows(token_table_, seq.ids);
    } else {
        tok = latent_proj_.apply(t, t.leaf(seq.latents));
    }
    const std::vector<int32_t> next(target_cells.begin() + 1, target_cells.end());
    const int pos = t.gather_rows(pos_table_, next);
    return t.concat_rows(start, t.add(tok, pos));
}

// ---- backbone ----

int GridModel::backbone(Tape& t, int input_rows, std::vector<int>* attn_nodes) const {
    const int rows = t.val(input_rows).rows;
    if (rows > cfg_.cells() + 1) throw ConfigError("backbone: sequence longer than the grid");
    const auto mask = causal_mask(rows);
    int x = input_rows;
    for (const BlockP& b : blocks_) {
        int at = -1;
        x = b.apply(t, x, mask, -1, &at);
        if (attn_nodes != nullptr) attn_nodes->push_back(at);
    }
    return ln_f_.apply(t, x);
}

DecodeCache GridModel::new_cache() const {
    DecodeCache c;
    c.k.assign(static_cast<size_t>(cfg_.depth), Tensor(0, cfg_.hidden));
    c.v.assign(static_cast<size_t>(cfg_.depth), Tensor(0, cfg_.hidden));
    c.hidden_final = Tensor(0, cfg_.hidden);
    return c;
}

std::vector<double> GridModel::embed_start_row(int class_id) const {
    if (class_id < 0 || class_id >= std::max(1, cfg_.class_count)) {
        throw ConfigError("embed: class id out of range");
    }
    const Tensor& st = store_.value(start_table_);
    return std::vector<double>(st.row(class_id), st.row(class_id) + st.cols);
}

std::vector<double> GridModel::embed_token_row_own(int32_t id, const double* latent,
                                                   int cell) const {
    if (cell < 0 || cell >= cfg_.cells()) throw ConfigError("embed: cell index out of range");
    std::vector<double> row(static_cast<size_t>(cfg_.hidden), 0.0);
    if (cfg_.law == OutputLaw::kCategorical) {
        if (id < 0 || id >= cfg_.vocab) throw ConfigError("embed: token id outside vocabulary");
        const Tensor& tok = store_.value(token_table_);
        std::copy(tok.row(id), tok.row(id) + tok.cols, row.begin());
    } else {
        // affine map of the latent vector
        Tape t(&store_);
        Tensor z(1, cfg_.latent_m);
        std::copy(latent, latent + cfg_.latent_m, z.data.begin());
        const int y = latent_proj_.apply(t, t.leaf(std::move(z)));
        std::copy(t.val(y).data.begin(), t.val(y).data.end(), row.begin());
    }
    const Tensor& pos = store_.value(pos_table_);
    for (int i = 0; i < cfg_.hidden; ++i) row[static_cast<size_t>(i)] += pos.at(cell, i);
    return row;
}

std::vector<double> GridModel::cache_step(DecodeCache& cache,
                                          const std::vector<double>& input_row) const {
    if (cache.len >= cfg_.cells() + 1) throw StateError("decode cache is full");
    if (static_cast<int>(input_row.size()) != cfg_.hidden) {
        throw ConfigError("cache_step: bad input width");
    }
    Tape t(&store_);
    Tensor in(1, cfg_.hidden);
    std::copy(input_row.begin(), input_row.end(), in.data.begin());
    int x = t.leaf(std::move(in));
    const auto attend_all = full_mask(1, cache.len + 1);
    for (int l = 0; l < cfg_.depth; ++l) {
        const BlockP& b = blocks_[static_cast<size_t>(l)];
        const int xn = b.ln1.apply(t, x);
        const int q = b.wq.apply(t, xn);
        const int kn = b.wk.apply(t, xn);
        const int vn = b.wv.apply(t, xn);
        int kfull = kn, vfull = vn;
        if (cache.len > 0) {
            kfull = t.concat_rows(t.leaf(cache.k[static_cast<size_t>(l)]), kn);
            vfull = t.concat_rows(t.leaf(cache.v[static_cast<size_t>(l)]), vn);
        }
        const int at = t.mha(q, kfull, vfull, attend_all, cfg_.heads);
        x = t.add(x, b.wo.apply(t, at));
        const int h = b.fc2.apply(t, t.gelu(b.fc1.apply(t, b.ln2.apply(t, x))));
        x = t.add(x, h);

        Tensor& kc = cache.k[static_cast<size_t>(l)];
        Tensor& vc = cache.v[static_cast<size_t>(l)];
        kc.data.insert(kc.data.end(), t.val(kn).data.begin(), t.val(kn).data.end());
        kc.rows += 1;
        vc.data.insert(vc.data.end(), t.val(vn).data.begin(), t.val(vn).data.end());
        vc.rows += 1;
    }
    const int hf = ln_f_.apply(t, x);
    const Tensor& out = t.val(hf);
    cache.hidden_final.data.insert(cache.hidden_final.data.end(), out.data.begin(), out.data.end());
    cache.hidden_final.rows += 1;
    cache.len += 1;
    return out.data;
}

// ---- prediction heads ----

int GridModel::global_head_payload(Tape& t, int hidden_prefix,
                                   const std::vector<int32_t>& prefix_cells,
                                   const std::vector<int32_t>& masked_cells) const {
    if (cfg_.head_kind != HeadKind::kGlobal) throw ConfigError("model has no global head");
    if (masked_cells.empty()) throw ConfigError("global head: no masked cells");
    check_cells(masked_cells, cfg_.cells(), "global head");
    for (int32_t m : masked_cells) {
        for (int32_t p : prefix_cells) {
            if (m == p) throw ConfigError("global head: masked cell overlaps the visible prefix");
        }
    }
    // canonical slot order inside the computation, so permuting the request
    // permutes payload rows bit-exactly
    std::vector<int32_t> sorted = masked_cells;
    std::sort(sorted.begin(), sorted.end());
    const int slots = t.add(t.gather_rows(mask_table_, sorted),
                            t.gather_rows(pos_table_, sorted));
    const int prefix_rows = t.val(hidden_prefix).rows;
    int x = prefix_rows > 0 ? t.concat_rows(hidden_prefix, slots) : slots;
    const auto mask = full_mask(t.val(x).rows, t.val(x).rows);
    for (const BlockP& b : head_blocks_) x = b.apply(t, x, mask);
    x = head_ln_f_.apply(t, x);
    const int payload = t.slice_rows(x, prefix_rows, static_cast<int>(sorted.size()));
    if (sorted == masked_cells) return payload;
    std::vector<int32_t> order(masked_cells.size());
    for (size_t i = 0; i < masked_cells.size(); ++i) {
        order[i] = static_cast<int32_t>(
            std::lower_bound(sorted.begin(), sorted.end(), masked_cells[i]) - sorted.begin());
    }
    return t.permute_rows(payload, std::move(order));
}

int GridModel::chunk_head_payload(Tape& t, int hidden_prefix, int chunk_id,
                                  const std::vector<int32_t>& masked_cells) const {
    if (cfg_.head_kind != HeadKind::kChunk) throw ConfigError("model has no chunk head");
    if (t.val(hidden_prefix).rows < 1) {
        throw ConfigError("chunk head: cross-attention needs a non-empty prefix");
    }
    if (masked_cells.empty()) throw ConfigError("chunk head: no masked cells");
    check_cells(masked_cells, cfg_.cells(), "chunk head");
    for (int32_t c : masked_cells) {
        if (tiling_.chunk_of(c) != chunk_id) {
            throw ConfigError("chunk head: cell outside the target chunk");
        }
    }
    std::vector<int32_t> sorted = masked_cells;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int32_t> offsets;
    offsets.reserve(sorted.size());
    for (int32_t c : sorted) offsets.push_back(tiling_.offset_in_chunk(c));
    int x = t.add(t.gather_rows(mask_table_, offsets), t.gather_rows(pos_table_, sorted));
    const auto self_mask = full_mask(t.val(x).rows, t.val(x).rows);
    for (const BlockP& b : head_blocks_) x = b.apply(t, x, self_mask, hidden_prefix);
    const int payload = head_ln_f_.apply(t, x);
    if (sorted == masked_cells) return payload;
    std::vector<int32_t> order(masked_cells.size());
    for (size_t i = 0; i < masked_cells.size(); ++i) {
        order[i] = static_cast<int32_t>(
            std::lower_bound(sorted.begin(), sorted.end(), masked_cells[i]) - sorted.begin());
    }
    return t.permute_rows(payload, std::move(order));
}

int GridModel::logits_from_payload(Tape& t, int payload) const {
    if (cfg_.law != OutputLaw::kCategorical) throw ConfigError("categorical head on diffusion model");
    return out_proj_.apply(t, payload);
}

// ---- diffusion law ----

int GridModel::denoiser_eps(Tape& t, int x_row, int timestep, int z_row) const {
    if (cfg_.law != OutputLaw::kDiffusion) throw ConfigError("diffusion head on categorical model");
    if (timestep < 1 || timestep > cfg_.diffusion.steps) throw ConfigError("denoiser: bad timestep");
    const int c = t.add(cond_proj_.apply(t, z_row), t.gather_rows(time_table_, {timestep - 1}));
    const int cg = t.gelu(c);
    int x = in_proj_.apply(t, x_row);
    for (const DenoiserBlock& b : dblocks_) {
        const int s = b.scale.apply(t, cg);
        const int sh = b.shift.apply(t, cg);
        int h = t.add(t.mul(t.layer_norm(x), t.add_const(s, 1.0)), sh);
        h = b.fc2.apply(t, t.gelu(b.fc1.apply(t, h)));
        x = t.add(x, h);
    }
    const int s = final_scale_.apply(t, cg);
    const int sh = final_shift_.apply(t, cg);
    const int h = t.add(t.mul(t.layer_norm(x), t.add_const(s, 1.0)), sh);
    return eps_proj_.apply(t, h);
}

int GridModel::diffusion_loss_node(Tape& t, int z_row, const double* x0, Rng& rng) const {
    if (!t.val(z_row).all_finite()) throw NumericError("diffusion loss: non-finite conditioning");
    const int T = cfg_.diffusion.steps;
    const int ts = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(T)));
    const double ab = alpha_bar_[static_cast<size_t>(ts)];
    const double sa = std::sqrt(ab);
    const double sn = std::sqrt(1.0 - ab);
    Tensor eps(1, cfg_.latent_m);
    Tensor xt(1, cfg_.latent_m);
    for (int i = 0; i < cfg_.latent_m; ++i) {
        eps.data[static_cast<size_t>(i)] = rng.gaussian();
        xt.data[static_cast<size_t>(i)] = sa * x0[i] + sn * eps.data[static_cast<size_t>(i)];
    }
    const int eps_hat = denoiser_eps(t, t.leaf(std::move(xt)), ts, z_row);
    return t.sq_err_sum(eps_hat, std::move(eps));
}

std::vector<double> GridModel::diffusion_sample(const std::vector<double>& z, Rng& rng,
                                                int sample_steps) const {
    if (cfg_.law != OutputLaw::kDiffusion) throw ConfigError("diffusion sample on categorical model");
    const int T = cfg_.diffusion.steps;
    const int s = std::clamp(sample_steps <= 0 ? T : sample_steps, 1, T);
    std::vector<int> ladder; // descending timesteps, 1..T
    for (int j = s; j >= 1; --j) {
        const int ts = std::max(1, static_cast<int>(std::lround(static_cast<double>(j) * T / s)));
        if (ladder.empty() || ladder.back() != ts) ladder.push_back(ts);
    }

    const int m = cfg_.latent_m;
    std::vector<double> x(static_cast<size_t>(m));
    for (double& v : x) v = rng.gaussian();

    Tape t(&store_);
    Tensor zrow(1, cfg_.hidden);
    std::copy(z.begin(), z.end(), zrow.data.begin());

    for (size_t i = 0; i < ladder.size(); ++i) {
        const int tc = ladder[i];
        const int tp = i + 1 < ladder.size() ? ladder[i + 1] : 0;
        const double ab_c = alpha_bar_[static_cast<size_t>(tc)];
        const double ab_p = tp == 0 ? 1.0 : alpha_bar_[static_cast<size_t>(tp)];
        const double alpha = ab_c / ab_p;
        const double beta = 1.0 - alpha;

        t.reset();
        Tensor xt(1, m);
        std::copy(x.begin(), x.end(), xt.data.begin());
        const int eps_node = denoiser_eps(t, t.leaf(std::move(xt)), tc, t.leaf(zrow));
        const Tensor& eps_hat = t.val(eps_node);

        const double inv_sa = 1.0 / std::sqrt(ab_c);
        const double sn = std::sqrt(1.0 - ab_c);
        const double var = tp == 0 ? 0.0 : beta * (1.0 - ab_p) / (1.0 - ab_c);
        const double sd = std::sqrt(std::max(0.0, var));
        for (int j = 0; j < m; ++j) {
            const double x0_hat = (x[static_cast<size_t>(j)] - sn * eps_hat.data[static_cast<size_t>(j)]) * inv_sa;
            const double mean = (std::sqrt(ab_p) * beta * x0_hat +
                                 std::sqrt(alpha) * (1.0 - ab_p) * x[static_cast<size_t>(j)]) /
                                (1.0 - ab_c);
            x[static_cast<size_t>(j)] = tp == 0 ? mean : mean + sd * rng.gaussian();
        }
        if (tp == 0) break;
    }
    return x;
}

} // namespace gridlm

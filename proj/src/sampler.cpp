#include "gridlm/sampler.hpp"

#include <algorithm>
#include <sstream>

namespace gridlm {

PositionPolicy position_policy_from_string(const std::string& s) {
    if (s == "uniform") return PositionPolicy::kUniform;
    if (s == "raster") return PositionPolicy::kRaster;
    throw ConfigError("unknown position policy: " + s);
}

std::string to_string(PositionPolicy p) {
    return p == PositionPolicy::kUniform ? "uniform" : "raster";
}

int32_t choose_position(const std::vector<int32_t>& remaining, PositionPolicy policy, Rng& rng) {
    if (remaining.empty()) throw StateError("choose_position: no cells remain");
    if (policy == PositionPolicy::kRaster) {
        return *std::min_element(remaining.begin(), remaining.end());
    }
    return remaining[static_cast<size_t>(rng.below(remaining.size()))];
}

int32_t sample_categorical(const std::vector<double>& logits, double temperature, int top_k,
                           Rng& rng) {
    const int v = static_cast<int>(logits.size());
    if (v < 1) throw ConfigError("sample: empty logits");
    if (temperature < 1e-6) {
        int32_t best = 0;
        for (int i = 1; i < v; ++i) {
            if (logits[static_cast<size_t>(i)] > logits[static_cast<size_t>(best)]) best = i;
        }
        return best;
    }
    std::vector<int32_t> keep(static_cast<size_t>(v));
    for (int i = 0; i < v; ++i) keep[static_cast<size_t>(i)] = i;
    if (top_k > 0 && top_k < v) {
        std::stable_sort(keep.begin(), keep.end(), [&](int32_t a, int32_t b) {
            return logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(b)];
        });
        keep.resize(static_cast<size_t>(top_k));
        std::sort(keep.begin(), keep.end());
    }
    double mx = logits[static_cast<size_t>(keep[0])];
    for (int32_t i : keep) mx = std::max(mx, logits[static_cast<size_t>(i)]);
    std::vector<double> p(keep.size());
    double sum = 0.0;
    for (size_t i = 0; i < keep.size(); ++i) {
        p[i] = std::exp((logits[static_cast<size_t>(keep[i])] - mx) / temperature);
        sum += p[i];
    }
    const double r = rng.uniform01() * sum;
    double acc = 0.0;
    for (size_t i = 0; i < keep.size(); ++i) {
        acc += p[i];
        if (r < acc) return keep[i];
    }
    return keep.back();
}

namespace {

struct Reveals {
    std::vector<int32_t> cells;
    std::vector<int32_t> ids;
    Tensor latents;
};

/// Head payload for one step with every remaining cell masked; returns the
/// payload row for `cell` (categorical logits or the conditioning vector z).
std::vector<double> predict_payload_at(const GridModel& model, const Tensor& hidden_prefix,
                                       const std::vector<int32_t>& prefix_cells,
                                       const std::vector<int32_t>& remaining, int32_t cell) {
    const ModelConfig& cfg = model.config();
    Tape tape(&model.params());
    const int prefix = tape.leaf(hidden_prefix);
    std::vector<int32_t> masked;
    if (cfg.head_kind == HeadKind::kGlobal) {
        masked = remaining;
    } else {
        const int chunk = model.tiling().chunk_of(cell);
        for (int32_t c : remaining) {
            if (model.tiling().chunk_of(c) == chunk) masked.push_back(c);
        }
    }
    std::sort(masked.begin(), masked.end());
    int payload;
    if (cfg.head_kind == HeadKind::kGlobal) {
        payload = model.global_head_payload(tape, prefix, prefix_cells, masked);
    } else {
        payload = model.chunk_head_payload(tape, prefix, model.tiling().chunk_of(cell), masked);
    }
    int row = -1;
    for (size_t i = 0; i < masked.size(); ++i) {
        if (masked[i] == cell) row = static_cast<int>(i);
    }
    if (row < 0) throw StateError("sample: cell already revealed");
    const int out = cfg.law == OutputLaw::kCategorical
                        ? model.logits_from_payload(tape, tape.slice_rows(payload, row, 1))
                        : tape.slice_rows(payload, row, 1);
    if (!tape.val(out).all_finite()) throw NumericError("sample: non-finite head payload");
    return tape.val(out).data;
}

} // namespace

TokenGrid generate_grid(const GridModel& model, int class_id, const SamplingConfig& cfg,
                        uint64_t seed, const StepObserver& observer, bool use_cache) {
    cfg.validate();
    const ModelConfig& mc = model.config();
    const int n = mc.cells();
    Rng root(seed);
    Rng pos_rng = root.split(0);
    Rng tok_rng = root.split(1);

    TokenGrid grid;
    grid.height = mc.grid_h;
    grid.width = mc.grid_w;
    if (mc.law == OutputLaw::kCategorical) {
        grid.kind = GridKind::kDiscrete;
        grid.ids.assign(static_cast<size_t>(n), -1);
    } else {
        grid.kind = GridKind::kContinuous;
        grid.latents.resize_to(n, mc.latent_m);
    }

    std::vector<int32_t> remaining(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) remaining[static_cast<size_t>(i)] = i;
    Reveals rev;
    rev.latents.resize_to(0, mc.latent_m);

    DecodeCache cache = model.new_cache();
    Tensor hidden_prefix; // only used on the no-cache path
    if (use_cache) {
        model.cache_step(cache, model.embed_start_row(class_id));
    }

    for (int step = 0; step < n; ++step) {
        if (!use_cache) {
            // reference path: full causal pass over the current prefix
            Tape tape(&model.params());
            RevealSeq seq;
            seq.class_id = class_id;
            seq.cells = rev.cells;
            seq.ids = rev.ids;
            seq.latents = rev.latents;
            const int h = model.backbone(tape, model.embed_rows_own(tape, seq));
            hidden_prefix = tape.val(h);
        }
        const Tensor& prefix = use_cache ? cache.hidden_final : hidden_prefix;

        const int32_t cell = choose_position(remaining, cfg.policy, pos_rng);
        const std::vector<double> payload =
            predict_payload_at(model, prefix, rev.cells, remaining, cell);

        std::vector<double> observed;
        if (mc.law == OutputLaw::kCategorical) {
            const int32_t id = sample_categorical(payload, cfg.temperature, cfg.top_k, tok_rng);
            grid.ids[static_cast<size_t>(cell)] = id;
            rev.ids.push_back(id);
            if (observer) {
                observed.resize(payload.size());
                kernels::softmax_row(payload.data(), observed.data(), static_cast<int>(payload.size()));
            }
            if (use_cache) {
                model.cache_step(cache, model.embed_token_row_own(id, nullptr, cell));
            }
        } else {
            const std::vector<double> latent =
                model.diffusion_sample(payload, tok_rng, cfg.diffusion_steps);
            std::copy(latent.begin(), latent.end(), grid.latents.row(cell));
            rev.latents.data.insert(rev.latents.data.end(), latent.begin(), latent.end());
            rev.latents.rows += 1;
            observed = latent;
            if (use_cache) {
                model.cache_step(cache, model.embed_token_row_own(-1, latent.data(), cell));
            }
        }
        rev.cells.push_back(cell);
        remaining.erase(std::find(remaining.begin(), remaining.end(), cell));
        if (observer) observer(step, cell, observed);
    }
    return grid;
}

std::string dump_token_grid(const TokenGrid& grid) {
    std::ostringstream out;
    out.precision(17);
    out << grid.height << " " << grid.width << " "
        << (grid.kind == GridKind::kDiscrete ? "discrete" : "continuous") << "\n";
    if (grid.kind == GridKind::kDiscrete) {
        for (int r = 0; r < grid.height; ++r) {
            for (int c = 0; c < grid.width; ++c) {
                if (c > 0) out << " ";
                out << grid.ids[static_cast<size_t>(r * grid.width + c)];
            }
            out << "\n";
        }
    } else {
        for (int i = 0; i < grid.cells(); ++i) {
            for (int j = 0; j < grid.latents.cols; ++j) {
                if (j > 0) out << " ";
                out << grid.latents.at(i, j);
            }
            out << "\n";
        }
    }
    return out.str();
}

TokenGrid parse_token_grid(const std::string& text) {
    std::istringstream in(text);
    TokenGrid grid;
    std::string kind;
    if (!(in >> grid.height >> grid.width >> kind)) throw ConfigError("grid dump: bad header");
    const int n = grid.cells();
    if (kind == "discrete") {
        grid.kind = GridKind::kDiscrete;
        grid.ids.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            if (!(in >> grid.ids[static_cast<size_t>(i)])) throw ConfigError("grid dump: truncated ids");
        }
    } else if (kind == "continuous") {
        grid.kind = GridKind::kContinuous;
        std::vector<double> values;
        double v;
        while (in >> v) values.push_back(v);
        if (values.empty() || values.size() % static_cast<size_t>(n) != 0) {
            throw ConfigError("grid dump: latent payload does not tile the grid");
        }
        const int m = static_cast<int>(values.size() / static_cast<size_t>(n));
        grid.latents.resize_to(n, m);
        grid.latents.data = values;
    } else {
        throw ConfigError("grid dump: unknown kind " + kind);
    }
    return grid;
}

} // namespace gridlm

#include "gridlm/objective.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

namespace gridlm {

std::string to_string(ObjectiveTag tag) {
    switch (tag) {
        case ObjectiveTag::k2d: return "2d";
        case ObjectiveTag::k1dRaster: return "1d_raster";
        case ObjectiveTag::k1dRandom: return "1d_random";
    }
    return "?";
}

ObjectiveTag objective_from_string(const std::string& s) {
    if (s == "2d") return ObjectiveTag::k2d;
    if (s == "1d_raster") return ObjectiveTag::k1dRaster;
    if (s == "1d_random") return ObjectiveTag::k1dRandom;
    throw ConfigError("unknown objective tag: " + s);
}

OrderPlan make_order_plan(ObjectiveTag tag, int n_cells, int window, int density, Rng& rng) {
    if (n_cells < 2) throw ConfigError("order plan: need at least 2 cells");
    if (window == 0) window = n_cells;
    OrderPlan plan;
    plan.tag = tag;
    plan.window = window;
    plan.perm.resize(static_cast<size_t>(n_cells));
    for (int i = 0; i < n_cells; ++i) plan.perm[static_cast<size_t>(i)] = i;
    if (tag != ObjectiveTag::k1dRaster) rng.shuffle(plan.perm);

    if (tag == ObjectiveTag::k2d) {
        if (density < 1 || density > n_cells - 1) {
            throw ConfigError("order plan: supervision density outside [1, N-1]");
        }
        const std::vector<int> draw = rng.sample_without_replacement(n_cells - 1, density);
        plan.supervised.reserve(static_cast<size_t>(density));
        for (int d : draw) plan.supervised.push_back(d + 1);
        std::sort(plan.supervised.begin(), plan.supervised.end());
    } else {
        // 1d baselines take a single next-token loss at every step
        plan.supervised.resize(static_cast<size_t>(n_cells - 1));
        for (int i = 1; i < n_cells; ++i) plan.supervised[static_cast<size_t>(i - 1)] = i;
    }
    return plan;
}

namespace {

RevealSeq prefix_seq(const TokenGrid& grid, const OrderPlan& plan, int class_id, int len) {
    RevealSeq seq;
    seq.class_id = class_id;
    seq.cells.assign(plan.perm.begin(), plan.perm.begin() + len);
    if (grid.kind == GridKind::kDiscrete) {
        seq.ids.reserve(static_cast<size_t>(len));
        for (int i = 0; i < len; ++i) seq.ids.push_back(grid.ids[static_cast<size_t>(plan.perm[static_cast<size_t>(i)])]);
    } else {
        seq.latents.resize_to(len, grid.latents.cols);
        for (int i = 0; i < len; ++i) {
            const int cell = plan.perm[static_cast<size_t>(i)];
            std::copy(grid.latents.row(cell), grid.latents.row(cell) + grid.latents.cols,
                      seq.latents.row(i));
        }
    }
    return seq;
}

LossGraph build_loss_2d(const GridModel& model, Tape& tape, const TokenGrid& grid, int class_id,
                        const OrderPlan& plan, Rng& rng) {
    const ModelConfig& cfg = model.config();
    const int n = cfg.cells();
    const bool full_window = plan.window >= n;
    const int t_max = plan.supervised.back();

    const RevealSeq seq = prefix_seq(grid, plan, class_id, t_max);
    const int hidden = model.backbone(tape, model.embed_rows_own(tape, seq));

    // position of each cell in the reveal order
    std::vector<int> when(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) when[static_cast<size_t>(plan.perm[static_cast<size_t>(i)])] = i;

    LossGraph out;
    out.breakdown.tag = plan.tag;
    int total_node = -1;

    for (const int t : plan.supervised) {
        std::vector<int32_t> targets;
        if (full_window) {
            targets.assign(plan.perm.begin() + t, plan.perm.end());
        } else {
            // not-yet-revealed cells of the chunk containing the next token
            const int chunk = model.tiling().chunk_of(plan.perm[static_cast<size_t>(t)]);
            for (int32_t c : model.tiling().cells_of_chunk(chunk)) {
                if (when[static_cast<size_t>(c)] >= t) targets.push_back(c);
            }
        }
        if (targets.empty()) throw StateError("2d loss: empty target set");
        std::sort(targets.begin(), targets.end());

        const int prefix = tape.slice_rows(hidden, 0, t + 1);
        const std::vector<int32_t> prefix_cells(plan.perm.begin(), plan.perm.begin() + t);
        int payload;
        if (cfg.head_kind == HeadKind::kGlobal) {
            payload = model.global_head_payload(tape, prefix, prefix_cells, targets);
        } else {
            const int chunk = model.tiling().chunk_of(plan.perm[static_cast<size_t>(t)]);
            payload = model.chunk_head_payload(tape, prefix, chunk, targets);
        }

        LossTerm term;
        term.t = t;
        term.target_count = static_cast<int>(targets.size());
        if (cfg.law == OutputLaw::kCategorical) {
            std::vector<int32_t> yv;
            yv.reserve(targets.size());
            for (int32_t c : targets) yv.push_back(grid.ids[static_cast<size_t>(c)]);
            const int ce = tape.ce_logits(model.logits_from_payload(tape, payload), yv);
            const Tensor& vals = tape.val(ce);
            for (int i = 0; i < vals.rows; ++i) {
                out.breakdown.per_position.push_back(vals.at(i, 0));
                term.sum_loss += vals.at(i, 0);
            }
            const int se = tape.sum(ce);
            total_node = total_node < 0 ? se : tape.add(total_node, se);
        } else {
            for (size_t i = 0; i < targets.size(); ++i) {
                const int z = tape.slice_rows(payload, static_cast<int>(i), 1);
                const int ln = model.diffusion_loss_node(tape, z, grid.latents.row(targets[i]), rng);
                out.breakdown.per_position.push_back(tape.val(ln).data[0]);
                term.sum_loss += tape.val(ln).data[0];
                total_node = total_node < 0 ? ln : tape.add(total_node, ln);
            }
        }
        out.breakdown.target_total += term.target_count;
        out.breakdown.terms.push_back(term);
    }

    out.loss_node = tape.scale(total_node, 1.0 / out.breakdown.target_total);
    out.breakdown.total = tape.val(out.loss_node).data[0];
    return out;
}

LossGraph build_loss_1d(const GridModel& model, Tape& tape, const TokenGrid& grid, int class_id,
                        const OrderPlan& plan, Rng& rng) {
    const ModelConfig& cfg = model.config();
    const int n = cfg.cells();

    // rows: [start + pos(perm[0])] + [token(perm[i-1]) + pos(perm[i])], i = 1..N-1
    const RevealSeq seq = prefix_seq(grid, plan, class_id, n - 1);
    const std::vector<int32_t> target_cells(plan.perm.begin(), plan.perm.end());
    const int hidden = model.backbone(tape, model.embed_rows_shifted(tape, seq, target_cells));

    LossGraph out;
    out.breakdown.tag = plan.tag;
    int total_node = -1;

    // single next-token loss at steps 1..N-1 (the start row is unsupervised)
    const int rows = tape.slice_rows(hidden, 1, n - 1);
    if (cfg.law == OutputLaw::kCategorical) {
        std::vector<int32_t> yv;
        yv.reserve(static_cast<size_t>(n - 1));
        for (int t = 1; t < n; ++t) yv.push_back(grid.ids[static_cast<size_t>(plan.perm[static_cast<size_t>(t)])]);
        const int ce = tape.ce_logits(model.logits_from_payload(tape, rows), yv);
        const Tensor& vals = tape.val(ce);
        for (int t = 1; t < n; ++t) {
            LossTerm term;
            term.t = t;
            term.target_count = 1;
            term.sum_loss = vals.at(t - 1, 0);
            out.breakdown.per_position.push_back(term.sum_loss);
            out.breakdown.terms.push_back(term);
        }
        total_node = tape.sum(ce);
    } else {
        for (int t = 1; t < n; ++t) {
            const int z = tape.slice_rows(rows, t - 1, 1);
            const int cell = plan.perm[static_cast<size_t>(t)];
            const int ln = model.diffusion_loss_node(tape, z, grid.latents.row(cell), rng);
            LossTerm term;
            term.t = t;
            term.target_count = 1;
            term.sum_loss = tape.val(ln).data[0];
            out.breakdown.per_position.push_back(term.sum_loss);
            out.breakdown.terms.push_back(term);
            total_node = total_node < 0 ? ln : tape.add(total_node, ln);
        }
    }
    out.breakdown.target_total = n - 1;
    out.loss_node = tape.scale(total_node, 1.0 / (n - 1));
    out.breakdown.total = tape.val(out.loss_node).data[0];
    return out;
}

} // namespace

LossGraph build_loss(const GridModel& model, Tape& tape, const TokenGrid& grid, int class_id,
                     const OrderPlan& plan, Rng& rng) {
    if (grid.cells() != model.config().cells()) throw ConfigError("loss: grid size mismatch");
    const bool discrete_grid = grid.kind == GridKind::kDiscrete;
    const bool categorical = model.config().law == OutputLaw::kCategorical;
    if (discrete_grid != categorical) {
        throw ConfigError("loss: output law does not match the token grid kind");
    }
    if (plan.tag == ObjectiveTag::k2d) return build_loss_2d(model, tape, grid, class_id, plan, rng);
    return build_loss_1d(model, tape, grid, class_id, plan, rng);
}

int resolve_thread_count() {
    const char* env = std::getenv("GRIDLM_THREADS");
    if (env != nullptr) {
        const int v = std::atoi(env);
        if (v >= 1) {
            const int hw = static_cast<int>(std::thread::hardware_concurrency());
            return hw > 0 ? std::min(v, hw) : v;
        }
    }
    return 1;
}

TrainContext::TrainContext(const ParamStore* store, const TrainOptions& options)
    : options_(options) {
    const int slices = std::max(1, options.reduction_slices);
    for (int s = 0; s < slices; ++s) {
        tapes_.push_back(std::make_unique<Tape>(store));
        sinks_.emplace_back(static_cast<size_t>(store->count()));
    }
}

StepMetrics training_step(GridModel& model, std::span<const Example> batch,
                          const ObjectiveConfig& objective, AdamW& opt, Rng& step_rng,
                          const TrainOptions& options) {
    TrainContext ctx(&model.params(), options);
    return training_step(model, batch, objective, opt, step_rng, ctx);
}

StepMetrics training_step(GridModel& model, std::span<const Example> batch,
                          const ObjectiveConfig& objective, AdamW& opt, Rng& step_rng,
                          TrainContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainOptions& options = ctx.options();
    const int b = static_cast<int>(batch.size());
    if (b < 1) throw ConfigError("training step: empty batch");
    const int n = model.config().cells();
    const int window = objective.window == 0 ? n : objective.window;

    // The slice layout is fixed by config so the floating-point reduction
    // order never depends on how many threads actually run.
    const int slices = std::max(1, std::min(options.reduction_slices, b));
    auto& sinks = ctx.sinks_;
    for (int s = 0; s < slices; ++s) {
        for (Tensor& t : sinks[static_cast<size_t>(s)]) {
            if (!t.empty()) t.fill(0.0);
        }
    }
    std::vector<double> slice_loss(static_cast<size_t>(slices), 0.0);
    std::vector<int> slice_targets(static_cast<size_t>(slices), 0);

    auto run_slice = [&](int s) {
        Tape& tape = *ctx.tapes_[static_cast<size_t>(s)];
        const int begin = static_cast<int>(static_cast<int64_t>(s) * b / slices);
        const int end = static_cast<int>(static_cast<int64_t>(s + 1) * b / slices);
        for (int e = begin; e < end; ++e) {
            Rng ex_rng = step_rng.split(static_cast<uint64_t>(e));
            Rng plan_rng = ex_rng.split(0);
            Rng noise_rng = ex_rng.split(1);
            const OrderPlan plan =
                make_order_plan(objective.tag, n, window, objective.density, plan_rng);
            tape.reset();
            const LossGraph lg =
                build_loss(model, tape, batch[static_cast<size_t>(e)].grid,
                           batch[static_cast<size_t>(e)].class_id, plan, noise_rng);
            tape.backward(lg.loss_node);
            tape.drain_param_grads_into(sinks[static_cast<size_t>(s)]);
            slice_loss[static_cast<size_t>(s)] += lg.breakdown.total;
            slice_targets[static_cast<size_t>(s)] += lg.breakdown.target_total;
        }
    };

    const int workers = std::max(1, std::min(options.threads, slices));
    if (workers == 1) {
        for (int s = 0; s < slices; ++s) run_slice(s);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (int s = next.fetch_add(1); s < slices; s = next.fetch_add(1)) run_slice(s);
            });
        }
        for (auto& th : pool) th.join();
    }

    // deterministic reduction: slice order, then parameter order
    ParamStore& store = model.params();
    const double inv_b = 1.0 / b;
    for (int s = 0; s < slices; ++s) {
        for (ParamId pid = 0; pid < store.count(); ++pid) {
            const Tensor& src = sinks[static_cast<size_t>(s)][static_cast<size_t>(pid)];
            if (!src.empty()) store.grad(pid).add_inplace(src);
        }
    }
    for (ParamId pid = 0; pid < store.count(); ++pid) {
        for (double& g : store.grad(pid).data) g *= inv_b;
    }

    StepMetrics m;
    m.step = opt.step_count();
    m.lr = opt.current_lr();
    m.grad_norm = store.grad_norm();
    for (int s = 0; s < slices; ++s) {
        m.loss += slice_loss[static_cast<size_t>(s)];
        m.target_total += slice_targets[static_cast<size_t>(s)];
    }
    m.loss *= inv_b;
    if (!std::isfinite(m.loss)) throw NumericError("training step: non-finite loss");
    opt.step(store);
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

} // namespace gridlm

#include "gridlm/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace gridlm {

namespace {

RevealSeq seq_from_revealed(const Revealed& revealed, int class_id) {
    RevealSeq seq;
    seq.class_id = class_id;
    seq.cells = revealed.cells;
    seq.ids = revealed.values;
    return seq;
}

std::vector<int32_t> unrevealed_cells(int n, const Revealed& revealed) {
    std::vector<uint8_t> seen(static_cast<size_t>(n), 0);
    for (int32_t c : revealed.cells) seen[static_cast<size_t>(c)] = 1;
    std::vector<int32_t> out;
    for (int i = 0; i < n; ++i) {
        if (!seen[static_cast<size_t>(i)]) out.push_back(i);
    }
    return out;
}

} // namespace

std::vector<double> model_conditional(const GridModel& model, const Revealed& revealed,
                                      int query_cell, int class_id) {
    const ModelConfig& cfg = model.config();
    if (cfg.law != OutputLaw::kCategorical) {
        throw ConfigError("model_conditional: continuous law has no exact conditional");
    }
    if (revealed.cells.size() != revealed.values.size()) {
        throw ConfigError("model_conditional: ragged revealed context");
    }
    Tape tape(&model.params());
    const RevealSeq seq = seq_from_revealed(revealed, class_id);
    const int hidden = model.backbone(tape, model.embed_rows_own(tape, seq));

    std::vector<int32_t> masked;
    if (cfg.head_kind == HeadKind::kGlobal) {
        masked = unrevealed_cells(cfg.cells(), revealed);
    } else {
        const int chunk = model.tiling().chunk_of(query_cell);
        for (int32_t c : unrevealed_cells(cfg.cells(), revealed)) {
            if (model.tiling().chunk_of(c) == chunk) masked.push_back(c);
        }
    }
    int row = -1;
    for (size_t i = 0; i < masked.size(); ++i) {
        if (masked[i] == query_cell) row = static_cast<int>(i);
    }
    if (row < 0) throw ConfigError("model_conditional: query cell is revealed");

    int payload;
    if (cfg.head_kind == HeadKind::kGlobal) {
        payload = model.global_head_payload(tape, hidden, revealed.cells, masked);
    } else {
        payload = model.chunk_head_payload(tape, hidden, model.tiling().chunk_of(query_cell), masked);
    }
    const int logits = model.logits_from_payload(tape, tape.slice_rows(payload, row, 1));
    std::vector<double> probs(static_cast<size_t>(cfg.vocab));
    kernels::softmax_row(tape.val(logits).data.data(), probs.data(), cfg.vocab);
    return probs;
}

EvalModel eval_model_from_grid_model(const GridModel& model, const SamplingConfig& sampling,
                                     int class_id) {
    EvalModel em;
    em.conditional = [&model, class_id](const Revealed& revealed, int query) {
        return model_conditional(model, revealed, query, class_id);
    };
    em.generate = [&model, sampling, class_id](uint64_t seed) {
        return generate_grid(model, class_id, sampling, seed);
    };
    return em;
}

EvalModel eval_model_from_table(const JointSpec& spec) {
    auto table = std::make_shared<std::vector<double>>(enumerate_joint(spec));
    auto sampler = std::make_shared<JointSampler>(spec);
    EvalModel em;
    em.conditional = [spec, table](const Revealed& revealed, int query) {
        return exact_conditional(spec, *table, revealed, query);
    };
    em.generate = [sampler](uint64_t seed) {
        Rng rng(seed);
        return sampler->sample(rng);
    };
    return em;
}

EvalModel eval_model_uniform(int vocab, const JointSpec& shape_spec) {
    EvalModel em;
    em.conditional = [vocab](const Revealed&, int) {
        return std::vector<double>(static_cast<size_t>(vocab), 1.0 / vocab);
    };
    em.generate = [vocab, shape_spec](uint64_t seed) {
        Rng rng(seed);
        std::vector<int32_t> a(static_cast<size_t>(shape_spec.cells()));
        for (auto& v : a) v = static_cast<int32_t>(rng.below(static_cast<uint64_t>(vocab)));
        return grid_from_assignment(shape_spec, a);
    };
    return em;
}

EvalReport eval_suite(const EvalModel& subject, const JointSpec& spec, const EvalSuiteConfig& cfg) {
    const int n = spec.cells();
    const std::vector<double> table = enumerate_joint(spec);
    JointSampler sampler(spec);
    Rng root(cfg.seed);
    EvalReport rep;

    // (a) conditional TV against the brute-force oracle
    std::vector<double> tvs;
    {
        Rng qrng = root.split(1);
        for (int q = 0; q < cfg.query_count; ++q) {
            const TokenGrid g = sampler.sample(qrng);
            std::vector<int> order(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
            qrng.shuffle(order);
            const int k = static_cast<int>(qrng.below(static_cast<uint64_t>(n - 1)));
            Revealed rev;
            for (int i = 0; i < k; ++i) {
                rev.cells.push_back(order[static_cast<size_t>(i)]);
                rev.values.push_back(g.ids[static_cast<size_t>(order[static_cast<size_t>(i)])]);
            }
            const int query = order[static_cast<size_t>(k)];
            tvs.push_back(total_variation(subject.conditional(rev, query),
                                          exact_conditional(spec, table, rev, query)));
        }
        std::sort(tvs.begin(), tvs.end());
        double sum = 0.0;
        for (double v : tvs) sum += v;
        rep.tv_mean = tvs.empty() ? 0.0 : sum / static_cast<double>(tvs.size());
        rep.tv_p95 = tvs.empty() ? 0.0 : tvs[static_cast<size_t>(0.95 * static_cast<double>(tvs.size() - 1))];
        rep.query_count = static_cast<int>(tvs.size());
    }

    // (b) held-out NLL per term over sampled orders (terms 1..N-1)
    {
        Rng nrng = root.split(2);
        double nll = 0.0;
        int64_t terms = 0;
        for (int e = 0; e < cfg.nll_examples; ++e) {
            const TokenGrid g = sampler.sample(nrng);
            std::vector<int> order(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
            nrng.shuffle(order);
            Revealed rev;
            rev.cells.push_back(order[0]);
            rev.values.push_back(g.ids[static_cast<size_t>(order[0])]);
            for (int t = 1; t < n; ++t) {
                const int cell = order[static_cast<size_t>(t)];
                const std::vector<double> p = subject.conditional(rev, cell);
                nll -= std::log(std::max(p[static_cast<size_t>(g.ids[static_cast<size_t>(cell)])], 1e-300));
                ++terms;
                rev.cells.push_back(cell);
                rev.values.push_back(g.ids[static_cast<size_t>(cell)]);
            }
        }
        rep.nll = terms > 0 ? nll / static_cast<double>(terms) : 0.0;
    }

    // (c) generated-sample single-cell marginal TV
    if (cfg.sample_count > 0 && subject.generate) {
        Rng srng = root.split(3);
        Tensor counts(n, spec.vocab);
        for (int s = 0; s < cfg.sample_count; ++s) {
            const TokenGrid g = subject.generate(srng.next_u64());
            for (int c = 0; c < n; ++c) counts.at(c, g.ids[static_cast<size_t>(c)]) += 1.0;
        }
        double tv_sum = 0.0;
        for (int c = 0; c < n; ++c) {
            std::vector<double> emp(static_cast<size_t>(spec.vocab));
            for (int v = 0; v < spec.vocab; ++v) {
                emp[static_cast<size_t>(v)] = counts.at(c, v) / cfg.sample_count;
            }
            tv_sum += total_variation(emp, exact_marginal(spec, c));
        }
        rep.marginal_tv = tv_sum / n;
    }

    // (d) order sensitivity: same revealed set, two reveal orders
    {
        Rng orng = root.split(4);
        double sens = 0.0;
        int count = 0;
        for (int q = 0; q < cfg.order_sens_queries; ++q) {
            const TokenGrid g = sampler.sample(orng);
            std::vector<int> order(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
            orng.shuffle(order);
            const int k = 2 + static_cast<int>(orng.below(static_cast<uint64_t>(std::max(1, n - 2))));
            Revealed rev;
            for (int i = 0; i < k && i < n - 1; ++i) {
                rev.cells.push_back(order[static_cast<size_t>(i)]);
                rev.values.push_back(g.ids[static_cast<size_t>(order[static_cast<size_t>(i)])]);
            }
            const int query = order[static_cast<size_t>(rev.len())];
            Revealed flipped = rev;
            std::vector<int> idx(static_cast<size_t>(rev.len()));
            for (int i = 0; i < rev.len(); ++i) idx[static_cast<size_t>(i)] = i;
            orng.shuffle(idx);
            for (int i = 0; i < rev.len(); ++i) {
                flipped.cells[static_cast<size_t>(i)] = rev.cells[static_cast<size_t>(idx[static_cast<size_t>(i)])];
                flipped.values[static_cast<size_t>(i)] = rev.values[static_cast<size_t>(idx[static_cast<size_t>(i)])];
            }
            sens += total_variation(subject.conditional(rev, query),
                                    subject.conditional(flipped, query));
            ++count;
        }
        rep.order_sens = count > 0 ? sens / count : 0.0;
    }
    return rep;
}

double heldout_nll(const GridModel& model, std::span<const Example> examples, ObjectiveTag tag,
                   uint64_t seed) {
    const ModelConfig& cfg = model.config();
    const int n = cfg.cells();
    Rng root(seed);
    double nll = 0.0;
    int64_t terms = 0;
    Tape tape(&model.params());

    for (size_t e = 0; e < examples.size(); ++e) {
        Rng ex_rng = root.split(e);
        const Example& ex = examples[e];
        OrderPlan plan = make_order_plan(tag == ObjectiveTag::k1dRaster ? ObjectiveTag::k1dRaster
                                                                        : ObjectiveTag::k1dRandom,
                                         n, n, 1, ex_rng);
        // 1d tags: the per-term loss already is the next-token NLL
        if (tag != ObjectiveTag::k2d) {
            tape.reset();
            Rng unused(0);
            const LossGraph lg = build_loss(model, tape, ex.grid, ex.class_id, plan, unused);
            for (const LossTerm& term : lg.breakdown.terms) {
                nll += term.sum_loss;
                ++terms;
            }
            continue;
        }
        // 2d: one causal pass, then the head payload at the next revealed cell
        tape.reset();
        std::vector<int> when(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) when[static_cast<size_t>(plan.perm[static_cast<size_t>(i)])] = i;
        RevealSeq seq;
        seq.class_id = ex.class_id;
        seq.cells.assign(plan.perm.begin(), plan.perm.end() - 1);
        for (int32_t c : seq.cells) seq.ids.push_back(ex.grid.ids[static_cast<size_t>(c)]);
        const int hidden = model.backbone(tape, model.embed_rows_own(tape, seq));
        for (int t = 1; t < n; ++t) {
            const int32_t cell = plan.perm[static_cast<size_t>(t)];
            std::vector<int32_t> masked;
            if (cfg.head_kind == HeadKind::kGlobal) {
                for (int c = 0; c < n; ++c) {
                    if (when[static_cast<size_t>(c)] >= t) masked.push_back(c);
                }
            } else {
                const int chunk = model.tiling().chunk_of(cell);
                for (int32_t c : model.tiling().cells_of_chunk(chunk)) {
                    if (when[static_cast<size_t>(c)] >= t) masked.push_back(c);
                }
                std::sort(masked.begin(), masked.end());
            }
            int row = -1;
            for (size_t i = 0; i < masked.size(); ++i) {
                if (masked[i] == cell) row = static_cast<int>(i);
            }
            const int prefix = tape.slice_rows(hidden, 0, t + 1);
            const std::vector<int32_t> prefix_cells(plan.perm.begin(), plan.perm.begin() + t);
            const int payload = cfg.head_kind == HeadKind::kGlobal
                                    ? model.global_head_payload(tape, prefix, prefix_cells, masked)
                                    : model.chunk_head_payload(tape, prefix,
                                                               model.tiling().chunk_of(cell), masked);
            const int ce = tape.ce_logits(model.logits_from_payload(tape, tape.slice_rows(payload, row, 1)),
                                          {ex.grid.ids[static_cast<size_t>(cell)]});
            nll += tape.val(ce).data[0];
            ++terms;
        }
    }
    return terms > 0 ? nll / static_cast<double>(terms) : 0.0;
}

Tensor cosine_similarity_map(const Tensor& embeddings, int ref_cell, int grid_h, int grid_w) {
    if (embeddings.rows != grid_h * grid_w) throw ConfigError("similarity: row count mismatch");
    if (ref_cell < 0 || ref_cell >= embeddings.rows) throw ConfigError("similarity: bad reference cell");
    const int d = embeddings.cols;
    auto norm = [&](int r) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += embeddings.at(r, j) * embeddings.at(r, j);
        return std::sqrt(s);
    };
    const double ref_norm = norm(ref_cell);
    Tensor map(grid_h, grid_w);
    for (int c = 0; c < embeddings.rows; ++c) {
        const double nc = norm(c);
        double sim = 0.0;
        if (ref_norm > 0.0 && nc > 0.0) {
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += embeddings.at(ref_cell, j) * embeddings.at(c, j);
            sim = dot / (ref_norm * nc);
        }
        map.data[static_cast<size_t>(c)] = sim;
    }
    return map;
}

Tensor token_embeddings_for_grid(const TokenGrid& grid, const Tokenizer& tok) {
    if (grid.kind == GridKind::kContinuous) {
        return grid.latents;
    }
    const Codebook& cb = tok.codebook;
    Tensor out(grid.cells(), cb.dim());
    for (int i = 0; i < grid.cells(); ++i) {
        const int32_t id = grid.ids[static_cast<size_t>(i)];
        if (id < 0 || id >= cb.k()) throw ConfigError("embeddings: token id outside codebook");
        std::copy(cb.entries.row(id), cb.entries.row(id) + cb.dim(), out.row(i));
    }
    return out;
}

Tensor attention_map(const GridModel& model, const TokenGrid& grid, int ref_cell, int class_id) {
    const ModelConfig& cfg = model.config();
    const int n = cfg.cells();
    if (grid.cells() != n) throw ConfigError("attention_map: grid size mismatch");
    if (ref_cell < 0 || ref_cell >= n) throw ConfigError("attention_map: bad reference cell");
    Tape tape(&model.params());
    RevealSeq seq;
    seq.class_id = class_id;
    seq.cells.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) seq.cells[static_cast<size_t>(i)] = i; // raster feed
    if (grid.kind == GridKind::kDiscrete) {
        seq.ids = grid.ids;
    } else {
        seq.latents = grid.latents;
    }
    std::vector<int> attn_nodes;
    model.backbone(tape, model.embed_rows_own(tape, seq), &attn_nodes);
    const Tensor& probs = tape.attention_probs(attn_nodes.back()); // (heads * L, L)
    const int rows = n + 1; // start token plus N cells
    const int query_row = ref_cell + 1;
    Tensor map(cfg.grid_h, cfg.grid_w);
    for (int c = 0; c < n; ++c) {
        double acc = 0.0;
        for (int h = 0; h < cfg.heads; ++h) acc += probs.at(h * rows + query_row, c + 1);
        map.data[static_cast<size_t>(c)] = acc / cfg.heads;
    }
    return map;
}

} // namespace gridlm

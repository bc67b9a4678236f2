#include "gridlm/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"

namespace gridlm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

AdamWConfig adamw_from(const RunConfig& cfg) {
    AdamWConfig a;
    a.lr = cfg.get_double("opt.lr");
    a.beta1 = cfg.get_double("opt.beta1");
    a.beta2 = cfg.get_double("opt.beta2");
    a.eps = cfg.get_double("opt.eps");
    a.weight_decay = cfg.get_double("opt.weight_decay");
    a.warmup_steps = cfg.get_int("opt.warmup");
    return a;
}

JointSpec oracle_from(const RunConfig& cfg) {
    const JointKind kind = joint_kind_from_string(cfg.get("oracle.kind"));
    const int h = cfg.get_int("oracle.h");
    const int w = cfg.get_int("oracle.w");
    const int v = cfg.get_int("oracle.v");
    switch (kind) {
        case JointKind::kFactorized:
            return JointSpec::factorized_random(h, w, v, cfg.get_i64("oracle.seed"));
        case JointKind::kPairwiseMarkov:
            return JointSpec::pairwise_markov(h, w, v, cfg.get_i64("oracle.seed"),
                                              cfg.get_double("oracle.coupling"));
        case JointKind::kCopyPairs:
            return JointSpec::copy_pairs(h, w, v, cfg.get_double("oracle.eps"));
    }
    throw ConfigError("oracle: bad kind");
}

ObjectiveConfig objective_from(const RunConfig& cfg, int n_cells) {
    ObjectiveConfig oc;
    oc.tag = objective_from_string(cfg.get("objective.tag"));
    oc.window = cfg.get_int("objective.w");
    if (oc.window == 0) oc.window = n_cells;
    oc.density = cfg.get_int("objective.n");
    return oc;
}

SamplingConfig sampling_from(const RunConfig& cfg) {
    SamplingConfig sc;
    sc.temperature = cfg.get_double("sample.temperature");
    sc.top_k = cfg.get_int("sample.top_k");
    sc.diffusion_steps = cfg.get_int("sample.diffusion_steps");
    sc.policy = position_policy_from_string(cfg.get("sample.policy"));
    return sc;
}

ModelConfig model_config_from(const RunConfig& cfg, const JointSpec* oracle,
                              const Tokenizer* tok) {
    ModelConfig mc;
    if (oracle != nullptr) {
        mc.grid_h = oracle->grid_h;
        mc.grid_w = oracle->grid_w;
        mc.vocab = oracle->vocab;
        mc.law = OutputLaw::kCategorical;
        mc.class_count = 0;
    } else {
        mc.grid_h = cfg.get_int("data.image_h") / cfg.get_int("tokenizer.patch_h");
        mc.grid_w = cfg.get_int("data.image_w") / cfg.get_int("tokenizer.patch_w");
        mc.class_count = cfg.get_int("data.classes");
        if (cfg.get("head.law") == "categorical") {
            mc.law = OutputLaw::kCategorical;
            mc.vocab = tok->codebook.k();
        } else {
            mc.law = OutputLaw::kDiffusion;
            mc.latent_m = tok->autoencoder.m();
        }
    }
    mc.depth = cfg.get_int("model.depth");
    mc.hidden = cfg.get_int("model.hidden");
    mc.ffn = cfg.get_int("model.ffn");
    mc.heads = cfg.get_int("model.heads");
    mc.head_depth = cfg.get_int("head.depth");
    const std::string hk = cfg.get("head.kind");
    mc.head_kind = hk == "global" ? HeadKind::kGlobal
                                  : (hk == "chunk" ? HeadKind::kChunk : HeadKind::kLinear1d);
    if (mc.head_kind == HeadKind::kChunk) {
        mc.chunk_w = cfg.get_int("objective.w");
        if (mc.chunk_w == 0) mc.chunk_w = mc.cells();
    }
    mc.diffusion.blocks = cfg.get_int("diffusion.blocks");
    mc.diffusion.width = cfg.get_int("diffusion.width");
    mc.diffusion.steps = cfg.get_int("diffusion.steps");
    mc.validate();
    return mc;
}

uint64_t model_seed_of(const RunConfig& cfg) {
    return Rng(static_cast<uint64_t>(cfg.get_i64("train.seed"))).split(1).key();
}

} // namespace

std::string artifact_dir(const RunConfig& cfg, const std::string& out_root,
                         const std::string& command) {
    return (fs::path(out_root) / cfg.hash_hex_str() / command).string();
}

BuiltRun build_run(const RunConfig& cfg_in, const std::string& run_dir) {
    BuiltRun br;
    br.cfg = cfg_in;
    br.cfg.resolve();
    const RunConfig& cfg = br.cfg;

    if (cfg.get("data.source") == "oracle") {
        br.oracle = oracle_from(cfg);
        br.has_oracle = true;
        const uint64_t dseed = static_cast<uint64_t>(cfg.get_i64("oracle.seed"));
        br.train = sample_corpus(br.oracle, cfg.get_int("data.train_count"),
                                 detail::mix64(dseed ^ 0x7261696eULL), "train");
        br.heldout = sample_corpus(br.oracle, cfg.get_int("data.heldout_count"),
                                   detail::mix64(dseed ^ 0x68656c64ULL), "heldout");
        br.model_cfg = model_config_from(cfg, &br.oracle, nullptr);
        return br;
    }

    // image pipeline: render (or load), split, fit tokenizer on train patches,
    // encode, drop held-out grids colliding with train grids
    std::string dir = cfg.get("data.image_dir");
    const int train_count = cfg.get_int("data.train_count");
    const int heldout_count = cfg.get_int("data.heldout_count");
    if (dir.empty()) {
        dir = (fs::path(run_dir) / "data").string();
        ShapeImageSpec spec;
        spec.image_h = cfg.get_int("data.image_h");
        spec.image_w = cfg.get_int("data.image_w");
        spec.kinds = cfg.get_int("data.classes");
        spec.noise = cfg.get_double("data.noise");
        spec.snap = cfg.get_int("data.snap");
        render_shape_corpus(spec, train_count + heldout_count,
                            static_cast<uint64_t>(cfg.get_i64("oracle.seed")), dir);
    }
    auto images = load_image_corpus(dir);
    if (static_cast<int>(images.size()) < train_count + 1) {
        throw ConfigError("images: corpus smaller than the train split");
    }

    const int ph = cfg.get_int("tokenizer.patch_h");
    const int pw = cfg.get_int("tokenizer.patch_w");
    std::vector<Image> train_imgs, held_imgs;
    std::vector<int> train_cls, held_cls;
    for (size_t i = 0; i < images.size(); ++i) {
        if (static_cast<int>(i) < train_count) {
            train_imgs.push_back(images[i].first);
            train_cls.push_back(images[i].second);
        } else if (static_cast<int>(i) < train_count + heldout_count) {
            held_imgs.push_back(images[i].first);
            held_cls.push_back(images[i].second);
        }
    }

    // stack train patches for the tokenizer fit
    const int per = (train_imgs[0].height / ph) * (train_imgs[0].width / pw);
    Tensor patches(static_cast<int>(train_imgs.size()) * per, ph * pw * train_imgs[0].channels);
    for (size_t i = 0; i < train_imgs.size(); ++i) {
        const Tensor p = patchify(train_imgs[i], ph, pw);
        std::copy(p.data.begin(), p.data.end(),
                  patches.data.begin() + static_cast<int64_t>(i) * per * p.cols);
    }
    br.has_tokenizer = true;
    if (cfg.get("tokenizer.kind") == "discrete") {
        br.tokenizer.kind = GridKind::kDiscrete;
        br.tokenizer.codebook =
            fit_discrete_codebook(patches, cfg.get_int("tokenizer.k"), ph, pw,
                                  train_imgs[0].channels,
                                  static_cast<uint64_t>(cfg.get_i64("tokenizer.seed")));
    } else {
        br.tokenizer.kind = GridKind::kContinuous;
        br.tokenizer.autoencoder =
            fit_linear_autoencoder(patches, cfg.get_int("tokenizer.m"), ph, pw,
                                   train_imgs[0].channels);
    }

    br.train.split = "train";
    for (size_t i = 0; i < train_imgs.size(); ++i) {
        br.train.examples.push_back(Example{br.tokenizer.encode(train_imgs[i]), train_cls[i]});
    }
    br.heldout.split = "heldout";
    for (size_t i = 0; i < held_imgs.size(); ++i) {
        br.heldout.examples.push_back(Example{br.tokenizer.encode(held_imgs[i]), held_cls[i]});
    }
    drop_split_overlap(br.train, br.heldout);
    br.train_images = std::move(train_imgs);
    br.heldout_images = std::move(held_imgs);

    std::ostringstream prov;
    prov << "images:" << dir << ":" << train_count << "/" << heldout_count;
    br.train.provenance = hash_hex(fnv1a64(prov.str().data(), prov.str().size()));
    br.heldout.provenance = br.train.provenance;
    br.model_cfg = model_config_from(cfg, nullptr, &br.tokenizer);
    return br;
}

Checkpoint make_checkpoint(const GridModel& model, const AdamW& opt, const Tokenizer* tok,
                           uint64_t config_hash, uint64_t train_seed) {
    Checkpoint ck;
    ck.config_hash = config_hash;
    ck.step = opt.step_count();
    const ParamStore& store = model.params();
    for (ParamId pid = 0; pid < store.count(); ++pid) {
        ck.add_f64("param." + store.name(pid), store.value(pid));
    }
    for (ParamId pid = 0; pid < store.count(); ++pid) {
        ck.add_f64("adam.m." + store.name(pid), store.moment1(pid));
        ck.add_f64("adam.v." + store.name(pid), store.moment2(pid));
    }
    ck.add_i64("opt.step", {opt.step_count()});
    // the training stream is a pure function of (seed, step); stored so a
    // resumed process re-derives identical draws
    ck.add_i64("rng.state", {static_cast<int64_t>(train_seed), opt.step_count()});
    if (tok != nullptr) {
        if (tok->kind == GridKind::kDiscrete) {
            ck.add_i64("tok.meta", {0, tok->codebook.patch_h, tok->codebook.patch_w,
                                    tok->codebook.channels, tok->codebook.k()});
            ck.add_f64("tok.entries", tok->codebook.entries);
        } else {
            ck.add_i64("tok.meta", {1, tok->autoencoder.patch_h, tok->autoencoder.patch_w,
                                    tok->autoencoder.channels, tok->autoencoder.m()});
            ck.add_f64("tok.mean", tok->autoencoder.mean);
            ck.add_f64("tok.basis", tok->autoencoder.basis);
            ck.add_f64("tok.eigen", Tensor::row_vector(tok->autoencoder.eigenvalues));
        }
    }
    return ck;
}

void restore_from_checkpoint(const Checkpoint& ck, GridModel& model, AdamW& opt) {
    ParamStore& store = model.params();
    for (ParamId pid = 0; pid < store.count(); ++pid) {
        const Tensor& v = ck.get_f64("param." + store.name(pid));
        if (!v.same_shape(store.value(pid))) {
            throw ConfigError("checkpoint: shape mismatch for " + store.name(pid));
        }
        store.value(pid) = v;
        store.moment1(pid) = ck.get_f64("adam.m." + store.name(pid));
        store.moment2(pid) = ck.get_f64("adam.v." + store.name(pid));
    }
    opt.set_step_count(ck.get_i64("opt.step")[0]);
}

bool checkpoint_has_tokenizer(const Checkpoint& ck) { return ck.has("tok.meta"); }

Tokenizer tokenizer_from_checkpoint(const Checkpoint& ck) {
    Tokenizer tok;
    const auto& meta = ck.get_i64("tok.meta");
    if (meta[0] == 0) {
        tok.kind = GridKind::kDiscrete;
        tok.codebook.patch_h = static_cast<int>(meta[1]);
        tok.codebook.patch_w = static_cast<int>(meta[2]);
        tok.codebook.channels = static_cast<int>(meta[3]);
        tok.codebook.entries = ck.get_f64("tok.entries");
    } else {
        tok.kind = GridKind::kContinuous;
        tok.autoencoder.patch_h = static_cast<int>(meta[1]);
        tok.autoencoder.patch_w = static_cast<int>(meta[2]);
        tok.autoencoder.channels = static_cast<int>(meta[3]);
        tok.autoencoder.mean = ck.get_f64("tok.mean");
        tok.autoencoder.basis = ck.get_f64("tok.basis");
        tok.autoencoder.eigenvalues = ck.get_f64("tok.eigen").data;
    }
    return tok;
}

namespace {

json metrics_line(const StepMetrics& m, const ObjectiveConfig& oc, const std::string& hash,
                  const std::string& provenance) {
    return json{{"step", m.step},
                {"objective", to_string(oc.tag)},
                {"w", oc.window},
                {"n", oc.density},
                {"loss", m.loss},
                {"lr", m.lr},
                {"grad_norm", m.grad_norm},
                {"wall_ms", m.wall_ms},
                {"config_hash", hash},
                {"provenance", provenance}};
}

struct LoadedModel {
    std::unique_ptr<GridModel> model;
    std::unique_ptr<AdamW> opt;
    BuiltRun br;
};

LoadedModel load_trained(const RunConfig& cfg_in, const std::string& out_root, bool force) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    LoadedModel lm;
    const std::string train_dir = artifact_dir(cfg, out_root, "train");
    lm.br = build_run(cfg, train_dir);
    lm.model = std::make_unique<GridModel>(lm.br.model_cfg, model_seed_of(cfg));
    lm.opt = std::make_unique<AdamW>(adamw_from(cfg));
    const std::string ck_path = (fs::path(train_dir) / "checkpoint.bin").string();
    const Checkpoint ck = Checkpoint::load(ck_path, cfg.config_hash(), force);
    restore_from_checkpoint(ck, *lm.model, *lm.opt);
    return lm;
}

} // namespace

TrainOutcome run_train(const RunConfig& cfg_in, const std::string& out_root,
                       int64_t stop_at_step) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    const uint64_t hash = cfg.config_hash();
    const std::string run_dir = artifact_dir(cfg, out_root, "train");
    fs::create_directories(run_dir);
    {
        std::ofstream cf(fs::path(run_dir) / "config.resolved");
        cf << "# config_hash = " << cfg.hash_hex_str() << "\n" << cfg.canonical_text();
    }

    BuiltRun br = build_run(cfg, run_dir);
    GridModel model(br.model_cfg, model_seed_of(cfg));
    AdamW opt(adamw_from(cfg));

    const int64_t budget = cfg.get_i64("train.steps");
    const std::string ck_path = (fs::path(run_dir) / "checkpoint.bin").string();
    bool resumed = false;
    if (fs::exists(ck_path)) {
        const Checkpoint ck = Checkpoint::load(ck_path, hash, false);
        if (ck.step <= budget) {
            restore_from_checkpoint(ck, model, opt);
            resumed = true;
        }
    }

    const uint64_t train_seed = static_cast<uint64_t>(cfg.get_i64("train.seed"));
    Rng root(train_seed);
    Rng step_root = root.split(2);
    Rng epoch_root = root.split(3);

    const ObjectiveConfig oc = objective_from(cfg, br.model_cfg.cells());
    TrainOptions topt;
    topt.reduction_slices = cfg.get_int("train.reduction_slices");
    topt.threads = resolve_thread_count();

    const int batch_size = std::min<int>(cfg.get_int("data.batch"),
                                         static_cast<int>(br.train.examples.size()));
    const int64_t bpe = (static_cast<int64_t>(br.train.examples.size()) + batch_size - 1) / batch_size;
    const int64_t ck_every = std::max<int64_t>(1, cfg.get_i64("train.checkpoint_every"));

    std::ofstream metrics((fs::path(run_dir) / "metrics.jsonl").string(),
                          resumed ? std::ios::app : std::ios::trunc);
    if (!metrics) throw ConfigError("train: cannot open metrics log");

    std::vector<std::vector<int>> batches;
    int64_t batches_epoch = -1;
    TrainOutcome outcome;
    double last_loss = 0.0;
    TrainContext ctx(&model.params(), topt);

    for (int64_t step = opt.step_count(); step < budget; ++step) {
        const int64_t epoch = step / bpe;
        const int64_t slot = step % bpe;
        if (epoch != batches_epoch) {
            batches = make_batches(static_cast<int>(br.train.examples.size()), batch_size,
                                   epoch_root.split(static_cast<uint64_t>(epoch)).key());
            batches_epoch = epoch;
        }
        std::vector<Example> batch;
        batch.reserve(batches[static_cast<size_t>(slot)].size());
        for (int idx : batches[static_cast<size_t>(slot)]) {
            batch.push_back(br.train.examples[static_cast<size_t>(idx)]);
        }
        Rng step_rng = step_root.split(static_cast<uint64_t>(step));
        const StepMetrics m = training_step(model, batch, oc, opt, step_rng, ctx);
        last_loss = m.loss;
        metrics << metrics_line(m, oc, cfg.hash_hex_str(), br.train.provenance).dump() << "\n";
        if (opt.step_count() % ck_every == 0) {
            make_checkpoint(model, opt, br.has_tokenizer ? &br.tokenizer : nullptr, hash, train_seed)
                .save(ck_path);
            metrics.flush();
        }
        if (stop_at_step >= 0 && opt.step_count() >= stop_at_step) {
            make_checkpoint(model, opt, br.has_tokenizer ? &br.tokenizer : nullptr, hash, train_seed)
                .save(ck_path);
            TrainOutcome interrupted;
            interrupted.steps_done = opt.step_count();
            interrupted.checkpoint_path = ck_path;
            interrupted.final_loss = last_loss;
            return interrupted;
        }
    }
    make_checkpoint(model, opt, br.has_tokenizer ? &br.tokenizer : nullptr, hash, train_seed)
        .save(ck_path);

    outcome.steps_done = opt.step_count();
    outcome.checkpoint_path = ck_path;
    outcome.final_loss = last_loss;

    // final held-out metrics
    json report;
    report["config_hash"] = cfg.hash_hex_str();
    report["provenance"] = br.train.provenance;
    report["steps"] = outcome.steps_done;
    report["final_loss"] = last_loss;
    if (!br.heldout.examples.empty() && br.model_cfg.law == OutputLaw::kCategorical) {
        outcome.nll = heldout_nll(model, br.heldout.examples, oc.tag,
                                  static_cast<uint64_t>(cfg.get_i64("eval.seed")));
        report["nll"] = outcome.nll;
    }
    if (br.has_oracle && br.oracle.enumerable() && cfg.get_int("eval.queries") > 0 &&
        br.model_cfg.head_kind != HeadKind::kLinear1d) {
        EvalSuiteConfig ec;
        ec.query_count = cfg.get_int("eval.queries");
        ec.nll_examples = 0;
        ec.sample_count = 0;
        ec.order_sens_queries = 0;
        ec.seed = static_cast<uint64_t>(cfg.get_i64("eval.seed"));
        const EvalReport er =
            eval_suite(eval_model_from_grid_model(model, sampling_from(cfg)), br.oracle, ec);
        outcome.tv_mean = er.tv_mean;
        report["tv_mean"] = er.tv_mean;
        report["tv_p95"] = er.tv_p95;
    }
    std::ofstream rep((fs::path(run_dir) / "report.json").string(), std::ios::trunc);
    rep << report.dump(2) << "\n";
    return outcome;
}

void run_sample(const RunConfig& cfg_in, const std::string& out_root, int sample_count,
                std::optional<uint64_t> seed, int class_id, bool force) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    LoadedModel lm = load_trained(cfg, out_root, force);
    if (!lm.br.has_tokenizer) {
        throw ConfigError("sample: tokenizer missing from checkpoint (oracle runs decode nothing)");
    }
    const int classes = std::max(1, lm.br.model_cfg.class_count);
    if (class_id >= classes) throw ConfigError("sample: class id outside class_count");

    const std::string dir = artifact_dir(cfg, out_root, "sample");
    fs::create_directories(dir);
    const int count = sample_count > 0 ? sample_count : cfg.get_int("sample.count");
    const uint64_t root_seed = seed.value_or(static_cast<uint64_t>(cfg.get_i64("train.seed")));
    Rng root(root_seed);
    const SamplingConfig sc = sampling_from(cfg);

    std::ofstream manifest((fs::path(dir) / "manifest.txt").string(), std::ios::trunc);
    manifest << "# config_hash " << cfg.hash_hex_str() << "\n";
    for (int i = 0; i < count; ++i) {
        const uint64_t s = root.split(static_cast<uint64_t>(i)).key();
        const int cls = class_id >= 0 ? class_id : i % classes;
        const TokenGrid grid = generate_grid(*lm.model, cls, sc, s);
        char gname[32], iname[32];
        std::snprintf(gname, sizeof(gname), "grid_%04d.txt", i);
        std::snprintf(iname, sizeof(iname), "img_%04d.pgm", i);
        std::ofstream gf((fs::path(dir) / gname).string(), std::ios::trunc);
        gf << dump_token_grid(grid);
        write_pnm(lm.br.tokenizer.decode(grid), (fs::path(dir) / iname).string());
        manifest << gname << " " << iname << " seed=" << s << " class=" << cls << "\n";
    }
}

void run_eval(const RunConfig& cfg_in, const std::string& out_root, bool force) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    const std::string dir = artifact_dir(cfg, out_root, "eval");
    fs::create_directories(dir);
    json report;
    report["config_hash"] = cfg.hash_hex_str();

    const std::string stub = cfg.get("eval.stub");
    if (cfg.get("data.source") == "oracle") {
        const JointSpec spec = oracle_from(cfg);
        EvalSuiteConfig ec;
        ec.query_count = cfg.get_int("eval.queries");
        ec.nll_examples = cfg.get_int("eval.nll_examples");
        ec.sample_count = cfg.get_int("eval.samples");
        ec.order_sens_queries = cfg.get_int("eval.order_sens");
        ec.seed = static_cast<uint64_t>(cfg.get_i64("eval.seed"));

        LoadedModel lm;
        EvalModel subject;
        if (stub == "uniform") {
            subject = eval_model_uniform(spec.vocab, spec);
        } else if (stub == "oracle") {
            subject = eval_model_from_table(spec);
        } else {
            lm = load_trained(cfg, out_root, force);
            subject = eval_model_from_grid_model(*lm.model, sampling_from(cfg));
        }
        if (spec.enumerable()) {
            const EvalReport er = eval_suite(subject, spec, ec);
            report["tv_mean"] = er.tv_mean;
            report["tv_p95"] = er.tv_p95;
            report["nll"] = er.nll;
            report["marginal_tv"] = er.marginal_tv;
            report["order_sens"] = er.order_sens;
        } else {
            // too large to enumerate: held-out NLL only
            Corpus held = sample_corpus(spec, ec.nll_examples, ec.seed ^ 0x68656c64ULL, "heldout");
            if (stub == "none") {
                report["nll"] = heldout_nll(*lm.model, held.examples,
                                            objective_from_string(cfg.get("objective.tag")), ec.seed);
            } else {
                double nll = 0.0;
                int64_t terms = 0;
                Rng r(ec.seed);
                for (const Example& ex : held.examples) {
                    Revealed rev;
                    std::vector<int> order(static_cast<size_t>(spec.cells()));
                    for (int i = 0; i < spec.cells(); ++i) order[static_cast<size_t>(i)] = i;
                    r.shuffle(order);
                    rev.cells.push_back(order[0]);
                    rev.values.push_back(ex.grid.ids[static_cast<size_t>(order[0])]);
                    for (int t = 1; t < spec.cells(); ++t) {
                        const int cell = order[static_cast<size_t>(t)];
                        const auto p = subject.conditional(rev, cell);
                        nll -= std::log(std::max(p[static_cast<size_t>(ex.grid.ids[static_cast<size_t>(cell)])], 1e-300));
                        ++terms;
                        rev.cells.push_back(cell);
                        rev.values.push_back(ex.grid.ids[static_cast<size_t>(cell)]);
                    }
                }
                report["nll"] = nll / static_cast<double>(terms);
            }
        }
    } else {
        // image run: tokenizer floors and generated-sample quality
        LoadedModel lm = load_trained(cfg, out_root, force);
        const ReconstructionReport train_rep =
            reconstruction_report(lm.br.train_images, lm.br.tokenizer);
        const ReconstructionReport held_rep =
            reconstruction_report(lm.br.heldout_images, lm.br.tokenizer);
        report["recon_mse_train"] = train_rep.mse_mean;
        report["recon_mse_heldout"] = held_rep.mse_mean;
        report["recon_psnr_train"] = train_rep.psnr_mean;
        const int samples = std::max(1, cfg.get_int("eval.samples"));
        const SamplingConfig sc = sampling_from(cfg);
        Rng root(static_cast<uint64_t>(cfg.get_i64("eval.seed")));
        std::vector<Image> generated;
        const int classes = std::max(1, lm.br.model_cfg.class_count);
        for (int i = 0; i < samples; ++i) {
            const TokenGrid g =
                generate_grid(*lm.model, i % classes, sc, root.split(static_cast<uint64_t>(i)).key());
            generated.push_back(lm.br.tokenizer.decode(g));
        }
        report["sample_mse"] = nearest_image_mse(generated, lm.br.train_images);
        if (lm.br.model_cfg.law == OutputLaw::kCategorical) {
            report["nll"] = heldout_nll(*lm.model, lm.br.heldout.examples,
                                        objective_from_string(cfg.get("objective.tag")),
                                        static_cast<uint64_t>(cfg.get_i64("eval.seed")));
        }
    }
    std::ofstream rep((fs::path(dir) / "report.json").string(), std::ios::trunc);
    rep << report.dump(2) << "\n";
}

std::vector<int> default_reference_cells(int cells) {
    // Fig-style reference tokens 87/138/203 on a 16x16 grid, rescaled
    std::vector<int> out;
    for (int ref : {87, 138, 203}) {
        out.push_back(static_cast<int>(static_cast<int64_t>(ref) * cells / 256));
    }
    return out;
}

void run_viz(const RunConfig& cfg_in, const std::string& out_root, bool force) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    LoadedModel lm = load_trained(cfg, out_root, force);
    const std::string dir = artifact_dir(cfg, out_root, "viz");
    fs::create_directories(dir);

    const Example& ex = lm.br.heldout.examples.empty() ? lm.br.train.examples.front()
                                                       : lm.br.heldout.examples.front();
    const ModelConfig& mc = lm.br.model_cfg;

    std::vector<int> cells;
    if (!cfg.get("viz.cells").empty()) {
        std::istringstream in(cfg.get("viz.cells"));
        std::string tok;
        while (std::getline(in, tok, ',')) cells.push_back(std::stoi(tok));
    } else {
        cells = default_reference_cells(mc.cells());
    }

    // token embeddings: tokenizer vectors when present, else the learned table
    Tensor emb;
    if (lm.br.has_tokenizer) {
        emb = token_embeddings_for_grid(ex.grid, lm.br.tokenizer);
    } else {
        const ParamStore& store = lm.model->params();
        const Tensor& table = store.value(store.find("embed.token"));
        emb.resize_to(ex.grid.cells(), table.cols);
        for (int i = 0; i < ex.grid.cells(); ++i) {
            const int32_t id = ex.grid.ids[static_cast<size_t>(i)];
            std::copy(table.row(id), table.row(id) + table.cols, emb.row(i));
        }
    }

    for (int ref : cells) {
        if (ref < 0 || ref >= mc.cells()) throw ConfigError("viz: reference cell out of range");
        const Tensor sim = cosine_similarity_map(emb, ref, mc.grid_h, mc.grid_w);
        const Tensor att = attention_map(*lm.model, ex.grid, ref, ex.class_id);
        write_scaled_pgm(sim, (fs::path(dir) / ("sim_" + std::to_string(ref) + ".pgm")).string());
        write_scaled_pgm(att, (fs::path(dir) / ("attn_" + std::to_string(ref) + ".pgm")).string());
    }
    std::ofstream meta((fs::path(dir) / "viz.json").string(), std::ios::trunc);
    meta << json{{"config_hash", cfg.hash_hex_str()}, {"cells", cells}}.dump(2) << "\n";
}

void run_ablate(const RunConfig& cfg_in, const std::string& out_root) {
    RunConfig base = cfg_in;
    base.resolve();
    const std::string axis_key = base.get("ablate.axis_key");
    if (axis_key.empty()) throw ConfigError("ablate: ablate.axis_key is required");
    std::vector<std::string> values;
    {
        std::istringstream in(base.get("ablate.axis_values"));
        std::string tok;
        while (std::getline(in, tok, ',')) values.push_back(tok);
    }
    if (values.empty()) throw ConfigError("ablate: ablate.axis_values is required");
    std::vector<int64_t> seeds;
    {
        std::istringstream in(base.get("ablate.seeds"));
        std::string tok;
        while (std::getline(in, tok, ',')) seeds.push_back(std::stoll(tok));
    }

    const std::string dir = artifact_dir(base, out_root, "ablate");
    fs::create_directories(dir);
    std::ofstream csv((fs::path(dir) / "results.csv").string(), std::ios::trunc);
    csv << "axis_key,value,seed,config_hash,objective,w,n,budget,steps,final_loss,nll,tv_mean,status\n";

    for (const std::string& value : values) {
        for (int64_t seed : seeds) {
            RunConfig cell = cfg_in;
            cell.set(axis_key, value);
            cell.set("train.seed", std::to_string(seed));
            std::string status = "ok";
            TrainOutcome out;
            std::string hash_str = "";
            ObjectiveConfig oc;
            int n_cells = 0;
            try {
                cell.resolve();
                hash_str = cell.hash_hex_str();
                out = run_train(cell, out_root);
                BuiltRun br = build_run(cell, artifact_dir(cell, out_root, "train"));
                n_cells = br.model_cfg.cells();
                oc = objective_from(cell, n_cells);
            } catch (const std::exception& e) {
                status = std::string("error: ") + e.what();
            }
            const int64_t budget = status == "ok"
                                       ? (oc.tag == ObjectiveTag::k2d
                                              ? static_cast<int64_t>(oc.window) * oc.density
                                              : n_cells - 1)
                                       : 0;
            csv << axis_key << "," << value << "," << seed << "," << hash_str << ","
                << (status == "ok" ? to_string(oc.tag) : "") << ","
                << (status == "ok" ? std::to_string(oc.window) : "") << ","
                << (status == "ok" ? std::to_string(oc.density) : "") << "," << budget << ","
                << out.steps_done << "," << out.final_loss << "," << out.nll << "," << out.tv_mean
                << "," << status << "\n";
            csv.flush();
        }
    }
}

double nearest_image_mse(const std::vector<Image>& samples, const std::vector<Image>& corpus) {
    if (samples.empty() || corpus.empty()) throw ConfigError("nearest_image_mse: empty inputs");
    double total = 0.0;
    for (const Image& s : samples) {
        double best = std::numeric_limits<double>::infinity();
        for (const Image& c : corpus) {
            if (c.pix.size() != s.pix.size()) continue;
            double mse = 0.0;
            for (size_t i = 0; i < s.pix.size(); ++i) {
                const double d = s.pix[i] - c.pix[i];
                mse += d * d;
            }
            best = std::min(best, mse / static_cast<double>(s.pix.size()));
        }
        total += best;
    }
    return total / static_cast<double>(samples.size());
}

} // namespace gridlm

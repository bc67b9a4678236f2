#pragma once

#include <memory>
#include <optional>
#include <string>

#include "gridlm/checkpoint.hpp"
#include "gridlm/config.hpp"
#include "gridlm/data.hpp"
#include "gridlm/evalsuite.hpp"

namespace gridlm {

/// Everything a run needs, assembled from a resolved RunConfig: the data
/// source (oracle spec or rendered/encoded images), the fitted tokenizer, the
/// token corpora, and the derived model configuration.
struct BuiltRun {
    RunConfig cfg;
    JointSpec oracle;
    bool has_oracle = false;
    Tokenizer tokenizer;
    bool has_tokenizer = false;
    std::vector<Image> train_images;
    std::vector<Image> heldout_images;
    Corpus train;
    Corpus heldout;
    ModelConfig model_cfg;
};

BuiltRun build_run(const RunConfig& cfg, const std::string& run_dir);

/// Per-run artifact directory: <out_root>/<config-hash>/<command>. A pure
/// function of the hash, so reruns overwrite identically.
std::string artifact_dir(const RunConfig& cfg, const std::string& out_root,
                         const std::string& command);

struct TrainOutcome {
    int64_t steps_done = 0;
    std::string checkpoint_path;
    double final_loss = 0.0;
    double nll = std::numeric_limits<double>::quiet_NaN();
    double tv_mean = std::numeric_limits<double>::quiet_NaN();
};

/// Runs (or resumes) training to the configured step budget; writes periodic
/// checkpoints, a JSONL metrics log, and a final report with held-out
/// metrics. Continuation after an interruption is bit-exact. `stop_at_step`
/// (when >= 0) ends the process early after saving a checkpoint, simulating
/// an interruption under the same config hash.
TrainOutcome run_train(const RunConfig& cfg, const std::string& out_root,
                       int64_t stop_at_step = -1);

/// Generation from a trained checkpoint into grid dumps plus decoded images;
/// requires the tokenizer embedded in the checkpoint.
void run_sample(const RunConfig& cfg, const std::string& out_root, int sample_count,
                std::optional<uint64_t> seed, int class_id, bool force);

/// Ground-truth evaluation: the oracle eval suite (enumerable specs), NLL-only
/// for larger oracle tasks, or sample-quality metrics for image runs.
void run_eval(const RunConfig& cfg, const std::string& out_root, bool force);

/// Cosine-similarity and final-layer attention map exports.
void run_viz(const RunConfig& cfg, const std::string& out_root, bool force);

/// Ablation harness: one axis key, a list of values, a list of seeds; each
/// cell trains and evaluates independently; failures are recorded and the
/// harness continues. Emits results.csv.
void run_ablate(const RunConfig& cfg, const std::string& out_root);

// ---- checkpoint glue ----

Checkpoint make_checkpoint(const GridModel& model, const AdamW& opt, const Tokenizer* tok,
                           uint64_t config_hash, uint64_t train_seed);
void restore_from_checkpoint(const Checkpoint& ck, GridModel& model, AdamW& opt);
Tokenizer tokenizer_from_checkpoint(const Checkpoint& ck);
bool checkpoint_has_tokenizer(const Checkpoint& ck);

/// Mean over `samples` of the squared distance to the nearest corpus image.
double nearest_image_mse(const std::vector<Image>& samples, const std::vector<Image>& corpus);

/// Paper reference cells {87, 138, 203} on a 16x16 grid, rescaled to N cells.
std::vector<int> default_reference_cells(int cells);

} // namespace gridlm

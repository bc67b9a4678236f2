// gridlm: train / ablate / sample / eval / viz over 2D token-grid models.
// Exit codes: 0 ok, 2 configuration error, 3 numeric failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gridlm/errors.hpp"
#include "gridlm/trainer.hpp"

using namespace gridlm;

int main(int argc, char** argv) {
    CLI::App app{"2D-grid autoregressive model toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs";
    std::optional<uint64_t> seed;
    bool force = false;
    int sample_count = 0;
    int class_id = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file")->required();
        cmd->add_option("--out", out_dir, "artifact root directory");
        cmd->add_option("--seed", seed, "seed override");
        cmd->add_flag("--force", force, "ignore checkpoint/config hash mismatches");
    };

    CLI::App* train = app.add_subcommand("train", "train to the configured step budget");
    add_common(train);
    CLI::App* ablate = app.add_subcommand("ablate", "run an ablation axis and emit results.csv");
    add_common(ablate);
    CLI::App* sample = app.add_subcommand("sample", "generate grids and decoded images");
    add_common(sample);
    sample->add_option("--count", sample_count, "number of samples");
    sample->add_option("--class", class_id, "class id (-1 cycles)");
    CLI::App* eval = app.add_subcommand("eval", "evaluate against the oracle / sample quality");
    add_common(eval);
    CLI::App* viz = app.add_subcommand("viz", "similarity and attention map exports");
    add_common(viz);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = RunConfig::from_file(config_path);
        if (seed.has_value() && !app.got_subcommand(sample)) {
            cfg.set("train.seed", std::to_string(*seed));
        }
        cfg.resolve();
        if (app.got_subcommand(train)) {
            const TrainOutcome out = run_train(cfg, out_dir);
            std::cout << "trained " << out.steps_done << " steps; checkpoint at "
                      << out.checkpoint_path << "\n";
            if (std::isfinite(out.nll)) std::cout << "heldout nll " << out.nll << "\n";
            if (std::isfinite(out.tv_mean)) std::cout << "tv_mean " << out.tv_mean << "\n";
        } else if (app.got_subcommand(ablate)) {
            run_ablate(cfg, out_dir);
            std::cout << "ablation table at " << artifact_dir(cfg, out_dir, "ablate")
                      << "/results.csv\n";
        } else if (app.got_subcommand(sample)) {
            run_sample(cfg, out_dir, sample_count, seed, class_id, force);
            std::cout << "samples at " << artifact_dir(cfg, out_dir, "sample") << "\n";
        } else if (app.got_subcommand(eval)) {
            run_eval(cfg, out_dir, force);
            std::cout << "report at " << artifact_dir(cfg, out_dir, "eval") << "/report.json\n";
        } else if (app.got_subcommand(viz)) {
            run_viz(cfg, out_dir, force);
            std::cout << "maps at " << artifact_dir(cfg, out_dir, "viz") << "\n";
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

// Command-line harness: config-driven training, LoRA fine-tuning, sampling,
// evaluation, and grid sweeps with persisted CSV/JSON artifacts.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "autolora/config.hpp"
#include "autolora/pipeline.hpp"
#include "autolora/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitDivergence = 4;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int jobs = 1;
    bool resume = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Experiment config file (JSON)");
    cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set schedule.T=100");
    cmd->add_option("--out", args.out_dir, "Output directory root (overrides output_dir)");
    cmd->add_option("--jobs", args.jobs, "Concurrent grid cells for sweep")->check(CLI::PositiveNumber);
    cmd->add_flag("--resume", args.resume, "Skip grid cells that already completed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AutoLoRA guided-diffusion toy laboratory"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* train = app.add_subcommand("train", "Train the base conditional denoiser");
    CLI::App* finetune = app.add_subcommand("finetune", "LoRA fine-tune on the narrow subset");
    CLI::App* sample = app.add_subcommand("sample", "Generate samples under the configured guidance");
    CLI::App* eval = app.add_subcommand("eval", "Score previously generated samples");
    CLI::App* sweep = app.add_subcommand("sweep", "Run the full guidance/LoRA-scale grid");
    for (CLI::App* cmd : {train, finetune, sample, eval, sweep}) add_common(cmd, args);

    CLI11_PARSE(app, argc, argv);

    try {
        const autolora::ExperimentConfig cfg =
            autolora::load_config(args.config_path, args.overrides, args.out_dir);
        if (train->parsed()) autolora::pipeline::cmd_train(cfg);
        if (finetune->parsed()) autolora::pipeline::cmd_finetune(cfg);
        if (sample->parsed()) autolora::pipeline::cmd_sample(cfg);
        if (eval->parsed()) autolora::pipeline::cmd_eval(cfg);
        if (sweep->parsed()) autolora::pipeline::cmd_sweep(cfg, args.jobs, args.resume);
    } catch (const autolora::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfigError;
    } catch (const autolora::MissingArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return kExitMissingArtifact;
    } catch (const autolora::DivergenceError& e) {
        std::fprintf(stderr, "divergence abort: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitOk;
}

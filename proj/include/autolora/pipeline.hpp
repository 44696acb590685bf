#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "autolora/config.hpp"
#include "autolora/dataset.hpp"
#include "autolora/denoiser.hpp"
#include "autolora/guidance.hpp"
#include "autolora/io.hpp"
#include "autolora/lora.hpp"
#include "autolora/metrics.hpp"
#include "autolora/schedule.hpp"
#include "autolora/train.hpp"

namespace autolora::pipeline {

namespace fs = std::filesystem;

struct RunPaths {
    fs::path run;
    fs::path checkpoints;
    fs::path samples;
    fs::path reports;
    fs::path plotdata;

    fs::path base_checkpoint() const { return checkpoints / "base.json"; }
    fs::path adapter_checkpoint() const { return checkpoints / "adapter.json"; }
};

inline RunPaths make_paths(const ExperimentConfig& cfg) {
    RunPaths p;
    p.run = fs::path(cfg.output_dir) / cfg.run_id();
    p.checkpoints = p.run / "checkpoints";
    p.samples = p.run / "samples";
    p.reports = p.run / "reports";
    p.plotdata = p.run / "plotdata";
    return p;
}

inline NoiseSchedule build_schedule(const ExperimentConfig& cfg) {
    return make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
}

inline Dataset build_dataset(const ExperimentConfig& cfg) {
    return make_toy_dataset(cfg.data_seed, cfg.K, cfg.modes_per_label, cfg.n_per_mode, cfg.spread);
}

inline Dataset build_subset(const ExperimentConfig& cfg, const Dataset& data) {
    return make_lora_subset(data, cfg.lora_target_components, cfg.n_examples, cfg.subset_seed);
}

inline DenoiserParams build_initial_params(const ExperimentConfig& cfg) {
    return init_params(cfg.init_seed, cfg.data_dim, cfg.hidden, cfg.K, cfg.time_embed_dim,
                       cfg.cond_embed_dim);
}

inline FeatureExtractor build_extractor(const ExperimentConfig& cfg, const Dataset& data) {
    if (cfg.extractor == "identity") return FeatureExtractor::identity();
    if (cfg.extractor == "standardized") return FeatureExtractor::standardized(data.points);
    throw ConfigError("unknown eval.extractor: " + cfg.extractor);
}

inline DenoiserParams load_base_checkpoint(const RunPaths& paths) {
    if (!fs::exists(paths.base_checkpoint()))
        throw MissingArtifactError("missing base checkpoint: " + paths.base_checkpoint().string());
    return io::params_from_json(io::load_checkpoint(paths.base_checkpoint()));
}

inline std::string base_checkpoint_hash(const RunPaths& paths) {
    return io::hex64(io::fnv1a64(io::read_file(paths.base_checkpoint())));
}

inline LoraAdapter load_adapter_checkpoint(const RunPaths& paths) {
    if (!fs::exists(paths.adapter_checkpoint()))
        throw MissingArtifactError("missing adapter checkpoint: " +
                                   paths.adapter_checkpoint().string());
    const json j = io::load_checkpoint(paths.adapter_checkpoint());
    if (j.contains("base_checkpoint_hash")) {
        const std::string recorded = j["base_checkpoint_hash"].get<std::string>();
        const std::string actual = base_checkpoint_hash(paths);
        if (recorded != actual)
            throw MissingArtifactError("adapter checkpoint was fine-tuned against a different base "
                                       "checkpoint (recorded hash " +
                                       recorded + ", found " + actual + ")");
    }
    return io::adapter_from_json(j);
}

inline std::string loss_curve_csv(const TrainResult& result) {
    io::CsvWriter csv({"step", "loss"});
    for (std::size_t i = 0; i < result.losses.size(); ++i)
        csv.row({std::to_string(i), io::format_double(result.losses[i])});
    return csv.str();
}

// train ------------------------------------------------------------------------

inline void cmd_train(const ExperimentConfig& cfg) {
    const RunPaths paths = make_paths(cfg);
    const NoiseSchedule sched = build_schedule(cfg);
    const Dataset data = build_dataset(cfg);

    DenoiserParams params = build_initial_params(cfg);
    const TrainResult result = train_base(params, data, cfg.train_base_cfg, sched);

    io::save_checkpoint(paths.base_checkpoint(), io::params_to_json(params));
    io::write_file(paths.reports / "base_loss.csv", loss_curve_csv(result));
}

// finetune ----------------------------------------------------------------------

inline void cmd_finetune(const ExperimentConfig& cfg) {
    const RunPaths paths = make_paths(cfg);
    const NoiseSchedule sched = build_schedule(cfg);
    const Dataset data = build_dataset(cfg);
    const Dataset subset = build_subset(cfg, data);

    const DenoiserParams base = load_base_checkpoint(paths);
    LoraAdapter adapter = init_adapter(cfg.train_lora_cfg.seed, base, cfg.lora_rank,
                                       lora_target_layers(base, cfg.lora_rank));
    adapter.alpha = cfg.lora_alpha;

    // Probe batch: a fresh adapter must start at exactly the base loss.
    {
        Rng probe_rng(cfg.train_lora_cfg.seed ^ 0x9e3779b97f4a7c15ull);
        const int B = static_cast<int>(std::min<Eigen::Index>(subset.size(), 32));
        Eigen::MatrixXd x0 = subset.points.leftCols(B);
        std::vector<int> labels(subset.labels.begin(), subset.labels.begin() + B);
        const BatchDraws draws = draw_batch(probe_rng, B, cfg.data_dim, sched.T,
                                            cfg.train_lora_cfg.p_uncond);
        const double base_loss = ddpm_loss_base(base, x0, labels, sched, draws, false).loss;
        const double adapter_loss =
            ddpm_loss_lora(base, adapter, 1.0, x0, labels, sched, draws, false).loss;
        json probe{{"probe_base_loss", base_loss}, {"probe_adapter_step0_loss", adapter_loss}};
        io::write_file(paths.reports / "finetune_probe.json", probe.dump(2) + "\n");
    }

    const TrainResult result =
        train_lora(base, adapter, cfg.lora_train_scale, subset, cfg.train_lora_cfg, sched);

    io::save_checkpoint(paths.adapter_checkpoint(),
                        io::adapter_to_json(adapter, base_checkpoint_hash(paths)));
    io::write_file(paths.reports / "lora_loss.csv", loss_curve_csv(result));
}

// sample -------------------------------------------------------------------------

inline json guidance_config_snapshot(const GuidanceConfig& g, std::uint64_t seed_base) {
    return json{{"mode", to_string(g.mode)}, {"w", g.w},         {"w1", g.w1},
                {"w2", g.w2},                {"gamma", g.gamma}, {"lora_scale", g.lora_scale},
                {"steps", g.steps},          {"seed_base", seed_base}};
}

inline GuidanceConfig guidance_config_from_snapshot(const json& j) {
    GuidanceConfig g;
    g.mode = guidance_mode_from_string(j.at("mode").get<std::string>());
    g.w = j.at("w").get<double>();
    g.w1 = j.at("w1").get<double>();
    g.w2 = j.at("w2").get<double>();
    g.gamma = j.at("gamma").get<double>();
    g.lora_scale = j.at("lora_scale").get<double>();
    g.steps = j.at("steps").get<int>();
    return g;
}

inline bool mode_uses_adapter(GuidanceMode mode) {
    return mode == GuidanceMode::AutoLoraPlain || mode == GuidanceMode::AutoLoraCfg;
}

// Samples n_samples_per_cell points for every condition label. Seed k uses
// seed_base + k, so every mode and every label shares initial noise at equal
// seed index.
inline std::string samples_csv(const ExperimentConfig& cfg, const DenoiserParams& base,
                               const LoraAdapter* adapter, const NoiseSchedule& sched,
                               const GuidanceConfig& g) {
    std::vector<std::string> header{"seed", "condition"};
    for (int d = 0; d < cfg.data_dim; ++d) header.push_back("dim_" + std::to_string(d));
    io::CsvWriter csv(header);
    for (int y = 0; y < cfg.K; ++y) {
        const Eigen::MatrixXd X =
            sample_batch(base, adapter, sched, g, Condition(y), cfg.seed_base, cfg.n_samples_per_cell);
        for (int k = 0; k < cfg.n_samples_per_cell; ++k) {
            std::vector<std::string> row{std::to_string(cfg.seed_base + k), std::to_string(y)};
            for (int d = 0; d < cfg.data_dim; ++d) row.push_back(io::format_double(X(d, k)));
            csv.row(row);
        }
    }
    return csv.str();
}

inline fs::path samples_path(const RunPaths& paths, const GuidanceConfig& g) {
    return paths.samples / ("samples_" + to_string(g.mode) + ".csv");
}

inline void cmd_sample(const ExperimentConfig& cfg) {
    const RunPaths paths = make_paths(cfg);
    const NoiseSchedule sched = build_schedule(cfg);
    const DenoiserParams base = load_base_checkpoint(paths);

    LoraAdapter adapter;
    const LoraAdapter* adapter_ptr = nullptr;
    if (fs::exists(paths.adapter_checkpoint())) {
        adapter = load_adapter_checkpoint(paths);
        adapter_ptr = &adapter;
    } else if (mode_uses_adapter(cfg.guidance.mode)) {
        throw MissingArtifactError("guidance mode " + to_string(cfg.guidance.mode) +
                                   " requires an adapter checkpoint");
    }

    const fs::path out = samples_path(paths, cfg.guidance);
    io::write_file(out, samples_csv(cfg, base, adapter_ptr, sched, cfg.guidance));
    io::write_file(fs::path(out).replace_extension(".json"),
                   guidance_config_snapshot(cfg.guidance, cfg.seed_base).dump(2) + "\n");
}

// eval ---------------------------------------------------------------------------

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols{"lora_scale", "mode",    "w",       "w1",
                                               "w2",         "gamma",   "diversity", "cps",
                                               "pc",         "sa",      "div_cps", "div_pc",
                                               "div_sa",     "n_samples"};
    return cols;
}

inline std::vector<std::string> report_row(const ScoreReport& r) {
    return {io::format_double(r.config.lora_scale),
            to_string(r.config.mode),
            io::format_double(r.config.w),
            io::format_double(r.config.w1),
            io::format_double(r.config.w2),
            io::format_double(r.config.gamma),
            io::format_double(r.diversity),
            io::format_double(r.cps),
            io::format_double(r.pc),
            io::format_double(r.sa),
            io::format_double(r.div_cps),
            io::format_double(r.div_pc),
            io::format_double(r.div_sa),
            std::to_string(r.n_samples)};
}

inline void cmd_eval(const ExperimentConfig& cfg) {
    const RunPaths paths = make_paths(cfg);
    const Dataset data = build_dataset(cfg);
    const Dataset subset = build_subset(cfg, data);
    const FeatureExtractor extractor = build_extractor(cfg, data);

    const fs::path in = samples_path(paths, cfg.guidance);
    if (!fs::exists(in)) throw MissingArtifactError("missing samples file: " + in.string());
    const io::CsvTable table = io::read_csv(io::read_file(in));
    const GuidanceConfig snapshot = guidance_config_from_snapshot(
        json::parse(io::read_file(fs::path(in).replace_extension(".json"))));

    io::CsvWriter csv(report_columns());
    for (int y = 0; y < cfg.K; ++y) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(table.rows.size()); ++i)
            if (std::stoi(table.rows[i][1]) == y) rows.push_back(i);
        if (rows.empty()) continue;
        Eigen::MatrixXd X(cfg.data_dim, static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (int d = 0; d < cfg.data_dim; ++d)
                X(d, static_cast<Eigen::Index>(i)) = std::stod(table.rows[rows[i]][2 + d]);
        const ScoreReport r =
            build_report(X, extractor, data.spec, subset.spec, Condition(y), snapshot);
        csv.row(report_row(r));
    }
    io::write_file(paths.reports / ("report_" + to_string(snapshot.mode) + ".csv"), csv.str());
}

// sweep --------------------------------------------------------------------------

struct SweepCell {
    int index = 0;
    std::string condition;
    GuidanceConfig config;
    double x = 0.0;          // grid coordinate for plot data
    std::string grid;        // "lora_scale" or "cfg_scale"
};

inline GuidanceConfig condition_guidance(const ExperimentConfig& cfg, const std::string& condition,
                                         double lora_scale, double w) {
    GuidanceConfig g = cfg.guidance;
    g.lora_scale = lora_scale;
    g.steps = cfg.T;
    if (condition == "LORA") {
        g.mode = GuidanceMode::Vanilla;
    } else if (condition == "AUTOLORA") {
        g.mode = GuidanceMode::AutoLoraPlain;
    } else if (condition == "LORA_CFG") {
        g.mode = GuidanceMode::Cfg;
        g.w = w;
    } else if (condition == "AUTOLORA_CFG") {
        g.mode = GuidanceMode::AutoLoraCfg;
        g.w1 = w;
        g.w2 = w;
    } else {
        throw ConfigError("unknown sweep condition: " + condition);
    }
    return g;
}

inline std::vector<SweepCell> sweep_grid(const ExperimentConfig& cfg) {
    std::vector<SweepCell> cells;
    int index = 0;
    for (double scale : cfg.sweep_lora_scales)
        for (const auto& cond : cfg.sweep_conditions) {
            SweepCell c;
            c.index = index++;
            c.condition = cond;
            c.config = condition_guidance(cfg, cond, scale, cfg.guidance.w);
            c.x = scale;
            c.grid = "lora_scale";
            cells.push_back(std::move(c));
        }
    // Optional CFG-scale curve at the default LoRA scale.
    for (double w : cfg.sweep_cfg_scales)
        for (const std::string cond : {"LORA_CFG", "AUTOLORA_CFG"}) {
            SweepCell c;
            c.index = index++;
            c.condition = cond;
            c.config = condition_guidance(cfg, cond, cfg.guidance.lora_scale, w);
            c.x = w;
            c.grid = "cfg_scale";
            cells.push_back(std::move(c));
        }
    return cells;
}

inline ScoreReport run_cell(const ExperimentConfig& cfg, const DenoiserParams& base,
                            const LoraAdapter& adapter, const NoiseSchedule& sched,
                            const Dataset& data, const Dataset& subset,
                            const FeatureExtractor& extractor, const GuidanceConfig& g) {
    const Condition y(cfg.eval_label);
    const Eigen::MatrixXd X =
        sample_batch(base, &adapter, sched, g, y, cfg.seed_base, cfg.n_samples_per_cell);
    return build_report(X, extractor, data.spec, subset.spec, y, g);
}

// Runs the full grid. Cells execute concurrently up to `jobs`; per-cell rows
// land in their own files, and the final CSV is assembled in grid order so
// output bytes do not depend on scheduling. With `resume`, cells whose
// completion marker exists are not recomputed.
inline void cmd_sweep(const ExperimentConfig& cfg, int jobs = 1, bool resume = false) {
    const RunPaths paths = make_paths(cfg);
    const NoiseSchedule sched = build_schedule(cfg);
    const Dataset data = build_dataset(cfg);
    const Dataset subset = build_subset(cfg, data);
    const FeatureExtractor extractor = build_extractor(cfg, data);
    const DenoiserParams base = load_base_checkpoint(paths);
    const LoraAdapter adapter = load_adapter_checkpoint(paths);

    std::vector<SweepCell> cells = sweep_grid(cfg);
    const std::size_t limit = cfg.sweep_max_cells > 0
                                  ? std::min<std::size_t>(cells.size(), cfg.sweep_max_cells)
                                  : cells.size();
    const fs::path cell_dir = paths.reports / "cells";
    fs::create_directories(cell_dir);

    auto cell_file = [&](const SweepCell& c) {
        return cell_dir / ("cell_" + std::to_string(c.index) + ".csv");
    };
    auto marker_file = [&](const SweepCell& c) {
        return cell_dir / ("cell_" + std::to_string(c.index) + ".done");
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= limit) return;
            const SweepCell& c = cells[i];
            if (resume && fs::exists(marker_file(c)) && fs::exists(cell_file(c))) continue;
            const ScoreReport r = run_cell(cfg, base, adapter, sched, data, subset, extractor, c.config);
            io::CsvWriter csv(report_columns());
            csv.row(report_row(r));
            io::write_file(cell_file(c), csv.str());
            io::write_file(marker_file(c), "done\n");
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    if (limit < cells.size()) return;  // partial run; resume later

    // Assemble in grid order.
    io::CsvWriter grid_csv(report_columns());
    io::CsvWriter plot_csv({"x", "series", "value"});
    for (const SweepCell& c : cells) {
        const io::CsvTable t = io::read_csv(io::read_file(cell_file(c)));
        if (t.rows.size() != 1) throw std::runtime_error("corrupt cell file: " + cell_file(c).string());
        grid_csv.row(t.rows[0]);
        const auto& cols = report_columns();
        for (const char* metric : {"diversity", "cps", "pc", "sa", "div_cps", "div_pc", "div_sa"}) {
            const auto it = std::find(cols.begin(), cols.end(), metric);
            const auto idx = static_cast<std::size_t>(it - cols.begin());
            plot_csv.row({io::format_double(c.x), c.grid + "." + c.condition + "." + metric,
                          t.rows[0][idx]});
        }
    }
    io::write_file(paths.reports / "sweep_report.csv", grid_csv.str());
    io::write_file(paths.plotdata / "sweep_long.csv", plot_csv.str());
}

}  // namespace autolora::pipeline

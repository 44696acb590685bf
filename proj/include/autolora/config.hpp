#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "autolora/guidance.hpp"
#include "autolora/io.hpp"
#include "autolora/train.hpp"

namespace autolora {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class MissingArtifactError : public std::runtime_error {
  public:
    explicit MissingArtifactError(const std::string& what) : std::runtime_error(what) {}
};

inline json default_config_tree() {
    return json{
        {"schedule", {{"T", 200}, {"beta_start", 1e-4}, {"beta_end", 0.05}}},
        {"data",
         {{"K", 4},
          {"modes_per_label", 4},
          {"n_per_mode", 500},
          {"spread", 0.5},
          {"seed", 1234},
          // Two opposite modes of label 0: a collapse target that keeps
          // pairwise-cosine diversity measurable while presence climbs.
          {"lora_target_components", {0, 8}},
          {"n_examples", 32},
          {"subset_seed", 99}}},
        {"model",
         {{"data_dim", 2},
          {"hidden", {128, 128}},
          {"time_embed_dim", 16},
          {"cond_embed_dim", 8},
          {"init_seed", 7}}},
        {"train_base",
         {{"steps", 5000}, {"batch_size", 128}, {"learning_rate", 1e-3}, {"p_uncond", 0.1}, {"seed", 1}}},
        {"train_lora",
         {{"steps", 3000},
          {"batch_size", 32},
          {"learning_rate", 1e-3},
          {"p_uncond", 0.1},
          {"seed", 2},
          {"rank", 4},
          {"alpha", 1.0},
          // LoRA scale the fine-tune runs at. Training above the sweep grid
          // means every swept scale interpolates the trained operating point.
          {"train_scale", 2.5}}},
        {"guidance",
         {{"mode", "AUTOLORA_CFG"},
          {"w", 5.0},
          {"w1", 5.0},
          {"w2", 5.0},
          {"gamma", 1.5},
          {"lora_scale", 1.0}}},
        {"sweep",
         {{"lora_scales", {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3}},
          {"cfg_scales", json::array()},
          {"gammas", {1.5}},
          {"conditions", {"LORA", "AUTOLORA", "LORA_CFG", "AUTOLORA_CFG"}},
          {"max_cells", 0}}},
        {"seeds", {{"seed_base", 1000}, {"n_samples_per_cell", 64}}},
        {"eval", {{"label", 0}, {"extractor", "identity"}}},
        {"vlm", {{"retries", 3}}},
        {"output_dir", "out"}};
}

namespace detail {

inline void check_keys(const json& user, const json& defaults, const std::string& prefix) {
    if (!user.is_object()) return;
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!defaults.is_object() || !defaults.contains(it.key()))
            throw ConfigError("unknown config key: " + path);
        if (it.value().is_object()) check_keys(it.value(), defaults.at(it.key()), path);
    }
}

inline void deep_merge(json& base, const json& overlay) {
    if (!overlay.is_object()) {
        base = overlay;
        return;
    }
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
            deep_merge(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

inline json* walk_path(json& tree, const std::string& dotted, std::string* leaf) {
    json* node = &tree;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot - start);
        if (dot == std::string::npos) {
            *leaf = key;
            return node;
        }
        if (!node->contains(key)) throw ConfigError("unknown config key: " + dotted);
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace detail

struct ExperimentConfig {
    json tree;

    // schedule
    int T = 200;
    double beta_start = 1e-4, beta_end = 0.05;
    // data
    int K = 4, modes_per_label = 4, n_per_mode = 500;
    double spread = 0.25;
    std::uint64_t data_seed = 1234, subset_seed = 99;
    std::vector<int> lora_target_components;
    int n_examples = 32;
    // model
    int data_dim = 2, time_embed_dim = 16, cond_embed_dim = 8;
    std::vector<int> hidden;
    std::uint64_t init_seed = 7;
    // training
    TrainConfig train_base_cfg, train_lora_cfg;
    int lora_rank = 4;
    double lora_alpha = 1.0;
    double lora_train_scale = 2.5;
    // guidance defaults
    GuidanceConfig guidance;
    // sweep
    std::vector<double> sweep_lora_scales, sweep_cfg_scales, sweep_gammas;
    std::vector<std::string> sweep_conditions;
    int sweep_max_cells = 0;
    // seeds
    std::uint64_t seed_base = 1000;
    int n_samples_per_cell = 64;
    // eval
    int eval_label = 0;
    std::string extractor = "identity";
    // vlm
    int vlm_retries = 3;
    std::string output_dir = "out";

    // Hash of the resolved config, excluding keys that do not affect results:
    // the output location and the sweep execution cap (used only to stop a
    // run early so it can be resumed under the same identity).
    std::string run_id() const {
        json id_tree = tree;
        id_tree.erase("output_dir");
        if (id_tree.contains("sweep")) id_tree["sweep"].erase("max_cells");
        return io::hex64(io::fnv1a64(id_tree.dump())).substr(0, 12);
    }
};

inline ExperimentConfig parse_config_tree(json tree) {
    ExperimentConfig c;
    c.tree = tree;
    try {
        const auto& s = tree.at("schedule");
        c.T = s.at("T").get<int>();
        c.beta_start = s.at("beta_start").get<double>();
        c.beta_end = s.at("beta_end").get<double>();

        const auto& d = tree.at("data");
        c.K = d.at("K").get<int>();
        c.modes_per_label = d.at("modes_per_label").get<int>();
        c.n_per_mode = d.at("n_per_mode").get<int>();
        c.spread = d.at("spread").get<double>();
        c.data_seed = d.at("seed").get<std::uint64_t>();
        c.lora_target_components = d.at("lora_target_components").get<std::vector<int>>();
        c.n_examples = d.at("n_examples").get<int>();
        c.subset_seed = d.at("subset_seed").get<std::uint64_t>();

        const auto& m = tree.at("model");
        c.data_dim = m.at("data_dim").get<int>();
        c.hidden = m.at("hidden").get<std::vector<int>>();
        c.time_embed_dim = m.at("time_embed_dim").get<int>();
        c.cond_embed_dim = m.at("cond_embed_dim").get<int>();
        c.init_seed = m.at("init_seed").get<std::uint64_t>();

        auto parse_train = [](const json& t, TrainMode mode) {
            TrainConfig tc;
            tc.steps = t.at("steps").get<int>();
            tc.batch_size = t.at("batch_size").get<int>();
            tc.learning_rate = t.at("learning_rate").get<double>();
            tc.p_uncond = t.at("p_uncond").get<double>();
            tc.seed = t.at("seed").get<std::uint64_t>();
            tc.mode = mode;
            return tc;
        };
        c.train_base_cfg = parse_train(tree.at("train_base"), TrainMode::Base);
        c.train_lora_cfg = parse_train(tree.at("train_lora"), TrainMode::LoraFinetune);
        c.lora_rank = tree.at("train_lora").at("rank").get<int>();
        c.lora_alpha = tree.at("train_lora").at("alpha").get<double>();
        c.lora_train_scale = tree.at("train_lora").at("train_scale").get<double>();

        const auto& g = tree.at("guidance");
        c.guidance.mode = guidance_mode_from_string(g.at("mode").get<std::string>());
        c.guidance.w = g.at("w").get<double>();
        c.guidance.w1 = g.at("w1").get<double>();
        c.guidance.w2 = g.at("w2").get<double>();
        c.guidance.gamma = g.at("gamma").get<double>();
        c.guidance.lora_scale = g.at("lora_scale").get<double>();
        c.guidance.steps = c.T;

        const auto& sw = tree.at("sweep");
        c.sweep_lora_scales = sw.at("lora_scales").get<std::vector<double>>();
        c.sweep_cfg_scales = sw.at("cfg_scales").get<std::vector<double>>();
        c.sweep_gammas = sw.at("gammas").get<std::vector<double>>();
        c.sweep_conditions = sw.at("conditions").get<std::vector<std::string>>();
        c.sweep_max_cells = sw.at("max_cells").get<int>();

        c.seed_base = tree.at("seeds").at("seed_base").get<std::uint64_t>();
        c.n_samples_per_cell = tree.at("seeds").at("n_samples_per_cell").get<int>();

        c.eval_label = tree.at("eval").at("label").get<int>();
        c.extractor = tree.at("eval").at("extractor").get<std::string>();
        c.vlm_retries = tree.at("vlm").at("retries").get<int>();
        c.output_dir = tree.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config value: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }

    if (c.sweep_lora_scales.empty() || c.sweep_conditions.empty() || c.sweep_gammas.empty())
        throw ConfigError("sweep grids must be nonempty");
    if (c.n_samples_per_cell < 2)
        throw ConfigError("seeds.n_samples_per_cell must be >= 2 (diversity needs pairs)");
    if (c.eval_label < 0 || c.eval_label >= c.K) throw ConfigError("eval.label out of range");
    return c;
}

// Applies a `--set key=value` override; the value is parsed as JSON when
// possible, otherwise taken as a string.
inline void apply_override(json& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must have the form key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    std::string leaf;
    json* node = detail::walk_path(tree, key, &leaf);
    if (!node->contains(leaf)) throw ConfigError("unknown config key: " + key);

    const json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
    (*node)[leaf] = parsed.is_discarded() ? json(value) : parsed;
}

inline ExperimentConfig load_config(const std::string& config_path,
                                    const std::vector<std::string>& overrides,
                                    const std::string& out_override = "") {
    json tree = default_config_tree();
    if (!config_path.empty()) {
        json user;
        try {
            user = json::parse(io::read_file(config_path));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("cannot parse config file: ") + e.what());
        }
        detail::check_keys(user, tree, "");
        detail::deep_merge(tree, user);
    }
    for (const auto& o : overrides) apply_override(tree, o);
    if (!out_override.empty()) tree["output_dir"] = out_override;
    return parse_config_tree(tree);
}

}  // namespace autolora

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autolora/denoiser.hpp"
#include "autolora/lora.hpp"

namespace autolora::io {

using json = nlohmann::json;

constexpr int kCheckpointFormatVersion = 1;

// Shortest-round-trip decimal formatting (17 significant digits suffice for
// binary64).
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// checkpoints -----------------------------------------------------------------

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json values = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::move(values)}};
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    const auto& values = j.at("values");
    if (static_cast<Eigen::Index>(values.size()) != rows * cols)
        throw std::runtime_error("checkpoint matrix size mismatch");
    Eigen::MatrixXd m(rows, cols);
    Eigen::Index i = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[i++].get<double>();
    return m;
}

inline json params_to_json(const DenoiserParams& p) {
    json layers = json::array();
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        json layer = matrix_to_json(p.weights[l]);
        json bias = json::array();
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) bias.push_back(p.biases[l][i]);
        layer["bias"] = std::move(bias);
        layers.push_back(std::move(layer));
    }
    return json{{"format_version", kCheckpointFormatVersion},
                {"kind", "denoiser"},
                {"data_dim", p.data_dim},
                {"time_embed_dim", p.time_embed_dim},
                {"cond_embed_dim", p.cond_embed_dim},
                {"n_labels", p.n_labels},
                {"layers", std::move(layers)},
                {"cond_embeddings", matrix_to_json(p.cond_embeddings)}};
}

inline DenoiserParams params_from_json(const json& j) {
    if (j.at("kind").get<std::string>() != "denoiser")
        throw std::runtime_error("checkpoint is not a denoiser checkpoint");
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
        throw std::runtime_error("unsupported checkpoint format version");
    DenoiserParams p;
    p.data_dim = j.at("data_dim").get<int>();
    p.time_embed_dim = j.at("time_embed_dim").get<int>();
    p.cond_embed_dim = j.at("cond_embed_dim").get<int>();
    p.n_labels = j.at("n_labels").get<int>();
    for (const auto& layer : j.at("layers")) {
        p.weights.push_back(matrix_from_json(layer));
        const auto& bias = layer.at("bias");
        Eigen::VectorXd b(bias.size());
        for (std::size_t i = 0; i < bias.size(); ++i) b[static_cast<Eigen::Index>(i)] = bias[i].get<double>();
        p.biases.push_back(std::move(b));
    }
    p.cond_embeddings = matrix_from_json(j.at("cond_embeddings"));
    return p;
}

inline json adapter_to_json(const LoraAdapter& a, const std::string& base_checkpoint_hash = "") {
    json targets = json::array();
    for (const auto& t : a.targets)
        targets.push_back(json{{"layer", t.layer}, {"a", matrix_to_json(t.A)}, {"b", matrix_to_json(t.B)}});
    json j{{"format_version", kCheckpointFormatVersion},
           {"kind", "lora"},
           {"rank", a.rank},
           {"alpha", a.alpha},
           {"targets", std::move(targets)}};
    if (!base_checkpoint_hash.empty()) j["base_checkpoint_hash"] = base_checkpoint_hash;
    return j;
}

inline LoraAdapter adapter_from_json(const json& j) {
    if (j.at("kind").get<std::string>() != "lora")
        throw std::runtime_error("checkpoint is not a lora checkpoint");
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
        throw std::runtime_error("unsupported checkpoint format version");
    LoraAdapter a;
    a.rank = j.at("rank").get<int>();
    a.alpha = j.at("alpha").get<double>();
    for (const auto& t : j.at("targets")) {
        LoraAdapter::Target tgt;
        tgt.layer = t.at("layer").get<int>();
        tgt.A = matrix_from_json(t.at("a"));
        tgt.B = matrix_from_json(t.at("b"));
        a.targets.push_back(std::move(tgt));
    }
    return a;
}

inline void save_checkpoint(const std::filesystem::path& path, const json& j) {
    write_file(path, j.dump(2) + "\n");
}

inline json load_checkpoint(const std::filesystem::path& path) {
    return json::parse(read_file(path));
}

// CSV -------------------------------------------------------------------------

class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> header) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
        columns_ = header.size();
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_) throw std::logic_error("CSV row width mismatch");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

  private:
    std::ostringstream out_;
    std::size_t columns_ = 0;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& content) {
    CsvTable t;
    std::istringstream in(content);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

}  // namespace autolora::io

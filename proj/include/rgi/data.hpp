#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rgi/error.hpp"
#include "rgi/graph.hpp"
#include "rgi/rng.hpp"
#include "rgi/tensor.hpp"

namespace rgi {

enum class TaskKind { Multiclass, Multilabel };

inline const char* to_string(TaskKind t) {
    return t == TaskKind::Multiclass ? "multiclass" : "multilabel";
}

// Feature files are decimal-text CSV by default; large matrices can instead
// be shipped as a flat binary dump ("RGIF" | u64 rows | u64 cols | row-major
// float64, all little-endian).
enum class FeatureFormat { Csv, F64le };

struct GraphDataset {
    SparseGraph graph;
    Tensor<double> features;              // N x d
    std::vector<int64_t> labels;          // multiclass: one id per node
    Tensor<double> label_matrix;          // multilabel: N x C of 0/1
    TaskKind task = TaskKind::Multiclass;
    std::string name;

    int64_t num_nodes() const { return graph.num_nodes(); }
    int64_t feature_dim() const { return features.cols(); }

    int64_t num_classes() const {
        if (task == TaskKind::Multilabel) return label_matrix.cols();
        int64_t c = 0;
        for (int64_t y : labels) c = std::max(c, y + 1);
        return c;
    }
};

// Rows scaled to unit L1 mass; zero rows pass through unchanged.
template <typename T>
Tensor<T> l1_normalize_rows(const Tensor<T>& x) {
    Tensor<T> out = x;
    T* p = out.mut();
    for (int64_t i = 0; i < x.rows(); ++i) {
        T s = T(0);
        for (int64_t j = 0; j < x.cols(); ++j) s += std::abs(p[i * x.cols() + j]);
        if (s == T(0)) continue;
        for (int64_t j = 0; j < x.cols(); ++j) p[i * x.cols() + j] /= s;
    }
    return out;
}

namespace detail {

inline Tensor<double> load_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open feature file: " + path);
    std::vector<double> values;
    int64_t rows = 0, cols = -1;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string field;
        int64_t count = 0;
        while (std::getline(ss, field, ',')) {
            size_t pos = 0;
            double v;
            try {
                v = std::stod(field, &pos);
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
            }
            while (pos < field.size() && std::isspace(static_cast<unsigned char>(field[pos]))) ++pos;
            if (pos != field.size()) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
            }
            values.push_back(v);
            ++count;
        }
        if (cols < 0) {
            cols = count;
        } else if (count != cols) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(cols) + " fields, got " + std::to_string(count));
        }
        ++rows;
    }
    if (rows == 0) throw ParseError(path + ": empty feature file");
    return Tensor<double>(rows, cols, std::move(values));
}

inline Tensor<double> load_feature_f64le(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open feature file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RGIF", 4) != 0) {
        throw ParseError(path + ": bad binary feature header");
    }
    uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in || rows == 0 || cols == 0) throw ParseError(path + ": bad binary feature shape");
    std::vector<double> values(rows * cols);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw ParseError(path + ": truncated binary feature file");
    return Tensor<double>(static_cast<int64_t>(rows), static_cast<int64_t>(cols),
                          std::move(values));
}

inline std::vector<int64_t> load_multiclass_labels(const std::string& path,
                                                   std::optional<int64_t> num_classes) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open label file: " + path);
    std::vector<int64_t> labels;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::istringstream ss(line);
        int64_t y;
        if (!(ss >> y) || y < 0) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected a class id");
        }
        if (num_classes && y >= *num_classes) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": class " + std::to_string(y) +
                             " outside declared range [0, " + std::to_string(*num_classes) + ")");
        }
        labels.push_back(y);
    }
    return labels;
}

inline Tensor<double> load_multilabel_csv(const std::string& path) {
    Tensor<double> m = load_feature_csv(path);
    for (int64_t i = 0; i < m.size(); ++i) {
        const double v = m.data()[i];
        if (v != 0.0 && v != 1.0) {
            throw ParseError(path + ": multilabel entries must be 0 or 1, found " +
                             std::to_string(v));
        }
    }
    return m;
}

}  // namespace detail

// Loads the three on-disk pieces, cross-validates their counts and returns a
// symmetrized dataset. Feature values are decimal text; labels are one class
// id per line (multiclass) or a CSV of 0/1 fields (multilabel).
inline GraphDataset load_dataset(const std::string& edge_path, const std::string& feature_path,
                                 const std::string& label_path, TaskKind task,
                                 bool l1_normalize = true,
                                 std::optional<int64_t> num_classes = std::nullopt,
                                 FeatureFormat format = FeatureFormat::Csv) {
    GraphDataset ds;
    ds.task = task;
    ds.features = format == FeatureFormat::Csv ? detail::load_feature_csv(feature_path)
                                               : detail::load_feature_f64le(feature_path);
    const int64_t n = ds.features.rows();

    const auto edges = load_edge_list(edge_path);
    for (const auto& [i, j] : edges) {
        if (i >= n || j >= n) {
            throw CountMismatch("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") references a node outside the " + std::to_string(n) +
                                "-row feature file");
        }
    }
    ds.graph = build_csr(edges, n);

    if (task == TaskKind::Multiclass) {
        ds.labels = detail::load_multiclass_labels(label_path, num_classes);
        if (static_cast<int64_t>(ds.labels.size()) != n) {
            throw CountMismatch("label file has " + std::to_string(ds.labels.size()) +
                                " rows but feature file has " + std::to_string(n));
        }
    } else {
        ds.label_matrix = detail::load_multilabel_csv(label_path);
        if (ds.label_matrix.rows() != n) {
            throw CountMismatch("label file has " + std::to_string(ds.label_matrix.rows()) +
                                " rows but feature file has " + std::to_string(n));
        }
    }
    if (l1_normalize) ds.features = l1_normalize_rows(ds.features);
    return ds;
}

// Writes the dataset back out in the loader's formats. CSV feature values use
// 17 significant digits, which round-trips IEEE doubles exactly.
inline void save_dataset(const GraphDataset& ds, const std::string& edge_path,
                         const std::string& feature_path, const std::string& label_path,
                         FeatureFormat format = FeatureFormat::Csv) {
    save_edge_list(edge_path, ds.graph);
    if (format == FeatureFormat::Csv) {
        std::ofstream out(feature_path);
        if (!out) throw Error("cannot write feature file: " + feature_path);
        char buf[64];
        for (int64_t i = 0; i < ds.features.rows(); ++i) {
            for (int64_t j = 0; j < ds.features.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
                out << (j ? "," : "") << buf;
            }
            out << "\n";
        }
    } else {
        std::ofstream out(feature_path, std::ios::binary);
        if (!out) throw Error("cannot write feature file: " + feature_path);
        out.write("RGIF", 4);
        const uint64_t rows = static_cast<uint64_t>(ds.features.rows());
        const uint64_t cols = static_cast<uint64_t>(ds.features.cols());
        out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
        out.write(reinterpret_cast<const char*>(ds.features.data()),
                  static_cast<std::streamsize>(ds.features.size() * sizeof(double)));
    }
    std::ofstream out(label_path);
    if (!out) throw Error("cannot write label file: " + label_path);
    if (ds.task == TaskKind::Multiclass) {
        for (int64_t y : ds.labels) out << y << "\n";
    } else {
        for (int64_t i = 0; i < ds.label_matrix.rows(); ++i) {
            for (int64_t j = 0; j < ds.label_matrix.cols(); ++j) {
                out << (j ? "," : "") << static_cast<int>(ds.label_matrix(i, j));
            }
            out << "\n";
        }
    }
}

// Synthetic stochastic block model: intra-block pairs connect with p_in,
// inter-block with p_out. Features are a per-block mean pattern plus Gaussian
// noise; labels are the block ids.
struct SbmConfig {
    int64_t num_blocks = 3;
    int64_t nodes_per_block = 100;
    double p_in = 0.1;
    double p_out = 0.01;
    int64_t feature_dim = 32;
    double signal = 1.0;       // magnitude of the per-block mean offset
    double noise_sigma = 1.0;  // std of the additive feature noise
    uint64_t seed = 0;

    void validate() const {
        if (num_blocks < 1 || nodes_per_block < 1 || feature_dim < 1) {
            throw ConfigError("sbm: counts must be >= 1");
        }
        if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0)) {
            throw ConfigError("sbm: need 0 <= p_out < p_in <= 1");
        }
        if (noise_sigma <= 0.0) throw ConfigError("sbm: noise_sigma must be positive");
        if (feature_dim < num_blocks) {
            throw ConfigError("sbm: feature_dim must be >= num_blocks for orthogonal block means");
        }
    }
};

inline GraphDataset generate_sbm(const SbmConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int64_t n = cfg.num_blocks * cfg.nodes_per_block;
    const int64_t d = cfg.feature_dim;

    std::vector<std::pair<int64_t, int64_t>> edges;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t bi = i / cfg.nodes_per_block;
        for (int64_t j = i + 1; j < n; ++j) {
            const int64_t bj = j / cfg.nodes_per_block;
            const double p = bi == bj ? cfg.p_in : cfg.p_out;
            if (rng.bernoulli(p)) edges.emplace_back(i, j);
        }
    }

    // Block means live on disjoint coordinate slices with alternating signs,
    // so they are exactly orthogonal for any feature_dim >= num_blocks.
    const int64_t slice = d / cfg.num_blocks;
    Tensor<double> x(n, d);
    double* px = x.mut();
    std::vector<int64_t> labels(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const int64_t b = i / cfg.nodes_per_block;
        labels[static_cast<size_t>(i)] = b;
        const int64_t lo = b * slice;
        const int64_t hi = (b == cfg.num_blocks - 1) ? d : lo + slice;
        for (int64_t j = 0; j < d; ++j) {
            double mean = 0.0;
            if (j >= lo && j < hi) mean = (j % 2 == 0 ? cfg.signal : -cfg.signal);
            px[i * d + j] = mean + cfg.noise_sigma * rng.normal();
        }
    }

    GraphDataset ds;
    ds.graph = build_csr(edges, n);
    ds.features = std::move(x);
    ds.labels = std::move(labels);
    ds.task = TaskKind::Multiclass;
    ds.name = "sbm";
    return ds;
}

}  // namespace rgi

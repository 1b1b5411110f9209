#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rgi/error.hpp"

namespace rgi {

// Immutable CSR adjacency of an undirected, unweighted graph. Construction
// symmetrizes the edge list, drops self-loops and merges duplicates, so a
// valid instance always satisfies:
//   - (i,j) stored iff (j,i) stored,
//   - no diagonal entries,
//   - column indices strictly increasing within each row.
class SparseGraph {
public:
    SparseGraph() = default;

    int64_t num_nodes() const { return num_nodes_; }
    int64_t num_directed_edges() const { return static_cast<int64_t>(col_indices_.size()); }
    // Undirected edge count (each pair stored twice).
    int64_t num_edges() const { return num_directed_edges() / 2; }

    const std::vector<int64_t>& row_offsets() const { return row_offsets_; }
    const std::vector<int64_t>& col_indices() const { return col_indices_; }

    int64_t degree(int64_t i) const { return row_offsets_[i + 1] - row_offsets_[i]; }

    // Neighbors of node i, sorted ascending.
    const int64_t* neighbors_begin(int64_t i) const { return col_indices_.data() + row_offsets_[i]; }
    const int64_t* neighbors_end(int64_t i) const { return col_indices_.data() + row_offsets_[i + 1]; }

    friend SparseGraph build_csr(const std::vector<std::pair<int64_t, int64_t>>& edges,
                                 int64_t num_nodes);

private:
    int64_t num_nodes_ = 0;
    std::vector<int64_t> row_offsets_ = {0};
    std::vector<int64_t> col_indices_;
};

inline SparseGraph build_csr(const std::vector<std::pair<int64_t, int64_t>>& edges,
                             int64_t num_nodes) {
    std::vector<std::pair<int64_t, int64_t>> dir;
    dir.reserve(edges.size() * 2);
    for (const auto& [i, j] : edges) {
        if (i < 0 || i >= num_nodes || j < 0 || j >= num_nodes) {
            throw InvalidEdge("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") out of range for " + std::to_string(num_nodes) + " nodes");
        }
        if (i == j) continue;
        dir.emplace_back(i, j);
        dir.emplace_back(j, i);
    }
    std::sort(dir.begin(), dir.end());
    dir.erase(std::unique(dir.begin(), dir.end()), dir.end());

    SparseGraph g;
    g.num_nodes_ = num_nodes;
    g.row_offsets_.assign(static_cast<size_t>(num_nodes) + 1, 0);
    g.col_indices_.reserve(dir.size());
    for (const auto& [i, j] : dir) {
        ++g.row_offsets_[static_cast<size_t>(i) + 1];
        g.col_indices_.push_back(j);
    }
    for (int64_t i = 0; i < num_nodes; ++i) g.row_offsets_[i + 1] += g.row_offsets_[i];
    return g;
}

// Plain-text edge list: one edge per line, two whitespace-separated 0-based
// node ids; '#' starts a comment line. Node count is one past the largest id
// unless a larger count is forced by the caller.
inline std::vector<std::pair<int64_t, int64_t>> load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open edge file: " + path);
    std::vector<std::pair<int64_t, int64_t>> edges;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        int64_t i, j;
        if (!(ss >> i >> j)) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected two node ids");
        }
        std::string extra;
        if (ss >> extra) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": trailing data '" + extra + "'");
        }
        edges.emplace_back(i, j);
    }
    return edges;
}

inline void save_edge_list(const std::string& path, const SparseGraph& g) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write edge file: " + path);
    for (int64_t i = 0; i < g.num_nodes(); ++i) {
        for (const int64_t* p = g.neighbors_begin(i); p != g.neighbors_end(i); ++p) {
            if (i < *p) out << i << " " << *p << "\n";  // each undirected edge once
        }
    }
}

}  // namespace rgi

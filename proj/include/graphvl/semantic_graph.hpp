#pragma once

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "graphvl/error.hpp"
#include "graphvl/matrix.hpp"

namespace graphvl {

/// Directed kNN graph over class nodes, with self-loops, and its row-normalized
/// propagation matrix D⁻¹A.
struct SemanticGraph {
    Matrix<std::uint8_t> adjacency;
    Matrix<double> norm_adjacency;
    int k = 0;

    std::size_t nodes() const { return adjacency.rows(); }
};

/// D⁻¹A for a binary adjacency whose rows each hold at least one edge.
template <typename T>
Matrix<double> row_normalize(const Matrix<T>& adjacency) {
    require_shape(adjacency.rows() == adjacency.cols(), "semantic_graph", "adjacency must be square");
    Matrix<double> out(adjacency.rows(), adjacency.cols());
    for (std::size_t i = 0; i < adjacency.rows(); ++i) {
        double sum = 0.0;
        for (auto v : adjacency.row(i)) sum += static_cast<double>(v);
        if (!(sum > 0.0)) {
            throw Error(ErrorCode::InvariantViolation, "semantic_graph", "row " + std::to_string(i) + " has no edges");
        }
        for (std::size_t j = 0; j < adjacency.cols(); ++j) out(i, j) = static_cast<double>(adjacency(i, j)) / sum;
    }
    return out;
}

/// Edge (i, j) is set when j is one of the k classes most cosine-similar to i
/// (j != i), or when i == j. Equal similarities go to the lower index.
/// k >= node count yields the complete graph with a warning on stderr.
template <typename T>
SemanticGraph build_knn_graph(const Matrix<T>& class_embeddings, int k) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "semantic_graph", "k must be >= 1");
    if (class_embeddings.rows() == 0 || class_embeddings.cols() == 0) {
        throw Error(ErrorCode::InvalidArgument, "semantic_graph", "no class embeddings");
    }
    if (!all_finite(class_embeddings)) {
        throw Error(ErrorCode::NonFiniteValue, "semantic_graph", "class embeddings contain NaN or Inf");
    }
    const std::size_t n = class_embeddings.rows();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = norm2(class_embeddings.row(i));
        if (!(norms[i] > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "semantic_graph", "class embedding " + std::to_string(i) + " is zero");
        }
    }
    if (static_cast<std::size_t>(k) >= n) {
        std::cerr << "warning: semantic_graph: k = " << k << " >= " << n << " nodes, using the complete graph\n";
    }

    SemanticGraph g;
    g.k = k;
    g.adjacency = Matrix<std::uint8_t>(n, n, 0);
    std::vector<std::size_t> others;
    std::vector<double> sim(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            sim[j] = dot(class_embeddings.row(i), class_embeddings.row(j)) / (norms[i] * norms[j]);
        }
        others.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) others.push_back(j);
        }
        std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), others.size());
        g.adjacency(i, i) = 1;
        for (std::size_t r = 0; r < take; ++r) g.adjacency(i, others[r]) = 1;
    }
    g.norm_adjacency = row_normalize(g.adjacency);
    return g;
}

inline std::string adjacency_csv(const SemanticGraph& g) {
    std::ostringstream os;
    for (std::size_t i = 0; i < g.nodes(); ++i) {
        for (std::size_t j = 0; j < g.nodes(); ++j) {
            if (j) os << ',';
            os << static_cast<int>(g.adjacency(i, j));
        }
        os << '\n';
    }
    return os.str();
}

} // namespace graphvl

#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "graphvl/error.hpp"
#include "graphvl/matrix.hpp"

namespace graphvl {

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// potentials, O(n³)). Returns row → column.
inline std::vector<std::size_t> hungarian_min_cost(const Matrix<double>& cost) {
    require_shape(cost.rows() == cost.cols(), "evaluation", "hungarian needs a square matrix");
    const std::size_t n = cost.rows();
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is a sentinel.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

/// K × C table: counts[k][c] = samples in cluster k with true class c.
inline Matrix<double> contingency(std::span<const int> assignment, std::span<const int> truth, int k, int c) {
    require_shape(assignment.size() == truth.size(), "evaluation", "assignment and truth lengths differ");
    Matrix<double> m(static_cast<std::size_t>(k), static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] < 0 || assignment[i] >= k || truth[i] < 0 || truth[i] >= c) {
            throw Error(ErrorCode::InvalidArgument, "evaluation", "id out of range at sample " + std::to_string(i));
        }
        m(static_cast<std::size_t>(assignment[i]), static_cast<std::size_t>(truth[i])) += 1.0;
    }
    return m;
}

struct MatchResult {
    double accuracy = 0.0;
    std::map<int, int> permutation;  // cluster id → class id
    Matrix<double> confusion;
};

/// Clustering accuracy under the best one-to-one cluster → class matching.
inline MatchResult hungarian_accuracy(std::span<const int> assignment, std::span<const int> truth, int k, int c) {
    if (assignment.empty()) throw Error(ErrorCode::InvalidArgument, "evaluation", "empty assignment");
    if (k < 1 || c < 1) throw Error(ErrorCode::InvalidArgument, "evaluation", "K and C must be >= 1");
    MatchResult r;
    r.confusion = contingency(assignment, truth, k, c);
    const auto side = static_cast<std::size_t>(std::max(k, c));
    double peak = 0.0;
    for (auto v : r.confusion.values()) peak = std::max(peak, v);
    // Maximize matches = minimize (peak - count); padding cells cost `peak`.
    Matrix<double> cost(side, side, peak);
    for (std::size_t i = 0; i < r.confusion.rows(); ++i) {
        for (std::size_t j = 0; j < r.confusion.cols(); ++j) cost(i, j) = peak - r.confusion(i, j);
    }
    const auto match = hungarian_min_cost(cost);
    double hits = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
        if (match[i] < static_cast<std::size_t>(c)) {
            r.permutation[static_cast<int>(i)] = static_cast<int>(match[i]);
            hits += r.confusion(i, match[i]);
        }
    }
    r.accuracy = hits / static_cast<double>(assignment.size());
    return r;
}

struct EvalReport {
    double acc_all = 0.0;
    std::optional<double> acc_known;  // empty when the split has no samples
    std::optional<double> acc_new;
    std::size_t n_known = 0;
    std::size_t n_new = 0;
    std::map<int, int> permutation;
    Matrix<double> confusion;
};

/// One matching solved over all samples, then reused to score the
/// known-class (truth < known_class_count) and novel-class subsets.
inline EvalReport split_accuracy(std::span<const int> assignment, std::span<const int> truth, int known_class_count,
                                 int k, int c) {
    const auto m = hungarian_accuracy(assignment, truth, k, c);
    EvalReport r;
    r.acc_all = m.accuracy;
    r.permutation = m.permutation;
    r.confusion = m.confusion;
    std::size_t hit_known = 0, hit_new = 0;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        const auto it = m.permutation.find(assignment[i]);
        const bool hit = it != m.permutation.end() && it->second == truth[i];
        if (truth[i] < known_class_count) {
            ++r.n_known;
            hit_known += hit;
        } else {
            ++r.n_new;
            hit_new += hit;
        }
    }
    if (r.n_known) r.acc_known = static_cast<double>(hit_known) / static_cast<double>(r.n_known);
    if (r.n_new) r.acc_new = static_cast<double>(hit_new) / static_cast<double>(r.n_new);
    return r;
}

inline std::string format_accuracy(const std::optional<double>& v) {
    if (!v) return "N/A";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << *v;
    return os.str();
}

inline std::string report_text(const EvalReport& r) {
    std::ostringstream os;
    os << "acc_all=" << format_accuracy(r.acc_all) << '\n'
       << "acc_known=" << format_accuracy(r.acc_known) << '\n'
       << "acc_new=" << format_accuracy(r.acc_new) << '\n'
       << "n_known=" << r.n_known << '\n'
       << "n_new=" << r.n_new << '\n'
       << "permutation=";
    bool first = true;
    for (const auto& [cluster, cls] : r.permutation) {
        os << (first ? "" : ";") << cluster << "->" << cls;
        first = false;
    }
    os << '\n';
    return os.str();
}

inline std::string report_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "metric,value\n"
       << "acc_all," << format_accuracy(r.acc_all) << '\n'
       << "acc_known," << format_accuracy(r.acc_known) << '\n'
       << "acc_new," << format_accuracy(r.acc_new) << '\n';
    return os.str();
}

inline std::string confusion_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "cluster";
    for (std::size_t c = 0; c < r.confusion.cols(); ++c) os << ",class_" << c;
    os << '\n';
    for (std::size_t k = 0; k < r.confusion.rows(); ++k) {
        os << k;
        for (std::size_t c = 0; c < r.confusion.cols(); ++c) os << ',' << static_cast<long long>(r.confusion(k, c));
        os << '\n';
    }
    return os.str();
}

} // namespace graphvl

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "graphvl/error.hpp"
#include "graphvl/matrix.hpp"
#include "graphvl/neural_core.hpp"
#include "graphvl/parallel.hpp"
#include "graphvl/semantic_graph.hpp"

namespace graphvl {

/// Q(x): cosine of each projected sample to each GCN class embedding.
/// Output is [n × |C_kwn|] with entries in [-1, 1].
template <typename T>
Matrix<double> similarity_features(const Matrix<T>& x, const ModelParams<T>& params, const SemanticGraph& graph,
                                   const Matrix<T>& class_embeddings) {
    require_shape(class_embeddings.rows() == params.class_count(), "clustering",
                  "class embedding rows differ from the model's class count");
    const auto ybar = gcn_forward(graph, class_embeddings, params.weights).ybar;
    const auto z = projector_forward(x, params.weights).z;
    Matrix<double> q(z.rows(), ybar.rows());
    parallel_for(z.rows(), [&](std::size_t i) {
        for (std::size_t c = 0; c < ybar.rows(); ++c) {
            q(i, c) = std::clamp(dot(z.row(i), ybar.row(c)), -1.0, 1.0);
        }
    });
    return q;
}

struct ClusterAssignment {
    std::vector<int> assignment;
    Matrix<double> centroids;
    std::vector<bool> constrained_mask;
    int iterations_run = 0;
    double inertia = 0.0;
    std::vector<double> inertia_history;  // after every centroid update
};

/// Called after every iteration with the iteration number (from 1), the
/// current assignment and the inertia.
using IterationHook = std::function<void(int, std::span<const int>, double)>;

inline constexpr int kMaxLloydIterations = 300;

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

/// Number of reserved (known-class) clusters: one per class id 0..max label.
inline int reserved_clusters(std::span<const int> labels) {
    int r = 0;
    for (auto l : labels) {
        if (l < -1) throw Error(ErrorCode::InvalidArgument, "clustering", "label below -1");
        r = std::max(r, l + 1);
    }
    return r;
}

inline void check_clustering_inputs(const Matrix<double>& features, std::span<const int> labels, int k) {
    require_shape(labels.size() == features.rows(), "clustering", "one label per feature row");
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "clustering", "K must be >= 1");
    if (static_cast<std::size_t>(k) > features.rows()) {
        throw Error(ErrorCode::InvalidArgument, "clustering",
                    "K = " + std::to_string(k) + " exceeds sample count " + std::to_string(features.rows()));
    }
    const int reserved = reserved_clusters(labels);
    if (reserved > k) {
        throw Error(ErrorCode::InvalidArgument, "clustering",
                    "labels reserve " + std::to_string(reserved) + " clusters but K = " + std::to_string(k));
    }
    if (!all_finite(features)) throw Error(ErrorCode::NonFiniteValue, "clustering", "features are not finite");
}

} // namespace detail

/// Reserved centroids are the labeled-class means; the remaining K - R are
/// drawn from the free points with probability proportional to the squared
/// distance to the nearest centroid chosen so far.
inline Matrix<double> kmeans_pp_init(const Matrix<double>& features, std::span<const int> labels, int k,
                                     std::uint64_t seed) {
    detail::check_clustering_inputs(features, labels, k);
    const int reserved = detail::reserved_clusters(labels);
    const std::size_t n = features.rows();
    const std::size_t dim = features.cols();

    Matrix<double> centroids(static_cast<std::size_t>(k), dim);
    std::vector<std::size_t> counts(static_cast<std::size_t>(reserved), 0);
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0) {
            free.push_back(i);
            continue;
        }
        const auto c = static_cast<std::size_t>(labels[i]);
        ++counts[c];
        for (std::size_t j = 0; j < dim; ++j) centroids(c, j) += features(i, j);
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            throw Error(ErrorCode::InvalidArgument, "clustering", "reserved class " + std::to_string(c) + " has no labeled samples");
        }
        for (auto& v : centroids.row(c)) v /= static_cast<double>(counts[c]);
    }
    const auto to_draw = static_cast<std::size_t>(k - reserved);
    if (free.size() < to_draw) {
        throw Error(ErrorCode::Infeasible, "clustering",
                    std::to_string(free.size()) + " free points cannot seed " + std::to_string(to_draw) + " free centroids");
    }
    if (to_draw == 0) return centroids;

    std::mt19937_64 rng(seed);
    std::vector<double> d2(free.size(), std::numeric_limits<double>::infinity());
    auto absorb = [&](std::size_t c) {
        for (std::size_t f = 0; f < free.size(); ++f) {
            d2[f] = std::min(d2[f], detail::sq_dist(features.row(free[f]), centroids.row(c)));
        }
    };
    for (std::size_t c = 0; c < static_cast<std::size_t>(reserved); ++c) absorb(c);

    for (std::size_t c = static_cast<std::size_t>(reserved); c < static_cast<std::size_t>(k); ++c) {
        double total = 0.0;
        if (c > 0) {
            for (auto v : d2) total += v;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            double acc = 0.0;
            pick = free.size() - 1;
            for (std::size_t f = 0; f < free.size(); ++f) {
                acc += d2[f];
                if (u < acc && d2[f] > 0.0) {
                    pick = f;
                    break;
                }
            }
            while (d2[pick] == 0.0 && pick > 0) --pick;
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng);
        }
        std::copy(features.row(free[pick]).begin(), features.row(free[pick]).end(), centroids.row(c).begin());
        absorb(c);
    }
    return centroids;
}

/// Lloyd iterations from the given centroids. Labeled rows (label >= 0) are
/// pinned to cluster `label` at every step; free rows go to the nearest
/// centroid (lowest index on ties). An emptied free cluster takes the free
/// point farthest from its centroid among clusters that can spare one.
/// Stops when no assignment changes or after kMaxLloydIterations updates.
inline ClusterAssignment constrained_lloyd(const Matrix<double>& features, std::span<const int> labels,
                                           Matrix<double> centroids, const IterationHook& hook = {},
                                           int max_iterations = kMaxLloydIterations) {
    const int k = static_cast<int>(centroids.rows());
    detail::check_clustering_inputs(features, labels, k);
    require_shape(centroids.cols() == features.cols(), "clustering", "centroid width differs from feature width");
    const std::size_t n = features.rows();
    const auto uk = static_cast<std::size_t>(k);

    ClusterAssignment out;
    out.constrained_mask.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.constrained_mask[i] = labels[i] >= 0;

    auto assign = [&](std::vector<int>& a) {
        parallel_for(n, [&](std::size_t i) {
            if (labels[i] >= 0) {
                a[i] = labels[i];
                return;
            }
            int best = 0;
            double best_d = detail::sq_dist(features.row(i), centroids.row(0));
            for (std::size_t c = 1; c < uk; ++c) {
                const double d = detail::sq_dist(features.row(i), centroids.row(c));
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            a[i] = best;
        });

        std::vector<std::size_t> counts(uk, 0);
        for (auto c : a) ++counts[static_cast<std::size_t>(c)];
        for (std::size_t c = 0; c < uk; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (labels[i] >= 0) continue;
                const auto own = static_cast<std::size_t>(a[i]);
                if (counts[own] < 2) continue;
                const double d = detail::sq_dist(features.row(i), centroids.row(own));
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far == n) {
                throw Error(ErrorCode::Infeasible, "clustering", "no free point available to refill cluster " + std::to_string(c));
            }
            --counts[static_cast<std::size_t>(a[far])];
            a[far] = static_cast<int>(c);
            ++counts[c];
        }
    };

    auto update = [&](const std::vector<int>& a) {
        std::vector<std::size_t> counts(uk, 0);
        centroids.fill(0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(a[i]);
            ++counts[c];
            auto dst = centroids.row(c);
            const auto src = features.row(i);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
        for (std::size_t c = 0; c < uk; ++c) {
            for (auto& v : centroids.row(c)) v /= static_cast<double>(counts[c]);
        }
    };

    auto inertia_of = [&](const std::vector<int>& a) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += detail::sq_dist(features.row(i), centroids.row(static_cast<std::size_t>(a[i])));
        return s;
    };

    std::vector<int> a(n, -1), next(n, -1);
    assign(a);
    for (int it = 1; it <= max_iterations; ++it) {
        update(a);
        out.iterations_run = it;
        out.inertia = inertia_of(a);
        out.inertia_history.push_back(out.inertia);
        if (hook) hook(it, std::span<const int>(a), out.inertia);
        assign(next);
        if (next == a) break;
        std::swap(a, next);
    }
    out.assignment = std::move(a);
    out.centroids = std::move(centroids);
    return out;
}

/// k-means++ seeding followed by constrained Lloyd iterations. Known-class
/// samples keep cluster id = class id; novel clusters take ids >= |C_kwn|.
inline ClusterAssignment semisup_kmeans(const Matrix<double>& features, std::span<const int> labels, int k,
                                        std::uint64_t seed, const IterationHook& hook = {}) {
    return constrained_lloyd(features, labels, kmeans_pp_init(features, labels, k, seed), hook);
}

struct ElbowResult {
    int k = 0;
    std::vector<int> ks;
    std::vector<double> inertia;
    std::vector<double> distance;  // to the chord between the scan endpoints
};

/// Index of the point farthest from the chord joining the first and last
/// (x, y) points. Ties and near-zero distances resolve to the lowest index.
inline std::size_t elbow_index(std::span<const double> x, std::span<const double> y, std::vector<double>* distances = nullptr) {
    require_shape(x.size() == y.size() && !x.empty(), "clustering", "elbow needs matching non-empty series");
    const double x0 = x.front(), y0 = y.front(), x1 = x.back(), y1 = y.back();
    const double len = std::hypot(x1 - x0, y1 - y0);
    double scale = 1.0;
    for (auto v : y) scale = std::max(scale, std::abs(v));
    const double tol = 1e-9 * scale;
    std::size_t best = 0;
    double best_d = 0.0;
    if (distances) distances->assign(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = len > 0.0 ? std::abs((y1 - y0) * (x[i] - x0) - (x1 - x0) * (y[i] - y0)) / len : 0.0;
        if (distances) (*distances)[i] = d;
        if (d > best_d + tol) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

/// Cluster count at the elbow of inertia(K) for K in [k_min, k_max].
inline ElbowResult estimate_k(const Matrix<double>& features, std::span<const int> labels, int k_min, int k_max,
                              std::uint64_t seed) {
    if (k_min > k_max) throw Error(ErrorCode::InvalidArgument, "clustering", "k_min > k_max");
    const int reserved = detail::reserved_clusters(labels);
    if (k_min < std::max(1, reserved)) {
        throw Error(ErrorCode::InvalidArgument, "clustering", "k_min must be >= the known class count");
    }
    if (static_cast<std::size_t>(k_max) > features.rows()) {
        throw Error(ErrorCode::InvalidArgument, "clustering", "k_max exceeds the sample count");
    }
    ElbowResult r;
    std::vector<double> xs;
    for (int k = k_min; k <= k_max; ++k) {
        r.ks.push_back(k);
        xs.push_back(static_cast<double>(k));
        r.inertia.push_back(semisup_kmeans(features, labels, k, seed).inertia);
    }
    r.k = r.ks[elbow_index(xs, r.inertia, &r.distance)];
    return r;
}

inline std::string assignments_csv(const ClusterAssignment& a) {
    std::ostringstream os;
    os << "sample_index,cluster_id,is_constrained\n";
    for (std::size_t i = 0; i < a.assignment.size(); ++i) {
        os << i << ',' << a.assignment[i] << ',' << (a.constrained_mask[i] ? 1 : 0) << '\n';
    }
    return os.str();
}

inline std::string inertia_csv(const ElbowResult& r) {
    std::ostringstream os;
    os << "k,inertia,elbow_distance\n" << std::setprecision(17);
    for (std::size_t i = 0; i < r.ks.size(); ++i) os << r.ks[i] << ',' << r.inertia[i] << ',' << r.distance[i] << '\n';
    return os.str();
}

} // namespace graphvl

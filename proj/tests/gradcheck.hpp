// Randomized analytic-vs-numeric gradient checks, shared by the unit tests
// and the acceptance runner. Each check draws small instances in double
// precision and reports the worst relative error. Instances that sit within
// a hair of a ReLU or hinge kink are redrawn, since the central difference
// is not a derivative there.
#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "graphvl/losses.hpp"
#include "graphvl/neural_core.hpp"
#include "graphvl/semantic_graph.hpp"
#include "oracles.hpp"

namespace gradcheck {

using graphvl::Matrix;

struct Outcome {
    double max_rel = 0.0;
    int cases = 0;
    int redrawn = 0;
};

inline constexpr double kKinkMargin = 1e-3;

namespace detail {

inline double cos_rows(const Matrix<double>& a, std::size_t i, const Matrix<double>& b, std::size_t j) {
    return graphvl::dot(a.row(i), b.row(j)) / (graphvl::norm2(a.row(i)) * graphvl::norm2(b.row(j)));
}

inline bool near_kink(const Matrix<double>& m) {
    for (auto v : m.values()) {
        if (std::abs(v) < kKinkMargin) return true;
    }
    return false;
}

inline bool cma_near_kink(const Matrix<double>& z, const std::vector<int>& y, const Matrix<double>& ybar, double alpha,
                          bool as_printed) {
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double sy = cos_rows(z, i, ybar, static_cast<std::size_t>(y[i]));
        for (std::size_t c = 0; c < ybar.rows(); ++c) {
            const double sc = cos_rows(z, i, ybar, c);
            const double h = as_printed ? sy - sc - alpha : sc - sy + alpha;
            if ((as_printed || c != static_cast<std::size_t>(y[i])) && std::abs(h) < kKinkMargin) return true;
        }
    }
    return false;
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::mt19937_64& rng) {
    std::vector<int> y(n);
    for (auto& v : y) v = oracle::uniform_int(rng, 0, classes - 1);
    return y;
}

inline double clamp_free_alpha(std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(0.0, 0.6)(rng);
}

inline Matrix<double> random_adjacency(std::size_t n, std::mt19937_64& rng) {
    auto emb = oracle::random_matrix(n, 3, rng);
    const int k = n > 1 ? oracle::uniform_int(rng, 1, static_cast<int>(n) - 1) : 1;
    return graphvl::build_knn_graph(emb, k).norm_adjacency;
}

} // namespace detail

inline Outcome check_cma(int cases, std::uint64_t seed, bool as_printed = false) {
    std::mt19937_64 rng(seed);
    Outcome out;
    while (out.cases < cases) {
        const auto b = static_cast<std::size_t>(oracle::uniform_int(rng, 1, 6));
        const int classes = oracle::uniform_int(rng, 1, 5);
        const auto d = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 6));
        auto z = oracle::random_matrix(b, d, rng);
        auto ybar = oracle::random_matrix(static_cast<std::size_t>(classes), d, rng);
        const auto y = detail::random_labels(b, classes, rng);
        const double alpha = detail::clamp_free_alpha(rng);
        const double tau = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
        if (detail::cma_near_kink(z, y, ybar, alpha, as_printed)) {
            ++out.redrawn;
            continue;
        }
        const auto r = graphvl::loss_cma(z, std::span<const int>(y), ybar, alpha, tau, as_printed);
        const auto num = oracle::numeric_gradient(
            {&z, &ybar}, [&] { return graphvl::loss_cma(z, std::span<const int>(y), ybar, alpha, tau, as_printed).loss; });
        out.max_rel = std::max(out.max_rel, oracle::relative_error(oracle::flatten({&r.grad_z, &r.grad_ybar}), num));
        ++out.cases;
    }
    return out;
}

inline Outcome check_sdp(int cases, std::uint64_t seed, bool as_printed = false) {
    std::mt19937_64 rng(seed);
    Outcome out;
    while (out.cases < cases) {
        const auto m = static_cast<std::size_t>(oracle::uniform_int(rng, 1, 6));
        const auto d = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 6));
        auto a = oracle::random_matrix(m, d, rng);
        auto p = oracle::random_matrix(m, d, rng);
        auto n = oracle::random_matrix(m, d, rng);
        bool kink = false;
        for (std::size_t i = 0; i < m; ++i) kink |= std::abs(detail::cos_rows(a, i, n, i)) < kKinkMargin;
        if (kink && !as_printed) {
            ++out.redrawn;
            continue;
        }
        const auto r = graphvl::loss_sdp(a, p, n, as_printed);
        const auto num = oracle::numeric_gradient({&a, &p, &n}, [&] { return graphvl::loss_sdp(a, p, n, as_printed).loss; });
        out.max_rel = std::max(out.max_rel, oracle::relative_error(
                                                oracle::flatten({&r.grad_anchors, &r.grad_positives, &r.grad_negatives}), num));
        ++out.cases;
    }
    return out;
}

inline Outcome check_cs(int cases, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Outcome out;
    while (out.cases < cases) {
        const auto c = static_cast<std::size_t>(oracle::uniform_int(rng, 1, 5));
        const auto d = static_cast<std::size_t>(oracle::uniform_int(rng, 1, 6));
        auto t = oracle::random_matrix(c, d, rng);
        const auto mu = oracle::random_matrix(c, d, rng);
        const auto r = graphvl::loss_cs(t, mu);
        const auto num = oracle::numeric_gradient({&t}, [&] { return graphvl::loss_cs(t, mu).loss; });
        out.max_rel = std::max(out.max_rel, oracle::relative_error(oracle::flatten({&r.grad_t}), num));
        ++out.cases;
    }
    return out;
}

/// L_Tot with the prompt-consistency centers frozen at the starting ybar,
/// which is the gradient the trainer applies.
inline Outcome check_total(int cases, std::uint64_t seed, bool as_printed = false) {
    std::mt19937_64 rng(seed);
    Outcome out;
    while (out.cases < cases) {
        const auto b = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 7));
        const int classes = oracle::uniform_int(rng, 2, 4);
        const auto d = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 5));
        graphvl::Batch<double> batch;
        batch.z = oracle::random_matrix(b, d, rng);
        batch.ybar = oracle::random_matrix(static_cast<std::size_t>(classes), d, rng);
        batch.t = oracle::random_matrix(static_cast<std::size_t>(classes), d, rng);
        batch.y_idx = detail::random_labels(b, classes, rng);
        const auto triplets = graphvl::sample_triplets(std::span<const int>(batch.y_idx), rng);
        graphvl::LossOptions opt;
        opt.alpha = detail::clamp_free_alpha(rng);
        opt.temperature = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
        opt.as_printed = as_printed;

        bool kink = detail::cma_near_kink(batch.z, batch.y_idx, batch.ybar, opt.alpha, as_printed);
        for (const auto& tr : triplets) kink |= !as_printed && std::abs(detail::cos_rows(batch.z, tr.anchor, batch.z, tr.negative)) < kKinkMargin;
        if (kink) {
            ++out.redrawn;
            continue;
        }
        const Matrix<double> centers = batch.ybar;
        const std::span<const graphvl::Triplet> ts(triplets);
        const auto r = graphvl::loss_total(batch, ts, opt);
        const auto f = [&] {
            const auto l = graphvl::loss_total(batch, ts, opt);
            return l.cma + l.sdp + graphvl::loss_cs(batch.t, centers).loss;
        };
        const auto num = oracle::numeric_gradient({&batch.z, &batch.ybar, &batch.t}, f);
        out.max_rel =
            std::max(out.max_rel, oracle::relative_error(oracle::flatten({&r.grad_z, &r.grad_ybar, &r.grad_t}), num));
        ++out.cases;
    }
    return out;
}

/// Scalar probe L = Σ G ⊙ ybar through a random 0-3 layer GCN.
inline Outcome check_gcn(int cases, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Outcome out;
    while (out.cases < cases) {
        graphvl::ModelShape shape;
        shape.classes = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 5));
        shape.input_dim = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 5));
        shape.hidden_dim = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 5));
        shape.gcn_layers = oracle::uniform_int(rng, 0, 3);
        shape.output_dim = shape.gcn_layers == 0 ? shape.input_dim : static_cast<std::size_t>(oracle::uniform_int(rng, 2, 5));
        auto params = graphvl::init_params<double>(shape, rng);
        auto& w = params.weights;
        const auto adj = detail::random_adjacency(shape.classes, rng);
        auto h0 = oracle::random_matrix(shape.classes, shape.input_dim, rng);
        const auto probe = oracle::random_matrix(shape.classes, shape.output_dim, rng);

        graphvl::GcnResult<double> fwd;
        try {
            fwd = graphvl::gcn_forward(adj, h0, w);
        } catch (const graphvl::Error&) {  // a node with every hidden unit dead has no direction
            ++out.redrawn;
            continue;
        }
        bool kink = false;
        for (std::size_t l = 0; l + 1 < fwd.trace.pre.size(); ++l) kink |= detail::near_kink(fwd.trace.pre[l]);
        if (kink) {
            ++out.redrawn;
            continue;
        }
        const auto g = graphvl::gcn_backward(fwd.trace, w, probe);
        const auto f = [&] {
            const auto y = graphvl::gcn_forward(adj, h0, w).ybar;
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * probe.values()[i];
            return s;
        };
        std::vector<Matrix<double>*> wrt;
        std::vector<const Matrix<double>*> analytic;
        for (std::size_t l = 0; l < w.gcn.size(); ++l) {
            wrt.push_back(&w.gcn[l]);
            analytic.push_back(&g.weights[l]);
        }
        wrt.push_back(&h0);
        analytic.push_back(&g.h0);
        out.max_rel = std::max(out.max_rel, oracle::relative_error(oracle::flatten(analytic), oracle::numeric_gradient(wrt, f)));
        ++out.cases;
    }
    return out;
}

/// Scalar probe L = Σ G ⊙ z through the visual projector.
inline Outcome check_projector(int cases, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Outcome out;
    while (out.cases < cases) {
        graphvl::ModelShape shape;
        shape.classes = 1;
        shape.gcn_layers = 1;
        shape.input_dim = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 5));
        shape.hidden_dim = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 6));
        shape.output_dim = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 5));
        auto params = graphvl::init_params<double>(shape, rng);
        auto& w = params.weights;
        w.proj_b1 = oracle::random_matrix(1, shape.hidden_dim, rng, -0.3, 0.3);
        w.proj_b2 = oracle::random_matrix(1, shape.output_dim, rng, -0.3, 0.3);
        auto x = oracle::random_matrix(static_cast<std::size_t>(oracle::uniform_int(rng, 1, 5)), shape.input_dim, rng);
        const auto probe = oracle::random_matrix(x.rows(), shape.output_dim, rng);

        const auto fwd = graphvl::projector_forward(x, w);
        if (detail::near_kink(fwd.trace.pre_hidden)) {
            ++out.redrawn;
            continue;
        }
        bool dead = true;
        for (auto v : fwd.trace.hidden.values()) dead &= v == 0.0;
        if (dead) {
            ++out.redrawn;
            continue;
        }
        const auto g = graphvl::projector_backward(fwd.trace, w, probe);
        const auto f = [&] {
            const auto z = graphvl::projector_forward(x, w).z;
            double s = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) s += z.values()[i] * probe.values()[i];
            return s;
        };
        const auto num = oracle::numeric_gradient({&w.proj_w1, &w.proj_b1, &w.proj_w2, &w.proj_b2, &x}, f);
        out.max_rel = std::max(out.max_rel, oracle::relative_error(oracle::flatten({&g.w1, &g.b1, &g.w2, &g.b2, &g.x}), num));
        ++out.cases;
    }
    return out;
}

} // namespace gradcheck

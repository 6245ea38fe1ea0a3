#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "graphvl/error.hpp"
#include "graphvl/matrix.hpp"
#include "graphvl/parallel.hpp"
#include "graphvl/semantic_graph.hpp"

namespace graphvl {

/// Every trainable tensor. Also used as the gradient container and for the
/// Adam moments, so all three always share one layout.
template <typename T>
struct Weights {
    std::vector<Matrix<T>> gcn;  // W^(l): [d_l × d_{l+1}]
    Matrix<T> proj_w1;           // [d × h]
    Matrix<T> proj_b1;           // [1 × h]
    Matrix<T> proj_w2;           // [h × d_out]
    Matrix<T> proj_b2;           // [1 × d_out]
    Matrix<T> prompts;           // [|C_kwn| × d_out]

    /// Calls f(name, tensor) in a fixed order shared by gradients, moments
    /// and checkpoints.
    template <typename F>
    void for_each(F&& f) { visit(*this, f); }
    template <typename F>
    void for_each(F&& f) const { visit(*this, f); }

    /// Same shapes, all zero.
    Weights zeros_like() const {
        Weights out = *this;
        out.for_each([](const std::string&, Matrix<T>& m) { m.fill(T(0)); });
        return out;
    }

    friend bool operator==(const Weights&, const Weights&) = default;

private:
    template <typename Self, typename F>
    static void visit(Self& self, F& f) {
        for (std::size_t l = 0; l < self.gcn.size(); ++l) f("gcn.W" + std::to_string(l), self.gcn[l]);
        f(std::string("proj.W1"), self.proj_w1);
        f(std::string("proj.b1"), self.proj_b1);
        f(std::string("proj.W2"), self.proj_w2);
        f(std::string("proj.b2"), self.proj_b2);
        f(std::string("prompt.t"), self.prompts);
    }
};

template <typename T>
struct AdamState {
    Weights<T> m;
    Weights<T> v;
    std::uint64_t step = 0;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <typename T>
struct ModelParams {
    Weights<T> weights;
    AdamState<T> adam;

    std::size_t input_dim() const { return weights.proj_w1.rows(); }
    std::size_t hidden_dim() const { return weights.proj_w1.cols(); }
    std::size_t output_dim() const { return weights.proj_w2.cols(); }
    std::size_t class_count() const { return weights.prompts.rows(); }
    int gcn_layers() const { return static_cast<int>(weights.gcn.size()); }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct ModelShape {
    std::size_t input_dim = 0;   // d, the class/visual embedding dimension
    std::size_t hidden_dim = 0;  // h, also the GCN inner width
    std::size_t output_dim = 0;  // d_out
    std::size_t classes = 0;     // |C_kwn|
    int gcn_layers = 2;
};

template <typename T>
void glorot_fill(Matrix<T>& m, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : m.values()) v = static_cast<T>(u(rng));
}

/// Glorot-uniform weights, zero biases, zeroed Adam state.
template <typename T>
ModelParams<T> init_params(const ModelShape& s, std::mt19937_64& rng) {
    if (s.input_dim == 0 || s.hidden_dim == 0 || s.output_dim == 0 || s.classes == 0) {
        throw Error(ErrorCode::InvalidArgument, "neural_core", "model dimensions must be positive");
    }
    if (s.gcn_layers < 0 || s.gcn_layers > 3) {
        throw Error(ErrorCode::InvalidArgument, "neural_core", "gcn_layers must be in {0,1,2,3}");
    }
    if (s.gcn_layers == 0 && s.input_dim != s.output_dim) {
        throw Error(ErrorCode::ShapeMismatch, "neural_core", "a zero-layer GCN needs input_dim == output_dim");
    }
    ModelParams<T> p;
    auto& w = p.weights;
    for (int l = 0; l < s.gcn_layers; ++l) {
        const auto in = l == 0 ? s.input_dim : s.hidden_dim;
        const auto out = l == s.gcn_layers - 1 ? s.output_dim : s.hidden_dim;
        w.gcn.emplace_back(in, out);
        glorot_fill(w.gcn.back(), rng);
    }
    w.proj_w1 = Matrix<T>(s.input_dim, s.hidden_dim);
    glorot_fill(w.proj_w1, rng);
    w.proj_b1 = Matrix<T>(1, s.hidden_dim);
    w.proj_w2 = Matrix<T>(s.hidden_dim, s.output_dim);
    glorot_fill(w.proj_w2, rng);
    w.proj_b2 = Matrix<T>(1, s.output_dim);
    w.prompts = Matrix<T>(s.classes, s.output_dim);
    glorot_fill(w.prompts, rng);
    p.adam.m = w.zeros_like();
    p.adam.v = w.zeros_like();
    return p;
}

// ---------------------------------------------------------------------------
// GCN text projector

template <typename T>
struct GcnTrace {
    std::vector<Matrix<T>> inputs;      // H^(l)
    std::vector<Matrix<T>> propagated;  // D⁻¹A H^(l)
    std::vector<Matrix<T>> pre;         // D⁻¹A H^(l) W^(l)
    std::vector<double> norms;          // ‖H^(L)_i‖
    Matrix<T> ybar;
    Matrix<double> norm_adjacency;
};

template <typename T>
struct GcnResult {
    Matrix<T> ybar;
    GcnTrace<T> trace;
};

template <typename T>
struct GcnGrads {
    std::vector<Matrix<T>> weights;
    Matrix<T> h0;
};

namespace detail {

/// P · H with P double and H in storage precision.
template <typename T>
Matrix<T> propagate(const Matrix<double>& p, const Matrix<T>& h) {
    require_shape(p.cols() == h.rows(), "neural_core", "propagation matrix does not match node count");
    Matrix<T> out(p.rows(), h.cols());
    std::vector<double> acc(h.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < p.cols(); ++k) {
            const double w = p(i, k);
            if (w == 0.0) continue;
            for (std::size_t j = 0; j < h.cols(); ++j) acc[j] += w * static_cast<double>(h(k, j));
        }
        for (std::size_t j = 0; j < h.cols(); ++j) out(i, j) = static_cast<T>(acc[j]);
    }
    return out;
}

/// Pᵀ · G
template <typename T>
Matrix<T> propagate_transposed(const Matrix<double>& p, const Matrix<T>& g) {
    require_shape(p.rows() == g.rows(), "neural_core", "propagation matrix does not match gradient rows");
    std::vector<double> acc(p.cols() * g.cols(), 0.0);
    for (std::size_t k = 0; k < p.rows(); ++k) {
        for (std::size_t i = 0; i < p.cols(); ++i) {
            const double w = p(k, i);
            if (w == 0.0) continue;
            for (std::size_t j = 0; j < g.cols(); ++j) acc[i * g.cols() + j] += w * static_cast<double>(g(k, j));
        }
    }
    Matrix<T> out(p.cols(), g.cols());
    for (std::size_t i = 0; i < acc.size(); ++i) out.values()[i] = static_cast<T>(acc[i]);
    return out;
}

template <typename T>
void relu_inplace(Matrix<T>& m) {
    for (auto& v : m.values()) v = v > T(0) ? v : T(0);
}

} // namespace detail

/// L rounds of H ← σ(D⁻¹A H W), ReLU on all but the last round, then row
/// L2-normalization. With L = 0 the output is h0 normalized.
template <typename T>
GcnResult<T> gcn_forward(const Matrix<double>& norm_adjacency, const Matrix<T>& h0, const Weights<T>& w) {
    require_shape(norm_adjacency.rows() == h0.rows() && norm_adjacency.cols() == h0.rows(), "neural_core",
                  "adjacency is " + std::to_string(norm_adjacency.rows()) + "x" + std::to_string(norm_adjacency.cols()) +
                      " but h0 has " + std::to_string(h0.rows()) + " rows");
    GcnResult<T> r;
    r.trace.norm_adjacency = norm_adjacency;
    Matrix<T> h = h0;
    const auto layers = w.gcn.size();
    for (std::size_t l = 0; l < layers; ++l) {
        require_shape(w.gcn[l].rows() == h.cols(), "neural_core", "gcn layer " + std::to_string(l) + " input width");
        r.trace.inputs.push_back(h);
        r.trace.propagated.push_back(detail::propagate(norm_adjacency, h));
        r.trace.pre.push_back(matmul(r.trace.propagated.back(), w.gcn[l]));
        h = r.trace.pre.back();
        if (l + 1 < layers) detail::relu_inplace(h);
    }
    r.trace.norms = normalize_rows(h);
    r.trace.ybar = h;
    r.ybar = std::move(h);
    return r;
}

template <typename T>
GcnResult<T> gcn_forward(const SemanticGraph& g, const Matrix<T>& h0, const Weights<T>& w) {
    return gcn_forward(g.norm_adjacency, h0, w);
}

template <typename T>
GcnGrads<T> gcn_backward(const GcnTrace<T>& trace, const Weights<T>& w, const Matrix<T>& grad_ybar) {
    require_shape(grad_ybar.same_shape(trace.ybar), "neural_core", "stale trace: ybar gradient shape");
    require_shape(trace.pre.size() == w.gcn.size(), "neural_core", "stale trace: layer count");
    GcnGrads<T> g;
    g.weights.resize(w.gcn.size());
    Matrix<T> grad_h = normalize_rows_backward(trace.ybar, trace.norms, grad_ybar);
    for (std::size_t li = w.gcn.size(); li-- > 0;) {
        require_shape(trace.pre[li].same_shape(grad_h), "neural_core", "stale trace: layer shape");
        Matrix<T> grad_pre = grad_h;
        if (li + 1 < w.gcn.size()) {
            for (std::size_t i = 0; i < grad_pre.size(); ++i) {
                if (!(trace.pre[li].values()[i] > T(0))) grad_pre.values()[i] = T(0);
            }
        }
        g.weights[li] = matmul_tn(trace.propagated[li], grad_pre);
        grad_h = detail::propagate_transposed(trace.norm_adjacency, matmul_nt(grad_pre, w.gcn[li]));
    }
    g.h0 = std::move(grad_h);
    return g;
}

// ---------------------------------------------------------------------------
// Visual projector: z = normalize(ReLU(x W1 + b1) W2 + b2), applied per row

template <typename T>
struct ProjectorTrace {
    Matrix<T> x;
    Matrix<T> pre_hidden;  // x W1 + b1
    Matrix<T> hidden;      // ReLU(pre_hidden)
    std::vector<double> norms;
    Matrix<T> z;
};

template <typename T>
struct ProjectorResult {
    Matrix<T> z;
    ProjectorTrace<T> trace;
};

template <typename T>
struct ProjectorGrads {
    Matrix<T> w1, b1, w2, b2, x;
};

namespace detail {

/// Row-wise affine map x W + b; each output row depends only on its input row.
template <typename T>
Matrix<T> affine_rows(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
    Matrix<T> out(x.rows(), w.cols());
    parallel_for(x.rows(), [&](std::size_t i) {
        std::vector<double> acc(w.cols());
        for (std::size_t j = 0; j < w.cols(); ++j) acc[j] = static_cast<double>(b(0, j));
        const auto xr = x.row(i);
        for (std::size_t k = 0; k < w.rows(); ++k) {
            const double xv = xr[k];
            if (xv == 0.0) continue;
            const auto wr = w.row(k);
            for (std::size_t j = 0; j < w.cols(); ++j) acc[j] += xv * static_cast<double>(wr[j]);
        }
        auto o = out.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) o[j] = static_cast<T>(acc[j]);
    });
    return out;
}

template <typename T>
Matrix<T> column_sums(const Matrix<T>& g) {
    std::vector<double> acc(g.cols(), 0.0);
    for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) acc[j] += static_cast<double>(g(i, j));
    }
    Matrix<T> out(1, g.cols());
    for (std::size_t j = 0; j < g.cols(); ++j) out(0, j) = static_cast<T>(acc[j]);
    return out;
}

} // namespace detail

template <typename T>
ProjectorResult<T> projector_forward(const Matrix<T>& x, const Weights<T>& w) {
    require_shape(x.cols() == w.proj_w1.rows(), "neural_core",
                  "projector expects " + std::to_string(w.proj_w1.rows()) + " input columns, got " +
                      std::to_string(x.cols()));
    if (!all_finite(x)) throw Error(ErrorCode::NonFiniteValue, "neural_core", "projector input is not finite");
    ProjectorResult<T> r;
    r.trace.x = x;
    r.trace.pre_hidden = detail::affine_rows(x, w.proj_w1, w.proj_b1);
    r.trace.hidden = r.trace.pre_hidden;
    detail::relu_inplace(r.trace.hidden);
    r.z = detail::affine_rows(r.trace.hidden, w.proj_w2, w.proj_b2);
    r.trace.norms = normalize_rows(r.z);
    r.trace.z = r.z;
    return r;
}

template <typename T>
ProjectorGrads<T> projector_backward(const ProjectorTrace<T>& trace, const Weights<T>& w, const Matrix<T>& grad_z) {
    require_shape(grad_z.same_shape(trace.z), "neural_core", "stale trace: z gradient shape");
    require_shape(trace.hidden.cols() == w.proj_w2.rows(), "neural_core", "stale trace: hidden width");
    ProjectorGrads<T> g;
    const Matrix<T> grad_v = normalize_rows_backward(trace.z, trace.norms, grad_z);
    g.w2 = matmul_tn(trace.hidden, grad_v);
    g.b2 = detail::column_sums(grad_v);
    Matrix<T> grad_pre = matmul_nt(grad_v, w.proj_w2);
    for (std::size_t i = 0; i < grad_pre.size(); ++i) {
        if (!(trace.pre_hidden.values()[i] > T(0))) grad_pre.values()[i] = T(0);
    }
    g.w1 = matmul_tn(trace.x, grad_pre);
    g.b1 = detail::column_sums(grad_pre);
    g.x = matmul_nt(grad_pre, w.proj_w1);
    return g;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of every tensor. Gradients are checked for
/// finiteness before anything is touched.
template <typename T>
void adam_step(ModelParams<T>& params, const Weights<T>& grads, double lr, const AdamHyper& hp = {}) {
    grads.for_each([](const std::string& name, const Matrix<T>& g) {
        if (!all_finite(g)) throw Error(ErrorCode::NumericFailure, "neural_core", "non-finite gradient for " + name);
    });
    std::vector<const Matrix<T>*> gs;
    grads.for_each([&](const std::string&, const Matrix<T>& g) { gs.push_back(&g); });
    std::vector<Matrix<T>*> ps, ms, vs;
    params.weights.for_each([&](const std::string&, Matrix<T>& m) { ps.push_back(&m); });
    params.adam.m.for_each([&](const std::string&, Matrix<T>& m) { ms.push_back(&m); });
    params.adam.v.for_each([&](const std::string&, Matrix<T>& m) { vs.push_back(&m); });
    require_shape(gs.size() == ps.size() && ms.size() == ps.size() && vs.size() == ps.size(), "neural_core",
                  "gradient tensor count");
    for (std::size_t t = 0; t < ps.size(); ++t) {
        require_shape(gs[t]->same_shape(*ps[t]) && ms[t]->same_shape(*ps[t]) && vs[t]->same_shape(*ps[t]),
                      "neural_core", "gradient tensor shape");
    }

    const std::uint64_t step = params.adam.step + 1;
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
    for (std::size_t t = 0; t < ps.size(); ++t) {
        auto p = ps[t]->values();
        auto m = ms[t]->values();
        auto v = vs[t]->values();
        auto g = gs[t]->values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = hp.beta1 * static_cast<double>(m[i]) + (1.0 - hp.beta1) * gi;
            const double vi = hp.beta2 * static_cast<double>(v[i]) + (1.0 - hp.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * (mi / c1) / (std::sqrt(vi / c2) + hp.eps));
        }
    }
    params.adam.step = step;
    params.weights.for_each([](const std::string& name, const Matrix<T>& m) {
        if (!all_finite(m)) throw Error(ErrorCode::NumericFailure, "neural_core", "parameter " + name + " diverged");
    });
}

} // namespace graphvl

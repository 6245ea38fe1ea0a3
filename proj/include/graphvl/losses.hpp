#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "graphvl/error.hpp"
#include "graphvl/matrix.hpp"

namespace graphvl {

/// u·v / (‖u‖‖v‖)
template <typename A, typename B>
double cosine(std::span<const A> u, std::span<const B> v) {
    if (u.size() != v.size()) throw Error(ErrorCode::ShapeMismatch, "losses", "cosine of vectors of different length");
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (!(nu > 0.0) || !(nv > 0.0)) throw Error(ErrorCode::InvalidArgument, "losses", "cosine of a zero vector");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
    return cosine(std::span<const double>(u), std::span<const double>(v));
}

namespace detail {

/// Row directions and norms of a matrix, in double.
template <typename T>
struct UnitRows {
    Matrix<double> unit;
    std::vector<double> norms;

    explicit UnitRows(const Matrix<T>& m) : unit(m.template cast<double>()) {
        norms.resize(m.rows());
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const double n = norm2(unit.row(i));
            if (!(n > 0.0)) throw Error(ErrorCode::InvalidArgument, "losses", "zero row " + std::to_string(i));
            norms[i] = n;
            for (auto& v : unit.row(i)) v /= n;
        }
    }
};

/// Accumulate dL/du for s = cos(u, v) given dL/ds: (v̂ - s û) / ‖u‖.
inline void add_cosine_grad(std::span<double> grad_u, std::span<const double> u_hat, double u_norm,
                            std::span<const double> v_hat, double s, double dl_ds) {
    if (dl_ds == 0.0) return;
    for (std::size_t j = 0; j < grad_u.size(); ++j) grad_u[j] += dl_ds * (v_hat[j] - s * u_hat[j]) / u_norm;
}

template <typename T>
Matrix<T> to_storage(const Matrix<double>& g) {
    return g.template cast<T>();
}

} // namespace detail

// ---------------------------------------------------------------------------

template <typename T>
struct CmaResult {
    double loss = 0.0;
    Matrix<T> grad_z;
    Matrix<T> grad_ybar;
};

/// Cross-modal margin alignment, averaged over the batch:
///   -log softmax_y(δ(z, ȳ_c)/τ) + Σ_{c≠y} [δ(z, ȳ_c) - δ(z, ȳ_y) + α]_+
/// `as_printed` switches the hinge to Σ_c [δ(z, ȳ_y) - δ(z, ȳ_c) - α]_+.
template <typename T>
CmaResult<T> loss_cma(const Matrix<T>& z, std::span<const int> y_idx, const Matrix<T>& ybar, double alpha,
                      double temperature, bool as_printed = false) {
    require_shape(z.cols() == ybar.cols(), "losses", "z and ybar widths differ");
    require_shape(y_idx.size() == z.rows(), "losses", "one class index per z row");
    if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "losses", "temperature must be > 0");
    const std::size_t b = z.rows();
    const std::size_t c_count = ybar.rows();
    for (auto y : y_idx) {
        if (y < 0 || static_cast<std::size_t>(y) >= c_count) {
            throw Error(ErrorCode::InvalidArgument, "losses", "class index " + std::to_string(y) + " out of range");
        }
    }
    CmaResult<T> r;
    if (b == 0) {
        r.grad_z = Matrix<T>(0, z.cols());
        r.grad_ybar = Matrix<T>(ybar.rows(), ybar.cols());
        return r;
    }
    const detail::UnitRows<T> zu(z);
    const detail::UnitRows<T> yu(ybar);
    Matrix<double> gz(b, z.cols());
    Matrix<double> gy(c_count, ybar.cols());
    std::vector<double> s(c_count), ds(c_count);
    double total = 0.0;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
        const auto y = static_cast<std::size_t>(y_idx[i]);
        for (std::size_t c = 0; c < c_count; ++c) s[c] = std::clamp(dot(zu.unit.row(i), yu.unit.row(c)), -1.0, 1.0);

        double mx = s[0];
        for (auto v : s) mx = std::max(mx, v);
        double denom = 0.0;
        for (auto v : s) denom += std::exp((v - mx) / temperature);
        double loss = std::log(denom) + (mx - s[y]) / temperature;
        for (std::size_t c = 0; c < c_count; ++c) {
            ds[c] = std::exp((s[c] - mx) / temperature) / denom / temperature;
        }
        ds[y] -= 1.0 / temperature;

        for (std::size_t c = 0; c < c_count; ++c) {
            if (as_printed) {
                const double h = s[y] - s[c] - alpha;
                if (h > 0.0) {
                    loss += h;
                    ds[y] += 1.0;
                    ds[c] -= 1.0;
                }
            } else if (c != y) {
                const double h = s[c] - s[y] + alpha;
                if (h > 0.0) {
                    loss += h;
                    ds[c] += 1.0;
                    ds[y] -= 1.0;
                }
            }
        }
        total += loss;
        for (std::size_t c = 0; c < c_count; ++c) {
            const double g = ds[c] * inv_b;
            detail::add_cosine_grad(gz.row(i), zu.unit.row(i), zu.norms[i], yu.unit.row(c), s[c], g);
            detail::add_cosine_grad(gy.row(c), yu.unit.row(c), yu.norms[c], zu.unit.row(i), s[c], g);
        }
    }
    r.loss = total * inv_b;
    r.grad_z = detail::to_storage<T>(gz);
    r.grad_ybar = detail::to_storage<T>(gy);
    return r;
}

// ---------------------------------------------------------------------------

template <typename T>
struct SdpResult {
    double loss = 0.0;
    Matrix<T> grad_anchors;
    Matrix<T> grad_positives;
    Matrix<T> grad_negatives;
};

/// Semantic distinction penalty, averaged over triplets:
///   (1 - δ(a, p)) + [δ(a, n)]_+
/// `as_printed` uses (δ(a, p) - 1) + δ(a, n) instead.
template <typename T>
SdpResult<T> loss_sdp(const Matrix<T>& anchors, const Matrix<T>& positives, const Matrix<T>& negatives,
                      bool as_printed = false) {
    require_shape(anchors.same_shape(positives) && anchors.same_shape(negatives), "losses",
                  "triplet matrices must share a shape");
    const std::size_t m = anchors.rows();
    SdpResult<T> r;
    r.grad_anchors = Matrix<T>(m, anchors.cols());
    r.grad_positives = Matrix<T>(m, anchors.cols());
    r.grad_negatives = Matrix<T>(m, anchors.cols());
    if (m == 0) return r;
    const detail::UnitRows<T> a(anchors), p(positives), n(negatives);
    Matrix<double> ga(m, anchors.cols()), gp(m, anchors.cols()), gn(m, anchors.cols());
    const double inv_m = 1.0 / static_cast<double>(m);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double sap = std::clamp(dot(a.unit.row(i), p.unit.row(i)), -1.0, 1.0);
        const double san = std::clamp(dot(a.unit.row(i), n.unit.row(i)), -1.0, 1.0);
        double d_ap = 0.0, d_an = 0.0;
        if (as_printed) {
            total += (sap - 1.0) + san;
            d_ap = inv_m;
            d_an = inv_m;
        } else {
            total += 1.0 - sap;
            d_ap = -inv_m;
            if (san > 0.0) {
                total += san;
                d_an = inv_m;
            }
        }
        detail::add_cosine_grad(ga.row(i), a.unit.row(i), a.norms[i], p.unit.row(i), sap, d_ap);
        detail::add_cosine_grad(gp.row(i), p.unit.row(i), p.norms[i], a.unit.row(i), sap, d_ap);
        detail::add_cosine_grad(ga.row(i), a.unit.row(i), a.norms[i], n.unit.row(i), san, d_an);
        detail::add_cosine_grad(gn.row(i), n.unit.row(i), n.norms[i], a.unit.row(i), san, d_an);
    }
    r.loss = total * inv_m;
    r.grad_anchors = detail::to_storage<T>(ga);
    r.grad_positives = detail::to_storage<T>(gp);
    r.grad_negatives = detail::to_storage<T>(gn);
    return r;
}

// ---------------------------------------------------------------------------

template <typename T>
struct CsResult {
    double loss = 0.0;
    Matrix<T> grad_t;
};

/// Contextual similarity: ½ Σ_i ‖t_i - μ_i‖². The centers are constants, so
/// only the prompt rows receive a gradient.
template <typename T>
CsResult<T> loss_cs(const Matrix<T>& t, const Matrix<T>& centers) {
    require_shape(t.same_shape(centers), "losses", "prompt and center matrices must share a shape");
    CsResult<T> r;
    r.grad_t = Matrix<T>(t.rows(), t.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double diff = static_cast<double>(t.values()[i]) - static_cast<double>(centers.values()[i]);
        total += diff * diff;
        r.grad_t.values()[i] = static_cast<T>(diff);
    }
    r.loss = 0.5 * total;
    return r;
}

// ---------------------------------------------------------------------------

struct Triplet {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// One triplet per anchor that has both a same-class peer and an other-class
/// sample; the positive and the negative are drawn uniformly from those sets.
template <typename Label>
std::vector<Triplet> sample_triplets(std::span<const Label> labels, std::mt19937_64& rng) {
    std::vector<Triplet> out;
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        pos.clear();
        neg.clear();
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (j == i) continue;
            (labels[j] == labels[i] ? pos : neg).push_back(j);
        }
        if (pos.empty() || neg.empty()) continue;
        const auto p = std::uniform_int_distribution<std::size_t>(0, pos.size() - 1)(rng);
        const auto n = std::uniform_int_distribution<std::size_t>(0, neg.size() - 1)(rng);
        out.push_back({i, pos[p], neg[n]});
    }
    return out;
}

// ---------------------------------------------------------------------------

template <typename T>
struct Batch {
    Matrix<T> z;           // projected visual features [b × d_out]
    std::vector<int> y_idx;
    Matrix<T> ybar;        // GCN class embeddings [|C_kwn| × d_out]
    Matrix<T> t;           // prompt features [|C_kwn| × d_out]
};

struct LossOptions {
    double alpha = 0.3;
    double temperature = 1.0;
    bool as_printed = false;
};

template <typename T>
struct TotalLoss {
    double cma = 0.0;
    double sdp = 0.0;
    double cs = 0.0;
    double total = 0.0;
    Matrix<T> grad_z;
    Matrix<T> grad_ybar;
    Matrix<T> grad_t;
};

/// L_CMA + L_SDP + L_CS with unit weights. The L_CS centers are ybar,
/// detached.
template <typename T>
TotalLoss<T> loss_total(const Batch<T>& batch, std::span<const Triplet> triplets, const LossOptions& opt) {
    TotalLoss<T> r;
    auto cma = loss_cma(batch.z, std::span<const int>(batch.y_idx), batch.ybar, opt.alpha, opt.temperature,
                        opt.as_printed);

    std::vector<std::size_t> ai, pi, ni;
    for (const auto& tr : triplets) {
        if (tr.anchor >= batch.z.rows() || tr.positive >= batch.z.rows() || tr.negative >= batch.z.rows()) {
            throw Error(ErrorCode::InvalidArgument, "losses", "triplet index out of range");
        }
        ai.push_back(tr.anchor);
        pi.push_back(tr.positive);
        ni.push_back(tr.negative);
    }
    auto sdp = loss_sdp(select_rows(batch.z, std::span<const std::size_t>(ai)),
                        select_rows(batch.z, std::span<const std::size_t>(pi)),
                        select_rows(batch.z, std::span<const std::size_t>(ni)), opt.as_printed);
    auto cs = loss_cs(batch.t, batch.ybar);

    r.cma = cma.loss;
    r.sdp = sdp.loss;
    r.cs = cs.loss;
    r.total = r.cma + r.sdp + r.cs;

    Matrix<double> gz = cma.grad_z.template cast<double>();
    auto scatter = [&](const std::vector<std::size_t>& idx, const Matrix<T>& g) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto dst = gz.row(idx[k]);
            const auto src = g.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += static_cast<double>(src[j]);
        }
    };
    scatter(ai, sdp.grad_anchors);
    scatter(pi, sdp.grad_positives);
    scatter(ni, sdp.grad_negatives);
    r.grad_z = gz.template cast<T>();
    r.grad_ybar = std::move(cma.grad_ybar);
    r.grad_t = std::move(cs.grad_t);
    return r;
}

} // namespace graphvl

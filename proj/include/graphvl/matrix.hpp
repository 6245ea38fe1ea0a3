#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "graphvl/error.hpp"

namespace graphvl {

/// Dense row-major matrix. Storage is `T`; every reduction in this header
/// accumulates in double and rounds once on store.
template <typename T>
class Matrix {
public:
    using value_type = T;

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> values)
        : rows_(rows), cols_(cols), data_(std::move(values)) {
        if (data_.size() != rows_ * cols_) {
            throw Error(ErrorCode::ShapeMismatch, "matrix", "value count does not match shape");
        }
    }
    Matrix(std::initializer_list<std::initializer_list<T>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) {
                throw Error(ErrorCode::ShapeMismatch, "matrix", "ragged initializer");
            }
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Matrix<U> cast() const {
        Matrix<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.values()[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

inline void require_shape(bool ok, const char* module, const std::string& what) {
    if (!ok) throw Error(ErrorCode::ShapeMismatch, module, what);
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
    return std::all_of(m.values().begin(), m.values().end(), [](T v) { return std::isfinite(v); });
}

template <typename A, std::size_t EA, typename B, std::size_t EB>
double dot(std::span<A, EA> a, std::span<B, EB> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

template <typename A, std::size_t E>
double norm2(std::span<A, E> a) {
    return std::sqrt(dot(a, a));
}

/// A · B
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    require_shape(a.cols() == b.rows(), "matrix", "matmul inner dimension");
    Matrix<T> out(a.rows(), b.cols());
    std::vector<double> acc(b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) acc[j] += aik * static_cast<double>(brow[j]);
        }
        for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = static_cast<T>(acc[j]);
    }
    return out;
}

/// Aᵀ · B
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
    require_shape(a.rows() == b.rows(), "matrix", "matmul_tn inner dimension");
    std::vector<double> acc(a.cols() * b.cols(), 0.0);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto arow = a.row(k);
        const auto brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* dst = acc.data() + i * b.cols();
            for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aki * static_cast<double>(brow[j]);
        }
    }
    Matrix<T> out(a.cols(), b.cols());
    for (std::size_t i = 0; i < acc.size(); ++i) out.values()[i] = static_cast<T>(acc[i]);
    return out;
}

/// A · Bᵀ
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
    require_shape(a.cols() == b.cols(), "matrix", "matmul_nt inner dimension");
    Matrix<T> out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = static_cast<T>(dot(a.row(i), b.row(j)));
    }
    return out;
}

/// Scale every row to unit L2 norm. Returns the original norms.
/// A zero row is a numeric failure: it has no direction.
template <typename T>
std::vector<double> normalize_rows(Matrix<T>& m) {
    std::vector<double> norms(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        const double n = norm2(std::span<const T>(r));
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw Error(ErrorCode::NumericFailure, "matrix", "cannot normalize zero or non-finite row " + std::to_string(i));
        }
        norms[i] = n;
        for (auto& v : r) v = static_cast<T>(static_cast<double>(v) / n);
    }
    return norms;
}

template <typename T>
Matrix<T> normalized_rows(Matrix<T> m) {
    normalize_rows(m);
    return m;
}

/// Gradient of y = v/‖v‖ pulled back to v: (g - ŷ(ŷ·g)) / ‖v‖.
template <typename T>
Matrix<T> normalize_rows_backward(const Matrix<T>& unit, const std::vector<double>& norms, const Matrix<T>& grad) {
    require_shape(unit.same_shape(grad) && norms.size() == unit.rows(), "matrix", "normalize backward shape");
    Matrix<T> out(unit.rows(), unit.cols());
    for (std::size_t i = 0; i < unit.rows(); ++i) {
        const double proj = dot(unit.row(i), grad.row(i));
        for (std::size_t j = 0; j < unit.cols(); ++j) {
            out(i, j) = static_cast<T>((static_cast<double>(grad(i, j)) - static_cast<double>(unit(i, j)) * proj) / norms[i]);
        }
    }
    return out;
}

template <typename T>
Matrix<T> select_rows(const Matrix<T>& m, std::span<const std::size_t> idx) {
    Matrix<T> out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(m.row(idx[i]).begin(), m.row(idx[i]).end(), out.row(i).begin());
    }
    return out;
}

template <typename T>
Matrix<T> vstack(const Matrix<T>& a, const Matrix<T>& b) {
    require_shape(a.cols() == b.cols() || a.empty() || b.empty(), "matrix", "vstack column count");
    Matrix<T> out(a.rows() + b.rows(), a.empty() ? b.cols() : a.cols());
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

} // namespace graphvl

#pragma once

// Small dense vectors and matrices for the state space R^N.  N is tiny in
// practice (1..10), so everything is plain std::vector storage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sobdde/errors.hpp"

namespace sobdde {

using Vector = std::vector<double>;

enum class VecNorm { L1, L2, Linf };

inline std::string to_string(VecNorm n) {
    switch (n) {
        case VecNorm::L1: return "L1";
        case VecNorm::L2: return "L2";
        case VecNorm::Linf: return "Linf";
    }
    return "?";
}

inline VecNorm vec_norm_from_string(std::string_view s) {
    if (s == "L1" || s == "l1") return VecNorm::L1;
    if (s == "L2" || s == "l2") return VecNorm::L2;
    if (s == "Linf" || s == "linf" || s == "LInf") return VecNorm::Linf;
    throw InvalidArgument("unknown vector norm '" + std::string(s) + "' (expected L1, L2 or Linf)");
}

inline double norm(std::span<const double> v, VecNorm kind) {
    double acc = 0.0;
    switch (kind) {
        case VecNorm::L1:
            for (double x : v) acc += std::abs(x);
            return acc;
        case VecNorm::L2:
            for (double x : v) acc += x * x;
            return std::sqrt(acc);
        case VecNorm::Linf:
            for (double x : v) acc = std::max(acc, std::abs(x));
            return acc;
    }
    return acc;
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Row-major dense matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n, double scale = 1.0) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = scale;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> data() const noexcept { return data_; }

    /// out += alpha * (this * v)
    void gemv_acc(double alpha, std::span<const double> v, std::span<double> out) const {
        for (std::size_t i = 0; i < rows_; ++i) {
            double s = 0.0;
            const double* row = data_.data() + i * cols_;
            for (std::size_t j = 0; j < cols_; ++j) s += row[j] * v[j];
            out[i] += alpha * s;
        }
    }

    Vector operator*(std::span<const double> v) const {
        Vector out(rows_, 0.0);
        gemv_acc(1.0, v, out);
        return out;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

// Largest singular value by power iteration on A^T A.
inline double spectral_norm(const Matrix& a, double rel_tol = 1e-10, int max_iter = 10000) {
    const std::size_t n = a.cols();
    if (n == 0 || a.rows() == 0) return 0.0;
    double frob = 0.0;
    for (double x : a.data()) frob += x * x;
    if (frob == 0.0) return 0.0;

    // Deterministic start vector that is generically not orthogonal to the
    // top singular vector.
    Vector v(n);
    for (std::size_t j = 0; j < n; ++j) v[j] = 1.0 + 0.1 * static_cast<double>(j) + 0.01 * static_cast<double>(j * j);
    double vn = norm(v, VecNorm::L2);
    for (double& x : v) x /= vn;

    double sigma_sq = 0.0;
    Vector av(a.rows());
    Vector atav(n);
    for (int it = 0; it < max_iter; ++it) {
        std::fill(av.begin(), av.end(), 0.0);
        a.gemv_acc(1.0, v, av);
        const double prev = sigma_sq;
        sigma_sq = 0.0;  // Rayleigh quotient v^T A^T A v, |v| = 1
        for (double x : av) sigma_sq += x * x;
        std::fill(atav.begin(), atav.end(), 0.0);
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < n; ++j) atav[j] += a(i, j) * av[i];
        const double nrm = norm(atav, VecNorm::L2);
        if (nrm == 0.0) break;
        for (std::size_t j = 0; j < n; ++j) v[j] = atav[j] / nrm;
        if (it > 0 && std::abs(sigma_sq - prev) <= rel_tol * sigma_sq) break;
    }
    return std::sqrt(sigma_sq);
}

}  // namespace detail

/// Operator norm induced by `kind` on both domain and codomain.
inline double operator_norm(const Matrix& a, VecNorm kind) {
    switch (kind) {
        case VecNorm::L1: {
            double best = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < a.rows(); ++i) s += std::abs(a(i, j));
                best = std::max(best, s);
            }
            return best;
        }
        case VecNorm::Linf: {
            double best = 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < a.cols(); ++j) s += std::abs(a(i, j));
                best = std::max(best, s);
            }
            return best;
        }
        case VecNorm::L2:
            return detail::spectral_norm(a);
    }
    return 0.0;
}

}  // namespace sobdde

#pragma once

// Continuous piecewise-linear functions on a uniform grid, viewed as elements
// of W^{1,p}([a,b], R^N).  The a.e. derivative is the piecewise-constant slope
// function, so every norm below is evaluated in closed form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sobdde/errors.hpp"
#include "sobdde/linalg.hpp"

namespace sobdde {

/// Exponent p of the Sobolev norm together with the norm on R^N.
class PNorm {
public:
    explicit PNorm(double p = 2.0, VecNorm vec = VecNorm::L2) : p_(p), vec_(vec) {
        if (!(p >= 1.0) || !std::isfinite(p))
            throw InvalidArgument("p must be a finite real >= 1, got " + std::to_string(p));
    }

    double p() const noexcept { return p_; }
    VecNorm vec_norm() const noexcept { return vec_; }

    /// Hoelder conjugate; +inf for p = 1.
    double q() const noexcept {
        return p_ == 1.0 ? std::numeric_limits<double>::infinity() : p_ / (p_ - 1.0);
    }

    /// 1/q, which stays finite (0) at p = 1.
    double inv_q() const noexcept { return 1.0 - 1.0 / p_; }

private:
    double p_;
    VecNorm vec_;
};

namespace detail {

// Relative tolerance used to decide that a real quotient is an integer.
inline constexpr double kGridSnap = 1e-9;

inline bool near_integer(double u, long& out) {
    const double r = std::round(u);
    if (std::abs(u - r) <= kGridSnap * std::max(1.0, std::abs(r))) {
        out = static_cast<long>(r);
        return true;
    }
    return false;
}

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

class GridFunction {
public:
    /// `values` holds M+1 rows of length `dim`, row-major.
    GridFunction(double a, double b, std::size_t dim, std::vector<double> values)
        : a_(a), b_(b), dim_(dim), values_(std::move(values)) {
        if (dim_ == 0) throw InvalidArgument("GridFunction: dim must be >= 1");
        if (!(a_ < b_) || !std::isfinite(a_) || !std::isfinite(b_))
            throw InvalidArgument("GridFunction: need finite a < b, got [" + detail::fmt_double(a_) + ", " +
                                  detail::fmt_double(b_) + "]");
        if (values_.size() % dim_ != 0) throw InvalidArgument("GridFunction: value count not a multiple of dim");
        if (values_.size() / dim_ < 2) throw InvalidArgument("GridFunction: need at least one subinterval (M >= 1)");
        m_ = values_.size() / dim_ - 1;
        h_ = (b_ - a_) / static_cast<double>(m_);
    }

    static GridFunction from_rows(double a, double b, const std::vector<Vector>& rows) {
        if (rows.empty()) throw InvalidArgument("GridFunction: no rows");
        const std::size_t dim = rows.front().size();
        std::vector<double> flat;
        flat.reserve(rows.size() * dim);
        for (const auto& r : rows) {
            if (r.size() != dim) throw InvalidArgument("GridFunction: ragged rows");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return GridFunction(a, b, dim, std::move(flat));
    }

    /// Nodal interpolant of `fn` with M subintervals.
    static GridFunction sample(double a, double b, std::size_t m, std::size_t dim,
                               const std::function<Vector(double)>& fn) {
        if (m == 0) throw InvalidArgument("GridFunction: need at least one subinterval (M >= 1)");
        std::vector<double> flat;
        flat.reserve((m + 1) * dim);
        const double h = (b - a) / static_cast<double>(m);
        for (std::size_t k = 0; k <= m; ++k) {
            const double t = k == m ? b : a + static_cast<double>(k) * h;
            Vector v = fn(t);
            if (v.size() != dim) throw InvalidArgument("GridFunction::sample: wrong value dimension");
            flat.insert(flat.end(), v.begin(), v.end());
        }
        return GridFunction(a, b, dim, std::move(flat));
    }

    static GridFunction zero(double a, double b, std::size_t m, std::size_t dim) {
        return GridFunction(a, b, dim, std::vector<double>((m + 1) * dim, 0.0));
    }

    static GridFunction constant(double a, double b, std::size_t m, const Vector& c) {
        std::vector<double> flat;
        flat.reserve((m + 1) * c.size());
        for (std::size_t k = 0; k <= m; ++k) flat.insert(flat.end(), c.begin(), c.end());
        return GridFunction(a, b, c.size(), std::move(flat));
    }

    double a() const noexcept { return a_; }
    double b() const noexcept { return b_; }
    std::size_t intervals() const noexcept { return m_; }
    std::size_t nodes() const noexcept { return m_ + 1; }
    std::size_t dim() const noexcept { return dim_; }
    double step() const noexcept { return h_; }

    double node(std::size_t k) const noexcept {
        return k == m_ ? b_ : a_ + static_cast<double>(k) * h_;
    }

    std::span<const double> value(std::size_t k) const noexcept {
        return {values_.data() + k * dim_, dim_};
    }
    std::span<const double> values() const noexcept { return values_; }

    /// Slope on the k-th open subinterval, k < M.
    Vector slope(std::size_t k) const {
        Vector s(dim_);
        for (std::size_t i = 0; i < dim_; ++i)
            s[i] = (values_[(k + 1) * dim_ + i] - values_[k * dim_ + i]) / h_;
        return s;
    }

    /// True when `t` lies in [a, b] up to 1e-12 (b - a).
    bool contains(double t) const noexcept {
        const double tol = 1e-12 * (b_ - a_);
        return t >= a_ - tol && t <= b_ + tol;
    }

    Vector evaluate(double t) const {
        Vector out(dim_);
        evaluate_into(t, out);
        return out;
    }

    void evaluate_into(double t, std::span<double> out) const {
        check_domain(t);
        const auto [k, w] = locate(t);
        const double* lo = values_.data() + k * dim_;
        if (w == 0.0) {
            std::copy(lo, lo + dim_, out.begin());
            return;
        }
        const double* hi = lo + dim_;
        for (std::size_t i = 0; i < dim_; ++i) out[i] = (1.0 - w) * lo[i] + w * hi[i];
    }

    /// Right-continuous a.e. derivative; at t = b the last slope.
    Vector derivative_at(double t) const {
        check_domain(t);
        auto [k, w] = locate(t);
        (void)w;
        return slope(k);
    }

    /// (interval index, weight in [0,1)) with nodes snapped exactly.
    std::pair<std::size_t, double> locate(double t) const noexcept {
        double u = (t - a_) / h_;
        long kn = 0;
        if (detail::near_integer(u, kn)) {
            if (kn <= 0) return {0, 0.0};
            if (static_cast<std::size_t>(kn) >= m_) return {m_ - 1, 1.0};
            return {static_cast<std::size_t>(kn), 0.0};
        }
        u = std::clamp(u, 0.0, static_cast<double>(m_));
        auto k = static_cast<std::size_t>(std::floor(u));
        if (k >= m_) k = m_ - 1;
        return {k, u - static_cast<double>(k)};
    }

    GridFunction with_values(std::vector<double> values) const {
        return GridFunction(a_, b_, dim_, std::move(values));
    }

    bool same_grid(const GridFunction& o) const noexcept {
        const double tol = 1e-12 * (b_ - a_);
        return m_ == o.m_ && dim_ == o.dim_ && std::abs(a_ - o.a_) <= tol && std::abs(b_ - o.b_) <= tol;
    }

private:
    void check_domain(double t) const {
        if (!contains(t) || !std::isfinite(t))
            throw OutOfDomain("t = " + detail::fmt_double(t) + " outside [" + detail::fmt_double(a_) + ", " +
                              detail::fmt_double(b_) + "]");
    }

    double a_;
    double b_;
    std::size_t dim_;
    std::vector<double> values_;
    std::size_t m_ = 0;
    double h_ = 0.0;
};

// ---------------------------------------------------------------------------
// Norms

inline double sup_norm(const GridFunction& x, const PNorm& nrm) {
    double best = 0.0;
    for (std::size_t k = 0; k < x.nodes(); ++k) best = std::max(best, norm(x.value(k), nrm.vec_norm()));
    return best;
}

/// ||x'||_{L^p}^p, exact for the piecewise-constant derivative.
inline double lp_derivative_norm_pow(const GridFunction& x, const PNorm& nrm) {
    const double h = x.step();
    const double p = nrm.p();
    const std::size_t n = x.dim();
    Vector diff(n);
    double acc = 0.0;
    for (std::size_t k = 0; k < x.intervals(); ++k) {
        auto lo = x.value(k);
        auto hi = x.value(k + 1);
        for (std::size_t i = 0; i < n; ++i) diff[i] = hi[i] - lo[i];
        const double s = norm(diff, nrm.vec_norm()) / h;
        if (s != 0.0) acc += h * (p == 1.0 ? s : p == 2.0 ? s * s : std::pow(s, p));
    }
    return acc;
}

inline double lp_derivative_norm(const GridFunction& x, const PNorm& nrm) {
    return std::pow(lp_derivative_norm_pow(x, nrm), 1.0 / nrm.p());
}

/// (|x(a)|^p + ||x'||_{L^p}^p)^{1/p}
inline double w1p_norm(const GridFunction& x, const PNorm& nrm) {
    const double p = nrm.p();
    const double x0 = norm(x.value(0), nrm.vec_norm());
    const double total = std::pow(x0, p) + lp_derivative_norm_pow(x, nrm);
    return std::pow(total, 1.0 / p);
}

struct NormEquivalence {
    bool low_ok = false;   // ||x||_W <= ||x||_C + ||x'||_p
    bool high_ok = false;  // ||x||_C + ||x'||_p <= 2^{1/q} [(b-a)^{1/q} + 1] ||x||_W
    double w1p = 0.0;
    double sup_plus_deriv = 0.0;
    double constant = 0.0;
};

/// Both sides of the equivalence between the W^{1,p} norm and
/// ||x||_C + ||x'||_{L^p}; comparisons carry a 1e-12 relative slack for
/// the equality cases.
inline NormEquivalence norm_equivalence_bounds(const GridFunction& x, const PNorm& nrm) {
    NormEquivalence r;
    r.w1p = w1p_norm(x, nrm);
    r.sup_plus_deriv = sup_norm(x, nrm) + lp_derivative_norm(x, nrm);
    const double iq = nrm.inv_q();
    r.constant = std::pow(2.0, iq) * (std::pow(x.b() - x.a(), iq) + 1.0);
    constexpr double slack = 1e-12;
    r.low_ok = r.w1p <= r.sup_plus_deriv * (1.0 + slack);
    r.high_ok = r.sup_plus_deriv <= r.constant * r.w1p * (1.0 + slack);
    return r;
}

// ---------------------------------------------------------------------------
// Grid algebra

inline GridFunction combine(double alpha, const GridFunction& x, double beta, const GridFunction& y) {
    if (!x.same_grid(y)) throw GridMismatch("combine: grids differ");
    std::vector<double> out(x.values().size());
    auto xv = x.values();
    auto yv = y.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * xv[i] + beta * yv[i];
    return x.with_values(std::move(out));
}

inline GridFunction operator+(const GridFunction& x, const GridFunction& y) { return combine(1.0, x, 1.0, y); }
inline GridFunction operator*(double alpha, const GridFunction& x) {
    std::vector<double> v(x.values().begin(), x.values().end());
    for (double& e : v) e *= alpha;
    return x.with_values(std::move(v));
}
inline GridFunction operator-(const GridFunction& x, const GridFunction& y) { return combine(1.0, x, -1.0, y); }

/// Number of grid steps `h` in `len`; throws GridMismatch unless integral.
inline std::size_t grid_steps(double len, double h, const char* what) {
    long n = 0;
    if (!(h > 0.0) || !detail::near_integer(len / h, n) || n < 0)
        throw GridMismatch(std::string(what) + ": " + detail::fmt_double(len) + " is not a multiple of the grid step " +
                           detail::fmt_double(h));
    return static_cast<std::size_t>(n);
}

/// theta -> x(t + theta) on [lo, hi].  The grid step of `x` is kept; when
/// `t` is a grid multiple the result is an exact index shift, otherwise
/// nodal values come from linear interpolation.
inline GridFunction shifted_segment(const GridFunction& x, double t, double lo, double hi) {
    const double h = x.step();
    const std::size_t m = grid_steps(hi - lo, h, "segment length");
    if (m == 0) throw InvalidArgument("segment must have positive length");
    if (!x.contains(t + lo) || !x.contains(t + hi))
        throw OutOfDomain("shift t = " + detail::fmt_double(t) + " leaves the domain [" + detail::fmt_double(x.a()) +
                          ", " + detail::fmt_double(x.b()) + "]");
    const std::size_t n = x.dim();
    std::vector<double> out((m + 1) * n);
    long start = 0;
    if (detail::near_integer((t + lo - x.a()) / h, start)) {
        const std::size_t s = static_cast<std::size_t>(std::max(0L, start));
        if (s + m > x.intervals()) throw OutOfDomain("shifted segment runs past the end of the grid");
        auto src = x.values();
        std::copy(src.begin() + static_cast<std::ptrdiff_t>(s * n),
                  src.begin() + static_cast<std::ptrdiff_t>((s + m + 1) * n), out.begin());
    } else {
        for (std::size_t k = 0; k <= m; ++k) {
            const double tk = k == m ? hi : lo + static_cast<double>(k) * h;
            const double arg = std::clamp(t + tk, x.a(), x.b());
            x.evaluate_into(arg, std::span<double>(out.data() + k * n, n));
        }
    }
    return GridFunction(lo, hi, n, std::move(out));
}

/// History R_t x on [-R, 0], where x lives on [-R, T] and 0 <= t <= T.
inline GridFunction history_at(const GridFunction& x, double t) {
    const double r = -x.a();
    if (!(r > 0.0)) throw InvalidArgument("history_at: function must live on [-R, T] with R > 0");
    const double tol = 1e-12 * (x.b() - x.a());
    if (!(t >= -tol && t <= x.b() + tol))
        throw OutOfDomain("history_at: t = " + detail::fmt_double(t) + " outside [0, " + detail::fmt_double(x.b()) + "]");
    return shifted_segment(x, std::clamp(t, 0.0, x.b()), x.a(), 0.0);
}

/// Static prolongation on [-R, T]: phi on [-R, 0], phi(0) afterwards.
inline GridFunction static_prolongation(const GridFunction& phi, double t_end) {
    if (!(t_end > 0.0)) throw GridMismatch("static_prolongation: T must be positive");
    const std::size_t extra = grid_steps(t_end, phi.step(), "static_prolongation: T");
    if (extra == 0) throw GridMismatch("static_prolongation: T must be at least one grid step");
    const std::size_t n = phi.dim();
    std::vector<double> out(phi.values().begin(), phi.values().end());
    out.reserve((phi.nodes() + extra) * n);
    auto last = phi.value(phi.intervals());
    const Vector tail(last.begin(), last.end());
    for (std::size_t k = 0; k < extra; ++k) out.insert(out.end(), tail.begin(), tail.end());
    return GridFunction(phi.a(), t_end, n, std::move(out));
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const GridFunction& x) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t k = 0; k < x.nodes(); ++k) {
        auto v = x.value(k);
        rows.push_back(std::vector<double>(v.begin(), v.end()));
    }
    return {{"a", x.a()}, {"b", x.b()}, {"dim", x.dim()}, {"values", rows}};
}

inline GridFunction grid_function_from_json(const nlohmann::json& j) {
    for (const char* key : {"a", "b", "dim", "values"})
        if (!j.contains(key)) throw InvalidArgument(std::string("GridFunction JSON: missing field '") + key + "'");
    if (!j.at("values").is_array()) throw InvalidArgument("GridFunction JSON: 'values' must be an array of rows");
    const auto dim = j.at("dim").get<std::size_t>();
    std::vector<double> flat;
    for (const auto& row : j.at("values")) {
        std::vector<double> r;
        if (row.is_number()) {
            r.push_back(row.get<double>());
        } else {
            r = row.get<std::vector<double>>();
        }
        if (r.size() != dim)
            throw InvalidArgument("GridFunction JSON: row of length " + std::to_string(r.size()) + ", expected dim " +
                                  std::to_string(dim));
        flat.insert(flat.end(), r.begin(), r.end());
    }
    if (!all_finite(flat)) throw InvalidArgument("GridFunction JSON: non-finite value");
    return GridFunction(j.at("a").get<double>(), j.at("b").get<double>(), dim, std::move(flat));
}

/// One row per node: t, x_1..x_N.
inline void write_csv(std::ostream& os, const GridFunction& x) {
    os << "t";
    for (std::size_t i = 0; i < x.dim(); ++i) os << ",x_" << (i + 1);
    os << '\n';
    os << std::setprecision(17);
    for (std::size_t k = 0; k < x.nodes(); ++k) {
        os << x.node(k);
        for (double v : x.value(k)) os << ',' << v;
        os << '\n';
    }
}

inline void write_csv(const std::string& path, const GridFunction& x) {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open '" + path + "' for writing");
    write_csv(os, x);
}

/// Inverse of write_csv; the first and last t give the interval.
inline GridFunction read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("CSV: empty input");
    std::vector<double> ts;
    std::vector<double> flat;
    std::size_t dim = 0;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw InvalidArgument("CSV: bad number '" + cell + "' on line " + std::to_string(lineno));
            }
        }
        if (row.size() < 2) throw InvalidArgument("CSV: need t and at least one component on line " + std::to_string(lineno));
        if (dim == 0) dim = row.size() - 1;
        if (row.size() - 1 != dim) throw InvalidArgument("CSV: ragged row on line " + std::to_string(lineno));
        ts.push_back(row[0]);
        flat.insert(flat.end(), row.begin() + 1, row.end());
    }
    if (ts.size() < 2) throw InvalidArgument("CSV: need at least two rows");
    return GridFunction(ts.front(), ts.back(), dim, std::move(flat));
}

inline GridFunction read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open '" + path + "'");
    return read_csv(is);
}

}  // namespace sobdde

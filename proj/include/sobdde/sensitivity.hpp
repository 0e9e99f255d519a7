#pragma once

// Derivatives of the solution with respect to the history phi and the
// delay r.  On a contraction window the fixed point y of T satisfies
//
//   eta = A(eta, chi) + xi B,
//
// with A the derivative of T in (y, phi) and B its derivative in r; the
// solution derivative is dx = eta + chibar.  Windows are chained through
// the history of dx.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "sobdde/errors.hpp"
#include "sobdde/grid_function.hpp"
#include "sobdde/linalg.hpp"
#include "sobdde/rhs.hpp"
#include "sobdde/solver.hpp"

namespace sobdde {

struct SensitivityDirection {
    GridFunction chi;  // on [-R, 0]
    double xi = 0.0;

    static SensitivityDirection zero_like(const GridFunction& phi, double xi = 0.0) {
        return {GridFunction::zero(phi.a(), phi.b(), phi.intervals(), phi.dim()), xi};
    }
};

struct SensitivityResult {
    GridFunction eta;  // on [-R, T], zero on [-R, 0]
    GridFunction dx;   // eta + chibar
    int neumann_iters = 0;
    double neumann_ratio = 0.0;
};

struct NeumannOptions {
    PNorm p_norm{2.0, VecNorm::L2};
    double tol = 1e-12;
    int max_iter = 500;
};

namespace detail {

/// Jacobians of f along rho(s_k) = (x(s_k), x(s_k - r)) for the window
/// nodes k0..m, x = y + phibar.
struct Linearization {
    GridFunction x;
    std::size_t k0 = 0;
    std::size_t mm = 0;
    DelayShift shift;
    std::vector<Matrix> d1, d2;  // indexed by k - k0

    Linearization(const GridFunction& y, const GridFunction& phi, double r, const RhsModel& m)
        : x(GridFunction::zero(-1.0, 0.0, 1, 1)) {
        const double big_r = history_length(phi);
        check_delay(r, big_r);
        check_window_pair(y, phi);
        if (phi.dim() != m.dim()) throw GridMismatch("history dimension differs from model dimension");
        x = y + static_prolongation(phi, y.b());
        k0 = phi.intervals();
        mm = x.intervals();
        shift = DelayShift::make(std::min(r, big_r), phi.step());
        const std::size_t n = m.dim();
        Vector delayed(n);
        d1.resize(mm - k0 + 1);
        d2.resize(mm - k0 + 1);
        for (std::size_t k = k0; k <= mm; ++k) {
            shift.sample(x.values(), n, k, delayed);
            m.jacobians(x.value(k), delayed, d1[k - k0], d2[k - k0]);
        }
    }
};

inline std::vector<double> apply_A_flat(const Linearization& lin, std::span<const double> w, std::size_t n) {
    std::vector<double> g((lin.mm + 1) * n, 0.0);
    Vector delayed(n);
    for (std::size_t k = lin.k0; k <= lin.mm; ++k) {
        std::span<double> out(g.data() + k * n, n);
        lin.shift.sample(w, n, k, delayed);
        lin.d1[k - lin.k0].gemv_acc(1.0, w.subspan(k * n, n), out);
        lin.d2[k - lin.k0].gemv_acc(1.0, delayed, out);
    }
    if (!all_finite(g)) throw NonFinite("linearized integrand is not finite");
    return cumulative_trapezoid(g, n, lin.k0, lin.mm, lin.x.step());
}

/// Slope of x on the grid interval containing position `pos` (in steps
/// from x.a()), right-continuous, clamped to the grid.
inline Vector slope_at_position(const GridFunction& x, double pos) {
    long j = static_cast<long>(std::floor(pos + 1e-9));
    j = std::clamp(j, 0L, static_cast<long>(x.intervals()) - 1);
    return x.slope(static_cast<std::size_t>(j));
}

/// -int_0^t D(s) x'(s - r) ds with D averaged over each interval and x'
/// taken on the interval through s_k + h/2 - r.
inline std::vector<double> delay_derivative_integral(const GridFunction& x, std::size_t k0, std::size_t mm, double r,
                                                     const std::vector<Matrix>& d) {
    const std::size_t n = x.dim();
    const double h = x.step();
    std::vector<double> out((mm + 1) * n, 0.0);
    Vector acc(n);
    for (std::size_t k = k0; k < mm; ++k) {
        const Vector xs = slope_at_position(x, static_cast<double>(k) + 0.5 - r / h);
        std::fill(acc.begin(), acc.end(), 0.0);
        d[k - k0].gemv_acc(0.5, xs, acc);
        d[k + 1 - k0].gemv_acc(0.5, xs, acc);
        for (std::size_t c = 0; c < n; ++c) out[(k + 1) * n + c] = out[k * n + c] - h * acc[c];
    }
    if (!all_finite(out)) throw NonFinite("delay derivative integrand is not finite");
    return out;
}

}  // namespace detail

/// A(eta, chi)(t) = int_0^t D1f(rho) w(s) + D2f(rho) w(s - r) ds, w = eta + chibar.
inline GridFunction apply_A(const GridFunction& y, const GridFunction& phi, double r, const RhsModel& m,
                            const GridFunction& eta, const GridFunction& chi) {
    if (!eta.same_grid(y)) throw GridMismatch("eta must live on the grid of y");
    if (!chi.same_grid(phi)) throw GridMismatch("chi must live on the grid of phi");
    const detail::Linearization lin(y, phi, r, m);
    const GridFunction w = eta + static_prolongation(chi, y.b());
    return y.with_values(detail::apply_A_flat(lin, w.values(), m.dim()));
}

/// B(t) = -int_0^t D2f(rho(s)) (y + phibar)'(s - r) ds.
inline GridFunction compute_B(const GridFunction& y, const GridFunction& phi, double r, const RhsModel& m) {
    const detail::Linearization lin(y, phi, r, m);
    return y.with_values(detail::delay_derivative_integral(lin.x, lin.k0, lin.mm, r, lin.d2));
}

/// B for f = f(v): -int_0^t Df(phi(s - r)) phi'(s - r) ds, T <= r.
inline GridFunction compute_B_special(const GridFunction& phi, double r, const RhsModel& m1, double t_end) {
    const double big_r = detail::history_length(phi);
    detail::check_delay(r, big_r);
    if (!(r > 0.0)) throw DomainViolation("compute_B_special needs r > 0");
    if (t_end > r * (1.0 + 1e-12)) throw DomainViolation("compute_B_special needs T <= r");
    const std::size_t steps = grid_steps(t_end, phi.step(), "T");
    if (steps == 0) throw DomainViolation("T must be at least one grid step");
    const std::size_t n = m1.dim();
    const GridFunction phibar = static_prolongation(phi, t_end);
    const std::size_t k0 = phi.intervals();
    const std::size_t mm = k0 + steps;
    const auto shift = detail::DelayShift::make(r, phi.step());
    const Vector zeros(n, 0.0);
    Vector delayed(n);
    Matrix d1;
    std::vector<Matrix> d(mm - k0 + 1);
    for (std::size_t k = k0; k <= mm; ++k) {
        shift.sample(phibar.values(), n, k, delayed);
        m1.jacobians(zeros, delayed, d1, d[k - k0]);
    }
    return phibar.with_values(detail::delay_derivative_integral(phibar, k0, mm, r, d));
}

/// Solves eta = A(eta, chi) + xi B by the Neumann iteration from eta = 0.
inline SensitivityResult neumann_solve(const GridFunction& y, const GridFunction& phi, double r, const RhsModel& m,
                                       const SensitivityDirection& dir, const NeumannOptions& opt = {}) {
    if (!dir.chi.same_grid(phi)) throw GridMismatch("direction chi must live on the grid of phi");
    if (!std::isfinite(dir.xi)) throw InvalidArgument("direction xi must be finite");
    const detail::Linearization lin(y, phi, r, m);
    const std::size_t n = m.dim();
    const GridFunction chibar = static_prolongation(dir.chi, y.b());

    // Constant part: A(0, chi) + xi B.
    std::vector<double> base = detail::apply_A_flat(lin, chibar.values(), n);
    if (dir.xi != 0.0) {
        const auto b = detail::delay_derivative_integral(lin.x, lin.k0, lin.mm, r, lin.d2);
        for (std::size_t i = 0; i < base.size(); ++i) base[i] += dir.xi * b[i];
    }

    const auto w1p_flat = [&](const std::vector<double>& v) {
        return w1p_norm(GridFunction(y.a(), y.b(), n, v), opt.p_norm);
    };
    constexpr double eps = std::numeric_limits<double>::epsilon();

    // eta_1 = base; afterwards increments obey d_{k+1} = A(d_k, 0).
    std::vector<double> eta = base;
    std::vector<double> inc = base;
    double prev = w1p_flat(inc);
    const double floor0 = 64.0 * eps * std::max(1.0, prev) * std::sqrt(static_cast<double>(lin.mm));
    double ratio = 0.0;
    int iters = 1;
    int growth = 0;
    while (prev > std::max(opt.tol, floor0)) {
        if (iters >= opt.max_iter)
            throw NoConvergence("Neumann iteration did not converge in " + std::to_string(opt.max_iter) +
                                    " iterations (observed ratio " + detail::fmt_double(ratio) + ")",
                                ratio);
        inc = detail::apply_A_flat(lin, inc, n);
        for (std::size_t i = 0; i < eta.size(); ++i) eta[i] += inc[i];
        const double cur = w1p_flat(inc);
        if (!std::isfinite(cur)) throw NonFinite("Neumann iterate is not finite");
        const double floor = 64.0 * eps * std::max(1.0, w1p_flat(eta)) * std::sqrt(static_cast<double>(lin.mm));
        if (prev > floor && cur > floor) {
            ratio = std::max(ratio, cur / prev);
            growth = cur >= prev ? growth + 1 : 0;
            if (growth >= 3)
                throw NoConvergence("Neumann iteration diverges (observed ratio " + detail::fmt_double(ratio) + ")",
                                    ratio);
        }
        ++iters;
        prev = cur;
        if (cur <= std::max(opt.tol, floor)) break;
    }

    GridFunction eta_gf(y.a(), y.b(), n, std::move(eta));
    GridFunction dx = eta_gf + chibar;
    return {std::move(eta_gf), std::move(dx), iters, ratio};
}

struct SensitivityWindow {
    double start = 0.0;
    double length = 0.0;
    int neumann_iters = 0;
    double neumann_ratio = 0.0;
    double picard_ratio = 0.0;
};

struct SensitivityTrajectory {
    GridFunction dx;  // on [-R, t_reached]
    std::vector<SensitivityWindow> windows;
};

/// Chains window derivatives along a solve: window k uses the history of
/// dx at its start as chi and the same xi throughout.
inline SensitivityTrajectory propagate_sensitivity(const SolveResult& sol, const GridFunction& phi, double r,
                                                   const RhsModel& m, const SensitivityDirection& dir,
                                                   const SolveConfig& cfg) {
    if (!dir.chi.same_grid(phi)) throw GridMismatch("direction chi must live on the grid of phi");
    const std::size_t n = m.dim();
    const double big_r = detail::history_length(phi);
    const std::size_t hist = phi.intervals();
    const NeumannOptions opt{cfg.p_norm, 1e-12, 500};

    SensitivityTrajectory out{dir.chi, {}};
    std::vector<double> flat(dir.chi.values().begin(), dir.chi.values().end());
    GridFunction chi = dir.chi;
    double t = 0.0;
    for (std::size_t w = 0; w < sol.windows.size(); ++w) {
        const WindowInfo& info = sol.windows[w];
        const GridFunction hist_x = history_at(sol.trajectory, t);
        const GridFunction seg = shifted_segment(sol.trajectory, t, -big_r, info.length);
        const GridFunction y = seg - static_prolongation(hist_x, info.length);
        const SensitivityResult sr = [&] {
            try {
                return neumann_solve(y, hist_x, r, m, {chi, dir.xi}, opt);
            } catch (const NoConvergence& e) {
                throw NoConvergence(std::string(e.what()) + " in window " + std::to_string(w), e.ratio(),
                                    static_cast<int>(w));
            }
        }();
        const auto& v = sr.dx.values();
        flat.insert(flat.end(), v.begin() + static_cast<std::ptrdiff_t>((hist + 1) * n), v.end());
        t += info.length;
        out.windows.push_back({info.start, info.length, sr.neumann_iters, sr.neumann_ratio, info.measured_ratio});
        chi = history_at(sr.dx, info.length);
    }
    if (!sol.windows.empty()) out.dx = GridFunction(phi.a(), t, n, std::move(flat));
    return out;
}

/// Solve followed by propagate_sensitivity; throws when the solve escapes.
inline SensitivityTrajectory solution_derivative(const GridFunction& phi, double r, const RhsModel& m,
                                                 const SensitivityDirection& dir, const SolveConfig& cfg) {
    const SolveResult sol = solve(phi, r, m, cfg);
    if (sol.escaped) throw Error("solution escaped at t = " + detail::fmt_double(sol.t_reached) + ": " + sol.escape_reason);
    return propagate_sensitivity(sol, phi, r, m, dir, cfg);
}

enum class FdScheme { Central, Forward, Backward };

inline const char* to_string(FdScheme s) {
    switch (s) {
        case FdScheme::Central: return "central";
        case FdScheme::Forward: return "forward";
        case FdScheme::Backward: return "backward";
    }
    return "?";
}

struct FdRow {
    double eps = 0.0;
    double err = 0.0;
    FdScheme scheme = FdScheme::Central;
};

/// err(eps) = || difference quotient of x along (chi, xi) - dx ||_{W^{1,p}[-R, t_end]}.
/// Central quotients in the interior; one-sided where r +- eps xi leaves [0, R].
inline std::vector<FdRow> fd_check(const GridFunction& phi, double r, const RhsModel& m,
                                   const SensitivityDirection& dir, const SolveConfig& cfg,
                                   const std::vector<double>& eps_list) {
    const double big_r = detail::history_length(phi);
    detail::check_delay(r, big_r);
    const GridFunction dx = solution_derivative(phi, r, m, dir, cfg).dx;
    const SolveResult base = solve(phi, r, m, cfg);

    auto perturbed = [&](double e) {
        const double rr = std::clamp(r + e * dir.xi, 0.0, big_r);
        const SolveResult s = solve(combine(1.0, phi, e, dir.chi), rr, m, cfg);
        if (s.escaped) throw Error("perturbed solve escaped at t = " + detail::fmt_double(s.t_reached));
        return s.trajectory;
    };

    std::vector<FdRow> rows;
    for (double e : eps_list) {
        if (!(e > 0.0)) throw InvalidArgument("fd_check: eps must be positive");
        const double tol = 1e-12 * big_r;
        const bool up_ok = r + e * dir.xi <= big_r + tol && r + e * dir.xi >= -tol;
        const bool down_ok = r - e * dir.xi <= big_r + tol && r - e * dir.xi >= -tol;
        FdRow row{e, 0.0, FdScheme::Central};
        GridFunction quotient = dx;
        if (up_ok && down_ok) {
            quotient = combine(0.5 / e, perturbed(e), -0.5 / e, perturbed(-e));
        } else if (up_ok) {
            row.scheme = FdScheme::Forward;
            quotient = combine(1.0 / e, perturbed(e), -1.0 / e, base.trajectory);
        } else if (down_ok) {
            row.scheme = FdScheme::Backward;
            quotient = combine(1.0 / e, base.trajectory, -1.0 / e, perturbed(-e));
        } else {
            throw DomainViolation("fd_check: r +- eps xi leaves [0, R] on both sides for eps = " + detail::fmt_double(e));
        }
        row.err = w1p_norm(quotient - dx, cfg.p_norm);
        rows.push_back(row);
    }
    return rows;
}

struct CounterexampleValue {
    Vector value;
    Vector left_dq;
    Vector right_dq;
};

/// x(t; phi, r_c) = phi(0) + t phi(-c) for the time-dependent delay r_c,
/// with one-sided difference quotients in c.
inline CounterexampleValue counterexample_time_dependent(const GridFunction& phi, double c, double t,
                                                         double step = 1e-6) {
    const double big_r = detail::history_length(phi);
    if (!(c >= 0.0 && c <= big_r) || !std::isfinite(c))
        throw DomainViolation("counterexample needs c in [0, R], got " + detail::fmt_double(c));
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainViolation("counterexample needs t >= 0");
    const Vector p0 = phi.evaluate(0.0);
    auto value = [&](double cc) {
        Vector v = phi.evaluate(-cc);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = p0[i] + t * v[i];
        return v;
    };
    CounterexampleValue out;
    out.value = value(c);
    const bool has_left = c - step >= 0.0;
    const bool has_right = c + step <= big_r;
    const std::size_t n = phi.dim();
    out.left_dq.assign(n, 0.0);
    out.right_dq.assign(n, 0.0);
    if (has_left) {
        const Vector lo = value(c - step);
        for (std::size_t i = 0; i < n; ++i) out.left_dq[i] = (out.value[i] - lo[i]) / step;
    }
    if (has_right) {
        const Vector hi = value(c + step);
        for (std::size_t i = 0; i < n; ++i) out.right_dq[i] = (hi[i] - out.value[i]) / step;
    }
    // At an end of [0, R] only one quotient exists.
    if (!has_left) out.left_dq = out.right_dq;
    if (!has_right) out.right_dq = out.left_dq;
    return out;
}

}  // namespace sobdde

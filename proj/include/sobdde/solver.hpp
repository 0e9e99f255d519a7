#pragma once

// Existence machinery for x'(t) = f(x(t), x(t - r)) with history phi on
// [-R, 0]: the integral operator
//
//   T(y, phi, r)(t) = int_0^t f((y + phibar)(s), (y + phibar)(s - r)) ds,
//
// Picard iteration on contraction windows, continuation window by window,
// and the time-t maps of the resulting semiflow.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sobdde/errors.hpp"
#include "sobdde/grid_function.hpp"
#include "sobdde/linalg.hpp"
#include "sobdde/rhs.hpp"

namespace sobdde {

struct SolveConfig {
    PNorm p_norm{2.0, VecNorm::L2};
    double h = 1e-3;
    /// Ball radius for the fixed-point set; unset means
    /// delta_scale * (||phi||_C + 1) for the current history.
    std::optional<double> delta;
    double delta_scale = 1.0;
    double contraction_target = 0.5;
    double picard_tol = 1e-12;
    int picard_max_iter = 200;
    double blowup_bound = 1e8;
    double t_end = 1.0;
    /// Window lengths never exceed this; with T <= 1 the sup norm of a
    /// window increment is bounded by its W^{1,p} norm.
    double max_window = 1.0;
    std::size_t lipschitz_samples = 64;
    int max_retries = 10;

    void validate() const {
        if (!(contraction_target > 0.0 && contraction_target < 1.0))
            throw InvalidArgument("contraction_target must lie in (0, 1)");
        if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("grid step h must be positive");
        if (!(t_end > 0.0) || !std::isfinite(t_end)) throw InvalidArgument("t_end must be positive");
        if (delta && !(*delta > 0.0)) throw InvalidArgument("delta must be positive");
        if (!(delta_scale > 0.0)) throw InvalidArgument("delta_scale must be positive");
        if (!(picard_tol > 0.0)) throw InvalidArgument("picard_tol must be positive");
        if (picard_max_iter < 1) throw InvalidArgument("picard_max_iter must be >= 1");
        if (!(blowup_bound > 0.0)) throw InvalidArgument("blowup_bound must be positive");
        if (!(max_window > 0.0)) throw InvalidArgument("max_window must be positive");
        if (max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
    }

    double delta_for(double phi_sup) const { return delta ? *delta : delta_scale * (phi_sup + 1.0); }
};

struct WindowInfo {
    double start = 0.0;
    double length = 0.0;
    int picard_iters = 0;
    double measured_ratio = 0.0;
    double lipschitz = 0.0;    // sampled L with safety factor
    double bound = 0.0;        // sampled sup |f| on the ball
    double delta = 0.0;
    double certificate = 0.0;  // 2 L T^{1/p}
    int retries = 0;
    bool certified = true;     // measured_ratio <= certificate
};

struct SolveResult {
    GridFunction trajectory;  // on [-R, t_reached]
    double t_reached = 0.0;
    bool escaped = false;
    std::string escape_reason;
    std::vector<WindowInfo> windows;
};

namespace detail {

inline double history_length(const GridFunction& phi) {
    if (!(phi.b() == 0.0 || std::abs(phi.b()) <= 1e-12 * (phi.b() - phi.a())) || !(phi.a() < 0.0))
        throw InvalidArgument("history must live on [-R, 0] with R > 0");
    return -phi.a();
}

inline void check_delay(double r, double big_r) {
    const double tol = 1e-12 * big_r;
    if (!(r >= -tol && r <= big_r + tol) || !std::isfinite(r))
        throw DomainViolation("delay r = " + fmt_double(r) + " outside [0, R] = [0, " + fmt_double(big_r) + "]");
}

/// Location of s_k - r on the grid, expressed in grid steps.
struct DelayShift {
    bool exact = true;
    std::size_t steps = 0;  // exact case: index offset
    double frac_steps = 0.0;

    static DelayShift make(double r, double h) {
        DelayShift d;
        const double rs = std::max(0.0, r / h);
        long n = 0;
        if (near_integer(rs, n)) {
            d.exact = true;
            d.steps = static_cast<std::size_t>(std::max(0L, n));
        } else {
            d.exact = false;
            d.frac_steps = rs;
        }
        return d;
    }

    /// Writes x(s_k - r) into out; requires k >= r / h.
    void sample(std::span<const double> xv, std::size_t n, std::size_t k, std::span<double> out) const {
        if (exact) {
            const double* src = xv.data() + (k - steps) * n;
            std::copy(src, src + n, out.begin());
            return;
        }
        const double pos = static_cast<double>(k) - frac_steps;
        auto i = static_cast<std::size_t>(std::floor(pos));
        double w = pos - static_cast<double>(i);
        if (pos <= 0.0) {
            i = 0;
            w = 0.0;
        }
        const double* lo = xv.data() + i * n;
        if (w == 0.0) {
            std::copy(lo, lo + n, out.begin());
            return;
        }
        const double* hi = lo + n;
        for (std::size_t c = 0; c < n; ++c) out[c] = (1.0 - w) * lo[c] + w * hi[c];
    }
};

/// Cumulative composite trapezoid of nodal integrand values g_k over the
/// nodes k0..m; returns flat values, zero on nodes 0..k0.
inline std::vector<double> cumulative_trapezoid(std::span<const double> g, std::size_t n, std::size_t k0,
                                                std::size_t m, double h) {
    std::vector<double> out((m + 1) * n, 0.0);
    for (std::size_t k = k0; k < m; ++k)
        for (std::size_t c = 0; c < n; ++c)
            out[(k + 1) * n + c] = out[k * n + c] + 0.5 * h * (g[k * n + c] + g[(k + 1) * n + c]);
    return out;
}

/// Nodal integrand g_k = f(x(s_k), x(s_k - r)) for k >= k0.
inline std::vector<double> rhs_integrand(const RhsModel& m, std::span<const double> xv, std::size_t k0,
                                         std::size_t mm, const DelayShift& shift) {
    const std::size_t n = m.dim();
    std::vector<double> g((mm + 1) * n, 0.0);
    Vector delayed(n);
    for (std::size_t k = k0; k <= mm; ++k) {
        shift.sample(xv, n, k, delayed);
        m.eval_into(xv.subspan(k * n, n), delayed, std::span<double>(g.data() + k * n, n));
    }
    return g;
}

inline void check_window_pair(const GridFunction& y, const GridFunction& phi) {
    const double big_r = history_length(phi);
    if (std::abs(y.a() - phi.a()) > 1e-12 * big_r || y.dim() != phi.dim())
        throw GridMismatch("window function and history have different left endpoints or dimensions");
    if (!(y.b() > 0.0)) throw GridMismatch("window must extend past 0");
    if (std::abs(y.step() - phi.step()) > 1e-9 * phi.step())
        throw GridMismatch("window function and history have different grid steps");
}

}  // namespace detail

/// T(y, phi, r) on [-R, T]; y lives on [-R, T] and vanishes on [-R, 0].
inline GridFunction apply_T(const GridFunction& y, const GridFunction& phi, double r, const RhsModel& m) {
    const double big_r = detail::history_length(phi);
    detail::check_delay(r, big_r);
    detail::check_window_pair(y, phi);
    if (phi.dim() != m.dim()) throw GridMismatch("history dimension differs from model dimension");
    const GridFunction x = y + static_prolongation(phi, y.b());
    const std::size_t k0 = phi.intervals();
    const auto shift = detail::DelayShift::make(std::min(r, big_r), phi.step());
    const auto g = detail::rhs_integrand(m, x.values(), k0, x.intervals(), shift);
    return y.with_values(detail::cumulative_trapezoid(g, m.dim(), k0, x.intervals(), x.step()));
}

struct WindowChoice {
    double length = 0.0;
    std::size_t steps = 0;
    double lipschitz = 0.0;
    double bound = 0.0;
    double delta = 0.0;
};

/// Window length min((c/(2L))^p, (delta/M)^p, remaining, max_window),
/// rounded down to a multiple of h.  L and M are sampled on the box of
/// radius 2 (delta + ||phi||_C) in each of u and v.
inline WindowChoice choose_window(const GridFunction& phi, double r, const RhsModel& m, const SolveConfig& cfg,
                                  double remaining) {
    (void)r;  // the ball, hence L and M, is uniform in r over [0, R]
    const double p = cfg.p_norm.p();
    const double phi_sup = sup_norm(phi, cfg.p_norm);
    WindowChoice w;
    w.delta = cfg.delta_for(phi_sup);
    const double radius = 2.0 * (w.delta + phi_sup);
    const auto est = estimate_on_box(m, Box::symmetric(m.dim(), radius), cfg.lipschitz_samples, cfg.p_norm.vec_norm());
    w.lipschitz = est.lipschitz;
    w.bound = est.bound;
    const double inf = std::numeric_limits<double>::infinity();
    const double t_contract = w.lipschitz > 0.0 ? std::pow(cfg.contraction_target / (2.0 * w.lipschitz), p) : inf;
    const double t_well = w.bound > 0.0 ? std::pow(w.delta / w.bound, p) : inf;
    const double t = std::min({t_contract, t_well, remaining, cfg.max_window});
    const double steps = std::floor(t / cfg.h + 1e-9);
    if (!(steps >= 1.0))
        throw WindowTooSmall("contraction window " + detail::fmt_double(t) + " is shorter than the grid step " +
                             detail::fmt_double(cfg.h));
    w.steps = static_cast<std::size_t>(steps);
    w.length = static_cast<double>(w.steps) * cfg.h;
    return w;
}

inline WindowChoice choose_window(const GridFunction& phi, double r, const RhsModel& m, const SolveConfig& cfg) {
    return choose_window(phi, r, m, cfg, cfg.t_end);
}

struct PicardResult {
    GridFunction y;
    int iters = 0;
    double measured_ratio = 0.0;
};

/// Picard iteration y_{k+1} = T(y_k) from y_0 = 0 on [-R, T].
inline PicardResult picard_window(const GridFunction& phi, double r, const RhsModel& m, double t_window,
                                  const SolveConfig& cfg) {
    const std::size_t steps = grid_steps(t_window, phi.step(), "window length");
    if (steps == 0) throw WindowTooSmall("window length must be at least one grid step");
    const double big_r = detail::history_length(phi);
    detail::check_delay(r, big_r);
    const std::size_t n = m.dim();
    const std::size_t k0 = phi.intervals();
    const std::size_t mm = k0 + steps;
    const double h = phi.step();
    const auto shift = detail::DelayShift::make(std::min(r, big_r), h);

    // x = y + phibar kept as one flat buffer; only nodes past k0 change.
    const GridFunction phibar = static_prolongation(phi, t_window);
    std::vector<double> x(phibar.values().begin(), phibar.values().end());
    std::vector<double> y((mm + 1) * n, 0.0);
    const auto& base = phibar.values();

    const auto w1p_of_flat = [&](const std::vector<double>& v) {
        return w1p_norm(GridFunction(phi.a(), t_window, n, v), cfg.p_norm);
    };

    double prev_inc = -1.0;
    double ratio = 0.0;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (int it = 1; it <= cfg.picard_max_iter; ++it) {
        const auto g = detail::rhs_integrand(m, x, k0, mm, shift);
        auto y_next = detail::cumulative_trapezoid(g, n, k0, mm, h);
        std::vector<double> diff(y_next.size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = y_next[i] - y[i];
        const double inc = w1p_of_flat(diff);
        if (!std::isfinite(inc)) throw NonFinite("Picard iterate is not finite");
        const double size = w1p_of_flat(y_next);
        const double floor = 64.0 * eps * std::max(1.0, size) * std::sqrt(static_cast<double>(mm));
        if (prev_inc > floor) ratio = std::max(ratio, inc / prev_inc);
        y = std::move(y_next);
        for (std::size_t i = k0 * n; i < x.size(); ++i) x[i] = y[i] + base[i];
        if (inc <= std::max(cfg.picard_tol, floor)) {
            return {GridFunction(phi.a(), t_window, n, std::move(y)), it, ratio};
        }
        prev_inc = inc;
    }
    throw NoConvergence("Picard iteration did not converge in " + std::to_string(cfg.picard_max_iter) +
                            " iterations (observed ratio " + detail::fmt_double(ratio) + ")",
                        ratio);
}

namespace detail {

inline void check_solve_inputs(const GridFunction& phi, double r, const RhsModel& m, const SolveConfig& cfg) {
    cfg.validate();
    const double big_r = history_length(phi);
    check_delay(r, big_r);
    if (phi.dim() != m.dim())
        throw GridMismatch("history has dimension " + std::to_string(phi.dim()) + ", model has " +
                           std::to_string(m.dim()));
    if (std::abs(phi.step() - cfg.h) > 1e-9 * cfg.h)
        throw GridMismatch("history grid step " + fmt_double(phi.step()) + " differs from h = " + fmt_double(cfg.h));
    if (!all_finite(phi.values())) throw InvalidArgument("history contains non-finite values");
}

}  // namespace detail

/// Continues the solution window by window until t_end or escape.  Escape
/// (norm above blowup_bound, window collapse, or failure of every retry) is
/// reported in the result, never thrown.
inline SolveResult solve(const GridFunction& phi, double r, const RhsModel& m, const SolveConfig& cfg) {
    detail::check_solve_inputs(phi, r, m, cfg);
    const double h = cfg.h;
    const std::size_t n = m.dim();
    const std::size_t hist = phi.intervals();
    const auto end_steps = static_cast<std::size_t>(std::floor(cfg.t_end / h + 1e-9));
    if (end_steps == 0) throw InvalidArgument("t_end is shorter than one grid step");

    SolveResult res{phi, 0.0, false, {}, {}};
    std::vector<double> traj(phi.values().begin(), phi.values().end());
    GridFunction history = phi;
    std::size_t done = 0;

    auto escape = [&](std::string why) {
        res.escaped = true;
        res.escape_reason = std::move(why);
    };

    while (done < end_steps && !res.escaped) {
        const double start = static_cast<double>(done) * h;
        WindowChoice choice;
        try {
            choice = choose_window(history, r, m, cfg, static_cast<double>(end_steps - done) * h);
        } catch (const WindowTooSmall& e) {
            escape(std::string("window collapse: ") + e.what());
            break;
        } catch (const NonFinite& e) {
            escape(std::string("non-finite: ") + e.what());
            break;
        }

        std::size_t steps = choice.steps;
        std::optional<PicardResult> accepted;
        WindowInfo info;
        std::string failure;
        for (int attempt = 0; attempt <= cfg.max_retries && steps >= 1; ++attempt) {
            const double len = static_cast<double>(steps) * h;
            const double cert = 2.0 * choice.lipschitz * std::pow(len, 1.0 / cfg.p_norm.p());
            try {
                PicardResult pr = picard_window(history, r, m, len, cfg);
                const bool in_ball = sup_norm(pr.y, cfg.p_norm) <= choice.delta * (1.0 + 1e-12);
                const bool certified = pr.measured_ratio <= cert * (1.0 + 1e-9) + 1e-12;
                info = WindowInfo{start,         len,  pr.iters,   pr.measured_ratio, choice.lipschitz,
                                  choice.bound,  choice.delta, cert, attempt, certified};
                if ((in_ball && certified) || attempt == cfg.max_retries || steps == 1) {
                    if (in_ball) accepted = std::move(pr);
                    else failure = "fixed point left the ball of radius delta";
                    break;
                }
            } catch (const NoConvergence& e) {
                failure = e.what();
            } catch (const NonFinite& e) {
                failure = e.what();
            }
            steps /= 2;
        }
        if (!accepted) {
            escape("window failed after retries: " + (failure.empty() ? std::string("no admissible length") : failure));
            break;
        }

        // Splice x = y + phibar for the new nodes, stopping at the blow-up bound.
        const auto& y = accepted->y;
        const std::size_t w_steps = y.intervals() - hist;
        auto last_hist = history.value(hist);
        std::size_t kept = 0;
        for (std::size_t k = 1; k <= w_steps; ++k) {
            Vector xk(n);
            auto yk = y.value(hist + k);
            for (std::size_t c = 0; c < n; ++c) xk[c] = yk[c] + last_hist[c];
            if (!all_finite(xk) || norm(xk, cfg.p_norm.vec_norm()) > cfg.blowup_bound) {
                escape("blow-up: |x| exceeded " + detail::fmt_double(cfg.blowup_bound));
                break;
            }
            traj.insert(traj.end(), xk.begin(), xk.end());
            ++kept;
        }
        if (kept > 0) {
            info.length = static_cast<double>(kept) * h;
            res.windows.push_back(info);
        }
        done += kept;
        if (kept > 0) {
            std::vector<double> hv(traj.end() - static_cast<std::ptrdiff_t>((hist + 1) * n), traj.end());
            history = GridFunction(phi.a(), 0.0, n, std::move(hv));
        }
    }

    res.t_reached = static_cast<double>(done) * h;
    if (done > 0) res.trajectory = GridFunction(phi.a(), res.t_reached, n, std::move(traj));
    return res;
}

/// Method of steps for x' = f(x(t - r)) on [0, T], T <= r: direct
/// quadrature of s -> f(phi(s - r)).  The model's first argument is
/// ignored (zeros are passed).
inline GridFunction solve_steps_special(const GridFunction& phi, double r, const RhsModel& m1, double t_end) {
    const double big_r = detail::history_length(phi);
    detail::check_delay(r, big_r);
    if (!(r > 0.0)) throw DomainViolation("solve_steps_special needs r > 0");
    if (t_end > r * (1.0 + 1e-12)) throw DomainViolation("solve_steps_special needs T <= r");
    const std::size_t steps = grid_steps(t_end, phi.step(), "T");
    if (steps == 0) throw DomainViolation("T must be at least one grid step");
    const std::size_t n = m1.dim();
    const std::size_t k0 = phi.intervals();
    const std::size_t mm = k0 + steps;
    const GridFunction phibar = static_prolongation(phi, t_end);
    const auto shift = detail::DelayShift::make(r, phi.step());
    const Vector zeros(n, 0.0);
    std::vector<double> g((mm + 1) * n, 0.0);
    Vector delayed(n);
    for (std::size_t k = k0; k <= mm; ++k) {
        shift.sample(phibar.values(), n, k, delayed);
        m1.eval_into(zeros, delayed, std::span<double>(g.data() + k * n, n));
    }
    auto integral = detail::cumulative_trapezoid(g, n, k0, mm, phi.step());
    const auto& base = phibar.values();
    for (std::size_t i = 0; i < integral.size(); ++i) integral[i] += base[i];
    return GridFunction(phi.a(), t_end, n, std::move(integral));
}

// ---------------------------------------------------------------------------
// Semiflow

struct SemiflowState {
    GridFunction history;  // on [-R, 0]
    double r = 0.0;
    double elapsed = 0.0;
    bool escaped = false;
    std::string reason;
};

/// Thrown by semiflow_step when the solution escapes before the requested
/// time; `partial()` is the state at the last reached grid time.
class EscapeBeforeT : public Error {
public:
    EscapeBeforeT(const std::string& what, SemiflowState partial) : Error(what), partial_(std::move(partial)) {}
    const SemiflowState& partial() const noexcept { return partial_; }

private:
    SemiflowState partial_;
};

/// Phi(t, (phi, r)) = (R_t x(.; phi, r), r).  `t` must be a grid multiple.
inline SemiflowState semiflow_step(const SemiflowState& state, double t, const RhsModel& m, SolveConfig cfg) {
    if (!(t >= 0.0)) throw InvalidArgument("semiflow_step: t must be >= 0");
    const std::size_t steps = grid_steps(t, cfg.h, "semiflow time");
    if (steps == 0) return state;
    if (state.escaped) throw EscapeBeforeT("state has already escaped", state);
    cfg.t_end = t;
    const SolveResult res = solve(state.history, state.r, m, cfg);
    if (res.escaped || res.t_reached < static_cast<double>(steps) * cfg.h - 0.5 * cfg.h) {
        SemiflowState partial{history_at(res.trajectory, res.t_reached), state.r, state.elapsed + res.t_reached, true,
                              res.escape_reason};
        throw EscapeBeforeT("solution escaped at t = " + detail::fmt_double(res.t_reached) + ": " + res.escape_reason,
                            std::move(partial));
    }
    return SemiflowState{history_at(res.trajectory, res.t_reached), state.r, state.elapsed + res.t_reached, false, {}};
}

}  // namespace sobdde

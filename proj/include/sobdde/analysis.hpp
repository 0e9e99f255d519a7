#pragma once

// Numerical checks of the functional-analytic facts the solver leans on:
// translation estimates in L^p (evaluated exactly on piecewise data), norm
// equivalence, prolongation isometry, contraction certificates, semigroup
// defect, finite-difference convergence.  `run_verify_suite` runs them all.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sobdde/errors.hpp"
#include "sobdde/grid_function.hpp"
#include "sobdde/rhs.hpp"
#include "sobdde/sensitivity.hpp"
#include "sobdde/solver.hpp"

namespace sobdde {

struct CheckReport {
    std::string name;
    bool passed = false;
    double observed = 0.0;
    double bound = 0.0;
    std::size_t samples = 0;
    /// Extra pass condition for ladder/monotonicity checks.
    bool flag = true;
    nlohmann::json details = nlohmann::json::object();

    void finalize() { passed = flag && observed <= bound; }
};

inline nlohmann::json to_json(const CheckReport& r) {
    return {{"name", r.name},         {"passed", r.passed},   {"observed", r.observed}, {"bound", r.bound},
            {"samples", r.samples},   {"flag", r.flag},       {"details", r.details}};
}

// ---------------------------------------------------------------------------
// Exact piecewise integration

/// int_0^len |g|^p for g linear with end values g0, g1.
inline double integrate_abs_linear_pow(double g0, double g1, double len, double p) {
    if (!(len > 0.0)) return 0.0;
    if ((g0 < 0.0 && g1 > 0.0) || (g0 > 0.0 && g1 < 0.0)) {
        const double z = len * g0 / (g0 - g1);
        return (z * std::pow(std::abs(g0), p) + (len - z) * std::pow(std::abs(g1), p)) / (p + 1.0);
    }
    const double a0 = std::abs(g0), a1 = std::abs(g1);
    const double d = a1 - a0;
    const double scale = std::max(a0, a1);
    if (scale == 0.0) return 0.0;
    if (std::abs(d) <= 1e-9 * scale) return len * std::pow(0.5 * (a0 + a1), p);
    return len * (std::pow(a1, p + 1.0) - std::pow(a0, p + 1.0)) / ((p + 1.0) * d);
}

/// Compactly supported piecewise-constant g: value c_i on [x_i, x_{i+1}),
/// zero outside [x_0, x_K].
struct PiecewiseConstant {
    std::vector<double> knots;
    std::vector<double> values;

    PiecewiseConstant(std::vector<double> k, std::vector<double> v) : knots(std::move(k)), values(std::move(v)) {
        if (knots.size() < 2 || values.size() + 1 != knots.size())
            throw InvalidArgument("piecewise constant: need K+1 knots for K values");
        for (std::size_t i = 1; i < knots.size(); ++i)
            if (!(knots[i] > knots[i - 1])) throw InvalidArgument("piecewise constant: knots must increase");
    }

    double lp_norm(double p) const {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) s += (knots[i + 1] - knots[i]) * std::pow(std::abs(values[i]), p);
        return std::pow(s, 1.0 / p);
    }

    /// int_{-inf}^x |g|
    double abs_antiderivative(double x) const {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (x <= knots[i]) break;
            s += (std::min(x, knots[i + 1]) - knots[i]) * std::abs(values[i]);
        }
        return s;
    }
};

/// LHS = (int_a^b |int_s^t |g(x + y)| dy|^p dx)^{1/p} against ||g||_p |t - s|.
inline CheckReport check_translation_bound(const PiecewiseConstant& g, double a, double b, double s, double t,
                                           double p) {
    if (!(b > a)) throw InvalidArgument("translation bound: need a < b");
    if (!(p >= 1.0)) throw InvalidArgument("translation bound: need p >= 1");
    // G(x) = P(x + t) - P(x + s) is linear between the shifted knots.
    std::vector<double> cuts{a, b};
    for (double k : g.knots)
        for (double sh : {s, t})
            if (k - sh > a && k - sh < b) cuts.push_back(k - sh);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    auto big_g = [&](double x) { return g.abs_antiderivative(x + t) - g.abs_antiderivative(x + s); };
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        acc += integrate_abs_linear_pow(big_g(cuts[i]), big_g(cuts[i + 1]), cuts[i + 1] - cuts[i], p);
    CheckReport r;
    r.name = "translation_bound";
    r.observed = std::pow(acc, 1.0 / p);
    r.bound = g.lp_norm(p) * std::abs(t - s) * (1.0 + 1e-12);
    r.samples = 1;
    r.details = {{"a", a}, {"b", b}, {"s", s}, {"t", t}, {"p", p}};
    r.finalize();
    return r;
}

/// ratio(delta) = (int_a^b |x(tau + delta) - x(tau) - delta x'(tau)|^p dtau)^{1/p} / delta
inline double translation_diff_ratio(const GridFunction& x, double a, double b, double p, double delta) {
    if (x.dim() != 1) throw InvalidArgument("translation checks are implemented for scalar functions");
    if (!(delta > 0.0)) throw InvalidArgument("translation diff: deltas must be positive");
    if (!x.contains(a) || !x.contains(b + delta))
        throw OutOfDomain("translation diff: shifted interval [" + detail::fmt_double(a) + ", " +
                          detail::fmt_double(b + delta) + "] exceeds the padding of x");
    std::vector<double> cuts{a, b};
    for (std::size_t k = 0; k < x.nodes(); ++k)
        for (double t : {x.node(k), x.node(k) - delta})
            if (t > a && t < b) cuts.push_back(t);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double u0 = cuts[i], u1 = cuts[i + 1];
        if (!(u1 > u0)) continue;
        const double slope = x.derivative_at(0.5 * (u0 + u1))[0];
        const double e0 = x.evaluate(u0 + delta)[0] - x.evaluate(u0)[0] - delta * slope;
        const double e1 = x.evaluate(u1 + delta)[0] - x.evaluate(u1)[0] - delta * slope;
        acc += integrate_abs_linear_pow(e0, e1, u1 - u0, p);
    }
    return std::pow(acc, 1.0 / p) / delta;
}

/// Ladder check of the o(delta) translation estimate: ratios must be
/// non-increasing and drop by at least 4x from the largest to the smallest delta.
inline CheckReport check_translation_diff(const GridFunction& x, double a, double b, double p,
                                          const std::vector<double>& deltas) {
    if (deltas.size() < 2) throw InvalidArgument("translation diff: need at least two deltas");
    for (std::size_t i = 1; i < deltas.size(); ++i)
        if (!(deltas[i] < deltas[i - 1])) throw InvalidArgument("translation diff: deltas must decrease");
    double slope_scale = 0.0;
    for (std::size_t k = 0; k < x.intervals(); ++k) slope_scale = std::max(slope_scale, std::abs(x.slope(k)[0]));
    const double floor = 1e-12 * (1.0 + slope_scale);

    std::vector<double> ratios;
    for (double d : deltas) {
        const double r = translation_diff_ratio(x, a, b, p, d);
        ratios.push_back(r <= floor ? 0.0 : r);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < ratios.size(); ++i)
        if (ratios[i] > ratios[i - 1] * (1.0 + 1e-12)) monotone = false;
    CheckReport r;
    r.name = "translation_diff";
    r.flag = monotone;
    r.observed = ratios.back();
    r.bound = ratios.front() / 4.0;
    r.samples = deltas.size();
    r.details = {{"deltas", deltas}, {"ratios", ratios}, {"p", p}, {"monotone", monotone}};
    r.finalize();
    return r;
}

inline std::vector<double> delta_ladder(double top = 0.1, int rungs = 6) {
    std::vector<double> d;
    for (int k = 0; k < rungs; ++k) d.push_back(std::ldexp(top, -k));
    return d;
}

// ---------------------------------------------------------------------------
// Default problem suite

struct Problem {
    std::string name;
    RhsModel model;
    GridFunction phi;
    double r = 0.0;
    SolveConfig cfg;
};

inline SolveConfig make_config(double p, double h, double t_end) {
    SolveConfig c;
    c.p_norm = PNorm(p, VecNorm::L2);
    c.h = h;
    c.t_end = t_end;
    return c;
}

/// Built-in models on histories where every window is at least one grid step.
inline std::vector<Problem> default_problems() {
    const double h = 1e-3;
    auto scalar_history = [h](double big_r, std::function<double(double)> fn) {
        return GridFunction::sample(-big_r, 0.0, static_cast<std::size_t>(std::lround(big_r / h)), 1,
                                    [fn](double t) { return Vector{fn(t)}; });
    };
    std::vector<Problem> out;
    out.push_back({"pure_delay", make_pure_delay(1, 1.0), scalar_history(1.0, [](double) { return 1.0; }), 1.0,
                   make_config(2.0, h, 2.0)});
    Matrix a = Matrix::identity(2, -0.5);
    Matrix b(2, 2);
    b(0, 1) = 0.8;
    b(1, 0) = -0.8;
    out.push_back({"linear",
                   make_linear(a, b),
                   GridFunction::sample(-1.0, 0.0, 1000, 2, [](double t) { return Vector{std::cos(t), std::sin(t)}; }),
                   0.7, make_config(2.0, h, 2.0)});
    out.push_back({"logistic", make_logistic(1, 1.2), scalar_history(1.0, [](double t) { return 0.5 + 0.2 * t; }),
                   0.8, make_config(1.0, h, 1.5)});
    out.push_back({"mackey_glass", make_mackey_glass(1),
                   scalar_history(1.0, [](double t) { return 0.9 + 0.2 * std::sin(3.0 * t); }), 0.9,
                   make_config(1.0, h, 1.5)});
    out.push_back({"ikeda", make_ikeda(1, 2.0), scalar_history(1.0, [](double t) { return 0.5 + 0.5 * std::cos(4.0 * t); }),
                   0.8, make_config(1.0, h, 1.5)});
    return out;
}

// ---------------------------------------------------------------------------
// Individual checks

namespace detail {

inline GridFunction random_grid_function(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> segs(1, 40);
    const double a = -2.0 * std::abs(u(rng)) - 0.1;
    const double b = a + 0.05 + 3.0 * std::abs(u(rng));
    const auto m = static_cast<std::size_t>(segs(rng));
    const double amp = std::pow(10.0, 2.0 * u(rng));
    std::vector<double> v((m + 1) * dim);
    for (double& e : v) e = amp * u(rng);
    return GridFunction(a, b, dim, std::move(v));
}

inline PNorm random_pnorm(std::mt19937_64& rng) {
    static const double ps[] = {1.0, 1.5, 2.0, 3.0};
    static const VecNorm vs[] = {VecNorm::L1, VecNorm::L2, VecNorm::Linf};
    return PNorm(ps[rng() % 4], vs[rng() % 3]);
}

/// Window fixed points y_k and their histories, rebuilt from a solve.
inline void for_each_window(const SolveResult& sol, const GridFunction& phi,
                            const std::function<void(std::size_t, const GridFunction&, const GridFunction&)>& fn) {
    const double big_r = history_length(phi);
    double t = 0.0;
    for (std::size_t w = 0; w < sol.windows.size(); ++w) {
        const double len = sol.windows[w].length;
        const GridFunction hist = history_at(sol.trajectory, t);
        const GridFunction y = shifted_segment(sol.trajectory, t, -big_r, len) - static_prolongation(hist, len);
        fn(w, hist, y);
        t += len;
    }
}

}  // namespace detail

inline CheckReport check_norm_equivalence(std::uint64_t seed, std::size_t cases = 1000) {
    std::mt19937_64 rng(seed);
    CheckReport r;
    r.name = "norm_equivalence";
    std::size_t violations = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < cases; ++i) {
        const auto x = detail::random_grid_function(rng, 1 + rng() % 3);
        const auto nrm = detail::random_pnorm(rng);
        const auto e = norm_equivalence_bounds(x, nrm);
        if (!e.low_ok || !e.high_ok) ++violations;
        if (e.w1p > 0.0) {
            worst = std::max(worst, e.w1p / e.sup_plus_deriv);
            worst = std::max(worst, e.sup_plus_deriv / (e.constant * e.w1p));
        }
    }
    r.observed = worst;
    r.bound = 1.0 + 1e-12;
    r.flag = violations == 0;
    r.samples = cases;
    r.details = {{"violations", violations}};
    r.finalize();
    return r;
}

inline CheckReport check_prolongation_isometry(std::uint64_t seed, std::size_t cases = 1000) {
    std::mt19937_64 rng(seed);
    CheckReport r;
    r.name = "prolongation_isometry";
    double worst = 0.0;
    for (std::size_t i = 0; i < cases; ++i) {
        auto x = detail::random_grid_function(rng, 1 + rng() % 3);
        const GridFunction phi(-(x.b() - x.a()), 0.0, x.dim(), std::vector<double>(x.values().begin(), x.values().end()));
        const auto nrm = detail::random_pnorm(rng);
        const double t_end = phi.step() * static_cast<double>(1 + rng() % 200);
        const double base = w1p_norm(phi, nrm);
        const double ext = w1p_norm(static_prolongation(phi, t_end), nrm);
        if (base > 0.0) worst = std::max(worst, std::abs(ext - base) / base);
    }
    r.observed = worst;
    r.bound = 1e-14;
    r.samples = cases;
    r.finalize();
    return r;
}

inline CheckReport check_contraction_certificate(const std::vector<Problem>& problems) {
    CheckReport r;
    r.name = "contraction_certificate";
    std::size_t windows = 0, bad = 0;
    double worst = 0.0;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& pb : problems) {
        const auto sol = solve(pb.phi, pb.r, pb.model, pb.cfg);
        for (const auto& w : sol.windows) {
            ++windows;
            if (!(w.measured_ratio <= w.certificate * (1.0 + 1e-9) + 1e-12) ||
                !(w.certificate <= pb.cfg.contraction_target * (1.0 + 1e-9)))
                ++bad;
            worst = std::max({worst, w.measured_ratio, w.certificate});
        }
        per[pb.name] = {{"windows", sol.windows.size()}, {"escaped", sol.escaped}};
    }
    r.observed = worst;
    r.bound = 0.5 * (1.0 + 1e-9);
    r.flag = bad == 0 && windows > 0;
    r.samples = windows;
    r.details = {{"failing_windows", bad}, {"problems", per}};
    r.finalize();
    return r;
}

inline CheckReport check_fixed_point_residual(const std::vector<Problem>& problems) {
    CheckReport r;
    r.name = "fixed_point_residual";
    double worst = 0.0;
    std::size_t windows = 0;
    for (const auto& pb : problems) {
        const auto sol = solve(pb.phi, pb.r, pb.model, pb.cfg);
        detail::for_each_window(sol, pb.phi, [&](std::size_t, const GridFunction& hist, const GridFunction& y) {
            const auto res = apply_T(y, hist, pb.r, pb.model) - y;
            worst = std::max(worst, w1p_norm(res, pb.cfg.p_norm));
            ++windows;
        });
    }
    r.observed = worst;
    r.bound = 2.0 * SolveConfig{}.picard_tol;
    r.samples = windows;
    r.finalize();
    return r;
}

/// W^{1,2} defect of Phi(t + s) against Phi(s) o Phi(t).
inline CheckReport check_semigroup(const std::vector<Problem>& problems, double t = 0.5, double s = 0.7) {
    CheckReport r;
    r.name = "semigroup_defect";
    double worst = 0.0;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& pb : problems) {
        const SemiflowState st{pb.phi, pb.r, 0.0, false, {}};
        try {
            const auto whole = semiflow_step(st, t + s, pb.model, pb.cfg);
            const auto split = semiflow_step(semiflow_step(st, t, pb.model, pb.cfg), s, pb.model, pb.cfg);
            const double d = w1p_norm(whole.history - split.history, PNorm(2.0, pb.cfg.p_norm.vec_norm()));
            worst = std::max(worst, d);
            per[pb.name] = d;
        } catch (const EscapeBeforeT&) {
            per[pb.name] = "escaped";
        }
    }
    r.observed = worst;
    r.bound = 1e-8;
    r.samples = problems.size();
    r.details = per;
    r.finalize();
    return r;
}

/// FD convergence of the solution derivative for smooth models: errors
/// decrease over eps = 1e-1, 1e-2, 1e-3 with order >= 0.9 over the first decade.
inline CheckReport check_fd_convergence(const std::vector<Problem>& problems) {
    CheckReport r;
    r.name = "fd_convergence";
    double worst = 0.0;
    bool monotone = true;
    nlohmann::json per = nlohmann::json::object();
    const std::vector<double> eps{1e-1, 1e-2, 1e-3};
    for (const auto& pb : problems) {
        if (pb.phi.dim() != 1 || pb.name == "pure_delay") continue;
        const auto chi = GridFunction::sample(pb.phi.a(), 0.0, pb.phi.intervals(), 1,
                                              [](double t) { return Vector{std::sin(2.0 * t)}; });
        const auto rows = fd_check(pb.phi, pb.r, pb.model, {chi, 0.7}, pb.cfg, eps);
        std::vector<double> errs;
        for (const auto& row : rows) errs.push_back(row.err);
        for (std::size_t i = 1; i < errs.size(); ++i)
            if (!(errs[i] < errs[i - 1])) monotone = false;
        worst = std::max(worst, errs[1] / errs[0]);
        per[pb.name] = errs;
    }
    r.observed = worst;
    r.bound = std::pow(10.0, -0.9);
    r.flag = monotone;
    r.samples = per.size();
    r.details = {{"eps", eps}, {"errors", per}};
    r.finalize();
    return r;
}

/// One-sided delay quotients at r = 0 still converge.
inline CheckReport check_fd_zero_delay() {
    const double h = 1e-3;
    const auto phi = GridFunction::sample(-1.0, 0.0, 1000, 1, [](double t) { return Vector{1.0 + t}; });
    const auto m = make_linear(Matrix::identity(1, -1.0), Matrix::identity(1, 0.5));
    const auto rows = fd_check(phi, 0.0, m, SensitivityDirection::zero_like(phi, 1.0), make_config(2.0, h, 1.0),
                               {1e-1, 1e-2, 1e-3});
    CheckReport r;
    r.name = "fd_zero_delay";
    std::vector<double> errs;
    bool monotone = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        errs.push_back(rows[i].err);
        if (i > 0 && !(rows[i].err < rows[i - 1].err)) monotone = false;
        if (rows[i].scheme != FdScheme::Forward) monotone = false;
    }
    r.observed = errs.back() / errs.front();
    r.bound = 1.0;
    r.flag = monotone;
    r.samples = rows.size();
    r.details = {{"errors", errs}};
    r.finalize();
    return r;
}

inline CheckReport check_counterexample() {
    const auto phi = GridFunction::sample(-1.0, 0.0, 1000, 1, [](double t) { return Vector{std::abs(t + 0.5)}; });
    const auto kink = counterexample_time_dependent(phi, 0.5, 1.0);
    const auto smooth = counterexample_time_dependent(phi, 0.2, 1.0);
    const double gap = std::abs(kink.left_dq[0] - kink.right_dq[0]);
    const double gap_smooth = std::abs(smooth.left_dq[0] - smooth.right_dq[0]);
    CheckReport r;
    r.name = "counterexample";
    // scaled so that 1 is the tolerance of either clause
    r.observed = std::max(std::abs(gap - 2.0) / 0.01, gap_smooth / 1e-4);
    r.bound = 1.0;
    r.samples = 2;
    r.details = {{"gap_at_kink", gap}, {"gap_smooth", gap_smooth}};
    r.finalize();
    return r;
}

inline CheckReport check_translation_bound_random(std::uint64_t seed, std::size_t cases = 100) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    CheckReport r;
    r.name = "translation_bound";
    double worst = 0.0;
    std::size_t violations = 0;
    for (std::size_t i = 0; i < cases; ++i) {
        const std::size_t pieces = 1 + rng() % 12;
        std::vector<double> knots{u(rng)};
        std::vector<double> vals;
        for (std::size_t k = 0; k < pieces; ++k) {
            knots.push_back(knots.back() + 0.01 + std::abs(u(rng)));
            vals.push_back(3.0 * u(rng));
        }
        const PiecewiseConstant g(knots, vals);
        const double p = static_cast<double>(1 + rng() % 3);
        const double a = 2.0 * u(rng);
        const double b = a + 0.1 + 2.0 * std::abs(u(rng));
        const auto rep = check_translation_bound(g, a, b, u(rng), u(rng), p);
        if (!rep.passed) ++violations;
        if (rep.bound > 0.0) worst = std::max(worst, rep.observed / rep.bound);
    }
    r.observed = worst;
    r.bound = 1.0;
    r.flag = violations == 0;
    r.samples = cases;
    r.details = {{"violations", violations}};
    r.finalize();
    return r;
}

/// Kinked |tau| for p in {1, 2} and a many-segment sine for p in {1, 2, 3}.
inline CheckReport check_translation_diff_suite() {
    const auto ladder = delta_ladder();
    const auto kink = GridFunction::sample(-2.0, 2.0, 400, 1, [](double t) { return Vector{std::abs(t)}; });
    const auto wave = GridFunction::sample(-2.0, 2.0, 4000, 1, [](double t) { return Vector{std::sin(3.0 * t)}; });
    CheckReport r;
    r.name = "translation_diff";
    double worst = 0.0;
    bool ok = true;
    nlohmann::json per = nlohmann::json::array();
    auto run = [&](const GridFunction& x, const char* label, double p) {
        const auto rep = check_translation_diff(x, -1.0, 1.0, p, ladder);
        ok = ok && rep.flag;
        const auto& ratios = rep.details["ratios"];
        const double hi = ratios.front().get<double>();
        const double lo = ratios.back().get<double>();
        worst = std::max(worst, hi > 0.0 ? lo / hi : 0.0);
        per.push_back({{"function", label}, {"p", p}, {"ratios", ratios}});
    };
    for (double p : {1.0, 2.0}) run(kink, "abs", p);
    for (double p : {1.0, 2.0, 3.0}) run(wave, "sin", p);
    r.observed = worst;
    r.bound = 0.25;
    r.flag = ok;
    r.samples = per.size();
    r.details = per;
    r.finalize();
    return r;
}

// ---------------------------------------------------------------------------
// Suite

struct VerifyConfig {
    std::uint64_t seed = 20240607;
    /// Names to run; unset runs everything, an empty list runs nothing.
    std::optional<std::vector<std::string>> checks;
    /// Multiplies the bound of the named checks (fault injection).
    std::map<std::string, double> bound_scale;
};

struct VerifyReport {
    std::vector<CheckReport> checks;
    bool passed = true;
};

inline std::vector<std::string> verify_check_names() {
    return {"contraction_certificate", "counterexample",       "fd_convergence",   "fd_zero_delay",
            "fixed_point_residual",    "norm_equivalence",     "prolongation_isometry", "semigroup_defect",
            "translation_bound",       "translation_diff"};
}

inline nlohmann::json to_json(const VerifyReport& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : v.checks) arr.push_back(to_json(c));
    return {{"passed", v.passed}, {"checks", arr}};
}

inline VerifyReport run_verify_suite(const VerifyConfig& cfg = {}) {
    const std::vector<std::string> names = cfg.checks ? *cfg.checks : verify_check_names();
    const auto problems = default_problems();
    auto make = [&](const std::string& name) -> CheckReport {
        if (name == "norm_equivalence") return check_norm_equivalence(cfg.seed);
        if (name == "prolongation_isometry") return check_prolongation_isometry(cfg.seed + 1);
        if (name == "contraction_certificate") return check_contraction_certificate(problems);
        if (name == "fixed_point_residual") return check_fixed_point_residual(problems);
        if (name == "semigroup_defect") return check_semigroup(problems);
        if (name == "fd_convergence") return check_fd_convergence(problems);
        if (name == "fd_zero_delay") return check_fd_zero_delay();
        if (name == "counterexample") return check_counterexample();
        if (name == "translation_bound") return check_translation_bound_random(cfg.seed + 2);
        if (name == "translation_diff") return check_translation_diff_suite();
        throw InvalidArgument("unknown check '" + name + "'");
    };
    auto guarded = [&](const std::string& name) {
        CheckReport rep;
        try {
            rep = make(name);
        } catch (const InvalidArgument&) {
            throw;
        } catch (const std::exception& e) {
            rep = CheckReport{};
            rep.name = name;
            rep.flag = false;
            rep.details = {{"error", e.what()}};
        }
        rep.name = name;
        if (auto it = cfg.bound_scale.find(name); it != cfg.bound_scale.end()) rep.bound *= it->second;
        rep.finalize();
        return rep;
    };

    const auto known = verify_check_names();
    for (const auto& n : names)
        if (std::find(known.begin(), known.end(), n) == known.end())
            throw InvalidArgument("unknown check '" + n + "'");

    std::vector<std::future<CheckReport>> jobs;
    for (const auto& n : names) jobs.push_back(std::async(std::launch::async, guarded, n));
    VerifyReport out;
    for (auto& j : jobs) out.checks.push_back(j.get());
    std::sort(out.checks.begin(), out.checks.end(),
              [](const CheckReport& a, const CheckReport& b) { return a.name < b.name; });
    for (const auto& c : out.checks) out.passed = out.passed && c.passed;
    return out;
}

}  // namespace sobdde

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sobdde/solver.hpp"

using namespace sobdde;

namespace {

GridFunction const_history(double big_r, double h, double c) {
    return GridFunction::constant(-big_r, 0.0, static_cast<std::size_t>(std::lround(big_r / h)), Vector{c});
}

GridFunction sampled_history(double big_r, double h, double (*fn)(double)) {
    return GridFunction::sample(-big_r, 0.0, static_cast<std::size_t>(std::lround(big_r / h)), 1,
                                [fn](double t) { return Vector{fn(t)}; });
}

double sup_node_diff(const GridFunction& x, double (*fn)(double), double from) {
    double e = 0.0;
    for (std::size_t k = 0; k < x.nodes(); ++k) {
        const double t = x.node(k);
        if (t < from) continue;
        e = std::max(e, std::abs(x.value(k)[0] - fn(t)));
    }
    return e;
}

double two_window_exact(double t) {
    if (t <= 0.0) return 1.0;
    if (t <= 1.0) return 1.0 + t;
    return 1.0 + t + 0.5 * (t - 1.0) * (t - 1.0);
}

SolveConfig config(double h, double t_end, double p = 2.0) {
    SolveConfig cfg;
    cfg.h = h;
    cfg.t_end = t_end;
    cfg.p_norm = PNorm(p, VecNorm::L2);
    return cfg;
}

}  // namespace

TEST(ApplyT, ZeroRhsGivesZero) {
    const auto phi = sampled_history(1.0, 0.01, [](double t) { return std::sin(3 * t); });
    const auto y = GridFunction::zero(-1.0, 0.5, 150, 1);
    const auto out = apply_T(y, phi, 0.4, make_pure_delay(1, 0.0));
    for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(ApplyT, ConstantRhsIntegratesExactly) {
    const auto phi = const_history(1.0, 0.01, 3.0);
    const auto y = GridFunction::sample(-1.0, 0.5, 150, 1, [](double t) { return Vector{t > 0 ? t * t : 0.0}; });
    const auto out = apply_T(y, phi, 0.7, make_expr_model({"1"}, 1));
    for (std::size_t k = 0; k < out.nodes(); ++k) EXPECT_NEAR(out.value(k)[0], std::max(0.0, out.node(k)), 1e-14);
}

TEST(ApplyT, DelayedConstantHistory) {
    const auto phi = const_history(1.0, 1e-3, 1.0);
    const auto y = GridFunction::zero(-1.0, 1.0, 2000, 1);
    const auto out = apply_T(y, phi, 1.0, make_pure_delay(1, 1.0));
    for (std::size_t k = 1000; k < out.nodes(); ++k) EXPECT_NEAR(out.value(k)[0], out.node(k), 1e-13);
    EXPECT_THROW(apply_T(y, phi, 1.5, make_pure_delay(1, 1.0)), DomainViolation);
    EXPECT_THROW(apply_T(y, phi, -0.1, make_pure_delay(1, 1.0)), DomainViolation);
}

TEST(ApplyT, SlopesAreIntervalAveragesOfIntegrand) {
    const auto phi = sampled_history(1.0, 0.01, [](double t) { return std::cos(2 * t); });
    const auto y = GridFunction::sample(-1.0, 0.3, 130, 1, [](double t) { return Vector{t > 0 ? 0.3 * t : 0.0}; });
    const auto m = make_mackey_glass(1);
    const auto out = apply_T(y, phi, 0.25, m);
    const auto x = y + static_prolongation(phi, 0.3);
    auto g = [&](std::size_t k) {
        const double s = x.node(k);
        return m.eval(x.value(k), x.evaluate(s - 0.25))[0];
    };
    for (std::size_t k = 100; k < 130; ++k) EXPECT_NEAR(out.slope(k)[0], 0.5 * (g(k) + g(k + 1)), 1e-13);
}

TEST(ChooseWindow, ZeroRhsTakesRemainingHorizon) {
    auto cfg = config(1e-3, 0.75);
    const auto w = choose_window(const_history(1.0, 1e-3, 1.0), 1.0, make_pure_delay(1, 0.0), cfg);
    EXPECT_NEAR(w.length, 0.75, 1e-12);
    EXPECT_EQ(w.steps, 750u);
}

TEST(ChooseWindow, PluggedConstants) {
    // L = 1.5, M = 4 on the radius-4 box: T = min(0.5 / 3, 1 / 4) = 1/6.
    auto cfg = config(1e-3, 1.0, 1.0);
    cfg.delta = 1.0;
    const auto w = choose_window(const_history(1.0, 1e-3, 1.0), 1.0, make_pure_delay(1, 1.0), cfg);
    EXPECT_DOUBLE_EQ(w.lipschitz, 1.5);
    EXPECT_DOUBLE_EQ(w.bound, 4.0);
    EXPECT_EQ(w.steps, 166u);
    EXPECT_NEAR(w.length, 0.166, 1e-12);
    // r = 0 uses the same formulas
    EXPECT_EQ(choose_window(const_history(1.0, 1e-3, 1.0), 0.0, make_pure_delay(1, 1.0), cfg).steps, 166u);
}

TEST(ChooseWindow, TooSmall) {
    auto cfg = config(1e-2, 1.0, 2.0);
    EXPECT_THROW(choose_window(const_history(1.0, 1e-2, 1.0), 1.0, make_pure_delay(1, 100.0), cfg), WindowTooSmall);
}

TEST(Picard, ZeroRhsConvergesImmediately) {
    const auto cfg = config(1e-3, 1.0);
    const auto pr = picard_window(const_history(1.0, 1e-3, 1.0), 1.0, make_pure_delay(1, 0.0), 0.5, cfg);
    EXPECT_EQ(pr.iters, 1);
    for (double v : pr.y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Picard, PureDelayFixedAfterOneStep) {
    const auto cfg = config(1e-3, 1.0);
    const double a = 0.7;
    const auto pr = picard_window(const_history(1.0, 1e-3, 1.0), 1.0, make_pure_delay(1, a), 1.0, cfg);
    EXPECT_EQ(pr.iters, 2);
    for (std::size_t k = 1000; k < pr.y.nodes(); ++k) EXPECT_NEAR(pr.y.value(k)[0], a * pr.y.node(k), 1e-13);
}

TEST(Picard, DecayMatchesExponential) {
    const auto cfg = config(1e-3, 1.0);
    const auto m = make_linear(Matrix::identity(1, -1.0), Matrix(1, 1));
    const auto phi = const_history(1.0, 1e-3, 1.0);
    const double t = choose_window(phi, 1.0, m, cfg).length;
    const auto pr = picard_window(phi, 1.0, m, t, cfg);
    const auto x = pr.y + static_prolongation(phi, t);
    // trapezoid global error is about t h^2 / 12
    EXPECT_LE(sup_node_diff(x, [](double s) { return s <= 0 ? 1.0 : std::exp(-s); }, 0.0), 1e-7);
    EXPECT_LE(pr.measured_ratio, 2.0 * 1.5 * std::sqrt(t) + 1e-12);
}

TEST(Picard, ResidualWithinTwiceTolerance) {
    const auto cfg = config(1e-3, 1.0);
    const auto m = make_mackey_glass(1);
    const auto phi = sampled_history(1.0, 1e-3, [](double t) { return 0.8 + 0.3 * std::sin(5 * t); });
    const auto w = choose_window(phi, 0.6, m, cfg);
    const auto pr = picard_window(phi, 0.6, m, w.length, cfg);
    const auto res = apply_T(pr.y, phi, 0.6, m) - pr.y;
    EXPECT_LE(w1p_norm(res, cfg.p_norm), 2.0 * cfg.picard_tol);
}

TEST(Picard, NoConvergenceWhenWindowTooLong) {
    auto cfg = config(1e-3, 1.0);
    cfg.picard_max_iter = 20;
    const auto m = make_linear(Matrix::identity(1, 40.0), Matrix(1, 1));
    EXPECT_THROW(picard_window(const_history(1.0, 1e-3, 1.0), 1.0, m, 1.0, cfg), NoConvergence);
}

TEST(Solve, ZeroRhsKeepsHistoryAndFreezes) {
    const auto cfg = config(1e-2, 2.0);
    const auto phi = sampled_history(1.0, 1e-2, [](double t) { return t; });
    const auto res = solve(phi, 0.5, make_pure_delay(1, 0.0), cfg);
    EXPECT_FALSE(res.escaped);
    EXPECT_NEAR(res.t_reached, 2.0, 1e-12);
    for (std::size_t k = 0; k <= 100; ++k) EXPECT_EQ(res.trajectory.value(k)[0], phi.value(k)[0]);
    for (std::size_t k = 100; k < res.trajectory.nodes(); ++k) EXPECT_EQ(res.trajectory.value(k)[0], 0.0);
}

TEST(Solve, TwoWindowMethodOfSteps) {
    const auto cfg = config(1e-3, 2.0);
    const auto phi = const_history(1.0, 1e-3, 1.0);
    const auto res = solve(phi, 1.0, make_pure_delay(1, 1.0), cfg);
    ASSERT_FALSE(res.escaped);
    EXPECT_NEAR(res.t_reached, 2.0, 1e-12);
    EXPECT_LE(sup_node_diff(res.trajectory, two_window_exact, -1.0), 1e-6);
    EXPECT_GT(res.windows.size(), 1u);
    for (std::size_t k = 0; k < phi.values().size(); ++k) EXPECT_EQ(res.trajectory.values()[k], phi.values()[k]);
}

TEST(Solve, BlowUpIsReportedAsEscape) {
    const auto cfg = config(1e-3, 1.0, 1.0);
    const auto res = solve(const_history(1.0, 1e-3, 2.0), 1.0, make_expr_model({"x1^2"}, 1), cfg);
    EXPECT_TRUE(res.escaped);
    EXPECT_FALSE(res.escape_reason.empty());
    EXPECT_LT(res.t_reached, 0.5);
    EXPECT_GT(res.t_reached, 0.3);
    // what was computed still tracks 2 / (1 - 2t)
    const double t = res.t_reached;
    const double xt = res.trajectory.evaluate(t)[0];
    EXPECT_NEAR(xt / (2.0 / (1.0 - 2.0 * t)), 1.0, 1e-2);
}

TEST(Solve, EveryWindowCarriesItsCertificate) {
    for (double p : {1.0, 2.0}) {
        const auto cfg = config(1e-3, 1.5, p);
        const auto phi = sampled_history(1.0, 1e-3, [](double t) { return 0.5 + 0.5 * std::cos(4 * t); });
        for (const auto& m : {make_mackey_glass(1), make_ikeda(1, 2.0), make_pure_delay(1, -1.0)}) {
            const auto res = solve(phi, 0.8, m, cfg);
            ASSERT_FALSE(res.escaped) << m.name() << ": " << res.escape_reason;
            for (const auto& w : res.windows) {
                EXPECT_TRUE(w.certified);
                EXPECT_LE(w.measured_ratio, w.certificate + 1e-12);
                EXPECT_LE(w.certificate, cfg.contraction_target * (1.0 + 1e-9));
            }
        }
    }
}

TEST(Solve, WindowIndependence) {
    auto cfg = config(1e-3, 2.0, 1.0);
    const auto phi = sampled_history(1.0, 1e-3, [](double t) { return 1.0 + 0.2 * t; });
    const auto m = make_mackey_glass(1);
    const auto a = solve(phi, 0.9, m, cfg);
    cfg.contraction_target = 0.25;
    const auto b = solve(phi, 0.9, m, cfg);
    ASSERT_FALSE(a.escaped);
    ASSERT_FALSE(b.escaped);
    EXPECT_GT(b.windows.size(), a.windows.size());
    EXPECT_LE(sup_norm(a.trajectory - b.trajectory, cfg.p_norm), 1e-8);
}

TEST(Solve, SecondOrderGridRefinement) {
    // x' = -x against e^{-t}
    const auto m = make_linear(Matrix::identity(1, -1.0), Matrix(1, 1));
    std::vector<double> errs;
    for (double h : {1e-2, 5e-3, 2.5e-3}) {
        const auto res = solve(const_history(1.0, h, 1.0), 1.0, m, config(h, 1.0));
        ASSERT_FALSE(res.escaped);
        errs.push_back(sup_node_diff(res.trajectory, [](double t) { return t <= 0 ? 1.0 : std::exp(-t); }, 0.0));
    }
    for (std::size_t i = 1; i < errs.size(); ++i) EXPECT_GE(std::log2(errs[i - 1] / errs[i]), 1.9);
}

TEST(Solve, ZeroDelayMatchesTrapezoidRecurrence) {
    // x' = -x + 0.5 x = -0.5 x; implicit trapezoid gives a closed-form ratio per step.
    const double h = 1e-3;
    const auto m = make_linear(Matrix::identity(1, -1.0), Matrix::identity(1, 0.5));
    const auto res = solve(const_history(1.0, h, 1.0), 0.0, m, config(h, 1.0));
    ASSERT_FALSE(res.escaped);
    const double q = (1.0 - 0.25 * h) / (1.0 + 0.25 * h);
    double want = 1.0;
    double err = 0.0;
    for (std::size_t k = 1000; k < res.trajectory.nodes(); ++k) {
        err = std::max(err, std::abs(res.trajectory.value(k)[0] - want));
        want *= q;
    }
    EXPECT_LE(err, 1e-8);
}

TEST(Solve, InputValidation) {
    const auto phi = const_history(1.0, 1e-3, 1.0);
    EXPECT_THROW(solve(phi, 1.5, make_pure_delay(1, 1.0), config(1e-3, 1.0)), DomainViolation);
    EXPECT_THROW(solve(phi, 0.5, make_pure_delay(1, 1.0), config(2e-3, 1.0)), GridMismatch);
    EXPECT_THROW(solve(phi, 0.5, make_pure_delay(2, 1.0), config(1e-3, 1.0)), GridMismatch);
    auto bad = config(1e-3, 1.0);
    bad.contraction_target = 1.0;
    EXPECT_THROW(solve(phi, 0.5, make_pure_delay(1, 1.0), bad), InvalidArgument);
}

TEST(StepsSpecial, ZeroRhsFreezes) {
    const auto phi = sampled_history(1.0, 1e-2, [](double t) { return std::exp(t); });
    const auto x = solve_steps_special(phi, 1.0, make_pure_delay(1, 0.0), 1.0);
    for (std::size_t k = 100; k < x.nodes(); ++k) EXPECT_EQ(x.value(k)[0], 1.0);
}

TEST(StepsSpecial, IdentityOnLinearHistory) {
    const auto phi = sampled_history(1.0, 1e-3, [](double t) { return t; });
    const auto m = make_pure_delay(1, 1.0);
    const auto x = solve_steps_special(phi, 1.0, m, 1.0);
    EXPECT_LE(sup_node_diff(x, [](double t) { return t <= 0 ? t : 0.5 * t * t - t; }, -1.0), 1e-12);
    const auto res = solve(phi, 1.0, m, config(1e-3, 1.0));
    ASSERT_FALSE(res.escaped);
    EXPECT_LE(w1p_norm(x - res.trajectory, PNorm(2.0)), 1e-10);
    EXPECT_THROW(solve_steps_special(phi, 0.5, m, 1.0), DomainViolation);
    EXPECT_THROW(solve_steps_special(phi, 0.0, m, 0.0), DomainViolation);
}

TEST(Semiflow, ZeroTimeIsIdentity) {
    const auto phi = sampled_history(1.0, 1e-3, [](double t) { return std::sin(t); });
    const SemiflowState s{phi, 0.5, 0.0, false, {}};
    const auto out = semiflow_step(s, 0.0, make_mackey_glass(1), config(1e-3, 1.0));
    EXPECT_TRUE(std::ranges::equal(out.history.values(), phi.values()));
    EXPECT_EQ(out.r, 0.5);
    EXPECT_EQ(out.elapsed, 0.0);
}

TEST(Semiflow, HistoryFollowsClosedForm) {
    const SemiflowState s{const_history(1.0, 1e-3, 1.0), 1.0, 0.0, false, {}};
    const auto out = semiflow_step(s, 1.0, make_pure_delay(1, 1.0), config(1e-3, 1.0));
    EXPECT_DOUBLE_EQ(out.elapsed, 1.0);
    for (std::size_t k = 0; k < out.history.nodes(); ++k)
        EXPECT_NEAR(out.history.value(k)[0], 2.0 + out.history.node(k), 1e-12);
}

TEST(Semiflow, SemigroupLaw) {
    const auto cfg = config(1e-3, 1.0);
    const auto m = make_mackey_glass(1);
    const SemiflowState s{sampled_history(1.0, 1e-3, [](double t) { return 0.9 + 0.2 * std::sin(3 * t); }), 0.8, 0.0,
                          false, {}};
    const auto whole = semiflow_step(s, 1.2, m, cfg);
    const auto split = semiflow_step(semiflow_step(s, 0.5, m, cfg), 0.7, m, cfg);
    EXPECT_LE(w1p_norm(whole.history - split.history, cfg.p_norm), 1e-8);
    EXPECT_NEAR(whole.elapsed, split.elapsed, 1e-12);
}

TEST(Semiflow, EscapeCarriesPartialState) {
    const SemiflowState s{const_history(1.0, 1e-3, 2.0), 1.0, 0.0, false, {}};
    try {
        semiflow_step(s, 1.0, make_expr_model({"x1^2"}, 1), config(1e-3, 1.0, 1.0));
        FAIL() << "expected EscapeBeforeT";
    } catch (const EscapeBeforeT& e) {
        EXPECT_TRUE(e.partial().escaped);
        EXPECT_LT(e.partial().elapsed, 0.5);
        EXPECT_GT(e.partial().elapsed, 0.0);
    }
}

TEST(Semiflow, EscapeTimeHasNoDownwardJumpsInProbes) {
    // Nearby histories escape at nearby times (sampled probe only).
    const auto cfg = config(1e-3, 1.0, 1.0);
    const auto m = make_expr_model({"x1^2"}, 1);
    const double base = solve(const_history(1.0, 1e-3, 2.0), 1.0, m, cfg).t_reached;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        const double near = solve(const_history(1.0, 1e-3, 2.0 + eps), 1.0, m, cfg).t_reached;
        EXPECT_GE(near, base - 0.05) << eps;
    }
}

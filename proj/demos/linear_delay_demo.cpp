// x'(t) = a x(t - r) with phi = 1: solve, then differentiate with respect to
// the delay and the history, and compare with the method-of-steps formulas.

#include <cmath>
#include <cstdio>

#include "sobdde/sensitivity.hpp"
#include "sobdde/solver.hpp"

using namespace sobdde;

int main() {
    const double a = 1.0, r = 1.0, h = 1e-3;
    const auto phi = GridFunction::constant(-2.0, 0.0, 2000, Vector{1.0});
    const auto model = make_pure_delay(1, a);

    SolveConfig cfg;
    cfg.h = h;
    cfg.t_end = 2.0;
    cfg.p_norm = PNorm(2.0);

    const auto sol = solve(phi, r, model, cfg);
    std::printf("%zu windows, t_reached = %g, escaped = %s\n", sol.windows.size(), sol.t_reached,
                sol.escaped ? "yes" : "no");

    const auto by_delay = propagate_sensitivity(sol, phi, r, model, SensitivityDirection::zero_like(phi, 1.0), cfg);
    const SensitivityDirection shift{GridFunction::constant(-2.0, 0.0, 2000, Vector{1.0}), 0.0};
    const auto by_history = propagate_sensitivity(sol, phi, r, model, shift, cfg);

    std::printf("%6s %12s %12s %12s %12s\n", "t", "x", "exact", "dx/dr", "-a^2(t-1)+");
    for (double t = 0.0; t <= 2.0 + 1e-12; t += 0.25) {
        const double exact = t <= 1.0 ? 1.0 + t : 1.0 + t + 0.5 * (t - 1.0) * (t - 1.0);
        const double ddr = t > 1.0 ? -a * a * (t - 1.0) : 0.0;
        std::printf("%6.2f %12.8f %12.8f %12.8f %12.8f\n", t, sol.trajectory.evaluate(t)[0], exact,
                    by_delay.dx.evaluate(t)[0], ddr);
    }
    // shifting phi by a constant c shifts x by c (1 + a t) on [0, r]
    std::printf("history shift: dx(0.5) = %.12f (expect %.12f)\n", by_history.dx.evaluate(0.5)[0], 1.0 + a * 0.5);
    return 0;
}

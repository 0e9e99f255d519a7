// sobdde: solve delay equations on W^{1,p} history spaces and compute
// sensitivities with respect to the history and the delay.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sobdde/commands.hpp"

int main(int argc, char** argv) {
    using namespace sobdde;

    CLI::App app{"Delay differential equations with W^{1,p} histories: solve, sensitivities, checks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "sobdde 0.1");

    std::string spec, prefix = "out", dir, eps = "1e-2,1e-3,1e-4", json;
    bool fd = false;
    std::uint64_t seed = VerifyConfig{}.seed;
    SweepOptions sweep;
    CounterexampleOptions cex;

    auto* solve = app.add_subcommand("solve", "Integrate a problem file; writes <out>.traj.csv and <out>.diag.json");
    solve->add_option("--spec", spec, "Problem JSON")->required();
    solve->add_option("--out", prefix, "Output prefix")->capture_default_str();

    auto* sens = app.add_subcommand("sens", "Directional derivative of the solution; writes <out>.dx.csv");
    sens->add_option("--spec", spec, "Problem JSON")->required();
    sens->add_option("--dir", dir, "Direction JSON {chi, xi}")->required();
    sens->add_option("--out", prefix, "Output prefix")->capture_default_str();
    sens->add_flag("--fd", fd, "Also write <out>.fd_table.csv");
    sens->add_option("--eps", eps, "Finite-difference steps, comma separated")->capture_default_str();

    auto* sw = app.add_subcommand("sweep", "x(t_end) and dx/dr over an r-grid; writes <out>.sweep.csv");
    sw->add_option("--spec", spec, "Problem JSON")->required();
    sw->add_option("--out", prefix, "Output prefix")->capture_default_str();
    sw->add_option("--r-min", sweep.r_min, "Smallest delay")->required();
    sw->add_option("--r-max", sweep.r_max, "Largest delay")->required();
    sw->add_option("--steps", sweep.steps, "Number of r values")->capture_default_str();
    sw->add_option("--threads", sweep.threads, "Worker threads (default: SOBDDE_THREADS or all cores)");
    sw->add_option("--tol", sweep.tolerance, "Reported consistency tolerance")->capture_default_str();

    auto* cx = app.add_subcommand("counterexample", "Time-dependent delay quotients for phi = |theta + 0.5|");
    cx->add_option("--out", prefix, "Output prefix")->capture_default_str();
    cx->add_option("--t", cex.t, "Time at which x is evaluated")->capture_default_str();
    cx->add_option("--points", cex.points, "Number of c values on [0, 1]")->capture_default_str();

    auto* ver = app.add_subcommand("verify", "Run the numerical check suite");
    ver->add_option("--seed", seed, "Seed for the randomized checks")->capture_default_str();
    ver->add_option("--json", json, "Write the report as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInput;
    }

    if (*solve) return cmd_solve(spec, prefix, std::cout, std::cerr);
    if (*sens) {
        SensOptions opt;
        opt.fd = fd;
        try {
            opt.eps = parse_eps_list(eps);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitInput;
        }
        return cmd_sens(spec, dir, prefix, opt, std::cout, std::cerr);
    }
    if (*sw) return cmd_sweep(spec, prefix, sweep, std::cout, std::cerr);
    if (*cx) return cmd_counterexample(prefix, cex, std::cout, std::cerr);
    if (*ver) {
        VerifyConfig cfg;
        cfg.seed = seed;
        return cmd_verify(cfg, json.empty() ? std::nullopt : std::optional<std::string>(json), std::cout, std::cerr);
    }
    return kExitInput;
}

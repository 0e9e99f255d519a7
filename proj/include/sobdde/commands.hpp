#pragma once

// Subcommands behind the `sobdde` executable.  Each returns a process exit
// code and never lets an exception escape:
//   0 success, 1 bad input, 2 escape before t_end, 3 Neumann/Picard
//   non-convergence, 4 anything unexpected.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "sobdde/analysis.hpp"
#include "sobdde/errors.hpp"
#include "sobdde/grid_function.hpp"
#include "sobdde/problem.hpp"
#include "sobdde/sensitivity.hpp"
#include "sobdde/solver.hpp"

namespace sobdde {

enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitEscaped = 2, kExitNoConvergence = 3, kExitInternal = 4 };

struct SensOptions {
    bool fd = false;
    std::vector<double> eps{1e-2, 1e-3, 1e-4};
};

struct SweepOptions {
    double r_min = 0.0;
    double r_max = 0.0;
    std::size_t steps = 11;  // number of r values
    unsigned threads = 0;    // 0: SOBDDE_THREADS, then hardware concurrency
    double tolerance = 1e-2;
};

struct CounterexampleOptions {
    double t = 1.0;
    std::size_t points = 101;  // c-grid on [0, 1]
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open '" + path + "' for writing");
    os << text;
    if (!os) throw InvalidArgument("write to '" + path + "' failed");
}

inline std::string csv_number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// Runs `body` and maps every exception to an exit code with a message on `err`.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const NoConvergence& e) {
        err << "error: no convergence";
        if (e.window() >= 0) err << " in window " << e.window();
        err << ": " << e.what() << '\n';
        return kExitNoConvergence;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const GridMismatch& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const DomainViolation& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const OutOfDomain& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    } catch (...) {
        err << "internal error: unknown exception\n";
        return kExitInternal;
    }
}

inline nlohmann::json to_json(const WindowInfo& w) {
    return {{"start", w.start},           {"length", w.length},       {"picard_iters", w.picard_iters},
            {"measured_ratio", w.measured_ratio}, {"lipschitz", w.lipschitz}, {"bound", w.bound},
            {"delta", w.delta},           {"certificate", w.certificate}, {"retries", w.retries},
            {"certified", w.certified}};
}

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SOBDDE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
        throw InvalidArgument(std::string("SOBDDE_THREADS must be a positive integer, got '") + env + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace detail

inline nlohmann::json diagnostics_json(const ProblemSpec& spec, const SolveResult& sol) {
    nlohmann::json windows = nlohmann::json::array();
    double max_ratio = 0.0;
    for (const auto& w : sol.windows) {
        windows.push_back(detail::to_json(w));
        max_ratio = std::max(max_ratio, w.measured_ratio);
    }
    return {{"name", spec.name},
            {"dim", spec.model.dim()},
            {"R", spec.big_r},
            {"r", spec.r},
            {"p", spec.cfg.p_norm.p()},
            {"h", spec.cfg.h},
            {"t_end", spec.cfg.t_end},
            {"t_reached", sol.t_reached},
            {"escaped", sol.escaped},
            {"escape_reason", sol.escape_reason},
            {"max_ratio", max_ratio},
            {"windows", windows}};
}

inline int cmd_solve(const std::string& spec_path, const std::string& prefix, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const ProblemSpec spec = load_problem(spec_path);
        const SolveResult sol = solve(spec.phi, spec.r, spec.model, spec.cfg);
        write_csv(prefix + ".traj.csv", sol.trajectory);
        detail::write_text(prefix + ".diag.json", diagnostics_json(spec, sol).dump(2) + "\n");
        out << "solve: " << sol.windows.size() << " windows, t_reached = " << sol.t_reached << '\n';
        if (sol.escaped) {
            err << "escaped before t_end at t = " << sol.t_reached << ": " << sol.escape_reason << '\n';
            return static_cast<int>(kExitEscaped);
        }
        return static_cast<int>(kExitOk);
    });
}

/// Comma-separated reals, e.g. "1e-2,1e-3".
inline std::vector<double> parse_eps_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(cell, &used);
        } catch (const std::exception&) {
            throw InvalidArgument("--eps: bad number '" + cell + "'");
        }
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw InvalidArgument("--eps: bad number '" + cell + "'");
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("--eps: values must be positive");
        out.push_back(v);
    }
    if (out.empty()) throw InvalidArgument("--eps: empty list");
    return out;
}

inline int cmd_sens(const std::string& spec_path, const std::string& dir_path, const std::string& prefix,
                    const SensOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const ProblemSpec spec = load_problem(spec_path);
        const SensitivityDirection dir = load_direction(dir_path, spec);
        const SolveResult sol = solve(spec.phi, spec.r, spec.model, spec.cfg);
        if (sol.escaped) {
            err << "escaped before t_end at t = " << sol.t_reached << ": " << sol.escape_reason << '\n';
            return static_cast<int>(kExitEscaped);
        }
        const SensitivityTrajectory st = propagate_sensitivity(sol, spec.phi, spec.r, spec.model, dir, spec.cfg);
        write_csv(prefix + ".dx.csv", st.dx);
        out << "sens: " << st.windows.size() << " windows, ||dx||_W1p = " << w1p_norm(st.dx, spec.cfg.p_norm) << '\n';
        if (opt.fd) {
            const auto rows = fd_check(spec.phi, spec.r, spec.model, dir, spec.cfg, opt.eps);
            std::ostringstream csv;
            csv << "eps,err,scheme\n";
            for (const auto& row : rows) {
                csv << detail::csv_number(row.eps) << ',' << detail::csv_number(row.err) << ',' << to_string(row.scheme)
                    << '\n';
                out << "fd eps = " << row.eps << "  err = " << row.err << "  (" << to_string(row.scheme) << ")\n";
            }
            detail::write_text(prefix + ".fd_table.csv", csv.str());
        }
        return static_cast<int>(kExitOk);
    });
}

struct SweepRow {
    double r = 0.0;
    bool escaped = false;
    double t_reached = 0.0;
    Vector x;     // x(t_end)
    Vector dxdr;  // d x(t_end) / dr
};

/// One row per r on an even grid; rows are independent and may run in parallel.
inline std::vector<SweepRow> run_sweep(const ProblemSpec& spec, const SweepOptions& opt) {
    if (opt.steps < 1) throw InvalidArgument("sweep: need at least one r value");
    if (!(opt.r_min >= 0.0 && opt.r_max <= spec.big_r && opt.r_min <= opt.r_max))
        throw InvalidArgument("sweep: need 0 <= r_min <= r_max <= R");
    if (opt.steps == 1 && opt.r_min != opt.r_max) throw InvalidArgument("sweep: one r value needs r_min = r_max");
    const std::size_t n = spec.model.dim();
    std::vector<SweepRow> rows(opt.steps);
    for (std::size_t i = 0; i < opt.steps; ++i) {
        rows[i].r = opt.steps == 1 ? opt.r_min
                                   : opt.r_min + (opt.r_max - opt.r_min) * static_cast<double>(i) /
                                                     static_cast<double>(opt.steps - 1);
    }
    rows.back().r = opt.r_max;

    auto compute = [&](SweepRow& row) {
        const SolveResult sol = solve(spec.phi, row.r, spec.model, spec.cfg);
        row.escaped = sol.escaped;
        row.t_reached = sol.t_reached;
        if (sol.escaped) {
            row.x.assign(n, std::nan(""));
            row.dxdr.assign(n, std::nan(""));
            return;
        }
        const auto st =
            propagate_sensitivity(sol, spec.phi, row.r, spec.model, SensitivityDirection::zero_like(spec.phi, 1.0), spec.cfg);
        row.x = sol.trajectory.evaluate(sol.t_reached);
        row.dxdr = st.dx.evaluate(sol.t_reached);
    };

    const unsigned threads = std::min<unsigned>(detail::resolve_threads(opt.threads), static_cast<unsigned>(rows.size()));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(rows.size());
    auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            try {
                compute(rows[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return rows;
}

struct SweepConsistency {
    std::vector<double> taylor;   // |x(r+d) - x(r) - d x_r(r)|, row i vs i+1
    std::vector<double> secant;   // |x(r+d) - x(r) - d (x_r(r) + x_r(r+d)) / 2|
    double max_secant = 0.0;
    bool checked = false;
};

/// Max-norm mismatches between adjacent rows; NaN where either row escaped.
inline SweepConsistency sweep_consistency(const std::vector<SweepRow>& rows) {
    SweepConsistency c;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        const auto& a = rows[i];
        const auto& b = rows[i + 1];
        if (a.escaped || b.escaped) {
            c.taylor.push_back(std::nan(""));
            c.secant.push_back(std::nan(""));
            continue;
        }
        const double d = b.r - a.r;
        double tay = 0.0, sec = 0.0;
        for (std::size_t k = 0; k < a.x.size(); ++k) {
            const double diff = b.x[k] - a.x[k];
            tay = std::max(tay, std::abs(diff - d * a.dxdr[k]));
            sec = std::max(sec, std::abs(diff - 0.5 * d * (a.dxdr[k] + b.dxdr[k])));
        }
        c.taylor.push_back(tay);
        c.secant.push_back(sec);
        c.max_secant = std::max(c.max_secant, sec);
        c.checked = true;
    }
    return c;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, const SweepConsistency& c) {
    std::ostringstream os;
    const std::size_t n = rows.empty() ? 0 : rows.front().x.size();
    os << "r,escaped,t_reached";
    for (std::size_t k = 0; k < n; ++k) os << ",x_" << (k + 1);
    for (std::size_t k = 0; k < n; ++k) os << ",dxdr_" << (k + 1);
    os << ",taylor_mismatch,secant_mismatch\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        os << detail::csv_number(row.r) << ',' << (row.escaped ? 1 : 0) << ',' << detail::csv_number(row.t_reached);
        for (double v : row.x) os << ',' << detail::csv_number(v);
        for (double v : row.dxdr) os << ',' << detail::csv_number(v);
        if (i < c.taylor.size())
            os << ',' << detail::csv_number(c.taylor[i]) << ',' << detail::csv_number(c.secant[i]);
        else
            os << ",,";
        os << '\n';
    }
    return os.str();
}

inline int cmd_sweep(const std::string& spec_path, const std::string& prefix, const SweepOptions& opt,
                     std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const ProblemSpec spec = load_problem(spec_path);
        const auto rows = run_sweep(spec, opt);
        const auto c = sweep_consistency(rows);
        detail::write_text(prefix + ".sweep.csv", sweep_csv(rows, c));
        std::size_t escaped = 0;
        for (const auto& r : rows) escaped += r.escaped ? 1 : 0;
        out << "sweep: " << rows.size() << " rows, " << escaped << " escaped\n";
        if (c.checked) {
            const bool ok = c.max_secant <= opt.tolerance;
            out << "consistency: max secant mismatch " << c.max_secant << (ok ? " <= " : " > ") << opt.tolerance
                << (ok ? " ok" : " VIOLATED") << '\n';
        } else {
            out << "consistency: not checked (fewer than two computed rows)\n";
        }
        return static_cast<int>(kExitOk);
    });
}

/// phi(theta) = |theta + 0.5| on [-1, 0], h = 1e-3.
inline GridFunction counterexample_history() {
    return GridFunction::sample(-1.0, 0.0, 1000, 1, [](double t) { return Vector{std::abs(t + 0.5)}; });
}

inline int cmd_counterexample(const std::string& prefix, const CounterexampleOptions& opt, std::ostream& out,
                              std::ostream& err) {
    return detail::guarded(err, [&] {
        if (opt.points < 2) throw InvalidArgument("counterexample: need at least two c values");
        const GridFunction phi = counterexample_history();
        std::ostringstream csv;
        csv << "c,value,left_dq,right_dq\n";
        double max_jump = 0.0, at = 0.0;
        for (std::size_t i = 0; i < opt.points; ++i) {
            const double c = static_cast<double>(i) / static_cast<double>(opt.points - 1);
            const auto v = counterexample_time_dependent(phi, c, opt.t);
            csv << detail::csv_number(c) << ',' << detail::csv_number(v.value[0]) << ','
                << detail::csv_number(v.left_dq[0]) << ',' << detail::csv_number(v.right_dq[0]) << '\n';
            const double jump = std::abs(v.left_dq[0] - v.right_dq[0]);
            if (jump > max_jump) max_jump = jump, at = c;
        }
        detail::write_text(prefix + ".counterexample.csv", csv.str());
        out << "counterexample: largest |left - right| = " << max_jump << " at c = " << at << '\n';
        return static_cast<int>(kExitOk);
    });
}

inline int cmd_verify(const VerifyConfig& cfg, const std::optional<std::string>& json_path, std::ostream& out,
                      std::ostream& err) {
    return detail::guarded(err, [&] {
        const VerifyReport rep = run_verify_suite(cfg);
        for (const auto& c : rep.checks)
            out << (c.passed ? "PASS " : "FAIL ") << c.name << "  observed = " << c.observed << "  bound = " << c.bound
                << "  samples = " << c.samples << '\n';
        out << (rep.passed ? "all checks passed" : "some checks FAILED") << '\n';
        if (json_path) detail::write_text(*json_path, to_json(rep).dump(2) + "\n");
        return static_cast<int>(rep.passed ? kExitOk : kExitInput);
    });
}

}  // namespace sobdde

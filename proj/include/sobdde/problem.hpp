#pragma once

// Problem and direction files for the command-line front end.

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sobdde/errors.hpp"
#include "sobdde/grid_function.hpp"
#include "sobdde/rhs.hpp"
#include "sobdde/sensitivity.hpp"
#include "sobdde/solver.hpp"

namespace sobdde {

struct ProblemSpec {
    std::string name;
    RhsModel model;
    double big_r = 1.0;
    double r = 0.0;
    GridFunction phi;  // on [-R, 0] with step h
    SolveConfig cfg;
};

namespace detail {

/// Bad value in a named field; the message leads with the dotted path.
inline InvalidArgument field_error(const std::string& path, const std::string& what) {
    return InvalidArgument("field '" + path + "': " + what);
}

inline const nlohmann::json& require(const nlohmann::json& obj, const std::string& key, const std::string& path) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!obj.contains(key)) throw field_error(full, "missing");
    return obj.at(key);
}

inline std::string join_path(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline double as_real(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number()) throw field_error(path, "expected a number, got " + std::string(v.type_name()));
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw field_error(path, "not finite");
    return d;
}

inline long long as_integer(const nlohmann::json& v, const std::string& path) {
    const double d = as_real(v, path);
    if (d != std::floor(d)) throw field_error(path, "expected an integer");
    return static_cast<long long>(d);
}

inline void reject_unknown_fields(const nlohmann::json& obj, std::initializer_list<const char*> known,
                                  const std::string& path) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw field_error(join_path(path, key), "unknown field");
    }
}

/// A scalar applies to every component; an array must have length dim.
inline Vector per_component(const nlohmann::json& params, const char* key, double fallback, std::size_t dim,
                            const std::string& path) {
    const std::string full = join_path(path, key);
    if (!params.contains(key)) return Vector(dim, fallback);
    const auto& v = params.at(key);
    if (v.is_array()) {
        if (v.size() != dim)
            throw field_error(full, "has " + std::to_string(v.size()) + " entries, expected dim = " + std::to_string(dim));
        Vector out;
        for (std::size_t i = 0; i < dim; ++i) out.push_back(as_real(v[i], full + "[" + std::to_string(i) + "]"));
        return out;
    }
    return Vector(dim, as_real(v, full));
}

inline GridFunction history_from_samples(const nlohmann::json& params, double big_r, std::size_t m, std::size_t dim,
                                         const std::string& path) {
    const auto& jt = require(params, "t", path);
    const auto& jx = require(params, "x", path);
    if (!jt.is_array() || jt.size() < 2) throw field_error(path + ".t", "need an array of at least two times");
    if (!jx.is_array() || jx.size() != jt.size())
        throw field_error(path + ".x", "need one sample per entry of t (" + std::to_string(jt.size()) + ")");
    std::vector<double> ts;
    std::vector<Vector> xs;
    for (std::size_t k = 0; k < jt.size(); ++k) {
        ts.push_back(as_real(jt[k], path + ".t[" + std::to_string(k) + "]"));
        if (k > 0 && !(ts[k] > ts[k - 1])) throw field_error(path + ".t", "times must be strictly increasing");
        const std::string xp = path + ".x[" + std::to_string(k) + "]";
        Vector row;
        if (jx[k].is_array()) {
            for (std::size_t i = 0; i < jx[k].size(); ++i) row.push_back(as_real(jx[k][i], xp));
        } else {
            row.push_back(as_real(jx[k], xp));
        }
        if (row.size() != dim) throw field_error(xp, "expected " + std::to_string(dim) + " components");
        xs.push_back(std::move(row));
    }
    const double tol = detail::kGridSnap * std::max(1.0, big_r);
    if (ts.front() > -big_r + tol || ts.back() < -tol)
        throw field_error(path + ".t", "samples must cover [-R, 0]");
    return GridFunction::sample(-big_r, 0.0, m, dim, [&](double t) {
        std::size_t k = 1;
        while (k + 1 < ts.size() && ts[k] < t) ++k;
        const double w = std::clamp((t - ts[k - 1]) / (ts[k] - ts[k - 1]), 0.0, 1.0);
        Vector v(dim);
        for (std::size_t i = 0; i < dim; ++i) v[i] = (1.0 - w) * xs[k - 1][i] + w * xs[k][i];
        return v;
    });
}

}  // namespace detail

/// History on [-R, 0] with m steps, from GridFunction JSON (resampled) or a
/// generator {kind, params}.
inline GridFunction history_from_json(const nlohmann::json& j, double big_r, std::size_t m, std::size_t dim,
                                      const std::string& path = "phi") {
    using detail::field_error;
    if (!j.is_object()) throw field_error(path, "expected an object");
    if (!j.contains("kind")) {
        GridFunction g = [&] {
            try {
                return grid_function_from_json(j);
            } catch (const Error& e) {
                throw field_error(path, e.what());
            } catch (const nlohmann::json::exception& e) {
                throw field_error(path, e.what());
            }
        }();
        const double tol = detail::kGridSnap * std::max(1.0, big_r);
        if (std::abs(g.a() + big_r) > tol || std::abs(g.b()) > tol)
            throw field_error(path, "domain must be exactly [-R, 0] = [" + detail::fmt_double(-big_r) + ", 0], got [" +
                                        detail::fmt_double(g.a()) + ", " + detail::fmt_double(g.b()) + "]");
        if (g.dim() != dim) throw field_error(path + ".dim", "does not match problem dim " + std::to_string(dim));
        if (g.intervals() == m) return GridFunction(-big_r, 0.0, dim, {g.values().begin(), g.values().end()});
        return GridFunction::sample(-big_r, 0.0, m, dim,
                                    [&](double t) { return g.evaluate(std::clamp(t, g.a(), g.b())); });
    }
    const auto& kind_j = j.at("kind");
    if (!kind_j.is_string()) throw field_error(path + ".kind", "expected a string");
    const std::string kind = kind_j.get<std::string>();
    const nlohmann::json params = j.contains("params") ? j.at("params") : nlohmann::json::object();
    const std::string pp = path + ".params";
    if (!params.is_object()) throw field_error(pp, "expected an object");
    detail::reject_unknown_fields(j, {"kind", "params"}, path);
    auto pc = [&](const char* key, double fallback) { return detail::per_component(params, key, fallback, dim, pp); };

    if (kind == "const") {
        detail::reject_unknown_fields(params, {"value"}, pp);
        return GridFunction::constant(-big_r, 0.0, m, pc("value", 0.0));
    }
    if (kind == "linear") {
        detail::reject_unknown_fields(params, {"offset", "slope"}, pp);
        const Vector c = pc("offset", 0.0), s = pc("slope", 0.0);
        return GridFunction::sample(-big_r, 0.0, m, dim, [&](double t) {
            Vector v(dim);
            for (std::size_t i = 0; i < dim; ++i) v[i] = c[i] + s[i] * t;
            return v;
        });
    }
    if (kind == "kink") {
        // offset + scale |theta - at|
        detail::reject_unknown_fields(params, {"at", "scale", "offset"}, pp);
        const Vector at = pc("at", -0.5 * big_r), s = pc("scale", 1.0), c = pc("offset", 0.0);
        return GridFunction::sample(-big_r, 0.0, m, dim, [&](double t) {
            Vector v(dim);
            for (std::size_t i = 0; i < dim; ++i) v[i] = c[i] + s[i] * std::abs(t - at[i]);
            return v;
        });
    }
    if (kind == "sine") {
        detail::reject_unknown_fields(params, {"offset", "amp", "freq", "phase"}, pp);
        const Vector c = pc("offset", 0.0), a = pc("amp", 1.0), w = pc("freq", 1.0), ph = pc("phase", 0.0);
        return GridFunction::sample(-big_r, 0.0, m, dim, [&](double t) {
            Vector v(dim);
            for (std::size_t i = 0; i < dim; ++i) v[i] = c[i] + a[i] * std::sin(w[i] * t + ph[i]);
            return v;
        });
    }
    if (kind == "samples") {
        detail::reject_unknown_fields(params, {"t", "x"}, pp);
        return detail::history_from_samples(params, big_r, m, dim, pp);
    }
    throw field_error(path + ".kind", "unknown generator '" + kind + "' (expected const, linear, kink, sine or samples)");
}

inline RhsModel rhs_from_json(const nlohmann::json& j, std::size_t dim, const std::string& path = "rhs") {
    using detail::field_error;
    if (!j.is_object()) throw field_error(path, "expected {\"builtin\": name, \"params\": {...}} or {\"expr\": [...]}");
    detail::reject_unknown_fields(j, {"builtin", "params", "expr"}, path);
    if (j.contains("builtin") == j.contains("expr")) throw field_error(path, "give exactly one of 'builtin' or 'expr'");
    try {
        if (j.contains("builtin")) {
            if (!j.at("builtin").is_string()) throw field_error(path + ".builtin", "expected a string");
            return make_builtin(j.at("builtin").get<std::string>(), j.contains("params") ? j.at("params") : nlohmann::json{},
                                dim);
        }
        const auto& e = j.at("expr");
        std::vector<std::string> sources;
        if (e.is_string()) {
            sources.push_back(e.get<std::string>());
        } else if (e.is_array()) {
            for (std::size_t i = 0; i < e.size(); ++i) {
                if (!e[i].is_string()) throw field_error(path + ".expr[" + std::to_string(i) + "]", "expected a string");
                sources.push_back(e[i].get<std::string>());
            }
        } else {
            throw field_error(path + ".expr", "expected a string or an array of strings");
        }
        if (j.contains("params")) throw field_error(path + ".params", "only allowed with 'builtin'");
        return make_expr_model(sources, dim);
    } catch (const SyntaxError& err) {
        throw field_error(path + ".expr", err.what());
    } catch (const InvalidArgument& err) {
        const std::string msg = err.what();
        if (msg.rfind("field '", 0) == 0) throw;
        throw field_error(path, msg);
    } catch (const nlohmann::json::exception& err) {
        throw field_error(path, err.what());
    }
}

inline ProblemSpec problem_from_json(const nlohmann::json& j) {
    using detail::as_integer;
    using detail::as_real;
    using detail::field_error;
    using detail::require;
    if (!j.is_object()) throw InvalidArgument("problem JSON must be an object");
    detail::reject_unknown_fields(
        j, {"name", "description", "rhs", "dim", "R", "r", "phi", "p", "h", "t_end", "vec_norm", "solver"}, "");

    const long long dim_ll = as_integer(require(j, "dim", ""), "dim");
    if (dim_ll < 1) throw field_error("dim", "must be >= 1");
    const auto dim = static_cast<std::size_t>(dim_ll);
    const double big_r = as_real(require(j, "R", ""), "R");
    if (!(big_r > 0.0)) throw field_error("R", "must be positive");
    const double r = as_real(require(j, "r", ""), "r");
    if (!(r >= 0.0 && r <= big_r)) throw field_error("r", "must lie in [0, R]");

    SolveConfig cfg;
    const double p = as_real(require(j, "p", ""), "p");
    if (!(p >= 1.0)) throw field_error("p", "must be >= 1");
    VecNorm vec = VecNorm::L2;
    if (j.contains("vec_norm")) {
        if (!j.at("vec_norm").is_string()) throw field_error("vec_norm", "expected a string");
        try {
            vec = vec_norm_from_string(j.at("vec_norm").get<std::string>());
        } catch (const InvalidArgument& e) {
            throw field_error("vec_norm", e.what());
        }
    }
    cfg.p_norm = PNorm(p, vec);
    cfg.h = as_real(require(j, "h", ""), "h");
    if (!(cfg.h > 0.0)) throw field_error("h", "must be positive");
    cfg.t_end = as_real(require(j, "t_end", ""), "t_end");
    if (!(cfg.t_end > 0.0)) throw field_error("t_end", "must be positive");

    std::size_t m = 0;
    try {
        m = grid_steps(big_r, cfg.h, "R");
    } catch (const Error& e) {
        throw field_error("R", std::string("R / h must be an integer: ") + e.what());
    }

    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        if (!s.is_object()) throw field_error("solver", "expected an object");
        detail::reject_unknown_fields(s,
                                      {"delta", "delta_scale", "contraction_target", "picard_tol", "picard_max_iter",
                                       "blowup_bound", "max_window", "lipschitz_samples", "max_retries"},
                                      "solver");
        auto real = [&](const char* key, double& dst) {
            if (s.contains(key)) dst = as_real(s.at(key), std::string("solver.") + key);
        };
        if (s.contains("delta")) cfg.delta = as_real(s.at("delta"), "solver.delta");
        real("delta_scale", cfg.delta_scale);
        real("contraction_target", cfg.contraction_target);
        real("picard_tol", cfg.picard_tol);
        real("blowup_bound", cfg.blowup_bound);
        real("max_window", cfg.max_window);
        if (s.contains("picard_max_iter"))
            cfg.picard_max_iter = static_cast<int>(as_integer(s.at("picard_max_iter"), "solver.picard_max_iter"));
        if (s.contains("max_retries"))
            cfg.max_retries = static_cast<int>(as_integer(s.at("max_retries"), "solver.max_retries"));
        if (s.contains("lipschitz_samples")) {
            const long long n = as_integer(s.at("lipschitz_samples"), "solver.lipschitz_samples");
            if (n < 1) throw field_error("solver.lipschitz_samples", "must be >= 1");
            cfg.lipschitz_samples = static_cast<std::size_t>(n);
        }
        try {
            cfg.validate();
        } catch (const InvalidArgument& e) {
            throw field_error("solver", e.what());
        }
    }

    std::string name = "problem";
    if (j.contains("name")) {
        if (!j.at("name").is_string()) throw field_error("name", "expected a string");
        name = j.at("name").get<std::string>();
    }
    RhsModel model = rhs_from_json(require(j, "rhs", ""), dim);
    GridFunction phi = history_from_json(require(j, "phi", ""), big_r, m, dim);
    return ProblemSpec{std::move(name), std::move(model), big_r, r, std::move(phi), cfg};
}

/// Parse text as JSON; syntax errors report the byte offset.
inline nlohmann::json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument(source + ": malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
    }
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_json_text(ss.str(), path);
}

inline ProblemSpec load_problem(const std::string& path) {
    const nlohmann::json j = read_json_file(path);
    try {
        return problem_from_json(j);
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
}

/// {chi: GridFunction JSON | generator | "zero", xi: real}; both optional.
inline SensitivityDirection direction_from_json(const nlohmann::json& j, const ProblemSpec& spec) {
    using detail::field_error;
    if (!j.is_object()) throw InvalidArgument("direction JSON must be an object");
    detail::reject_unknown_fields(j, {"chi", "xi"}, "");
    SensitivityDirection dir = SensitivityDirection::zero_like(spec.phi);
    if (j.contains("xi")) dir.xi = detail::as_real(j.at("xi"), "xi");
    if (j.contains("chi")) {
        const auto& c = j.at("chi");
        if (c.is_string()) {
            if (c.get<std::string>() != "zero") throw field_error("chi", "the only string form is \"zero\"");
        } else {
            dir.chi = history_from_json(c, spec.big_r, spec.phi.intervals(), spec.phi.dim(), "chi");
        }
    }
    return dir;
}

inline SensitivityDirection load_direction(const std::string& path, const ProblemSpec& spec) {
    const nlohmann::json j = read_json_file(path);
    try {
        return direction_from_json(j, spec);
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
}

}  // namespace sobdde

#pragma once

// Right-hand sides f(u, v) of x'(t) = f(x(t), x(t - r)) with their partial
// Jacobians D1 f = df/du and D2 f = df/dv.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sobdde/errors.hpp"
#include "sobdde/expr.hpp"
#include "sobdde/linalg.hpp"

namespace sobdde {

enum class JacKind { Analytic, FiniteDifference };

class RhsModel {
public:
    using EvalFn = std::function<void(std::span<const double> u, std::span<const double> v, std::span<double> out)>;
    using JacFn = std::function<void(std::span<const double> u, std::span<const double> v, Matrix& d1, Matrix& d2)>;

    /// A model without `jac` falls back to central finite differences.
    RhsModel(std::string name, std::size_t dim, EvalFn eval, JacFn jac = {})
        : name_(std::move(name)), dim_(dim), eval_(std::move(eval)), jac_(std::move(jac)) {
        if (dim_ == 0) throw InvalidArgument("RhsModel: dim must be >= 1");
        if (!eval_) throw InvalidArgument("RhsModel: missing evaluation function");
    }

    const std::string& name() const noexcept { return name_; }
    std::size_t dim() const noexcept { return dim_; }
    JacKind jac_kind() const noexcept { return jac_ ? JacKind::Analytic : JacKind::FiniteDifference; }

    void eval_into(std::span<const double> u, std::span<const double> v, std::span<double> out) const {
        eval_(u, v, out);
        if (!all_finite(out)) throw NonFinite("f(u, v) is not finite in model '" + name_ + "'");
    }

    Vector eval(std::span<const double> u, std::span<const double> v) const {
        check_dims(u, v);
        Vector out(dim_);
        eval_into(u, v, out);
        return out;
    }

    /// Both partial Jacobians at (u, v).
    void jacobians(std::span<const double> u, std::span<const double> v, Matrix& d1, Matrix& d2) const {
        if (d1.rows() != dim_ || d1.cols() != dim_) d1 = Matrix(dim_, dim_);
        if (d2.rows() != dim_ || d2.cols() != dim_) d2 = Matrix(dim_, dim_);
        if (jac_) {
            jac_(u, v, d1, d2);
        } else {
            fd_jacobians(u, v, d1, d2);
        }
        if (!all_finite(d1.data()) || !all_finite(d2.data()))
            throw NonFinite("Jacobian is not finite in model '" + name_ + "'");
    }

    /// D1 f for which = 1, D2 f for which = 2.
    Matrix jacobian(std::span<const double> u, std::span<const double> v, int which) const {
        check_dims(u, v);
        if (which != 1 && which != 2) throw InvalidArgument("jacobian: which must be 1 or 2");
        Matrix d1, d2;
        jacobians(u, v, d1, d2);
        return which == 1 ? d1 : d2;
    }

    /// Central differences with step cbrt(eps) * max(1, |z_j|), regardless
    /// of whether an analytic Jacobian exists.
    void fd_jacobians(std::span<const double> u, std::span<const double> v, Matrix& d1, Matrix& d2) const {
        d1 = Matrix(dim_, dim_);
        d2 = Matrix(dim_, dim_);
        const double base = std::cbrt(std::numeric_limits<double>::epsilon());
        Vector up(u.begin(), u.end()), vp(v.begin(), v.end());
        Vector fp(dim_), fm(dim_);
        for (int which = 1; which <= 2; ++which) {
            Vector& z = which == 1 ? up : vp;
            Matrix& d = which == 1 ? d1 : d2;
            for (std::size_t j = 0; j < dim_; ++j) {
                const double z0 = z[j];
                const double step = base * std::max(1.0, std::abs(z0));
                z[j] = z0 + step;
                eval_into(up, vp, fp);
                z[j] = z0 - step;
                eval_into(up, vp, fm);
                z[j] = z0;
                for (std::size_t i = 0; i < dim_; ++i) d(i, j) = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
    }

private:
    void check_dims(std::span<const double> u, std::span<const double> v) const {
        if (u.size() != dim_ || v.size() != dim_)
            throw InvalidArgument("RhsModel '" + name_ + "': expected state vectors of length " + std::to_string(dim_));
    }

    std::string name_;
    std::size_t dim_;
    EvalFn eval_;
    JacFn jac_;
};

inline Vector eval_rhs(const RhsModel& m, std::span<const double> u, std::span<const double> v) {
    return m.eval(u, v);
}

inline Matrix jacobian(const RhsModel& m, std::span<const double> u, std::span<const double> v, int which) {
    return m.jacobian(u, v, which);
}

// ---------------------------------------------------------------------------
// Built-in models

namespace detail {

inline double param(const nlohmann::json& params, const char* key, double fallback) {
    if (!params.contains(key)) return fallback;
    if (!params.at(key).is_number()) throw InvalidArgument(std::string("parameter '") + key + "' must be a number");
    return params.at(key).get<double>();
}

inline void reject_unknown(const nlohmann::json& params, std::initializer_list<const char*> known,
                           const std::string& model) {
    if (params.is_null()) return;
    if (!params.is_object()) throw InvalidArgument("params for '" + model + "' must be an object");
    for (auto it = params.begin(); it != params.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw InvalidArgument("unknown parameter '" + it.key() + "' for builtin '" + model + "'");
    }
}

// Accepts a scalar (times identity) or an N x N array of rows.
inline Matrix param_matrix(const nlohmann::json& params, const char* key, std::size_t n) {
    if (!params.contains(key)) return Matrix(n, n);
    const auto& j = params.at(key);
    if (j.is_number()) return Matrix::identity(n, j.get<double>());
    if (!j.is_array() || j.size() != n)
        throw InvalidArgument(std::string("parameter '") + key + "' must be a number or an N x N matrix");
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = j.at(i).get<std::vector<double>>();
        if (row.size() != n) throw InvalidArgument(std::string("parameter '") + key + "' has a row of wrong length");
        for (std::size_t k = 0; k < n; ++k) m(i, k) = row[k];
    }
    return m;
}

}  // namespace detail

/// f(u, v) = A u + B v
inline RhsModel make_linear(Matrix a, Matrix b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.rows() != n || b.cols() != n) throw InvalidArgument("linear: A and B must be N x N");
    return RhsModel(
        "linear", n,
        [a, b](std::span<const double> u, std::span<const double> v, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            a.gemv_acc(1.0, u, out);
            b.gemv_acc(1.0, v, out);
        },
        [a, b](std::span<const double>, std::span<const double>, Matrix& d1, Matrix& d2) {
            d1 = a;
            d2 = b;
        });
}

/// f(u, v) = a v
inline RhsModel make_pure_delay(std::size_t n, double a) {
    return RhsModel(
        "pure_delay", n,
        [a](std::span<const double>, std::span<const double> v, std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * v[i];
        },
        [a, n](std::span<const double>, std::span<const double>, Matrix& d1, Matrix& d2) {
            d1 = Matrix(n, n);
            d2 = Matrix::identity(n, a);
        });
}

/// f_i(u, v) = rate u_i (1 - v_i)
inline RhsModel make_logistic(std::size_t n, double rate = 1.0) {
    return RhsModel(
        "logistic", n,
        [rate](std::span<const double> u, std::span<const double> v, std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = rate * u[i] * (1.0 - v[i]);
        },
        [rate, n](std::span<const double> u, std::span<const double> v, Matrix& d1, Matrix& d2) {
            d1 = Matrix(n, n);
            d2 = Matrix(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                d1(i, i) = rate * (1.0 - v[i]);
                d2(i, i) = -rate * u[i];
            }
        });
}

/// f_i(u, v) = beta v_i / (1 + v_i^n) - gamma u_i, integer exponent n >= 1
inline RhsModel make_mackey_glass(std::size_t dim, double beta = 2.0, double gamma = 1.0, int exponent = 10) {
    if (exponent < 1) throw InvalidArgument("mackey_glass: exponent n must be a positive integer");
    auto ipow = [](double x, int k) {
        double r = 1.0;
        for (int i = 0; i < k; ++i) r *= x;
        return r;
    };
    return RhsModel(
        "mackey_glass", dim,
        [=](std::span<const double> u, std::span<const double> v, std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = beta * v[i] / (1.0 + ipow(v[i], exponent)) - gamma * u[i];
        },
        [=](std::span<const double>, std::span<const double> v, Matrix& d1, Matrix& d2) {
            d1 = Matrix::identity(dim, -gamma);
            d2 = Matrix(dim, dim);
            for (std::size_t i = 0; i < dim; ++i) {
                const double vn = ipow(v[i], exponent);
                const double den = 1.0 + vn;
                // d/dv [v / (1 + v^n)] = (1 + (1 - n) v^n) / (1 + v^n)^2
                d2(i, i) = beta * (1.0 + (1.0 - exponent) * vn) / (den * den);
            }
        });
}

/// f_i(u, v) = mu sin(v_i) - u_i
inline RhsModel make_ikeda(std::size_t dim, double mu = 1.0) {
    return RhsModel(
        "ikeda", dim,
        [mu](std::span<const double> u, std::span<const double> v, std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu * std::sin(v[i]) - u[i];
        },
        [mu, dim](std::span<const double>, std::span<const double> v, Matrix& d1, Matrix& d2) {
            d1 = Matrix::identity(dim, -1.0);
            d2 = Matrix(dim, dim);
            for (std::size_t i = 0; i < dim; ++i) d2(i, i) = mu * std::cos(v[i]);
        });
}

/// One expression per component; Jacobians by finite differences.
inline RhsModel make_expr_model(const std::vector<std::string>& sources, std::size_t dim) {
    if (sources.size() != dim)
        throw InvalidArgument("expression model: got " + std::to_string(sources.size()) + " expressions for dim " +
                              std::to_string(dim));
    auto asts = std::make_shared<std::vector<ExprAst>>();
    for (const auto& s : sources) asts->push_back(parse_expr(s, dim));
    return RhsModel("expr", dim, [asts](std::span<const double> u, std::span<const double> v, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*asts)[i].evaluate(u, v);
    });
}

inline const std::vector<std::string>& builtin_names() {
    static const std::vector<std::string> names = {"linear", "pure_delay", "logistic", "mackey_glass", "ikeda"};
    return names;
}

inline RhsModel make_builtin(const std::string& name, const nlohmann::json& params, std::size_t dim) {
    const nlohmann::json p = params.is_null() ? nlohmann::json::object() : params;
    if (name == "linear") {
        detail::reject_unknown(p, {"A", "B"}, name);
        return make_linear(detail::param_matrix(p, "A", dim), detail::param_matrix(p, "B", dim));
    }
    if (name == "pure_delay") {
        detail::reject_unknown(p, {"a"}, name);
        return make_pure_delay(dim, detail::param(p, "a", 1.0));
    }
    if (name == "logistic") {
        detail::reject_unknown(p, {"rate"}, name);
        return make_logistic(dim, detail::param(p, "rate", 1.0));
    }
    if (name == "mackey_glass") {
        detail::reject_unknown(p, {"beta", "gamma", "n"}, name);
        const double n = detail::param(p, "n", 10.0);
        if (n != std::floor(n)) throw InvalidArgument("mackey_glass: n must be an integer");
        return make_mackey_glass(dim, detail::param(p, "beta", 2.0), detail::param(p, "gamma", 1.0),
                                 static_cast<int>(n));
    }
    if (name == "ikeda") {
        detail::reject_unknown(p, {"mu"}, name);
        return make_ikeda(dim, detail::param(p, "mu", 1.0));
    }
    std::string known;
    for (const auto& n : builtin_names()) known += (known.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown builtin '" + name + "' (known: " + known + ")");
}

// ---------------------------------------------------------------------------
// Lipschitz and bound estimates

/// Axis-aligned box in R^N x R^N; lo/hi have length 2N (u first, then v).
struct Box {
    Vector lo;
    Vector hi;

    static Box symmetric(std::size_t n, double radius) {
        return Box{Vector(2 * n, -radius), Vector(2 * n, radius)};
    }
};

struct BoxEstimate {
    double lipschitz = 0.0;  // safety * max ||[D1 f  D2 f]|| (sum norm on the pair)
    double bound = 0.0;      // max |f|
    std::size_t points = 0;
};

inline constexpr double kLipschitzSafety = 1.5;

namespace detail {

inline double radical_inverse(std::size_t index, std::size_t base) {
    double inv = 1.0 / static_cast<double>(base);
    double f = inv;
    double r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return r;
}

inline std::vector<std::size_t> first_primes(std::size_t count) {
    std::vector<std::size_t> primes;
    for (std::size_t c = 2; primes.size() < count; ++c) {
        bool prime = true;
        for (std::size_t p : primes) {
            if (p * p > c) break;
            if (c % p == 0) {
                prime = false;
                break;
            }
        }
        if (prime) primes.push_back(c);
    }
    return primes;
}

}  // namespace detail

/// Deterministic probe set for a box: its corners (when 2N <= 10), the
/// centre, and `samples` Halton points.
inline std::vector<Vector> box_probe_points(const Box& box, std::size_t samples) {
    const std::size_t d = box.lo.size();
    std::vector<Vector> pts;
    if (d <= 10) {
        for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
            Vector z(d);
            for (std::size_t i = 0; i < d; ++i) z[i] = (mask >> i) & 1 ? box.hi[i] : box.lo[i];
            pts.push_back(std::move(z));
        }
    }
    Vector centre(d);
    for (std::size_t i = 0; i < d; ++i) centre[i] = 0.5 * (box.lo[i] + box.hi[i]);
    pts.push_back(centre);
    const auto primes = detail::first_primes(d);
    for (std::size_t s = 1; s <= samples; ++s) {
        Vector z(d);
        for (std::size_t i = 0; i < d; ++i)
            z[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * detail::radical_inverse(s, primes[i]);
        pts.push_back(std::move(z));
    }
    return pts;
}

/// Sampled Lipschitz constant (with safety factor) and sup |f| over a box.
inline BoxEstimate estimate_on_box(const RhsModel& m, const Box& box, std::size_t samples, VecNorm vec) {
    const std::size_t n = m.dim();
    if (samples < 2) throw InvalidArgument("lipschitz_estimate: need at least 2 samples");
    if (box.lo.size() != 2 * n || box.hi.size() != 2 * n) throw InvalidArgument("box must have dimension 2N");
    BoxEstimate est;
    Matrix d1, d2;
    Vector fval(n);
    double jac_max = 0.0;
    for (const Vector& z : box_probe_points(box, samples)) {
        std::span<const double> u(z.data(), n), v(z.data() + n, n);
        m.jacobians(u, v, d1, d2);
        // Operator norm of (du, dv) -> D1 du + D2 dv under |du| + |dv|.
        jac_max = std::max({jac_max, operator_norm(d1, vec), operator_norm(d2, vec)});
        m.eval_into(u, v, fval);
        est.bound = std::max(est.bound, norm(fval, vec));
        ++est.points;
    }
    est.lipschitz = kLipschitzSafety * jac_max;
    return est;
}

inline double lipschitz_estimate(const RhsModel& m, const Box& box, std::size_t samples, VecNorm vec = VecNorm::L2) {
    return estimate_on_box(m, box, samples, vec).lipschitz;
}

}  // namespace sobdde

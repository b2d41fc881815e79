#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>

#include "dbgd/core.hpp"
#include "dbgd/problems.hpp"

namespace dbgd {

/// ||grad g||^2 at or below this is treated as a lower-level stationary point
/// (||grad g|| <= 1e-12): the barrier constraint is vacuous there and the
/// projection is the identity.
inline constexpr double kDefaultDegeneracyGuard = 1e-24;

// ---------------------------------------------------------------------------
// Barrier rules. Each selects the right-hand side phi(x) of the direction
// subproblem  min_d ||grad f - d||^2  s.t.  <grad g, d> >= phi(x).
// ---------------------------------------------------------------------------

/// phi = beta ||grad g||^2, 0 <= beta <= 1.
struct GradNormSquared {
    double beta = 1.0;
};

/// phi = min{alpha (g - g*), beta ||grad g||^2}.
struct DynamicBarrierMin {
    double alpha = 1.0;
    double beta = 1.0;
    double g_star = 0.0;
};

/// phi = (g - g*) / eta: the projection step onto the linearized lower-level
/// halfspace, written as a direction subproblem.
struct LowerLinearization {
    double g_star = 0.0;
    double eta = 1.0;
};

/// Equality-constrained variant: <grad g, d> = beta ||grad g||^2.
struct BloopOrthogonal {
    double beta = 1.0;
};

using PhiRule = std::variant<GradNormSquared, DynamicBarrierMin, LowerLinearization, BloopOrthogonal>;

inline std::string rule_name(const PhiRule& rule) {
    return std::visit(
        [](const auto& r) -> std::string {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, GradNormSquared>) return "grad_norm_sq";
            else if constexpr (std::is_same_v<T, DynamicBarrierMin>) return "barrier_min";
            else if constexpr (std::is_same_v<T, LowerLinearization>) return "linearization";
            else return "bloop";
        },
        rule);
}

inline bool rule_needs_g_star(const PhiRule& rule) {
    return std::holds_alternative<DynamicBarrierMin>(rule) ||
           std::holds_alternative<LowerLinearization>(rule);
}

/// Throws ConfigError when a parameter is out of range.
inline void validate_rule(const PhiRule& rule) {
    std::visit(
        [](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, GradNormSquared>) {
                if (!(r.beta >= 0.0 && r.beta <= 1.0))
                    throw ConfigError("grad_norm_sq: beta must lie in [0, 1]");
            } else if constexpr (std::is_same_v<T, DynamicBarrierMin>) {
                if (!(r.alpha > 0.0) || !(r.beta > 0.0))
                    throw ConfigError("barrier_min: alpha and beta must be positive");
                if (!std::isfinite(r.g_star)) throw ConfigError("barrier_min: g_star must be finite");
            } else if constexpr (std::is_same_v<T, LowerLinearization>) {
                if (!(r.eta > 0.0)) throw ConfigError("linearization: eta must be positive");
                if (!std::isfinite(r.g_star)) throw ConfigError("linearization: g_star must be finite");
            } else {
                if (!(r.beta >= 0.0) || !std::isfinite(r.beta))
                    throw ConfigError("bloop: beta must be non-negative");
            }
        },
        rule);
}

/// Checks the rule against the problem it will run on: g*-based rules need
/// the problem to declare g*.
inline void validate_rule(const PhiRule& rule, const ProblemSpec& problem) {
    validate_rule(rule);
    if (rule_needs_g_star(rule) && !problem.g_star())
        throw ConfigError("rule '" + rule_name(rule) + "' requires a known g* but problem '" +
                          problem.name() + "' declares none");
}

/// Scalar barrier value. For g*-based rules a negative value (g evaluated
/// below the declared g*) is clamped to zero and counted in `clamp_count`.
inline double phi_value(const PhiRule& rule, double g_val, const Vector& grad_g,
                        std::size_t* clamp_count = nullptr) {
    auto clamp = [clamp_count](double v) {
        if (v < 0.0) {
            if (clamp_count) ++*clamp_count;
            return 0.0;
        }
        return v;
    };
    return std::visit(
        [&](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, GradNormSquared>) {
                return r.beta * grad_g.squaredNorm();
            } else if constexpr (std::is_same_v<T, DynamicBarrierMin>) {
                return clamp(std::min(r.alpha * (g_val - r.g_star), r.beta * grad_g.squaredNorm()));
            } else if constexpr (std::is_same_v<T, LowerLinearization>) {
                return clamp((g_val - r.g_star) / r.eta);
            } else {
                throw ConfigError("bloop has no scalar barrier; use bloop_direction");
            }
        },
        rule);
}

struct LambdaResult {
    double lambda = 0.0;
    bool degenerate = false;
};

/// Optimal multiplier of the direction subproblem:
///   lambda = max{(phi - <grad f, grad g>) / ||grad g||^2, 0},
/// or (0, degenerate) when ||grad g||^2 <= guard.
inline LambdaResult lambda_closed_form(const Vector& grad_f, const Vector& grad_g, double phi,
                                       double guard = kDefaultDegeneracyGuard) {
    const double gg = grad_g.squaredNorm();
    if (gg <= guard) return {0.0, true};
    return {std::max((phi - grad_f.dot(grad_g)) / gg, 0.0), false};
}

struct DirectionResult {
    Vector d;
    /// Multiplier on grad g in d = grad f + lambda grad g. Non-negative for
    /// every rule except bloop, where it is the signed equality multiplier.
    double lambda = 0.0;
    double phi_value = 0.0;
    bool degenerate = false;
};

/// Projection of grad f onto the halfspace {d : <grad g, d> >= phi}.
inline DirectionResult dbgd_direction(const Vector& grad_f, const Vector& grad_g, double phi,
                                      double guard = kDefaultDegeneracyGuard) {
    const auto [lambda, degenerate] = lambda_closed_form(grad_f, grad_g, phi, guard);
    DirectionResult out;
    out.d = degenerate ? Vector(grad_f) : Vector(grad_f + lambda * grad_g);
    out.lambda = lambda;
    out.phi_value = phi;
    out.degenerate = degenerate;
    return out;
}

/// beta grad g plus the component of grad f orthogonal to grad g.
inline DirectionResult bloop_direction(const Vector& grad_f, const Vector& grad_g, double beta,
                                       double guard = kDefaultDegeneracyGuard) {
    DirectionResult out;
    const double gg = grad_g.squaredNorm();
    out.phi_value = beta * gg;
    if (gg <= guard) {
        out.d = grad_f;
        out.degenerate = true;
        return out;
    }
    const double coef = grad_f.dot(grad_g) / gg;
    out.d = beta * grad_g + (grad_f - coef * grad_g);
    out.lambda = beta - coef;
    return out;
}

/// Fixed-multiplier direction grad f + lambda grad g.
inline DirectionResult penalty_direction(const Vector& grad_f, const Vector& grad_g, double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("penalty multiplier must be non-negative");
    DirectionResult out;
    out.d = grad_f + lambda * grad_g;
    out.lambda = lambda;
    return out;
}

/// Reference solver for the direction subproblem that never forms the
/// closed-form multiplier. The constraint value c(l) = <grad g, grad f + l grad g> - phi
/// is nondecreasing in l, so the dual optimum is the smallest l >= 0 with
/// c(l) >= 0. It is bracketed by doubling and then bisected until the
/// bracket moves d by at most `tol`.
inline DirectionResult qp_oracle_direction(const Vector& grad_f, const Vector& grad_g, double phi,
                                           double tol) {
    if (!(tol > 0.0)) throw ConfigError("oracle tolerance must be positive");
    const double gnorm = grad_g.norm();
    auto constraint = [&](double l) { return grad_g.dot(grad_f + l * grad_g) - phi; };

    DirectionResult out;
    out.phi_value = phi;
    if (gnorm == 0.0) {
        if (phi > 0.0) throw InfeasibleError("direction subproblem infeasible: grad g = 0 and phi > 0");
        out.d = grad_f;
        out.degenerate = true;
        return out;
    }
    if (constraint(0.0) >= 0.0) {
        out.d = grad_f;
        return out;
    }
    double lo = 0.0, hi = 1.0;
    while (constraint(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi) || hi > 1e300)
            throw InfeasibleError("direction subproblem: multiplier bracket diverged");
    }
    for (int it = 0; it < 2000 && (hi - lo) * gnorm > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (constraint(mid) >= 0.0 ? hi : lo) = mid;
    }
    out.lambda = hi;
    out.d = grad_f + hi * grad_g;
    return out;
}

}  // namespace dbgd

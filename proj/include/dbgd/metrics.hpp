#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "dbgd/core.hpp"
#include "dbgd/direction.hpp"
#include "dbgd/problems.hpp"

namespace dbgd {

/// grad f split into the part parallel to grad g and the orthogonal rest.
struct GradientSplit {
    Vector parallel;
    Vector perp;
};

inline GradientSplit decompose_grad_f(const Vector& grad_f, const Vector& grad_g,
                                      double guard = kDefaultDegeneracyGuard) {
    const double gg = grad_g.squaredNorm();
    if (gg <= guard) return {Vector::Zero(grad_f.size()), grad_f};
    Vector parallel = (grad_f.dot(grad_g) / gg) * grad_g;
    Vector perp = grad_f - parallel;
    return {std::move(parallel), std::move(perp)};
}

/// cos of the angle between grad f and grad g; empty when either squared
/// norm is at or below the guard.
inline std::optional<double> cosine_between(const Vector& grad_f, const Vector& grad_g,
                                            double guard = kDefaultDegeneracyGuard) {
    const double ff = grad_f.squaredNorm(), gg = grad_g.squaredNorm();
    if (ff <= guard || gg <= guard) return std::nullopt;
    return std::clamp(grad_f.dot(grad_g) / std::sqrt(ff * gg), -1.0, 1.0);
}

/// argmin over lambda >= 0 of ||grad f + lambda grad g||.
inline double report_optimal_lambda(const Vector& grad_f, const Vector& grad_g,
                                    double guard = kDefaultDegeneracyGuard) {
    const double gg = grad_g.squaredNorm();
    if (gg <= guard) return 0.0;
    return std::max(-grad_f.dot(grad_g) / gg, 0.0);
}

/// Stationarity residuals at one point for a given multiplier.
struct StationarityReport {
    double grad_f_sq = 0.0;
    double grad_g_sq = 0.0;
    double lambda = 0.0;
    double d_sq = 0.0;  ///< ||grad f + lambda grad g||^2
    double f_par_sq = 0.0;
    double f_perp_sq = 0.0;
    std::optional<double> cos_theta;
    std::optional<double> primal_gap;  ///< g(x) - g*, when g* is known

    /// ||grad g||^2 <= eps_g and ||grad f + lambda grad g||^2 <= eps_f.
    bool is_stationary(double eps_f, double eps_g) const { return grad_g_sq <= eps_g && d_sq <= eps_f; }
};

/// Residuals computed from gradients already in hand.
inline StationarityReport stationarity_from_gradients(const Vector& grad_f, const Vector& grad_g,
                                                      double lambda,
                                                      double guard = kDefaultDegeneracyGuard) {
    StationarityReport rep;
    rep.grad_f_sq = grad_f.squaredNorm();
    rep.grad_g_sq = grad_g.squaredNorm();
    rep.lambda = lambda;
    rep.d_sq = (grad_f + lambda * grad_g).squaredNorm();
    const GradientSplit split = decompose_grad_f(grad_f, grad_g, guard);
    rep.f_par_sq = split.parallel.squaredNorm();
    rep.f_perp_sq = split.perp.squaredNorm();
    rep.cos_theta = cosine_between(grad_f, grad_g, guard);
    return rep;
}

inline StationarityReport stationarity_report(const ProblemSpec& problem, const Vector& x, double lambda,
                                              double guard = kDefaultDegeneracyGuard) {
    if (!(lambda >= 0.0)) throw ConfigError("stationarity report requires lambda >= 0");
    if (x.size() != problem.dimension()) throw ConfigError("point dimension does not match problem");
    const Vector gf = problem.grad_f(x);
    const Vector gg = problem.grad_g(x);
    if (!gf.allFinite() || !gg.allFinite()) throw EvaluationError("non-finite gradient in stationarity report");
    StationarityReport rep = stationarity_from_gradients(gf, gg, lambda, guard);
    if (problem.g_star()) {
        const double gv = problem.g(x);
        if (!std::isfinite(gv)) throw EvaluationError("non-finite g in stationarity report");
        rep.primal_gap = gv - *problem.g_star();
    }
    return rep;
}

/// Report at the multiplier that minimizes ||grad f + lambda grad g|| over lambda >= 0.
inline StationarityReport optimal_stationarity_report(const ProblemSpec& problem, const Vector& x,
                                                      double guard = kDefaultDegeneracyGuard) {
    return stationarity_report(problem, x, report_optimal_lambda(problem.grad_f(x), problem.grad_g(x), guard),
                               guard);
}

// ---------------------------------------------------------------------------
// KKT-type conditions
// ---------------------------------------------------------------------------

struct KktConditions {
    bool scaled_ok = false;               ///< gap <= eps_p, ||res|| <= eps_d (1 + lambda)
    bool unscaled_ok = false;             ///< gap <= eps_p, ||res|| <= eps_d
    bool infeasible_stationary_ok = false;  ///< gap >= 0.99 eps_p, ||grad g|| <= eps_d
};

/// Case analysis on scalar residuals: `primal_gap` = g - g*,
/// `residual_norm` = ||grad f + lambda grad g||.
inline KktConditions evaluate_kkt_conditions(double primal_gap, double grad_g_norm, double residual_norm,
                                             double lambda, double eps_p, double eps_d) {
    KktConditions out;
    const bool feasible = primal_gap <= eps_p && lambda >= 0.0;
    out.scaled_ok = feasible && residual_norm <= eps_d * (1.0 + lambda);
    out.unscaled_ok = feasible && residual_norm <= eps_d;
    out.infeasible_stationary_ok = primal_gap >= 0.99 * eps_p && grad_g_norm <= eps_d;
    return out;
}

/// Least-squares residual of the gradient-constrained reformulation:
/// eps_p = min_w ||grad f + H w||^2 with H the Hessian of g, eps_d = ||grad g||^2.
struct GradReformResidual {
    double eps_p = 0.0;
    double eps_d = 0.0;
    Vector w;
    int iterations = 0;
    bool converged = false;
};

/// CGLS on min_w ||H w + grad f|| using Hessian-vector products only.
/// Stops once ||H (grad f + H w)|| <= ls_tol.
inline GradReformResidual grad_reform_residual(const ProblemSpec& problem, const Vector& x, double ls_tol,
                                               int max_iterations = 0) {
    if (!(ls_tol > 0.0)) throw ConfigError("least-squares tolerance must be positive");
    if (!problem.has_hessian_vector()) throw CapabilityError("hessian_vector");
    const Eigen::Index n = problem.dimension();
    if (max_iterations <= 0) max_iterations = static_cast<int>(std::max<Eigen::Index>(50, 20 * n));

    const Vector grad_f = problem.grad_f(x);
    const Vector grad_g = problem.grad_g(x);
    if (!grad_f.allFinite() || !grad_g.allFinite()) throw EvaluationError("non-finite gradient");
    auto apply = [&](const Vector& v) { return problem.hess_g_vec(x, v); };

    GradReformResidual out;
    out.w = Vector::Zero(n);
    Vector residual = -grad_f;  // target minus H w
    Vector s = apply(residual);
    Vector p = s;
    double gamma = s.squaredNorm();
    out.converged = std::sqrt(gamma) <= ls_tol;
    while (!out.converged && out.iterations < max_iterations) {
        const Vector q = apply(p);
        const double qq = q.squaredNorm();
        if (qq == 0.0) break;
        const double step = gamma / qq;
        out.w += step * p;
        residual -= step * q;
        s = apply(residual);
        const double gamma_next = s.squaredNorm();
        ++out.iterations;
        if (std::sqrt(gamma_next) <= ls_tol) {
            out.converged = true;
            break;
        }
        p = s + (gamma_next / gamma) * p;
        gamma = gamma_next;
    }
    out.eps_p = (grad_f + apply(out.w)).squaredNorm();
    out.eps_d = grad_g.squaredNorm();
    return out;
}

struct KKTReport {
    double eps_p = 0.0;
    double eps_d = 0.0;
    double primal_gap = 0.0;
    bool scaled_ok = false;
    bool unscaled_ok = false;
    bool infeasible_stationary_ok = false;
    double grad_reform_eps_p = 0.0;
    double grad_reform_eps_d = 0.0;
    double w_norm = 0.0;
    bool grad_reform_converged = false;
};

inline KKTReport kkt_report(const ProblemSpec& problem, const Vector& x, double lambda, double eps_p,
                            double eps_d, double ls_tol) {
    const double g_star = problem.require_g_star();
    if (!problem.has_hessian_vector()) throw CapabilityError("hessian_vector");
    const Vector grad_f = problem.grad_f(x);
    const Vector grad_g = problem.grad_g(x);
    const double gv = problem.g(x);
    if (!grad_f.allFinite() || !grad_g.allFinite() || !std::isfinite(gv))
        throw EvaluationError("non-finite evaluation in KKT report");

    KKTReport rep;
    rep.eps_p = eps_p;
    rep.eps_d = eps_d;
    rep.primal_gap = gv - g_star;
    const KktConditions c = evaluate_kkt_conditions(rep.primal_gap, grad_g.norm(),
                                                    (grad_f + lambda * grad_g).norm(), lambda, eps_p, eps_d);
    rep.scaled_ok = c.scaled_ok;
    rep.unscaled_ok = c.unscaled_ok;
    rep.infeasible_stationary_ok = c.infeasible_stationary_ok;

    const GradReformResidual ls = grad_reform_residual(problem, x, ls_tol);
    rep.grad_reform_eps_p = ls.eps_p;
    rep.grad_reform_eps_d = ls.eps_d;
    rep.w_norm = ls.w.norm();
    rep.grad_reform_converged = ls.converged;
    return rep;
}

}  // namespace dbgd

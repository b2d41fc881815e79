#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "dbgd/core.hpp"
#include "dbgd/parallel.hpp"
#include "dbgd/problems.hpp"
#include "dbgd/solver.hpp"

namespace dbgd {

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

/// Central differences of f and g against the analytic gradients. The error
/// of coordinate i is |fd_i - an_i| / max(1, |an_i|); returns the worst one
/// over both objectives.
inline double finite_diff_check(const ProblemSpec& problem, const Vector& x, double h) {
    if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
    if (x.size() != problem.dimension()) throw ConfigError("point dimension does not match problem");
    const Vector gf = problem.grad_f(x);
    const Vector gg = problem.grad_g(x);
    if (!gf.allFinite() || !gg.allFinite()) throw EvaluationError("non-finite analytic gradient");

    double worst = 0.0;
    Vector xp = x, xm = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        const double step = xp[i] - xm[i];  // the step actually representable
        const double df = (problem.f(xp) - problem.f(xm)) / step;
        const double dg = (problem.g(xp) - problem.g(xm)) / step;
        if (!std::isfinite(df) || !std::isfinite(dg)) throw EvaluationError("non-finite finite difference");
        worst = std::max(worst, std::abs(df - gf[i]) / std::max(1.0, std::abs(gf[i])));
        worst = std::max(worst, std::abs(dg - gg[i]) / std::max(1.0, std::abs(gg[i])));
        xp[i] = xm[i] = x[i];
    }
    return worst;
}

// ---------------------------------------------------------------------------
// x <= A + B sqrt(x)  implies  x <= 2A + B^2
// ---------------------------------------------------------------------------

/// True unless the premise holds and the conclusion fails.
inline bool sqrt_lemma_check(double A, double B, double x) {
    const bool premise = x <= A + B * std::sqrt(x);
    return !premise || x <= 2.0 * A + B * B;
}

// ---------------------------------------------------------------------------
// Descent-inequality audit of a DBGD trace
// ---------------------------------------------------------------------------

struct AuditCheck {
    bool checked = false;  ///< false when the needed constants or step regime are missing
    std::vector<bool> ok;  ///< per iteration; empty when not checked
    std::size_t violations = 0;
    double worst_excess = -std::numeric_limits<double>::infinity();  ///< max of lhs - rhs
};

struct AuditReport {
    AuditCheck upper_descent;    ///< (1 - eta L_f/2)||d||^2 <= df/eta + lambda beta ||grad g||^2
    AuditCheck lower_descent;    ///< beta ||grad g||^2 <= dg/eta + (L_g/2) eta ||d||^2
    AuditCheck lambda_bound;     ///< lambda <= beta + G_f / ||grad g||
    AuditCheck direction_bound;  ///< ||d||^2 <= 4(df + beta dg)/eta + 2 dg/(L_g eta^2) + 2 beta G_f^2 L_g eta
    AuditCheck potential_bound;  ///< 1/2||d||^2 + beta||grad g||^2/(L_g eta) <= 4(df + beta dg)/eta + 3 dg/(L_g eta^2) + 2 beta G_f^2 L_g eta
    std::size_t iterations = 0;

    std::size_t total_violations() const {
        return upper_descent.violations + lower_descent.violations + lambda_bound.violations +
               direction_bound.violations + potential_bound.violations;
    }
};

namespace detail {

inline constexpr double kAuditSlack = 1e-8;

inline void audit_record(AuditCheck& c, double lhs, double rhs, double magnitude) {
    const double excess = lhs - rhs;
    const bool ok = excess <= kAuditSlack * (1.0 + magnitude);
    c.ok.push_back(ok);
    if (!ok) ++c.violations;
    c.worst_excess = std::max(c.worst_excess, excess);
}

}  // namespace detail

/// Checks each recorded iteration of a constant-step DBGD run against the
/// descent inequalities, the multiplier bound and the potential bound. The
/// G_f-based checks need an upper gradient bound in `profile`; the direction
/// and potential bounds also need eta <= 1/(L_f + L_g).
inline AuditReport inequality_audit(const TraceRecord& trace, const SmoothnessProfile& profile, double eta,
                                    double beta, double guard = kDefaultDegeneracyGuard) {
    if (trace.method != "dbgd") throw ConfigError("inequality audit needs a dbgd trace, got '" + trace.method + "'");
    if (!(eta > 0.0)) throw ConfigError("audit: eta must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("audit: beta must lie in [0, 1]");

    const double Lf = profile.upper_lipschitz(), Lg = profile.lower_lipschitz();
    const std::optional<double> Gf = profile.upper_grad_bound();
    const bool small_step = eta <= 1.0 / profile.total_lipschitz();

    AuditReport rep;
    rep.iterations = trace.size();
    rep.upper_descent.checked = rep.lower_descent.checked = true;
    rep.lambda_bound.checked = Gf.has_value();
    rep.direction_bound.checked = rep.potential_bound.checked = Gf.has_value() && small_step;

    for (const TraceRow& r : trace.rows) {
        const double df = r.delta_f, dg = r.delta_g;
        {
            const double lhs = (1.0 - eta * Lf / 2.0) * r.d_sq;
            const double t1 = df / eta, t2 = r.lambda * beta * r.grad_g_sq;
            detail::audit_record(rep.upper_descent, lhs, t1 + t2,
                                 std::max({std::abs(lhs), std::abs(t1), std::abs(t2)}));
        }
        {
            const double lhs = beta * r.grad_g_sq;
            const double t1 = dg / eta, t2 = 0.5 * Lg * eta * r.d_sq;
            detail::audit_record(rep.lower_descent, lhs, t1 + t2,
                                 std::max({std::abs(lhs), std::abs(t1), std::abs(t2)}));
        }
        if (rep.lambda_bound.checked) {
            if (r.grad_g_sq > guard && !r.degenerate) {
                const double rhs = beta + *Gf / std::sqrt(r.grad_g_sq);
                detail::audit_record(rep.lambda_bound, r.lambda, rhs, std::max(std::abs(r.lambda), rhs));
            } else {
                rep.lambda_bound.ok.push_back(true);
            }
        }
        if (rep.direction_bound.checked) {
            const double t1 = 4.0 * (df + beta * dg) / eta;
            const double t3 = 2.0 * beta * *Gf * *Gf * Lg * eta;
            {
                const double t2 = 2.0 * dg / (Lg * eta * eta);
                detail::audit_record(rep.direction_bound, r.d_sq, t1 + t2 + t3,
                                     std::max({r.d_sq, std::abs(t1), std::abs(t2), t3}));
            }
            {
                const double lhs = 0.5 * r.d_sq + beta * r.grad_g_sq / (Lg * eta);
                const double t2 = 3.0 * dg / (Lg * eta * eta);
                detail::audit_record(rep.potential_bound, lhs, t1 + t2 + t3,
                                     std::max({lhs, std::abs(t1), std::abs(t2), t3}));
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Sampled local certificate
// ---------------------------------------------------------------------------

struct CertificateResult {
    bool pass = false;
    /// max over samples of g(x_hat) - (1+delta) sqrt(eps_g) ||x - x_hat|| - g(x); positive is a violation.
    double worst_lower_margin = -std::numeric_limits<double>::infinity();
    /// Same for f, over samples with g(x) <= g(x_hat); -inf when there were none.
    double worst_upper_margin = -std::numeric_limits<double>::infinity();
    std::size_t samples = 0;
    std::size_t upper_samples = 0;
};

/// Radius from the proof of the local lemma:
/// r = min{2 delta sqrt(eps_g)/L_g, 2 delta sqrt(eps_f)/(lambda L_g + L_f)}.
inline double certificate_radius(const SmoothnessProfile& profile, double eps_f, double eps_g, double delta,
                                 double lambda) {
    const double Lf = profile.upper_lipschitz(), Lg = profile.lower_lipschitz();
    return std::min(2.0 * delta * std::sqrt(eps_g) / Lg, 2.0 * delta * std::sqrt(eps_f) / (lambda * Lg + Lf));
}

/// Uniform point in the ball of the given radius around `center`.
inline Vector sample_ball(Rng& rng, const Vector& center, double radius) {
    const Eigen::Index n = center.size();
    Vector dir = rng.normal_vector(n);
    double norm = dir.norm();
    while (norm == 0.0) {
        dir = rng.normal_vector(n);
        norm = dir.norm();
    }
    const double scale = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
    return center + (scale / norm) * dir;
}

/// Samples the ball around x_hat and checks that neither g nor (on the
/// sublevel set g <= g(x_hat)) f decreases faster than the certified rate.
inline CertificateResult local_certificate(const ProblemSpec& problem, const Vector& x_hat, double eps_f,
                                           double eps_g, double delta, double radius, std::size_t samples,
                                           std::uint64_t seed) {
    if (!(radius > 0.0)) throw ConfigError("certificate radius must be positive");
    if (samples < 1) throw ConfigError("certificate needs at least one sample");
    if (!(eps_f >= 0.0) || !(eps_g >= 0.0) || !(delta >= 0.0))
        throw ConfigError("certificate tolerances must be non-negative");
    if (x_hat.size() != problem.dimension()) throw ConfigError("point dimension does not match problem");

    const double f_hat = problem.f(x_hat), g_hat = problem.g(x_hat);
    if (!std::isfinite(f_hat) || !std::isfinite(g_hat)) throw EvaluationError("non-finite objective at x_hat");
    const double rate_g = (1.0 + delta) * std::sqrt(eps_g);
    const double rate_f = (1.0 + delta) * std::sqrt(eps_f);

    CertificateResult out;
    Rng rng(seed);
    for (std::size_t s = 0; s < samples; ++s) {
        const Vector x = sample_ball(rng, x_hat, radius);
        const double dist = (x - x_hat).norm();
        const double gx = problem.g(x);
        out.worst_lower_margin = std::max(out.worst_lower_margin, g_hat - rate_g * dist - gx);
        if (gx <= g_hat) {
            ++out.upper_samples;
            out.worst_upper_margin = std::max(out.worst_upper_margin, f_hat - rate_f * dist - problem.f(x));
        }
        ++out.samples;
    }
    out.pass = out.worst_lower_margin <= 0.0 && out.worst_upper_margin <= 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Empirical rate of the theorem schedule
// ---------------------------------------------------------------------------

struct RateFit {
    double p = 0.0;
    std::vector<std::size_t> K;
    std::vector<double> min_potential;
    double slope = 0.0;
    double theoretical_slope = 0.0;  ///< -(2+p)/(3+p)
    double tolerance = 0.3;
    bool pass = false;
};

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("slope fit needs two or more matching points");
    const double m = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += std::log(x[i]);
        sy += std::log(y[i]);
    }
    const double mx = sx / m, my = sy / m;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw ConfigError("slope fit needs distinct x values");
    return sxy / sxx;
}

/// Runs DBGD (grad_norm_sq rule) under the theorem schedule for every K and
/// fits the decay of min_k G_k. Sub-runs are independent and may run on
/// `workers` threads.
inline RateFit rate_fit(const ProblemSpec& problem, const Vector& x0, double p, const std::vector<std::size_t>& K_grid,
                        unsigned workers = 1, double tolerance = 0.3) {
    if (K_grid.size() < 3) throw ConfigError("rate fit needs at least 3 values of K");
    if (!(p >= 0.0)) throw ConfigError("rate fit requires p >= 0");
    problem.require_smoothness();

    RateFit fit;
    fit.p = p;
    fit.K = K_grid;
    fit.tolerance = tolerance;
    fit.theoretical_slope = -(2.0 + p) / (3.0 + p);
    fit.min_potential.assign(K_grid.size(), 0.0);

    parallel_for(K_grid.size(), workers, [&](std::size_t i) {
        SolverConfig cfg;
        cfg.method = DbgdMethod{GradNormSquared{1.0}};
        cfg.step = TheoremSchedule{p};
        cfg.iterations = K_grid[i];
        cfg.record = IterateRecording::none;
        const TraceRecord trace = run(problem, cfg, x0);
        fit.min_potential[i] = trace.rows[best_iterate(trace)].potential;
    });

    std::vector<double> ks;
    for (std::size_t k : K_grid) ks.push_back(static_cast<double>(k));
    for (double g : fit.min_potential)
        if (!(g > 0.0)) throw Error("rate fit: minimum potential is not positive; the log-log fit is undefined");
    fit.slope = loglog_slope(ks, fit.min_potential);
    fit.pass = fit.slope <= fit.theoretical_slope + tolerance;
    return fit;
}

}  // namespace dbgd

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dbgd/core.hpp"
#include "dbgd/direction.hpp"
#include "dbgd/metrics.hpp"
#include "dbgd/problems.hpp"

namespace dbgd {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Dynamic barrier descent with the given barrier rule.
struct DbgdMethod {
    PhiRule rule = GradNormSquared{1.0};
};

/// Fixed multiplier: d = grad f + lambda grad g. With `scale_step` the step
/// is eta / (1 + lambda).
struct PenaltyMethod {
    double lambda = 1.0;
    bool scale_step = true;
};

/// beta grad g plus the part of grad f orthogonal to grad g.
struct BloopMethod {
    double beta = 1.0;
};

using Method = std::variant<DbgdMethod, PenaltyMethod, BloopMethod>;

struct ConstantStep {
    double eta = 1e-2;
};

/// eta = 1 / (L K^{1/(3+p)}), beta = K^{-p/(3+p)}.
struct TheoremSchedule {
    double p = 0.0;
};

using StepMode = std::variant<ConstantStep, TheoremSchedule>;

enum class IterateRecording { none, final, all };

struct TraceRow;

struct StopTolerances {
    double eps_f = 0.0;
    double eps_g = 0.0;
};

struct SolverConfig {
    Method method = DbgdMethod{};
    StepMode step = ConstantStep{};
    std::size_t iterations = 1000;
    double guard = kDefaultDegeneracyGuard;
    IterateRecording record = IterateRecording::final;
    std::optional<StopTolerances> stop;  ///< off: run the full budget
    /// Called with (k, row) as each row is produced.
    std::function<void(std::size_t, const TraceRow&)> observer;
    /// false keeps only the latest row in TraceRecord::rows (long runs that
    /// stream rows through `observer`).
    bool retain_rows = true;
};

inline std::string method_name(const Method& m) {
    if (std::holds_alternative<PenaltyMethod>(m)) return "penalty";
    if (std::holds_alternative<BloopMethod>(m)) return "bloop";
    const auto& rule = std::get<DbgdMethod>(m).rule;
    return std::holds_alternative<BloopOrthogonal>(rule) ? "bloop" : "dbgd";
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

/// How the `potential` column was computed.
enum class PotentialKind {
    full,       ///< 1/2 ||d||^2 + beta / (L_g eta) ||grad g||^2
    half_d_sq,  ///< 1/2 ||d||^2 only (penalty runs, or no beta / L_g available)
};

/// One iteration's diagnostics, taken at x_k before the step.
struct TraceRow {
    double f = 0.0;
    double g = 0.0;
    double grad_f_sq = 0.0;
    double grad_g_sq = 0.0;
    double lambda = 0.0;
    double d_sq = 0.0;
    std::optional<double> cos_theta;
    double f_perp_sq = 0.0;
    double f_par_sq = 0.0;
    double delta_f = 0.0;  ///< f(x_k) - f(x_{k+1})
    double delta_g = 0.0;  ///< g(x_k) - g(x_{k+1})
    double potential = 0.0;
    bool degenerate = false;
};

/// Per-iteration columns of a run plus its end state. All columns have the
/// same length, at most the configured iteration budget.
struct TraceRecord {
    std::vector<TraceRow> rows;

    std::string method;  ///< dbgd, penalty or bloop
    PotentialKind potential_kind = PotentialKind::full;
    double eta = 0.0;    ///< step actually applied (after penalty scaling)
    double beta = 0.0;   ///< effective beta; 0 where the rule has none
    bool stopped_early = false;
    std::size_t iterations_run = 0;  ///< rows produced, retained or not
    std::size_t phi_clamps = 0;
    std::vector<std::string> warnings;

    Vector final_x;          ///< x after the last step (when recorded)
    Vector last_recorded_x;  ///< x of the last row (when recorded)
    std::vector<Vector> iterates;  ///< x_k for every row (IterateRecording::all)

    std::size_t size() const noexcept { return rows.size(); }
    bool empty() const noexcept { return rows.empty(); }
    const TraceRow& back() const { return rows.back(); }

    std::vector<double> potentials() const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r.potential);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

struct Schedule {
    double eta = 0.0;
    double beta = 1.0;
};

/// Step size and barrier weight for a fixed budget K.
inline Schedule theorem_schedule(const SmoothnessProfile& profile, std::size_t iterations, double p) {
    if (iterations < 1) throw ConfigError("schedule requires K >= 1");
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("schedule requires p >= 0");
    const double k = static_cast<double>(iterations);
    return {1.0 / (profile.total_lipschitz() * std::pow(k, 1.0 / (3.0 + p))), std::pow(k, -p / (3.0 + p))};
}

/// Index of the smallest potential; ties go to the earliest index. NaNs are skipped.
inline std::size_t best_iterate(std::span<const double> potentials) {
    if (potentials.empty()) throw ConfigError("best_iterate on an empty trace");
    std::size_t best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t k = 0; k < potentials.size(); ++k) {
        const double v = potentials[k];
        if (std::isnan(v)) continue;
        if (!found || v < best_value) {
            best = k;
            best_value = v;
            found = true;
        }
    }
    return best;
}

inline std::size_t best_iterate(const TraceRecord& trace) {
    const auto g = trace.potentials();
    return best_iterate(std::span<const double>(g));
}

namespace detail {

struct ResolvedMethod {
    enum class Kind { dbgd, penalty, bloop } kind = Kind::dbgd;
    PhiRule rule = GradNormSquared{1.0};
    double penalty_lambda = 0.0;
    double bloop_beta = 0.0;
    double beta = 0.0;  // for the potential; 0 means none
    double eta = 0.0;
};

inline double rule_beta(const PhiRule& rule) {
    if (const auto* r = std::get_if<GradNormSquared>(&rule)) return r->beta;
    if (const auto* r = std::get_if<DynamicBarrierMin>(&rule)) return r->beta;
    if (const auto* r = std::get_if<BloopOrthogonal>(&rule)) return r->beta;
    return 0.0;
}

inline ResolvedMethod resolve(const ProblemSpec& problem, const SolverConfig& config, TraceRecord& trace) {
    ResolvedMethod out;
    if (const auto* p = std::get_if<PenaltyMethod>(&config.method)) {
        if (!(p->lambda >= 0.0) || !std::isfinite(p->lambda))
            throw ConfigError("penalty: lambda must be non-negative and finite");
        out.kind = ResolvedMethod::Kind::penalty;
        out.penalty_lambda = p->lambda;
    } else if (const auto* b = std::get_if<BloopMethod>(&config.method)) {
        validate_rule(BloopOrthogonal{b->beta});
        out.kind = ResolvedMethod::Kind::bloop;
        out.bloop_beta = b->beta;
        out.beta = b->beta;
    } else {
        const auto& rule = std::get<DbgdMethod>(config.method).rule;
        validate_rule(rule, problem);
        if (const auto* bo = std::get_if<BloopOrthogonal>(&rule)) {
            out.kind = ResolvedMethod::Kind::bloop;
            out.bloop_beta = bo->beta;
        } else {
            out.rule = rule;
        }
        out.beta = rule_beta(rule);
    }

    if (const auto* c = std::get_if<ConstantStep>(&config.step)) {
        if (!(c->eta > 0.0) || !std::isfinite(c->eta)) throw ConfigError("step size must be positive");
        out.eta = c->eta;
        if (out.kind == ResolvedMethod::Kind::dbgd && problem.smoothness() &&
            c->eta > 1.0 / problem.smoothness()->total_lipschitz())
            trace.warnings.push_back("step size exceeds 1/(L_f + L_g); descent inequalities may not hold");
    } else {
        const auto& sched = std::get<TheoremSchedule>(config.step);
        if (out.kind != ResolvedMethod::Kind::dbgd || !std::holds_alternative<GradNormSquared>(out.rule))
            throw ConfigError("theorem schedule applies only to dbgd with the grad_norm_sq rule");
        const Schedule s = theorem_schedule(problem.require_smoothness(), config.iterations, sched.p);
        out.eta = s.eta;
        out.beta = s.beta;
        out.rule = GradNormSquared{s.beta};
    }
    if (out.kind == ResolvedMethod::Kind::penalty) {
        const auto& p = std::get<PenaltyMethod>(config.method);
        if (p.scale_step) out.eta /= 1.0 + p.lambda;
    }
    return out;
}

}  // namespace detail

/// Runs x_{k+1} = x_k - eta d_k for the configured budget, recording one
/// TraceRow per iteration. With stop tolerances set, the run ends after the
/// first iteration whose x_k is (eps_f, eps_g)-stationary for the best
/// lambda >= 0; that x_k is `last_recorded_x`.
inline TraceRecord run(const ProblemSpec& problem, const SolverConfig& config, const Vector& x0) {
    if (x0.size() != problem.dimension())
        throw ConfigError("x0 has dimension " + std::to_string(x0.size()) + ", problem expects " +
                          std::to_string(problem.dimension()));
    if (!x0.allFinite()) throw ConfigError("x0 must be finite");
    if (config.iterations < 1) throw ConfigError("iteration budget must be at least 1");
    if (!(config.guard > 0.0)) throw ConfigError("degeneracy guard must be positive");
    if (config.stop && (!(config.stop->eps_f >= 0.0) || !(config.stop->eps_g >= 0.0)))
        throw ConfigError("stop tolerances must be non-negative");

    TraceRecord trace;
    trace.method = method_name(config.method);
    const detail::ResolvedMethod m = detail::resolve(problem, config, trace);
    trace.eta = m.eta;
    trace.beta = m.beta;

    const auto& profile = problem.smoothness();
    const bool full_potential = m.kind != detail::ResolvedMethod::Kind::penalty && m.beta > 0.0 && profile;
    trace.potential_kind = full_potential ? PotentialKind::full : PotentialKind::half_d_sq;
    const double potential_weight = full_potential ? m.beta / (profile->lower_lipschitz() * m.eta) : 0.0;

    if (config.retain_rows) trace.rows.reserve(config.iterations);
    if (config.record == IterateRecording::all) trace.iterates.reserve(config.iterations);

    Vector x = x0;
    double fx = problem.f(x);
    double gx = problem.g(x);
    if (!std::isfinite(fx) || !std::isfinite(gx)) throw DivergenceError(0, "non-finite objective at x0");

    for (std::size_t k = 0; k < config.iterations; ++k) {
        const Vector grad_f = problem.grad_f(x);
        const Vector grad_g = problem.grad_g(x);
        if (!grad_f.allFinite() || !grad_g.allFinite()) throw DivergenceError(k, "non-finite gradient");

        DirectionResult dir;
        switch (m.kind) {
            case detail::ResolvedMethod::Kind::dbgd:
                dir = dbgd_direction(grad_f, grad_g, phi_value(m.rule, gx, grad_g, &trace.phi_clamps),
                                     config.guard);
                break;
            case detail::ResolvedMethod::Kind::penalty:
                dir = penalty_direction(grad_f, grad_g, m.penalty_lambda);
                break;
            case detail::ResolvedMethod::Kind::bloop:
                dir = bloop_direction(grad_f, grad_g, m.bloop_beta, config.guard);
                break;
        }
        if (!dir.d.allFinite() || !std::isfinite(dir.lambda)) throw DivergenceError(k, "non-finite direction");

        const Vector x_next = x - m.eta * dir.d;
        const double f_next = problem.f(x_next);
        const double g_next = problem.g(x_next);
        if (!x_next.allFinite() || !std::isfinite(f_next) || !std::isfinite(g_next))
            throw DivergenceError(k, "non-finite iterate or objective after step");

        const GradientSplit split = decompose_grad_f(grad_f, grad_g, config.guard);
        TraceRow row;
        row.f = fx;
        row.g = gx;
        row.grad_f_sq = grad_f.squaredNorm();
        row.grad_g_sq = grad_g.squaredNorm();
        row.lambda = dir.lambda;
        row.d_sq = dir.d.squaredNorm();
        row.cos_theta = cosine_between(grad_f, grad_g, config.guard);
        row.f_perp_sq = split.perp.squaredNorm();
        row.f_par_sq = split.parallel.squaredNorm();
        row.delta_f = fx - f_next;
        row.delta_g = gx - g_next;
        row.potential = 0.5 * row.d_sq + potential_weight * row.grad_g_sq;
        row.degenerate = dir.degenerate;
        if (!std::isfinite(row.potential) || !std::isfinite(row.d_sq))
            throw DivergenceError(k, "non-finite trace quantity");
        if (!config.retain_rows) trace.rows.clear();
        trace.rows.push_back(row);
        ++trace.iterations_run;
        if (config.observer) config.observer(k, row);
        if (config.record == IterateRecording::all) trace.iterates.push_back(x);

        bool stop = false;
        if (config.stop) {
            const double best_lambda = report_optimal_lambda(grad_f, grad_g, config.guard);
            const double res = (grad_f + best_lambda * grad_g).squaredNorm();
            stop = row.grad_g_sq <= config.stop->eps_g && res <= config.stop->eps_f;
        }
        if (stop || k + 1 == config.iterations) {
            if (config.record != IterateRecording::none) trace.last_recorded_x = x;
        }

        x = x_next;
        fx = f_next;
        gx = g_next;
        if (stop) {
            trace.stopped_early = k + 1 < config.iterations;
            break;
        }
    }
    if (config.record != IterateRecording::none) trace.final_x = x;
    return trace;
}

}  // namespace dbgd

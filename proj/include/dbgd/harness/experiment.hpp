#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dbgd/harness/config.hpp"
#include "dbgd/harness/csv.hpp"
#include "dbgd/metrics.hpp"
#include "dbgd/parallel.hpp"
#include "dbgd/solver.hpp"
#include "dbgd/verify.hpp"

namespace dbgd::harness {

/// End state of one run: the last recorded row and the best row by potential.
struct RunSummary {
    std::string label;
    std::string method;
    double eta = 0.0;
    double beta = 0.0;
    std::size_t iterations = 0;  ///< rows produced
    bool stopped_early = false;
    std::size_t final_k = 0;
    TraceRow final_row;
    std::size_t best_k = 0;
    TraceRow best_row;
    std::size_t degenerate_count = 0;
    std::size_t phi_clamps = 0;
    std::vector<std::string> warnings;
    Vector final_x;  ///< x of the final row
    std::filesystem::path trace_path;
    std::optional<KKTReport> kkt;  ///< at final_x, when requested
    double kkt_lambda = 0.0;
};

/// Runs one configuration, streaming its trace to `trace_path`.
inline RunSummary run_to_csv(const ProblemSpec& problem, SolverConfig solver, const Vector& x0,
                             const std::filesystem::path& trace_path, std::size_t stride, const std::string& label) {
    RunSummary s;
    s.label = label;
    s.trace_path = trace_path;
    TraceWriter writer(trace_path, stride);
    bool have_best = false;
    solver.retain_rows = false;
    solver.record = IterateRecording::final;
    solver.observer = [&](std::size_t k, const TraceRow& row) {
        writer.add(k, row);
        if (row.degenerate) ++s.degenerate_count;
        if (!have_best || row.potential < s.best_row.potential) {
            s.best_k = k;
            s.best_row = row;
            have_best = true;
        }
    };
    TraceRecord trace;
    try {
        trace = run(problem, solver, x0);
    } catch (const DivergenceError& e) {
        writer.finish();
        throw DivergenceError(e.iteration(), "run '" + label + "': " + e.detail());
    }
    writer.finish();
    s.method = trace.method;
    s.eta = trace.eta;
    s.beta = trace.beta;
    s.iterations = trace.iterations_run;
    s.stopped_early = trace.stopped_early;
    s.final_k = trace.iterations_run - 1;
    s.final_row = trace.back();
    s.phi_clamps = trace.phi_clamps;
    s.warnings = trace.warnings;
    s.final_x = trace.last_recorded_x;
    return s;
}

inline std::string join_vector(const Vector& x) {
    std::string out;
    for (Eigen::Index i = 0; i < x.size(); ++i) out += (i ? " " : "") + format_number(x[i]);
    return out;
}

inline std::string join_warnings(const std::vector<std::string>& w) {
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "; " : "") + w[i];
    return out;
}

inline constexpr const char* kSummaryHeader =
    "cell,method,eta,beta,iterations,stopped_early,final_k,final_f,final_g,final_grad_f_sq,final_grad_g_sq,"
    "final_lambda,final_d_sq,final_cos_theta,final_f_perp_sq,final_f_par_sq,best_k,best_potential,best_grad_g_sq,"
    "best_d_sq,best_lambda,degenerate_count,phi_clamps,warnings";

inline constexpr const char* kSummaryKktColumns =
    ",kkt_lambda,primal_gap,kkt_scaled_ok,kkt_unscaled_ok,kkt_infeasible_stationary_ok,grad_reform_eps_p,"
    "grad_reform_eps_d,w_norm,grad_reform_converged";

inline std::string summary_line(const RunSummary& s) {
    const TraceRow& f = s.final_row;
    const TraceRow& b = s.best_row;
    std::string line = csv_field(s.label) + "," + s.method + "," + format_number(s.eta) + "," +
                       format_number(s.beta) + "," + std::to_string(s.iterations) + "," +
                       (s.stopped_early ? "1" : "0") + "," + std::to_string(s.final_k);
    for (double v : {f.f, f.g, f.grad_f_sq, f.grad_g_sq, f.lambda, f.d_sq}) line += "," + format_number(v);
    line += "," + format_optional(f.cos_theta);
    line += "," + format_number(f.f_perp_sq) + "," + format_number(f.f_par_sq);
    line += "," + std::to_string(s.best_k);
    for (double v : {b.potential, b.grad_g_sq, b.d_sq, b.lambda}) line += "," + format_number(v);
    line += "," + std::to_string(s.degenerate_count) + "," + std::to_string(s.phi_clamps) + "," +
            csv_field(join_warnings(s.warnings));
    if (s.kkt) {
        const KKTReport& k = *s.kkt;
        line += "," + format_number(s.kkt_lambda) + "," + format_number(k.primal_gap) + "," +
                (k.scaled_ok ? "1" : "0") + "," + (k.unscaled_ok ? "1" : "0") + "," +
                (k.infeasible_stationary_ok ? "1" : "0") + "," + format_number(k.grad_reform_eps_p) + "," +
                format_number(k.grad_reform_eps_d) + "," + format_number(k.w_norm) + "," +
                (k.grad_reform_converged ? "1" : "0");
    }
    return line;
}

/// KKT report at the final row. Uses the run's multiplier, except for bloop,
/// whose signed equality multiplier is replaced by the report-optimal one.
inline void attach_kkt(RunSummary& s, const ProblemSpec& problem, const KktConfig& k, double guard) {
    s.kkt_lambda = s.method == "bloop"
                       ? report_optimal_lambda(problem.grad_f(s.final_x), problem.grad_g(s.final_x), guard)
                       : s.final_row.lambda;
    s.kkt = kkt_report(problem, s.final_x, s.kkt_lambda, k.eps_p, k.eps_d, k.ls_tol);
}

inline std::filesystem::path prepare_directory(const ExperimentConfig& config,
                                               const std::optional<std::filesystem::path>& override_dir) {
    const std::filesystem::path dir = override_dir ? *override_dir : std::filesystem::path(config.output.directory);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

// ---------------------------------------------------------------------------
// run: one trace per grid cell plus summary.csv
// ---------------------------------------------------------------------------

struct ExperimentResult {
    std::filesystem::path directory;
    std::filesystem::path summary_path;
    std::vector<RunSummary> cells;
};

/// Checks everything a run needs without running it; returns the cells.
inline std::vector<Cell> validate_experiment(const ExperimentConfig& config, const ProblemSpec& problem) {
    if (config.kkt) {
        problem.require_g_star();
        if (!problem.has_hessian_vector()) throw CapabilityError("hessian_vector");
    }
    std::vector<Cell> cells = expand_cells(config, problem);
    for (const Cell& cell : cells) {
        TraceRecord scratch;
        dbgd::detail::resolve(problem, solver_config(config, cell), scratch);
    }
    return cells;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const std::optional<std::filesystem::path>& output_dir = std::nullopt) {
    const ProblemSpec problem = build_problem(config.problem);
    const std::vector<Cell> cells = validate_experiment(config, problem);
    const Vector x0 = initial_point(config.run, problem);
    const unsigned workers = resolve_workers(config.run.workers);

    ExperimentResult result;
    result.directory = prepare_directory(config, output_dir);
    result.cells.resize(cells.size());
    parallel_for(cells.size(), workers, [&](std::size_t i) {
        result.cells[i] = run_to_csv(problem, solver_config(config, cells[i]), x0,
                                     result.directory / ("trace_" + cells[i].label + ".csv"),
                                     config.output.trace_stride, cells[i].label);
        if (config.kkt) attach_kkt(result.cells[i], problem, *config.kkt, config.run.guard);
    });

    result.summary_path = result.directory / "summary.csv";
    CsvFile summary(result.summary_path);
    summary.line(std::string(kSummaryHeader) + (config.kkt ? kSummaryKktColumns : ""));
    for (const auto& s : result.cells) summary.line(summary_line(s));
    summary.close();
    return result;
}

// ---------------------------------------------------------------------------
// rates: rate fits for every p, written to rates.json
// ---------------------------------------------------------------------------

struct RatesResult {
    std::filesystem::path path;
    std::vector<RateFit> fits;
};

inline RatesResult run_rates(const ExperimentConfig& config,
                             const std::optional<std::filesystem::path>& output_dir = std::nullopt) {
    if (!config.rates) throw ConfigError("/rates: the rates command needs a 'rates' block");
    const ProblemSpec problem = build_problem(config.problem);
    if (!problem.smoothness()) throw CapabilityError("smoothness");
    const Vector x0 = initial_point(config.run, problem);
    const unsigned workers = resolve_workers(config.run.workers);

    RatesResult result;
    for (double p : config.rates->p)
        result.fits.push_back(rate_fit(problem, x0, p, config.rates->K, workers, config.rates->tolerance));

    ordered_json doc;
    doc["problem"] = problem.name();
    std::vector<double> x0v(x0.data(), x0.data() + x0.size());
    doc["x0"] = x0v;
    ordered_json fits = ordered_json::array();
    for (const RateFit& f : result.fits) {
        ordered_json j;
        j["p"] = f.p;
        j["K"] = f.K;
        j["min_potential"] = f.min_potential;
        j["slope"] = f.slope;
        j["theoretical_slope"] = f.theoretical_slope;
        j["tolerance"] = f.tolerance;
        j["pass"] = f.pass;
        fits.push_back(j);
    }
    doc["fits"] = fits;

    result.path = prepare_directory(config, output_dir) / "rates.json";
    std::ofstream out(result.path, std::ios::binary);
    if (!out) throw Error("cannot open '" + result.path.string() + "' for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw Error("write failed on '" + result.path.string() + "'");
    return result;
}

// ---------------------------------------------------------------------------
// casestudy: one trace per (cell, initialization), terminal classification
// ---------------------------------------------------------------------------

enum class TerminalCase { none, case1, case2 };

inline std::string to_string(TerminalCase c) {
    return c == TerminalCase::case1 ? "I" : c == TerminalCase::case2 ? "II" : "none";
}

/// Case I: small multiplier and small grad f. Case II: grad f opposed to
/// grad g with a large multiplier.
inline TerminalCase classify(const TraceRow& row, const ClassificationConfig& t) {
    if (row.lambda <= t.case1_lambda_max && row.grad_f_sq <= t.case1_grad_f_sq_max) return TerminalCase::case1;
    if (row.cos_theta && *row.cos_theta <= t.case2_cos_max && row.lambda > t.case2_lambda_min)
        return TerminalCase::case2;
    return TerminalCase::none;
}

struct CaseStudyEntry {
    std::size_t init = 0;
    std::string cell;
    Vector x0;
    RunSummary run;
    TerminalCase terminal = TerminalCase::none;
};

struct CaseStudyResult {
    std::filesystem::path directory;
    std::filesystem::path summary_path;
    std::vector<CaseStudyEntry> entries;
    std::size_t case1 = 0;
    std::size_t case2 = 0;
    std::vector<std::string> warnings;
};

inline constexpr const char* kCaseStudyHeader =
    "init,x0,cell,final_k,final_x,final_f,final_g,final_grad_f_sq,final_grad_g_sq,final_lambda,final_cos_theta,"
    "final_f_perp_sq,final_f_par_sq,case";

inline CaseStudyResult run_casestudy(const ExperimentConfig& config,
                                     const std::optional<std::filesystem::path>& output_dir = std::nullopt) {
    if (config.initializations.empty())
        throw ConfigError("/initializations: the casestudy command needs at least one initialization");
    const ProblemSpec problem = build_problem(config.problem);
    const std::vector<Cell> cells = validate_experiment(config, problem);
    std::vector<Vector> inits;
    for (std::size_t i = 0; i < config.initializations.size(); ++i) {
        if (static_cast<Eigen::Index>(config.initializations[i].size()) != problem.dimension())
            throw ConfigError("/initializations/" + std::to_string(i) + ": expected " +
                              std::to_string(problem.dimension()) + " entries");
        inits.push_back(to_vector(config.initializations[i]));
    }
    const ClassificationConfig thresholds = config.classification.value_or(ClassificationConfig{});
    const unsigned workers = resolve_workers(config.run.workers);

    CaseStudyResult result;
    result.directory = prepare_directory(config, output_dir);
    result.entries.resize(cells.size() * inits.size());
    parallel_for(result.entries.size(), workers, [&](std::size_t job) {
        const std::size_t c = job / inits.size(), i = job % inits.size();
        CaseStudyEntry& e = result.entries[job];
        e.init = i;
        e.cell = cells[c].label;
        e.x0 = inits[i];
        const std::string label = cells[c].label + "_init" + std::to_string(i);
        e.run = run_to_csv(problem, solver_config(config, cells[c]), inits[i],
                           result.directory / ("trace_" + label + ".csv"), config.output.trace_stride, label);
        e.terminal = classify(e.run.final_row, thresholds);
    });

    result.summary_path = result.directory / "casestudy.csv";
    CsvFile summary(result.summary_path);
    summary.line(kCaseStudyHeader);
    for (const CaseStudyEntry& e : result.entries) {
        const TraceRow& r = e.run.final_row;
        std::string line = std::to_string(e.init) + "," + join_vector(e.x0) + "," +
                           csv_field(e.cell) + "," +
                           std::to_string(e.run.final_k) + "," + join_vector(e.run.final_x);
        for (double v : {r.f, r.g, r.grad_f_sq, r.grad_g_sq, r.lambda}) line += "," + format_number(v);
        line += "," + format_optional(r.cos_theta);
        line += "," + format_number(r.f_perp_sq) + "," + format_number(r.f_par_sq) + "," + to_string(e.terminal);
        summary.line(line);
        if (e.terminal == TerminalCase::case1) ++result.case1;
        if (e.terminal == TerminalCase::case2) ++result.case2;
    }
    summary.close();
    if (result.case1 + result.case2 == 0)
        result.warnings.push_back("no terminal point met the Case I or Case II thresholds");
    return result;
}

}  // namespace dbgd::harness

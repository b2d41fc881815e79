// Command-line front end: run, rates, casestudy, validate, gradcheck.
//
// Exit codes: 0 success, 1 other failure (I/O, failed gradient check),
// 2 configuration error, 3 divergence, 4 missing problem capability.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dbgd/harness/config.hpp"
#include "dbgd/harness/experiment.hpp"
#include "dbgd/harness/gradcheck.hpp"

namespace {

using namespace dbgd;
using namespace dbgd::harness;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitCapability = 4;

std::optional<std::filesystem::path> as_override(const std::string& dir) {
    if (dir.empty()) return std::nullopt;
    return std::filesystem::path(dir);
}

void print_warnings(const std::string& who, const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s: %s\n", who.c_str(), w.c_str());
}

int cmd_run(const std::string& path, const std::string& out_dir) {
    const ExperimentConfig config = load_config(path);
    const ExperimentResult r = run_experiment(config, as_override(out_dir));
    for (const auto& cell : r.cells) print_warnings(cell.label, cell.warnings);
    std::printf("%zu traces and summary written to %s\n", r.cells.size(), r.directory.string().c_str());
    return 0;
}

int cmd_rates(const std::string& path, const std::string& out_dir) {
    const ExperimentConfig config = load_config(path);
    const RatesResult r = run_rates(config, as_override(out_dir));
    for (const auto& f : r.fits)
        std::printf("p=%g slope=%.4f bound=%.4f %s\n", f.p, f.slope, f.theoretical_slope + f.tolerance,
                    f.pass ? "pass" : "FAIL");
    std::printf("rate fits written to %s\n", r.path.string().c_str());
    return 0;
}

int cmd_casestudy(const std::string& path, const std::string& out_dir) {
    const ExperimentConfig config = load_config(path);
    const CaseStudyResult r = run_casestudy(config, as_override(out_dir));
    for (const auto& e : r.entries) {
        print_warnings(e.run.label, e.run.warnings);
        std::printf("init %zu (%s): %s\n", e.init, join_vector(e.x0).c_str(), to_string(e.terminal).c_str());
    }
    print_warnings("casestudy", r.warnings);
    std::printf("case I: %zu, case II: %zu; written to %s\n", r.case1, r.case2, r.directory.string().c_str());
    return 0;
}

int cmd_validate(const std::string& path) {
    const ExperimentConfig config = load_config(path);
    const ProblemSpec problem = build_problem(config.problem);
    const auto cells = validate_experiment(config, problem);
    if (config.run.x0 || config.run.x0_seed) initial_point(config.run, problem);
    std::printf("%s: ok (%s, %zu cells)\n", path.c_str(), problem.name().c_str(), cells.size());
    return 0;
}

int cmd_gradcheck(const std::string& name, std::uint64_t seed, std::size_t points, int n, int r, double alpha,
                  const std::string& variant) {
    std::optional<ProblemSpec> problem;
    if (name == "toy")
        problem = toy_problem();
    else if (name == "quadratic")
        problem = quadratic_sanity_problem(n);
    else if (name == "matrix_factorization")
        problem = matrix_factorization_problem(n, r, alpha, sparsity_variant_from_string(variant), 0.1, seed);
    else
        throw ConfigError("unknown problem '" + name + "' (expected toy, quadratic or matrix_factorization)");
    const GradcheckResult res = gradcheck(*problem, points, seed);
    std::printf("%s: %zu points, worst relative error %.3e (tolerance %.0e) %s\n", res.problem.c_str(), res.points,
                res.worst, res.tolerance, res.pass ? "pass" : "FAIL");
    return res.pass ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic barrier gradient descent for simple bilevel problems"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    auto* run = app.add_subcommand("run", "run every grid cell; write traces and summary.csv");
    run->add_option("config", config_path, "experiment config (JSON)")->required();
    run->add_option("-o,--output", out_dir, "output directory (overrides the config)");

    auto* rates = app.add_subcommand("rates", "fit the decay of min G_k under the theorem schedule");
    rates->add_option("config", config_path, "experiment config with a rates block")->required();
    rates->add_option("-o,--output", out_dir, "output directory (overrides the config)");

    auto* cases = app.add_subcommand("casestudy", "run every initialization and classify terminal points");
    cases->add_option("config", config_path, "experiment config with initializations")->required();
    cases->add_option("-o,--output", out_dir, "output directory (overrides the config)");

    auto* validate = app.add_subcommand("validate", "check a config without running it");
    validate->add_option("config", config_path, "experiment config (JSON)")->required();

    std::string problem_name, variant = "smooth-l1";
    std::uint64_t seed = 0;
    std::size_t points = 100;
    int n = 10, r = 10;
    double alpha = 1.0;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of a built-in problem");
    grad->add_option("problem", problem_name, "toy, quadratic or matrix_factorization")->required();
    grad->add_option("--seed", seed, "seed for sample points (and the matrix target)");
    grad->add_option("--points", points, "number of sample points")->check(CLI::PositiveNumber);
    grad->add_option("--n", n, "dimension (quadratic) or matrix size")->check(CLI::PositiveNumber);
    grad->add_option("--r", r, "matrix factorization rank")->check(CLI::PositiveNumber);
    grad->add_option("--alpha", alpha, "sparsity smoothing parameter");
    grad->add_option("--variant", variant, "smooth-l1 or log-smooth");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir);
        if (rates->parsed()) return cmd_rates(config_path, out_dir);
        if (cases->parsed()) return cmd_casestudy(config_path, out_dir);
        if (validate->parsed()) return cmd_validate(config_path);
        return cmd_gradcheck(problem_name, seed, points, n, r, alpha, variant);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDivergence;
    } catch (const CapabilityError& e) {
        std::fprintf(stderr, "capability error: %s\n", e.what());
        return kExitCapability;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
}

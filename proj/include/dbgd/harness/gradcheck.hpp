#pragma once

#include <cstdint>
#include <string>

#include "dbgd/core.hpp"
#include "dbgd/problems.hpp"
#include "dbgd/verify.hpp"

namespace dbgd::harness {

struct GradcheckResult {
    std::string problem;
    std::size_t points = 0;
    double worst = 0.0;
    double tolerance = 1e-5;
    bool pass = false;
};

/// Random point where the problem's gradients are worth checking: the
/// constants box for toy, [-1, 1]^n for quadratic, N(0, I) for matrix
/// factorization.
inline Vector gradcheck_point(const ProblemSpec& problem, Rng& rng) {
    const Eigen::Index n = problem.dimension();
    if (problem.name() == "toy") return rng.uniform_vector(n, -kToyBoxHalfWidth, kToyBoxHalfWidth);
    if (problem.name() == "quadratic") return rng.uniform_vector(n, -1.0, 1.0);
    return rng.normal_vector(n);
}

/// Finite-difference audit at `points` seeded points with h = 1e-6 (1 + ||x||).
inline GradcheckResult gradcheck(const ProblemSpec& problem, std::size_t points, std::uint64_t seed,
                                 double tolerance = 1e-5) {
    GradcheckResult out;
    out.problem = problem.name();
    out.points = points;
    out.tolerance = tolerance;
    Rng rng(seed);
    for (std::size_t i = 0; i < points; ++i) {
        const Vector x = gradcheck_point(problem, rng);
        out.worst = std::max(out.worst, finite_diff_check(problem, x, 1e-6 * (1.0 + x.norm())));
    }
    out.pass = out.worst <= tolerance;
    return out;
}

}  // namespace dbgd::harness

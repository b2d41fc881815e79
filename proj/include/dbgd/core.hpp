#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dbgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors. Every failure the library reports derives from dbgd::Error so the
// CLI can map categories onto exit codes.
// ---------------------------------------------------------------------------
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Bad parameters, mismatched dimensions, or a method/problem combination
/// that cannot run.
class ConfigError : public Error {
   public:
    using Error::Error;
};

/// A problem lacks a field an operation needs (g*, Hessian-vector product,
/// smoothness profile).
class CapabilityError : public Error {
   public:
    explicit CapabilityError(std::string field)
        : Error("missing capability: " + field), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

   private:
    std::string field_;
};

/// A run produced a non-finite objective, gradient or step.
class DivergenceError : public Error {
   public:
    DivergenceError(std::size_t iteration, const std::string& what)
        : Error("divergence at iteration " + std::to_string(iteration) + ": " + what),
          iteration_(iteration),
          detail_(what) {}
    std::size_t iteration() const noexcept { return iteration_; }
    const std::string& detail() const noexcept { return detail_; }

   private:
    std::size_t iteration_;
    std::string detail_;
};

/// Non-finite value returned by an evaluator outside of a solver run.
class EvaluationError : public Error {
   public:
    using Error::Error;
};

/// The direction subproblem has an empty feasible set.
class InfeasibleError : public Error {
   public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Random numbers.
//
// Rng wraps std::mt19937_64, whose output sequence is fixed by the standard.
// The distributions from <random> are implementation-defined, so uniform and
// normal draws are derived here explicitly: uniforms take the top 53 bits of
// a 64-bit word, normals use the Box-Muller transform and cache the second
// value. Equal seeds give equal streams on every conforming platform.
// ---------------------------------------------------------------------------
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        cached_ = radius * std::sin(angle);
        has_cached_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    Vector normal_vector(Eigen::Index n, double stddev = 1.0) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = stddev * normal();
        return v;
    }

    Vector uniform_vector(Eigen::Index n, double lo, double hi) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
        return v;
    }

   private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace dbgd

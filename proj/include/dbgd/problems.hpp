#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "dbgd/core.hpp"

namespace dbgd {

/// Smoothness constants of a simple bilevel instance: the upper-gradient
/// bound G_f (optional, some problems have none), the Lipschitz constants of
/// the two gradients, and their sum L.
class SmoothnessProfile {
   public:
    SmoothnessProfile(double upper_lipschitz, double lower_lipschitz,
                      std::optional<double> upper_grad_bound = std::nullopt)
        : upper_lipschitz_(upper_lipschitz),
          lower_lipschitz_(lower_lipschitz),
          total_lipschitz_(upper_lipschitz + lower_lipschitz),
          upper_grad_bound_(upper_grad_bound) {
        if (!(upper_lipschitz > 0.0) || !std::isfinite(upper_lipschitz))
            throw ConfigError("smoothness: L_f must be positive and finite");
        if (!(lower_lipschitz > 0.0) || !std::isfinite(lower_lipschitz))
            throw ConfigError("smoothness: L_g must be positive and finite");
        if (upper_grad_bound && (!(*upper_grad_bound > 0.0) || !std::isfinite(*upper_grad_bound)))
            throw ConfigError("smoothness: G_f must be positive and finite when declared");
    }

    double upper_lipschitz() const noexcept { return upper_lipschitz_; }
    double lower_lipschitz() const noexcept { return lower_lipschitz_; }
    /// L = L_f + L_g.
    double total_lipschitz() const noexcept { return total_lipschitz_; }
    const std::optional<double>& upper_grad_bound() const noexcept { return upper_grad_bound_; }

    SmoothnessProfile with_upper_lipschitz(double v) const { return {v, lower_lipschitz_, upper_grad_bound_}; }
    SmoothnessProfile with_lower_lipschitz(double v) const { return {upper_lipschitz_, v, upper_grad_bound_}; }
    SmoothnessProfile with_upper_grad_bound(std::optional<double> v) const {
        return {upper_lipschitz_, lower_lipschitz_, v};
    }

   private:
    double upper_lipschitz_;
    double lower_lipschitz_;
    double total_lipschitz_;
    std::optional<double> upper_grad_bound_;
};

/// A simple bilevel instance: minimize f over argmin g, x in R^n.
///
/// Immutable after construction. Evaluators are captured by value (shared
/// data behind shared_ptr<const T>), so a ProblemSpec may be copied freely
/// and evaluated from several threads at once.
class ProblemSpec {
   public:
    using ScalarFn = std::function<double(const Vector&)>;
    using GradientFn = std::function<Vector(const Vector&)>;
    using HessianVectorFn = std::function<Vector(const Vector&, const Vector&)>;

    struct Evaluators {
        ScalarFn f;
        ScalarFn g;
        GradientFn grad_f;
        GradientFn grad_g;
        HessianVectorFn hess_g_vec;  // may be empty
    };

    ProblemSpec(std::string name, Eigen::Index dimension, Evaluators evals,
                std::optional<double> g_star, std::optional<SmoothnessProfile> smoothness)
        : name_(std::move(name)),
          dimension_(dimension),
          evals_(std::move(evals)),
          g_star_(g_star),
          smoothness_(std::move(smoothness)) {
        if (dimension_ < 1) throw ConfigError("problem dimension must be positive");
        if (!evals_.f || !evals_.g || !evals_.grad_f || !evals_.grad_g)
            throw ConfigError("problem '" + name_ + "' is missing an evaluator");
    }

    const std::string& name() const noexcept { return name_; }
    Eigen::Index dimension() const noexcept { return dimension_; }

    double f(const Vector& x) const { return evals_.f(x); }

    double g(const Vector& x) const {
        const double v = evals_.g(x);
#ifndef NDEBUG
        assert(!g_star_ || !std::isfinite(v) || v >= *g_star_);
#endif
        return v;
    }

    Vector grad_f(const Vector& x) const { return evals_.grad_f(x); }
    Vector grad_g(const Vector& x) const { return evals_.grad_g(x); }

    bool has_hessian_vector() const noexcept { return static_cast<bool>(evals_.hess_g_vec); }

    /// Hessian of g at x applied to v. Throws CapabilityError when absent.
    Vector hess_g_vec(const Vector& x, const Vector& v) const {
        if (!evals_.hess_g_vec) throw CapabilityError("hessian_vector");
        return evals_.hess_g_vec(x, v);
    }

    const std::optional<double>& g_star() const noexcept { return g_star_; }
    double require_g_star() const {
        if (!g_star_) throw CapabilityError("g_star");
        return *g_star_;
    }

    const std::optional<SmoothnessProfile>& smoothness() const noexcept { return smoothness_; }
    const SmoothnessProfile& require_smoothness() const {
        if (!smoothness_) throw CapabilityError("smoothness");
        return *smoothness_;
    }

    ProblemSpec with_smoothness(std::optional<SmoothnessProfile> profile) const {
        ProblemSpec copy = *this;
        copy.smoothness_ = std::move(profile);
        return copy;
    }

   private:
    std::string name_;
    Eigen::Index dimension_;
    Evaluators evals_;
    std::optional<double> g_star_;
    std::optional<SmoothnessProfile> smoothness_;
};

// ---------------------------------------------------------------------------
// Built-in instances
// ---------------------------------------------------------------------------

/// Half-width of the box [-4, 4]^2 on which the toy smoothness constants hold.
inline constexpr double kToyBoxHalfWidth = 4.0;

/// f(x) = (x1 + pi/20)^2 + (x2 + 1)^2,  g(x) = (x2 - sin(10 x1))^2.
///
/// The lower solution set is the curve x2 = sin(10 x1); the bilevel optimum
/// is (-pi/20, -1). Constants are valid on [-4, 4]^2:
///   L_f = 2;
///   L_g = 1220, a Gershgorin bound on the Hessian
///         [[200 cos^2 + 200 r sin, -20 cos], [-20 cos, 2]] with |r| <= 5;
///   G_f = |grad f| at the corner (4, 4).
inline ProblemSpec toy_problem() {
    constexpr double shift = M_PI / 20.0;
    ProblemSpec::Evaluators e;
    e.f = [](const Vector& x) {
        const double a = x[0] + shift, b = x[1] + 1.0;
        return a * a + b * b;
    };
    e.g = [](const Vector& x) {
        const double r = x[1] - std::sin(10.0 * x[0]);
        return r * r;
    };
    e.grad_f = [](const Vector& x) {
        Vector out(2);
        out << 2.0 * (x[0] + shift), 2.0 * (x[1] + 1.0);
        return out;
    };
    e.grad_g = [](const Vector& x) {
        const double r = x[1] - std::sin(10.0 * x[0]);
        Vector out(2);
        out << -20.0 * r * std::cos(10.0 * x[0]), 2.0 * r;
        return out;
    };
    e.hess_g_vec = [](const Vector& x, const Vector& v) {
        const double s = std::sin(10.0 * x[0]), c = std::cos(10.0 * x[0]);
        const double r = x[1] - s;
        const double h11 = 200.0 * c * c + 200.0 * r * s;
        const double h12 = -20.0 * c;
        Vector out(2);
        out << h11 * v[0] + h12 * v[1], h12 * v[0] + 2.0 * v[1];
        return out;
    };

    const double b = kToyBoxHalfWidth;
    const double max_residual = b + 1.0;
    const double lower_lipschitz = (200.0 + 200.0 * max_residual) + 20.0;
    const double upper_grad_bound = std::hypot(2.0 * (b + shift), 2.0 * (b + 1.0));
    return ProblemSpec("toy", 2, std::move(e), 0.0,
                       SmoothnessProfile(2.0, lower_lipschitz, upper_grad_bound));
}

/// Upper-level sparsity surrogate for matrix factorization.
enum class SparsityVariant {
    smooth_l1,   ///< sum sqrt(U_ij^2 + alpha)
    log_smooth,  ///< sum log(1 + U_ij^2 / alpha)
};

inline std::string to_string(SparsityVariant v) {
    return v == SparsityVariant::smooth_l1 ? "smooth-l1" : "log-smooth";
}

inline SparsityVariant sparsity_variant_from_string(const std::string& s) {
    if (s == "smooth-l1") return SparsityVariant::smooth_l1;
    if (s == "log-smooth") return SparsityVariant::log_smooth;
    throw ConfigError("unknown sparsity variant '" + s + "' (expected smooth-l1 or log-smooth)");
}

/// M = U* U*^T + eps I with U* (n x r) standard normal and one scalar
/// eps ~ N(0, noise_std^2), all drawn from Rng(seed) in that order.
inline Matrix matrix_factorization_target(int n, int r, double noise_std, std::uint64_t seed) {
    if (r < 1 || n < r) throw ConfigError("matrix factorization requires n >= r >= 1");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
    Rng rng(seed);
    Matrix u_star(n, r);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < r; ++j) u_star(i, j) = rng.normal();
    const double eps = noise_std * rng.normal();
    Matrix m = u_star * u_star.transpose();
    m.diagonal().array() += eps;
    return m;
}

/// Matrix factorization as a simple bilevel problem over U in R^{n x r},
/// stored flattened row-major (U_ij at index i*r + j):
///   g(V) = ||M - V V^T||_F^2,  f = smooth-l1 or log-smooth sparsity.
///
/// g* is unknown. Smoothness constants: L_f and G_f are global
/// (1/sqrt(alpha), sqrt(nr) for smooth-l1; 2/alpha, sqrt(nr/alpha) for
/// log-smooth). L_g = 4||M|| + 12 R^2 holds on the region ||V||_2 <= R with
/// R^2 = 4||M||, giving L_g = 52||M||.
inline ProblemSpec matrix_factorization_problem(int n, int r, double alpha, SparsityVariant variant,
                                                double noise_std, std::uint64_t seed) {
    if (r < 1 || n < r) throw ConfigError("matrix factorization requires n >= r >= 1");
    if (!(alpha > 0.0)) throw ConfigError("matrix factorization requires alpha > 0");

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ConstView = Eigen::Map<const RowMajor>;
    using View = Eigen::Map<RowMajor>;

    auto target = std::make_shared<const Matrix>(matrix_factorization_target(n, r, noise_std, seed));
    const Eigen::Index dim = static_cast<Eigen::Index>(n) * r;

    ProblemSpec::Evaluators e;
    if (variant == SparsityVariant::smooth_l1) {
        e.f = [alpha](const Vector& x) { return (x.array().square() + alpha).sqrt().sum(); };
        e.grad_f = [alpha](const Vector& x) -> Vector {
            return x.array() / (x.array().square() + alpha).sqrt();
        };
    } else {
        e.f = [alpha](const Vector& x) { return (1.0 + x.array().square() / alpha).log().sum(); };
        e.grad_f = [alpha](const Vector& x) -> Vector {
            return 2.0 * x.array() / (alpha + x.array().square());
        };
    }
    e.g = [target, n, r](const Vector& x) {
        ConstView v(x.data(), n, r);
        return (*target - v * v.transpose()).squaredNorm();
    };
    e.grad_g = [target, n, r](const Vector& x) {
        ConstView v(x.data(), n, r);
        const Matrix residual = *target - v * v.transpose();
        Vector out(x.size());
        View(out.data(), n, r) = -4.0 * residual * v;
        return out;
    };
    e.hess_g_vec = [target, n, r](const Vector& x, const Vector& w_flat) {
        ConstView v(x.data(), n, r);
        ConstView w(w_flat.data(), n, r);
        const Matrix residual = *target - v * v.transpose();
        const Matrix vtv = v.transpose() * v;
        const Matrix wtv = w.transpose() * v;
        Vector out(x.size());
        View(out.data(), n, r) = -4.0 * residual * w + 4.0 * (w * vtv + v * wtv);
        return out;
    };

    const double m_norm = Eigen::SelfAdjointEigenSolver<Matrix>(*target, Eigen::EigenvaluesOnly)
                              .eigenvalues()
                              .cwiseAbs()
                              .maxCoeff();
    const double entries = static_cast<double>(dim);
    const double upper_lipschitz =
        variant == SparsityVariant::smooth_l1 ? 1.0 / std::sqrt(alpha) : 2.0 / alpha;
    const double upper_grad_bound =
        variant == SparsityVariant::smooth_l1 ? std::sqrt(entries) : std::sqrt(entries / alpha);
    const double lower_lipschitz = 52.0 * std::max(m_norm, 1e-12);

    return ProblemSpec("matfac-" + to_string(variant), dim, std::move(e), std::nullopt,
                       SmoothnessProfile(upper_lipschitz, lower_lipschitz, upper_grad_bound));
}

/// f(x) = 1/2 ||x - 1||^2, g(x) = 1/2 ||x||^2. The lower solution set is
/// {0}, so the bilevel solution is x = 0 (a Case II point: grad f(0) = -1).
/// L_f = L_g = 1; G_f = sqrt(n) (1 + box_radius) bounds ||grad f|| on the
/// box [-box_radius, box_radius]^n.
inline ProblemSpec quadratic_sanity_problem(int n, double box_radius = 0.5) {
    if (n < 1) throw ConfigError("quadratic sanity problem requires n >= 1");
    if (!(box_radius > 0.0)) throw ConfigError("box radius must be positive");
    ProblemSpec::Evaluators e;
    e.f = [](const Vector& x) { return 0.5 * (x.array() - 1.0).square().sum(); };
    e.g = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
    e.grad_f = [](const Vector& x) -> Vector { return x.array() - 1.0; };
    e.grad_g = [](const Vector& x) -> Vector { return x; };
    e.hess_g_vec = [](const Vector&, const Vector& v) -> Vector { return v; };
    const double gf = std::sqrt(static_cast<double>(n)) * (1.0 + box_radius);
    return ProblemSpec("quadratic", n, std::move(e), 0.0, SmoothnessProfile(1.0, 1.0, gf));
}

}  // namespace dbgd

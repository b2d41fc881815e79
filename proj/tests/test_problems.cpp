#include <catch_amalgamated.hpp>

#include <cmath>

#include "dbgd/problems.hpp"
#include "dbgd/verify.hpp"

using namespace dbgd;
using Catch::Approx;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

// Hessian of g by central differences of grad g, column by column.
Matrix fd_hessian(const ProblemSpec& p, const Vector& x, double h) {
    const Eigen::Index n = x.size();
    Matrix H(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        H.col(j) = (p.grad_g(xp) - p.grad_g(xm)) / (2 * h);
    }
    return H;
}

}  // namespace

TEST_CASE("toy: values at the bilevel optimum and the origin", "[problems]") {
    const ProblemSpec toy = toy_problem();
    const Vector opt = vec({-M_PI / 20.0, -1.0});
    REQUIRE(toy.f(opt) == 0.0);
    REQUIRE(toy.g(opt) == Approx(0.0).margin(1e-30));
    REQUIRE(toy.grad_f(opt).norm() == Approx(0.0).margin(1e-15));

    const Vector zero = Vector::Zero(2);
    REQUIRE(toy.grad_g(zero).norm() == 0.0);
    // long double oracle for f(0) = (pi/20)^2 + 1
    const long double s = 3.14159265358979323846264338327950288L / 20.0L;
    REQUIRE(toy.f(zero) == Approx(static_cast<double>(s * s + 1.0L)).epsilon(1e-15));
    REQUIRE(toy.g_star() == 0.0);
}

TEST_CASE("toy: g vanishes on the curve x2 = sin(10 x1)", "[problems]") {
    const ProblemSpec toy = toy_problem();
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double t = rng.uniform(-kToyBoxHalfWidth, kToyBoxHalfWidth);
        const Vector x = vec({t, std::sin(10.0 * t)});
        REQUIRE(toy.g(x) == 0.0);
        REQUIRE(toy.grad_g(x).norm() == 0.0);
    }
}

TEST_CASE("toy: declared constants hold on the box", "[problems]") {
    const ProblemSpec toy = toy_problem();
    const SmoothnessProfile& s = toy.require_smoothness();
    REQUIRE(s.total_lipschitz() == s.upper_lipschitz() + s.lower_lipschitz());
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        const Vector x = rng.uniform_vector(2, -kToyBoxHalfWidth, kToyBoxHalfWidth);
        REQUIRE(toy.grad_f(x).norm() <= *s.upper_grad_bound() + 1e-12);
        const Matrix H = fd_hessian(toy, x, 1e-6);
        const double spectral = Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (H + H.transpose()))
                                    .eigenvalues().cwiseAbs().maxCoeff();
        REQUIRE(spectral <= s.lower_lipschitz());
    }
}

TEST_CASE("matrix factorization: values at U = 0", "[problems]") {
    for (int n : {3, 6}) {
        for (int r = 1; r <= n; r += 2) {
            const auto l1 = matrix_factorization_problem(n, r, 1.0, SparsityVariant::smooth_l1, 0.1, 5);
            const auto lg = matrix_factorization_problem(n, r, 1.0, SparsityVariant::log_smooth, 0.1, 5);
            const Vector zero = Vector::Zero(n * r);
            REQUIRE(l1.f(zero) == Approx(n * r));  // sqrt(0 + 1) per entry
            REQUIRE(lg.f(zero) == 0.0);
            REQUIRE(l1.grad_f(zero).norm() == 0.0);
            // g(0) = ||M||_F^2 with M from the same seed
            const Matrix M = matrix_factorization_target(n, r, 0.1, 5);
            REQUIRE(l1.g(zero) == Approx(M.squaredNorm()));
            REQUIRE_FALSE(l1.g_star().has_value());
        }
    }
}

TEST_CASE("matrix factorization: target is seeded and symmetric", "[problems]") {
    const Matrix a = matrix_factorization_target(8, 3, 0.1, 42);
    const Matrix b = matrix_factorization_target(8, 3, 0.1, 42);
    const Matrix c = matrix_factorization_target(8, 3, 0.1, 43);
    REQUIRE(a == b);
    REQUIRE(a != c);
    REQUIRE((a - a.transpose()).norm() == 0.0);
}

TEST_CASE("matrix factorization: flattening is row-major", "[problems]") {
    // g(V) = ||M - V V^T||^2 for a V with a single non-zero entry V_{1,0}
    const int n = 4, r = 2;
    const auto p = matrix_factorization_problem(n, r, 1.0, SparsityVariant::smooth_l1, 0.0, 9);
    const Matrix M = matrix_factorization_target(n, r, 0.0, 9);
    Vector x = Vector::Zero(n * r);
    x[1 * r + 0] = 2.0;
    Matrix V = Matrix::Zero(n, r);
    V(1, 0) = 2.0;
    REQUIRE(p.g(x) == Approx((M - V * V.transpose()).squaredNorm()));
}

TEST_CASE("matrix factorization: parameter checks", "[problems]") {
    REQUIRE_THROWS_AS(matrix_factorization_problem(3, 4, 1.0, SparsityVariant::smooth_l1, 0.1, 0), ConfigError);
    REQUIRE_THROWS_AS(matrix_factorization_problem(3, 0, 1.0, SparsityVariant::smooth_l1, 0.1, 0), ConfigError);
    REQUIRE_THROWS_AS(matrix_factorization_problem(3, 2, 0.0, SparsityVariant::smooth_l1, 0.1, 0), ConfigError);
    REQUIRE_THROWS_AS(sparsity_variant_from_string("l1"), ConfigError);
    REQUIRE(sparsity_variant_from_string("log-smooth") == SparsityVariant::log_smooth);
}

TEST_CASE("quadratic: stationary points and constants", "[problems]") {
    const ProblemSpec q = quadratic_sanity_problem(5);
    const Vector zero = Vector::Zero(5);
    REQUIRE(q.grad_g(zero).norm() == 0.0);
    REQUIRE(q.grad_f(zero) == Vector::Constant(5, -1.0));
    REQUIRE(q.g(zero) == 0.0);
    REQUIRE(*q.g_star() == 0.0);
    REQUIRE(q.require_smoothness().total_lipschitz() == 2.0);
    REQUIRE(*q.require_smoothness().upper_grad_bound() == Approx(std::sqrt(5.0) * 1.5));
    REQUIRE_THROWS_AS(quadratic_sanity_problem(0), ConfigError);
}

TEST_CASE("missing capabilities are reported by field", "[problems]") {
    const auto mf = matrix_factorization_problem(3, 2, 1.0, SparsityVariant::smooth_l1, 0.1, 0);
    try {
        mf.require_g_star();
        FAIL("expected CapabilityError");
    } catch (const CapabilityError& e) {
        REQUIRE(e.field() == "g_star");
    }
    const ProblemSpec bare = quadratic_sanity_problem(2).with_smoothness(std::nullopt);
    REQUIRE_THROWS_AS(bare.require_smoothness(), CapabilityError);

    ProblemSpec::Evaluators e;
    e.f = e.g = [](const Vector& x) { return x.squaredNorm(); };
    e.grad_f = e.grad_g = [](const Vector& x) -> Vector { return 2 * x; };
    const ProblemSpec no_hvp("nohvp", 2, e, 0.0, std::nullopt);
    REQUIRE_FALSE(no_hvp.has_hessian_vector());
    REQUIRE_THROWS_AS(no_hvp.hess_g_vec(Vector::Zero(2), Vector::Ones(2)), CapabilityError);
}

TEST_CASE("smoothness profile rejects non-positive constants", "[problems]") {
    REQUIRE_THROWS_AS(SmoothnessProfile(0.0, 1.0), ConfigError);
    REQUIRE_THROWS_AS(SmoothnessProfile(1.0, -1.0), ConfigError);
    REQUIRE_THROWS_AS(SmoothnessProfile(1.0, 1.0, 0.0), ConfigError);
    REQUIRE_THROWS_AS(SmoothnessProfile(1.0, std::nan("")), ConfigError);
}

TEST_CASE("gradients match central differences at seeded points", "[problems][property]") {
    const std::vector<ProblemSpec> problems = {
        toy_problem(),
        quadratic_sanity_problem(10),
        matrix_factorization_problem(6, 3, 1.0, SparsityVariant::smooth_l1, 0.1, 1),
        matrix_factorization_problem(6, 3, 0.5, SparsityVariant::log_smooth, 0.1, 2),
    };
    for (const auto& p : problems) {
        Rng rng(100);
        for (int i = 0; i < 100; ++i) {
            const Vector x = p.name() == "toy" ? rng.uniform_vector(2, -4, 4) : rng.normal_vector(p.dimension());
            INFO(p.name() << " point " << i);
            REQUIRE(finite_diff_check(p, x, 1e-6 * (1 + x.norm())) <= 1e-5);
        }
    }
}

TEST_CASE("Hessian-vector products are symmetric and match differences of grad g",
          "[problems][property]") {
    const std::vector<ProblemSpec> problems = {
        toy_problem(),
        quadratic_sanity_problem(4),
        matrix_factorization_problem(5, 2, 1.0, SparsityVariant::smooth_l1, 0.1, 7),
    };
    for (const auto& p : problems) {
        Rng rng(8);
        for (int i = 0; i < 50; ++i) {
            const Vector x = rng.normal_vector(p.dimension());
            const Vector u = rng.normal_vector(p.dimension());
            const Vector v = rng.normal_vector(p.dimension());
            const double uHv = u.dot(p.hess_g_vec(x, v)), vHu = v.dot(p.hess_g_vec(x, u));
            REQUIRE(uHv == Approx(vHu).epsilon(1e-10).margin(1e-10));
            const double h = 1e-6;
            const Vector fd = (p.grad_g(x + h * v) - p.grad_g(x - h * v)) / (2 * h);
            const Vector an = p.hess_g_vec(x, v);
            REQUIRE((fd - an).norm() <= 1e-5 * (1 + an.norm()));
        }
    }
}

TEST_CASE("problem copies evaluate identically", "[problems]") {
    const auto a = matrix_factorization_problem(4, 2, 1.0, SparsityVariant::log_smooth, 0.1, 3);
    const ProblemSpec b = a;
    Rng rng(1);
    const Vector x = rng.normal_vector(8);
    REQUIRE(a.g(x) == b.g(x));
    REQUIRE(a.grad_g(x) == b.grad_g(x));
}

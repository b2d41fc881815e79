#include <catch_amalgamated.hpp>

#include <cmath>

#include "dbgd/metrics.hpp"

using namespace dbgd;
using Catch::Approx;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

// min_w ||grad f + H w||^2 through a dense Hessian and a rank-revealing solve.
double dense_reform_residual(const ProblemSpec& p, const Vector& x) {
    const Eigen::Index n = p.dimension();
    Matrix H(n, n);
    for (Eigen::Index j = 0; j < n; ++j) H.col(j) = p.hess_g_vec(x, Vector::Unit(n, j));
    const Vector gf = p.grad_f(x);
    const Vector w = H.completeOrthogonalDecomposition().solve(-gf);
    return (gf + H * w).squaredNorm();
}

// g = (|x|^2 - 1)^2 has a spurious stationary point at 0 with g = 1 > g* = 0.
ProblemSpec ring_problem() {
    ProblemSpec::Evaluators e;
    e.f = [](const Vector& x) { return x.sum(); };
    e.grad_f = [](const Vector& x) -> Vector { return Vector::Ones(x.size()); };
    e.g = [](const Vector& x) {
        const double s = x.squaredNorm() - 1;
        return s * s;
    };
    e.grad_g = [](const Vector& x) -> Vector { return 4 * (x.squaredNorm() - 1) * x; };
    e.hess_g_vec = [](const Vector& x, const Vector& v) -> Vector {
        return 4 * (x.squaredNorm() - 1) * v + 8 * x * x.dot(v);
    };
    return ProblemSpec("ring", 2, e, 0.0, std::nullopt);
}

}  // namespace

TEST_CASE("gradient decomposition examples", "[metrics]") {
    const auto s = decompose_grad_f(vec({3, 4}), vec({1, 0}));
    REQUIRE(s.parallel == vec({3, 0}));
    REQUIRE(s.perp == vec({0, 4}));
    const auto deg = decompose_grad_f(vec({3, 4}), vec({0, 0}));
    REQUIRE(deg.parallel == vec({0, 0}));
    REQUIRE(deg.perp == vec({3, 4}));

    REQUIRE(*cosine_between(vec({1, 0}), vec({-2, 0})) == -1.0);
    REQUIRE(*cosine_between(vec({1, 1}), vec({1, 0})) == Approx(std::sqrt(0.5)));
    REQUIRE_FALSE(cosine_between(vec({1, 1}), vec({0, 0})).has_value());
    REQUIRE_FALSE(cosine_between(vec({0, 0}), vec({1, 0})).has_value());
}

TEST_CASE("decomposition properties", "[metrics][property]") {
    Rng rng(13);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Index n = 2 + i % 10;
        const Vector gf = rng.normal_vector(n), gg = rng.normal_vector(n);
        const auto s = decompose_grad_f(gf, gg);
        // Pythagoras
        REQUIRE(s.parallel.squaredNorm() + s.perp.squaredNorm() ==
                Approx(gf.squaredNorm()).epsilon(1e-12));
        REQUIRE(std::abs(s.perp.dot(gg)) <= 1e-12 * gf.norm() * gg.norm() + 1e-15);
        // scaling grad g leaves the split unchanged, scaling grad f scales it
        const double a = rng.uniform(0.1, 10), b = rng.uniform(0.1, 10);
        const auto t = decompose_grad_f(a * gf, b * gg);
        REQUIRE((t.perp - a * s.perp).norm() <= 1e-12 * a * gf.norm());
        REQUIRE(*cosine_between(a * gf, b * gg) == Approx(*cosine_between(gf, gg)).margin(1e-13));
        REQUIRE(*cosine_between(gf, -gg) == Approx(-*cosine_between(gf, gg)).margin(1e-13));
    }
}

TEST_CASE("report-optimal multiplier", "[metrics]") {
    REQUIRE(report_optimal_lambda(vec({-3, 1}), vec({1, 0})) == 3.0);
    REQUIRE(report_optimal_lambda(vec({3, 1}), vec({1, 0})) == 0.0);
    REQUIRE(report_optimal_lambda(vec({3, 1}), vec({0, 0})) == 0.0);
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const Vector gf = rng.normal_vector(4), gg = rng.normal_vector(4);
        const double l = report_optimal_lambda(gf, gg);
        const double best = (gf + l * gg).squaredNorm();
        for (double t : {0.0, l * 0.9, l * 1.1 + 0.01, l + 1})
            REQUIRE(best <= (gf + t * gg).squaredNorm() + 1e-12);
    }
}

TEST_CASE("stationarity reports", "[metrics]") {
    const ProblemSpec q = quadratic_sanity_problem(3);
    const auto at0 = stationarity_report(q, Vector::Zero(3), 5.0);
    REQUIRE(at0.grad_g_sq == 0.0);
    REQUIRE(at0.d_sq == 3.0);
    REQUIRE(*at0.primal_gap == 0.0);
    REQUIRE_FALSE(at0.cos_theta.has_value());
    REQUIRE(at0.is_stationary(3.0, 0.0));
    REQUIRE_FALSE(at0.is_stationary(2.9, 0.0));

    // at x = t 1 with 0 < t < 1 the gradients are opposed; optimal lambda = (1-t)/t
    const auto opt = optimal_stationarity_report(q, Vector::Constant(3, 0.25));
    REQUIRE(opt.lambda == Approx(3.0));
    REQUIRE(opt.d_sq == Approx(0.0).margin(1e-28));
    REQUIRE(*opt.cos_theta == Approx(-1.0));
    REQUIRE(optimal_stationarity_report(q, Vector::Constant(3, -0.5)).lambda == 0.0);  // aligned

    REQUIRE_THROWS_AS(stationarity_report(q, Vector::Zero(3), -1.0), ConfigError);
    REQUIRE_THROWS_AS(stationarity_report(q, Vector::Zero(2), 1.0), ConfigError);
    const auto mf = matrix_factorization_problem(3, 2, 1.0, SparsityVariant::smooth_l1, 0.1, 0);
    REQUIRE_FALSE(stationarity_report(mf, Vector::Ones(6), 0.0).primal_gap.has_value());
}

TEST_CASE("KKT conditions: case analysis", "[metrics]") {
    // feasible, small residual
    auto c = evaluate_kkt_conditions(1e-5, 1e-2, 1e-4, 0.0, 1e-3, 1e-3);
    REQUIRE((c.scaled_ok && c.unscaled_ok && !c.infeasible_stationary_ok));
    // residual only met after scaling by 1 + lambda
    c = evaluate_kkt_conditions(0.0, 0.0, 1.0, 1e4, 1e-3, 1e-3);
    REQUIRE((c.scaled_ok && !c.unscaled_ok));
    // infeasible stationary point
    c = evaluate_kkt_conditions(1.0, 1e-6, 5.0, 0.0, 1e-3, 1e-3);
    REQUIRE((!c.scaled_ok && !c.unscaled_ok && c.infeasible_stationary_ok));
    // a gap in [0.99 eps_p, eps_p] meets both branches
    c = evaluate_kkt_conditions(0.995e-3, 0.0, 0.0, 0.0, 1e-3, 1e-3);
    REQUIRE((c.scaled_ok && c.unscaled_ok && c.infeasible_stationary_ok));
    c = evaluate_kkt_conditions(1.5e-3, 1.0, 0.0, 0.0, 1e-3, 1e-3);
    REQUIRE((!c.scaled_ok && !c.unscaled_ok && !c.infeasible_stationary_ok));
}

TEST_CASE("KKT report on the quadratic Case II point", "[metrics]") {
    const ProblemSpec q = quadratic_sanity_problem(3);
    const KKTReport r = kkt_report(q, Vector::Zero(3), 1e4, 1e-3, 1e-3, 1e-12);
    REQUIRE(r.primal_gap == 0.0);
    REQUIRE(r.scaled_ok);
    REQUIRE_FALSE(r.unscaled_ok);
    // H = I: w = -grad f = 1, residual 0
    REQUIRE(r.grad_reform_eps_p == Approx(0.0).margin(1e-24));
    REQUIRE(r.grad_reform_eps_d == 0.0);
    REQUIRE(r.w_norm == Approx(std::sqrt(3.0)));
    REQUIRE(r.grad_reform_converged);
}

TEST_CASE("KKT report flags an infeasible stationary point", "[metrics]") {
    const KKTReport r = kkt_report(ring_problem(), Vector::Zero(2), 0.0, 1e-3, 1e-3, 1e-12);
    REQUIRE(r.primal_gap == 1.0);
    REQUIRE(r.infeasible_stationary_ok);
    REQUIRE_FALSE(r.scaled_ok);
}

TEST_CASE("KKT report capability errors", "[metrics]") {
    const auto mf = matrix_factorization_problem(3, 2, 1.0, SparsityVariant::smooth_l1, 0.1, 0);
    REQUIRE_THROWS_AS(kkt_report(mf, Vector::Ones(6), 0.0, 1e-3, 1e-3, 1e-10), CapabilityError);
    ProblemSpec::Evaluators e;
    e.f = e.g = [](const Vector& x) { return x.squaredNorm(); };
    e.grad_f = e.grad_g = [](const Vector& x) -> Vector { return 2 * x; };
    const ProblemSpec no_hvp("nohvp", 2, e, 0.0, std::nullopt);
    try {
        kkt_report(no_hvp, Vector::Ones(2), 0.0, 1e-3, 1e-3, 1e-10);
        FAIL("expected CapabilityError");
    } catch (const CapabilityError& err) {
        REQUIRE(err.field() == "hessian_vector");
    }
    REQUIRE_THROWS_AS(grad_reform_residual(quadratic_sanity_problem(2), Vector::Zero(2), 0.0), ConfigError);
}

TEST_CASE("gradient reformulation: singular Hessian on the toy curve", "[metrics]") {
    // On g = 0 the toy Hessian is [[200c^2, -20c], [-20c, 2]], singular with
    // null vector (1, 10c). The residual is the part of grad f along it.
    const ProblemSpec toy = toy_problem();
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const double t = rng.uniform(-1, 1);
        Vector x(2);
        x << t, std::sin(10 * t);
        const double c = std::cos(10 * t);
        Vector null(2);
        null << 1, 10 * c;
        null.normalize();
        const double expected = std::pow(toy.grad_f(x).dot(null), 2);
        const auto r = grad_reform_residual(toy, x, 1e-12);
        REQUIRE(r.eps_p == Approx(expected).epsilon(1e-6).margin(1e-9));
        REQUIRE(r.eps_d == 0.0);
    }
}

TEST_CASE("gradient reformulation: CGLS matches a dense least-squares solve", "[metrics][property]") {
    for (auto [n, r] : {std::pair{3, 2}, std::pair{5, 4}, std::pair{10, 10}}) {
        for (auto variant : {SparsityVariant::smooth_l1, SparsityVariant::log_smooth}) {
            const auto p = matrix_factorization_problem(n, r, 1.0, variant, 0.1, 17);
            Rng rng(31);
            for (int i = 0; i < 5; ++i) {
                const Vector x = rng.normal_vector(n * r);
                const auto ls = grad_reform_residual(p, x, 1e-10, 20000);
                const double dense = dense_reform_residual(p, x);
                INFO("n=" << n << " r=" << r << " point " << i);
                REQUIRE(std::abs(ls.eps_p - dense) <= 1e-6 * (1 + p.grad_f(x).squaredNorm()));
            }
        }
    }
}

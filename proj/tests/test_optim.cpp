#include <cmath>

#include <doctest.h>

#include "dhn/optim.hpp"

using namespace dhn;

namespace {

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
}

} // namespace

TEST_SUITE("optim") {

TEST_CASE("bound-constrained quadratic hits the active bound") {
    auto f = [](const Eigen::VectorXd& x) {
        return (x(0) - 3.0) * (x(0) - 3.0) + (x(1) + 1.0) * (x(1) + 1.0);
    };
    auto g = [](const Eigen::VectorXd& x) {
        return vec2(2.0 * (x(0) - 3.0), 2.0 * (x(1) + 1.0));
    };
    const LbfgsResult r =
        projected_lbfgs(f, g, vec2(0.0, 0.0), vec2(1.0, 5.0), vec2(0.5, 2.0));
    CHECK(r.converged);
    CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.x(1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(projected_gradient_norm(r.x, r.gradient, vec2(0.0, 0.0), vec2(1.0, 5.0)) <= 1e-8);
}

TEST_CASE("rosenbrock in a box") {
    auto f = [](const Eigen::VectorXd& x) {
        const double a = 1.0 - x(0);
        const double b = x(1) - x(0) * x(0);
        return a * a + 100.0 * b * b;
    };
    auto g = [](const Eigen::VectorXd& x) {
        const double b = x(1) - x(0) * x(0);
        return vec2(-2.0 * (1.0 - x(0)) - 400.0 * x(0) * b, 200.0 * b);
    };
    LbfgsOptions opts;
    opts.max_iterations = 500;
    opts.tolerance = 1e-10;
    const LbfgsResult r =
        projected_lbfgs(f, g, vec2(-2.0, -2.0), vec2(2.0, 2.0), vec2(-1.2, 1.0), opts);
    CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("larger convex quadratic matches the linear-algebra solution") {
    const int n = 20;
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(n, n);
    Eigen::MatrixXd a = m.transpose() * m + 0.5 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(n, -1.0, 1.0);
    auto f = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(a * x) - b.dot(x); };
    auto g = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(a * x - b); };
    const Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -100.0);
    const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 100.0);
    LbfgsOptions opts;
    opts.max_iterations = 800;
    opts.tolerance = 1e-10;
    const LbfgsResult r = projected_lbfgs(f, g, lo, hi, Eigen::VectorXd::Zero(n), opts);
    const Eigen::VectorXd exact = a.ldlt().solve(b);
    CHECK((r.x - exact).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("projected gradient norm is zero only at stationary points") {
    const Eigen::VectorXd lo = vec2(0.0, 0.0);
    const Eigen::VectorXd hi = vec2(1.0, 1.0);
    // interior point with nonzero gradient
    CHECK(projected_gradient_norm(vec2(0.5, 0.5), vec2(1.0, 0.0), lo, hi) > 0.0);
    // at a bound with the gradient pushing outward: stationary
    CHECK(projected_gradient_norm(vec2(1.0, 0.5), vec2(-1.0, 0.0), lo, hi) == 0.0);
    // at a bound with the gradient pulling inward: not stationary
    CHECK(projected_gradient_norm(vec2(1.0, 0.5), vec2(1.0, 0.0), lo, hi) > 0.0);
}

} // TEST_SUITE

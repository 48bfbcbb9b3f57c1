#include "doctest.h"

#include <cmath>

#include "asgd/error.hpp"
#include "asgd/oracle.hpp"

using namespace asgd;
using oracle::Oracle;

namespace {

Vector finite_difference(const Oracle& o, const Vector& x) {
    Vector g(x.dim());
    for (std::size_t k = 0; k < x.dim(); ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
        Vector hi = x, lo = x;
        hi[k] += h;
        lo[k] -= h;
        g[k] = (o.value(hi) - o.value(lo)) / (2 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("gradients match central finite differences") {
    Rng rng(1);
    std::uniform_real_distribution<double> u(-1.8, 1.8);
    const Oracle quad = Oracle::quadratic(1.0, 4.0, Vector{0.5, -1.0, 2.0}, 0.0);
    const Oracle well = Oracle::double_well(3, 2.0, 0.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vector x{u(rng), u(rng), u(rng)};
        for (const Oracle* o : {&quad, &well}) {
            const Vector g = o->grad(x);
            const Vector fd = finite_difference(*o, x);
            for (std::size_t k = 0; k < 3; ++k) CHECK(g[k] == doctest::Approx(fd[k]).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("quadratic curvatures span [mu, L]") {
    const Oracle o = Oracle::quadratic(1.0, 4.0, Vector(4, 0.0), 1.0);
    const auto& c = o.as_quadratic()->curvature;
    CHECK(c[0] == 1.0);
    CHECK(c[3] == 4.0);
    CHECK(c[1] == doctest::Approx(2.0));
    const auto k = o.constants();
    CHECK(k.L == 4.0);
    REQUIRE(k.mu);
    CHECK(*k.mu == 1.0);
    CHECK(o.grad(*o.minimizer()) == Vector(4, 0.0));
    CHECK(Oracle::quadratic(2.0, 5.0, Vector{1.0}, 0.0).as_quadratic()->curvature[0] == 2.0);
}

TEST_CASE("double-well smoothness constant bounds the Hessian on the box") {
    const double r = 2.0;
    const Oracle o = Oracle::double_well(1, r, 0.0);
    double worst = 0.0;
    for (int i = 0; i <= 4000; ++i) {
        const double x = -r + 2 * r * i / 4000.0;
        worst = std::max(worst, std::abs(12 * x * x - 4));
    }
    CHECK(o.constants().L == doctest::Approx(worst));
    CHECK_FALSE(o.constants().mu.has_value());
    Vector x{5.0};
    o.project(x);
    CHECK(x == Vector{2.0});
}

TEST_CASE("zero noise returns the exact gradient") {
    Rng rng(9);
    const Oracle o = Oracle::double_well(2, 2.0, 0.0);
    const Vector x{0.3, -1.2};
    CHECK(o.stochastic_grad(x, rng) == o.grad(x));
}

TEST_CASE("gradient noise is unbiased with E|xi|^2 = sigma^2") {
    Rng rng(21);
    const double sigma = 1.5;
    const std::size_t d = 4, draws = 200000;
    const Oracle o = Oracle::quadratic(1.0, 3.0, Vector(d, 0.0), sigma);
    const Vector x{0.2, -0.1, 1.0, 0.5};
    const Vector g = o.grad(x);
    Vector mean_err(d);
    double sq = 0.0, sq2 = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const Vector e = o.stochastic_grad(x, rng) - g;
        mean_err += e;
        const double n2 = norm_sq(e);
        sq += n2;
        sq2 += n2 * n2;
    }
    const double m = sq / draws;
    const double se = std::sqrt((sq2 / draws - m * m) / draws);
    CHECK(std::abs(m - sigma * sigma) < 4 * se);
    for (std::size_t k = 0; k < d; ++k)
        CHECK(std::abs(mean_err[k] / draws) < 4 * sigma / std::sqrt(double(d) * draws));
}

TEST_CASE("sequential SGD without noise approaches the minimizer") {
    Rng rng(2);
    const Oracle o = Oracle::quadratic(1.0, 4.0, Vector{1.0, -2.0}, 0.0);
    const Vector x = oracle::sequential_sgd(o, 200, sgd::Constant{0.2}, 1, Vector{5.0, 5.0}, rng);
    CHECK(distance_sq(x, *o.minimizer()) < 1e-12);
}

TEST_CASE("oracle construction errors") {
    CHECK_THROWS_AS(Oracle::quadratic(2.0, 1.0, Vector{0.0}, 0.0), UsageError);
    CHECK_THROWS_AS(Oracle::quadratic(0.0, 1.0, Vector{0.0}, 0.0), UsageError);
    CHECK_THROWS_AS(Oracle::double_well(2, 0.5, 0.0), UsageError);
    CHECK_THROWS_AS(Oracle::double_well(0, 2.0, 0.0), UsageError);
    CHECK_THROWS_AS(Oracle::double_well(2, 2.0, -1.0), UsageError);
    const Oracle o = Oracle::double_well(2, 2.0, 0.0);
    CHECK_THROWS_AS(o.grad(Vector{1.0}), UsageError);
}

#include "asgd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "asgd/error.hpp"

namespace asgd::oracle {

Oracle::Oracle(Kind kind, std::size_t dim, double sigma) : kind_(std::move(kind)), dim_(dim), sigma_(sigma) {
    if (dim == 0) throw UsageError("oracle: dimension must be positive");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw UsageError("oracle: sigma must be finite and >= 0");
}

Oracle Oracle::quadratic(double mu, double L, Vector x_star, double sigma) {
    if (!(mu > 0.0 && mu <= L)) throw UsageError("quadratic oracle: requires 0 < mu <= L");
    const std::size_t d = x_star.dim();
    if (d == 0) throw UsageError("quadratic oracle: x_star must be nonempty");
    Vector curvature(d, mu);
    for (std::size_t k = 0; d > 1 && k < d; ++k)
        curvature[k] = mu + (L - mu) * static_cast<double>(k) / static_cast<double>(d - 1);
    Quadratic q{mu, L, std::move(x_star), std::move(curvature)};
    return Oracle(std::move(q), d, sigma);
}

Oracle Oracle::quadratic(Vector curvature, Vector x_star, double sigma) {
    if (curvature.dim() != x_star.dim() || curvature.dim() == 0)
        throw UsageError("quadratic oracle: curvature and x_star dimensions differ");
    const auto [lo, hi] = std::minmax_element(curvature.coords().begin(), curvature.coords().end());
    if (!(*lo > 0.0)) throw UsageError("quadratic oracle: curvatures must be positive");
    const std::size_t d = x_star.dim();
    Quadratic q{*lo, *hi, std::move(x_star), std::move(curvature)};
    return Oracle(std::move(q), d, sigma);
}

Oracle Oracle::double_well(std::size_t dim, double radius, double sigma) {
    if (!(radius >= 1.0)) throw UsageError("double-well oracle: radius must be >= 1 so both minima are inside");
    return Oracle(DoubleWell{radius}, dim, sigma);
}

Oracle Oracle::with_sigma(double sigma) const {
    return Oracle(kind_, dim_, sigma);
}

void Oracle::require_dim(const Vector& x, const char* what) const {
    if (x.dim() != dim_)
        throw UsageError(std::string(what) + ": expected dimension " + std::to_string(dim_) + ", got " +
                         std::to_string(x.dim()));
}

double Oracle::value(const Vector& x) const {
    require_dim(x, "oracle value");
    double s = 0.0;
    if (const auto* q = as_quadratic()) {
        for (std::size_t k = 0; k < dim_; ++k) {
            const double e = x[k] - q->x_star[k];
            s += 0.5 * q->curvature[k] * e * e;
        }
    } else {
        for (std::size_t k = 0; k < dim_; ++k) {
            const double e = x[k] * x[k] - 1.0;
            s += e * e;
        }
    }
    return s;
}

Vector Oracle::grad(const Vector& x) const {
    require_dim(x, "oracle grad");
    Vector g(dim_);
    if (const auto* q = as_quadratic()) {
        for (std::size_t k = 0; k < dim_; ++k) g[k] = q->curvature[k] * (x[k] - q->x_star[k]);
    } else {
        for (std::size_t k = 0; k < dim_; ++k) g[k] = 4.0 * x[k] * (x[k] * x[k] - 1.0);
    }
    return g;
}

Vector Oracle::stochastic_grad(const Vector& x, Rng& rng) const {
    Vector g = grad(x);
    if (sigma_ == 0.0) return g;
    std::normal_distribution<double> noise(0.0, sigma_ / std::sqrt(static_cast<double>(dim_)));
    for (std::size_t k = 0; k < dim_; ++k) g[k] += noise(rng);
    return g;
}

Constants Oracle::constants() const noexcept {
    if (const auto* q = as_quadratic()) return {q->L, q->mu, 0.0};
    // |Q''(x)| = |12 x^2 - 4| is maximal at the box edge for radius >= 1.
    const double r = as_double_well()->radius;
    return {12.0 * r * r - 4.0, std::nullopt, 0.0};
}

void Oracle::project(Vector& x) const noexcept {
    if (const auto* w = as_double_well())
        for (double& c : x.coords()) c = std::clamp(c, -w->radius, w->radius);
}

std::optional<Vector> Oracle::minimizer() const {
    if (const auto* q = as_quadratic()) return q->x_star;
    return std::nullopt;
}

Vector sequential_sgd(const Oracle& o, std::size_t T, const sgd::LrSchedule& schedule, std::size_t batch,
                      const Vector& x1, Rng& rng) {
    if (batch == 0) throw UsageError("sequential_sgd: batch must be positive");
    if (x1.dim() != o.dim()) throw UsageError("sequential_sgd: x1 has wrong dimension");
    Vector x = x1;
    for (std::size_t t = 1; t <= T; ++t) {
        std::vector<Vector> samples;
        samples.reserve(batch);
        for (std::size_t b = 0; b < batch; ++b) samples.push_back(o.stochastic_grad(x, rng));
        const Vector g = mean(samples);
        const double eta = sgd::learning_rate(schedule, t);
        for (std::size_t k = 0; k < x.dim(); ++k) x[k] -= eta * g[k];
        o.project(x);
    }
    return x;
}

}  // namespace asgd::oracle

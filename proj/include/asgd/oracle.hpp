#pragma once

// Cost functions with known constants and an additive Gaussian gradient
// oracle. The data distribution is abstracted into the noise: a sample is
// grad Q(x) + xi with xi ~ N(0, sigma^2/d I), so E||xi||^2 = sigma^2.

#include <cstddef>
#include <optional>
#include <variant>

#include "asgd/rng.hpp"
#include "asgd/schedule.hpp"
#include "asgd/vecmath.hpp"

namespace asgd::oracle {

/// Q(x) = 1/2 sum_k a_k (x_k - x*_k)^2 with mu <= a_k <= L.
struct Quadratic {
    double mu = 1.0;
    double L = 1.0;
    Vector x_star;
    Vector curvature;  // diagonal a_k
};

/// Q(x) = sum_k (x_k^2 - 1)^2, iterates clamped to ||x||_inf <= radius.
struct DoubleWell {
    double radius = 2.0;
};

struct Constants {
    double L = 0.0;
    std::optional<double> mu;
    double q_star = 0.0;
};

class Oracle {
public:
    /// Curvatures spread evenly over [mu, L] (all equal to mu when d == 1).
    static Oracle quadratic(double mu, double L, Vector x_star, double sigma);
    static Oracle quadratic(Vector curvature, Vector x_star, double sigma);
    static Oracle double_well(std::size_t dim, double radius, double sigma);

    std::size_t dim() const noexcept { return dim_; }
    double sigma() const noexcept { return sigma_; }
    bool is_quadratic() const noexcept { return std::holds_alternative<Quadratic>(kind_); }
    const Quadratic* as_quadratic() const noexcept { return std::get_if<Quadratic>(&kind_); }
    const DoubleWell* as_double_well() const noexcept { return std::get_if<DoubleWell>(&kind_); }

    Oracle with_sigma(double sigma) const;

    double value(const Vector& x) const;
    Vector grad(const Vector& x) const;
    /// grad(x) plus isotropic Gaussian noise drawn from `rng`.
    Vector stochastic_grad(const Vector& x, Rng& rng) const;
    Constants constants() const noexcept;

    /// Projection applied after every local step: clamps DoubleWell iterates
    /// to the box where its smoothness constant holds; identity otherwise.
    void project(Vector& x) const noexcept;

    /// Unique minimizer for strongly convex kinds.
    std::optional<Vector> minimizer() const;

private:
    using Kind = std::variant<Quadratic, DoubleWell>;
    Oracle(Kind kind, std::size_t dim, double sigma);
    void require_dim(const Vector& x, const char* what) const;

    Kind kind_;
    std::size_t dim_;
    double sigma_;
};

/// Same as Oracle::grad; free-function form of the module operation.
inline Vector grad(const Oracle& o, const Vector& x) { return o.grad(x); }
inline Vector stochastic_grad(const Oracle& o, const Vector& x, Rng& rng) { return o.stochastic_grad(x, rng); }
inline Constants smoothness_constants(const Oracle& o) noexcept { return o.constants(); }

/// x_{t+1} = project(x_t - eta_t * mean of `batch` stochastic gradients); returns x_{T+1}.
Vector sequential_sgd(const Oracle& o, std::size_t T, const sgd::LrSchedule& schedule, std::size_t batch,
                      const Vector& x1, Rng& rng);

}  // namespace asgd::oracle

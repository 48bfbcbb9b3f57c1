#pragma once

#include <cstddef>
#include <variant>

namespace asgd::sgd {

/// eta_t = beta / (gamma + t)
struct Decreasing {
    double beta = 1.0;
    double gamma = 1.0;
};

struct Constant {
    double eta = 0.1;
};

using LrSchedule = std::variant<Decreasing, Constant>;

/// eta_t for t >= 1. Throws UsageError for t == 0.
double learning_rate(const LrSchedule& schedule, std::size_t t);

/// Largest eta_t over t >= 1 (eta_1 for a decreasing schedule).
double max_learning_rate(const LrSchedule& schedule) noexcept;

}  // namespace asgd::sgd

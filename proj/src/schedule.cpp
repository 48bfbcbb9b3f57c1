#include "asgd/schedule.hpp"

#include "asgd/error.hpp"

namespace asgd::sgd {

double learning_rate(const LrSchedule& schedule, std::size_t t) {
    if (t == 0) throw UsageError("learning_rate: iterations are numbered from 1");
    if (const auto* dec = std::get_if<Decreasing>(&schedule)) return dec->beta / (dec->gamma + static_cast<double>(t));
    return std::get<Constant>(schedule).eta;
}

double max_learning_rate(const LrSchedule& schedule) noexcept {
    if (const auto* dec = std::get_if<Decreasing>(&schedule)) return dec->beta / (dec->gamma + 1.0);
    return std::get<Constant>(schedule).eta;
}

}  // namespace asgd::sgd

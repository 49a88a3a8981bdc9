#include "bayescal/optim.hpp"

#include <cmath>

#include "bayescal/common.hpp"

namespace bayescal {

LrSchedule parse_schedule(const std::string& s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "step") return LrSchedule::step;
    if (s == "linear") return LrSchedule::linear;
    throw ValidationError("unknown learning-rate schedule '" + s + "'");
}

std::string to_string(LrSchedule s) {
    switch (s) {
        case LrSchedule::constant: return "constant";
        case LrSchedule::step: return "step";
        case LrSchedule::linear: return "linear";
    }
    return "constant";
}

void OptimConfig::validate() const {
    require(batch_size >= 1, "batch_size must be >= 1");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
}

double scheduled_rate(double base, LrSchedule schedule, std::size_t epoch, std::size_t epochs) {
    if (epochs == 0) return base;
    const double progress = static_cast<double>(epoch) / static_cast<double>(epochs);
    switch (schedule) {
        case LrSchedule::constant: return base;
        case LrSchedule::step: return progress < 0.5 ? base : (progress < 0.75 ? 0.1 * base : 0.01 * base);
        case LrSchedule::linear: return base * (1.0 - progress);
    }
    return base;
}

Adam::Adam(std::size_t size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
    beta1_pow_ *= beta1_;
    beta2_pow_ *= beta2_;
    const double c1 = 1.0 / (1.0 - beta1_pow_);
    const double c2 = 1.0 / (1.0 - beta2_pow_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        params[i] -= lr * (m_[i] * c1) / (std::sqrt(v_[i] * c2) + eps_);
    }
}

}  // namespace bayescal

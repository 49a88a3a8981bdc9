#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bayescal {

/// constant: base rate throughout. step: x0.1 at 50% and again at 75% of the
/// epochs. linear: decays from the base rate toward zero at the last epoch.
enum class LrSchedule { constant, step, linear };

LrSchedule parse_schedule(const std::string& s);
std::string to_string(LrSchedule s);

struct OptimConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 100;
    double learning_rate = 1e-2;
    LrSchedule schedule = LrSchedule::constant;
    std::uint64_t seed = 0;

    void validate() const;
};

double scheduled_rate(double base, LrSchedule schedule, std::size_t epoch, std::size_t epochs);

/// Adam minimizer over a flat parameter vector.
class Adam {
public:
    explicit Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// params -= lr * mhat / (sqrt(vhat) + eps)
    void step(std::span<double> params, std::span<const double> grad, double lr);

private:
    double beta1_, beta2_, eps_;
    double beta1_pow_ = 1.0, beta2_pow_ = 1.0;
    std::vector<double> m_, v_;
};

}  // namespace bayescal

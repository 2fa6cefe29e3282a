#include "tuckerpid/pid_controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tuckerpid/errors.hpp"

namespace tuckerpid {

void PidGains::validate() const {
  for (double g : {kp, ki, kd}) {
    if (!std::isfinite(g) || g < 0.0) throw ConfigError("pid_controller: gains must be finite and non-negative");
  }
}

double PidState::adjust(const PidGains& gains, std::size_t slot, double e) {
  if (slot >= sum_error_.size()) {
    throw DataError("pid_controller: slot " + std::to_string(slot) + " out of range for " +
                    std::to_string(sum_error_.size()) + " training entries");
  }
  if (!std::isfinite(e)) {
    throw DivergenceError("pid_controller: non-finite instance error at slot " + std::to_string(slot));
  }
  sum_error_[slot] += e;
  const double adjusted = gains.kp * e + gains.ki * sum_error_[slot] + gains.kd * (e - prev_error_[slot]);
  prev_error_[slot] = e;
  return adjusted;
}

void PidState::reset() {
  std::fill(sum_error_.begin(), sum_error_.end(), 0.0);
  std::fill(prev_error_.begin(), prev_error_.end(), 0.0);
}

}  // namespace tuckerpid

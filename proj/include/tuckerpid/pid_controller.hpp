#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace tuckerpid {

/// Proportional, integral and derivative coefficients. (1, 0, 0) reduces the
/// adjusted error to the raw instance error.
struct PidGains {
  double kp = 1.0;
  double ki = 0.1;
  double kd = 0.1;

  /// Throws ConfigError unless every gain is finite and non-negative.
  void validate() const;
};

/// Per-training-entry error memory for the discrete PID adjustment
///
///   e~(f) = kp e(f) + ki sum_{r<=f} e(r) + kd (e(f) - e(f-1)),   e(0) = 0.
///
/// Slots are indexed by the stable position of an entry within the training
/// part of the split. Not thread-safe; each trainer owns its state.
class PidState {
 public:
  explicit PidState(std::size_t slots) : sum_error_(slots, 0.0), prev_error_(slots, 0.0) {}

  /// Folds `e` into the slot's history and returns the adjusted error. The
  /// integral already includes `e`. Throws DataError for a bad slot.
  double adjust(const PidGains& gains, std::size_t slot, double e);

  /// Zeroes all history.
  void reset();

  std::size_t size() const noexcept { return sum_error_.size(); }
  std::span<const double> sum_error() const noexcept { return sum_error_; }
  std::span<const double> prev_error() const noexcept { return prev_error_; }

 private:
  std::vector<double> sum_error_;
  std::vector<double> prev_error_;
};

/// Symmetric clamp of an adjusted error to [-limit, limit]; identity when no
/// limit is set.
inline double clamp_error(double e, std::optional<double> limit) noexcept {
  if (!limit) return e;
  if (e > *limit) return *limit;
  if (e < -*limit) return -*limit;
  return e;
}

}  // namespace tuckerpid

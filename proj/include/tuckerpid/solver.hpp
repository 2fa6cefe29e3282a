#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tuckerpid/pid_controller.hpp"
#include "tuckerpid/sparse_tensor.hpp"
#include "tuckerpid/tucker_model.hpp"

namespace tuckerpid {

/// How the per-instance error is turned into the update signal.
enum class UpdateRule {
  pid,        ///< PID-adjusted error from a per-entry PidState
  plain_sgd,  ///< raw instance error, no controller state at all
};

struct Hyperparams {
  double eta = 0.01;
  RegWeights reg;
  PidGains gains;
  Ranks ranks;
  std::size_t max_epochs = 1000;
  double tol = 1e-5;
  double init_scale = 0.04;
  std::uint64_t seed = 0;
  bool shuffle = true;
  UpdateRule rule = UpdateRule::pid;
  /// Optional symmetric bound on the adjusted error (integral windup guard).
  std::optional<double> error_clamp;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;
};

enum class StopReason { none, tolerance, epoch_cap };

const char* to_string(StopReason reason) noexcept;

/// Validation-based stopping rule: stop once two consecutive epochs'
/// validation RMSE differ by less than `tol`, or when `max_epochs` epochs have
/// run. The first epoch has no predecessor and can only stop on the cap.
class ConvergenceMonitor {
 public:
  ConvergenceMonitor(double tol, std::size_t max_epochs) : tol_(tol), max_epochs_(max_epochs) {}

  /// Records the validation RMSE of the epoch just finished.
  StopReason observe(double val_rmse);

  std::size_t epochs() const noexcept { return epochs_; }

 private:
  double tol_;
  std::size_t max_epochs_;
  std::size_t epochs_ = 0;
  double last_ = 0.0;
  bool has_last_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_rmse = 0.0;
  double elapsed_s = 0.0;  // cumulative since training started
};

struct TrainReport {
  std::size_t epochs_run = 0;
  bool converged = false;  // stopped on the tolerance rule
  StopReason stop_reason = StopReason::none;
  std::vector<EpochRecord> records;
  double final_val_rmse = 0.0;
  std::size_t best_epoch = 0;  // 1-based epoch with the lowest validation RMSE
  double best_val_rmse = 0.0;
  double train_seconds = 0.0;
};

struct TrainResult {
  TuckerFactors factors;
  TrainReport report;
};

/// One synchronous update of every parameter touched by `idx`: the gradient
/// is taken at the current values with `adjusted_err` as the error signal,
/// then theta <- theta - eta * grad is applied to rows i/j/k of U/D/T, all of
/// G, and biases a_i, b_j, c_k. Throws DivergenceError if any updated value is
/// non-finite (the parameters are left in the non-finite state).
void sgd_step(TuckerFactors& f, const EntryIndex& idx, double adjusted_err, const Hyperparams& hyper,
              InstanceGradient& scratch);
void sgd_step(TuckerFactors& f, const EntryIndex& idx, double adjusted_err, const Hyperparams& hyper);

/// Starting point used by train(): mu is the mean of the training values and
/// the factors come from init_factors with hyper.seed.
TuckerFactors initialize_model(const SparseTensor& tensor, const DataSplit& split, const Hyperparams& hyper);

/// Runs epochs over split.train until the ConvergenceMonitor fires. Returns
/// the final-epoch factors (not the best-validation ones).
TrainResult train(const SparseTensor& tensor, const DataSplit& split, const Hyperparams& hyper);

/// predict() over a batch of cells.
std::vector<double> impute(const TuckerFactors& f, std::span<const EntryIndex> indices);

}  // namespace tuckerpid

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tuckerpid/solver.hpp"
#include "tuckerpid/sparse_tensor.hpp"
#include "tuckerpid/tucker_model.hpp"

namespace tuckerpid {

/// sqrt(sum (y - y_hat)^2 / |entries|). Throws DataError on an empty set.
double rmse(const TuckerFactors& f, std::span<const Entry> entries);
double rmse(const TuckerFactors& f, const SparseTensor& tensor, std::span<const std::size_t> positions);

struct ExperimentConfig {
  Hyperparams hyper;
  SplitRatios ratios;
  std::size_t repeats = 20;
  std::uint64_t base_seed = 0;
  /// Worker threads used for independent repeats.
  std::size_t jobs = 1;

  void validate() const;
};

struct RepeatResult {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double test_rmse = 0.0;
  std::size_t epochs = 0;
  bool converged = false;
  double seconds = 0.0;  // training wall time only
  std::optional<std::string> error;

  bool ok() const noexcept { return !error.has_value(); }
};

struct ExperimentSummary {
  std::vector<RepeatResult> repeats;
  std::size_t succeeded = 0;
  double mean_rmse = 0.0;
  double std_rmse = 0.0;  // sample standard deviation, 0 with fewer than two runs
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
};

/// Repeat r splits with seed base_seed + r and trains with hyper.seed set to
/// the same value. A failing repeat is recorded with its error message and
/// does not stop the others; aggregates cover the successful repeats.
ExperimentSummary run_experiment(const SparseTensor& tensor, const ExperimentConfig& cfg);

/// Aggregates already-computed repeats (used to join partial runs).
ExperimentSummary summarize(std::vector<RepeatResult> repeats);

nlohmann::json summary_to_json(const ExperimentSummary& s);

/// `repeat,rmse,epochs,seconds` with a header row; failed repeats print "nan".
std::string summary_to_csv(const ExperimentSummary& s);

}  // namespace tuckerpid

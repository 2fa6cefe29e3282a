#include "tuckerpid/evaluation.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "tuckerpid/errors.hpp"
#include "tuckerpid/file_util.hpp"

namespace tuckerpid {

namespace {

RepeatResult run_repeat(const SparseTensor& tensor, const ExperimentConfig& cfg, std::size_t r) {
  RepeatResult out;
  out.repeat = r;
  out.seed = cfg.base_seed + r;
  try {
    const DataSplit parts = split(tensor, cfg.ratios, out.seed);
    Hyperparams hyper = cfg.hyper;
    hyper.seed = out.seed;
    const TrainResult trained = train(tensor, parts, hyper);
    out.seconds = trained.report.train_seconds;
    out.epochs = trained.report.epochs_run;
    out.converged = trained.report.converged;
    out.test_rmse = rmse(trained.factors, tensor, parts.test);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

double rmse(const TuckerFactors& f, std::span<const Entry> entries) {
  if (entries.empty()) throw DataError("evaluation: RMSE over an empty entry set");
  double ss = 0.0;
  for (const Entry& e : entries) {
    const double err = e.value - predict(f, e.index);
    ss += err * err;
  }
  return std::sqrt(ss / static_cast<double>(entries.size()));
}

double rmse(const TuckerFactors& f, const SparseTensor& tensor, std::span<const std::size_t> positions) {
  if (positions.empty()) throw DataError("evaluation: RMSE over an empty entry set");
  double ss = 0.0;
  for (std::size_t pos : positions) {
    const Entry& e = tensor[pos];
    const double err = e.value - predict(f, e.index);
    ss += err * err;
  }
  return std::sqrt(ss / static_cast<double>(positions.size()));
}

void ExperimentConfig::validate() const {
  hyper.validate();
  if (repeats == 0) throw ConfigError("evaluation: repeats must be at least 1");
  if (jobs == 0) throw ConfigError("evaluation: jobs must be at least 1");
}

ExperimentSummary run_experiment(const SparseTensor& tensor, const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<RepeatResult> results(cfg.repeats);
  const std::size_t workers = std::min(cfg.jobs, cfg.repeats);
  if (workers <= 1) {
    for (std::size_t r = 0; r < cfg.repeats; ++r) results[r] = run_repeat(tensor, cfg, r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < cfg.repeats; r = next++) results[r] = run_repeat(tensor, cfg, r);
      });
    }
  }
  return summarize(std::move(results));
}

ExperimentSummary summarize(std::vector<RepeatResult> repeats) {
  ExperimentSummary s;
  s.repeats = std::move(repeats);
  std::vector<double> errs;
  std::vector<double> secs;
  for (const RepeatResult& r : s.repeats) {
    if (!r.ok()) continue;
    errs.push_back(r.test_rmse);
    secs.push_back(r.seconds);
  }
  s.succeeded = errs.size();
  mean_std(errs, s.mean_rmse, s.std_rmse);
  mean_std(secs, s.mean_seconds, s.std_seconds);
  return s;
}

nlohmann::json summary_to_json(const ExperimentSummary& s) {
  nlohmann::json j;
  j["repeats"] = nlohmann::json::array();
  for (const RepeatResult& r : s.repeats) {
    nlohmann::json row;
    row["repeat"] = r.repeat;
    row["seed"] = r.seed;
    if (r.ok()) {
      row["rmse"] = r.test_rmse;
      row["epochs"] = r.epochs;
      row["converged"] = r.converged;
      row["seconds"] = r.seconds;
    } else {
      row["error"] = *r.error;
    }
    j["repeats"].push_back(row);
  }
  j["succeeded"] = s.succeeded;
  j["mean_rmse"] = s.mean_rmse;
  j["std_rmse"] = s.std_rmse;
  j["mean_seconds"] = s.mean_seconds;
  j["std_seconds"] = s.std_seconds;
  return j;
}

std::string summary_to_csv(const ExperimentSummary& s) {
  std::ostringstream os;
  os << "repeat,rmse,epochs,seconds\n";
  for (const RepeatResult& r : s.repeats) {
    if (r.ok()) {
      os << r.repeat << ',' << format_fixed6(r.test_rmse) << ',' << r.epochs << ',' << format_fixed6(r.seconds) << '\n';
    } else {
      os << r.repeat << ",nan," << 0 << ",nan\n";
    }
  }
  return os.str();
}

}  // namespace tuckerpid

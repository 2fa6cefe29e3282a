#include "tuckerpid/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "tuckerpid/errors.hpp"
#include "tuckerpid/evaluation.hpp"

namespace tuckerpid {

namespace {

// Stream tag separating per-epoch shuffle streams from the init/split streams.
constexpr std::uint32_t kShuffleStream = 0x53485546;

std::mt19937_64 epoch_rng(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), kShuffleStream};
  return std::mt19937_64(seq);
}

std::string describe_entry(std::size_t epoch, std::size_t position, const EntryIndex& idx) {
  std::ostringstream os;
  os << "epoch " << epoch << ", entry " << position << " at (" << idx.i << "," << idx.j << "," << idx.k << ")";
  return os.str();
}

}  // namespace

void Hyperparams::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("solver: eta must be positive");
  for (double l : {reg.lambda1, reg.lambda2, reg.lambda3}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("solver: regularization weights must be non-negative");
  }
  gains.validate();
  if (ranks.r1 == 0 || ranks.r2 == 0 || ranks.r3 == 0) throw ConfigError("solver: ranks must be at least 1");
  if (max_epochs == 0) throw ConfigError("solver: max_epochs must be at least 1");
  if (!(tol > 0.0)) throw ConfigError("solver: tol must be positive");
  if (!(init_scale > 0.0) || !std::isfinite(init_scale)) throw ConfigError("solver: init_scale must be positive");
  if (error_clamp && !(*error_clamp > 0.0)) throw ConfigError("solver: error_clamp must be positive when set");
}

const char* to_string(StopReason reason) noexcept {
  switch (reason) {
    case StopReason::none:
      return "none";
    case StopReason::tolerance:
      return "tolerance";
    case StopReason::epoch_cap:
      return "epoch_cap";
  }
  return "unknown";
}

StopReason ConvergenceMonitor::observe(double val_rmse) {
  ++epochs_;
  const bool settled = has_last_ && std::abs(val_rmse - last_) < tol_;
  last_ = val_rmse;
  has_last_ = true;
  if (settled) return StopReason::tolerance;
  if (epochs_ >= max_epochs_) return StopReason::epoch_cap;
  return StopReason::none;
}

void sgd_step(TuckerFactors& f, const EntryIndex& idx, double adjusted_err, const Hyperparams& hyper,
              InstanceGradient& grad) {
  instance_gradient(f, idx, adjusted_err, hyper.reg, grad);
  const double eta = hyper.eta;
  bool finite = true;
  const auto apply = [&](std::span<double> params, const std::vector<double>& g) {
    for (std::size_t q = 0; q < params.size(); ++q) {
      params[q] -= eta * g[q];
      finite = finite && std::isfinite(params[q]);
    }
  };
  apply(f.u_row(idx.i), grad.dU_row);
  apply(f.d_row(idx.j), grad.dD_row);
  apply(f.t_row(idx.k), grad.dT_row);
  apply(f.G, grad.dG);
  f.a[idx.i] -= eta * grad.da;
  f.b[idx.j] -= eta * grad.db;
  f.c[idx.k] -= eta * grad.dc;
  finite = finite && std::isfinite(f.a[idx.i]) && std::isfinite(f.b[idx.j]) && std::isfinite(f.c[idx.k]);
  if (!finite) {
    std::ostringstream os;
    os << "solver: non-finite parameter after update at (" << idx.i << "," << idx.j << "," << idx.k << ")";
    throw DivergenceError(os.str());
  }
}

void sgd_step(TuckerFactors& f, const EntryIndex& idx, double adjusted_err, const Hyperparams& hyper) {
  InstanceGradient scratch;
  sgd_step(f, idx, adjusted_err, hyper, scratch);
}

TuckerFactors initialize_model(const SparseTensor& tensor, const DataSplit& split, const Hyperparams& hyper) {
  hyper.validate();
  const double mu = tensor.mean_value(split.train);
  return init_factors(tensor.dims(), hyper.ranks, mu, hyper.init_scale, hyper.seed);
}

TrainResult train(const SparseTensor& tensor, const DataSplit& split, const Hyperparams& hyper) {
  if (split.train.empty() || split.validation.empty()) throw DataError("solver: empty training or validation part");
  const auto start = std::chrono::steady_clock::now();

  TrainResult result{initialize_model(tensor, split, hyper), {}};
  TuckerFactors& f = result.factors;
  TrainReport& report = result.report;

  const std::size_t n_train = split.train.size();
  PidState pid(hyper.rule == UpdateRule::pid ? n_train : 0);
  InstanceGradient scratch;
  ConvergenceMonitor monitor(hyper.tol, hyper.max_epochs);

  // order[q] is a slot into split.train; PID memory is keyed by that slot.
  std::vector<std::size_t> order(n_train);
  for (std::size_t epoch = 1;; ++epoch) {
    for (std::size_t q = 0; q < n_train; ++q) order[q] = q;
    if (hyper.shuffle) {
      auto rng = epoch_rng(hyper.seed, epoch);
      std::shuffle(order.begin(), order.end(), rng);
    }

    for (std::size_t slot : order) {
      const std::size_t pos = split.train[slot];
      const Entry& entry = tensor[pos];
      try {
        const double e = instance_error(f, entry.index, entry.value);
        const double signal =
            hyper.rule == UpdateRule::pid ? clamp_error(pid.adjust(hyper.gains, slot, e), hyper.error_clamp) : e;
        sgd_step(f, entry.index, signal, hyper, scratch);
      } catch (const DivergenceError& err) {
        throw DivergenceError(std::string(err.what()) + " [" + describe_entry(epoch, pos, entry.index) + "]");
      }
    }

    const double val = rmse(f, tensor, split.validation);
    if (!std::isfinite(val)) {
      throw DivergenceError("solver: validation RMSE is not finite after epoch " + std::to_string(epoch));
    }
    const double loss = regularized_loss(f, tensor, split.train, hyper.reg);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.records.push_back({epoch, loss, val, elapsed});
    if (report.best_epoch == 0 || val < report.best_val_rmse) {
      report.best_epoch = epoch;
      report.best_val_rmse = val;
    }

    const StopReason reason = monitor.observe(val);
    if (reason != StopReason::none) {
      report.stop_reason = reason;
      report.converged = reason == StopReason::tolerance;
      break;
    }
  }

  report.epochs_run = report.records.size();
  report.final_val_rmse = report.records.back().val_rmse;
  report.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<double> impute(const TuckerFactors& f, std::span<const EntryIndex> indices) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (const EntryIndex& idx : indices) out.push_back(predict(f, idx));
  return out;
}

}  // namespace tuckerpid

// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance              run every criterion
//   acceptance --criterion N   run one

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "fixtures.hpp"
#include "gradient_check.hpp"
#include "oracles.hpp"
#include "tuckerpid/checkpoint.hpp"
#include "tuckerpid/errors.hpp"
#include "tuckerpid/evaluation.hpp"
#include "tuckerpid/solver.hpp"

using namespace tuckerpid;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Fixture hyperparameters shared by the training criteria.
Hyperparams fixture_hyper() {
  Hyperparams h;
  h.ranks = {3, 3, 3};
  return h;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Stopwatch clock;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> value(-3.0, 3.0);
  double worst = 0.0;
  std::string where;
  int checked = 0;
  for (const Ranks ranks : {Ranks{2, 2, 2}, Ranks{5, 5, 5}}) {
    for (int q = 0; q < 100; ++q) {
      const Dims dims{4, 3, 5};
      const auto f = oracle::random_factors(dims, ranks, rng(), value(rng));
      const EntryIndex idx{rng() % dims.i, rng() % dims.j, rng() % dims.k};
      const RegWeights reg{0.01 + 0.1 * (rng() % 10), 0.01 + 0.1 * (rng() % 10), 0.01 + 0.1 * (rng() % 10)};
      const auto m = oracle::check_instance_gradient(f, idx, value(rng), reg, 1e-6);
      if (m.rel_error > worst) {
        worst = m.rel_error;
        where = fmt("%s at ranks %zu (analytic %.6g, numeric %.6g)", m.name.c_str(), ranks.r1, m.analytic, m.numeric);
      }
      ++checked;
    }
  }
  const double t = clock.seconds();
  return {worst < 1e-5 && t < 10.0,
          fmt("%d instances, worst relative error %.3g (%s), %.2f s", checked, worst, where.c_str(), t)};
}

Outcome reconstruction_oracle() {
  Stopwatch clock;
  std::mt19937_64 rng(7);
  double worst_dense = 0.0, worst_literal = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const Ranks ranks{1 + rng() % 4, 1 + rng() % 3, 1 + rng() % 5};
    const auto f = oracle::random_factors({4, 3, 5}, ranks, rng(), 0.3 * draw);
    const DenseTensor dense = reconstruct_dense(f);
    const auto literal = oracle::literal_dense(f);
    std::size_t q = 0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 5; ++k, ++q) {
          const double p = predict(f, {i, j, k});
          worst_dense = std::max(worst_dense, std::abs(p - dense.at(i, j, k)));
          worst_literal = std::max(worst_literal, std::abs(p - static_cast<double>(literal[q])));
        }
  }
  const double t = clock.seconds();
  return {worst_dense <= 1e-12 && worst_literal <= 1e-12 && t < 1.0,
          fmt("20 draws on 4x3x5, max |predict - dense| %.3g, max |predict - literal| %.3g, %.3f s", worst_dense,
              worst_literal, t)};
}

Outcome pid_degeneracy() {
  Stopwatch clock;
  const auto data = generate_synthetic(fixture::spec(0));
  const auto parts = split(data.tensor, {0.08, 0.02, 0.90}, 0);
  Hyperparams h = fixture_hyper();
  h.max_epochs = 50;
  h.tol = std::numeric_limits<double>::min();  // run all 50 epochs
  h.gains = {1, 0, 0};
  const auto pid = train(data.tensor, parts, h);
  h.rule = UpdateRule::plain_sgd;
  const auto plain = train(data.tensor, parts, h);
  const std::string a = encode_checkpoint(pid.factors), b = encode_checkpoint(plain.factors);
  const double t = clock.seconds();
  return {a == b && pid.report.epochs_run == 50 && t < 30.0,
          fmt("%zu epochs each, checkpoints %s (%zu bytes), %.2f s", pid.report.epochs_run,
              a == b ? "bit-identical" : "differ", a.size(), t)};
}

Outcome pid_state() {
  int mismatches = 0, checks = 0;
  const auto expect = [&](double got, double want) {
    ++checks;
    if (got != want) ++mismatches;
  };
  {
    PidState s(1);
    const PidGains g{1.0, 0.1, 0.2};
    expect(s.adjust(g, 0, 1.0), 1.0 * 1.0 + 0.1 * 1.0 + 0.2 * (1.0 - 0.0));
    expect(s.adjust(g, 0, 0.5), 1.0 * 0.5 + 0.1 * (1.0 + 0.5) + 0.2 * (0.5 - 1.0));
    expect(1.0 * 1.0 + 0.1 * 1.0 + 0.2 * (1.0 - 0.0), 1.3);
    expect(1.0 * 0.5 + 0.1 * (1.0 + 0.5) + 0.2 * (0.5 - 1.0), 0.55);
  }
  {
    // Longer replay against a running hand computation on two interleaved slots.
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const PidGains g{0.8, 0.25, 0.4};
    PidState s(2);
    double sum[2] = {0, 0}, prev[2] = {0, 0};
    for (int step = 0; step < 200; ++step) {
      const std::size_t slot = rng() % 2;
      const double e = u(rng);
      sum[slot] += e;
      const double want = g.kp * e + g.ki * sum[slot] + g.kd * (e - prev[slot]);
      prev[slot] = e;
      expect(s.adjust(g, slot, e), want);
    }
  }
  {
    PidState s(3);
    for (int step = 0; step < 50; ++step) expect(s.adjust({1, 0, 0}, step % 3, 0.1 * step - 2.0), 0.1 * step - 2.0);
    s.reset();
    expect(s.adjust({1, 0, 0}, 0, 2.0), 2.0);
  }
  return {mismatches == 0, fmt("%d exact comparisons, %d mismatches", checks, mismatches)};
}

// Picks eta, lambda and gains by mean final validation RMSE over tuning splits
// disjoint from the evaluation seeds.
Hyperparams tune_for_recovery(const SparseTensor& tensor, std::string& chosen) {
  const std::vector<double> etas{0.005, 0.01, 0.02, 0.05};
  const std::vector<double> lambdas{0.001, 0.01, 0.1};
  const std::vector<PidGains> gains{{1, 0, 0}, {1, 0.001, 0}, {1, 0.1, 0.1}};
  Hyperparams best = fixture_hyper();
  double best_val = std::numeric_limits<double>::infinity();
  for (double eta : etas)
    for (double lambda : lambdas)
      for (const PidGains& g : gains) {
        Hyperparams h = fixture_hyper();
        h.eta = eta;
        h.reg = {lambda, lambda, lambda};
        h.gains = g;
        double total = 0.0;
        for (std::uint64_t seed = 1000; seed < 1005; ++seed) {
          h.seed = seed;
          try {
            total += train(tensor, split(tensor, {0.08, 0.02, 0.90}, seed), h).report.final_val_rmse;
          } catch (const DivergenceError&) {
            total = std::numeric_limits<double>::infinity();
            break;
          }
        }
        if (total < best_val) {
          best_val = total;
          best = h;
        }
      }
  chosen = fmt("eta %g, lambda %g, gains (%g,%g,%g)", best.eta, best.reg.lambda1, best.gains.kp, best.gains.ki,
               best.gains.kd);
  return best;
}

Outcome synthetic_recovery() {
  Stopwatch clock;
  const auto data = generate_synthetic(fixture::spec(0));
  std::string chosen;
  ExperimentConfig cfg;
  cfg.hyper = tune_for_recovery(data.tensor, chosen);
  cfg.repeats = 20;
  cfg.base_seed = 0;
  const auto summary = run_experiment(data.tensor, cfg);
  int good = 0;
  std::vector<double> rmses;
  for (const auto& r : summary.repeats) {
    if (!r.ok()) continue;
    rmses.push_back(r.test_rmse);
    if (r.test_rmse <= 0.03) ++good;
  }
  const double t = clock.seconds();
  return {good >= 18 && t < 120.0,
          fmt("%d/20 repeats with test RMSE <= 0.03 (need 18); median %.4f, mean %.4f; tuned %s; %.1f s", good,
              rmses.empty() ? NAN : median(rmses), summary.mean_rmse, chosen.c_str(), t)};
}

// First 1-based epoch whose validation RMSE is within `threshold`, or +inf.
double first_epoch_within(const TrainReport& r, double threshold) {
  for (const EpochRecord& e : r.records)
    if (e.val_rmse <= threshold) return static_cast<double>(e.epoch);
  return std::numeric_limits<double>::infinity();
}

struct RateRun {
  double plain_epoch;
  double pid_epoch;
};

std::vector<RateRun> rate_runs(const SparseTensor& tensor, const PidGains& gains, std::uint64_t first_seed,
                               std::size_t seeds) {
  std::vector<RateRun> out;
  for (std::uint64_t seed = first_seed; seed < first_seed + seeds; ++seed) {
    const auto parts = split(tensor, {0.08, 0.02, 0.90}, seed);
    Hyperparams h = fixture_hyper();
    h.seed = seed;
    h.rule = UpdateRule::plain_sgd;
    const auto plain = train(tensor, parts, h).report;
    const double threshold = 1.01 * plain.final_val_rmse;
    h.rule = UpdateRule::pid;
    h.gains = gains;
    double pid_epoch = std::numeric_limits<double>::infinity();
    try {
      pid_epoch = first_epoch_within(train(tensor, parts, h).report, threshold);
    } catch (const DivergenceError&) {
    }
    out.push_back({first_epoch_within(plain, threshold), pid_epoch});
  }
  return out;
}

Outcome convergence_rate() {
  Stopwatch clock;
  const auto data = generate_synthetic(fixture::spec(0));
  // Gains tuned on validation over splits 1000.., the proportional gain held
  // at 1 so the comparison keeps the plain step size.
  PidGains best{1, 0, 0};
  double best_median = std::numeric_limits<double>::infinity();
  for (double ki : {0.0005, 0.001, 0.002, 0.005, 0.01})
    for (double kd : {0.0, 0.05, 0.1, 0.2}) {
      std::vector<double> epochs;
      for (const RateRun& r : rate_runs(data.tensor, {1, ki, kd}, 1000, 10)) epochs.push_back(r.pid_epoch);
      const double m = median(epochs);
      if (m < best_median) {
        best_median = m;
        best = {1, ki, kd};
      }
    }
  std::vector<double> plain, pid;
  for (const RateRun& r : rate_runs(data.tensor, best, 0, 20)) {
    plain.push_back(r.plain_epoch);
    pid.push_back(r.pid_epoch);
  }
  const double mp = median(plain), mq = median(pid);
  const double t = clock.seconds();
  return {mq < mp, fmt("median epochs to within 1%% of plain final RMSE: PID %.1f vs plain %.1f over 20 seeds; "
                       "gains (1,%g,%g); %.1f s",
                       mq, mp, best.ki, best.kd, t)};
}

Outcome protocol_conformance() {
  int failures = 0;
  std::ostringstream notes;
  // |Lambda| = 1000 on a fully observed 10x10x10 grid.
  std::vector<Record> records;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j)
      for (std::size_t k = 0; k < 10; ++k) records.push_back({i, j, k, 1.0 + i + j + k});
  const auto tensor = SparseTensor::from_records({10, 10, 10}, records);
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    const auto s = split(tensor, {0.08, 0.02, 0.90}, seed);
    if (s.train.size() != 80 || s.validation.size() != 20 || s.test.size() != 900) {
      ++failures;
      notes << " split(" << seed << ")=(" << s.train.size() << "," << s.validation.size() << "," << s.test.size() << ")";
    }
  }

  struct Case {
    const char* name;
    std::vector<double> values;
    std::size_t stop_epoch;
    StopReason reason;
  };
  std::vector<Case> cases{
      {"settles at 3", {5.0, 4.0, 4.0000009}, 3, StopReason::tolerance},
      {"flat from start", {1.0, 1.0}, 2, StopReason::tolerance},
      {"small rise", {1.0, 1.000005}, 2, StopReason::tolerance},
  };
  // Changes of 2e-5 per epoch never settle, so the cap at 1000 fires.
  Case slow{"cap", {}, 1000, StopReason::epoch_cap};
  for (int e = 0; e < 1200; ++e) slow.values.push_back(1.0 - 2e-5 * e);
  cases.push_back(slow);
  // Alternating by 1e-3, then a change below tolerance at epoch 600.
  Case late{"settles at 600", {}, 600, StopReason::tolerance};
  for (int e = 1; e < 600; ++e) late.values.push_back(e % 2 ? 2.0 : 2.001);
  late.values.push_back(late.values.back() + 9e-6);
  late.values.push_back(0.0);
  cases.push_back(late);

  for (const Case& c : cases) {
    ConvergenceMonitor m(1e-5, 1000);
    StopReason reason = StopReason::none;
    std::size_t epoch = 0;
    for (double v : c.values) {
      reason = m.observe(v);
      ++epoch;
      if (reason != StopReason::none) break;
    }
    if (epoch != c.stop_epoch || reason != c.reason) {
      ++failures;
      notes << " '" << c.name << "' stopped at " << epoch << " (" << to_string(reason) << ")";
    }
  }

  // The trainer obeys the same rule: a cap of 1000 epochs on a run that cannot settle.
  {
    const auto data = generate_synthetic(fixture::spec(0));
    Hyperparams h = fixture_hyper();
    h.tol = std::numeric_limits<double>::min();
    const auto r = train(data.tensor, split(data.tensor, {0.08, 0.02, 0.90}, 0), h).report;
    if (r.epochs_run != 1000 || r.stop_reason != StopReason::epoch_cap) {
      ++failures;
      notes << " trainer ran " << r.epochs_run << " epochs";
    }
    h.tol = 1e-5;
    const auto s = train(data.tensor, split(data.tensor, {0.08, 0.02, 0.90}, 0), h).report;
    const auto& rec = s.records;
    const bool ok = s.stop_reason == StopReason::epoch_cap ||
                    (rec.size() >= 2 && std::abs(rec.back().val_rmse - rec[rec.size() - 2].val_rmse) < 1e-5);
    bool early = false;
    for (std::size_t q = 1; q + 1 < rec.size(); ++q) early |= std::abs(rec[q].val_rmse - rec[q - 1].val_rmse) < 1e-5;
    if (!ok || early) {
      ++failures;
      notes << " trainer stop at epoch " << s.epochs_run << " does not follow the rule";
    }
  }
  return {failures == 0, failures == 0 ? "split (80,20,900) for 3 seeds; 5 injected stopping sequences; trainer cap and "
                                         "tolerance stop agree"
                                       : "failures:" + notes.str()};
}

int tpid(std::vector<std::string> args) {
  args.insert(args.begin(), "tpid");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

// Removes wall-clock fields so reruns can be compared byte for byte.
std::string without_timing(const fs::path& file) {
  const std::string text = fixture::read_text(file);
  const std::string name = file.filename().string();
  if (name == "trace.csv") {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  }
  if (name == "summary.csv") {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  }
  if (name == "summary.json") {
    auto j = nlohmann::json::parse(text);
    for (const char* key : {"train_seconds", "mean_seconds", "std_seconds"}) j.erase(key);
    if (j.contains("repeats"))
      for (auto& r : j["repeats"]) r.erase("seconds");
    return j.dump(1);
  }
  return text;
}

Outcome end_to_end_determinism() {
  fixture::TempDir dir;
  // Both runs use the same paths so the echoed configs are comparable; the
  // first run is moved aside before the second starts.
  const auto pipeline = [&]() {
    const std::string out = (dir / "run").string();
    if (tpid({"synth", "--out", out, "--run-name", "synth", "--seed", "11"}) != 0) return false;
    const std::string data = (dir / "run" / "synth" / "data.csv").string();
    const std::string mapping = (dir / "run" / "synth" / "mapping.json").string();
    const std::vector<std::string> common{"--data", data, "--mapping", mapping, "--ranks", "3,3,3", "--seed", "4", "--out", out};
    std::vector<std::string> train{"train", "--run-name", "train"};
    train.insert(train.end(), common.begin(), common.end());
    std::vector<std::string> bench{"benchmark", "--run-name", "benchmark", "--repeats", "3", "--jobs", "2"};
    bench.insert(bench.end(), common.begin(), common.end());
    return tpid(train) == 0 && tpid(bench) == 0;
  };
  if (!pipeline()) return {false, "a command exited with an error"};
  fs::rename(dir / "run", dir / "first");
  if (!pipeline()) return {false, "a command exited with an error"};
  fs::rename(dir / "run", dir / "second");

  int files = 0, differing = 0;
  std::string which;
  for (const auto& e : fs::recursive_directory_iterator(dir / "first")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dir / "first");
    const fs::path other = dir / "second" / rel;
    ++files;
    if (!fs::exists(other) || without_timing(e.path()) != without_timing(other)) {
      ++differing;
      which += " " + rel.string();
    }
  }
  return {files > 0 && differing == 0,
          fmt("%d files compared across two synth -> train -> benchmark runs, %d differ%s", files, differing,
              which.c_str())};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "gradient correctness", gradient_correctness},
      {2, "reconstruction oracle", reconstruction_oracle},
      {3, "PID degeneracy", pid_degeneracy},
      {4, "PID state", pid_state},
      {5, "synthetic recovery", synthetic_recovery},
      {6, "convergence rate", convergence_rate},
      {7, "protocol conformance", protocol_conformance},
      {8, "end-to-end determinism", end_to_end_determinism},
  };
  int only = 0;
  if (argc == 3 && std::strcmp(argv[1], "--criterion") == 0) only = std::atoi(argv[2]);
  else if (argc != 1) {
    std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
    return 2;
  }

  int failed = 0, ran = 0;
  for (const Criterion& c : all) {
    if (only != 0 && c.id != only) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %d (%s): %s: %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  if (ran == 0) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 2;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}

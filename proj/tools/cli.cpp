#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "tuckerpid/checkpoint.hpp"
#include "tuckerpid/dataset_io.hpp"
#include "tuckerpid/errors.hpp"
#include "tuckerpid/evaluation.hpp"
#include "tuckerpid/file_util.hpp"
#include "tuckerpid/solver.hpp"

namespace tuckerpid::cli {

namespace fs = std::filesystem;

namespace {

struct KeySpec {
  std::string name;
  std::string default_value;  // empty: unset unless given
  std::string help;
  bool flag = false;
};

// ---------------------------------------------------------------------------
// Key tables

std::vector<KeySpec> output_keys() {
  return {
      {"out", "runs", "parent directory for run outputs"},
      {"run-name", "", "run directory name (default: <command>-<timestamp>)"},
  };
}

std::vector<KeySpec> schema_keys() {
  return {
      {"segment-col", "segment", "CSV column holding the road segment id"},
      {"day-col", "day", "CSV column holding the day id"},
      {"slot-col", "slot", "CSV column holding the time-of-day slot"},
      {"speed-col", "speed", "CSV column holding the observed speed"},
      {"slots-per-day", "", "time slots per day [288, or the mapping's value]"},
  };
}

std::vector<KeySpec> hyper_keys() {
  return {
      {"ratios", "0.08,0.02,0.90", "train,validation,test split ratios"},
      {"ranks", "5,5,5", "Tucker ranks r1,r2,r3"},
      {"eta", "0.01", "learning rate"},
      {"lambda1", "0.01", "core regularization weight"},
      {"lambda2", "0.01", "factor regularization weight"},
      {"lambda3", "0.01", "bias regularization weight"},
      {"kp", "1.0", "proportional gain"},
      {"ki", "0.1", "integral gain"},
      {"kd", "0.1", "derivative gain"},
      {"plain-sgd", "false", "use the raw instance error (no PID state)", true},
      {"max-epochs", "1000", "epoch cap"},
      {"tol", "1e-5", "validation RMSE change that counts as converged"},
      {"init-scale", "0.04", "factors start uniform on (0, init-scale]"},
      {"seed", "0", "seed for the split, initialization and shuffling"},
      {"shuffle", "true", "shuffle training entries every epoch"},
      {"error-clamp", "", "symmetric bound on the adjusted error"},
  };
}

std::vector<KeySpec> concat(std::initializer_list<std::vector<KeySpec>> parts) {
  std::vector<KeySpec> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// ---------------------------------------------------------------------------
// Typed access to merged key=value settings

class Settings {
 public:
  explicit Settings(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return !raw(key).empty(); }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("cli: internal: unknown key '" + key + "'");
    return it->second;
  }

  std::string str(const std::string& key) const {
    if (!has(key)) throw ConfigError("cli: key '" + key + "' is required");
    return raw(key);
  }

  double real(const std::string& key) const { return parse_real(key, str(key)); }

  std::uint64_t u64(const std::string& key) const { return parse_u64(key, str(key)); }

  std::size_t size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

  bool boolean(const std::string& key) const {
    const std::string v = str(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("cli: key '" + key + "': '" + v + "' is not a boolean");
  }

  std::vector<double> reals(const std::string& key, std::size_t count) const {
    std::vector<double> out;
    for (const std::string& part : split_list(key, count)) out.push_back(parse_real(key, part));
    return out;
  }

  std::vector<std::size_t> sizes(const std::string& key, std::size_t count) const {
    std::vector<std::size_t> out;
    for (const std::string& part : split_list(key, count)) out.push_back(static_cast<std::size_t>(parse_u64(key, part)));
    return out;
  }

  /// key=value lines in key order, skipping output-location keys.
  std::string echo() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) {
      if (k == "out" || k == "run-name") continue;
      os << k << '=' << v << '\n';
    }
    return os.str();
  }

 private:
  static double parse_real(const std::string& key, const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) throw ConfigError("cli: key '" + key + "': '" + s + "' is not a number");
    return v;
  }

  static std::uint64_t parse_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) {
      throw ConfigError("cli: key '" + key + "': '" + s + "' is not a non-negative integer");
    }
    return v;
  }

  std::vector<std::string> split_list(const std::string& key, std::size_t count) const {
    std::vector<std::string> parts;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto a = item.find_first_not_of(" \t");
      const auto b = item.find_last_not_of(" \t");
      parts.push_back(a == std::string::npos ? std::string() : item.substr(a, b - a + 1));
    }
    if (parts.size() != count) {
      throw ConfigError("cli: key '" + key + "' needs " + std::to_string(count) + " comma-separated values");
    }
    return parts;
  }

  std::map<std::string, std::string> values_;
};

// Flat `key = value` file; '#' starts a comment line.
std::map<std::string, std::string> read_config_file(const fs::path& path, const std::vector<KeySpec>& keys) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cli: cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + " line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError("cli: " + where + ": expected key=value");
    auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    const bool known = std::any_of(keys.begin(), keys.end(), [&](const KeySpec& k) { return k.name == key; });
    if (!known) throw ConfigError("cli: " + where + ": unknown key '" + key + "'");
    if (!out.emplace(key, value).second) throw ConfigError("cli: " + where + ": key '" + key + "' set twice");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run directories: everything is written into a hidden staging directory that
// is renamed into place only when the command succeeds.

class RunDir {
 public:
  RunDir(const Settings& s, const std::string& command) {
    const fs::path parent = s.str("out");
    std::string name = s.has("run-name") ? s.str("run-name") : command + "-" + timestamp();
    if (name.find('/') != std::string::npos || name == "." || name == "..") {
      throw ConfigError("cli: run-name must be a plain directory name");
    }
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw DataError("cli: cannot create output directory " + parent.string());
    final_ = parent / name;
    for (int n = 2; fs::exists(final_); ++n) final_ = parent / (name + "-" + std::to_string(n));
    staging_ = parent / ("." + final_.filename().string() + ".partial");
    fs::remove_all(staging_, ec);
    fs::create_directories(staging_, ec);
    if (ec) throw DataError("cli: cannot create staging directory " + staging_.string());
  }

  ~RunDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  fs::path file(const std::string& name) const { return staging_ / name; }

  const fs::path& commit() {
    std::error_code ec;
    fs::rename(staging_, final_, ec);
    if (ec) throw DataError("cli: cannot move results into " + final_.string());
    committed_ = true;
    return final_;
  }

 private:
  static std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
  }

  fs::path staging_;
  fs::path final_;
  bool committed_ = false;
};

void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Typed configuration builders. All of them run before any work starts.

CsvSchema schema_from(const Settings& s) {
  CsvSchema schema;
  schema.segment_col = s.str("segment-col");
  schema.day_col = s.str("day-col");
  schema.slot_col = s.str("slot-col");
  schema.speed_col = s.str("speed-col");
  schema.slots_per_day = s.has("slots-per-day") ? s.size("slots-per-day") : 288;
  if (schema.slots_per_day == 0) throw ConfigError("cli: slots-per-day must be positive");
  return schema;
}

Ranks ranks_from(const Settings& s) {
  const auto r = s.sizes("ranks", 3);
  return {r[0], r[1], r[2]};
}

SplitRatios ratios_from(const Settings& s) {
  const auto r = s.reals("ratios", 3);
  return {r[0], r[1], r[2]};
}

Hyperparams hyper_from(const Settings& s) {
  Hyperparams h;
  h.eta = s.real("eta");
  h.reg = {s.real("lambda1"), s.real("lambda2"), s.real("lambda3")};
  h.gains = {s.real("kp"), s.real("ki"), s.real("kd")};
  h.ranks = ranks_from(s);
  h.max_epochs = s.size("max-epochs");
  h.tol = s.real("tol");
  h.init_scale = s.real("init-scale");
  h.seed = s.u64("seed");
  h.shuffle = s.boolean("shuffle");
  h.rule = s.boolean("plain-sgd") ? UpdateRule::plain_sgd : UpdateRule::pid;
  if (s.has("error-clamp")) h.error_clamp = s.real("error-clamp");
  h.validate();
  return h;
}

LoadedDataset load_data(const Settings& s, CsvSchema schema) {
  const fs::path data = s.str("data");
  if (s.has("mapping")) {
    IndexMapping mapping = IndexMapping::load(s.str("mapping"));
    if (!s.has("slots-per-day")) schema.slots_per_day = mapping.slots_per_day();
    return load_csv(data, schema, mapping);
  }
  return load_csv(data, schema);
}

std::string trace_csv(const TrainReport& report) {
  std::ostringstream os;
  os << "epoch,train_loss,val_rmse,elapsed_s\n";
  for (const EpochRecord& r : report.records) {
    os << r.epoch << ',' << format_fixed6(r.train_loss) << ',' << format_fixed6(r.val_rmse) << ','
       << format_fixed6(r.elapsed_s) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

struct Command {
  std::string name;
  std::string description;
  std::vector<KeySpec> keys;
  std::function<void(const Settings&, std::ostream&)> handler;
};

void cmd_synth(const Settings& s, std::ostream& out) {
  SyntheticSpec spec;
  const auto dims = s.sizes("dims", 3);
  spec.dims = {dims[0], dims[1], dims[2]};
  spec.ranks = ranks_from(s);
  spec.observed_fraction = s.real("observed-fraction");
  spec.noise_sigma = s.real("noise-sigma");
  spec.value_offset = s.real("value-offset");
  spec.seed = s.u64("seed");
  spec.validate();

  RunDir dir(s, "synth");
  const SyntheticData data = generate_synthetic(spec);
  const IndexMapping mapping = IndexMapping::identity(spec.dims);
  write_csv(data.tensor, mapping, CsvSchema{}, dir.file("data.csv"));
  mapping.save(dir.file("mapping.json"));
  save_checkpoint(data.truth, dir.file("truth.ckpt"));
  write_json(dir.file("truth.json"), checkpoint_to_json(data.truth));
  write_file_atomic(dir.file("config.txt"), s.echo());
  out << "synth: " << data.tensor.size() << " entries, density " << data.tensor.density() << "\n";
  out << "run directory: " << dir.commit().string() << "\n";
}

void cmd_train(const Settings& s, std::ostream& out) {
  const CsvSchema schema = schema_from(s);
  const Hyperparams hyper = hyper_from(s);
  const SplitRatios ratios = ratios_from(s);

  const LoadedDataset data = load_data(s, schema);
  const DataSplit parts = split(data.tensor, ratios, hyper.seed);
  RunDir dir(s, "train");
  const TrainResult result = train(data.tensor, parts, hyper);
  const double test = rmse(result.factors, data.tensor, parts.test);

  save_checkpoint(result.factors, dir.file("model.ckpt"));
  write_json(dir.file("model.json"), checkpoint_to_json(result.factors));
  data.mapping.save(dir.file("mapping.json"));
  write_file_atomic(dir.file("trace.csv"), trace_csv(result.report));

  const TrainReport& r = result.report;
  nlohmann::json summary;
  const Dims& d = data.tensor.dims();
  summary["dims"] = {d.i, d.j, d.k};
  summary["entries"] = data.tensor.size();
  summary["train_size"] = parts.train.size();
  summary["validation_size"] = parts.validation.size();
  summary["test_size"] = parts.test.size();
  summary["mu"] = result.factors.mu;
  summary["epochs_run"] = r.epochs_run;
  summary["converged"] = r.converged;
  summary["stop_reason"] = to_string(r.stop_reason);
  summary["best_epoch"] = r.best_epoch;
  summary["best_val_rmse"] = r.best_val_rmse;
  summary["final_val_rmse"] = r.final_val_rmse;
  summary["test_rmse"] = test;
  summary["train_seconds"] = r.train_seconds;
  write_json(dir.file("summary.json"), summary);
  write_file_atomic(dir.file("config.txt"), s.echo());

  out << "train: " << r.epochs_run << " epochs (" << to_string(r.stop_reason) << "), validation RMSE "
      << r.final_val_rmse << ", test RMSE " << test << "\n";
  out << "run directory: " << dir.commit().string() << "\n";
}

void cmd_benchmark(const Settings& s, std::ostream& out) {
  const CsvSchema schema = schema_from(s);
  ExperimentConfig cfg;
  cfg.hyper = hyper_from(s);
  cfg.ratios = ratios_from(s);
  cfg.repeats = s.size("repeats");
  cfg.jobs = s.size("jobs");
  cfg.base_seed = cfg.hyper.seed;
  cfg.validate();

  const LoadedDataset data = load_data(s, schema);
  RunDir dir(s, "benchmark");
  const ExperimentSummary summary = run_experiment(data.tensor, cfg);
  write_json(dir.file("summary.json"), summary_to_json(summary));
  write_file_atomic(dir.file("summary.csv"), summary_to_csv(summary));
  write_file_atomic(dir.file("config.txt"), s.echo());
  if (summary.succeeded == 0) throw DataError("benchmark: every repeat failed; first error: " + *summary.repeats.front().error);
  out << "benchmark: " << summary.succeeded << "/" << cfg.repeats << " repeats, mean test RMSE " << summary.mean_rmse
      << " (sd " << summary.std_rmse << ")\n";
  out << "run directory: " << dir.commit().string() << "\n";
}

void cmd_impute(const Settings& s, std::ostream& out) {
  CsvSchema schema = schema_from(s);
  if (!s.has("targets") && !s.has("data")) {
    throw ConfigError("cli: impute needs either 'targets' (cells to fill) or 'data' (fill every missing cell)");
  }
  const TuckerFactors model = load_checkpoint(s.str("model"));
  const IndexMapping mapping = IndexMapping::load(s.str("mapping"));
  schema.slots_per_day = mapping.slots_per_day();

  std::vector<EntryIndex> targets;
  if (s.has("targets")) {
    targets = load_targets_csv(s.str("targets"), schema, mapping);
  } else {
    targets = missing_cells(load_csv(s.str("data"), schema, mapping).tensor);
  }
  RunDir dir(s, "impute");
  export_imputed(model, targets, mapping, dir.file("imputed.csv"));
  write_file_atomic(dir.file("config.txt"), s.echo());
  out << "impute: " << targets.size() << " cells\n";
  out << "run directory: " << dir.commit().string() << "\n";
}

void cmd_evaluate(const Settings& s, std::ostream& out) {
  const CsvSchema schema = schema_from(s);
  const TuckerFactors model = load_checkpoint(s.str("model"));
  const LoadedDataset data = load_data(s, schema);
  if (!(data.tensor.dims() == model.dims)) throw DataError("evaluate: data dims do not match the model");
  const double value = rmse(model, data.tensor.entries());
  RunDir dir(s, "evaluate");
  nlohmann::json j;
  j["rmse"] = value;
  j["entries"] = data.tensor.size();
  write_json(dir.file("evaluation.json"), j);
  write_file_atomic(dir.file("config.txt"), s.echo());
  out << "evaluate: RMSE " << value << " over " << data.tensor.size() << " entries\n";
  out << "run directory: " << dir.commit().string() << "\n";
}

std::vector<Command> commands() {
  const std::vector<KeySpec> data_keys = {
      {"data", "", "speed CSV file"},
      {"mapping", "", "index mapping JSON fixing segment/day indices"},
  };
  return {
      {"train", "Train one model and write checkpoint, trace and summary",
       concat({data_keys, schema_keys(), hyper_keys(), output_keys()}), cmd_train},
      {"benchmark", "Repeat split + train + test RMSE with seeds seed, seed+1, ...",
       concat({data_keys, schema_keys(), hyper_keys(), output_keys(),
               {{"repeats", "20", "number of repeats"}, {"jobs", "1", "worker threads"}}}),
       cmd_benchmark},
      {"impute", "Predict cells from a checkpoint",
       concat({{{"model", "", "checkpoint file"},
                {"mapping", "", "index mapping JSON written by train"},
                {"targets", "", "CSV of segment,day,slot cells to predict"},
                {"data", "", "CSV of observed cells; every other cell is predicted"}},
               schema_keys(),
               output_keys()}),
       cmd_impute},
      {"synth", "Generate a synthetic tensor from a random biased Tucker model",
       concat({{{"dims", "20,15,30", "tensor dims I,J,K"},
                {"ranks", "3,3,3", "ground-truth ranks"},
                {"observed-fraction", "0.1", "fraction of cells observed"},
                {"noise-sigma", "0.01", "Gaussian noise standard deviation"},
                {"value-offset", "2.0", "global mean of the values"},
                {"seed", "0", "generator seed"}},
               output_keys()}),
       cmd_synth},
      {"evaluate", "RMSE of a checkpoint over every entry of a CSV file",
       concat({{{"model", "", "checkpoint file"}}, data_keys, schema_keys(), output_keys()}), cmd_evaluate},
  };
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return kConfigError;
    case ErrorKind::data:
      return kDataError;
    case ErrorKind::divergence:
      return kDivergence;
  }
  return kDataError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::vector<Command> table = commands();

  CLI::App app{"Sparse tensor completion with a biased Tucker model trained by PID-incorporated SGD", "tpid"};
  app.require_subcommand(1);

  struct Bound {
    CLI::App* sub = nullptr;
    std::string config;
    std::map<std::string, std::string> flags;
    std::map<std::string, CLI::Option*> options;
  };
  std::vector<Bound> bound(table.size());
  for (std::size_t c = 0; c < table.size(); ++c) {
    Bound& b = bound[c];
    b.sub = app.add_subcommand(table[c].name, table[c].description);
    b.sub->add_option("--config", b.config, "flat key=value config file; flags take precedence");
    for (const KeySpec& key : table[c].keys) {
      std::string help = key.help;
      if (!key.default_value.empty()) help += " [" + key.default_value + "]";
      b.options[key.name] = key.flag ? b.sub->add_flag("--" + key.name, b.flags[key.name], help)
                                     : b.sub->add_option("--" + key.name, b.flags[key.name], help);
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "tpid: error: " << e.what() << "\n";
    return kConfigError;
  }

  for (std::size_t c = 0; c < table.size(); ++c) {
    Bound& b = bound[c];
    if (!b.sub->parsed()) continue;
    const Command& cmd = table[c];
    try {
      std::map<std::string, std::string> merged;
      for (const KeySpec& key : cmd.keys) merged[key.name] = key.default_value;
      if (!b.config.empty()) {
        for (auto& [k, v] : read_config_file(b.config, cmd.keys)) merged[k] = v;
      }
      for (const KeySpec& key : cmd.keys) {
        if (b.options[key.name]->count() > 0) merged[key.name] = b.flags[key.name];
      }
      cmd.handler(Settings(std::move(merged)), out);
      return kOk;
    } catch (const Error& e) {
      err << "tpid " << cmd.name << ": error: " << e.what() << "\n";
      return exit_code_for(e.kind());
    } catch (const std::exception& e) {
      err << "tpid " << cmd.name << ": error: " << e.what() << "\n";
      return kDataError;
    }
  }
  return kConfigError;
}

}  // namespace tuckerpid::cli

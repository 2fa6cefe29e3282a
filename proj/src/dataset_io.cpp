#include "tuckerpid/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "tuckerpid/errors.hpp"
#include "tuckerpid/file_util.hpp"

namespace tuckerpid {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV line; fields may be double-quoted with "" as an escaped quote.
std::optional<std::vector<std::string>> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t p = 0; p < line.size(); ++p) {
    const char ch = line[p];
    if (quoted) {
      if (ch == '"') {
        if (p + 1 < line.size() && line[p + 1] == '"') {
          cur += '"';
          ++p;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) return std::nullopt;
  fields.push_back(trim(cur));
  return fields;
}

std::optional<long long> parse_integer(const std::string& s) {
  long long v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

// Numeric order when every identifier is an integer, lexicographic otherwise.
void sort_ids(std::vector<std::string>& ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const bool numeric = std::all_of(ids.begin(), ids.end(), [](const std::string& s) { return parse_integer(s).has_value(); });
  if (numeric) {
    std::sort(ids.begin(), ids.end(), [](const std::string& x, const std::string& y) {
      const long long a = *parse_integer(x);
      const long long b = *parse_integer(y);
      return a != b ? a < b : x < y;
    });
  }
}

// Quotes an identifier when it would otherwise break the row.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

[[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
  std::ostringstream os;
  os << "dataset_io: " << path.string() << " line " << line << ": " << msg;
  throw DataError(os.str());
}

struct RawRow {
  std::size_t line = 0;
  std::string segment;
  std::string day;
  std::size_t slot = 0;
  double speed = 0.0;
};

struct ColumnIndex {
  std::size_t segment = 0;
  std::size_t day = 0;
  std::size_t slot = 0;
  std::optional<std::size_t> speed;
  std::size_t width = 0;
};

// Reads header + rows. Speed is only required when `need_speed`.
std::vector<RawRow> read_rows(const std::filesystem::path& path, const CsvSchema& schema, bool need_speed) {
  if (schema.slots_per_day == 0) throw ConfigError("dataset_io: slots_per_day must be positive");
  std::ifstream in(path);
  if (!in) throw DataError("dataset_io: cannot open " + path.string());

  std::string line;
  std::size_t line_no = 0;
  ColumnIndex cols;
  bool have_header = false;
  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (!fields) fail_line(path, line_no, "unterminated quoted field");

    if (!have_header) {
      const auto find = [&](const std::string& name) -> std::optional<std::size_t> {
        const auto it = std::find(fields->begin(), fields->end(), name);
        if (it == fields->end()) return std::nullopt;
        return static_cast<std::size_t>(it - fields->begin());
      };
      const auto seg = find(schema.segment_col);
      const auto day = find(schema.day_col);
      const auto slot = find(schema.slot_col);
      cols.speed = find(schema.speed_col);
      if (!seg || !day || !slot || (need_speed && !cols.speed)) {
        fail_line(path, line_no,
                  "header lacks one of the columns '" + schema.segment_col + "', '" + schema.day_col + "', '" +
                      schema.slot_col + "'" + (need_speed ? ", '" + schema.speed_col + "'" : std::string()));
      }
      cols.segment = *seg;
      cols.day = *day;
      cols.slot = *slot;
      cols.width = fields->size();
      have_header = true;
      continue;
    }

    if (fields->size() != cols.width) {
      fail_line(path, line_no,
                "expected " + std::to_string(cols.width) + " fields, found " + std::to_string(fields->size()));
    }
    RawRow row;
    row.line = line_no;
    row.segment = (*fields)[cols.segment];
    row.day = (*fields)[cols.day];
    if (row.segment.empty() || row.day.empty()) fail_line(path, line_no, "empty segment or day identifier");
    const auto slot = parse_integer((*fields)[cols.slot]);
    if (!slot) fail_line(path, line_no, "slot '" + (*fields)[cols.slot] + "' is not an integer");
    if (*slot < 0 || static_cast<unsigned long long>(*slot) >= schema.slots_per_day) {
      fail_line(path, line_no,
                "slot " + std::to_string(*slot) + " out of range [0, " + std::to_string(schema.slots_per_day) + ")");
    }
    row.slot = static_cast<std::size_t>(*slot);
    if (need_speed) {
      const auto speed = parse_real((*fields)[*cols.speed]);
      if (!speed) fail_line(path, line_no, "speed '" + (*fields)[*cols.speed] + "' is not a number");
      if (!std::isfinite(*speed) || *speed < 0.0) fail_line(path, line_no, "speed must be finite and non-negative");
      row.speed = *speed;
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError("dataset_io: " + path.string() + " has no header row");
  return rows;
}

LoadedDataset build_dataset(const std::filesystem::path& path, const std::vector<RawRow>& rows,
                            IndexMapping mapping) {
  const Dims dims = mapping.dims();
  std::unordered_map<std::uint64_t, std::size_t> seen;
  std::vector<Entry> entries;
  entries.reserve(rows.size());
  for (const RawRow& row : rows) {
    EntryIndex idx;
    try {
      idx = {mapping.segment_index(row.segment), mapping.day_index(row.day), row.slot};
    } catch (const DataError& e) {
      fail_line(path, row.line, e.what());
    }
    auto [it, inserted] = seen.emplace(linear_offset(dims, idx), row.line);
    if (!inserted) {
      fail_line(path, row.line,
                "duplicate (segment, day, slot) = (" + row.segment + ", " + row.day + ", " + std::to_string(row.slot) +
                    "), first seen on line " + std::to_string(it->second));
    }
    entries.push_back({idx, row.speed});
  }
  if (entries.empty()) throw DataError("dataset_io: " + path.string() + " has no data rows");
  return {SparseTensor::from_entries(dims, std::move(entries)), std::move(mapping)};
}

}  // namespace

IndexMapping::IndexMapping(std::vector<std::string> segments, std::vector<std::string> days, std::size_t slots_per_day)
    : segments_(std::move(segments)), days_(std::move(days)), slots_per_day_(slots_per_day) {
  build_lookup();
}

void IndexMapping::build_lookup() {
  segment_lookup_.clear();
  day_lookup_.clear();
  for (std::size_t q = 0; q < segments_.size(); ++q) {
    if (!segment_lookup_.emplace(segments_[q], q).second) throw DataError("dataset_io: repeated segment id '" + segments_[q] + "' in mapping");
  }
  for (std::size_t q = 0; q < days_.size(); ++q) {
    if (!day_lookup_.emplace(days_[q], q).second) throw DataError("dataset_io: repeated day id '" + days_[q] + "' in mapping");
  }
}

IndexMapping IndexMapping::from_ids(std::vector<std::string> segments, std::vector<std::string> days,
                                    std::size_t slots_per_day) {
  sort_ids(segments);
  sort_ids(days);
  return IndexMapping(std::move(segments), std::move(days), slots_per_day);
}

IndexMapping IndexMapping::identity(const Dims& dims) {
  std::vector<std::string> segments(dims.i);
  std::vector<std::string> days(dims.j);
  for (std::size_t q = 0; q < dims.i; ++q) segments[q] = std::to_string(q);
  for (std::size_t q = 0; q < dims.j; ++q) days[q] = std::to_string(q);
  return IndexMapping(std::move(segments), std::move(days), dims.k);
}

std::size_t IndexMapping::segment_index(const std::string& id) const {
  const auto it = segment_lookup_.find(id);
  if (it == segment_lookup_.end()) throw DataError("unknown segment id '" + id + "'");
  return it->second;
}

std::size_t IndexMapping::day_index(const std::string& id) const {
  const auto it = day_lookup_.find(id);
  if (it == day_lookup_.end()) throw DataError("unknown day id '" + id + "'");
  return it->second;
}

nlohmann::json IndexMapping::to_json() const {
  nlohmann::json j;
  j["segments"] = segments_;
  j["days"] = days_;
  j["slots_per_day"] = slots_per_day_;
  return j;
}

IndexMapping IndexMapping::from_json(const nlohmann::json& j) {
  try {
    IndexMapping m(j.at("segments").get<std::vector<std::string>>(), j.at("days").get<std::vector<std::string>>(),
                   j.at("slots_per_day").get<std::size_t>());
    if (m.segments_.empty() || m.days_.empty() || m.slots_per_day_ == 0) {
      throw DataError("dataset_io: mapping has an empty mode");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset_io: malformed mapping JSON: ") + e.what());
  }
}

void IndexMapping::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }

IndexMapping IndexMapping::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset_io: " + path.string() + " is not valid JSON: " + e.what());
  }
}

LoadedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  const auto rows = read_rows(path, schema, true);
  std::set<std::string> segments;
  std::set<std::string> days;
  for (const RawRow& row : rows) {
    segments.insert(row.segment);
    days.insert(row.day);
  }
  return build_dataset(path, rows,
                       IndexMapping::from_ids({segments.begin(), segments.end()}, {days.begin(), days.end()},
                                              schema.slots_per_day));
}

LoadedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, const IndexMapping& mapping) {
  if (mapping.slots_per_day() != schema.slots_per_day) {
    throw DataError("dataset_io: mapping declares " + std::to_string(mapping.slots_per_day()) +
                    " slots per day but the schema expects " + std::to_string(schema.slots_per_day));
  }
  return build_dataset(path, read_rows(path, schema, true), mapping);
}

std::vector<EntryIndex> load_targets_csv(const std::filesystem::path& path, const CsvSchema& schema,
                                         const IndexMapping& mapping) {
  CsvSchema s = schema;
  s.slots_per_day = mapping.slots_per_day();
  std::vector<EntryIndex> out;
  for (const RawRow& row : read_rows(path, s, false)) {
    try {
      out.push_back({mapping.segment_index(row.segment), mapping.day_index(row.day), row.slot});
    } catch (const DataError& e) {
      fail_line(path, row.line, e.what());
    }
  }
  return out;
}

void write_csv(const SparseTensor& tensor, const IndexMapping& mapping, const CsvSchema& schema,
               const std::filesystem::path& path) {
  if (!(mapping.dims() == tensor.dims())) throw DataError("dataset_io: mapping dims do not match the tensor");
  std::ostringstream os;
  os << schema.segment_col << ',' << schema.day_col << ',' << schema.slot_col << ',' << schema.speed_col << '\n';
  for (const Entry& e : tensor.entries()) {
    os << csv_field(mapping.segments()[e.index.i]) << ',' << csv_field(mapping.days()[e.index.j]) << ',' << e.index.k << ','
       << format_fixed6(e.value) << '\n';
  }
  write_file_atomic(path, os.str());
}

std::size_t SyntheticSpec::observed_count() const {
  return static_cast<std::size_t>(std::floor(observed_fraction * static_cast<double>(dims.cells()) + 1e-9));
}

void SyntheticSpec::validate() const {
  if (dims.i == 0 || dims.j == 0 || dims.k == 0) throw ConfigError("dataset_io: synthetic dims must be positive");
  if (ranks.r1 == 0 || ranks.r2 == 0 || ranks.r3 == 0) throw ConfigError("dataset_io: synthetic ranks must be at least 1");
  if (!(observed_fraction > 0.0 && observed_fraction <= 1.0)) {
    throw ConfigError("dataset_io: observed_fraction must lie in (0, 1]");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("dataset_io: noise_sigma must be >= 0");
  if (!std::isfinite(value_offset)) throw ConfigError("dataset_io: value_offset must be finite");
  if (observed_count() < 10) {
    throw ConfigError("dataset_io: observed_fraction leaves fewer than 10 observed cells");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TuckerFactors truth = TuckerFactors::zeros(spec.dims, spec.ranks, spec.value_offset);
  const double core_scale = 1.0 / std::sqrt(static_cast<double>(spec.ranks.core_size()));
  for (double& x : truth.U) x = 1.0 - unit(rng);
  for (double& x : truth.D) x = 1.0 - unit(rng);
  for (double& x : truth.T) x = 1.0 - unit(rng);
  for (double& x : truth.G) x = core_scale * (1.0 - unit(rng));
  for (auto* bias : {&truth.a, &truth.b, &truth.c})
    for (double& x : *bias) x = 0.5 - unit(rng);

  const std::size_t cells = spec.dims.cells();
  std::vector<std::uint64_t> all(cells);
  std::iota(all.begin(), all.end(), std::uint64_t{0});
  std::vector<std::uint64_t> picked;
  picked.reserve(spec.observed_count());
  std::sample(all.begin(), all.end(), std::back_inserter(picked), spec.observed_count(), rng);

  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  std::vector<Entry> entries;
  entries.reserve(picked.size());
  const std::uint64_t jk = spec.dims.j * spec.dims.k;
  for (std::uint64_t off : picked) {
    const EntryIndex idx{off / jk, (off % jk) / spec.dims.k, off % spec.dims.k};
    double y = predict(truth, idx);
    if (spec.noise_sigma > 0.0) y += noise(rng);
    entries.push_back({idx, y});
  }
  return {SparseTensor::from_entries(spec.dims, std::move(entries)), std::move(truth)};
}

std::string imputed_csv(const TuckerFactors& f, std::span<const EntryIndex> targets, const IndexMapping& mapping) {
  if (!(mapping.dims() == f.dims)) {
    const Dims m = mapping.dims();
    std::ostringstream os;
    os << "dataset_io: mapping dims (" << m.i << "," << m.j << "," << m.k << ") do not match model dims (" << f.dims.i
       << "," << f.dims.j << "," << f.dims.k << ")";
    throw DataError(os.str());
  }
  std::ostringstream os;
  os << "segment_id,day,slot,predicted_speed\n";
  for (const EntryIndex& idx : targets) {
    const double value = predict(f, idx);
    os << csv_field(mapping.segments()[idx.i]) << ',' << csv_field(mapping.days()[idx.j]) << ',' << idx.k << ',' << format_fixed6(value)
       << '\n';
  }
  return os.str();
}

void export_imputed(const TuckerFactors& f, std::span<const EntryIndex> targets, const IndexMapping& mapping,
                    const std::filesystem::path& path) {
  write_file_atomic(path, imputed_csv(f, targets, mapping));
}

}  // namespace tuckerpid

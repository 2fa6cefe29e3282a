#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tuckerpid/sparse_tensor.hpp"
#include "tuckerpid/tucker_model.hpp"

namespace tuckerpid {

/// Which CSV columns hold the four fields of a speed record.
struct CsvSchema {
  std::string segment_col = "segment";
  std::string day_col = "day";
  std::string slot_col = "slot";
  std::string speed_col = "speed";
  std::size_t slots_per_day = 288;  // five-minute slots
};

/// Bidirectional map between original segment/day identifiers and tensor
/// indices. Identifiers are kept verbatim as strings; index order is numeric
/// when every identifier of a mode is an integer and lexicographic otherwise.
class IndexMapping {
 public:
  IndexMapping() = default;
  IndexMapping(std::vector<std::string> segments, std::vector<std::string> days, std::size_t slots_per_day);

  /// Builds the deterministic sorted assignment from unordered identifiers.
  static IndexMapping from_ids(std::vector<std::string> segments, std::vector<std::string> days,
                               std::size_t slots_per_day);
  /// Identity mapping whose identifiers are "0", "1", ...
  static IndexMapping identity(const Dims& dims);

  Dims dims() const noexcept { return {segments_.size(), days_.size(), slots_per_day_}; }
  const std::vector<std::string>& segments() const noexcept { return segments_; }
  const std::vector<std::string>& days() const noexcept { return days_; }
  std::size_t slots_per_day() const noexcept { return slots_per_day_; }

  /// Throw DataError for unknown identifiers.
  std::size_t segment_index(const std::string& id) const;
  std::size_t day_index(const std::string& id) const;

  nlohmann::json to_json() const;
  static IndexMapping from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static IndexMapping load(const std::filesystem::path& path);

  friend bool operator==(const IndexMapping& x, const IndexMapping& y) {
    return x.segments_ == y.segments_ && x.days_ == y.days_ && x.slots_per_day_ == y.slots_per_day_;
  }

 private:
  void build_lookup();

  std::vector<std::string> segments_;
  std::vector<std::string> days_;
  std::size_t slots_per_day_ = 0;
  std::unordered_map<std::string, std::size_t> segment_lookup_;
  std::unordered_map<std::string, std::size_t> day_lookup_;
};

struct LoadedDataset {
  SparseTensor tensor;
  IndexMapping mapping;
};

/// Reads a UTF-8 CSV with a header row. Entries keep file order. Errors
/// (DataError) name the 1-based line: malformed rows, slots outside
/// [0, slots_per_day), negative or non-finite speeds, repeated
/// (segment, day, slot) triples.
LoadedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// As above, but indices come from a fixed mapping; identifiers missing from
/// it are data errors.
LoadedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, const IndexMapping& mapping);

/// Cells listed in a CSV with segment/day/slot columns (the speed column is
/// not required), resolved through the mapping. A header-only file yields an
/// empty list.
std::vector<EntryIndex> load_targets_csv(const std::filesystem::path& path, const CsvSchema& schema,
                                         const IndexMapping& mapping);

/// Writes `segment,day,slot,speed` rows (schema column names) with six-decimal values.
void write_csv(const SparseTensor& tensor, const IndexMapping& mapping, const CsvSchema& schema,
               const std::filesystem::path& path);

struct SyntheticSpec {
  Dims dims{20, 15, 30};
  Ranks ranks{3, 3, 3};
  double observed_fraction = 0.10;
  double noise_sigma = 0.01;
  double value_offset = 2.0;
  std::uint64_t seed = 0;

  /// floor(observed_fraction * cells), the number of stored entries.
  std::size_t observed_count() const;
  void validate() const;
};

struct SyntheticData {
  SparseTensor tensor;
  TuckerFactors truth;
};

/// Samples a ground-truth biased Tucker model (factor rows uniform on (0,1],
/// core uniform on (0,1] scaled by 1/sqrt(r1 r2 r3), biases uniform on
/// (-0.5,0.5], mu = value_offset), picks observed cells uniformly without
/// replacement and stores predict + N(0, noise_sigma^2) at each. Entries are
/// in row-major cell order.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// `segment_id,day,slot,predicted_speed` rows in original identifiers.
/// Throws DataError when the mapping and the model disagree on dims.
void export_imputed(const TuckerFactors& f, std::span<const EntryIndex> targets, const IndexMapping& mapping,
                    const std::filesystem::path& path);
std::string imputed_csv(const TuckerFactors& f, std::span<const EntryIndex> targets, const IndexMapping& mapping);

}  // namespace tuckerpid

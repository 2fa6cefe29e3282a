#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tuckerpid {

/// Shape of a 3-mode tensor: road segments x days x time slots.
struct Dims {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;

  std::size_t cells() const noexcept { return i * j * k; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Zero-based coordinate of one cell.
struct EntryIndex {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;

  friend bool operator==(const EntryIndex&, const EntryIndex&) = default;
};

inline bool in_bounds(const Dims& dims, const EntryIndex& idx) noexcept {
  return idx.i < dims.i && idx.j < dims.j && idx.k < dims.k;
}

/// Row-major linear offset of a cell, (i * J + j) * K + k.
inline std::uint64_t linear_offset(const Dims& dims, const EntryIndex& idx) noexcept {
  return (static_cast<std::uint64_t>(idx.i) * dims.j + idx.j) * dims.k + idx.k;
}

struct Entry {
  EntryIndex index;
  double value = 0.0;
  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Input row for SparseTensor::from_records.
struct Record {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;
  double value = 0.0;
};

/// Known entries of a high-dimensional incomplete 3-mode tensor, stored as a
/// coordinate list in insertion order. Entry positions are stable for the
/// lifetime of the tensor; everything downstream (splits, per-entry PID
/// memory) refers to entries by position. Immutable after construction.
class SparseTensor {
 public:
  /// Validates bounds, uniqueness and finiteness of every record. Throws
  /// DataError naming the offending record (and for duplicates, both
  /// positions); ConfigError if a dimension is zero.
  static SparseTensor from_records(Dims dims, std::span<const Record> records);
  static SparseTensor from_entries(Dims dims, std::vector<Entry> entries);

  const Dims& dims() const noexcept { return dims_; }
  std::span<const Entry> entries() const noexcept { return entries_; }
  const Entry& operator[](std::size_t pos) const { return entries_.at(pos); }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// |known| / (|I| |J| |K|).
  double density() const noexcept;

  /// Mean stored value over the given positions. Throws DataError when empty.
  double mean_value(std::span<const std::size_t> positions) const;

 private:
  SparseTensor(Dims dims, std::vector<Entry> entries) : dims_(dims), entries_(std::move(entries)) {}

  Dims dims_;
  std::vector<Entry> entries_;
};

struct SplitRatios {
  double train = 0.08;
  double validation = 0.02;
  double test = 0.90;
};

/// Disjoint partition of entry positions into train / validation / test.
/// Each part is sorted ascending.
struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Seeded uniform random partition. Part sizes are floor(n * ratio) for train
/// and validation; the remainder goes to test. Throws ConfigError for
/// invalid ratios and DataError when any part would be empty.
DataSplit split(const SparseTensor& tensor, const SplitRatios& ratios, std::uint64_t seed);

/// Every cell of the grid that is not stored in the tensor, in row-major order.
std::vector<EntryIndex> missing_cells(const SparseTensor& tensor);

}  // namespace tuckerpid

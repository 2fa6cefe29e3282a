#include "tuckerpid/sparse_tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "tuckerpid/errors.hpp"

namespace tuckerpid {

namespace {

std::string describe(const EntryIndex& idx) {
  std::ostringstream os;
  os << "(" << idx.i << "," << idx.j << "," << idx.k << ")";
  return os.str();
}

void check_dims(const Dims& dims) {
  if (dims.i == 0 || dims.j == 0 || dims.k == 0) {
    throw ConfigError("sparse_tensor: dimensions must be positive");
  }
}

// Floor of n * ratio, tolerant of representation error such as 0.29 * 100.
std::size_t part_size(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

}  // namespace

SparseTensor SparseTensor::from_entries(Dims dims, std::vector<Entry> entries) {
  check_dims(dims);
  std::unordered_map<std::uint64_t, std::size_t> seen;
  seen.reserve(entries.size());
  for (std::size_t pos = 0; pos < entries.size(); ++pos) {
    const Entry& e = entries[pos];
    if (!in_bounds(dims, e.index)) {
      std::ostringstream os;
      os << "sparse_tensor: record " << pos << " index " << describe(e.index)
         << " out of bounds for dims (" << dims.i << "," << dims.j << "," << dims.k << ")";
      throw DataError(os.str());
    }
    if (!std::isfinite(e.value)) {
      std::ostringstream os;
      os << "sparse_tensor: record " << pos << " at " << describe(e.index) << " has non-finite value";
      throw DataError(os.str());
    }
    auto [it, inserted] = seen.emplace(linear_offset(dims, e.index), pos);
    if (!inserted) {
      std::ostringstream os;
      os << "sparse_tensor: duplicate index " << describe(e.index) << " at records " << it->second
         << " and " << pos;
      throw DataError(os.str());
    }
  }
  return SparseTensor(dims, std::move(entries));
}

SparseTensor SparseTensor::from_records(Dims dims, std::span<const Record> records) {
  std::vector<Entry> entries;
  entries.reserve(records.size());
  for (const Record& r : records) entries.push_back(Entry{{r.i, r.j, r.k}, r.value});
  return from_entries(dims, std::move(entries));
}

double SparseTensor::density() const noexcept {
  return static_cast<double>(entries_.size()) / static_cast<double>(dims_.cells());
}

double SparseTensor::mean_value(std::span<const std::size_t> positions) const {
  if (positions.empty()) throw DataError("sparse_tensor: mean over an empty position set");
  double sum = 0.0;
  for (std::size_t pos : positions) sum += entries_.at(pos).value;
  return sum / static_cast<double>(positions.size());
}

DataSplit split(const SparseTensor& tensor, const SplitRatios& ratios, std::uint64_t seed) {
  if (!(ratios.train > 0.0 && ratios.validation > 0.0 && ratios.test > 0.0)) {
    throw ConfigError("sparse_tensor: split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("sparse_tensor: split ratios must sum to 1");
  }
  const std::size_t n = tensor.size();
  const std::size_t n_train = part_size(n, ratios.train);
  const std::size_t n_val = part_size(n, ratios.validation);
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    std::ostringstream os;
    os << "sparse_tensor: " << n << " entries are too few for split ratios (" << ratios.train << ","
       << ratios.validation << "," << ratios.test << "); a part would be empty";
    throw DataError(os.str());
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  DataSplit out;
  const auto train_end = perm.begin() + static_cast<std::ptrdiff_t>(n_train);
  const auto val_end = train_end + static_cast<std::ptrdiff_t>(n_val);
  out.train.assign(perm.begin(), train_end);
  out.validation.assign(train_end, val_end);
  out.test.assign(val_end, perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<EntryIndex> missing_cells(const SparseTensor& tensor) {
  const Dims& dims = tensor.dims();
  std::vector<bool> known(dims.cells(), false);
  for (const Entry& e : tensor.entries()) known[linear_offset(dims, e.index)] = true;
  std::vector<EntryIndex> out;
  out.reserve(dims.cells() - tensor.size());
  for (std::size_t i = 0; i < dims.i; ++i)
    for (std::size_t j = 0; j < dims.j; ++j)
      for (std::size_t k = 0; k < dims.k; ++k)
        if (!known[linear_offset(dims, {i, j, k})]) out.push_back({i, j, k});
  return out;
}

}  // namespace tuckerpid

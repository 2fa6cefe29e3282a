#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "tuckerpid/tucker_model.hpp"

namespace tuckerpid {

// Binary checkpoint layout, all fields little-endian:
//
//   offset  size  field
//   0       8     magic "TPIDCKP1"
//   8       24    dims  |I|, |J|, |K|   (uint64 x 3)
//   32      24    ranks r1, r2, r3      (uint64 x 3)
//   56      8     mu                    (float64)
//   64      ...   U, D, T, G, a, b, c   (float64, row-major, in that order)
//
// The JSON form carries the same fields under the keys "dims", "ranks", "mu",
// "U", "D", "T", "G", "a", "b", "c", with every array flattened row-major.

inline constexpr char kCheckpointMagic[8] = {'T', 'P', 'I', 'D', 'C', 'K', 'P', '1'};

std::string encode_checkpoint(const TuckerFactors& f);
TuckerFactors decode_checkpoint(const std::string& bytes);

void save_checkpoint(const TuckerFactors& f, const std::filesystem::path& path);
TuckerFactors load_checkpoint(const std::filesystem::path& path);

nlohmann::json checkpoint_to_json(const TuckerFactors& f);
TuckerFactors checkpoint_from_json(const nlohmann::json& j);

}  // namespace tuckerpid

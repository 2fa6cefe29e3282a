#include "tuckerpid/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>

#include "tuckerpid/errors.hpp"
#include "tuckerpid/file_util.hpp"

namespace tuckerpid {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    if (bytes_.size() - pos_ < 8) throw DataError("checkpoint: truncated data");
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void fill(std::vector<double>& v) {
    for (double& x : v) x = f64();
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

// The payload must hold exactly the buffers the header describes.
void check_header(const Dims& dims, const Ranks& ranks, std::size_t payload_bytes) {
  if (dims.i == 0 || dims.j == 0 || dims.k == 0 || ranks.r1 == 0 || ranks.r2 == 0 || ranks.r3 == 0) {
    throw DataError("checkpoint: zero dimension or rank in header");
  }
  __extension__ typedef unsigned __int128 Wide;
  const Wide values = Wide{dims.i} * ranks.r1 + Wide{dims.j} * ranks.r2 + Wide{dims.k} * ranks.r3 +
                      Wide{ranks.r1} * ranks.r2 * ranks.r3 + dims.i + dims.j + dims.k;
  if (values * 8 != payload_bytes) throw DataError("checkpoint: payload size does not match header");
}

std::vector<double> json_array(const nlohmann::json& j, const char* key, std::size_t expected) {
  if (!j.contains(key) || !j.at(key).is_array()) throw DataError(std::string("checkpoint: missing array '") + key + "'");
  auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != expected) throw DataError(std::string("checkpoint: array '") + key + "' has the wrong length");
  return v;
}

}  // namespace

std::string encode_checkpoint(const TuckerFactors& f) {
  f.validate();
  std::string out;
  out.reserve(64 + 8 * (f.U.size() + f.D.size() + f.T.size() + f.G.size() + f.a.size() + f.b.size() + f.c.size()));
  out.append(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(out, f.dims.i);
  put_u64(out, f.dims.j);
  put_u64(out, f.dims.k);
  put_u64(out, f.ranks.r1);
  put_u64(out, f.ranks.r2);
  put_u64(out, f.ranks.r3);
  put_f64(out, f.mu);
  for (const auto* v : {&f.U, &f.D, &f.T, &f.G, &f.a, &f.b, &f.c})
    for (double x : *v) put_f64(out, x);
  return out;
}

TuckerFactors decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 64 || !std::equal(kCheckpointMagic, kCheckpointMagic + 8, bytes.begin())) {
    throw DataError("checkpoint: bad magic or truncated header");
  }
  const std::string body = bytes.substr(8);
  Reader rd(body);
  Dims dims{rd.u64(), rd.u64(), rd.u64()};
  Ranks ranks{rd.u64(), rd.u64(), rd.u64()};
  check_header(dims, ranks, bytes.size() - 64);
  TuckerFactors f = TuckerFactors::zeros(dims, ranks, rd.f64());
  for (auto* v : {&f.U, &f.D, &f.T, &f.G, &f.a, &f.b, &f.c}) rd.fill(*v);
  if (!rd.done()) throw DataError("checkpoint: trailing bytes after payload");
  f.validate();
  return f;
}

void save_checkpoint(const TuckerFactors& f, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(f));
}

TuckerFactors load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

nlohmann::json checkpoint_to_json(const TuckerFactors& f) {
  f.validate();
  nlohmann::json j;
  j["dims"] = {f.dims.i, f.dims.j, f.dims.k};
  j["ranks"] = {f.ranks.r1, f.ranks.r2, f.ranks.r3};
  j["mu"] = f.mu;
  j["U"] = f.U;
  j["D"] = f.D;
  j["T"] = f.T;
  j["G"] = f.G;
  j["a"] = f.a;
  j["b"] = f.b;
  j["c"] = f.c;
  return j;
}

TuckerFactors checkpoint_from_json(const nlohmann::json& j) {
  try {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    const auto ranks = j.at("ranks").get<std::vector<std::size_t>>();
    if (dims.size() != 3 || ranks.size() != 3) throw DataError("checkpoint: dims and ranks need three entries");
    TuckerFactors f = TuckerFactors::zeros({dims[0], dims[1], dims[2]}, {ranks[0], ranks[1], ranks[2]},
                                           j.at("mu").get<double>());
    f.U = json_array(j, "U", f.U.size());
    f.D = json_array(j, "D", f.D.size());
    f.T = json_array(j, "T", f.T.size());
    f.G = json_array(j, "G", f.G.size());
    f.a = json_array(j, "a", f.a.size());
    f.b = json_array(j, "b", f.b.size());
    f.c = json_array(j, "c", f.c.size());
    f.validate();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace tuckerpid

#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tuckerpid/checkpoint.hpp"
#include "tuckerpid/errors.hpp"

using namespace tuckerpid;

TEST(Checkpoint, HeaderLayout) {
  auto f = TuckerFactors::zeros({2, 3, 4}, {1, 2, 1}, 1.25);
  f.U[0] = 0.5;
  const std::string bytes = encode_checkpoint(f);
  ASSERT_EQ(bytes.size(), 64u + 8u * (2 + 6 + 4 + 2 + 2 + 3 + 4));
  EXPECT_EQ(bytes.substr(0, 8), "TPIDCKP1");
  std::uint64_t word;
  std::memcpy(&word, bytes.data() + 8, 8);
  EXPECT_EQ(word, 2u);
  std::memcpy(&word, bytes.data() + 40, 8);
  EXPECT_EQ(word, 2u);  // r2
  double mu;
  std::memcpy(&mu, bytes.data() + 56, 8);
  EXPECT_EQ(mu, 1.25);
  double u0;
  std::memcpy(&u0, bytes.data() + 64, 8);
  EXPECT_EQ(u0, 0.5);
}

// Property: binary and JSON encodings both reproduce every bit.
TEST(Checkpoint, RoundTripsBitExactly) {
  std::mt19937_64 rng(3);
  fixture::TempDir dir;
  for (int trial = 0; trial < 10; ++trial) {
    const Dims dims{1 + rng() % 6, 1 + rng() % 6, 1 + rng() % 6};
    const Ranks ranks{1 + rng() % 3, 1 + rng() % 3, 1 + rng() % 3};
    const auto f = oracle::random_factors(dims, ranks, rng(), (rng() % 1000) / 7.0);
    EXPECT_EQ(decode_checkpoint(encode_checkpoint(f)), f);
    EXPECT_EQ(checkpoint_from_json(nlohmann::json::parse(checkpoint_to_json(f).dump())), f);
    save_checkpoint(f, dir / "m.ckpt");
    EXPECT_EQ(load_checkpoint(dir / "m.ckpt"), f);
  }
}

TEST(Checkpoint, CorruptInputRejected) {
  const auto f = oracle::random_factors({2, 2, 2}, {1, 1, 1}, 1);
  std::string bytes = encode_checkpoint(f);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 8)), DataError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), DataError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), DataError);
  std::string huge = bytes;
  const std::uint64_t big = std::uint64_t{1} << 40;
  std::memcpy(huge.data() + 8, &big, 8);
  EXPECT_THROW(decode_checkpoint(huge), DataError);
  auto j = checkpoint_to_json(f);
  j["U"].push_back(1.0);
  EXPECT_THROW(checkpoint_from_json(j), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), DataError);
}

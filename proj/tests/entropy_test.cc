#include "ilic/entropy.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "ilic/codec.h"
#include "ilic/nn.h"
#include "ilic/tensor.h"

namespace ilic {
namespace {

void expect_valid(const FrequencyTable& t) {
  ASSERT_GE(t.cum.size(), 2u);
  EXPECT_EQ(t.cum.front(), 0u);
  EXPECT_EQ(t.total(), kFreqTotal);
  for (std::size_t i = 0; i < t.entries(); ++i) EXPECT_GE(t.count(i), 1u);
}

// Random table over a random range, optionally with a point mass.
FrequencyTable random_table(Rng& rng, bool escape = true) {
  const int n = 1 + int(rng.below(40));
  const int lo = -20 + int(rng.below(30));
  std::vector<double> p(static_cast<std::size_t>(n));
  const int mode = int(rng.below(4));
  if (mode == 0) {
    p[rng.below(p.size())] = 1.0;
  } else {
    double s = 0.0;
    for (auto& v : p) s += v = -std::log(rng.uniform_open());
    const double keep = mode == 1 ? 0.9 : 1.0;
    for (auto& v : p) v *= keep / s;
  }
  return build_freq_table(p, lo, escape);
}

long long draw(const FrequencyTable& t, Rng& rng) {
  // Mostly in range, sometimes far outside to hit the escape path.
  if (t.escape && rng.below(20) == 0) {
    const long long extremes[] = {std::numeric_limits<std::int32_t>::min(),
                                  std::numeric_limits<std::int32_t>::max(), -1000, 1000,
                                  t.sym_min - 1LL, t.sym_max + 1LL};
    return extremes[rng.below(6)];
  }
  return t.sym_min + (long long)rng.below(std::size_t(t.sym_max - t.sym_min + 1));
}

TEST(FreqTable, UniformFourSymbolsAreEqual) {
  const double p[4] = {0.25, 0.25, 0.25, 0.25};
  auto t = build_freq_table(p, 0, false);
  expect_valid(t);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(t.count(i), 16384u);
  auto te = build_freq_table(p, 0, true);
  expect_valid(te);
  EXPECT_EQ(te.entries(), 5u);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_NEAR(double(te.count(i)), double(te.count(0)), 3.0);
}

TEST(FreqTable, PointMassLeavesFloorElsewhere) {
  const double p[5] = {0, 0, 1, 0, 0};
  auto t = build_freq_table(p, -2, true);
  expect_valid(t);
  EXPECT_EQ(t.count(2), kFreqTotal - 5);
  for (std::size_t i : {0u, 1u, 3u, 4u, 5u}) EXPECT_EQ(t.count(i), 1u);
  EXPECT_EQ(t.index_of(0), 2);
  EXPECT_EQ(t.index_of(3), 5);
  EXPECT_EQ(t.index_of(-3), 5);
}

TEST(FreqTable, GaussianTablesAreValid) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double mu = rng.uniform(-300, 300), sigma = std::exp(rng.uniform(-4, 5));
    auto t = gaussian_table(mu, sigma);
    expect_valid(t);
    EXPECT_GE(t.sym_min, kSymbolMin);
    EXPECT_LE(t.sym_max, kSymbolMax);
    EXPECT_TRUE(t.escape);
    auto l = logistic_table(mu, sigma);
    expect_valid(l);
  }
}

TEST(FreqTable, CountsFollowFloorRule) {
  for (double sigma : {0.5, 2.0, 10.0}) {
    auto t = gaussian_table(0.3, sigma);
    const double free = double(kFreqTotal - t.entries());
    std::size_t mode = std::size_t(t.index_of(0));
    for (int k = t.sym_min; k <= t.sym_max; ++k) {
      const double p = gaussian_prob(k, 0.3, sigma);
      const auto i = std::size_t(t.index_of(k));
      if (i == mode) {
        EXPECT_GE(t.count(i), 1u + std::uint32_t(std::floor(p * free)));
      } else {
        EXPECT_EQ(t.count(i), 1u + std::uint32_t(std::floor(p * free))) << sigma << " " << k;
      }
      if (p > 0.01) EXPECT_NEAR(t.cost_bits(k), bits_of(p), 0.05);
    }
  }
}

TEST(FreqTable, Errors) {
  EXPECT_THROW(build_freq_table(std::span<const double>{}, 0), Error);
  const double bad[2] = {0.5, std::nan("")};
  EXPECT_THROW(build_freq_table(bad, 0), Error);
  EXPECT_THROW(gaussian_table(0.0, 0.0), Error);
  EXPECT_THROW(gaussian_table(std::nan(""), 1.0), Error);
}

TEST(RangeCoder, RoundTripHundredThousandSymbols) {
  Rng rng(11);
  std::vector<FrequencyTable> pool;
  for (int i = 0; i < 64; ++i) pool.push_back(random_table(rng));
  const std::size_t n = 100000;
  std::vector<FrequencyTable> tables;
  std::vector<long long> syms;
  for (std::size_t i = 0; i < n; ++i) {
    tables.push_back(pool[rng.below(pool.size())]);
    syms.push_back(draw(tables.back(), rng));
  }
  auto bytes = range_encode(syms, tables);
  EXPECT_EQ(range_decode(bytes, tables, n), syms);
}

TEST(RangeCoder, ThousandRandomRoundTrips) {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = rng.below(300);
    std::vector<FrequencyTable> tables;
    std::vector<long long> syms;
    for (std::size_t i = 0; i < n; ++i) {
      tables.push_back(random_table(rng, rng.below(4) != 0));
      syms.push_back(draw(tables.back(), rng));
    }
    auto bytes = range_encode(syms, tables);
    ASSERT_EQ(range_decode(bytes, tables, n), syms) << "trial " << trial;
  }
}

TEST(RangeCoder, UniformSourceNearLength) {
  std::vector<double> p(256, 1.0 / 256.0);
  const auto t = build_freq_table(p, 0, false);
  Rng rng(5);
  for (std::size_t L : {1u, 100u, 10000u}) {
    std::vector<long long> syms(L);
    for (auto& s : syms) s = (long long)rng.below(256);
    std::vector<FrequencyTable> tables(L, t);
    auto bytes = range_encode(syms, tables);
    EXPECT_LE(bytes.size(), L + 8);
    EXPECT_GE(bytes.size(), L);
    EXPECT_EQ(range_decode(bytes, tables, L), syms);
  }
}

TEST(RangeCoder, NearDeterministicSourceIsTiny) {
  // binary source with p = 0.999: entropy ~0.0114 bits per symbol
  const double p[2] = {0.999, 0.001};
  for (bool escape : {false, true}) {
    const auto t = build_freq_table(p, 0, escape);
    for (std::uint64_t seed : {6u, 7u, 8u}) {
      Rng rng(seed);
      const std::size_t L = 10000;
      std::vector<long long> syms(L, 0);
      for (auto& s : syms) s = rng.uniform() >= 0.999 ? 1 : 0;
      std::vector<FrequencyTable> tables(L, t);
      auto bytes = range_encode(syms, tables);
      EXPECT_LT(bytes.size(), 40u);
      EXPECT_EQ(range_decode(bytes, tables, L), syms);
    }
  }
}

TEST(RangeCoder, NeverBelowInformationContent) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<FrequencyTable> tables;
    std::vector<long long> syms;
    double info = 0.0;
    for (int i = 0; i < 2000; ++i) {
      tables.push_back(random_table(rng));
      syms.push_back(draw(tables.back(), rng));
      info += tables.back().cost_bits(syms.back());
    }
    auto bytes = range_encode(syms, tables);
    EXPECT_GE(8.0 * double(bytes.size()), info);
    EXPECT_LE(8.0 * double(bytes.size()), info * 1.001 + 64.0);
  }
}

TEST(RangeCoder, AdversarialTables) {
  const double pm[3] = {0.0, 1.0, 0.0};
  const auto point = build_freq_table(pm, -1, true);
  std::vector<long long> syms = {0, -1, 1, 0, std::numeric_limits<std::int32_t>::min(),
                                 std::numeric_limits<std::int32_t>::max(), 2, -2, 0};
  std::vector<FrequencyTable> tables(syms.size(), point);
  tables.push_back(gaussian_table(255.0, 0.04));
  syms.push_back(255);
  tables.push_back(gaussian_table(-400.0, 0.04));
  syms.push_back(-400);
  tables.push_back(gaussian_table(0.0, 1e6));
  syms.push_back(-255);
  auto bytes = range_encode(syms, tables);
  EXPECT_EQ(range_decode(bytes, tables, syms.size()), syms);
}

TEST(RangeCoder, RejectsUncodableValues) {
  const double p[2] = {0.5, 0.5};
  const auto no_escape = build_freq_table(p, 0, false);
  std::vector<long long> syms = {3};
  std::vector<FrequencyTable> tables = {no_escape};
  EXPECT_THROW(range_encode(syms, tables), Error);
  const auto with_escape = build_freq_table(p, 0, true);
  syms = {1LL << 40};
  tables = {with_escape};
  EXPECT_THROW(range_encode(syms, tables), Error);
  tables.clear();
  EXPECT_THROW(range_encode(syms, tables), Error);
}

TEST(RangeCoder, CorruptStreamsError) {
  Rng rng(9);
  std::vector<FrequencyTable> tables;
  std::vector<long long> syms;
  for (int i = 0; i < 500; ++i) {
    tables.push_back(random_table(rng));
    syms.push_back(draw(tables.back(), rng));
  }
  auto bytes = range_encode(syms, tables);
  // truncation
  for (std::size_t cut : {std::size_t(0), std::size_t(3), bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> b(bytes.begin(), bytes.begin() + long(cut));
    EXPECT_THROW(range_decode(b, tables, syms.size()), Error) << cut;
  }
  // trailing garbage
  auto longer = bytes;
  longer.push_back(0x5A);
  EXPECT_THROW(range_decode(longer, tables, syms.size()), Error);
  // non-zero lead byte
  auto lead = bytes;
  lead[0] = 1;
  EXPECT_THROW(range_decode(lead, tables, syms.size()), Error);
}

}  // namespace
}  // namespace ilic

// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "doctest.h"
#include "longfnt/features.hpp"
#include "model_util.hpp"
#include "test_util.hpp"

using namespace lfnt;
using lfnt::testing::TempDir;

TEST_CASE("feature files round-trip bit-exactly") {
  TempDir dir("features");
  std::mt19937_64 rng(1);
  const FeatureMatrix f = lfnt::testing::random_features(7, 16, rng);
  write_features(dir / "a.lfnt", f);
  const FeatureMatrix g = read_features(dir / "a.lfnt");
  CHECK(g.frames == 7);
  CHECK(g.dims == 16);
  CHECK(std::memcmp(f.data.data(), g.data.data(), f.data.size() * sizeof(float)) == 0);
}

TEST_CASE("feature encoding is fixed little-endian") {
  FeatureMatrix f(1, 1);
  f.at(0, 0) = 1.0f;
  const std::vector<std::uint8_t> expect{'L', 'F', 'N', 'T', 0x01, 0x00, 0x01, 0x00, 0x00, 0x00,
                                         0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x80, 0x3F};
  CHECK(encode_features(f) == expect);
}

TEST_CASE("malformed feature files raise structured errors") {
  std::mt19937_64 rng(2);
  auto bytes = encode_features(lfnt::testing::random_features(3, 4, rng));

  SUBCASE("truncated payload names both byte counts") {
    bytes.resize(bytes.size() - 5);
    try {
      decode_features(bytes, "x.lfnt");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("62") != std::string::npos);  // 14 + 3*4*4
      CHECK(msg.find("57") != std::string::npos);
    }
  }
  SUBCASE("truncated header") {
    bytes.resize(6);
    CHECK_THROWS_AS(decode_features(bytes, "x"), FormatError);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_features(bytes, "x"), doctest::Contains("magic"), FormatError);
  }
  SUBCASE("bad version") {
    bytes[4] = 2;
    CHECK_THROWS_WITH_AS(decode_features(bytes, "x"), doctest::Contains("version"), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_features("/nonexistent/longfnt.lfnt"), FormatError);
  }
}

TEST_CASE("spec_augment with zero widths is the identity") {
  std::mt19937_64 rng(3);
  const FeatureMatrix f = lfnt::testing::random_features(40, 16, rng);
  SpecAugmentConfig cfg;
  cfg.max_freq_width = 0;
  cfg.max_time_ratio = 0.0;
  CHECK(spec_augment(f, cfg, rng) == f);
}

TEST_CASE("spec_augment zeroes whole bands and spans and leaves the rest untouched") {
  std::mt19937_64 rng(4);
  FeatureMatrix f(60, 16);
  std::uniform_real_distribution<float> pos(0.5f, 2.0f);
  for (auto& v : f.data) v = pos(rng);  // strictly non-zero input
  SpecAugmentConfig cfg;
  cfg.max_time_ratio = 0.1;
  for (int draw = 0; draw < 50; ++draw) {
    const FeatureMatrix g = spec_augment(f, cfg, rng);
    std::vector<bool> col_zero(16, true), row_zero(60, true);
    for (std::size_t t = 0; t < 60; ++t) {
      for (std::size_t d = 0; d < 16; ++d) {
        const float v = g.at(t, d);
        CHECK((v == 0.0f || v == f.at(t, d)));
        if (v != 0.0f) {
          col_zero[d] = false;
          row_zero[t] = false;
        }
      }
    }
    // Every zero cell lies in a fully zeroed column or row.
    for (std::size_t t = 0; t < 60; ++t)
      for (std::size_t d = 0; d < 16; ++d)
        if (g.at(t, d) == 0.0f) CHECK((col_zero[d] || row_zero[t]));
  }
}

TEST_CASE("spec_augment masked fraction matches the closed form") {
  std::mt19937_64 rng(5);
  const std::size_t T = 100, D = 16;
  FeatureMatrix f(T, D);
  for (auto& v : f.data) v = 1.0f;
  const SpecAugmentConfig cfg;  // F = D/4, two masks each, pS = 0.05
  double zeroed = 0.0;
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) {
    for (float v : spec_augment(f, cfg, rng).data) zeroed += v == 0.0f;
  }
  const double measured = zeroed / (draws * static_cast<double>(T * D));
  const double expected = spec_augment_expected_fraction(T, D, cfg);
  CHECK(expected > 0.0);
  CHECK(std::abs(measured - expected) <= 0.1 * expected);
}

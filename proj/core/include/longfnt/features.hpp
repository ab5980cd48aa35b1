// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfnt {

/// T x D time-major 32-bit features.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t frames, std::size_t dims)
      : frames(frames), dims(dims), data(frames * dims, 0.0f) {}

  float& at(std::size_t t, std::size_t d) { return data[t * dims + d]; }
  float at(std::size_t t, std::size_t d) const { return data[t * dims + d]; }
  bool operator==(const FeatureMatrix&) const = default;
};

/// Malformed feature or embedding file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "LFNT" | u16 version=1 | u32 T | u32 D | T*D little-endian f32.
std::vector<std::uint8_t> encode_features(const FeatureMatrix& f);
FeatureMatrix decode_features(const std::vector<std::uint8_t>& bytes, const std::string& source);
void write_features(const std::filesystem::path& path, const FeatureMatrix& f);
FeatureMatrix read_features(const std::filesystem::path& path);

struct SpecAugmentConfig {
  std::size_t max_freq_width = 4;  // F
  std::size_t freq_masks = 2;
  double max_time_ratio = 0.05;  // pS
  std::size_t time_masks = 2;
};

/// Zeroes `freq_masks` bands of width U[0, F] and `time_masks` spans of
/// width U[0, floor(pS*T)].
FeatureMatrix spec_augment(const FeatureMatrix& f, const SpecAugmentConfig& cfg, std::mt19937_64& rng);

/// Closed-form expected fraction of zeroed cells under spec_augment.
double spec_augment_expected_fraction(std::size_t frames, std::size_t dims, const SpecAugmentConfig& cfg);

}  // namespace lfnt

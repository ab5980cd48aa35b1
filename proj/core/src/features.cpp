// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lfnt {

namespace {

constexpr char kMagic[4] = {'L', 'F', 'N', 'T'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 4;

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
T get(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

// Probability that a band of width U{0..max_w} placed uniformly in [0, n)
// avoids position i.
double avoid_probability(std::size_t n, std::size_t max_w, std::size_t i) {
  max_w = std::min(max_w, n);
  double p = 0.0;
  for (std::size_t w = 0; w <= max_w; ++w) {
    const std::size_t starts = n - w + 1;
    // Starts s with s <= i < s + w: s in [i-w+1, i] intersected with [0, n-w].
    const std::size_t lo = i + 1 >= w ? i + 1 - w : 0;
    const std::size_t hi = std::min(i, n - w);
    const std::size_t covering = w == 0 || lo > hi ? 0 : hi - lo + 1;
    p += (1.0 - static_cast<double>(covering) / static_cast<double>(starts)) / static_cast<double>(max_w + 1);
  }
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_features(const FeatureMatrix& f) {
  if (f.data.size() != f.frames * f.dims) throw FormatError("feature matrix size does not match T*D");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + f.data.size() * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put<std::uint16_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.frames));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.dims));
  for (float v : f.data) put<float>(out, v);
  return out;
}

FeatureMatrix decode_features(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError(source + ": truncated header, expected " + std::to_string(kHeaderBytes) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(source + ": bad magic, expected LFNT");
  const auto version = get<std::uint16_t>(bytes.data() + 4);
  if (version != kVersion) {
    throw FormatError(source + ": unsupported version " + std::to_string(version));
  }
  FeatureMatrix f;
  f.frames = get<std::uint32_t>(bytes.data() + 6);
  f.dims = get<std::uint32_t>(bytes.data() + 10);
  const std::size_t expected = kHeaderBytes + f.frames * f.dims * 4;
  if (bytes.size() != expected) {
    throw FormatError(source + ": expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  f.data.resize(f.frames * f.dims);
  std::memcpy(f.data.data(), bytes.data() + kHeaderBytes, f.data.size() * 4);
  return f;
}

void write_features(const std::filesystem::path& path, const FeatureMatrix& f) {
  const auto bytes = encode_features(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_features(bytes, path.string());
}

FeatureMatrix spec_augment(const FeatureMatrix& f, const SpecAugmentConfig& cfg, std::mt19937_64& rng) {
  FeatureMatrix out = f;
  auto band = [&](std::size_t n, std::size_t max_w, auto&& zero) {
    max_w = std::min(max_w, n);
    const std::size_t w = std::uniform_int_distribution<std::size_t>(0, max_w)(rng);
    const std::size_t s = std::uniform_int_distribution<std::size_t>(0, n - w)(rng);
    for (std::size_t i = s; i < s + w; ++i) zero(i);
  };
  for (std::size_t m = 0; m < cfg.freq_masks && f.dims > 0; ++m) {
    band(f.dims, cfg.max_freq_width, [&](std::size_t d) {
      for (std::size_t t = 0; t < f.frames; ++t) out.at(t, d) = 0.0f;
    });
  }
  const auto max_t = static_cast<std::size_t>(std::floor(cfg.max_time_ratio * static_cast<double>(f.frames)));
  for (std::size_t m = 0; m < cfg.time_masks && f.frames > 0; ++m) {
    band(f.frames, max_t, [&](std::size_t t) {
      for (std::size_t d = 0; d < f.dims; ++d) out.at(t, d) = 0.0f;
    });
  }
  return out;
}

double spec_augment_expected_fraction(std::size_t frames, std::size_t dims, const SpecAugmentConfig& cfg) {
  auto mean_kept = [](std::size_t n, std::size_t max_w, std::size_t masks) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::pow(avoid_probability(n, max_w, i), static_cast<double>(masks));
    return s / static_cast<double>(n);
  };
  const auto max_t = static_cast<std::size_t>(std::floor(cfg.max_time_ratio * static_cast<double>(frames)));
  return 1.0 - mean_kept(dims, cfg.max_freq_width, cfg.freq_masks) * mean_kept(frames, max_t, cfg.time_masks);
}

}  // namespace lfnt

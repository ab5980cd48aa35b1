// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace lfnt {

namespace {

constexpr char kMagic[4] = {'L', 'F', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void put(T v) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  template <class T>
  std::vector<T> get_array(std::size_t n) {
    need(n * sizeof(T));
    std::vector<T> v(n);
    if (n) std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  void expect_end() const {
    if (pos_ != bytes_.size()) {
      throw FormatError(source_ + ": " + std::to_string(bytes_.size() - pos_) + " trailing bytes");
    }
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(source_ + ": truncated checkpoint, needed " + std::to_string(pos_ + n) + " bytes, file has " +
                        std::to_string(bytes_.size()));
    }
  }
  const std::vector<std::uint8_t>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string shape_text(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

const ParamRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.config.size()));
  for (const auto& [k, v] : ck.config) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& p : ck.params) {
    w.put_string(p.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : p.values) w.put<float>(v);
  }
  w.put<std::uint8_t>(ck.has_optimizer ? 1 : 0);
  if (ck.has_optimizer) {
    w.put<std::uint64_t>(ck.optimizer.step);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.optimizer.moments.size()));
    for (const auto& [name, m] : ck.optimizer.moments) {
      w.put_string(name);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(m.m.size()));
      for (double x : m.m) w.put<double>(x);
      for (double x : m.v) w.put<double>(x);
    }
  }
  w.put<std::uint64_t>(ck.step);
  w.put_string(ck.rng_state);
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  Reader r(bytes, source);
  const auto magic = r.get_array<char>(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError(source + ": bad magic, expected LFCK");
  if (const auto v = r.get<std::uint16_t>(); v != kVersion) {
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ck;
  const auto n_config = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_config; ++i) {
    auto k = r.get_string();
    ck.config[k] = r.get_string();
  }
  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    ParamRecord p;
    p.name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      p.shape.push_back(r.get<std::uint32_t>());
      numel *= p.shape.back();
    }
    p.values = r.get_array<float>(numel);
    ck.params.push_back(std::move(p));
  }
  ck.has_optimizer = r.get<std::uint8_t>() != 0;
  if (ck.has_optimizer) {
    ck.optimizer.step = r.get<std::uint64_t>();
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto name = r.get_string();
      const auto size = r.get<std::uint32_t>();
      AdamMoments m;
      m.m = r.get_array<double>(size);
      m.v = r.get_array<double>(size);
      ck.optimizer.moments.emplace(std::move(name), std::move(m));
    }
  }
  ck.step = r.get<std::uint64_t>();
  ck.rng_state = r.get_string();
  r.expect_end();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_bytes(path), path.string());
}

std::vector<ParamRecord> capture_parameters(FntModel& model) {
  std::vector<ParamRecord> out;
  for (auto& [name, t] : model.named_parameters()) {
    ParamRecord p{name, t.shape(), {}};
    p.values.reserve(t.numel());
    for (double v : t.values()) p.values.push_back(static_cast<float>(v));
    out.push_back(std::move(p));
  }
  return out;
}

std::size_t load_parameters(FntModel& model, const Checkpoint& ck, const std::string& prefix) {
  std::size_t loaded = 0;
  for (auto& [name, t] : model.named_parameters()) {
    if (name.rfind(prefix, 0) != 0) continue;
    const ParamRecord* p = ck.find(name);
    if (!p) throw ShapeError("load_parameters", "checkpoint has no parameter " + name);
    if (p->shape != t.shape()) {
      throw ShapeError("load_parameters", name + ": checkpoint shape " + shape_text(p->shape) + " vs model " +
                                              shape_text(t.shape()));
    }
    dispatch(t.dtype(), [&]<class T>() {
      auto dst = t.mutable_data<T>();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(p->values[i]);
    });
    ++loaded;
  }
  return loaded;
}

std::uint64_t parameter_checksum(FntModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : capture_parameters(model)) {
    fnv(h, p.name.data(), p.name.size());
    fnv(h, p.values.data(), p.values.size() * sizeof(float));
  }
  return h;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv(h, bytes.data(), bytes.size());
  return h;
}

}  // namespace lfnt

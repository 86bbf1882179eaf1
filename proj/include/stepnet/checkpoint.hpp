#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stepnet/errors.hpp"
#include "stepnet/optimizer.hpp"

namespace stepnet {

// Versioned binary checkpoint: parameters, optimizer moments, schedule
// position and the run seed. Writing the same state twice produces identical
// bytes, which the determinism contract leans on.
struct CheckpointMeta {
  uint64_t config_hash = 0;
  uint8_t precision = 0;  // 0 single, 1 double
  uint64_t seed = 0;
  uint32_t next_epoch = 0;
  uint64_t global_step = 0;
  double best_top1 = -1.0;
};

namespace ckpt_detail {

constexpr char kMagic[4] = {'S', 'N', 'C', 'K'};
constexpr uint32_t kVersion = 1;

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void put_pod(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  put_bytes(os, &v, sizeof(T));
}

inline void get_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw IoError("checkpoint: truncated file");
}

template <class T>
T get_pod(std::istream& is) {
  T v;
  get_bytes(is, &v, sizeof(T));
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}

inline std::string get_string(std::istream& is) {
  const uint32_t n = get_pod<uint32_t>(is);
  std::string s(n, '\0');
  get_bytes(is, s.data(), n);
  return s;
}

template <class Real>
void put_tensor(std::ostream& os, const Tensor<Real>& t) {
  put_pod<uint8_t>(os, static_cast<uint8_t>(t.rank()));
  for (int64_t d = 0; d < t.rank(); ++d) put_pod<uint32_t>(os, static_cast<uint32_t>(t.dim(d)));
  put_bytes(os, t.data(), sizeof(Real) * static_cast<size_t>(t.numel()));
}

template <class Real>
Tensor<Real> get_tensor(std::istream& is) {
  const uint8_t rank = get_pod<uint8_t>(is);
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<int64_t>(get_pod<uint32_t>(is));
  Tensor<Real> t(shape);
  get_bytes(is, t.data(), sizeof(Real) * static_cast<size_t>(t.numel()));
  return t;
}

}  // namespace ckpt_detail

template <class Real>
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const ParamStore<Real>& params, AdamW<Real>& opt) {
  namespace d = ckpt_detail;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot write " + path.string());
  d::put_bytes(os, d::kMagic, 4);
  d::put_pod<uint32_t>(os, d::kVersion);
  d::put_pod<uint64_t>(os, meta.config_hash);
  d::put_pod<uint8_t>(os, meta.precision);
  d::put_pod<uint64_t>(os, meta.seed);
  d::put_pod<uint32_t>(os, meta.next_epoch);
  d::put_pod<uint64_t>(os, meta.global_step);
  d::put_pod<double>(os, meta.best_top1);
  d::put_pod<uint32_t>(os, static_cast<uint32_t>(params.entries.size()));
  for (const auto& e : params.entries) {
    d::put_string(os, e.name);
    d::put_tensor(os, e.value);
  }
  d::put_pod<uint64_t>(os, static_cast<uint64_t>(opt.step_count()));
  for (const auto& m : opt.first_moments()) d::put_tensor(os, m);
  for (const auto& v : opt.second_moments()) d::put_tensor(os, v);
  if (!os) throw IoError("checkpoint: short write to " + path.string());
}

template <class Real>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore<Real>& params,
                               AdamW<Real>& opt) {
  namespace d = ckpt_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path.string());
  char magic[4];
  d::get_bytes(is, magic, 4);
  if (std::memcmp(magic, d::kMagic, 4) != 0) throw IoError("checkpoint: bad magic");
  if (d::get_pod<uint32_t>(is) != d::kVersion) throw IoError("checkpoint: unsupported version");
  CheckpointMeta meta;
  meta.config_hash = d::get_pod<uint64_t>(is);
  meta.precision = d::get_pod<uint8_t>(is);
  const uint8_t expect_precision = sizeof(Real) == sizeof(double) ? 1 : 0;
  if (meta.precision != expect_precision) {
    throw ConfigError("checkpoint: precision mismatch with requested run precision");
  }
  meta.seed = d::get_pod<uint64_t>(is);
  meta.next_epoch = d::get_pod<uint32_t>(is);
  meta.global_step = d::get_pod<uint64_t>(is);
  meta.best_top1 = d::get_pod<double>(is);
  const uint32_t n = d::get_pod<uint32_t>(is);
  if (n != params.entries.size()) {
    throw ConfigError("checkpoint: parameter count mismatch (config drift?)");
  }
  for (auto& e : params.entries) {
    const std::string name = d::get_string(is);
    if (name != e.name) throw ConfigError("checkpoint: parameter '" + name + "' does not match model");
    Tensor<Real> value = d::get_tensor<Real>(is);
    if (value.shape() != e.value.shape()) {
      throw ConfigError("checkpoint: shape mismatch for parameter '" + name + "'");
    }
    e.value = std::move(value);
  }
  opt.set_step_count(static_cast<int64_t>(d::get_pod<uint64_t>(is)));
  for (auto& m : opt.first_moments()) m = d::get_tensor<Real>(is);
  for (auto& v : opt.second_moments()) v = d::get_tensor<Real>(is);
  return meta;
}

}  // namespace stepnet

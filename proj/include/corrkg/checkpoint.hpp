#pragma once

// Binary checkpoint, little-endian throughout:
//   magic "CRKGCKPT" | u32 version | str config_echo | u64 vocab_hash
//   | u64 step | str trainer_state | u32 count
//   | count x { str name | u32 ndims | u64 dims[ndims]
//               | f64 value[n] | f64 adam_m[n] | f64 adam_v[n] }
// where str is u64 length followed by raw bytes.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "corrkg/errors.hpp"
#include "corrkg/params.hpp"

namespace corrkg {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 8> kCheckpointMagic{'C', 'R', 'K', 'G', 'C', 'K', 'P', 'T'};

struct CheckpointMeta {
  std::string config_echo;
  std::uint64_t vocab_hash = 0;
  std::uint64_t step = 0;
  std::string trainer_state;
};

namespace detail {

class LeWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class LeReader {
 public:
  explicit LeReader(std::string bytes) : buf_(std::move(bytes)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) throw DataError("checkpoint: truncated file");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += n;
    return v;
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct StoredTensor {
  Shape shape;
  std::vector<double> value, m, v;
};

inline CheckpointMeta read_header(LeReader& r) {
  const std::string magic = r.raw(kCheckpointMagic.size());
  if (std::memcmp(magic.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw DataError("checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  CheckpointMeta meta;
  meta.config_echo = r.str();
  meta.vocab_hash = r.u64();
  meta.step = r.u64();
  meta.trainer_state = r.str();
  return meta;
}

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const ParamStore<T>& store, const CheckpointMeta& meta) {
  detail::LeWriter w;
  w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.str(meta.config_echo);
  w.u64(meta.vocab_hash);
  w.u64(store.step());
  w.str(meta.trainer_state);
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(p.value.shape().size()));
    for (auto d : p.value.shape()) w.u64(d);
    for (const Tensor<T>* t : {&p.value, &p.m, &p.v})
      for (T x : t->values()) w.f64(static_cast<double>(x));
  }
  return w.bytes();
}

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store, const CheckpointMeta& meta) {
  const std::string bytes = serialize_checkpoint(store, meta);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("checkpoint: cannot move " + tmp + " to " + path);
  }
}

/// Header fields only; tensors are skipped.
inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
  detail::LeReader r(detail::read_file(path));
  return detail::read_header(r);
}

/// Loads tensors into `store`, whose names and shapes define the expected
/// model. Any missing, extra or differently shaped tensor is an error and
/// leaves `store` untouched.
template <class T>
CheckpointMeta load_checkpoint(const std::string& path, ParamStore<T>& store) {
  detail::LeReader r(detail::read_file(path));
  CheckpointMeta meta = detail::read_header(r);
  const std::uint32_t count = r.u32();
  std::map<std::string, detail::StoredTensor> loaded;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str();
    detail::StoredTensor st;
    const std::uint32_t nd = r.u32();
    for (std::uint32_t d = 0; d < nd; ++d) st.shape.push_back(r.u64());
    const std::size_t n = shape_numel(st.shape);
    if (n > r.remaining() / 24) throw DataError("checkpoint: truncated file");
    for (auto* vec : {&st.value, &st.m, &st.v}) {
      vec->resize(n);
      for (double& x : *vec) x = r.f64();
    }
    if (!loaded.emplace(std::move(name), std::move(st)).second) {
      throw DataError("checkpoint: duplicate tensor name");
    }
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  for (const auto& [name, p] : store) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw DataError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape != p.value.shape()) {
      throw DataError("checkpoint: shape mismatch for '" + name + "': file " +
                      shape_str(it->second.shape) + " vs model " + shape_str(p.value.shape()));
    }
  }
  if (loaded.size() != store.size()) throw DataError("checkpoint: unexpected extra tensors");
  for (auto& [name, p] : store) {
    const auto& st = loaded.at(name);
    for (std::size_t i = 0; i < st.value.size(); ++i) {
      p.value[i] = static_cast<T>(st.value[i]);
      p.m[i] = static_cast<T>(st.m[i]);
      p.v[i] = static_cast<T>(st.v[i]);
    }
    p.grad.fill(T{0});
  }
  store.set_step(meta.step);
  return meta;
}

}  // namespace corrkg

#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "tnanet/model.hpp"

// Binary model file (.tnanet), all integers and floats little-endian:
//   "TNAN" | version u8 | hyperparameters | u32 record count |
//   records (u32 name length, name, u32 rank, u64 dims, f64 values) | u32 CRC-32 of everything before it
namespace tnanet {

inline constexpr std::uint8_t checkpoint_version = 1;

namespace detail_ckpt {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}
  std::uint8_t u8() { return *need(1); }
  std::uint32_t u32() {
    const auto* b = need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* b = need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    const auto* b = need(n);
    return {reinterpret_cast<const char*>(b), n};
  }
  bool done() const { return p_ == end_; }

 private:
  const std::uint8_t* need(std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n) throw DataError("checkpoint: unexpected end of data");
    const auto* b = p_;
    p_ += n;
    return b;
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

inline std::vector<NamedTensor> records_of(TnanetParams& p) {
  std::vector<NamedTensor> out;
  for (const auto& e : p.params()) out.push_back({e.name, &e.param->value});
  out.push_back({"bn1.running_mean", &p.bn1.running_mean});
  out.push_back({"bn1.running_var", &p.bn1.running_var});
  out.push_back({"bn2.running_mean", &p.bn2.running_mean});
  out.push_back({"bn2.running_var", &p.bn2.running_var});
  return out;
}

}  // namespace detail_ckpt

inline std::vector<std::uint8_t> save_checkpoint(const TnanetParams& params) {
  auto& p = const_cast<TnanetParams&>(params);  // records are only read
  detail_ckpt::Writer w;
  w.bytes("TNAN");
  w.u8(checkpoint_version);
  const HyperParams& hp = p.hp;
  for (std::uint64_t v : {hp.channels, hp.length, hp.hidden1, hp.hidden2, hp.filters, hp.classes, hp.max_epochs,
                          hp.patience}) {
    w.u64(v);
  }
  w.f64(hp.lr);
  w.f64(hp.min_delta);
  w.u8(hp.activation == Activation::sigmoid ? 1 : 0);
  const auto recs = detail_ckpt::records_of(p);
  w.u32(static_cast<std::uint32_t>(recs.size()));
  for (const auto& r : recs) {
    w.u32(static_cast<std::uint32_t>(r.name.size()));
    w.bytes(r.name);
    w.u32(static_cast<std::uint32_t>(r.tensor->rank()));
    for (auto d : r.tensor->shape()) w.u64(d);
    for (double v : r.tensor->values()) w.f64(v);
  }
  auto& buf = w.buffer();
  w.u32(detail_ckpt::crc32_of(buf.data(), buf.size()));
  return std::move(buf);
}

inline TnanetParams load_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 9) throw ChecksumError("checkpoint: file too short to carry a checksum");
  const std::size_t body = bytes.size() - 4;
  detail_ckpt::Reader tail(bytes.data() + body, 4);
  if (tail.u32() != detail_ckpt::crc32_of(bytes.data(), body)) {
    throw ChecksumError("checkpoint: checksum mismatch (file truncated or corrupted)");
  }
  detail_ckpt::Reader r(bytes.data(), body);
  if (r.bytes(4) != "TNAN") throw DataError("checkpoint: bad magic");
  const auto version = r.u8();
  if (version != checkpoint_version) {
    throw DataError(detail::concat("checkpoint: version ", static_cast<int>(version), " not supported (expected ",
                                   static_cast<int>(checkpoint_version), ")"));
  }
  HyperParams hp;
  for (std::size_t* v : {&hp.channels, &hp.length, &hp.hidden1, &hp.hidden2, &hp.filters, &hp.classes,
                         &hp.max_epochs, &hp.patience}) {
    *v = static_cast<std::size_t>(r.u64());
  }
  hp.lr = r.f64();
  hp.min_delta = r.f64();
  hp.activation = r.u8() == 1 ? Activation::sigmoid : Activation::linear;
  TnanetParams p = [&] {
    try {
      return TnanetParams(hp);
    } catch (const ConfigError& e) {
      throw DataError(detail::concat("checkpoint: inconsistent hyperparameters: ", e.what()));
    }
  }();
  auto recs = detail_ckpt::records_of(p);
  const auto count = r.u32();
  if (count != recs.size()) {
    throw DataError(detail::concat("checkpoint: ", count, " tensors stored, model needs ", recs.size()));
  }
  std::vector<bool> seen(recs.size(), false);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name = r.bytes(r.u32());
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) throw DataError(detail::concat("checkpoint: tensor ", name, " has rank ", rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    auto it = std::find_if(recs.begin(), recs.end(), [&](const auto& x) { return x.name == name; });
    if (it == recs.end()) throw DataError("checkpoint: unknown tensor " + name);
    const auto idx = static_cast<std::size_t>(it - recs.begin());
    if (seen[idx]) throw DataError("checkpoint: duplicate tensor " + name);
    seen[idx] = true;
    if (shape != it->tensor->shape()) {
      throw DataError(detail::concat("checkpoint: tensor ", name, " has shape ", shape_str(shape), ", expected ",
                                     shape_str(it->tensor->shape())));
    }
    for (auto& v : it->tensor->values()) v = r.f64();
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes after the last tensor");
  return p;
}

inline void write_checkpoint(const std::filesystem::path& path, const TnanetParams& p) {
  const auto bytes = save_checkpoint(p);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

inline TnanetParams read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_checkpoint(bytes);
}

/// Bitwise equality of every stored tensor and the hyperparameters.
inline bool same_model(const TnanetParams& a, const TnanetParams& b) {
  return save_checkpoint(a) == save_checkpoint(b);
}

}  // namespace tnanet

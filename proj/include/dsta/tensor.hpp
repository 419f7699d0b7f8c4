#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dsta/errors.hpp"

namespace dsta {

// Extents of a feature block in canonical (C, T, H, W) order.
struct Dims {
  std::size_t C = 0;
  std::size_t T = 1;
  std::size_t H = 1;
  std::size_t W = 1;

  std::size_t spatial() const { return H * W; }
  std::size_t per_channel() const { return T * H * W; }
  std::size_t numel() const { return C * T * H * W; }

  friend bool operator==(const Dims&, const Dims&) = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << C << ", " << T << ", " << H << ", " << W << ")";
    return os.str();
  }
};

// Dense rank-4 block of doubles, C-major then T, H, W.
//
// T, H and W are always >= 1. C may be 0: splitting at ratio 0 or 1 yields an
// empty channel block that concatenates back without effect.
class Tensor4 {
 public:
  Tensor4() : Tensor4(Dims{0, 1, 1, 1}) {}

  explicit Tensor4(Dims dims, double fill = 0.0) : dims_(dims) {
    check_dims(dims_);
    data_.assign(dims_.numel(), fill);
  }

  Tensor4(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != dims_.numel()) {
      throw ShapeError("Tensor4: data length " + std::to_string(data_.size()) +
                       " does not match dims " + dims_.str());
    }
  }

  static Tensor4 zeros(Dims dims) { return Tensor4(dims, 0.0); }
  static Tensor4 zeros_like(const Tensor4& other) { return Tensor4(other.dims_, 0.0); }

  const Dims& dims() const { return dims_; }
  std::size_t channels() const { return dims_.C; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const {
    return ((c * dims_.T + t) * dims_.H + h) * dims_.W + w;
  }
  double& at(std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
    return data_[index(c, t, h, w)];
  }
  double at(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const {
    return data_[index(c, t, h, w)];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  // Contiguous T*H*W slab for one channel.
  std::span<double> channel(std::size_t c) {
    return std::span<double>(data_).subspan(c * dims_.per_channel(), dims_.per_channel());
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * dims_.per_channel(), dims_.per_channel());
  }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor4& a, const Tensor4& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  static void check_dims(const Dims& d) {
    if (d.T == 0 || d.H == 0 || d.W == 0) {
      throw ShapeError("Tensor4: T, H and W must be >= 1, got " + d.str());
    }
  }

  Dims dims_;
  std::vector<double> data_;
};

// Learnable weights plus their accumulated gradient.
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  ParamTensor() = default;
  ParamTensor(std::string n, std::vector<std::size_t> s, double fill = 0.0)
      : name(std::move(n)), shape(std::move(s)) {
    const std::size_t count = numel_of(shape);
    value.assign(count, fill);
    grad.assign(count, 0.0);
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t numel() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// T4F8 binary format: "T4F8", four little-endian u64 dims (C, T, H, W), then
// C*T*H*W little-endian IEEE-754 doubles.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 8);
}

inline std::uint64_t get_u64_le(std::istream& is) {
  std::array<unsigned char, 8> b{};
  is.read(reinterpret_cast<char*>(b.data()), 8);
  if (!is) throw IoError("T4F8: truncated stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64_le(std::ostream& os, double d) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64_le(os, bits);
}

inline double get_f64_le(std::istream& is) {
  const std::uint64_t bits = get_u64_le(is);
  double d = 0.0;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

inline constexpr char kT4F8Magic[4] = {'T', '4', 'F', '8'};

inline void write_block(std::ostream& os, const std::array<std::uint64_t, 4>& dims,
                        std::span<const double> values) {
  os.write(kT4F8Magic, 4);
  for (auto d : dims) put_u64_le(os, d);
  for (double v : values) put_f64_le(os, v);
}

inline std::array<std::uint64_t, 4> read_block_header(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kT4F8Magic, 4) != 0) throw IoError("T4F8: bad magic");
  std::array<std::uint64_t, 4> dims{};
  for (auto& d : dims) d = get_u64_le(is);
  return dims;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor4& x) {
  const auto& d = x.dims();
  detail::write_block(os, {d.C, d.T, d.H, d.W}, x.data());
}

inline Tensor4 read_tensor(std::istream& is) {
  const auto d = detail::read_block_header(is);
  Tensor4 out(Dims{d[0], d[1], d[2], d[3]});
  for (double& v : out.data()) v = detail::get_f64_le(is);
  return out;
}

inline void save_tensor(const std::string& path, const Tensor4& x) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_tensor(os, x);
  if (!os) throw IoError("write failed: " + path);
}

inline Tensor4 load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  try {
    return read_tensor(is);
  } catch (const IoError& e) {
    throw IoError(std::string(e.what()) + " in " + path);
  }
}

// Parameter tensors use the same block layout; shapes of rank < 4 are padded
// with trailing 1s.
inline void write_param(std::ostream& os, const ParamTensor& p) {
  if (p.shape.size() > 4) throw ShapeError("write_param: rank > 4 for " + p.name);
  std::array<std::uint64_t, 4> dims{1, 1, 1, 1};
  for (std::size_t i = 0; i < p.shape.size(); ++i) dims[i] = p.shape[i];
  detail::write_block(os, dims, p.value);
}

inline void read_param_into(std::istream& is, ParamTensor& p) {
  const auto dims = detail::read_block_header(is);
  std::array<std::uint64_t, 4> expect{1, 1, 1, 1};
  for (std::size_t i = 0; i < p.shape.size(); ++i) expect[i] = p.shape[i];
  if (dims != expect) {
    throw ShapeError("checkpoint block for " + p.name + " does not match shape " + p.shape_str());
  }
  for (double& v : p.value) v = detail::get_f64_le(is);
  p.zero_grad();
}

}  // namespace dsta

#pragma once

// Forward and analytic backward kernels for every operation the adapters use.
// Backward kernels accumulate into ParamTensor::grad and return the gradient
// with respect to the op's input.

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "dsta/errors.hpp"
#include "dsta/tensor.hpp"

namespace dsta {

enum class Axis { Time, Height, Width };

inline const char* axis_name(Axis a) {
  switch (a) {
    case Axis::Time: return "time";
    case Axis::Height: return "height";
    case Axis::Width: return "width";
  }
  return "?";
}

namespace detail {

inline std::string shape_mismatch(const std::string& op, const std::string& a,
                                  const std::string& b) {
  return op + ": shape mismatch " + a + " vs " + b;
}

// Stride and length of `axis` inside one channel slab.
inline std::pair<std::size_t, std::size_t> axis_layout(const Dims& d, Axis axis) {
  switch (axis) {
    case Axis::Time: return {d.H * d.W, d.T};
    case Axis::Height: return {d.W, d.H};
    case Axis::Width: return {1, d.W};
  }
  return {1, 1};
}

// dst[o*s*L + a*s + i] += w * src[o*s*L + (a+off)*s + i] for every valid a.
inline void shifted_axpy(std::span<double> dst, std::span<const double> src, double w,
                         std::ptrdiff_t off, std::size_t stride, std::size_t len) {
  const std::size_t block = stride * len;
  const std::size_t outer = dst.size() / block;
  const auto L = static_cast<std::ptrdiff_t>(len);
  const std::ptrdiff_t a_begin = std::max<std::ptrdiff_t>(0, -off);
  const std::ptrdiff_t a_end = std::min<std::ptrdiff_t>(L, L - off);
  for (std::size_t o = 0; o < outer; ++o) {
    double* d = dst.data() + o * block;
    const double* s = src.data() + o * block;
    for (std::ptrdiff_t a = a_begin; a < a_end; ++a) {
      double* drow = d + static_cast<std::size_t>(a) * stride;
      const double* srow = s + static_cast<std::size_t>(a + off) * stride;
      for (std::size_t i = 0; i < stride; ++i) drow[i] += w * srow[i];
    }
  }
}

// Returns sum over valid a of x[..a+off..] * g[..a..].
inline double shifted_dot(std::span<const double> g, std::span<const double> x,
                          std::ptrdiff_t off, std::size_t stride, std::size_t len) {
  const std::size_t block = stride * len;
  const std::size_t outer = g.size() / block;
  const auto L = static_cast<std::ptrdiff_t>(len);
  const std::ptrdiff_t a_begin = std::max<std::ptrdiff_t>(0, -off);
  const std::ptrdiff_t a_end = std::min<std::ptrdiff_t>(L, L - off);
  double acc = 0.0;
  for (std::size_t o = 0; o < outer; ++o) {
    const double* gp = g.data() + o * block;
    const double* xp = x.data() + o * block;
    for (std::ptrdiff_t a = a_begin; a < a_end; ++a) {
      const double* grow = gp + static_cast<std::size_t>(a) * stride;
      const double* xrow = xp + static_cast<std::size_t>(a + off) * stride;
      for (std::size_t i = 0; i < stride; ++i) acc += grow[i] * xrow[i];
    }
  }
  return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Channel-wise fully connected: y_j = sum_i x_i W[i, j] + b_j at every (t, h, w).
// ---------------------------------------------------------------------------

inline void check_fc(const Tensor4& x, const ParamTensor& W, const ParamTensor& b) {
  if (W.shape.size() != 2 || W.shape[0] != x.channels()) {
    throw ShapeError(detail::shape_mismatch("fc_channel", "x" + x.dims().str(),
                                            "W" + W.shape_str()));
  }
  if (b.shape.size() != 1 || b.shape[0] != W.shape[1]) {
    throw ShapeError(detail::shape_mismatch("fc_channel", "W" + W.shape_str(),
                                            "b" + b.shape_str()));
  }
}

inline Tensor4 fc_channel(const Tensor4& x, const ParamTensor& W, const ParamTensor& b) {
  check_fc(x, W, b);
  const std::size_t cin = W.shape[0];
  const std::size_t cout = W.shape[1];
  Dims od = x.dims();
  od.C = cout;
  Tensor4 y(od);
  for (std::size_t j = 0; j < cout; ++j) {
    auto yj = y.channel(j);
    std::fill(yj.begin(), yj.end(), b.value[j]);
    for (std::size_t i = 0; i < cin; ++i) {
      const double w = W.value[i * cout + j];
      const auto xi = x.channel(i);
      for (std::size_t p = 0; p < yj.size(); ++p) yj[p] += xi[p] * w;
    }
  }
  return y;
}

inline Tensor4 fc_channel_backward(const Tensor4& x, ParamTensor& W, ParamTensor& b,
                                   const Tensor4& grad_y) {
  check_fc(x, W, b);
  const std::size_t cin = W.shape[0];
  const std::size_t cout = W.shape[1];
  Tensor4 gx = Tensor4::zeros_like(x);
  for (std::size_t j = 0; j < cout; ++j) {
    const auto gj = grad_y.channel(j);
    double gb = 0.0;
    for (double g : gj) gb += g;
    b.grad[j] += gb;
    for (std::size_t i = 0; i < cin; ++i) {
      const auto xi = x.channel(i);
      auto gxi = gx.channel(i);
      const double w = W.value[i * cout + j];
      double gw = 0.0;
      for (std::size_t p = 0; p < gj.size(); ++p) {
        gw += xi[p] * gj[p];
        gxi[p] += w * gj[p];
      }
      W.grad[i * cout + j] += gw;
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// GELU, exact erf form.
// ---------------------------------------------------------------------------

inline double gelu(double v) { return 0.5 * v * std::erfc(-v / std::numbers::sqrt2); }

inline double gelu_derivative(double v) {
  const double cdf = 0.5 * std::erfc(-v / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * v * v) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + v * pdf;
}

inline Tensor4 activation(const Tensor4& x) {
  Tensor4 y = Tensor4::zeros_like(x);
  const auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = gelu(xs[i]);
  return y;
}

inline Tensor4 activation_backward(const Tensor4& x, const Tensor4& grad_y) {
  Tensor4 gx = Tensor4::zeros_like(x);
  const auto xs = x.data();
  const auto gy = grad_y.data();
  auto g = gx.data();
  for (std::size_t i = 0; i < xs.size(); ++i) g[i] = gy[i] * gelu_derivative(xs[i]);
  return gx;
}

// ---------------------------------------------------------------------------
// Grouped 1-D convolution along one axis with "same" zero padding.
//
// kernel shape: [C, C/groups, k]; output channel co reads input channels of
// its group. Cross-correlation convention: y[a] = sum_j w[j] x[a + j - k/2].
// ---------------------------------------------------------------------------

inline void check_grouped_conv(const Tensor4& x, const ParamTensor& kernel,
                               const ParamTensor& bias, std::size_t groups) {
  const std::size_t C = x.channels();
  if (groups == 0 || (C != 0 && C % groups != 0)) {
    throw ConfigError("grouped conv: channel count " + std::to_string(C) +
                      " not divisible by group count " + std::to_string(groups));
  }
  const std::size_t per_group = C == 0 ? 0 : C / groups;
  // Depthwise kernels may drop the unit middle dim: [C, k].
  const bool depthwise_2d = kernel.shape.size() == 2 && per_group <= 1;
  const bool ok = depthwise_2d || (kernel.shape.size() == 3 && kernel.shape[1] == per_group);
  if (!ok || kernel.shape[0] != C) {
    throw ShapeError(detail::shape_mismatch("grouped conv", "x" + x.dims().str(),
                                            "kernel" + kernel.shape_str()));
  }
  if (kernel.shape.back() % 2 == 0) {
    throw ConfigError("grouped conv: kernel length must be odd, got " +
                      std::to_string(kernel.shape.back()));
  }
  if (bias.shape.size() != 1 || bias.shape[0] != C) {
    throw ShapeError(detail::shape_mismatch("grouped conv", "x" + x.dims().str(),
                                            "bias" + bias.shape_str()));
  }
}

inline Tensor4 grouped_conv_axis(const Tensor4& x, Axis axis, const ParamTensor& kernel,
                                 const ParamTensor& bias, std::size_t groups) {
  check_grouped_conv(x, kernel, bias, groups);
  const std::size_t C = x.channels();
  Tensor4 y = Tensor4::zeros_like(x);
  if (C == 0) return y;
  const std::size_t per_group = C / groups;
  const std::size_t k = kernel.shape.back();
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  const auto [stride, len] = detail::axis_layout(x.dims(), axis);
  for (std::size_t co = 0; co < C; ++co) {
    auto yc = y.channel(co);
    std::fill(yc.begin(), yc.end(), bias.value[co]);
    const std::size_t base = (co / per_group) * per_group;
    for (std::size_t cl = 0; cl < per_group; ++cl) {
      const auto xc = x.channel(base + cl);
      for (std::size_t j = 0; j < k; ++j) {
        const double w = kernel.value[(co * per_group + cl) * k + j];
        detail::shifted_axpy(yc, xc, w, static_cast<std::ptrdiff_t>(j) - half, stride, len);
      }
    }
  }
  return y;
}

inline Tensor4 grouped_conv_axis_backward(const Tensor4& x, Axis axis, ParamTensor& kernel,
                                          ParamTensor& bias, std::size_t groups,
                                          const Tensor4& grad_y) {
  check_grouped_conv(x, kernel, bias, groups);
  const std::size_t C = x.channels();
  Tensor4 gx = Tensor4::zeros_like(x);
  if (C == 0) return gx;
  const std::size_t per_group = C / groups;
  const std::size_t k = kernel.shape.back();
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  const auto [stride, len] = detail::axis_layout(x.dims(), axis);
  for (std::size_t co = 0; co < C; ++co) {
    const auto gy = grad_y.channel(co);
    double gb = 0.0;
    for (double g : gy) gb += g;
    bias.grad[co] += gb;
    const std::size_t base = (co / per_group) * per_group;
    for (std::size_t cl = 0; cl < per_group; ++cl) {
      const auto xc = x.channel(base + cl);
      auto gxc = gx.channel(base + cl);
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t widx = (co * per_group + cl) * k + j;
        const auto off = static_cast<std::ptrdiff_t>(j) - half;
        kernel.grad[widx] += detail::shifted_dot(gy, xc, off, stride, len);
        // y[a] reads x[a+off]  =>  gx[b] receives gy[b-off].
        detail::shifted_axpy(gxc, gy, kernel.value[widx], -off, stride, len);
      }
    }
  }
  return gx;
}

// Depthwise width-3 convolution along `axis`. kernel shape [C, 3].
inline Tensor4 conv_axis_depthwise(const Tensor4& x, Axis axis, const ParamTensor& kernel,
                                   const ParamTensor& bias) {
  if (kernel.shape.size() != 2 || kernel.shape[1] != 3) {
    throw ShapeError("conv_axis_depthwise: kernel must be [C, 3], got " + kernel.shape_str());
  }
  if (kernel.shape[0] != x.channels()) {
    throw ShapeError(detail::shape_mismatch("conv_axis_depthwise", "x" + x.dims().str(),
                                            "kernel" + kernel.shape_str()));
  }
  return grouped_conv_axis(x, axis, kernel, bias, std::max<std::size_t>(x.channels(), 1));
}

inline Tensor4 conv_axis_depthwise_backward(const Tensor4& x, Axis axis, ParamTensor& kernel,
                                            ParamTensor& bias, const Tensor4& grad_y) {
  return grouped_conv_axis_backward(x, axis, kernel, bias,
                                    std::max<std::size_t>(x.channels(), 1), grad_y);
}

// Grouped temporal convolution, kernel (k, 1, 1), m groups. kernel shape [C, C/m, k].
inline void check_dwconv_config(std::size_t C, std::size_t k, std::size_t m) {
  if (m == 0 || C % m != 0) {
    throw ConfigError("dwconv_temporal: C=" + std::to_string(C) +
                      " not divisible by group count m=" + std::to_string(m));
  }
  if (k % 2 == 0) {
    throw ConfigError("dwconv_temporal: kernel length k must be odd, got " + std::to_string(k));
  }
}

inline Tensor4 dwconv_temporal(const Tensor4& x, const ParamTensor& kernel,
                               const ParamTensor& bias, std::size_t k, std::size_t m) {
  check_dwconv_config(x.channels(), k, m);
  if (kernel.shape.back() != k) {
    throw ShapeError("dwconv_temporal: kernel " + kernel.shape_str() +
                     " does not have length k=" + std::to_string(k));
  }
  return grouped_conv_axis(x, Axis::Time, kernel, bias, m);
}

inline Tensor4 dwconv_temporal_backward(const Tensor4& x, ParamTensor& kernel, ParamTensor& bias,
                                        std::size_t k, std::size_t m, const Tensor4& grad_y) {
  check_dwconv_config(x.channels(), k, m);
  return grouped_conv_axis_backward(x, Axis::Time, kernel, bias, m, grad_y);
}

// ---------------------------------------------------------------------------
// Channel routing and elementwise ops.
// ---------------------------------------------------------------------------

// Channels routed to the first half of a split: round-half-up of ratio * C.
inline std::size_t split_count(double ratio, std::size_t C) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ConfigError("split ratio must lie in [0, 1], got " + std::to_string(ratio));
  }
  // 1e-9 absorbs representation error such as 0.7 * 10 = 6.999...
  const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(C) + 0.5 + 1e-9));
  return std::min(n, C);
}

inline Tensor4 slice_channels(const Tensor4& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.channels()) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + x.dims().str());
  }
  Dims d = x.dims();
  d.C = count;
  const std::size_t per = d.per_channel();
  const auto src = x.data().subspan(begin * per, count * per);
  return Tensor4(d, std::vector<double>(src.begin(), src.end()));
}

inline std::pair<Tensor4, Tensor4> split_channels(const Tensor4& x, double ratio) {
  const std::size_t c1 = split_count(ratio, x.channels());
  return {slice_channels(x, 0, c1), slice_channels(x, c1, x.channels() - c1)};
}

inline Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
  const Dims& da = a.dims();
  const Dims& db = b.dims();
  if (da.T != db.T || da.H != db.H || da.W != db.W) {
    throw ShapeError(detail::shape_mismatch("concat_channels", da.str(), db.str()));
  }
  Dims d = da;
  d.C = da.C + db.C;
  std::vector<double> data;
  data.reserve(d.numel());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor4(d, std::move(data));
}

inline Tensor4 add(const Tensor4& a, const Tensor4& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError(detail::shape_mismatch("add", a.dims().str(), b.dims().str()));
  }
  Tensor4 y = a;
  auto ys = y.data();
  const auto bs = b.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += bs[i];
  return y;
}

inline void check_scalar(const ParamTensor& beta) {
  if (beta.numel() != 1) throw ShapeError("scale: beta must be a scalar, got " + beta.shape_str());
}

inline Tensor4 scale(const Tensor4& x, const ParamTensor& beta) {
  check_scalar(beta);
  Tensor4 y = x;
  const double b = beta.value[0];
  for (double& v : y.data()) v *= b;
  return y;
}

inline Tensor4 scale_backward(const Tensor4& x, ParamTensor& beta, const Tensor4& grad_y) {
  check_scalar(beta);
  const auto xs = x.data();
  const auto gy = grad_y.data();
  double gb = 0.0;
  Tensor4 gx = Tensor4::zeros_like(x);
  auto g = gx.data();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    gb += xs[i] * gy[i];
    g[i] = beta.value[0] * gy[i];
  }
  beta.grad[0] += gb;
  return gx;
}

// Mean over (H, W): (C, T, H, W) -> (C, T, 1, 1).
inline Tensor4 mean_pool_spatial(const Tensor4& x) {
  const Dims& d = x.dims();
  Tensor4 y(Dims{d.C, d.T, 1, 1});
  const double inv = 1.0 / static_cast<double>(d.spatial());
  for (std::size_t c = 0; c < d.C; ++c) {
    for (std::size_t t = 0; t < d.T; ++t) {
      const double* p = x.data().data() + x.index(c, t, 0, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < d.spatial(); ++i) acc += p[i];
      y.at(c, t, 0, 0) = acc * inv;
    }
  }
  return y;
}

inline Tensor4 mean_pool_spatial_backward(const Dims& input_dims, const Tensor4& grad_y) {
  Tensor4 gx(input_dims);
  const double inv = 1.0 / static_cast<double>(input_dims.spatial());
  for (std::size_t c = 0; c < input_dims.C; ++c) {
    for (std::size_t t = 0; t < input_dims.T; ++t) {
      double* p = gx.data().data() + gx.index(c, t, 0, 0);
      const double g = grad_y.at(c, t, 0, 0) * inv;
      for (std::size_t i = 0; i < input_dims.spatial(); ++i) p[i] = g;
    }
  }
  return gx;
}

}  // namespace dsta

#pragma once

// TIA baseline, the DST block and the full DST adapter with its ablation
// ladder (+Conv T, +Conv TH, +Conv THW), plus closed-form parameter and FLOP
// accounting.

#include <array>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dsta/errors.hpp"
#include "dsta/gradcheck.hpp"
#include "dsta/ops.hpp"
#include "dsta/tape.hpp"
#include "dsta/tensor.hpp"

namespace dsta {

enum class Variant { TIA, ConvT, ConvTH, ConvTHW };

inline constexpr std::array<Variant, 4> kAllVariants = {Variant::TIA, Variant::ConvT,
                                                        Variant::ConvTH, Variant::ConvTHW};

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::TIA: return "tia";
    case Variant::ConvT: return "t";
    case Variant::ConvTH: return "th";
    case Variant::ConvTHW: return "thw";
  }
  return "?";
}

// Row labels used in the ablation tables.
inline std::string variant_label(Variant v) {
  switch (v) {
    case Variant::TIA: return "Baseline(TIA)";
    case Variant::ConvT: return "+Conv T";
    case Variant::ConvTH: return "+Conv TH";
    case Variant::ConvTHW: return "+Conv THW(DSTA)";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "tia") return Variant::TIA;
  if (s == "t" || s == "convt") return Variant::ConvT;
  if (s == "th" || s == "convth") return Variant::ConvTH;
  if (s == "thw" || s == "convthw" || s == "dsta") return Variant::ConvTHW;
  throw ConfigError("unknown adapter variant '" + s + "' (expected tia, t, th or thw)");
}

// Axes of the directional branches each variant keeps, in fusion order.
inline std::vector<Axis> branch_axes(Variant v) {
  switch (v) {
    case Variant::TIA: return {};
    case Variant::ConvT: return {Axis::Time};
    case Variant::ConvTH: return {Axis::Time, Axis::Height};
    case Variant::ConvTHW: return {Axis::Time, Axis::Height, Axis::Width};
  }
  return {};
}

inline bool has_mid(Variant v) { return v != Variant::TIA; }

struct AdapterConfig {
  std::size_t C = 0;     // external channel width
  std::size_t N = 0;     // bottleneck width, 0 < N < C
  double alpha = 0.5;    // fraction of bottleneck channels routed to branches
  std::size_t k = 3;     // temporal DWConv kernel length, odd
  std::size_t m = 0;     // DWConv group count; m == N is true depthwise
  double beta_init = 0.0;
  Variant variant = Variant::ConvTHW;

  // Defaults: k = 3, m = N, alpha = 0.5, beta_init = 0.
  static AdapterConfig make(std::size_t C, std::size_t N, Variant variant = Variant::ConvTHW,
                            double alpha = 0.5) {
    AdapterConfig cfg;
    cfg.C = C;
    cfg.N = N;
    cfg.m = N;
    cfg.alpha = alpha;
    cfg.variant = variant;
    return cfg;
  }

  void validate() const {
    if (!(N > 0 && N < C)) {
      throw ConfigError("adapter: need 0 < N < C, got C=" + std::to_string(C) +
                        " N=" + std::to_string(N));
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ConfigError("adapter: alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    if (k == 0 || k % 2 == 0) {
      throw ConfigError("adapter: DWConv kernel length k must be odd, got " + std::to_string(k));
    }
    if (m == 0 || N % m != 0) {
      throw ConfigError("adapter: DWConv group count m=" + std::to_string(m) +
                        " must divide N=" + std::to_string(N));
    }
    if (!std::isfinite(beta_init)) throw ConfigError("adapter: beta_init must be finite");
  }

  // Channels routed to the directional branches.
  std::size_t branch_channels() const { return split_count(alpha, N); }
  std::size_t dw_in_per_group() const { return N / m; }
};

// All learnable tensors of one adapter. Which optional members are present is
// fixed by the variant.
struct AdapterParams {
  ParamTensor down_w, down_b;
  std::optional<ParamTensor> mid_w, mid_b;
  ParamTensor dw_kernel, dw_bias;
  // Indexed by Axis: time, height, width.
  std::array<std::optional<ParamTensor>, 3> branch_kernel, branch_bias;
  ParamTensor up_w, up_b;
  ParamTensor beta;

  // Zero-filled tensors with the shapes `cfg` requires; beta = cfg.beta_init.
  static AdapterParams zeros(const AdapterConfig& cfg) {
    cfg.validate();
    AdapterParams p;
    p.down_w = ParamTensor("down_w", {cfg.C, cfg.N});
    p.down_b = ParamTensor("down_b", {cfg.N});
    if (has_mid(cfg.variant)) {
      p.mid_w = ParamTensor("mid_w", {cfg.N, cfg.N});
      p.mid_b = ParamTensor("mid_b", {cfg.N});
    }
    p.dw_kernel = ParamTensor("dw_kernel", {cfg.N, cfg.dw_in_per_group(), cfg.k});
    p.dw_bias = ParamTensor("dw_bias", {cfg.N});
    const std::size_t c1 = cfg.branch_channels();
    static constexpr const char* kAxisTag[3] = {"t", "h", "w"};
    for (Axis a : branch_axes(cfg.variant)) {
      const auto i = static_cast<std::size_t>(a);
      p.branch_kernel[i] = ParamTensor(std::string("branch_") + kAxisTag[i] + "_kernel", {c1, 3});
      p.branch_bias[i] = ParamTensor(std::string("branch_") + kAxisTag[i] + "_bias", {c1});
    }
    p.up_w = ParamTensor("up_w", {cfg.N, cfg.C});
    p.up_b = ParamTensor("up_b", {cfg.C});
    p.beta = ParamTensor("beta", {1}, cfg.beta_init);
    return p;
  }

  // Random weights, zero biases, beta = cfg.beta_init. Deterministic in `seed`.
  static AdapterParams random(const AdapterConfig& cfg, std::uint64_t seed) {
    AdapterParams p = zeros(cfg);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](ParamTensor& t, double stddev) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (double& v : t.value) v = dist(rng);
    };
    const auto fan = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
    fill(p.down_w, fan(cfg.C));
    if (p.mid_w) fill(*p.mid_w, fan(cfg.N));
    fill(p.dw_kernel, fan(cfg.k * cfg.dw_in_per_group()));
    for (auto& k : p.branch_kernel) {
      if (k) fill(*k, fan(3));
    }
    fill(p.up_w, fan(cfg.N));
    return p;
  }

  // Fixed declared order, also used by checkpoints.
  std::vector<ParamTensor*> all() {
    std::vector<ParamTensor*> out{&down_w, &down_b};
    if (mid_w) {
      out.push_back(&*mid_w);
      out.push_back(&*mid_b);
    }
    out.push_back(&dw_kernel);
    out.push_back(&dw_bias);
    for (std::size_t i = 0; i < 3; ++i) {
      if (branch_kernel[i]) {
        out.push_back(&*branch_kernel[i]);
        out.push_back(&*branch_bias[i]);
      }
    }
    out.push_back(&up_w);
    out.push_back(&up_b);
    out.push_back(&beta);
    return out;
  }

  std::vector<const ParamTensor*> all() const {
    auto mut = const_cast<AdapterParams*>(this)->all();
    return {mut.begin(), mut.end()};
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const ParamTensor* t : all()) n += t->numel();
    return n;
  }

  void zero_grad() {
    for (ParamTensor* t : all()) t->zero_grad();
  }
};

// ---------------------------------------------------------------------------
// Pure forward passes.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_params_match(const AdapterParams& p, const AdapterConfig& cfg) {
  const AdapterParams expect = AdapterParams::zeros(cfg);
  const auto have = p.all();
  const auto want = expect.all();
  bool ok = have.size() == want.size();
  for (std::size_t i = 0; ok && i < have.size(); ++i) ok = have[i]->shape == want[i]->shape;
  if (!ok) {
    throw ShapeError("adapter parameters do not match config (variant " +
                     variant_name(cfg.variant) + ", C=" + std::to_string(cfg.C) +
                     ", N=" + std::to_string(cfg.N) + ")");
  }
}

inline void check_input(const Tensor4& x, std::size_t C, const char* op) {
  if (x.channels() != C) {
    throw ShapeError(std::string(op) + ": input " + x.dims().str() + " expects " +
                     std::to_string(C) + " channels");
  }
}

}  // namespace detail

// DST block on the bottleneck features:
//   fused = sum of directional branch convs on the first round(alpha*N) channels
//   out   = concat(fused, remaining channels) + DWConv(all N channels)
inline Tensor4 dst_forward(const Tensor4& xbar, const AdapterParams& p, const AdapterConfig& cfg) {
  if (cfg.variant == Variant::TIA) {
    throw ConfigError("dst_forward: the TIA variant has no DST stream");
  }
  detail::check_input(xbar, cfg.N, "dst_forward");
  auto [routed, kept] = split_channels(xbar, cfg.alpha);
  std::optional<Tensor4> fused;
  for (Axis a : branch_axes(cfg.variant)) {
    const auto i = static_cast<std::size_t>(a);
    Tensor4 y = conv_axis_depthwise(routed, a, *p.branch_kernel[i], *p.branch_bias[i]);
    fused = fused ? add(*fused, y) : std::move(y);
  }
  const Tensor4 stream1 = concat_channels(*fused, kept);
  const Tensor4 stream2 = dwconv_temporal(xbar, p.dw_kernel, p.dw_bias, cfg.k, cfg.m);
  return add(stream1, stream2);
}

// x' = beta * up(mid(DST(xbar)) + xbar) + x,  xbar = gelu(down(x)).
inline Tensor4 dsta_forward(const Tensor4& x, const AdapterParams& p, const AdapterConfig& cfg) {
  cfg.validate();
  if (cfg.variant == Variant::TIA) {
    throw ConfigError("dsta_forward: use tia_forward for the TIA variant");
  }
  detail::check_params_match(p, cfg);
  detail::check_input(x, cfg.C, "dsta_forward");
  const Tensor4 xbar = activation(fc_channel(x, p.down_w, p.down_b));
  const Tensor4 xhat = add(fc_channel(dst_forward(xbar, p, cfg), *p.mid_w, *p.mid_b), xbar);
  return add(scale(fc_channel(xhat, p.up_w, p.up_b), p.beta), x);
}

// x' = beta * up(DWConv(gelu(down(x)))) + x.
inline Tensor4 tia_forward(const Tensor4& x, const AdapterParams& p, const AdapterConfig& cfg) {
  cfg.validate();
  if (cfg.variant != Variant::TIA) {
    throw ConfigError("tia_forward: config variant is " + variant_name(cfg.variant));
  }
  detail::check_params_match(p, cfg);
  detail::check_input(x, cfg.C, "tia_forward");
  const Tensor4 xbar = activation(fc_channel(x, p.down_w, p.down_b));
  const Tensor4 mixed = dwconv_temporal(xbar, p.dw_kernel, p.dw_bias, cfg.k, cfg.m);
  return add(scale(fc_channel(mixed, p.up_w, p.up_b), p.beta), x);
}

inline Tensor4 adapter_forward(const Tensor4& x, const AdapterParams& p, const AdapterConfig& cfg) {
  return cfg.variant == Variant::TIA ? tia_forward(x, p, cfg) : dsta_forward(x, p, cfg);
}

// ---------------------------------------------------------------------------
// Recorded forward passes. Same op order as the pure versions.
// ---------------------------------------------------------------------------

inline Var record_dst(Tape& tape, Var xbar, AdapterParams& p, const AdapterConfig& cfg) {
  auto [routed, kept] = tape.split_channels(xbar, cfg.alpha);
  std::optional<Var> fused;
  for (Axis a : branch_axes(cfg.variant)) {
    const auto i = static_cast<std::size_t>(a);
    Var y = tape.conv_axis_depthwise(routed, a, *p.branch_kernel[i], *p.branch_bias[i]);
    fused = fused ? tape.add(*fused, y) : y;
  }
  Var stream1 = tape.concat_channels(*fused, kept);
  Var stream2 = tape.dwconv_temporal(xbar, p.dw_kernel, p.dw_bias, cfg.k, cfg.m);
  return tape.add(stream1, stream2);
}

inline Var record_adapter(Tape& tape, Var x, AdapterParams& p, const AdapterConfig& cfg) {
  cfg.validate();
  detail::check_params_match(p, cfg);
  detail::check_input(tape.value(x), cfg.C, "adapter");
  Var xbar = tape.activation(tape.fc_channel(x, p.down_w, p.down_b));
  Var inner;
  if (cfg.variant == Variant::TIA) {
    inner = tape.dwconv_temporal(xbar, p.dw_kernel, p.dw_bias, cfg.k, cfg.m);
  } else {
    inner = tape.add(tape.fc_channel(record_dst(tape, xbar, p, cfg), *p.mid_w, *p.mid_b), xbar);
  }
  return tape.add(tape.scale(tape.fc_channel(inner, p.up_w, p.up_b), p.beta), x);
}

// ---------------------------------------------------------------------------
// Parameter and FLOP accounting.
// ---------------------------------------------------------------------------

struct ParamCount {
  std::uint64_t down = 0, mid = 0, up = 0, dwconv = 0, branches = 0, scale = 0;
  std::uint64_t total() const { return down + mid + up + dwconv + branches + scale; }
};

inline ParamCount count_params(const AdapterConfig& cfg) {
  cfg.validate();
  const std::uint64_t C = cfg.C, N = cfg.N, c1 = cfg.branch_channels();
  ParamCount pc;
  pc.down = C * N + N;
  pc.mid = has_mid(cfg.variant) ? N * N + N : 0;
  pc.up = N * C + C;
  pc.dwconv = cfg.k * N * (N / cfg.m) + N;
  pc.branches = branch_axes(cfg.variant).size() * (3 * c1 + c1);
  pc.scale = 1;
  return pc;
}

// FLOPs = 2 * MACs + one per bias add; GELU, residual/stream adds and the beta
// scale cost one FLOP per element. Concatenation and splitting are free, and
// the adds fusing the directional branches are folded into their bias adds.
struct FlopCount {
  std::uint64_t T = 0, H = 0, W = 0;
  std::uint64_t down = 0, mid = 0, up = 0, dwconv = 0, branches = 0;
  std::uint64_t activation = 0, residual = 0, scale = 0;
  std::uint64_t total() const {
    return down + mid + up + dwconv + branches + activation + residual + scale;
  }
};

inline FlopCount count_flops(const AdapterConfig& cfg, std::uint64_t T, std::uint64_t H,
                             std::uint64_t W) {
  cfg.validate();
  if (T == 0 || H == 0 || W == 0) throw ConfigError("count_flops: T, H, W must be positive");
  const std::uint64_t P = T * H * W;
  const std::uint64_t C = cfg.C, N = cfg.N, c1 = cfg.branch_channels();
  const auto fc = [P](std::uint64_t cin, std::uint64_t cout) { return 2 * cin * cout * P + cout * P; };
  FlopCount f;
  f.T = T;
  f.H = H;
  f.W = W;
  f.down = fc(C, N);
  f.activation = N * P;
  f.dwconv = 2 * cfg.k * N * (N / cfg.m) * P + N * P;
  f.up = fc(N, C);
  f.scale = C * P;
  f.residual = C * P;
  if (has_mid(cfg.variant)) {
    f.mid = fc(N, N);
    f.branches = branch_axes(cfg.variant).size() * (2 * 3 * c1 * P + c1 * P);
    f.residual += 2 * N * P;  // stream fusion and the bottleneck residual
  }
  return f;
}

// ---------------------------------------------------------------------------
// Adapter: config + params + a training tape.
// ---------------------------------------------------------------------------

class Adapter {
 public:
  Adapter(const AdapterConfig& cfg, std::uint64_t seed)
      : config_(cfg), params_(AdapterParams::random(cfg, seed)) {}
  Adapter(const AdapterConfig& cfg, AdapterParams params)
      : config_(cfg), params_(std::move(params)) {
    detail::check_params_match(params_, config_);
  }

  Adapter(const Adapter& o) : config_(o.config_), params_(o.params_) {}
  Adapter& operator=(const Adapter& o) {
    config_ = o.config_;
    params_ = o.params_;
    tape_.reset();
    return *this;
  }

  const AdapterConfig& config() const { return config_; }
  AdapterParams& params() { return params_; }
  const AdapterParams& params() const { return params_; }

  Tensor4 forward(const Tensor4& x) const { return adapter_forward(x, params_, config_); }

  // Records onto a caller-owned tape, for composing into larger models.
  Var record(Tape& tape, Var x) { return record_adapter(tape, x, params_, config_); }

  // Forward pass kept for a subsequent backward().
  Tensor4 forward_train(const Tensor4& x) {
    tape_ = std::make_unique<Tape>();
    in_ = tape_->input(x);
    out_ = record(*tape_, in_);
    return tape_->value(out_);
  }

  // Accumulates parameter gradients and returns d(loss)/d(input).
  Tensor4 backward(const Tensor4& grad_out) {
    if (!tape_) throw StateError("Adapter::backward called before forward_train");
    tape_->backward(out_, grad_out);
    return tape_->grad(in_);
  }

  void zero_grad() { params_.zero_grad(); }

 private:
  AdapterConfig config_;
  AdapterParams params_;
  std::unique_ptr<Tape> tape_;
  Var in_, out_;
};

// ---------------------------------------------------------------------------
// Checkpoint: text header of key=value lines closed by "end", followed by every
// parameter tensor as a T4F8 block in AdapterParams::all() order.
// ---------------------------------------------------------------------------

inline void write_adapter_checkpoint(std::ostream& os, const AdapterConfig& cfg,
                                     const AdapterParams& p) {
  std::ostringstream hdr;
  hdr.precision(17);
  hdr << "dsta-adapter-checkpoint v1\n"
      << "C=" << cfg.C << "\nN=" << cfg.N << "\nalpha=" << cfg.alpha << "\nk=" << cfg.k
      << "\nm=" << cfg.m << "\nbeta_init=" << cfg.beta_init
      << "\nvariant=" << variant_name(cfg.variant) << "\ntensors=" << p.all().size()
      << "\nend\n";
  os << hdr.str();
  for (const ParamTensor* t : p.all()) write_param(os, *t);
}

inline Adapter read_adapter_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "dsta-adapter-checkpoint v1") {
    throw IoError("adapter checkpoint: bad header line");
  }
  AdapterConfig cfg;
  while (std::getline(is, line) && line != "end") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("adapter checkpoint: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "C") cfg.C = std::stoull(val);
    else if (key == "N") cfg.N = std::stoull(val);
    else if (key == "alpha") cfg.alpha = std::stod(val);
    else if (key == "k") cfg.k = std::stoull(val);
    else if (key == "m") cfg.m = std::stoull(val);
    else if (key == "beta_init") cfg.beta_init = std::stod(val);
    else if (key == "variant") cfg.variant = parse_variant(val);
    else if (key == "tensors") continue;
    else throw IoError("adapter checkpoint: unknown key '" + key + "'");
  }
  if (line != "end") throw IoError("adapter checkpoint: header not terminated");
  AdapterParams p = AdapterParams::zeros(cfg);
  for (ParamTensor* t : p.all()) read_param_into(is, *t);
  return Adapter(cfg, std::move(p));
}

inline void save_adapter(const std::string& path, const Adapter& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_adapter_checkpoint(os, a.config(), a.params());
  if (!os) throw IoError("write failed: " + path);
}

inline Adapter load_adapter(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  try {
    return read_adapter_checkpoint(is);
  } catch (const IoError& e) {
    throw IoError(std::string(e.what()) + " (" + path + ")");
  }
}

// Finite-difference check of every adapter parameter. All parameters (beta
// included) and the input are drawn at random from `seed`; the loss is a fixed
// random weighting of the output elements.
inline GradcheckReport gradcheck_adapter(const AdapterConfig& cfg, std::size_t T, std::size_t H,
                                         std::size_t W, std::uint64_t seed, double h = 1e-5) {
  cfg.validate();
  AdapterParams p = AdapterParams::zeros(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (ParamTensor* t : p.all()) {
    for (double& v : t->value) v = nd(rng);
  }
  Tensor4 x(Dims{cfg.C, T, H, W});
  for (double& v : x.data()) v = nd(rng);
  Tensor4 weights(x.dims());
  for (double& v : weights.data()) v = nd(rng);

  const auto loss = [&] {
    const Tensor4 y = adapter_forward(x, p, cfg);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.data().size(); ++i) acc += weights.data()[i] * y.data()[i];
    return acc;
  };
  const auto grads = [&] {
    p.zero_grad();
    Tape tape;
    const Var out = record_adapter(tape, tape.input(x), p, cfg);
    tape.backward(out, weights);
  };
  const auto params = p.all();
  return gradcheck(loss, grads, std::span<ParamTensor* const>(params), h);
}

}  // namespace dsta

#pragma once

// Desk-scale localization experiment. Synthetic clips whose classes differ by
// direction, a frozen random conv stem, one trainable adapter, a per-frame
// linear head trained with sigmoid focal loss, threshold decoding, and scoring
// with tal_eval.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dsta/adapter.hpp"
#include "dsta/errors.hpp"
#include "dsta/ops.hpp"
#include "dsta/tal_eval.hpp"
#include "dsta/tape.hpp"
#include "dsta/tensor.hpp"

namespace dsta::synth {

enum class SynthClass : int {
  VerticalMotion = 0,
  HorizontalMotion = 1,
  TemporalFlicker = 2,
  StaticTexture = 3,
};
inline constexpr std::size_t kNumClasses = 4;

inline const char* class_name(int c) {
  static constexpr const char* kNames[] = {"vertical-motion", "horizontal-motion",
                                           "temporal-flicker", "static-texture"};
  return c >= 0 && c < 4 ? kNames[c] : "?";
}

struct SyntheticConfig {
  std::uint64_t seed = 0;
  std::size_t clips = 64;
  std::size_t T = 64;
  std::size_t H = 16;
  std::size_t W = 16;
  std::size_t C = 1;
  std::size_t min_len = 8;
  std::size_t max_len = 20;
  std::size_t max_actions = 3;
  std::size_t min_gap = 4;   // background frames between consecutive actions
  double noise = 0.1;        // uniform background noise in [-noise, noise]
  double speed = 1.0;        // pixels per frame for the moving classes

  void validate() const {
    if (clips == 0 || T == 0 || H == 0 || W == 0 || C == 0) {
      throw ConfigError("synthetic: all dims and the clip count must be positive");
    }
    if (min_len < 4 || max_len > T / 2 || min_len > max_len) {
      throw ConfigError("synthetic: action length range [" + std::to_string(min_len) + ", " +
                        std::to_string(max_len) + "] must lie within [4, T/2=" +
                        std::to_string(T / 2) + "]");
    }
    if (max_actions == 0) throw ConfigError("synthetic: max_actions must be >= 1");
    if (max_actions * min_len + (max_actions - 1) * min_gap > T) {
      throw ConfigError("synthetic: " + std::to_string(max_actions) + " actions of at least " +
                        std::to_string(min_len) + " frames do not fit in T=" + std::to_string(T));
    }
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("synthetic: bad noise amplitude");
  }
};

struct SyntheticDataset {
  std::vector<std::string> ids;
  std::vector<Tensor4> clips;
  std::vector<IntervalAnnotation> gts;  // video_id = clip id, inclusive frames
};

namespace detail {

// Gaussian blob with per-axis widths.
inline double blob(double h, double w, double ch, double cw, double sh, double sw) {
  const double dh = (h - ch) / sh;
  const double dw = (w - cw) / sw;
  return std::exp(-0.5 * (dh * dh + dw * dw));
}

// Position after `steps` moves of `speed`, reflecting inside [lo, hi].
inline double bounce(double start, double speed, double steps, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  double p = std::fmod(start - lo + speed * steps, 2.0 * span);
  if (p < 0.0) p += 2.0 * span;
  return lo + (p <= span ? p : 2.0 * span - p);
}

struct Placement {
  std::size_t start, len;
  int label;
};

inline std::vector<Placement> place_actions(const SyntheticConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> count_d(1, cfg.max_actions);
  std::uniform_int_distribution<std::size_t> len_d(cfg.min_len, cfg.max_len);
  std::uniform_int_distribution<int> label_d(0, static_cast<int>(kNumClasses) - 1);
  std::size_t n = count_d(rng);
  std::vector<std::size_t> lens;
  for (;;) {
    lens.clear();
    std::size_t used = (n - 1) * cfg.min_gap;
    for (std::size_t i = 0; i < n; ++i) {
      lens.push_back(len_d(rng));
      used += lens.back();
    }
    if (used <= cfg.T) break;
    if (n > 1 && std::uniform_int_distribution<int>(0, 3)(rng) == 0) --n;
  }
  const std::size_t slack = cfg.T - (std::accumulate(lens.begin(), lens.end(), std::size_t{0}) +
                                     (n - 1) * cfg.min_gap);
  // Split the slack into n + 1 free stretches.
  std::uniform_int_distribution<std::size_t> cut_d(0, slack);
  std::vector<std::size_t> cuts(n);
  for (auto& c : cuts) c = cut_d(rng);
  std::sort(cuts.begin(), cuts.end());
  std::vector<Placement> out;
  std::size_t pos = 0, prev_cut = 0;
  for (std::size_t i = 0; i < n; ++i) {
    pos += cuts[i] - prev_cut;
    prev_cut = cuts[i];
    out.push_back({pos, lens[i], label_d(rng)});
    pos += lens[i] + cfg.min_gap;
  }
  return out;
}

inline void render_action(Tensor4& clip, const Placement& a, const SyntheticConfig& cfg,
                          std::mt19937_64& rng) {
  const double H = static_cast<double>(cfg.H);
  const double W = static_cast<double>(cfg.W);
  const double lo_h = std::min(2.0, (H - 1) / 2), hi_h = std::max(lo_h, H - 3.0);
  const double lo_w = std::min(2.0, (W - 1) / 2), hi_w = std::max(lo_w, W - 3.0);
  std::uniform_real_distribution<double> uh(lo_h, hi_h), uw(lo_w, hi_w);
  const double dir = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
  const double h0 = uh(rng), w0 = uw(rng);
  // Moving blobs are elongated across their direction of travel.
  constexpr double kNarrow = 1.0, kWide = 2.5, kRound = 1.5;
  const auto label = static_cast<SynthClass>(a.label);
  for (std::size_t s = 0; s < a.len; ++s) {
    const std::size_t t = a.start + s;
    const double step = static_cast<double>(s);
    for (std::size_t h = 0; h < cfg.H; ++h) {
      for (std::size_t w = 0; w < cfg.W; ++w) {
        const double hh = static_cast<double>(h), ww = static_cast<double>(w);
        double v = 0.0;
        switch (label) {
          case SynthClass::VerticalMotion:
            v = blob(hh, ww, bounce(h0, dir * cfg.speed, step, lo_h, hi_h), w0, kNarrow, kWide);
            break;
          case SynthClass::HorizontalMotion:
            v = blob(hh, ww, h0, bounce(w0, dir * cfg.speed, step, lo_w, hi_w), kWide, kNarrow);
            break;
          case SynthClass::TemporalFlicker:
            v = (s % 2 == 0 ? 1.0 : 0.25) * blob(hh, ww, h0, w0, kRound, kRound);
            break;
          case SynthClass::StaticTexture: {
            const bool on = ((h + w) / 2) % 2 == 0;
            v = (on ? 1.0 : 0.3) * blob(hh, ww, h0, w0, 2.0 * kRound, 2.0 * kRound);
            break;
          }
        }
        for (std::size_t c = 0; c < cfg.C; ++c) clip.at(c, t, h, w) += v;
      }
    }
  }
}

}  // namespace detail

// Deterministic in cfg.seed. Each clip holds 1..max_actions non-overlapping
// actions over uniform background noise.
inline SyntheticDataset generate_dataset(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticDataset ds;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> noise_d(-1.0, 1.0);
  for (std::size_t i = 0; i < cfg.clips; ++i) {
    std::ostringstream id;
    id << "synth" << cfg.seed << "_" << std::setw(4) << std::setfill('0') << i;
    Tensor4 clip(Dims{cfg.C, cfg.T, cfg.H, cfg.W});
    for (double& v : clip.data()) v = cfg.noise * noise_d(rng);
    for (const auto& a : detail::place_actions(cfg, rng)) {
      detail::render_action(clip, a, cfg, rng);
      ds.gts.push_back({id.str(), static_cast<std::int64_t>(a.start),
                        static_cast<std::int64_t>(a.start + a.len - 1), a.label});
    }
    ds.ids.push_back(id.str());
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

// Per-frame binary targets, (num_classes, T, 1, 1).
inline Tensor4 frame_targets(const std::vector<IntervalAnnotation>& gts, const std::string& id,
                             std::size_t T, std::size_t num_classes = kNumClasses) {
  Tensor4 y(Dims{num_classes, T, 1, 1});
  for (const auto& g : gts) {
    if (g.video_id != id) continue;
    for (std::int64_t t = g.start; t <= g.end; ++t) {
      y.at(static_cast<std::size_t>(g.label), static_cast<std::size_t>(t), 0, 0) = 1.0;
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Frozen stem: 3x3 spatial conv (kernels symmetric under H/W transposition, so
// the stem has no orientation preference) -> GELU -> 2x2 mean pool -> 1x1
// channel mix -> GELU.
// ---------------------------------------------------------------------------

struct Stem {
  std::size_t in_channels = 1;
  std::size_t hidden = 8;
  std::size_t out_channels = 16;
  std::vector<double> kernel;  // [hidden][in][3][3]
  std::vector<double> bias;    // [hidden]
  ParamTensor mix_w, mix_b;    // [hidden, out], [out]; never trained

  static Stem random(std::size_t in_channels, std::size_t hidden, std::size_t out_channels,
                     std::uint64_t seed) {
    Stem s;
    s.in_channels = in_channels;
    s.hidden = hidden;
    s.out_channels = out_channels;
    std::mt19937_64 rng(seed ^ 0x5157e3d1ULL);
    std::normal_distribution<double> nd(0.0, 2.0 / std::sqrt(static_cast<double>(in_channels)));
    s.kernel.assign(hidden * in_channels * 9, 0.0);
    for (std::size_t o = 0; o < hidden; ++o) {
      for (std::size_t i = 0; i < in_channels; ++i) {
        double* k = s.kernel.data() + (o * in_channels + i) * 9;
        for (int a = 0; a < 3; ++a) {
          for (int b = a; b < 3; ++b) {
            k[a * 3 + b] = k[b * 3 + a] = nd(rng);
          }
        }
      }
    }
    std::normal_distribution<double> bd(0.0, 0.1);
    s.bias.resize(hidden);
    for (double& b : s.bias) b = bd(rng);
    s.mix_w = ParamTensor("stem_mix_w", {hidden, out_channels});
    s.mix_b = ParamTensor("stem_mix_b", {out_channels});
    std::normal_distribution<double> md(0.0, 2.0 / std::sqrt(static_cast<double>(hidden)));
    for (double& v : s.mix_w.value) v = md(rng);
    for (double& v : s.mix_b.value) v = bd(rng);
    return s;
  }

  Tensor4 apply(const Tensor4& clip) const {
    const Dims& d = clip.dims();
    if (d.C != in_channels) {
      throw ShapeError("stem: clip " + d.str() + " expects " + std::to_string(in_channels) +
                       " channels");
    }
    Tensor4 conv(Dims{hidden, d.T, d.H, d.W});
    for (std::size_t o = 0; o < hidden; ++o) {
      for (std::size_t t = 0; t < d.T; ++t) {
        for (std::size_t h = 0; h < d.H; ++h) {
          for (std::size_t w = 0; w < d.W; ++w) {
            double acc = bias[o];
            for (std::size_t i = 0; i < in_channels; ++i) {
              const double* k = kernel.data() + (o * in_channels + i) * 9;
              for (int a = -1; a <= 1; ++a) {
                const auto hh = static_cast<std::ptrdiff_t>(h) + a;
                if (hh < 0 || hh >= static_cast<std::ptrdiff_t>(d.H)) continue;
                for (int b = -1; b <= 1; ++b) {
                  const auto ww = static_cast<std::ptrdiff_t>(w) + b;
                  if (ww < 0 || ww >= static_cast<std::ptrdiff_t>(d.W)) continue;
                  acc += k[(a + 1) * 3 + (b + 1)] *
                         clip.at(i, t, static_cast<std::size_t>(hh), static_cast<std::size_t>(ww));
                }
              }
            }
            conv.at(o, t, h, w) = gelu(acc);
          }
        }
      }
    }
    const std::size_t ph = d.H >= 2 ? 2 : 1, pw = d.W >= 2 ? 2 : 1;
    Tensor4 pooled(Dims{hidden, d.T, d.H / ph, d.W / pw});
    const double inv = 1.0 / static_cast<double>(ph * pw);
    for (std::size_t o = 0; o < hidden; ++o) {
      for (std::size_t t = 0; t < d.T; ++t) {
        for (std::size_t h = 0; h < d.H / ph; ++h) {
          for (std::size_t w = 0; w < d.W / pw; ++w) {
            double acc = 0.0;
            for (std::size_t a = 0; a < ph; ++a) {
              for (std::size_t b = 0; b < pw; ++b) acc += conv.at(o, t, h * ph + a, w * pw + b);
            }
            pooled.at(o, t, h, w) = acc * inv;
          }
        }
      }
    }
    return activation(fc_channel(pooled, mix_w, mix_b));
  }

  // FNV-1a over the raw bytes of every frozen weight.
  std::uint64_t checksum() const {
    std::uint64_t hsh = 1469598103934665603ULL;
    const auto mix = [&hsh](const std::vector<double>& v) {
      for (double x : v) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &x, sizeof bits);
        for (int i = 0; i < 8; ++i) {
          hsh ^= (bits >> (8 * i)) & 0xffu;
          hsh *= 1099511628211ULL;
        }
      }
    };
    mix(kernel);
    mix(bias);
    mix(mix_w.value);
    mix(mix_b.value);
    return hsh;
  }
};

// Per-frame linear classifier on spatially pooled features.
struct Head {
  ParamTensor w, b;  // [C, classes], [classes]

  static Head random(std::size_t channels, std::size_t classes, std::uint64_t seed) {
    Head hd{ParamTensor("head_w", {channels, classes}), ParamTensor("head_b", {classes})};
    std::mt19937_64 rng(seed ^ 0x4ead0000ULL);
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(channels)));
    for (double& v : hd.w.value) v = nd(rng);
    return hd;
  }
  std::vector<ParamTensor*> params() { return {&w, &b}; }
};

// Stem features -> adapter (if any) -> GELU -> spatial mean -> head.
// Returns logits (classes, T, 1, 1).
inline Var record_model(Tape& tape, Var features, Adapter* adapter, Head& head) {
  Var refined = adapter ? adapter->record(tape, features) : features;
  Var pooled = tape.mean_pool_spatial(tape.activation(refined));
  return tape.fc_channel(pooled, head.w, head.b);
}

inline Tensor4 model_logits_from_features(const Tensor4& features, const Adapter* adapter,
                                          const Head& head) {
  const Tensor4 refined = adapter ? adapter->forward(features) : features;
  return fc_channel(mean_pool_spatial(activation(refined)), head.w, head.b);
}

// Full forward from a raw clip; only adapter and head are trainable.
inline Tensor4 model_forward(const Tensor4& clip, const Stem& stem, const Adapter* adapter,
                             const Head& head) {
  return model_logits_from_features(stem.apply(clip), adapter, head);
}

// ---------------------------------------------------------------------------
// Sigmoid focal loss, mean over classes x frames. `pos_weight` multiplies
// positive terms and (1 - pos_weight) negative ones.
// ---------------------------------------------------------------------------

struct FocalResult {
  double loss = 0.0;
  Tensor4 grad;  // d(loss)/d(logits)
};

inline FocalResult focal_loss(const Tensor4& logits, const Tensor4& targets, double gamma,
                              double pos_weight) {
  if (logits.dims() != targets.dims()) {
    throw ShapeError("focal_loss: logits " + logits.dims().str() + " vs targets " +
                     targets.dims().str());
  }
  constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)
  const auto z = logits.data();
  const auto y = targets.data();
  FocalResult r{0.0, Tensor4::zeros_like(logits)};
  auto g = r.grad.data();
  const double inv_n = 1.0 / static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw ConfigError("focal_loss: targets must be 0 or 1");
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    // log p = -softplus(-z), log(1-p) = -softplus(z)
    const auto softplus = [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); };
    double weight, mod, dmod, logpt, dlog;
    if (y[i] == 1.0) {
      weight = pos_weight;
      mod = std::pow(1.0 - p, gamma);
      dmod = gamma == 0.0 ? 0.0 : -gamma * p * mod;
      logpt = -softplus(-z[i]);
      dlog = 1.0 - p;
    } else {
      weight = 1.0 - pos_weight;
      mod = std::pow(p, gamma);
      dmod = gamma == 0.0 ? 0.0 : gamma * (1.0 - p) * mod;
      logpt = -softplus(z[i]);
      dlog = -p;
    }
    if (logpt < kLogFloor) {
      logpt = kLogFloor;
      dlog = 0.0;
    }
    r.loss += -weight * mod * logpt * inv_n;
    g[i] = -weight * (dmod * logpt + mod * dlog) * inv_n;
  }
  return r;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------------------
// Interval decoding: per class, frames with p >= threshold form runs; runs
// separated by at most merge_gap frames are merged; score = mean p over the
// merged span.
// ---------------------------------------------------------------------------

inline std::vector<Proposal> decode_intervals(const std::vector<std::vector<double>>& probs,
                                              double threshold, std::size_t merge_gap,
                                              const std::string& video_id = "") {
  std::vector<Proposal> out;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    const auto& p = probs[c];
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t t = 0; t < p.size();) {
      if (p[t] < threshold) {
        ++t;
        continue;
      }
      std::size_t e = t;
      while (e + 1 < p.size() && p[e + 1] >= threshold) ++e;
      if (!runs.empty() && t - runs.back().second - 1 <= merge_gap) {
        runs.back().second = e;
      } else {
        runs.emplace_back(t, e);
      }
      t = e + 1;
    }
    for (const auto& [s, e] : runs) {
      double acc = 0.0;
      for (std::size_t t = s; t <= e; ++t) acc += p[t];
      out.push_back({video_id, static_cast<double>(s), static_cast<double>(e), static_cast<int>(c),
                     acc / static_cast<double>(e - s + 1)});
    }
  }
  return out;
}

inline std::vector<std::vector<double>> logits_to_probs(const Tensor4& logits) {
  const Dims& d = logits.dims();
  std::vector<std::vector<double>> probs(d.C, std::vector<double>(d.T));
  for (std::size_t c = 0; c < d.C; ++c) {
    for (std::size_t t = 0; t < d.T; ++t) probs[c][t] = sigmoid(logits.at(c, t, 0, 0));
  }
  return probs;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  double gamma = 2.0;
  double focal_weight = 0.25;
  double decode_threshold = 0.5;
  std::size_t merge_gap = 2;
  std::uint64_t seed = 0;

  // Settings used by the variant comparison: more, smaller steps and a lower
  // decode threshold, since the focal weighting keeps probabilities modest.
  static TrainConfig experiment_defaults() {
    TrainConfig c;
    c.lr = 5e-3;
    c.epochs = 30;
    c.batch_size = 2;
    c.decode_threshold = 0.2;
    return c;
  }

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be finite and >= 0");
    if (!(gamma >= 0.0)) throw ConfigError("train: focal gamma must be >= 0");
    if (!(decode_threshold > 0.0 && decode_threshold < 1.0)) {
      throw ConfigError("train: decode threshold must lie in (0, 1)");
    }
    if (!(focal_weight >= 0.0 && focal_weight <= 1.0)) {
      throw ConfigError("train: focal weight must lie in [0, 1]");
    }
    if (batch_size == 0) throw ConfigError("train: batch size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0)) {
      throw ConfigError("train: invalid Adam hyperparameters");
    }
  }
};

class Adam {
 public:
  Adam(std::vector<ParamTensor*> params, const TrainConfig& cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (const ParamTensor* p : params_) {
      m_.emplace_back(p->numel(), 0.0);
      v_.emplace_back(p->numel(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      ParamTensor& p = *params_[k];
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double g = p.grad[i];
        m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
        v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m_[k][i] / c1;
        const double vhat = v_[k][i] / c2;
        p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  std::vector<ParamTensor*> params_;
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// Stem outputs and targets for one dataset; the stem is frozen so features
// are computed once.
struct PreparedData {
  std::vector<std::string> ids;
  std::vector<Tensor4> features;
  std::vector<Tensor4> targets;
  std::vector<IntervalAnnotation> gts;
};

inline PreparedData prepare(const SyntheticDataset& ds, const Stem& stem) {
  PreparedData pd;
  pd.ids = ds.ids;
  pd.gts = ds.gts;
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    pd.features.push_back(stem.apply(ds.clips[i]));
    pd.targets.push_back(frame_targets(ds.gts, ds.ids[i], ds.clips[i].dims().T));
  }
  return pd;
}

struct TrainResult {
  double initial_loss = 0.0;        // mean loss before the first update
  std::vector<double> epoch_loss;   // mean loss seen during each epoch
};

inline double mean_loss(const PreparedData& data, const Adapter* adapter, const Head& head,
                        const TrainConfig& cfg) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    const Tensor4 logits = model_logits_from_features(data.features[i], adapter, head);
    acc += focal_loss(logits, data.targets[i], cfg.gamma, cfg.focal_weight).loss;
  }
  return acc / static_cast<double>(data.features.size());
}

// Trains adapter (optional) and head in place with Adam. Deterministic in cfg.seed.
inline TrainResult train(Adapter* adapter, Head& head, const PreparedData& data,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (data.features.empty()) throw ConfigError("train: empty dataset");
  std::vector<ParamTensor*> params = head.params();
  if (adapter) {
    for (ParamTensor* p : adapter->params().all()) params.push_back(p);
  }
  Adam opt(params, cfg);
  TrainResult res;
  res.initial_loss = mean_loss(data, adapter, head, cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x7a11ULL);
  std::vector<std::size_t> order(data.features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    }
    double epoch_acc = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++batch_index) {
      for (ParamTensor* p : params) p->zero_grad();
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(e - b);
      for (std::size_t j = b; j < e; ++j) {
        const std::size_t i = order[j];
        Tape tape;
        Var logits = record_model(tape, tape.input(data.features[i]), adapter, head);
        FocalResult fl = focal_loss(tape.value(logits), data.targets[i], cfg.gamma,
                                    cfg.focal_weight);
        if (!std::isfinite(fl.loss)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index));
        }
        epoch_acc += fl.loss;
        for (double& g : fl.grad.data()) g *= inv;
        tape.backward(logits, fl.grad);
      }
      opt.step();
    }
    res.epoch_loss.push_back(epoch_acc / static_cast<double>(order.size()));
  }
  return res;
}

inline std::vector<Proposal> predict(const PreparedData& data, const Adapter* adapter,
                                     const Head& head, double threshold, std::size_t merge_gap) {
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    const auto probs = logits_to_probs(model_logits_from_features(data.features[i], adapter, head));
    for (auto& p : decode_intervals(probs, threshold, merge_gap, data.ids[i])) {
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paired comparison of adapter variants (and an optional split-ratio sweep).
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::vector<Variant> variants = {Variant::TIA, Variant::ConvT, Variant::ConvTH, Variant::ConvTHW};
  double alpha = 0.5;
  std::vector<double> alpha_sweep;  // empty: no sweep; swept with the full variant
  std::size_t seeds = 3;            // first_seed .. first_seed + seeds - 1
  std::uint64_t first_seed = 0;
  SyntheticConfig data;
  std::size_t test_clips = 32;
  std::size_t stem_hidden = 8;
  std::size_t features = 16;        // stem output channels = adapter C
  std::size_t bottleneck = 8;       // adapter N
  TrainConfig train = TrainConfig::experiment_defaults();
  std::size_t threads = 1;
  std::string checkpoint_dir;       // empty: do not save checkpoints
};

struct RunResult {
  Variant variant = Variant::ConvTHW;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  bool sweep = false;
  EvalReport report;
  TrainResult training;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
};

// Dataset, stem and head initialisation for one seed; shared by every variant.
struct SeedSetup {
  PreparedData train, test;
  Stem stem;
  Head head;
};

inline SeedSetup make_seed_setup(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedSetup s;
  SyntheticConfig train_cfg = cfg.data;
  train_cfg.seed = seed * 2;
  SyntheticConfig test_cfg = cfg.data;
  test_cfg.seed = seed * 2 + 1;
  test_cfg.clips = cfg.test_clips;
  s.stem = Stem::random(cfg.data.C, cfg.stem_hidden, cfg.features, seed);
  s.train = prepare(generate_dataset(train_cfg), s.stem);
  s.test = prepare(generate_dataset(test_cfg), s.stem);
  s.head = Head::random(cfg.features, kNumClasses, seed);
  return s;
}

inline RunResult run_single(const SeedSetup& setup, const ExperimentConfig& cfg, Variant variant,
                            double alpha, std::uint64_t seed) {
  AdapterConfig acfg = AdapterConfig::make(cfg.features, cfg.bottleneck, variant, alpha);
  acfg.beta_init = 0.0;
  Adapter adapter(acfg, seed ^ 0xada97e11ULL);
  Head head = setup.head;
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  RunResult r;
  r.variant = variant;
  r.alpha = alpha;
  r.seed = seed;
  r.training = train(&adapter, head, setup.train, tc);
  const auto preds = predict(setup.test, &adapter, head, tc.decode_threshold, tc.merge_gap);
  r.report = evaluate(setup.test.gts, preds);
  if (!cfg.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    std::ostringstream name;
    name << variant_name(variant) << "_alpha" << alpha << "_seed" << seed << ".ckpt";
    save_adapter((std::filesystem::path(cfg.checkpoint_dir) / name.str()).string(), adapter);
  }
  return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.data.validate();
  cfg.train.validate();
  struct Job {
    std::uint64_t seed;
    Variant variant;
    double alpha;
    bool sweep;
    std::optional<std::size_t> copy_of;  // identical run already scheduled
  };
  std::vector<SeedSetup> setups;
  for (std::uint64_t s = 0; s < cfg.seeds; ++s) {
    setups.push_back(make_seed_setup(cfg, cfg.first_seed + s));
  }
  std::vector<Job> jobs;
  for (std::uint64_t s = 0; s < cfg.seeds; ++s) {
    std::optional<std::size_t> full;
    for (Variant v : cfg.variants) {
      if (v == Variant::ConvTHW) full = jobs.size();
      jobs.push_back({s, v, cfg.alpha, false, std::nullopt});
    }
    for (double a : cfg.alpha_sweep) {
      // Training is deterministic, so the sweep point at the main ratio reuses that run.
      const bool same = full && a == cfg.alpha;
      jobs.push_back({s, Variant::ConvTHW, a, true, same ? full : std::nullopt});
    }
  }
  ExperimentResult res;
  res.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      if (jobs[j].copy_of) continue;
      try {
        res.runs[j] = run_single(setups[jobs[j].seed], cfg, jobs[j].variant, jobs[j].alpha,
                                 cfg.first_seed + jobs[j].seed);
        res.runs[j].sweep = jobs[j].sweep;
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(cfg.threads, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (!jobs[j].copy_of) continue;
    res.runs[j] = res.runs[*jobs[j].copy_of];
    res.runs[j].sweep = true;
  }
  return res;
}

// Mean and population stddev of mAP columns (thresholds..., Avg) over seeds.
struct TableRow {
  std::string label;
  std::vector<double> mean, stddev;
  std::size_t runs = 0;
};

inline TableRow summarize(const std::string& label, const std::vector<const RunResult*>& runs) {
  TableRow row;
  row.label = label;
  row.runs = runs.size();
  if (runs.empty()) return row;
  const std::size_t ncol = runs[0]->report.map_per_threshold.size() + 1;
  row.mean.assign(ncol, 0.0);
  row.stddev.assign(ncol, 0.0);
  const auto col = [](const RunResult* r, std::size_t c) {
    return c < r->report.map_per_threshold.size() ? r->report.map_per_threshold[c]
                                                  : r->report.average_map;
  };
  const double n = static_cast<double>(runs.size());
  for (std::size_t c = 0; c < ncol; ++c) {
    for (const auto* r : runs) row.mean[c] += col(r, c) / n;
    for (const auto* r : runs) row.stddev[c] += (col(r, c) - row.mean[c]) * (col(r, c) - row.mean[c]) / n;
    row.stddev[c] = std::sqrt(row.stddev[c]);
  }
  return row;
}

// Rows follow the ablation ladder order of cfg.variants.
inline std::vector<TableRow> variant_table(const ExperimentResult& res,
                                           const std::vector<Variant>& variants) {
  std::vector<TableRow> rows;
  for (Variant v : variants) {
    std::vector<const RunResult*> sel;
    for (const auto& r : res.runs) {
      if (!r.sweep && r.variant == v) sel.push_back(&r);
    }
    rows.push_back(summarize(variant_label(v), sel));
  }
  return rows;
}

inline std::vector<TableRow> alpha_table(const ExperimentResult& res,
                                         const std::vector<double>& alphas) {
  std::vector<TableRow> rows;
  for (double a : alphas) {
    std::vector<const RunResult*> sel;
    for (const auto& r : res.runs) {
      if (r.sweep && r.alpha == a) sel.push_back(&r);
    }
    std::ostringstream label;
    label << a;
    rows.push_back(summarize(label.str(), sel));
  }
  return rows;
}

// Cells are "mean±std" in percent, columns mAP@thr..., Avg.
inline void write_table_csv(const std::string& path, const std::string& first_column,
                            const std::vector<TableRow>& rows,
                            const std::vector<double>& thresholds = kDefaultThresholds) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << first_column;
  for (double t : thresholds) os << ",mAP@" << t;
  os << ",Avg\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << r.label;
    for (std::size_t c = 0; c < r.mean.size(); ++c) {
      os << "," << 100.0 * r.mean[c] << "±" << 100.0 * r.stddev[c];
    }
    os << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

inline void write_runs_csv(const std::string& path, const ExperimentResult& res) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "variant,alpha,seed,sweep";
  for (double t : kDefaultThresholds) os << ",mAP@" << t;
  os << ",Avg,initial_loss,final_loss\n" << std::setprecision(10);
  for (const auto& r : res.runs) {
    os << variant_name(r.variant) << "," << r.alpha << "," << r.seed << "," << (r.sweep ? 1 : 0);
    for (double m : r.report.map_per_threshold) os << "," << m;
    os << "," << r.report.average_map << "," << r.training.initial_loss << ","
       << (r.training.epoch_loss.empty() ? r.training.initial_loss : r.training.epoch_loss.back())
       << "\n";
  }
}

inline void write_loss_curves_csv(const std::string& path, const ExperimentResult& res) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "variant,alpha,seed,sweep,epoch,loss\n" << std::setprecision(10);
  for (const auto& r : res.runs) {
    const auto prefix = [&] {
      std::ostringstream p;
      p << variant_name(r.variant) << "," << r.alpha << "," << r.seed << "," << (r.sweep ? 1 : 0);
      return p.str();
    }();
    os << prefix << ",0," << r.training.initial_loss << "\n";
    for (std::size_t e = 0; e < r.training.epoch_loss.size(); ++e) {
      os << prefix << "," << e + 1 << "," << r.training.epoch_loss[e] << "\n";
    }
  }
}

}  // namespace dsta::synth

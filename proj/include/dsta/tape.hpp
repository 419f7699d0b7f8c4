#pragma once

#include <functional>
#include <vector>

#include "dsta/errors.hpp"
#include "dsta/ops.hpp"
#include "dsta/tensor.hpp"

namespace dsta {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Straight-line recorder for the fixed op set in ops.hpp.
//
// Each recorded op stores its output and a pullback. backward() walks the
// records in reverse once, so cost is linear in the number of recorded ops.
// Parameters are referenced by pointer: they must outlive the tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(Tensor4 x) { return push(std::move(x), nullptr); }

  const Tensor4& value(Var v) const { return node(v).value; }

  // Gradient of the last backward() seed with respect to `v`.
  const Tensor4& grad(Var v) const {
    if (!has_grads_) throw StateError("Tape::grad: backward has not run");
    return node(v).grad;
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() {
    nodes_.clear();
    has_grads_ = false;
  }

  Var fc_channel(Var x, ParamTensor& W, ParamTensor& b) {
    Tensor4 y = dsta::fc_channel(value(x), W, b);
    return push(std::move(y), [this, x, pW = &W, pb = &b](const Tensor4& gy) {
      accumulate(x, fc_channel_backward(value(x), *pW, *pb, gy));
    });
  }

  Var activation(Var x) {
    Tensor4 y = dsta::activation(value(x));
    return push(std::move(y), [this, x](const Tensor4& gy) {
      accumulate(x, activation_backward(value(x), gy));
    });
  }

  Var conv_axis_depthwise(Var x, Axis axis, ParamTensor& kernel, ParamTensor& bias) {
    Tensor4 y = dsta::conv_axis_depthwise(value(x), axis, kernel, bias);
    return push(std::move(y), [this, x, axis, pk = &kernel, pb = &bias](const Tensor4& gy) {
      accumulate(x, conv_axis_depthwise_backward(value(x), axis, *pk, *pb, gy));
    });
  }

  Var dwconv_temporal(Var x, ParamTensor& kernel, ParamTensor& bias, std::size_t k,
                      std::size_t m) {
    Tensor4 y = dsta::dwconv_temporal(value(x), kernel, bias, k, m);
    return push(std::move(y), [this, x, k, m, pk = &kernel, pb = &bias](const Tensor4& gy) {
      accumulate(x, dwconv_temporal_backward(value(x), *pk, *pb, k, m, gy));
    });
  }

  Var slice_channels(Var x, std::size_t begin, std::size_t count) {
    Tensor4 y = dsta::slice_channels(value(x), begin, count);
    return push(std::move(y), [this, x, begin](const Tensor4& gy) {
      Tensor4& gx = node(x).grad;
      const std::size_t per = gx.dims().per_channel();
      auto dst = gx.data().subspan(begin * per, gy.size());
      const auto src = gy.data();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    });
  }

  std::pair<Var, Var> split_channels(Var x, double ratio) {
    const std::size_t C = value(x).channels();
    const std::size_t c1 = split_count(ratio, C);
    Var a = slice_channels(x, 0, c1);
    Var b = slice_channels(x, c1, C - c1);
    return {a, b};
  }

  Var concat_channels(Var a, Var b) {
    Tensor4 y = dsta::concat_channels(value(a), value(b));
    const std::size_t ca = value(a).channels();
    const std::size_t cb = value(b).channels();
    return push(std::move(y), [this, a, b, ca, cb](const Tensor4& gy) {
      accumulate(a, dsta::slice_channels(gy, 0, ca));
      accumulate(b, dsta::slice_channels(gy, ca, cb));
    });
  }

  Var add(Var a, Var b) {
    Tensor4 y = dsta::add(value(a), value(b));
    return push(std::move(y), [this, a, b](const Tensor4& gy) {
      accumulate(a, gy);
      accumulate(b, gy);
    });
  }

  Var scale(Var x, ParamTensor& beta) {
    Tensor4 y = dsta::scale(value(x), beta);
    return push(std::move(y), [this, x, pb = &beta](const Tensor4& gy) {
      accumulate(x, scale_backward(value(x), *pb, gy));
    });
  }

  Var mean_pool_spatial(Var x) {
    Tensor4 y = dsta::mean_pool_spatial(value(x));
    return push(std::move(y), [this, x](const Tensor4& gy) {
      accumulate(x, mean_pool_spatial_backward(value(x).dims(), gy));
    });
  }

  // Seeds d(loss)/d(out) = upstream and propagates to every recorded value.
  // Parameter gradients accumulate (call zero_grad on params between steps).
  void backward(Var out, const Tensor4& upstream) {
    if (nodes_.empty() || out.id >= nodes_.size()) {
      throw StateError("Tape::backward: no forward pass recorded for this output");
    }
    if (upstream.dims() != value(out).dims()) {
      throw ShapeError("Tape::backward: upstream " + upstream.dims().str() +
                       " does not match output " + value(out).dims().str());
    }
    for (auto& n : nodes_) n.grad = Tensor4::zeros_like(n.value);
    has_grads_ = true;
    node(out).grad = upstream;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      if (nodes_[i].pullback) nodes_[i].pullback(nodes_[i].grad);
    }
  }

 private:
  using Pullback = std::function<void(const Tensor4&)>;

  struct Node {
    Tensor4 value;
    Tensor4 grad;
    Pullback pullback;
  };

  Var push(Tensor4 v, Pullback pb) {
    nodes_.push_back(Node{std::move(v), Tensor4{}, std::move(pb)});
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw StateError("Tape: unknown variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw StateError("Tape: unknown variable");
    return nodes_[v.id];
  }

  void accumulate(Var v, const Tensor4& g) {
    auto dst = node(v).grad.data();
    const auto src = g.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }

  std::vector<Node> nodes_;
  bool has_grads_ = false;
};

}  // namespace dsta

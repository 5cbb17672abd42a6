#pragma once

// Reverse-mode automatic differentiation over 4-D tensors.
//
// A Tape records every executed op in order together with a backward rule.
// `backward` walks the tape once in reverse and accumulates gradients, so
// fan-out sums naturally. Only the ops the mapping network needs exist.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "diforge/tensor.hpp"

namespace diforge::ad {

template <typename Scalar>
class Tape {
 public:
  using TensorT = Tensor<Scalar>;
  using Array = typename TensorT::Array;
  using Matrix = typename TensorT::Matrix;

  struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
  };

  using BackwardFn = std::function<void(Tape&, const TensorT& out_grad)>;

  Var leaf(TensorT value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, false, nullptr});
    return Var{nodes_.size() - 1};
  }
  Var constant(TensorT value) { return leaf(std::move(value), false); }

  /// Appends an op output. The op needs a gradient if any input does.
  Var record(TensorT value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (Var v : inputs) needs = needs || node(v).requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(backward) : nullptr});
    return Var{nodes_.size() - 1};
  }

  const TensorT& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient after `backward`; zeros when nothing flowed into `v`.
  TensorT grad(Var v) const {
    const Node& n = node(v);
    return n.has_grad ? n.grad : TensorT(n.value.shape());
  }

  /// Mutable gradient buffer, allocated as zeros on first use.
  TensorT& grad_ref(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
      n.grad = TensorT(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  void backward(Var loss) {
    require(node(loss).value.size() == 1, Errc::invalid_argument,
            "backward needs a scalar loss, got " + node(loss).value.shape().str());
    for (Node& n : nodes_) {
      n.has_grad = false;
      n.grad = TensorT();
    }
    visits_ = 0;
    grad_ref(loss).array().setOnes();
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      ++visits_;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Number of backward rules run by the last `backward` call.
  std::size_t backward_visits() const noexcept { return visits_; }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v) {
    require(v.id < nodes_.size(), Errc::invalid_argument, "variable does not belong to this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    require(v.id < nodes_.size(), Errc::invalid_argument, "variable does not belong to this tape");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

namespace detail {

/// Low-side padding of the stride-2 geometry: total k-2, floor on the low side.
constexpr Index pad_low(Index k) { return (k - 2) / 2; }

/// Patch matrix of a stride-2 convolution over `src`:
/// rows = (b, oy, ox) with oy < H/2, ox < W/2; cols = (ky, kx, c).
template <typename Scalar>
typename Tensor<Scalar>::Matrix im2col(const Tensor<Scalar>& src, Index k) {
  using Matrix = typename Tensor<Scalar>::Matrix;
  const Shape& s = src.shape();
  const Index ho = s.height / 2, wo = s.width / 2, c = s.channels, pad = pad_low(k);
  Matrix cols = Matrix::Zero(s.batch * ho * wo, k * k * c);
  for (Index b = 0; b < s.batch; ++b)
    for (Index oy = 0; oy < ho; ++oy)
      for (Index ox = 0; ox < wo; ++ox) {
        Scalar* row = cols.row((b * ho + oy) * wo + ox).data();
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = 2 * oy - pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = 2 * ox - pad + kx;
            if (ix < 0 || ix >= s.width) continue;
            const Scalar* from = src.data() + ((b * s.height + iy) * s.width + ix) * c;
            std::copy(from, from + c, row + (ky * k + kx) * c);
          }
        }
      }
  return cols;
}

/// Adjoint of im2col: scatter-adds patch rows back into `dst`.
template <typename Scalar, typename Derived>
void col2im_add(const Eigen::MatrixBase<Derived>& cols, Tensor<Scalar>& dst, Index k) {
  const Shape& s = dst.shape();
  const Index ho = s.height / 2, wo = s.width / 2, c = s.channels, pad = pad_low(k);
  for (Index b = 0; b < s.batch; ++b)
    for (Index oy = 0; oy < ho; ++oy)
      for (Index ox = 0; ox < wo; ++ox) {
        const Index r = (b * ho + oy) * wo + ox;
        for (Index ky = 0; ky < k; ++ky) {
          const Index iy = 2 * oy - pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          for (Index kx = 0; kx < k; ++kx) {
            const Index ix = 2 * ox - pad + kx;
            if (ix < 0 || ix >= s.width) continue;
            Scalar* to = dst.data() + ((b * s.height + iy) * s.width + ix) * c;
            for (Index ch = 0; ch < c; ++ch) to[ch] += cols(r, (ky * k + kx) * c + ch);
          }
        }
      }
}

inline void check_kernel(const Shape& w, Index in_channels, Index out_channels, const char* op) {
  require(w.batch == w.height && (w.batch == 2 || w.batch == 4), Errc::shape_mismatch,
          std::string(op) + ": kernel must be 2x2 or 4x4, got " + w.str());
  require(w.width == in_channels && w.channels == out_channels, Errc::shape_mismatch,
          std::string(op) + ": weight " + w.str() + " does not match channels");
}

}  // namespace detail

/// Stride-2 cross-correlation plus bias. x: [B,H,W,Cin], w: [k,k,Cin,Cout],
/// b: [1,1,1,Cout] -> [B,H/2,W/2,Cout].
template <typename Scalar>
typename Tape<Scalar>::Var conv2d_down(Tape<Scalar>& tape, typename Tape<Scalar>::Var x,
                                       typename Tape<Scalar>::Var w, typename Tape<Scalar>::Var b) {
  using TensorT = Tensor<Scalar>;
  using Matrix = typename TensorT::Matrix;
  const Shape xs = tape.value(x).shape();
  const Shape ws = tape.value(w).shape();
  require(xs.height % 2 == 0 && xs.width % 2 == 0 && xs.height > 0 && xs.width > 0, Errc::shape_mismatch,
          "conv2d_down: input spatial size must be even, got " + xs.str());
  require(ws.width == xs.channels, Errc::shape_mismatch,
          "conv2d_down: input has " + std::to_string(xs.channels) + " channels, weight expects " +
              std::to_string(ws.width));
  detail::check_kernel(ws, xs.channels, ws.channels, "conv2d_down");
  require(tape.value(b).size() == ws.channels, Errc::shape_mismatch, "conv2d_down: bias length");
  const Index k = ws.batch;
  const Index cout = ws.channels;

  Matrix patches = detail::im2col(tape.value(x), k);
  typename TensorT::ConstMatrixMap wmat(tape.value(w).data(), k * k * xs.channels, cout);
  TensorT out(Shape{xs.batch, xs.height / 2, xs.width / 2, cout});
  out.matrix().noalias() = patches * wmat;
  out.matrix().rowwise() += tape.value(b).array().matrix().transpose();

  return tape.record(std::move(out), {x, w, b},
                     [x, w, b, k, xs, cout, patches = std::move(patches)](Tape<Scalar>& t, const TensorT& g) {
                       const auto gmat = g.matrix();
                       if (t.requires_grad(w)) {
                         typename TensorT::MatrixMap dw(t.grad_ref(w).data(), k * k * xs.channels, cout);
                         dw.noalias() += patches.transpose() * gmat;
                       }
                       if (t.requires_grad(b)) t.grad_ref(b).array() += gmat.colwise().sum().transpose().array();
                       if (t.requires_grad(x)) {
                         typename TensorT::ConstMatrixMap wmat(t.value(w).data(), k * k * xs.channels, cout);
                         const Matrix dpatches = gmat * wmat.transpose();
                         detail::col2im_add(dpatches, t.grad_ref(x), k);
                       }
                     });
}

/// Stride-2 transposed convolution plus bias, the input-adjoint of
/// conv2d_down. x: [B,H,W,Cin], w: [k,k,Cout,Cin], b: [1,1,1,Cout]
/// -> [B,2H,2W,Cout].
template <typename Scalar>
typename Tape<Scalar>::Var tconv2d_up(Tape<Scalar>& tape, typename Tape<Scalar>::Var x,
                                      typename Tape<Scalar>::Var w, typename Tape<Scalar>::Var b) {
  using TensorT = Tensor<Scalar>;
  using Matrix = typename TensorT::Matrix;
  const Shape xs = tape.value(x).shape();
  const Shape ws = tape.value(w).shape();
  require(xs.height > 0 && xs.width > 0, Errc::shape_mismatch, "tconv2d_up: empty input");
  require(ws.channels == xs.channels, Errc::shape_mismatch,
          "tconv2d_up: input has " + std::to_string(xs.channels) + " channels, weight expects " +
              std::to_string(ws.channels));
  detail::check_kernel(ws, ws.width, xs.channels, "tconv2d_up");
  const Index k = ws.batch;
  const Index cout = ws.width;
  require(tape.value(b).size() == cout, Errc::shape_mismatch, "tconv2d_up: bias length");

  typename TensorT::ConstMatrixMap wmat(tape.value(w).data(), k * k * cout, xs.channels);
  const Matrix cols = tape.value(x).matrix() * wmat.transpose();
  TensorT out(Shape{xs.batch, 2 * xs.height, 2 * xs.width, cout});
  detail::col2im_add(cols, out, k);
  out.matrix().rowwise() += tape.value(b).array().matrix().transpose();

  return tape.record(std::move(out), {x, w, b}, [x, w, b, k, xs, cout](Tape<Scalar>& t, const TensorT& g) {
    const Matrix q = detail::im2col(g, k);
    if (t.requires_grad(w)) {
      typename TensorT::MatrixMap dw(t.grad_ref(w).data(), k * k * cout, xs.channels);
      dw.noalias() += q.transpose() * t.value(x).matrix();
    }
    if (t.requires_grad(b)) t.grad_ref(b).array() += g.matrix().colwise().sum().transpose().array();
    if (t.requires_grad(x)) {
      typename TensorT::ConstMatrixMap wmat(t.value(w).data(), k * k * cout, xs.channels);
      t.grad_ref(x).matrix().noalias() += q * wmat;
    }
  });
}

/// max(x, alpha*x); the derivative at 0 is taken as alpha.
template <typename Scalar>
typename Tape<Scalar>::Var leaky_relu(Tape<Scalar>& tape, typename Tape<Scalar>::Var x, Scalar alpha) {
  require(alpha >= Scalar(0) && alpha < Scalar(1), Errc::invalid_argument, "leaky_relu: alpha must lie in [0, 1)");
  using TensorT = Tensor<Scalar>;
  const auto& in = tape.value(x).array();
  TensorT out(tape.value(x).shape(), (in > Scalar(0)).select(in, alpha * in));
  return tape.record(std::move(out), {x}, [x, alpha](Tape<Scalar>& t, const TensorT& g) {
    const auto& in = t.value(x).array();
    t.grad_ref(x).array() += (in > Scalar(0)).select(g.array(), alpha * g.array());
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var relu(Tape<Scalar>& tape, typename Tape<Scalar>::Var x) {
  return leaky_relu(tape, x, Scalar(0));
}

/// Channel-wise concatenation; `a` occupies the leading channels.
template <typename Scalar>
typename Tape<Scalar>::Var concat_channels(Tape<Scalar>& tape, typename Tape<Scalar>::Var a,
                                           typename Tape<Scalar>::Var b) {
  using TensorT = Tensor<Scalar>;
  const Shape as = tape.value(a).shape();
  const Shape bs = tape.value(b).shape();
  require(as.batch == bs.batch && as.height == bs.height && as.width == bs.width, Errc::shape_mismatch,
          "concat_channels: " + as.str() + " vs " + bs.str());
  TensorT out(Shape{as.batch, as.height, as.width, as.channels + bs.channels});
  out.matrix().leftCols(as.channels) = tape.value(a).matrix();
  out.matrix().rightCols(bs.channels) = tape.value(b).matrix();
  return tape.record(std::move(out), {a, b}, [a, b, ca = as.channels, cb = bs.channels](Tape<Scalar>& t,
                                                                                         const TensorT& g) {
    if (t.requires_grad(a)) t.grad_ref(a).matrix() += g.matrix().leftCols(ca);
    if (t.requires_grad(b)) t.grad_ref(b).matrix() += g.matrix().rightCols(cb);
  });
}

/// Appends a constant condition row per batch element to a 1x1 latent:
/// [B,1,1,C] + (B x L) -> [B,1,1,C+L]. No gradient flows into `cond`.
template <typename Scalar, typename Derived>
typename Tape<Scalar>::Var broadcast_latent(Tape<Scalar>& tape, typename Tape<Scalar>::Var latent,
                                            const Eigen::MatrixBase<Derived>& cond) {
  using TensorT = Tensor<Scalar>;
  const Shape ls = tape.value(latent).shape();
  require(ls.height == 1 && ls.width == 1, Errc::shape_mismatch,
          "broadcast_latent: latent must be 1x1, got " + ls.str());
  require(cond.rows() == ls.batch, Errc::shape_mismatch, "broadcast_latent: one condition row per batch element");
  TensorT out(Shape{ls.batch, 1, 1, ls.channels + cond.cols()});
  out.matrix().leftCols(ls.channels) = tape.value(latent).matrix();
  out.matrix().rightCols(cond.cols()) = cond.template cast<Scalar>();
  return tape.record(std::move(out), {latent}, [latent, c = ls.channels](Tape<Scalar>& t, const TensorT& g) {
    t.grad_ref(latent).matrix() += g.matrix().leftCols(c);
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var add(Tape<Scalar>& tape, typename Tape<Scalar>::Var a, typename Tape<Scalar>::Var b) {
  using TensorT = Tensor<Scalar>;
  require(tape.value(a).shape() == tape.value(b).shape(), Errc::shape_mismatch, "add: shapes differ");
  TensorT out(tape.value(a).shape(), tape.value(a).array() + tape.value(b).array());
  return tape.record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const TensorT& g) {
    if (t.requires_grad(a)) t.grad_ref(a).array() += g.array();
    if (t.requires_grad(b)) t.grad_ref(b).array() += g.array();
  });
}

template <typename Scalar>
typename Tape<Scalar>::Var sum(Tape<Scalar>& tape, typename Tape<Scalar>::Var x) {
  using TensorT = Tensor<Scalar>;
  TensorT out = TensorT::constant(Shape{1, 1, 1, 1}, tape.value(x).array().sum());
  return tape.record(std::move(out), {x}, [x](Tape<Scalar>& t, const TensorT& g) {
    t.grad_ref(x).array() += g.array()[0];
  });
}

/// Mean over all elements of (pred - target)^2.
template <typename Scalar>
typename Tape<Scalar>::Var mse_loss(Tape<Scalar>& tape, typename Tape<Scalar>::Var pred,
                                    typename Tape<Scalar>::Var target) {
  using TensorT = Tensor<Scalar>;
  require(tape.value(pred).shape() == tape.value(target).shape(), Errc::shape_mismatch,
          "mse_loss: " + tape.value(pred).shape().str() + " vs " + tape.value(target).shape().str());
  const auto n = static_cast<Scalar>(tape.value(pred).size());
  const Scalar loss = (tape.value(pred).array() - tape.value(target).array()).square().sum() / n;
  return tape.record(TensorT::constant(Shape{1, 1, 1, 1}, loss), {pred, target},
                     [pred, target, n](Tape<Scalar>& t, const TensorT& g) {
                       const Scalar scale = Scalar(2) * g.array()[0] / n;
                       const auto diff = t.value(pred).array() - t.value(target).array();
                       if (t.requires_grad(pred)) t.grad_ref(pred).array() += scale * diff;
                       if (t.requires_grad(target)) t.grad_ref(target).array() -= scale * diff;
                     });
}

}  // namespace diforge::ad

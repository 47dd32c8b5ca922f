// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ops.hpp
 * @brief  Differentiable operations recorded on a Graph.
 *
 * Every op validates its inputs (shape and finiteness), computes the forward
 * value, and registers a closure that accumulates gradients into whichever
 * parents need them.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <dyslat/error.hpp>
#include <dyslat/neural/graph.hpp>
#include <dyslat/neural/tensor.hpp>
#include <dyslat/rng.hpp>

namespace dyslat::nn {

enum class Padding { valid, same };
enum class Activation { linear, tanh, relu };

namespace detail {

inline void expect_rank(const Tensor &t, std::size_t rank, const char *op) {
  require(t.rank() == rank, ErrorCode::ShapeMismatch,
          std::string(op) + " expects rank " + std::to_string(rank) +
            ", got " + shape_str(t.shape()));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops

inline Var relu(Var x) {
  const Tensor &xv = x.value();
  require_finite(xv, "relu");
  Tensor y = xv;
  for (double &v : y.data())
    v = v > 0.0 ? v : 0.0;
  const auto xid = x.id();
  return x.graph().record(std::move(y), {x},
                          [xid](Graph &g, const Tensor &dy) {
                            const Tensor &xv = g.value(xid);
                            Tensor &dx = g.grad(xid);
                            for (std::size_t i = 0; i < dy.size(); ++i)
                              if (xv[i] > 0.0)
                                dx[i] += dy[i];
                          });
}

inline Var tanh(Var x) {
  const Tensor &xv = x.value();
  require_finite(xv, "tanh");
  Tensor y = xv;
  for (double &v : y.data())
    v = std::tanh(v);
  const auto xid = x.id();
  return x.graph().record(y, {x}, [xid, y](Graph &g, const Tensor &dy) {
    Tensor &dx = g.grad(xid);
    for (std::size_t i = 0; i < dy.size(); ++i)
      dx[i] += dy[i] * (1.0 - y[i] * y[i]);
  });
}

inline Var activate(Var x, Activation act) {
  switch (act) {
  case Activation::tanh: return tanh(x);
  case Activation::relu: return relu(x);
  case Activation::linear: break;
  }
  return x;
}

/// Numerically stable softmax over a rank-1 tensor.
inline Tensor softmax(const Tensor &logits) {
  require(logits.size() >= 1, ErrorCode::EmptySequence,
          "softmax of an empty vector");
  require_finite(logits, "softmax");
  Tensor y = logits;
  const double mx = *std::max_element(y.data().begin(), y.data().end());
  double total = 0.0;
  for (double &v : y.data()) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double &v : y.data())
    v /= total;
  return y;
}

inline Var softmax(Var x) {
  Tensor y = softmax(x.value());
  const auto xid = x.id();
  return x.graph().record(y, {x}, [xid, y](Graph &g, const Tensor &dy) {
    const double dot = dy.vec().dot(y.vec());
    Tensor &dx = g.grad(xid);
    for (std::size_t i = 0; i < dy.size(); ++i)
      dx[i] += y[i] * (dy[i] - dot);
  });
}

inline Var add(Var a, Var b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor y = a.value();
  y += b.value();
  const auto aid = a.id(), bid = b.id();
  return a.graph().record(std::move(y), {a, b},
                          [aid, bid](Graph &g, const Tensor &dy) {
                            if (g.requires_grad(aid))
                              g.grad(aid) += dy;
                            if (g.requires_grad(bid))
                              g.grad(bid) += dy;
                          });
}

inline Var scale(Var a, double factor) {
  Tensor y = a.value();
  y.vec() *= factor;
  const auto aid = a.id();
  return a.graph().record(std::move(y), {a},
                          [aid, factor](Graph &g, const Tensor &dy) {
                            g.grad(aid).vec() += factor * dy.vec();
                          });
}

inline Var reshape(Var x, Shape shape) {
  require(shape_size(shape) == x.value().size(), ErrorCode::ShapeMismatch,
          "reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor y = x.value().reshaped(std::move(shape));
  const auto xid = x.id();
  return x.graph().record(std::move(y), {x},
                          [xid](Graph &g, const Tensor &dy) {
                            g.grad(xid).vec() += dy.vec();
                          });
}

/// Concatenation of flattened inputs into one rank-1 tensor.
inline Var concat(const std::vector<Var> &parts) {
  require(!parts.empty(), ErrorCode::EmptySequence, "concat of nothing");
  std::vector<double> data;
  std::vector<std::size_t> ids;
  for (const Var &p : parts) {
    const auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
    ids.push_back(p.id());
  }
  const std::size_t n = data.size();
  return parts.front().graph().record(
    Tensor(Shape{n}, std::move(data)), parts,
    [ids](Graph &g, const Tensor &dy) {
      std::size_t offset = 0;
      for (auto id : ids) {
        const std::size_t len = g.value(id).size();
        if (g.requires_grad(id)) {
          Tensor &dx = g.grad(id);
          for (std::size_t i = 0; i < len; ++i)
            dx[i] += dy[offset + i];
        }
        offset += len;
      }
    });
}

/// Stacks equally sized rank-1 tensors as the rows of a matrix.
inline Var stack_rows(const std::vector<Var> &rows) {
  require(!rows.empty(), ErrorCode::EmptySequence, "stack of nothing");
  const std::size_t width = rows.front().value().size();
  for (const Var &r : rows)
    require(r.value().size() == width, ErrorCode::ShapeMismatch,
            "stack_rows: ragged rows");
  Var flat = concat(rows);
  return reshape(flat, Shape{rows.size(), width});
}

/// Row t of a matrix as a rank-1 tensor.
inline Var row(Var x, std::size_t t) {
  detail::expect_rank(x.value(), 2, "row");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  require(t < rows, ErrorCode::ShapeMismatch, "row index out of range");
  const auto d = x.value().data().subspan(t * cols, cols);
  Tensor y(Shape{cols}, std::vector<double>(d.begin(), d.end()));
  const auto xid = x.id();
  return x.graph().record(std::move(y), {x},
                          [xid, t, cols](Graph &g, const Tensor &dy) {
                            Tensor &dx = g.grad(xid);
                            for (std::size_t i = 0; i < cols; ++i)
                              dx[t * cols + i] += dy[i];
                          });
}

/// First `count` rows of a matrix.
inline Var leading_rows(Var x, std::size_t count) {
  detail::expect_rank(x.value(), 2, "leading_rows");
  const std::size_t cols = x.shape()[1];
  require(count <= x.shape()[0], ErrorCode::ShapeMismatch,
          "leading_rows beyond matrix height");
  const auto d = x.value().data().first(count * cols);
  Tensor y(Shape{count, cols}, std::vector<double>(d.begin(), d.end()));
  const auto xid = x.id();
  return x.graph().record(std::move(y), {x},
                          [xid](Graph &g, const Tensor &dy) {
                            Tensor &dx = g.grad(xid);
                            for (std::size_t i = 0; i < dy.size(); ++i)
                              dx[i] += dy[i];
                          });
}

inline Var transpose(Var x) {
  detail::expect_rank(x.value(), 2, "transpose");
  Tensor y(Shape{x.shape()[1], x.shape()[0]});
  y.matrix() = x.value().matrix().transpose();
  const auto xid = x.id();
  return x.graph().record(std::move(y), {x},
                          [xid](Graph &g, const Tensor &dy) {
                            g.grad(xid).matrix() += dy.matrix().transpose();
                          });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// op(a) * op(b). Rank-1 operands act as column vectors; a result with a
/// single column is returned as rank-1.
inline Var matmul(Var a, Var b, bool transpose_a = false,
                  bool transpose_b = false) {
  const Tensor &av = a.value(), &bv = b.value();
  require_finite(av, "matmul");
  require_finite(bv, "matmul");
  const auto am = av.matrix(), bm = bv.matrix();
  const auto inner_a = transpose_a ? am.rows() : am.cols();
  const auto inner_b = transpose_b ? bm.cols() : bm.rows();
  require(inner_a == inner_b, ErrorCode::ShapeMismatch,
          "matmul inner dimensions differ: " + shape_str(av.shape()) + " and " +
            shape_str(bv.shape()));
  const auto rows = transpose_a ? am.cols() : am.rows();
  const auto cols = transpose_b ? bm.rows() : bm.cols();
  Tensor y = cols == 1 ? Tensor(Shape{static_cast<std::size_t>(rows)})
                       : Tensor(Shape{static_cast<std::size_t>(rows),
                                      static_cast<std::size_t>(cols)});
  auto ym = y.matrix();
  if (!transpose_a && !transpose_b)
    ym.noalias() = am * bm;
  else if (transpose_a && !transpose_b)
    ym.noalias() = am.transpose() * bm;
  else if (!transpose_a && transpose_b)
    ym.noalias() = am * bm.transpose();
  else
    ym.noalias() = am.transpose() * bm.transpose();

  const auto aid = a.id(), bid = b.id();
  return a.graph().record(
    std::move(y), {a, b},
    [aid, bid, transpose_a, transpose_b](Graph &g, const Tensor &dy) {
      const auto dym = dy.matrix();
      const auto am = g.value(aid).matrix(), bm = g.value(bid).matrix();
      if (g.requires_grad(aid)) {
        auto dam = g.grad(aid).matrix();
        // d op(a) = dy * op(b)^T
        if (!transpose_a) {
          if (!transpose_b)
            dam.noalias() += dym * bm.transpose();
          else
            dam.noalias() += dym * bm;
        } else {
          if (!transpose_b)
            dam.noalias() += bm * dym.transpose();
          else
            dam.noalias() += bm.transpose() * dym.transpose();
        }
      }
      if (g.requires_grad(bid)) {
        auto dbm = g.grad(bid).matrix();
        // d op(b) = op(a)^T * dy
        if (!transpose_b) {
          if (!transpose_a)
            dbm.noalias() += am.transpose() * dym;
          else
            dbm.noalias() += am * dym;
        } else {
          if (!transpose_a)
            dbm.noalias() += dym.transpose() * am;
          else
            dbm.noalias() += dym.transpose() * am.transpose();
        }
      }
    });
}

/// weight [out x in] * x [in] + bias [out].
inline Var linear(Var x, Var weight, Var bias) {
  const Tensor &xv = x.value(), &wv = weight.value(), &bv = bias.value();
  detail::expect_rank(wv, 2, "linear weight");
  require(xv.size() == wv.dim(1) && bv.size() == wv.dim(0),
          ErrorCode::ShapeMismatch,
          "linear: input " + shape_str(xv.shape()) + ", weight " +
            shape_str(wv.shape()) + ", bias " + shape_str(bv.shape()));
  require_finite(xv, "linear");
  Tensor y(Shape{wv.dim(0)});
  y.vec().noalias() = wv.matrix() * xv.vec() + bv.vec();
  const auto xid = x.id(), wid = weight.id(), bid = bias.id();
  return x.graph().record(
    std::move(y), {x, weight, bias},
    [xid, wid, bid](Graph &g, const Tensor &dy) {
      if (g.requires_grad(wid))
        g.grad(wid).matrix().noalias() +=
          dy.vec() * g.value(xid).vec().transpose();
      if (g.requires_grad(xid))
        g.grad(xid).vec().noalias() +=
          g.value(wid).matrix().transpose() * dy.vec();
      if (g.requires_grad(bid))
        g.grad(bid).vec() += dy.vec();
    });
}

inline Var dense(Var x, Var weight, Var bias, Activation act) {
  return activate(linear(x, weight, bias), act);
}

// ---------------------------------------------------------------------------
// Convolution and pooling

namespace detail {

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel_h, kernel_w;
  std::size_t pad_top, pad_left;
  std::size_t out_h, out_w;
};

inline ConvGeometry conv_geometry(const Shape &input, const Shape &kernel,
                                  Padding padding) {
  ConvGeometry geo{input[0], input[1], input[2], kernel[2], kernel[3],
                   0,        0,        0,        0};
  if (padding == Padding::same) {
    geo.pad_top = (geo.kernel_h - 1) / 2;
    geo.pad_left = (geo.kernel_w - 1) / 2;
    geo.out_h = geo.height;
    geo.out_w = geo.width;
  } else {
    require(geo.height >= geo.kernel_h && geo.width >= geo.kernel_w,
            ErrorCode::ShapeMismatch,
            "conv2d VALID input " + shape_str(input) +
              " is smaller than kernel " + shape_str(kernel));
    geo.out_h = geo.height - geo.kernel_h + 1;
    geo.out_w = geo.width - geo.kernel_w + 1;
  }
  return geo;
}

/// Output columns [lo, hi) whose tap at kernel column kj lands inside the
/// input row.
inline std::pair<std::size_t, std::size_t> valid_span(const ConvGeometry &geo,
                                                      std::size_t kj) {
  const auto shift = static_cast<std::ptrdiff_t>(kj) -
                     static_cast<std::ptrdiff_t>(geo.pad_left);
  const auto lo = std::max<std::ptrdiff_t>(0, -shift);
  const auto hi = std::min<std::ptrdiff_t>(
    static_cast<std::ptrdiff_t>(geo.out_w),
    static_cast<std::ptrdiff_t>(geo.width) - shift);
  return {static_cast<std::size_t>(lo),
          static_cast<std::size_t>(std::max(lo, hi))};
}

/// Unfolds input patches into columns: [C*kh*kw, out_h*out_w].
inline RowMatrix im2col(const Tensor &x, const ConvGeometry &geo) {
  RowMatrix cols(geo.channels * geo.kernel_h * geo.kernel_w,
                 geo.out_h * geo.out_w);
  const double *xd = x.data().data();
  for (std::size_t c = 0; c < geo.channels; ++c)
    for (std::size_t ki = 0; ki < geo.kernel_h; ++ki)
      for (std::size_t kj = 0; kj < geo.kernel_w; ++kj) {
        const auto r = static_cast<Eigen::Index>(
          (c * geo.kernel_h + ki) * geo.kernel_w + kj);
        double *dst = cols.row(r).data();
        const auto [lo, hi] = valid_span(geo, kj);
        for (std::size_t oy = 0; oy < geo.out_h; ++oy) {
          double *out = dst + oy * geo.out_w;
          const auto iy = static_cast<std::ptrdiff_t>(oy + ki) -
                          static_cast<std::ptrdiff_t>(geo.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.height) || lo >= hi) {
            std::fill(out, out + geo.out_w, 0.0);
            continue;
          }
          std::fill(out, out + lo, 0.0);
          const double *src = xd + (c * geo.height + static_cast<std::size_t>(iy)) *
                                     geo.width +
                              (lo + kj - geo.pad_left);
          std::copy(src, src + (hi - lo), out + lo);
          std::fill(out + hi, out + geo.out_w, 0.0);
        }
      }
  return cols;
}

inline void col2im_add(const RowMatrix &cols, const ConvGeometry &geo,
                       Tensor &dx) {
  double *xd = dx.data().data();
  for (std::size_t c = 0; c < geo.channels; ++c)
    for (std::size_t ki = 0; ki < geo.kernel_h; ++ki)
      for (std::size_t kj = 0; kj < geo.kernel_w; ++kj) {
        const auto r = static_cast<Eigen::Index>(
          (c * geo.kernel_h + ki) * geo.kernel_w + kj);
        const double *src = cols.row(r).data();
        const auto [lo, hi] = valid_span(geo, kj);
        for (std::size_t oy = 0; oy < geo.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ki) -
                          static_cast<std::ptrdiff_t>(geo.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.height))
            continue;
          double *dst = xd + (c * geo.height + static_cast<std::size_t>(iy)) *
                               geo.width +
                        (kj - geo.pad_left);
          const double *in = src + oy * geo.out_w;
          for (std::size_t ox = lo; ox < hi; ++ox)
            dst[ox] += in[ox];
        }
      }
}

} // namespace detail

/// 2-D convolution (cross-correlation) of input [C_in x H x W] with kernel
/// [C_out x C_in x kh x kw] plus per-channel bias [C_out].
inline Var conv2d(Var input, Var kernel, Var bias, Padding padding) {
  const Tensor &xv = input.value(), &kv = kernel.value(), &bv = bias.value();
  detail::expect_rank(xv, 3, "conv2d input");
  detail::expect_rank(kv, 4, "conv2d kernel");
  require(kv.dim(1) == xv.dim(0) && bv.size() == kv.dim(0),
          ErrorCode::ShapeMismatch,
          "conv2d channels: input " + shape_str(xv.shape()) + ", kernel " +
            shape_str(kv.shape()) + ", bias " + shape_str(bv.shape()));
  require_finite(xv, "conv2d");
  const auto geo = detail::conv_geometry(xv.shape(), kv.shape(), padding);
  RowMatrix cols = detail::im2col(xv, geo);
  const auto out_channels = kv.dim(0);
  const ConstMatrixMap kmat(kv.data().data(),
                            static_cast<Eigen::Index>(out_channels),
                            static_cast<Eigen::Index>(cols.rows()));
  Tensor y(Shape{out_channels, geo.out_h, geo.out_w});
  auto ym = y.matrix();
  ym.noalias() = kmat * cols;
  ym.colwise() += bv.vec();

  const auto xid = input.id(), kid = kernel.id(), bid = bias.id();
  const bool keep_cols = input.graph().requires_grad(kid);
  return input.graph().record(
    std::move(y), {input, kernel, bias},
    [xid, kid, bid, geo, cols = keep_cols ? std::move(cols) : RowMatrix()](
      Graph &g, const Tensor &dy) {
      const auto dym = dy.matrix();
      const Tensor &kv = g.value(kid);
      const auto rows = static_cast<Eigen::Index>(geo.channels * geo.kernel_h *
                                                  geo.kernel_w);
      const ConstMatrixMap kmat(kv.data().data(),
                                static_cast<Eigen::Index>(kv.dim(0)), rows);
      if (g.requires_grad(kid)) {
        MatrixMap dk(g.grad(kid).data().data(),
                     static_cast<Eigen::Index>(kv.dim(0)), rows);
        dk.noalias() += dym * cols.transpose();
      }
      if (g.requires_grad(bid))
        g.grad(bid).vec() += dym.rowwise().sum();
      if (g.requires_grad(xid)) {
        RowMatrix dcols = kmat.transpose() * dym;
        detail::col2im_add(dcols, geo, g.grad(xid));
      }
    });
}

/// 2x2 max-pooling with stride 2 over [C x H x W]; odd trailing rows and
/// columns are dropped. Gradient goes to the first maximum of each window.
inline Var maxpool2d(Var input) {
  const Tensor &xv = input.value();
  detail::expect_rank(xv, 3, "maxpool2d");
  require(xv.dim(1) >= 2 && xv.dim(2) >= 2, ErrorCode::ShapeMismatch,
          "maxpool2d needs spatial dims >= 2, got " + shape_str(xv.shape()));
  require_finite(xv, "maxpool2d");
  const std::size_t C = xv.dim(0), H = xv.dim(1) / 2, W = xv.dim(2) / 2;
  Tensor y(Shape{C, H, W});
  std::vector<std::size_t> argmax(y.size());
  const std::size_t in_w = xv.dim(2), in_h = xv.dim(1);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        std::size_t best = (c * in_h + 2 * i) * in_w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (c * in_h + 2 * i + di) * in_w + 2 * j + dj;
            if (xv[idx] > xv[best])
              best = idx;
          }
        const std::size_t o = (c * H + i) * W + j;
        y[o] = xv[best];
        argmax[o] = best;
      }
  const auto xid = input.id();
  return input.graph().record(std::move(y), {input},
                              [xid, argmax = std::move(argmax)](
                                Graph &g, const Tensor &dy) {
                                Tensor &dx = g.grad(xid);
                                for (std::size_t o = 0; o < dy.size(); ++o)
                                  dx[argmax[o]] += dy[o];
                              });
}

/// Reads [C x F x T] as a sequence of T feature vectors of size C*F
/// (feature index c*F + f): returns [T x C*F].
inline Var to_sequence(Var input) {
  const Tensor &xv = input.value();
  detail::expect_rank(xv, 3, "to_sequence");
  const std::size_t C = xv.dim(0), F = xv.dim(1), T = xv.dim(2);
  Tensor y(Shape{T, C * F});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t t = 0; t < T; ++t)
        y.at(t, c * F + f) = xv.at(c, f, t);
  const auto xid = input.id();
  return input.graph().record(std::move(y), {input},
                              [xid, C, F, T](Graph &g, const Tensor &dy) {
                                Tensor &dx = g.grad(xid);
                                for (std::size_t c = 0; c < C; ++c)
                                  for (std::size_t f = 0; f < F; ++f)
                                    for (std::size_t t = 0; t < T; ++t)
                                      dx.at(c, f, t) += dy.at(t, c * F + f);
                              });
}

// ---------------------------------------------------------------------------
// Dropout

/// Inverted dropout: in train mode entries are zeroed with probability p and
/// survivors scaled by 1/(1-p); eval mode is the identity.
inline Tensor dropout_mask(const Shape &shape, double p, std::uint64_t seed) {
  Tensor mask(shape);
  const double keep_scale = 1.0 / (1.0 - p);
  const std::uint64_t base = splitmix64(seed);
  auto d = mask.data();
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double u =
      static_cast<double>(splitmix64(base + 0x9e3779b97f4a7c15ULL * k) >> 11) * 0x1.0p-53;
    d[k] = u < p ? 0.0 : keep_scale;
  }
  return mask;
}

inline void check_dropout_probability(double p) {
  require(p >= 0.0 && p < 1.0, ErrorCode::BadProbability,
          "dropout probability must lie in [0, 1), got " + std::to_string(p));
}

inline Tensor dropout(const Tensor &input, double p, Mode mode,
                      std::uint64_t seed) {
  check_dropout_probability(p);
  require_finite(input, "dropout");
  if (mode == Mode::eval || p == 0.0)
    return input;
  Tensor out = input;
  out.vec().array() *= dropout_mask(input.shape(), p, seed).vec().array();
  return out;
}

inline Var dropout(Var x, double p, Mode mode, std::uint64_t seed) {
  check_dropout_probability(p);
  require_finite(x.value(), "dropout");
  if (mode == Mode::eval || p == 0.0)
    return x;
  Tensor mask = dropout_mask(x.shape(), p, seed);
  Tensor y = x.value();
  y.vec().array() *= mask.vec().array();
  const auto xid = x.id();
  return x.graph().record(std::move(y), {x},
                          [xid, mask = std::move(mask)](Graph &g,
                                                        const Tensor &dy) {
                            g.grad(xid).vec().array() +=
                              dy.vec().array() * mask.vec().array();
                          });
}

// ---------------------------------------------------------------------------
// GRU

/// Weights of one GRU layer with gates stacked as [update; reset; candidate].
struct GruWeights {
  Var input_weight;     ///< [3H x D]
  Var recurrent_weight; ///< [3H x H]
  Var bias;             ///< [3H]
};

/// One GRU step given the precomputed input projection gx = Wx x + b:
///   z = sigmoid(gx_z + Uz h), r = sigmoid(gx_r + Ur h),
///   n = tanh(gx_n + Un (r * h)),  h' = z * h + (1 - z) * n.
inline Var gru_step(Var gx, Var h, Var recurrent_weight) {
  const Tensor &gxv = gx.value(), &hv = h.value(), &uv = recurrent_weight.value();
  const std::size_t H = hv.size();
  require(gxv.size() == 3 * H && uv.rank() == 2 && uv.dim(0) == 3 * H &&
            uv.dim(1) == H,
          ErrorCode::ShapeMismatch,
          "gru_step: gx " + shape_str(gxv.shape()) + ", h " +
            shape_str(hv.shape()) + ", U " + shape_str(uv.shape()));
  require_finite(gxv, "gru_step");
  require_finite(hv, "gru_step");
  const auto Hi = static_cast<Eigen::Index>(H);
  const auto U = uv.matrix();
  const auto hvec = hv.vec();

  // gates: z, r, n, r*h
  Tensor cache(Shape{4 * H});
  auto z = cache.vec().segment(0, Hi);
  auto r = cache.vec().segment(Hi, Hi);
  auto n = cache.vec().segment(2 * Hi, Hi);
  auto rh = cache.vec().segment(3 * Hi, Hi);
  Eigen::VectorXd zr = gxv.vec().head(2 * Hi) + U.topRows(2 * Hi) * hvec;
  for (Eigen::Index i = 0; i < Hi; ++i) {
    z[i] = detail::sigmoid(zr[i]);
    r[i] = detail::sigmoid(zr[Hi + i]);
  }
  rh = r.cwiseProduct(hvec);
  Eigen::VectorXd na = gxv.vec().segment(2 * Hi, Hi) + U.bottomRows(Hi) * rh;
  for (Eigen::Index i = 0; i < Hi; ++i)
    n[i] = std::tanh(na[i]);

  Tensor out(Shape{H});
  out.vec() = z.cwiseProduct(hvec) +
              (Eigen::VectorXd::Ones(Hi) - z).cwiseProduct(n);

  const auto gid = gx.id(), hid = h.id(), uid = recurrent_weight.id();
  return gx.graph().record(
    std::move(out), {gx, h, recurrent_weight},
    [gid, hid, uid, Hi, cache = std::move(cache)](Graph &g, const Tensor &dy) {
      const auto z = cache.vec().segment(0, Hi);
      const auto r = cache.vec().segment(Hi, Hi);
      const auto n = cache.vec().segment(2 * Hi, Hi);
      const auto rh = cache.vec().segment(3 * Hi, Hi);
      const auto hvec = g.value(hid).vec();
      const auto U = g.value(uid).matrix();
      const auto dh_out = dy.vec();

      Eigen::VectorXd dz = dh_out.cwiseProduct(hvec - n);
      Eigen::VectorXd dn = dh_out.cwiseProduct(Eigen::VectorXd::Ones(Hi) - z);
      Eigen::VectorXd dna =
        dn.cwiseProduct(Eigen::VectorXd::Ones(Hi) - n.cwiseProduct(n));
      Eigen::VectorXd drh = U.bottomRows(Hi).transpose() * dna;
      Eigen::VectorXd dr = drh.cwiseProduct(hvec);
      Eigen::VectorXd dzr(2 * Hi);
      dzr.head(Hi) =
        dz.cwiseProduct(z).cwiseProduct(Eigen::VectorXd::Ones(Hi) - z);
      dzr.tail(Hi) =
        dr.cwiseProduct(r).cwiseProduct(Eigen::VectorXd::Ones(Hi) - r);

      if (g.requires_grad(gid)) {
        auto dgx = g.grad(gid).vec();
        dgx.head(2 * Hi) += dzr;
        dgx.segment(2 * Hi, Hi) += dna;
      }
      if (g.requires_grad(uid)) {
        auto dU = g.grad(uid).matrix();
        dU.topRows(2 * Hi).noalias() += dzr * hvec.transpose();
        dU.bottomRows(Hi).noalias() += dna * rh.transpose();
      }
      if (g.requires_grad(hid)) {
        auto dh = g.grad(hid).vec();
        dh += dh_out.cwiseProduct(z);
        dh += drh.cwiseProduct(r);
        dh.noalias() += U.topRows(2 * Hi).transpose() * dzr;
      }
    });
}

inline Var gru_cell(Var x, Var h, const GruWeights &w) {
  return gru_step(linear(x, w.input_weight, w.bias), h, w.recurrent_weight);
}

struct GruSequence {
  Var outputs;    ///< [T x H], one row per step
  Var last_state; ///< [H]
};

/// Runs a GRU from a zero initial state over the rows of inputs [T x D].
inline GruSequence gru_forward(Var inputs, std::size_t hidden_size,
                               const GruWeights &w) {
  const Tensor &xv = inputs.value();
  detail::expect_rank(xv, 2, "gru_forward");
  require(xv.dim(0) >= 1, ErrorCode::EmptySequence,
          "gru_forward over an empty sequence");
  require(w.input_weight.value().rank() == 2 &&
            w.input_weight.value().dim(0) == 3 * hidden_size &&
            w.input_weight.value().dim(1) == xv.dim(1),
          ErrorCode::ShapeMismatch,
          "gru_forward: input weight " + shape_str(w.input_weight.shape()) +
            " does not fit inputs " + shape_str(xv.shape()));
  Graph &g = inputs.graph();
  // all input projections in one product: [T x 3H]
  Var projected = matmul(inputs, w.input_weight, false, true);
  if (projected.value().rank() == 1)
    projected = reshape(projected, Shape{1, 3 * hidden_size});
  Var h = g.constant(Tensor(Shape{hidden_size}));
  std::vector<Var> states;
  states.reserve(xv.dim(0));
  for (std::size_t t = 0; t < xv.dim(0); ++t) {
    Var gx = add(row(projected, t), w.bias);
    h = gru_step(gx, h, w.recurrent_weight);
    states.push_back(h);
  }
  return {stack_rows(states), h};
}

// ---------------------------------------------------------------------------
// Attention

struct AttentionResult {
  Var context; ///< [K]
  Var weights; ///< [N]
};

/// weights = softmax(keys^T query), context = values * weights, with keys and
/// values as [K x N].
inline AttentionResult dot_product_attention(Var query, Var keys, Var values) {
  const Tensor &kv = keys.value();
  detail::expect_rank(kv, 2, "attention keys");
  require(kv.dim(1) >= 1, ErrorCode::EmptySequence,
          "attention over zero positions");
  require(query.value().size() == kv.dim(0), ErrorCode::ShapeMismatch,
          "attention query " + shape_str(query.shape()) + " vs keys " +
            shape_str(kv.shape()));
  require(values.value().rank() == 2 && values.shape()[1] == kv.dim(1),
          ErrorCode::ShapeMismatch, "attention values/keys length mismatch");
  Var scores = matmul(keys, query, true, false);
  if (scores.value().rank() != 1)
    scores = reshape(scores, Shape{kv.dim(1)});
  Var weights = softmax(scores);
  Var context = matmul(values, weights);
  if (context.value().rank() != 1)
    context = reshape(context, Shape{values.shape()[0]});
  return {context, weights};
}

// ---------------------------------------------------------------------------
// Losses

/// Mean of squared differences over all entries.
inline Var mean_squared_error(Var prediction, const Tensor &target) {
  require(prediction.value().size() == target.size(), ErrorCode::ShapeMismatch,
          "mse: prediction " + shape_str(prediction.shape()) + " vs target " +
            shape_str(target.shape()));
  require_finite(target, "mse");
  const double n = static_cast<double>(target.size());
  Tensor diff = prediction.value();
  diff.vec() -= target.vec();
  const double loss = diff.vec().squaredNorm() / n;
  const auto pid = prediction.id();
  return prediction.graph().record(
    Tensor::scalar(loss), {prediction},
    [pid, n, diff = std::move(diff)](Graph &g, const Tensor &dy) {
      g.grad(pid).vec() += (2.0 * dy[0] / n) * diff.vec();
    });
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Binary cross-entropy on p = probs[1] (clamped to [1e-7, 1-1e-7]):
/// -[y ln p + (1-y) ln(1-p)].
inline Var binary_cross_entropy(Var probs, int label) {
  require(probs.value().size() == 2, ErrorCode::ShapeMismatch,
          "binary_cross_entropy expects two class probabilities");
  require(label == 0 || label == 1, ErrorCode::BadConfig,
          "label must be 0 or 1");
  const double raw = probs.value()[1];
  const double p = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const double y = label;
  const double loss = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  const bool clamped = p != raw;
  const auto pid = probs.id();
  return probs.graph().record(
    Tensor::scalar(loss), {probs},
    [pid, p, y, clamped](Graph &g, const Tensor &dy) {
      if (clamped)
        return;
      g.grad(pid)[1] += dy[0] * (-y / p + (1.0 - y) / (1.0 - p));
    });
}

} // namespace dyslat::nn

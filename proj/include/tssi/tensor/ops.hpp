#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "tssi/tensor/interp.hpp"
#include "tssi/tensor/tensor.hpp"

namespace tssi {

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

/// Maps output positions of a broadcast onto one operand.
class BroadcastIndex {
 public:
  BroadcastIndex(const Shape& out, const Shape& in) : in_numel_(tssi::numel(in)) {
    if (in == out) {
      kind_ = Kind::same;
    } else if (in_numel_ == 1) {
      kind_ = Kind::scalar;
    } else if (is_suffix(out, in)) {
      kind_ = Kind::suffix;
    } else {
      kind_ = Kind::general;
      build(out, in);
    }
  }

  std::size_t operator()(std::size_t i) const {
    switch (kind_) {
      case Kind::same: return i;
      case Kind::scalar: return 0;
      case Kind::suffix: return i % in_numel_;
      case Kind::general: return map_[i];
    }
    return 0;
  }

 private:
  enum class Kind { same, scalar, suffix, general };

  static bool is_suffix(const Shape& out, const Shape& in) {
    std::size_t lead = 0;
    while (lead < in.size() && in[lead] == 1) ++lead;
    const std::size_t len = in.size() - lead;
    if (len > out.size()) return false;
    return std::equal(in.begin() + static_cast<std::ptrdiff_t>(lead), in.end(),
                      out.end() - static_cast<std::ptrdiff_t>(len));
  }

  void build(const Shape& out, const Shape& in) {
    const std::size_t rank = out.size();
    std::vector<std::size_t> in_stride(rank, 0);
    std::size_t stride = 1;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const std::size_t axis = in.size() - 1 - k;
      const std::size_t out_axis = rank - 1 - k;
      in_stride[out_axis] = in[axis] == 1 ? 0 : stride;
      stride *= in[axis];
    }
    const std::size_t total = tssi::numel(out);
    map_.resize(total);
    std::vector<std::size_t> coord(rank, 0);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < total; ++i) {
      map_[i] = offset;
      for (std::size_t a = rank; a-- > 0;) {
        ++coord[a];
        offset += in_stride[a];
        if (coord[a] < out[a]) break;
        offset -= in_stride[a] * coord[a];
        coord[a] = 0;
      }
    }
  }

  Kind kind_ = Kind::same;
  std::size_t in_numel_;
  std::vector<std::size_t> map_;
};

inline std::size_t checked_axis(const Tensor& x, std::ptrdiff_t axis, const char* op) {
  const auto rank = static_cast<std::ptrdiff_t>(x.rank());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis out of range for shape " + shape_str(x.shape()));
  }
  return static_cast<std::size_t>(axis);
}

/// Splits a shape into (outer, extent, inner) around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

inline void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

enum class BinaryOp { add, mul };

inline Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op) {
  Shape out_shape = detail::broadcast_shape(a.shape(), b.shape());
  const std::size_t total = numel(out_shape);
  detail::BroadcastIndex ia(out_shape, a.shape());
  detail::BroadcastIndex ib(out_shape, b.shape());
  std::vector<double> out(total);
  const double* pa = a.data();
  const double* pb = b.data();
  if (op == BinaryOp::add) {
    for (std::size_t i = 0; i < total; ++i) out[i] = pa[ia(i)] + pb[ib(i)];
  } else {
    for (std::size_t i = 0; i < total; ++i) out[i] = pa[ia(i)] * pb[ib(i)];
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), {a, b},
      [a, b, op, ia = std::move(ia), ib = std::move(ib)](detail::Node& node) {
        const auto& g = node.grad;
        if (a.requires_grad()) {
          auto& ga = a.node()->grad_buffer();
          if (op == BinaryOp::add) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[ia(i)] += g[i];
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) ga[ia(i)] += g[i] * b.data()[ib(i)];
          }
        }
        if (b.requires_grad()) {
          auto& gb = b.node()->grad_buffer();
          if (op == BinaryOp::add) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[ib(i)] += g[i];
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) gb[ib(i)] += g[i] * a.data()[ia(i)];
          }
        }
      });
}

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::add); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::mul); }

inline Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values());
  for (auto& v : out) v *= factor;
  return detail::make_result(x.shape(), std::move(out), {x}, [x, factor](detail::Node& node) {
    auto& gx = x.node()->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * node.grad[i];
  });
}

enum class Activation { relu, sigmoid, tanh };

inline Tensor pointwise(const Tensor& x, Activation f) {
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  const double* px = x.data();
  switch (f) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = px[i] > 0.0 ? px[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-px[i]));
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(px[i]);
      break;
  }
  return detail::make_result(x.shape(), std::move(out), {x}, [x, f](detail::Node& node) {
    auto& gx = x.node()->grad_buffer();
    const auto& y = node.value;
    const auto& g = node.grad;
    const double* px = x.data();
    switch (f) {
      case Activation::relu:
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += px[i] > 0.0 ? g[i] : 0.0;
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
    }
  });
}

inline Tensor relu(const Tensor& x) { return pointwise(x, Activation::relu); }
inline Tensor sigmoid(const Tensor& x) { return pointwise(x, Activation::sigmoid); }
inline Tensor tanh(const Tensor& x) { return pointwise(x, Activation::tanh); }

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return detail::make_result(std::move(shape), x.values(), {x}, [x](detail::Node& node) {
    auto& gx = x.node()->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i];
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis_arg) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t axis = detail::checked_axis(parts.front(), axis_arg, "concat");
  Shape out_shape = parts.front().shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < probe.size(); ++i) {
      if (i != axis && probe[i] != parts.front().shape()[i]) {
        throw ShapeError("concat: shape mismatch " + shape_str(probe) + " vs " +
                         shape_str(parts.front().shape()));
      }
    }
    out_shape[axis] += probe[axis];
  }
  const auto split = detail::split_at(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.dim(axis) * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(p.data() + o * chunk, chunk,
                  out.data() + o * split.extent * split.inner + offset * split.inner);
    }
    offset += p.dim(axis);
  }

  Tensor result(out_shape, std::move(out));
  if (!grad_enabled()) return result;
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (!any) return result;
  detail::Node* node = result.node();
  node->requires_grad = true;
  for (const auto& p : parts) node->parents.push_back(p.node_ptr());
  node->backward = [node, parts, split, axis]() {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t extent = p.dim(axis);
      if (p.requires_grad()) {
        auto& gp = p.node()->grad_buffer();
        const std::size_t chunk = extent * split.inner;
        for (std::size_t o = 0; o < split.outer; ++o) {
          const double* src = node->grad.data() + o * split.extent * split.inner + off * split.inner;
          for (std::size_t j = 0; j < chunk; ++j) gp[o * chunk + j] += src[j];
        }
      }
      off += extent;
    }
  };
  return result;
}

inline Tensor slice(const Tensor& x, std::ptrdiff_t axis_arg, std::size_t start, std::size_t length) {
  const std::size_t axis = detail::checked_axis(x, axis_arg, "slice");
  if (start + length > x.dim(axis) || length == 0) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside axis of extent " + std::to_string(x.dim(axis)));
  }
  const auto split = detail::split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> out(numel(out_shape));
  const std::size_t chunk = length * split.inner;
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(x.data() + o * split.extent * split.inner + start * split.inner, chunk,
                out.data() + o * chunk);
  }
  return detail::make_result(std::move(out_shape), std::move(out), {x},
                             [x, split, start, chunk](detail::Node& node) {
                               auto& gx = x.node()->grad_buffer();
                               for (std::size_t o = 0; o < split.outer; ++o) {
                                 double* dst = gx.data() + o * split.extent * split.inner +
                                               start * split.inner;
                                 const double* src = node.grad.data() + o * chunk;
                                 for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
                               }
                             });
}

// ---------------------------------------------------------------------------
// Reductions

enum class ReduceOp { sum, mean };

/// Reduces over `axes` (dropped from the result shape). An empty axis list
/// reduces over everything and yields a scalar.
inline Tensor reduce(const Tensor& x, ReduceOp op, std::vector<std::ptrdiff_t> axes = {}) {
  const std::size_t rank = x.rank();
  std::vector<bool> reduced(rank, axes.empty());
  for (auto a : axes) reduced[detail::checked_axis(x, a, "reduce")] = true;

  Shape out_shape;
  std::vector<std::size_t> out_stride(rank, 0);
  {
    std::size_t stride = 1;
    for (std::size_t a = rank; a-- > 0;) {
      if (!reduced[a]) {
        out_stride[a] = stride;
        stride *= x.dim(a);
      }
    }
    for (std::size_t a = 0; a < rank; ++a) {
      if (!reduced[a]) out_shape.push_back(x.dim(a));
    }
  }
  const std::size_t total = x.numel();
  const std::size_t out_total = numel(out_shape);
  const double count = out_total == 0 ? 1.0 : static_cast<double>(total) / static_cast<double>(out_total);
  const double factor = op == ReduceOp::mean ? 1.0 / count : 1.0;

  std::vector<std::size_t> map(total);
  std::vector<std::size_t> coord(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < total; ++i) {
    map[i] = offset;
    for (std::size_t a = rank; a-- > 0;) {
      ++coord[a];
      offset += out_stride[a];
      if (coord[a] < x.dim(a)) break;
      offset -= out_stride[a] * coord[a];
      coord[a] = 0;
    }
  }
  std::vector<double> out(out_total, 0.0);
  for (std::size_t i = 0; i < total; ++i) out[map[i]] += x.data()[i];
  for (auto& v : out) v *= factor;

  return detail::make_result(std::move(out_shape), std::move(out), {x},
                             [x, factor, map = std::move(map)](detail::Node& node) {
                               auto& gx = x.node()->grad_buffer();
                               for (std::size_t i = 0; i < gx.size(); ++i) {
                                 gx[i] += factor * node.grad[map[i]];
                               }
                             });
}

inline Tensor sum(const Tensor& x, std::vector<std::ptrdiff_t> axes = {}) {
  return reduce(x, ReduceOp::sum, std::move(axes));
}
inline Tensor mean(const Tensor& x, std::vector<std::ptrdiff_t> axes = {}) {
  return reduce(x, ReduceOp::mean, std::move(axes));
}

// ---------------------------------------------------------------------------
// Softmax and losses

inline Tensor softmax(const Tensor& x, std::ptrdiff_t axis_arg) {
  const std::size_t axis = detail::checked_axis(x, axis_arg, "softmax");
  const auto s = detail::split_at(x.shape(), axis);
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.extent; ++k) peak = std::max(peak, x.data()[base + k * s.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(x.data()[base + k * s.inner] - peak);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= total;
    }
  }
  return detail::make_result(x.shape(), std::move(out), {x}, [x, s](detail::Node& node) {
    auto& gx = x.node()->grad_buffer();
    const auto& y = node.value;
    const auto& g = node.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t idx = base + k * s.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

/// Mean negative log-likelihood of `labels` under softmax(logits), logits
/// shaped [N, classes].
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  detail::require_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (labels.size() != n) throw ShapeError("cross_entropy: label count does not match batch");
  std::vector<double> prob(n * c);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= c) throw ShapeError("cross_entropy: label out of range");
    const double* row = logits.data() + r * c;
    const double peak = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) total += std::exp(row[k] - peak);
    const double log_total = std::log(total) + peak;
    for (std::size_t k = 0; k < c; ++k) prob[r * c + k] = std::exp(row[k] - log_total);
    loss += log_total - row[labels[r]];
  }
  loss /= static_cast<double>(n);
  return detail::make_result(Shape{}, {loss}, {logits},
                             [logits, labels, prob = std::move(prob), n, c](detail::Node& node) {
                               auto& gl = logits.node()->grad_buffer();
                               const double g = node.grad[0] / static_cast<double>(n);
                               for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t k = 0; k < c; ++k) {
                                   const double target = k == labels[r] ? 1.0 : 0.0;
                                   gl[r * c + k] += g * (prob[r * c + k] - target);
                                 }
                               }
                             });
}

// ---------------------------------------------------------------------------
// Dense layers

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  detail::MatrixMap(out.data(), m, n).noalias() =
      detail::ConstMatrixMap(a.data(), m, k) * detail::ConstMatrixMap(b.data(), k, n);
  return detail::make_result(Shape{a.dim(0), b.dim(1)}, std::move(out), {a, b},
                             [a, b, m, k, n](detail::Node& node) {
                               detail::ConstMatrixMap g(node.grad.data(), m, n);
                               if (a.requires_grad()) {
                                 detail::MatrixMap(a.node()->grad_buffer().data(), m, k).noalias() +=
                                     g * detail::ConstMatrixMap(b.data(), k, n).transpose();
                               }
                               if (b.requires_grad()) {
                                 detail::MatrixMap(b.node()->grad_buffer().data(), k, n).noalias() +=
                                     detail::ConstMatrixMap(a.data(), m, k).transpose() * g;
                               }
                             });
}

/// x[N, Din] * W[Din, Dout] + b[Dout].
inline Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require_rank(bias, 1, "affine");
  if (weight.rank() != 2 || bias.dim(0) != weight.dim(1)) {
    throw ShapeError("affine: weight " + shape_str(weight.shape()) + " and bias " +
                     shape_str(bias.shape()) + " disagree");
  }
  return add(matmul(x, weight), bias);
}

// ---------------------------------------------------------------------------
// Spatial ops over NHWC tensors

namespace detail {

struct ConvGeometry {
  std::size_t n, h, w, cin, kh, kw, cout, stride, pad, oh, ow;
  std::size_t rows() const { return n * oh * ow; }
  std::size_t cols() const { return kh * kw * cin; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

inline void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t width = g.cols();
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        double* row = cols + ((b * g.oh + oy) * g.ow + ox) * width;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            double* dst = row + (ky * g.kw + kx) * g.cin;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                ix >= static_cast<std::ptrdiff_t>(g.w)) {
              std::fill_n(dst, g.cin, 0.0);
            } else {
              std::copy_n(x + ((b * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)) * g.cin,
                          g.cin, dst);
            }
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* cols, const ConvGeometry& g, double* gx) {
  const std::size_t width = g.cols();
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const double* row = cols + ((b * g.oh + oy) * g.ow + ox) * width;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            const double* src = row + (ky * g.kw + kx) * g.cin;
            double* dst = gx + ((b * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)) * g.cin;
            for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation of x[N,H,W,Cin] with k[kh,kw,Cin,Cout], zero padded.
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride = 1, std::size_t padding = 0) {
  detail::require_rank(x, 4, "conv2d");
  detail::require_rank(kernel, 4, "conv2d");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (kernel.dim(2) != x.dim(3)) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(3)) + " channels, kernel expects " +
                     std::to_string(kernel.dim(2)));
  }
  detail::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel.dim(0), kernel.dim(1),
                         kernel.dim(3), stride, padding, 0, 0};
  if (g.h + 2 * padding < g.kh || g.w + 2 * padding < g.kw) {
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;

  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto width = static_cast<Eigen::Index>(g.cols());
  const auto cout = static_cast<Eigen::Index>(g.cout);

  std::vector<double> cols;
  const double* col_ptr = x.data();
  if (!g.is_pointwise()) {
    cols.resize(g.rows() * g.cols());
    detail::im2col(x.data(), g, cols.data());
    col_ptr = cols.data();
  }
  std::vector<double> out(g.rows() * g.cout);
  detail::MatrixMap(out.data(), rows, cout).noalias() =
      detail::ConstMatrixMap(col_ptr, rows, width) * detail::ConstMatrixMap(kernel.data(), width, cout);

  return detail::make_result(
      Shape{g.n, g.oh, g.ow, g.cout}, std::move(out), {x, kernel},
      [x, kernel, g, cols = std::move(cols), rows, width, cout](detail::Node& node) {
        detail::ConstMatrixMap grad_out(node.grad.data(), rows, cout);
        if (kernel.requires_grad()) {
          const double* col_ptr = g.is_pointwise() ? x.data() : cols.data();
          detail::MatrixMap(kernel.node()->grad_buffer().data(), width, cout).noalias() +=
              detail::ConstMatrixMap(col_ptr, rows, width).transpose() * grad_out;
        }
        if (x.requires_grad()) {
          auto& gx = x.node()->grad_buffer();
          if (g.is_pointwise()) {
            detail::MatrixMap(gx.data(), rows, width).noalias() +=
                grad_out * detail::ConstMatrixMap(kernel.data(), width, cout).transpose();
          } else {
            detail::RowMatrix grad_cols =
                grad_out * detail::ConstMatrixMap(kernel.data(), width, cout).transpose();
            detail::col2im_add(grad_cols.data(), g, gx.data());
          }
        }
      });
}

/// Per-channel window maximum. Gradient goes to the first row-major maximum.
inline Tensor maxpool2d(const Tensor& x, std::size_t window = 2, std::size_t stride = 2) {
  detail::require_rank(x, 4, "maxpool2d");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (window == 0 || stride == 0) throw ShapeError("maxpool2d: window and stride must be positive");
  if (window > h || window > w) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " exceeds spatial size of " +
                     shape_str(x.shape()));
  }
  const std::size_t oh = (h - window) / stride + 1;
  const std::size_t ow = (w - window) / stride + 1;
  std::vector<double> out(n * oh * ow * c);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t ky = 0; ky < window; ++ky) {
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t idx = ((b * h + oy * stride + ky) * w + ox * stride + kx) * c + ch;
              if (x.data()[idx] > best) {
                best = x.data()[idx];
                best_idx = idx;
              }
            }
          }
          const std::size_t o = ((b * oh + oy) * ow + ox) * c + ch;
          out[o] = best;
          argmax[o] = best_idx;
        }
      }
    }
  }
  return detail::make_result(Shape{n, oh, ow, c}, std::move(out), {x},
                             [x, argmax = std::move(argmax)](detail::Node& node) {
                               auto& gx = x.node()->grad_buffer();
                               for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += node.grad[o];
                             });
}

/// Align-corners bilinear resize of x[N,H,W,C] to [N,out_h,out_w,C].
inline Tensor bilinear_upsample(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  detail::require_rank(x, 4, "bilinear_upsample");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_upsample: zero-size target");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  auto ty = interp::align_corners_taps(h, out_h);
  auto tx = interp::align_corners_taps(w, out_w);
  std::vector<double> out(n * out_h * out_w * c);
  const double* px = x.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& ry = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& rx = tx[ox];
        const double* p00 = px + ((b * h + ry.lo) * w + rx.lo) * c;
        const double* p01 = px + ((b * h + ry.lo) * w + rx.hi) * c;
        const double* p10 = px + ((b * h + ry.hi) * w + rx.lo) * c;
        const double* p11 = px + ((b * h + ry.hi) * w + rx.hi) * c;
        double* dst = out.data() + ((b * out_h + oy) * out_w + ox) * c;
        const double w00 = (1 - ry.weight) * (1 - rx.weight), w01 = (1 - ry.weight) * rx.weight;
        const double w10 = ry.weight * (1 - rx.weight), w11 = ry.weight * rx.weight;
        for (std::size_t ch = 0; ch < c; ++ch) {
          dst[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
        }
      }
    }
  }
  return detail::make_result(
      Shape{n, out_h, out_w, c}, std::move(out), {x},
      [x, ty = std::move(ty), tx = std::move(tx), n, h, w, c, out_h, out_w](detail::Node& node) {
        auto& gx = x.node()->grad_buffer();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto& ry = ty[oy];
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const auto& rx = tx[ox];
              const double* g = node.grad.data() + ((b * out_h + oy) * out_w + ox) * c;
              double* p00 = gx.data() + ((b * h + ry.lo) * w + rx.lo) * c;
              double* p01 = gx.data() + ((b * h + ry.lo) * w + rx.hi) * c;
              double* p10 = gx.data() + ((b * h + ry.hi) * w + rx.lo) * c;
              double* p11 = gx.data() + ((b * h + ry.hi) * w + rx.hi) * c;
              const double w00 = (1 - ry.weight) * (1 - rx.weight), w01 = (1 - ry.weight) * rx.weight;
              const double w10 = ry.weight * (1 - rx.weight), w11 = ry.weight * rx.weight;
              for (std::size_t ch = 0; ch < c; ++ch) {
                p00[ch] += w00 * g[ch];
                p01[ch] += w01 * g[ch];
                p10[ch] += w10 * g[ch];
                p11[ch] += w11 * g[ch];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Batch normalization over the last axis

enum class Mode { train, eval };

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Normalizes each channel (last axis) of x. In train mode the batch
/// statistics are used and folded into the running buffers; in eval mode the
/// running buffers are used as constants.
inline Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                        Tensor& running_var, Mode mode, BatchNormOptions opt = {}) {
  if (x.rank() == 0) throw ShapeError("batchnorm: scalar input");
  const std::size_t c = x.dim(x.rank() - 1);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c) {
    throw ShapeError("batchnorm: parameter size does not match " + std::to_string(c) + " channels");
  }
  const std::size_t m = x.numel() / c;
  if (m == 0) throw ShapeError("batchnorm: empty batch");
  const double* px = x.data();

  std::vector<double> mu(c, 0.0), inv_std(c, 0.0);
  if (mode == Mode::train) {
    std::vector<double> var(c, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) mu[ch] += px[i * c + ch];
    }
    for (auto& v : mu) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = px[i * c + ch] - mu[ch];
        var[ch] += d * d;
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      var[ch] /= static_cast<double>(m);
      inv_std[ch] = 1.0 / std::sqrt(var[ch] + opt.eps);
      running_mean.values()[ch] = (1 - opt.momentum) * running_mean[ch] + opt.momentum * mu[ch];
      running_var.values()[ch] = (1 - opt.momentum) * running_var[ch] + opt.momentum * var[ch];
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(running_var[ch] + opt.eps);
    }
  }

  std::vector<double> xhat(x.numel()), out(x.numel());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t idx = i * c + ch;
      xhat[idx] = (px[idx] - mu[ch]) * inv_std[ch];
      out[idx] = gamma[ch] * xhat[idx] + beta[ch];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, mode, m, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& node) {
        const auto& g = node.grad;
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            sum_g[ch] += g[i * c + ch];
            sum_gx[ch] += g[i * c + ch] * xhat[i * c + ch];
          }
        }
        if (gamma.requires_grad()) {
          auto& gg = gamma.node()->grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_gx[ch];
        }
        if (beta.requires_grad()) {
          auto& gb = beta.node()->grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
        }
        if (!x.requires_grad()) return;
        auto& gx = x.node()->grad_buffer();
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t idx = i * c + ch;
            const double scale = gamma[ch] * inv_std[ch];
            if (mode == Mode::train) {
              gx[idx] += scale * (g[idx] - inv_m * sum_g[ch] - xhat[idx] * inv_m * sum_gx[ch]);
            } else {
              gx[idx] += scale * g[idx];
            }
          }
        }
      });
}

}  // namespace tssi

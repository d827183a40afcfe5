#include "scn/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scn {

namespace {

template <typename Scalar>
using Node = detail::Node<Scalar>;

template <typename Scalar>
VectorX<Scalar>* grad_of(Node<Scalar>& node, std::size_t parent) {
  auto& p = *node.parents[parent];
  return p.requires_grad ? &p.grad : nullptr;
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <typename Scalar>
void require_rank(const Tensor<Scalar>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(a.shape()));
  }
}

int normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError(std::string(op) + ": axis out of range for rank " + std::to_string(r));
  }
  return axis;
}

struct AxisSplit {
  Index outer = 1;
  Index length = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "add");
  return detail::make_result<Scalar>(
      a.shape(), a.value() + b.value(), {a, b},
      [](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) *g += n.grad;
        if (auto* g = grad_of(n, 1)) *g += n.grad;
      },
      "add");
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "sub");
  return detail::make_result<Scalar>(
      a.shape(), a.value() - b.value(), {a, b},
      [](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) *g += n.grad;
        if (auto* g = grad_of(n, 1)) *g -= n.grad;
      },
      "sub");
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "mul");
  return detail::make_result<Scalar>(
      a.shape(), a.value().cwiseProduct(b.value()), {a, b},
      [](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) *g += n.grad.cwiseProduct(n.parents[1]->value);
        if (auto* g = grad_of(n, 1)) *g += n.grad.cwiseProduct(n.parents[0]->value);
      },
      "mul");
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  return detail::make_result<Scalar>(
      a.shape(), a.value() * factor, {a},
      [factor](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) *g += n.grad * factor;
      },
      "scale");
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar offset) {
  return detail::make_result<Scalar>(
      a.shape(), (a.value().array() + offset).matrix(), {a},
      [](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) *g += n.grad;
      },
      "add_scalar");
}

template <typename Scalar>
Tensor<Scalar> add_row_vector(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  require_rank(x, 2, "add_row_vector");
  require_rank(bias, 1, "add_row_vector");
  if (bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_row_vector: bias " + to_string(bias.shape()) +
                         " does not match columns of " + to_string(x.shape()));
  }
  const Index rows = x.dim(0), cols = x.dim(1);
  VectorX<Scalar> out(x.size());
  MatrixMap<Scalar>(out.data(), rows, cols) =
      x.matrix().rowwise() + bias.value().transpose();
  return detail::make_result<Scalar>(
      x.shape(), std::move(out), {x, bias},
      [rows, cols](Node<Scalar>& n) {
        ConstMatrixMap<Scalar> dy(n.grad.data(), rows, cols);
        if (auto* g = grad_of(n, 0)) *g += n.grad;
        if (auto* g = grad_of(n, 1)) *g += dy.colwise().sum().transpose();
      },
      "add_row_vector");
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  VectorX<Scalar> out(m * n);
  MatrixMap<Scalar>(out.data(), m, n).noalias() = a.matrix() * b.matrix();
  return detail::make_result<Scalar>(
      {m, n}, std::move(out), {a, b},
      [m, k, n](Node<Scalar>& node) {
        ConstMatrixMap<Scalar> dy(node.grad.data(), m, n);
        ConstMatrixMap<Scalar> av(node.parents[0]->value.data(), m, k);
        ConstMatrixMap<Scalar> bv(node.parents[1]->value.data(), k, n);
        if (auto* g = grad_of(node, 0)) {
          MatrixMap<Scalar>(g->data(), m, k).noalias() += dy * bv.transpose();
        }
        if (auto* g = grad_of(node, 1)) {
          MatrixMap<Scalar>(g->data(), k, n).noalias() += av.transpose() * dy;
        }
      },
      "matmul");
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  return detail::make_result<Scalar>(
      Shape{}, VectorX<Scalar>::Constant(1, a.value().sum()), {a},
      [](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) g->array() += n.grad[0];
      },
      "sum");
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  if (a.size() == 0) throw DimensionError("mean: empty tensor");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.size());
  return detail::make_result<Scalar>(
      Shape{}, VectorX<Scalar>::Constant(1, a.value().sum() * inv), {a},
      [inv](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) g->array() += n.grad[0] * inv;
      },
      "mean");
}

template <typename Scalar>
Tensor<Scalar> row_sum(const Tensor<Scalar>& a) {
  require_rank(a, 2, "row_sum");
  const Index rows = a.dim(0), cols = a.dim(1);
  VectorX<Scalar> out = a.matrix().rowwise().sum();
  return detail::make_result<Scalar>(
      {rows}, std::move(out), {a},
      [rows, cols](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) {
          MatrixMap<Scalar>(g->data(), rows, cols).colwise() += n.grad;
        }
      },
      "row_sum");
}

template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& a) {
  return detail::make_result<Scalar>(
      a.shape(), a.value().cwiseAbs(), {a},
      [](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) {
          const auto& x = n.parents[0]->value;
          for (Index i = 0; i < x.size(); ++i) {
            const Scalar sign = x[i] > 0 ? Scalar(1) : (x[i] < 0 ? Scalar(-1) : Scalar(0));
            (*g)[i] += sign * n.grad[i];
          }
        }
      },
      "abs");
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
  return detail::make_result<Scalar>(
      a.shape(), a.value().array().log().matrix(), {a},
      [](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) *g += n.grad.cwiseQuotient(n.parents[0]->value);
      },
      "log");
}

template <typename Scalar>
Tensor<Scalar> pow(const Tensor<Scalar>& a, Scalar exponent) {
  return detail::make_result<Scalar>(
      a.shape(), a.value().array().pow(exponent).matrix(), {a},
      [exponent](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) {
          g->array() += n.grad.array() * exponent *
                        n.parents[0]->value.array().pow(exponent - Scalar(1));
        }
      },
      "pow");
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return detail::make_result<Scalar>(
      x.shape(), x.value().cwiseMax(Scalar(0)), {x},
      [](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) {
          const auto& v = n.parents[0]->value;
          for (Index i = 0; i < v.size(); ++i) {
            if (v[i] > 0) (*g)[i] += n.grad[i];
          }
        }
      },
      "relu");
}

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope) {
  VectorX<Scalar> out = x.value();
  for (Index i = 0; i < out.size(); ++i) {
    if (out[i] < 0) out[i] *= slope;
  }
  return detail::make_result<Scalar>(
      x.shape(), std::move(out), {x},
      [slope](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) {
          const auto& v = n.parents[0]->value;
          for (Index i = 0; i < v.size(); ++i) {
            (*g)[i] += v[i] < 0 ? slope * n.grad[i] : n.grad[i];
          }
        }
      },
      "leaky_relu");
}

namespace {

template <typename Scalar>
VectorX<Scalar> softmax_values(const VectorX<Scalar>& x, const AxisSplit& s, bool log_space) {
  VectorX<Scalar> out(x.size());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index in = 0; in < s.inner; ++in) {
      const Index base = o * s.length * s.inner + in;
      Scalar hi = -std::numeric_limits<Scalar>::infinity();
      for (Index j = 0; j < s.length; ++j) hi = std::max(hi, x[base + j * s.inner]);
      Scalar total = 0;
      for (Index j = 0; j < s.length; ++j) total += std::exp(x[base + j * s.inner] - hi);
      const Scalar log_total = std::log(total);
      for (Index j = 0; j < s.length; ++j) {
        const Scalar shifted = x[base + j * s.inner] - hi;
        out[base + j * s.inner] = log_space ? shifted - log_total : std::exp(shifted) / total;
      }
    }
  }
  return out;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, int axis) {
  axis = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  return detail::make_result<Scalar>(
      x.shape(), softmax_values(x.value(), s, false), {x},
      [s](Node<Scalar>& n) {
        auto* g = grad_of(n, 0);
        if (!g) return;
        const auto& y = n.value;
        for (Index o = 0; o < s.outer; ++o) {
          for (Index in = 0; in < s.inner; ++in) {
            const Index base = o * s.length * s.inner + in;
            Scalar dot = 0;
            for (Index j = 0; j < s.length; ++j) {
              dot += n.grad[base + j * s.inner] * y[base + j * s.inner];
            }
            for (Index j = 0; j < s.length; ++j) {
              const Index i = base + j * s.inner;
              (*g)[i] += y[i] * (n.grad[i] - dot);
            }
          }
        }
      },
      "softmax");
}

template <typename Scalar>
Tensor<Scalar> log_softmax(const Tensor<Scalar>& x, int axis) {
  axis = normalize_axis(axis, x.rank(), "log_softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  return detail::make_result<Scalar>(
      x.shape(), softmax_values(x.value(), s, true), {x},
      [s](Node<Scalar>& n) {
        auto* g = grad_of(n, 0);
        if (!g) return;
        const auto& y = n.value;
        for (Index o = 0; o < s.outer; ++o) {
          for (Index in = 0; in < s.inner; ++in) {
            const Index base = o * s.length * s.inner + in;
            Scalar total = 0;
            for (Index j = 0; j < s.length; ++j) total += n.grad[base + j * s.inner];
            for (Index j = 0; j < s.length; ++j) {
              const Index i = base + j * s.inner;
              (*g)[i] += n.grad[i] - std::exp(y[i]) * total;
            }
          }
        }
      },
      "log_softmax");
}

template <typename Scalar>
Tensor<Scalar> scale_rows_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& s) {
  require_rank(a, 2, "scale_rows_cols");
  require_rank(s, 1, "scale_rows_cols");
  const Index n = a.dim(0);
  if (a.dim(1) != n || s.dim(0) != n) {
    throw DimensionError("scale_rows_cols: need square matrix and matching scale, got " +
                         to_string(a.shape()) + " and " + to_string(s.shape()));
  }
  VectorX<Scalar> out(a.size());
  MatrixMap<Scalar>(out.data(), n, n) =
      s.value().asDiagonal() * a.matrix() * s.value().asDiagonal();
  return detail::make_result<Scalar>(
      a.shape(), std::move(out), {a, s},
      [n](Node<Scalar>& node) {
        ConstMatrixMap<Scalar> dy(node.grad.data(), n, n);
        ConstMatrixMap<Scalar> av(node.parents[0]->value.data(), n, n);
        const auto& sv = node.parents[1]->value;
        if (auto* g = grad_of(node, 0)) {
          MatrixMap<Scalar>(g->data(), n, n) += sv.asDiagonal() * dy * sv.asDiagonal();
        }
        if (auto* g = grad_of(node, 1)) {
          // d/ds_k of s_i a_ij s_j picks up the row-k and column-k terms.
          const MatrixX<Scalar> weighted = dy.cwiseProduct(av);
          *g += weighted * sv + weighted.transpose() * sv;
        }
      },
      "scale_rows_cols");
}

template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  axis = normalize_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<AxisSplit> splits;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (static_cast<int>(i) != axis && p.shape()[i] != first[i]) {
        throw DimensionError("concat: shapes " + to_string(first) + " and " +
                             to_string(p.shape()) + " differ off the concat axis");
      }
    }
    out_shape[axis] += p.shape()[axis];
    splits.push_back(split_at(p.shape(), axis));
  }
  const AxisSplit whole = split_at(out_shape, axis);
  VectorX<Scalar> out(numel(out_shape));
  std::vector<Index> offsets;
  Index offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    offsets.push_back(offset);
    const Index block = splits[k].length * splits[k].inner;
    for (Index o = 0; o < whole.outer; ++o) {
      out.segment(o * whole.length * whole.inner + offset, block) =
          parts[k].value().segment(o * block, block);
    }
    offset += block;
  }
  std::vector<Tensor<Scalar>> parents(parts.begin(), parts.end());
  return detail::make_result<Scalar>(
      std::move(out_shape), std::move(out), std::move(parents),
      [splits, offsets, whole](Node<Scalar>& n) {
        for (std::size_t k = 0; k < splits.size(); ++k) {
          auto* g = grad_of(n, k);
          if (!g) continue;
          const Index block = splits[k].length * splits[k].inner;
          for (Index o = 0; o < whole.outer; ++o) {
            g->segment(o * block, block) +=
                n.grad.segment(o * whole.length * whole.inner + offsets[k], block);
          }
        }
      },
      "concat");
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " +
                         to_string(shape));
  }
  return detail::make_result<Scalar>(
      std::move(shape), x.value(), {x},
      [](Node<Scalar>& n) {
        if (auto* g = grad_of(n, 0)) *g += n.grad;
      },
      "reshape");
}

template <typename Scalar>
Tensor<Scalar> index_rows(const Tensor<Scalar>& x, std::span<const Index> rows) {
  if (x.rank() == 0) throw DimensionError("index_rows: scalar input");
  const Index n = x.dim(0);
  const Index width = n == 0 ? 0 : x.size() / n;
  for (Index r : rows) {
    if (r < 0 || r >= n) {
      throw DimensionError("index_rows: row " + std::to_string(r) + " out of range for " +
                           to_string(x.shape()));
    }
  }
  Shape shape = x.shape();
  shape[0] = static_cast<Index>(rows.size());
  VectorX<Scalar> out(numel(shape));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.segment(static_cast<Index>(i) * width, width) = x.value().segment(rows[i] * width, width);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return detail::make_result<Scalar>(
      std::move(shape), std::move(out), {x},
      [idx = std::move(idx), width](Node<Scalar>& node) {
        auto* g = grad_of(node, 0);
        if (!g) return;
        for (std::size_t i = 0; i < idx.size(); ++i) {
          g->segment(idx[i] * width, width) +=
              node.grad.segment(static_cast<Index>(i) * width, width);
        }
      },
      "index_rows");
}

namespace {

struct ConvGeometry {
  Index batch, channels, height, width;
  Index out_channels, kh, kw;
  Index out_h, out_w;
  int stride, padding;

  Index patch() const { return channels * kh * kw; }
  Index pixels() const { return out_h * out_w; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

// Output columns [lo, hi) whose input column ox*stride - pad + j is in range.
inline std::pair<Index, Index> valid_span(Index j, Index stride, Index padding, Index width,
                                          Index out_w) {
  const Index first = padding - j;  // ox * stride >= first
  const Index lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const Index last = width - 1 + padding - j;  // ox * stride <= last
  const Index hi = last < 0 ? 0 : std::min(out_w, last / stride + 1);
  return {std::min(lo, hi), hi};
}

// cols[(c, i, j), (oy, ox)] = x[c, oy*stride - pad + i, ox*stride - pad + j]
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, MatrixX<Scalar>& cols) {
  cols.resize(g.patch(), g.pixels());
  Index row = 0;
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* plane = x + c * g.height * g.width;
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j, ++row) {
        Scalar* dst = cols.row(row).data();
        const auto [lo, hi] = valid_span(j, g.stride, g.padding, g.width, g.out_w);
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.padding + i;
          Scalar* line = dst + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(line, line + g.out_w, Scalar(0));
            continue;
          }
          std::fill(line, line + lo, Scalar(0));
          std::fill(line + hi, line + g.out_w, Scalar(0));
          const Scalar* src = plane + iy * g.width - g.padding + j;
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, line + lo);
          } else {
            for (Index ox = lo; ox < hi; ++ox) line[ox] = src[ox * g.stride];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const MatrixX<Scalar>& cols, const ConvGeometry& g, Scalar* dx) {
  Index row = 0;
  for (Index c = 0; c < g.channels; ++c) {
    Scalar* plane = dx + c * g.height * g.width;
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j, ++row) {
        const Scalar* src = cols.row(row).data();
        const auto [lo, hi] = valid_span(j, g.stride, g.padding, g.width, g.out_w);
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.padding + i;
          if (iy < 0 || iy >= g.height) continue;
          Scalar* line = plane + iy * g.width - g.padding + j;
          const Scalar* from = src + oy * g.out_w;
          for (Index ox = lo; ox < hi; ++ox) line[ox * g.stride] += from[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel, int stride,
                      int padding) {
  require_rank(x, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  if (stride < 1 || padding < 0) throw DimensionError("conv2d: invalid stride or padding");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel.dim(0), kernel.dim(2),
                 kernel.dim(3), 0, 0, stride, padding};
  if (kernel.dim(1) != g.channels) {
    throw DimensionError("conv2d: kernel " + to_string(kernel.shape()) +
                         " does not match input channels of " + to_string(x.shape()));
  }
  if (g.kh > g.height + 2 * padding || g.kw > g.width + 2 * padding) {
    throw DimensionError("conv2d: kernel " + to_string(kernel.shape()) +
                         " larger than padded input " + to_string(x.shape()));
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  const Index in_block = g.channels * g.height * g.width;
  const Index out_block = g.out_channels * g.pixels();
  VectorX<Scalar> out(g.batch * out_block);
  ConstMatrixMap<Scalar> kmat(kernel.value().data(), g.out_channels, g.patch());
  MatrixX<Scalar> cols;
  for (Index b = 0; b < g.batch; ++b) {
    MatrixMap<Scalar> y(out.data() + b * out_block, g.out_channels, g.pixels());
    if (g.pointwise()) {
      y.noalias() = kmat * ConstMatrixMap<Scalar>(x.value().data() + b * in_block, g.channels,
                                                  g.pixels());
    } else {
      im2col(x.value().data() + b * in_block, g, cols);
      y.noalias() = kmat * cols;
    }
  }
  return detail::make_result<Scalar>(
      {g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), {x, kernel},
      [g, in_block, out_block](Node<Scalar>& node) {
        auto* gx = grad_of(node, 0);
        auto* gk = grad_of(node, 1);
        const auto& xv = node.parents[0]->value;
        ConstMatrixMap<Scalar> kmat(node.parents[1]->value.data(), g.out_channels, g.patch());
        MatrixX<Scalar> cols, dcols;
        for (Index b = 0; b < g.batch; ++b) {
          ConstMatrixMap<Scalar> dy(node.grad.data() + b * out_block, g.out_channels, g.pixels());
          if (g.pointwise()) {
            ConstMatrixMap<Scalar> xb(xv.data() + b * in_block, g.channels, g.pixels());
            if (gk) {
              MatrixMap<Scalar>(gk->data(), g.out_channels, g.patch()).noalias() +=
                  dy * xb.transpose();
            }
            if (gx) {
              MatrixMap<Scalar>(gx->data() + b * in_block, g.channels, g.pixels()).noalias() +=
                  kmat.transpose() * dy;
            }
            continue;
          }
          im2col(xv.data() + b * in_block, g, cols);
          if (gk) {
            MatrixMap<Scalar>(gk->data(), g.out_channels, g.patch()).noalias() +=
                dy * cols.transpose();
          }
          if (gx) {
            dcols.noalias() = kmat.transpose() * dy;
            col2im_add(dcols, g, gx->data() + b * in_block);
          }
        }
      },
      "conv2d");
}

template <typename Scalar>
Tensor<Scalar> pool2d(const Tensor<Scalar>& x, PoolKind kind, int kernel, int stride,
                      int padding) {
  require_rank(x, 4, "pool2d");
  if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding > kernel) {
    throw DimensionError("pool2d: invalid kernel/stride/padding");
  }
  const Index batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernel > h + 2 * padding || kernel > w + 2 * padding) {
    throw DimensionError("pool2d: window " + std::to_string(kernel) + " exceeds input " +
                         to_string(x.shape()));
  }
  const Index oh = (h + 2 * padding - kernel) / stride + 1;
  const Index ow = (w + 2 * padding - kernel) / stride + 1;
  const Index planes = batch * channels;
  VectorX<Scalar> out(planes * oh * ow);
  // Max: flat input index of the winner. Avg: number of real cells in window.
  std::vector<Index> aux(out.size());
  const auto& xv = x.value();
  for (Index p = 0; p < planes; ++p) {
    const Scalar* plane = xv.data() + p * h * w;
    for (Index oy = 0; oy < oh; ++oy) {
      const Index y_lo = std::max<Index>(0, oy * stride - padding);
      const Index y_hi = std::min<Index>(h, oy * stride - padding + kernel);
      for (Index ox = 0; ox < ow; ++ox) {
        const Index x_lo = std::max<Index>(0, ox * stride - padding);
        const Index x_hi = std::min<Index>(w, ox * stride - padding + kernel);
        const Index o = (p * oh + oy) * ow + ox;
        if (kind == PoolKind::Max) {
          // Strict comparison in row-major order keeps the first maximum.
          Index best_at = y_lo * w + x_lo;
          Scalar best = plane[best_at];
          for (Index iy = y_lo; iy < y_hi; ++iy) {
            for (Index ix = x_lo; ix < x_hi; ++ix) {
              if (plane[iy * w + ix] > best) {
                best = plane[iy * w + ix];
                best_at = iy * w + ix;
              }
            }
          }
          out[o] = best;
          aux[o] = p * h * w + best_at;
        } else {
          Scalar total = 0;
          for (Index iy = y_lo; iy < y_hi; ++iy) {
            for (Index ix = x_lo; ix < x_hi; ++ix) total += plane[iy * w + ix];
          }
          aux[o] = (y_hi - y_lo) * (x_hi - x_lo);
          out[o] = total / static_cast<Scalar>(aux[o]);
        }
      }
    }
  }
  return detail::make_result<Scalar>(
      {batch, channels, oh, ow}, std::move(out), {x},
      [aux = std::move(aux), kind, kernel, stride, padding, h, w, oh, ow,
       planes](Node<Scalar>& node) {
        auto* g = grad_of(node, 0);
        if (!g) return;
        if (kind == PoolKind::Max) {
          for (std::size_t o = 0; o < aux.size(); ++o) (*g)[aux[o]] += node.grad[o];
          return;
        }
        for (Index p = 0; p < planes; ++p) {
          for (Index oy = 0; oy < oh; ++oy) {
            for (Index ox = 0; ox < ow; ++ox) {
              const Index o = (p * oh + oy) * ow + ox;
              const Scalar share = node.grad[o] / static_cast<Scalar>(aux[o]);
              for (Index dy = 0; dy < kernel; ++dy) {
                const Index iy = oy * stride - padding + dy;
                if (iy < 0 || iy >= h) continue;
                for (Index dx = 0; dx < kernel; ++dx) {
                  const Index ix = ox * stride - padding + dx;
                  if (ix >= 0 && ix < w) (*g)[p * h * w + iy * w + ix] += share;
                }
              }
            }
          }
        }
      },
      "pool2d");
}

template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, BatchNormState<Scalar>& state,
                          NormMode mode, Scalar eps, Scalar momentum) {
  if (x.rank() < 2) throw DimensionError("batch_norm: need [B, C, ...], got " + to_string(x.shape()));
  const Index batch = x.dim(0), channels = x.dim(1);
  const Index spatial = x.size() / std::max<Index>(1, batch * channels);
  if (gamma.size() != channels || beta.size() != channels ||
      state.running_mean.size() != channels || state.running_var.size() != channels) {
    throw DimensionError("batch_norm: per-channel parameters do not match " + to_string(x.shape()));
  }
  if (mode == NormMode::Train && batch < 2) {
    throw DimensionError("batch_norm: train mode needs a batch of at least 2 (variance undefined)");
  }
  const Index count = batch * spatial;
  const auto& xv = x.value();
  VectorX<Scalar> mu(channels), inv_std(channels);
  if (mode == NormMode::Train) {
    for (Index c = 0; c < channels; ++c) {
      Scalar s = 0;
      for (Index b = 0; b < batch; ++b) s += xv.segment((b * channels + c) * spatial, spatial).sum();
      const Scalar m = s / static_cast<Scalar>(count);
      Scalar ss = 0;
      for (Index b = 0; b < batch; ++b) {
        ss += (xv.segment((b * channels + c) * spatial, spatial).array() - m).square().sum();
      }
      const Scalar var = ss / static_cast<Scalar>(count);
      mu[c] = m;
      inv_std[c] = Scalar(1) / std::sqrt(var + eps);
      const Scalar unbiased = ss / static_cast<Scalar>(count - 1);
      state.running_mean[c] = (1 - momentum) * state.running_mean[c] + momentum * m;
      state.running_var[c] = (1 - momentum) * state.running_var[c] + momentum * unbiased;
    }
  } else {
    mu = state.running_mean;
    inv_std = (state.running_var.array() + eps).rsqrt().matrix();
  }
  VectorX<Scalar> xhat(x.size());
  VectorX<Scalar> out(x.size());
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      const Index off = (b * channels + c) * spatial;
      xhat.segment(off, spatial) = ((xv.segment(off, spatial).array() - mu[c]) * inv_std[c]).matrix();
      out.segment(off, spatial) =
          (xhat.segment(off, spatial).array() * gamma.value()[c] + beta.value()[c]).matrix();
    }
  }
  const bool train = mode == NormMode::Train;
  return detail::make_result<Scalar>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std, batch, channels, spatial, count, train](Node<Scalar>& n) {
        auto* gx = grad_of(n, 0);
        auto* gg = grad_of(n, 1);
        auto* gb = grad_of(n, 2);
        const auto& gamma_v = n.parents[1]->value;
        for (Index c = 0; c < channels; ++c) {
          Scalar dy_sum = 0, dy_xhat = 0;
          for (Index b = 0; b < batch; ++b) {
            const Index off = (b * channels + c) * spatial;
            dy_sum += n.grad.segment(off, spatial).sum();
            dy_xhat += n.grad.segment(off, spatial).dot(xhat.segment(off, spatial));
          }
          if (gg) (*gg)[c] += dy_xhat;
          if (gb) (*gb)[c] += dy_sum;
          if (!gx) continue;
          const Scalar k = gamma_v[c] * inv_std[c];
          for (Index b = 0; b < batch; ++b) {
            const Index off = (b * channels + c) * spatial;
            if (train) {
              const Scalar inv_n = Scalar(1) / static_cast<Scalar>(count);
              gx->segment(off, spatial).array() +=
                  k * (n.grad.segment(off, spatial).array() - dy_sum * inv_n -
                       xhat.segment(off, spatial).array() * (dy_xhat * inv_n));
            } else {
              gx->segment(off, spatial) += k * n.grad.segment(off, spatial);
            }
          }
        }
      },
      "batch_norm");
}

#define SCN_INSTANTIATE(S)                                                                   \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> scale(const Tensor<S>&, S);                                             \
  template Tensor<S> add_scalar(const Tensor<S>&, S);                                        \
  template Tensor<S> add_row_vector(const Tensor<S>&, const Tensor<S>&);                     \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                             \
  template Tensor<S> sum(const Tensor<S>&);                                                  \
  template Tensor<S> mean(const Tensor<S>&);                                                 \
  template Tensor<S> row_sum(const Tensor<S>&);                                              \
  template Tensor<S> abs(const Tensor<S>&);                                                  \
  template Tensor<S> log(const Tensor<S>&);                                                  \
  template Tensor<S> pow(const Tensor<S>&, S);                                               \
  template Tensor<S> relu(const Tensor<S>&);                                                 \
  template Tensor<S> leaky_relu(const Tensor<S>&, S);                                        \
  template Tensor<S> softmax(const Tensor<S>&, int);                                         \
  template Tensor<S> log_softmax(const Tensor<S>&, int);                                     \
  template Tensor<S> scale_rows_cols(const Tensor<S>&, const Tensor<S>&);                    \
  template Tensor<S> concat(std::span<const Tensor<S>>, int);                                \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                       \
  template Tensor<S> index_rows(const Tensor<S>&, std::span<const Index>);                   \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, int, int);                   \
  template Tensor<S> pool2d(const Tensor<S>&, PoolKind, int, int, int);                      \
  template Tensor<S> batch_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,        \
                                BatchNormState<S>&, NormMode, S, S);

SCN_INSTANTIATE(float)
SCN_INSTANTIATE(double)

#undef SCN_INSTANTIATE

}  // namespace scn

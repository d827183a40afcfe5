#include "scn/graph/graph.hpp"

#include "scn/numerics/atomic_file.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace scn {

template <typename Scalar>
Scalar rbf_similarity(const VectorX<Scalar>& a, const VectorX<Scalar>& b, Scalar gamma) {
  if (a.size() != b.size()) {
    throw DimensionError("rbf_similarity: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
  if (!(gamma > 0)) throw std::invalid_argument("rbf_similarity: gamma must be positive");
  return std::exp(-(a - b).squaredNorm() / gamma);
}

template <typename Scalar>
SimilarityGraph<Scalar> build_graph(const MatrixX<Scalar>& features, std::optional<Scalar> gamma) {
  const Index n = features.rows();
  const Scalar g = gamma.value_or(static_cast<Scalar>(features.cols()));
  if (!(g > 0)) throw std::invalid_argument("build_graph: gamma must be positive");
  SimilarityGraph<Scalar> out;
  out.adjacency.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    out.adjacency(i, i) = Scalar(1);
    for (Index j = i + 1; j < n; ++j) {
      const Scalar v = std::exp(-(features.row(i) - features.row(j)).squaredNorm() / g);
      out.adjacency(i, j) = v;
      out.adjacency(j, i) = v;
    }
  }
  return out;
}

template <typename Scalar>
SelectLayer<Scalar> SelectLayer<Scalar>::init(Index n, Scalar threshold, Rng& rng) {
  if (!(threshold > 0 && threshold < 1)) {
    throw std::invalid_argument("select threshold must lie in (0, 1)");
  }
  VectorX<Scalar> v(n * n);
  for (Index i = 0; i < v.size(); ++i) {
    double u = rng.uniform(0.5, 1.0);
    while (u <= 0.5) u = rng.uniform(0.5, 1.0);
    v[i] = static_cast<Scalar>(u);
  }
  return {Tensor<Scalar>({n, n}, std::move(v), true), threshold};
}

template <typename Scalar>
Index SelectLayer<Scalar>::surviving_edges() const {
  return (weight.value().array() > threshold).count();
}

template <typename Scalar>
Tensor<Scalar> select_forward(const SelectLayer<Scalar>& layer, const Tensor<Scalar>& g) {
  if (layer.weight.shape() != g.shape() || g.rank() != 2 || g.dim(0) != g.dim(1)) {
    throw DimensionError("select_forward: weight " + to_string(layer.weight.shape()) +
                         " and graph " + to_string(g.shape()) + " must be equal square shapes");
  }
  VectorX<Scalar> keep = (layer.weight.value().array() > layer.threshold).template cast<Scalar>();
  Tensor<Scalar> mask(g.shape(), std::move(keep));
  return mul(g, mul(layer.weight, mask));
}

template <typename Scalar>
MatrixX<Scalar> normalize_features(const MatrixX<Scalar>& x) {
  MatrixX<Scalar> out(x.rows(), x.cols());
  const Scalar n = static_cast<Scalar>(x.rows());
  for (Index c = 0; c < x.cols(); ++c) {
    const Scalar mean = x.col(c).sum() / n;
    const Scalar var = (x.col(c).array() - mean).square().sum() / n;
    const Scalar sd = std::sqrt(var);
    // Relative cut so columns equal up to rounding count as constant.
    const Scalar scale = std::max(x.col(c).cwiseAbs().maxCoeff(), Scalar(1));
    if (x.rows() < 2 || sd <= Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale) {
      out.col(c).setZero();
    } else {
      out.col(c) = (x.col(c).array() - mean) / sd;
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> normalized_adjacency(const Tensor<Scalar>& w) {
  if (w.rank() != 2 || w.dim(0) != w.dim(1)) {
    throw DimensionError("normalized_adjacency: expected a square matrix, got " + to_string(w.shape()));
  }
  const Index n = w.dim(0);
  auto identity = Tensor<Scalar>::from_matrix(MatrixX<Scalar>::Identity(n, n));
  auto a = add(w, identity);
  auto degree = row_sum(a);
  if ((degree.value().array() <= Scalar(0)).any()) {
    throw std::logic_error("normalized_adjacency: non-positive degree");
  }
  return scale_rows_cols(a, pow(degree, Scalar(-0.5)));
}

template <typename Scalar>
Tensor<Scalar> gcn_propagate(const Tensor<Scalar>& w, const Tensor<Scalar>& h,
                             const Tensor<Scalar>& weight) {
  return matmul(normalized_adjacency(w), matmul(h, weight));
}

template <typename Scalar>
MatrixX<Scalar> glorot_uniform(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  MatrixX<Scalar> m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<Scalar>(rng.uniform(-limit, limit));
  }
  return m;
}

template <typename Scalar>
GcnUnit<Scalar> GcnUnit<Scalar>::init(Index d_in, Index d_hidden, Index d_out, Rng& rng,
                                      Scalar slope) {
  GcnUnit unit;
  unit.w0 = Tensor<Scalar>::from_matrix(glorot_uniform<Scalar>(d_in, d_hidden, rng), true);
  unit.w1 = Tensor<Scalar>::from_matrix(glorot_uniform<Scalar>(d_hidden, d_out, rng), true);
  unit.slope = slope;
  return unit;
}

template <typename Scalar>
Tensor<Scalar> gcn_unit_forward(const GcnUnit<Scalar>& unit, const Tensor<Scalar>& w,
                                const Tensor<Scalar>& x_normalized) {
  auto a = normalized_adjacency(w);
  auto h0 = matmul(a, matmul(x_normalized, unit.w0));
  auto h1 = matmul(a, matmul(h0, unit.w1));
  return relu(leaky_relu(h1, unit.slope));
}

template <typename Scalar>
void write_edge_list(const std::filesystem::path& path, const MatrixX<Scalar>& adjacency,
                     Scalar min_weight) {
  write_text_atomically(path, [&] {
    std::string text = "i,j,weight\n";
    char buf[64];
    for (Index i = 0; i < adjacency.rows(); ++i) {
      for (Index j = 0; j < adjacency.cols(); ++j) {
        if (!(adjacency(i, j) > min_weight)) continue;
        auto res = std::to_chars(buf, buf + sizeof(buf), adjacency(i, j));
        text += std::to_string(i) + "," + std::to_string(j) + "," + std::string(buf, res.ptr) + "\n";
      }
    }
    return text;
  }());
}

#define SCN_INSTANTIATE(S)                                                                     \
  template S rbf_similarity<S>(const VectorX<S>&, const VectorX<S>&, S);                       \
  template SimilarityGraph<S> build_graph<S>(const MatrixX<S>&, std::optional<S>);              \
  template struct SelectLayer<S>;                                                              \
  template Tensor<S> select_forward<S>(const SelectLayer<S>&, const Tensor<S>&);               \
  template MatrixX<S> normalize_features<S>(const MatrixX<S>&);                                \
  template Tensor<S> normalized_adjacency<S>(const Tensor<S>&);                                \
  template Tensor<S> gcn_propagate<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);   \
  template MatrixX<S> glorot_uniform<S>(Index, Index, Rng&);                                   \
  template struct GcnUnit<S>;                                                                  \
  template Tensor<S> gcn_unit_forward<S>(const GcnUnit<S>&, const Tensor<S>&, const Tensor<S>&); \
  template void write_edge_list<S>(const std::filesystem::path&, const MatrixX<S>&, S);

SCN_INSTANTIATE(float)
SCN_INSTANTIATE(double)

#undef SCN_INSTANTIATE

}  // namespace scn

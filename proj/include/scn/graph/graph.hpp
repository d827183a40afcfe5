#pragma once

#include "scn/numerics/ops.hpp"
#include "scn/numerics/rng.hpp"

#include <filesystem>
#include <optional>

namespace scn {

/// exp(-||a - b||^2 / gamma).
template <typename Scalar>
Scalar rbf_similarity(const VectorX<Scalar>& a, const VectorX<Scalar>& b, Scalar gamma);

/// Dense symmetric node-similarity matrix.
template <typename Scalar>
struct SimilarityGraph {
  MatrixX<Scalar> adjacency;

  Index n() const { return adjacency.rows(); }
  Tensor<Scalar> tensor() const { return Tensor<Scalar>::from_matrix(adjacency); }
};

/// All-pairs RBF over the rows of `features` (n x d). gamma defaults to d.
template <typename Scalar>
SimilarityGraph<Scalar> build_graph(const MatrixX<Scalar>& features,
                                    std::optional<Scalar> gamma = std::nullopt);

/// Trainable edge weights with a hard drop threshold.
template <typename Scalar>
struct SelectLayer {
  Tensor<Scalar> weight;  // n x n
  Scalar threshold = Scalar(0.75);

  /// Weights uniform in (0.5, 1).
  static SelectLayer init(Index n, Scalar threshold, Rng& rng);
  /// Number of weights strictly above the threshold.
  Index surviving_edges() const;
};

/// w = g ∘ (Weight ∘ [Weight > threshold]). Gradients reach the weights of
/// surviving edges only, and reach g when g requires them.
template <typename Scalar>
Tensor<Scalar> select_forward(const SelectLayer<Scalar>& layer, const Tensor<Scalar>& g);

/// Per-column z-score over rows (population SD); zero-variance columns become 0.
template <typename Scalar>
MatrixX<Scalar> normalize_features(const MatrixX<Scalar>& x);

/// D^-1/2 (w + I) D^-1/2 with D the row sums of w + I.
template <typename Scalar>
Tensor<Scalar> normalized_adjacency(const Tensor<Scalar>& w);

/// normalized_adjacency(w) * H * W.
template <typename Scalar>
Tensor<Scalar> gcn_propagate(const Tensor<Scalar>& w, const Tensor<Scalar>& h,
                             const Tensor<Scalar>& weight);

/// Two propagation layers followed by relu(leaky_relu(.)).
template <typename Scalar>
struct GcnUnit {
  Tensor<Scalar> w0;  // d_in x d_hidden
  Tensor<Scalar> w1;  // d_hidden x d_out
  Scalar slope = Scalar(0.01);

  /// Glorot-uniform weights.
  static GcnUnit init(Index d_in, Index d_hidden, Index d_out, Rng& rng,
                      Scalar slope = Scalar(0.01));
};

/// `x_normalized` is normalize_features(X) of the aspect's raw descriptors.
template <typename Scalar>
Tensor<Scalar> gcn_unit_forward(const GcnUnit<Scalar>& unit, const Tensor<Scalar>& w,
                                const Tensor<Scalar>& x_normalized);

/// Glorot-uniform rows x cols matrix.
template <typename Scalar>
MatrixX<Scalar> glorot_uniform(Index rows, Index cols, Rng& rng);

/// Edge list "i,j,weight" for entries strictly above `min_weight`.
template <typename Scalar>
void write_edge_list(const std::filesystem::path& path, const MatrixX<Scalar>& adjacency,
                     Scalar min_weight);

}  // namespace scn

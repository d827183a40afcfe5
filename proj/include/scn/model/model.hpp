#pragma once

#include "scn/cnn/cnn.hpp"
#include "scn/graph/graph.hpp"
#include "scn/ingest/descriptors.hpp"
#include "scn/numerics/checkpoint.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace scn {

/// The four vector descriptor aspects, each with its own graph and GCN unit.
enum class Aspect { FA, PDM, FD, FL };
inline constexpr int kAspects = 4;
inline constexpr std::array<Aspect, kAspects> kAllAspects = {Aspect::FA, Aspect::PDM, Aspect::FD,
                                                            Aspect::FL};

const char* name_of(Aspect aspect);

struct ModelConfig {
  Index d_hidden = 32;
  Index d_out = 16;
  double leaky_slope = 0.01;
  double select_threshold = 0.75;
  /// Build the RBF graphs on z-scored descriptors instead of raw values.
  bool graph_on_normalized = false;
  CnnConfig cnn;
  /// Without images the CNN path is dropped from the concatenation.
  bool use_images = true;
  /// One softmax over all companies instead of a 2-way head per company.
  bool single_softmax = false;

  void validate() const;
};

/// Descriptor-derived model inputs. Graphs and normalized features are
/// constants of the dataset.
template <typename Scalar>
struct ModelInputs {
  std::array<Tensor<Scalar>, kAspects> features;  // n x d, z-scored
  std::array<Tensor<Scalar>, kAspects> graphs;    // n x n raw RBF
  Tensor<Scalar> images;                          // [n, C, S, S]

  Index n() const { return features[0].dim(0); }
};

/// Throws DimensionError when the image layout does not fit config.cnn.
template <typename Scalar>
ModelInputs<Scalar> prepare_inputs(const DescriptorFile& file, const ModelConfig& config);

template <typename Scalar>
struct AspectUnit {
  SelectLayer<Scalar> select;
  GcnUnit<Scalar> gcn;
};

template <typename Scalar>
struct ScnModel {
  ModelConfig config;
  Index n_nodes = 0;
  Index n_companies = 0;
  std::array<AspectUnit<Scalar>, kAspects> aspects;
  SemanticCnn<Scalar> cnn;
  Tensor<Scalar> wf;  // concat width x 20
  Tensor<Scalar> bf;  // 20
  Tensor<Scalar> wl;  // 20 x 2k, or 20 x k with a single softmax
  Tensor<Scalar> bl;

  static ScnModel init(const ModelConfig& config, const ModelInputs<Scalar>& inputs,
                       Index n_companies, Rng& rng);

  Index concat_width() const;
  /// Learnable tensors by name; copies share storage with the model.
  ParameterMap<Scalar> parameters() const;
  /// parameters() plus batch-norm running statistics, for checkpoints.
  ParameterMap<Scalar> state() const;
  /// Inverse of state(); names and shapes must match.
  void load_state(const ParameterMap<Scalar>& archived);
};

/// Four per-aspect GCN embeddings over the full graph, concatenated: n x 4 d_out.
template <typename Scalar>
Tensor<Scalar> graph_embeddings(const ScnModel<Scalar>& model, const ModelInputs<Scalar>& inputs);

template <typename Scalar>
struct Prediction {
  Tensor<Scalar> features;   // rows x 20
  Tensor<Scalar> log_probs;  // rows x 2k (pairs not/purchase) or rows x k
  bool single_softmax = false;
  /// rows x k purchase probabilities.
  MatrixX<Scalar> purchase() const;
};

/// Heads applied to already gathered rows. `sem` may be empty when images
/// are not used.
template <typename Scalar>
Prediction<Scalar> predict_heads(const ScnModel<Scalar>& model, const Tensor<Scalar>& graph_rows,
                                 const Tensor<Scalar>& sem);

/// Full forward for `rows` (all consumers when empty). The graph part always
/// propagates over every node; the CNN runs on the requested rows only, in
/// chunks of `batch_size`.
template <typename Scalar>
Prediction<Scalar> forward(ScnModel<Scalar>& model, const ModelInputs<Scalar>& inputs,
                           std::span<const Index> rows, NormMode mode, Index batch_size = 64);

struct LossConfig {
  double alpha = 1.0;  // MAE weight
  double beta = 1.0;   // SCE weight

  void validate() const;
};

template <typename Scalar>
struct LossTerms {
  Tensor<Scalar> total;
  double mae = 0.0;  // per-consumer mean |F - F'| averaged over the normalizer
  double sce = 0.0;
};

/// (alpha * sum_i mean_j |F - F'| + beta * sum_i mean_o CE) / normalizer over
/// rows with mask != 0. `normalizer` defaults to the number of masked rows.
template <typename Scalar>
LossTerms<Scalar> loss(const Prediction<Scalar>& pred, const MatrixX<Scalar>& features_true,
                       const Eigen::MatrixXi& labels_true, std::span<const std::uint8_t> mask,
                       const LossConfig& config, bool single_softmax, double normalizer = 0.0);

/// Company indices per row by descending probability, ties by index.
std::vector<std::vector<Index>> predict_topn(const Eigen::MatrixXd& purchase, Index n_top);

/// 1 where the purchase probability reaches the decision cut: 1/2 for
/// per-company heads, 1/k for a single softmax.
Eigen::MatrixXi decide(const Eigen::MatrixXd& purchase, bool single_softmax);

}  // namespace scn

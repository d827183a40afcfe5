#pragma once

#include "scn/numerics/ops.hpp"
#include "scn/numerics/rng.hpp"

#include <map>
#include <string>
#include <vector>

namespace scn {

struct CnnConfig {
  Index image_size = 112;
  Index channels = 1;
  Index stem_channels = 32;
  Index stage1_branch = 16;  // per-branch width of the first Light Inception
  Index stage2_branch = 24;
  /// ReLU after every convolution.
  bool conv_relu = true;

  /// 56 x 56 input, narrow channels; final average pool is 7 x 7.
  static CnnConfig reduced();

  Index embedding_dim() const { return 4 * stage2_branch; }
  /// Spatial extent after the stem convolution, the first pool and the
  /// second pool; the last one is the average-pool window.
  Index stem_extent() const;
  Index stage1_extent() const;
  Index stage2_extent() const;
  /// Throws DimensionError when the shape chain does not end in 1 x 1.
  void validate() const;
};

/// He-uniform conv kernel [out, in, k, k].
template <typename Scalar>
Tensor<Scalar> init_kernel(Index out, Index in, Index k, Rng& rng);

template <typename Scalar>
struct LightInceptionBlock {
  Index in_channels = 0;
  Index branch = 0;
  Tensor<Scalar> con;        // [b, in, 1, 1], shared 1x1
  Tensor<Scalar> pool_conv;  // [b, b, 1, 1] after the 1x1 max-pool
  Tensor<Scalar> c3_reduce;  // [b, b, 1, 1]
  Tensor<Scalar> c3;         // [b, b, 3, 3]
  Tensor<Scalar> c5_reduce;  // [b, b, 1, 1]
  Tensor<Scalar> c5;         // [b, b, 5, 5]
  Tensor<Scalar> gamma;      // [4b]
  Tensor<Scalar> beta;       // [4b]
  BatchNormState<Scalar> bn;
  /// Weight of the current batch in the running statistics; 1 keeps only it.
  Scalar bn_momentum = Scalar(0.1);

  static LightInceptionBlock init(Index in_channels, Index branch, Rng& rng);
  Index out_channels() const { return 4 * branch; }
};

/// Branch outputs before concatenation and batch norm.
template <typename Scalar>
struct InceptionBranches {
  Tensor<Scalar> pool, conv3, conv5, con;
};

template <typename Scalar>
InceptionBranches<Scalar> inception_branches(const LightInceptionBlock<Scalar>& block,
                                             const Tensor<Scalar>& x, bool conv_relu);

/// BN(concat(pool, conv3, conv5, con)) along channels; spatial extent kept.
template <typename Scalar>
Tensor<Scalar> light_inception(LightInceptionBlock<Scalar>& block, const Tensor<Scalar>& x,
                               NormMode mode, bool conv_relu);

/// Max_3x3/s2/p1(Conv_7x7/s2/p3(x)). With `kernel` == nullptr the convolution
/// is skipped, as in the second stage.
template <typename Scalar>
Tensor<Scalar> subsample(const Tensor<Scalar>& x, const Tensor<Scalar>* kernel, bool conv_relu);

template <typename Scalar>
struct SemanticCnn {
  CnnConfig config;
  Tensor<Scalar> stem;  // [stem, channels, 7, 7]
  LightInceptionBlock<Scalar> block1;
  LightInceptionBlock<Scalar> block2;

  static SemanticCnn init(const CnnConfig& config, Rng& rng);
  std::vector<std::pair<std::string, Tensor<Scalar>>> named_parameters() const;
};

/// images [B, C, S, S] -> [B, embedding_dim].
template <typename Scalar>
Tensor<Scalar> semanticity(SemanticCnn<Scalar>& net, const Tensor<Scalar>& images, NormMode mode);

}  // namespace scn

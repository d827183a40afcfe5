#include "scn/cnn/cnn.hpp"

#include <array>
#include <cmath>

namespace scn {

namespace {

Index conv_extent(Index in, Index k, Index stride, Index pad) { return (in + 2 * pad - k) / stride + 1; }

template <typename Scalar>
Tensor<Scalar> maybe_relu(const Tensor<Scalar>& x, bool on) {
  return on ? relu(x) : x;
}

}  // namespace

CnnConfig CnnConfig::reduced() {
  CnnConfig c;
  c.image_size = 56;
  c.stem_channels = 8;
  c.stage1_branch = 4;
  c.stage2_branch = 6;
  return c;
}

Index CnnConfig::stem_extent() const { return conv_extent(image_size, 7, 2, 3); }
Index CnnConfig::stage1_extent() const { return conv_extent(stem_extent(), 3, 2, 1); }
Index CnnConfig::stage2_extent() const { return conv_extent(stage1_extent(), 3, 2, 1); }

void CnnConfig::validate() const {
  if (channels != 1 && channels != 3) throw DimensionError("cnn: channels must be 1 or 3");
  if (image_size < 7) throw DimensionError("cnn: image size must be at least 7");
  if (stem_channels < 1 || stage1_branch < 1 || stage2_branch < 1) {
    throw DimensionError("cnn: channel counts must be positive");
  }
  if (stage1_extent() < 1 || stage2_extent() < 1) {
    throw DimensionError("cnn: image size " + std::to_string(image_size) + " too small");
  }
}

template <typename Scalar>
Tensor<Scalar> init_kernel(Index out, Index in, Index k, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in * k * k));
  VectorX<Scalar> v(out * in * k * k);
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
  return Tensor<Scalar>({out, in, k, k}, std::move(v), true);
}

template <typename Scalar>
LightInceptionBlock<Scalar> LightInceptionBlock<Scalar>::init(Index in_channels, Index branch,
                                                              Rng& rng) {
  LightInceptionBlock b;
  b.in_channels = in_channels;
  b.branch = branch;
  b.con = init_kernel<Scalar>(branch, in_channels, 1, rng);
  b.pool_conv = init_kernel<Scalar>(branch, branch, 1, rng);
  b.c3_reduce = init_kernel<Scalar>(branch, branch, 1, rng);
  b.c3 = init_kernel<Scalar>(branch, branch, 3, rng);
  b.c5_reduce = init_kernel<Scalar>(branch, branch, 1, rng);
  b.c5 = init_kernel<Scalar>(branch, branch, 5, rng);
  b.gamma = Tensor<Scalar>::full({4 * branch}, Scalar(1), true);
  b.beta = Tensor<Scalar>::zeros({4 * branch}, true);
  b.bn = BatchNormState<Scalar>::identity(4 * branch);
  return b;
}

template <typename Scalar>
InceptionBranches<Scalar> inception_branches(const LightInceptionBlock<Scalar>& block,
                                             const Tensor<Scalar>& x, bool conv_relu) {
  if (x.rank() != 4 || x.dim(1) != block.in_channels) {
    throw DimensionError("light_inception: expected [B, " + std::to_string(block.in_channels) +
                         ", H, W] input, got " + to_string(x.shape()));
  }
  InceptionBranches<Scalar> out;
  out.con = maybe_relu(conv2d(x, block.con, 1, 0), conv_relu);
  out.pool = maybe_relu(conv2d(pool2d(out.con, PoolKind::Max, 1, 1), block.pool_conv, 1, 0), conv_relu);
  auto r3 = maybe_relu(conv2d(out.con, block.c3_reduce, 1, 0), conv_relu);
  out.conv3 = maybe_relu(conv2d(r3, block.c3, 1, 1), conv_relu);
  auto r5 = maybe_relu(conv2d(out.con, block.c5_reduce, 1, 0), conv_relu);
  out.conv5 = maybe_relu(conv2d(r5, block.c5, 1, 2), conv_relu);
  return out;
}

template <typename Scalar>
Tensor<Scalar> light_inception(LightInceptionBlock<Scalar>& block, const Tensor<Scalar>& x,
                               NormMode mode, bool conv_relu) {
  auto b = inception_branches(block, x, conv_relu);
  const std::array<Tensor<Scalar>, 4> parts = {b.pool, b.conv3, b.conv5, b.con};
  auto merged = concat(std::span<const Tensor<Scalar>>(parts), 1);
  return batch_norm(merged, block.gamma, block.beta, block.bn, mode, Scalar(1e-5), block.bn_momentum);
}

template <typename Scalar>
Tensor<Scalar> subsample(const Tensor<Scalar>& x, const Tensor<Scalar>* kernel, bool conv_relu) {
  if (x.rank() != 4) throw DimensionError("subsample: expected [B, C, H, W], got " + to_string(x.shape()));
  Tensor<Scalar> y = x;
  if (kernel) {
    if (x.dim(2) < 7 || x.dim(3) < 7) {
      throw DimensionError("subsample: spatial extent " + to_string(x.shape()) +
                           " is smaller than the 7x7 kernel");
    }
    y = maybe_relu(conv2d(x, *kernel, 2, 3), conv_relu);
  }
  return pool2d(y, PoolKind::Max, 3, 2, 1);
}

template <typename Scalar>
SemanticCnn<Scalar> SemanticCnn<Scalar>::init(const CnnConfig& config, Rng& rng) {
  config.validate();
  SemanticCnn net;
  net.config = config;
  net.stem = init_kernel<Scalar>(config.stem_channels, config.channels, 7, rng);
  net.block1 = LightInceptionBlock<Scalar>::init(config.stem_channels, config.stage1_branch, rng);
  net.block2 = LightInceptionBlock<Scalar>::init(4 * config.stage1_branch, config.stage2_branch, rng);
  return net;
}

template <typename Scalar>
std::vector<std::pair<std::string, Tensor<Scalar>>> SemanticCnn<Scalar>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<Scalar>>> out = {{"cnn.stem", stem}};
  auto add_block = [&](const std::string& p, const LightInceptionBlock<Scalar>& b) {
    out.emplace_back(p + ".con", b.con);
    out.emplace_back(p + ".pool_conv", b.pool_conv);
    out.emplace_back(p + ".c3_reduce", b.c3_reduce);
    out.emplace_back(p + ".c3", b.c3);
    out.emplace_back(p + ".c5_reduce", b.c5_reduce);
    out.emplace_back(p + ".c5", b.c5);
    out.emplace_back(p + ".gamma", b.gamma);
    out.emplace_back(p + ".beta", b.beta);
  };
  add_block("cnn.block1", block1);
  add_block("cnn.block2", block2);
  return out;
}

template <typename Scalar>
Tensor<Scalar> semanticity(SemanticCnn<Scalar>& net, const Tensor<Scalar>& images, NormMode mode) {
  const auto& c = net.config;
  if (images.rank() != 4 || images.dim(1) != c.channels || images.dim(2) != c.image_size ||
      images.dim(3) != c.image_size) {
    throw DimensionError("semanticity: expected images [B, " + std::to_string(c.channels) + ", " +
                         std::to_string(c.image_size) + ", " + std::to_string(c.image_size) +
                         "], got " + to_string(images.shape()));
  }
  auto s1 = light_inception(net.block1, subsample(images, &net.stem, c.conv_relu), mode, c.conv_relu);
  auto s2 = light_inception(net.block2, subsample<Scalar>(s1, nullptr, c.conv_relu), mode, c.conv_relu);
  const Index window = c.stage2_extent();
  auto pooled = pool2d(s2, PoolKind::Avg, static_cast<int>(window), static_cast<int>(window));
  return reshape(pooled, {images.dim(0), c.embedding_dim()});
}

#define SCN_INSTANTIATE(S)                                                                    \
  template Tensor<S> init_kernel<S>(Index, Index, Index, Rng&);                               \
  template struct LightInceptionBlock<S>;                                                     \
  template InceptionBranches<S> inception_branches<S>(const LightInceptionBlock<S>&,          \
                                                      const Tensor<S>&, bool);                \
  template Tensor<S> light_inception<S>(LightInceptionBlock<S>&, const Tensor<S>&, NormMode,  \
                                        bool);                                                \
  template Tensor<S> subsample<S>(const Tensor<S>&, const Tensor<S>*, bool);                  \
  template struct SemanticCnn<S>;                                                             \
  template Tensor<S> semanticity<S>(SemanticCnn<S>&, const Tensor<S>&, NormMode);

SCN_INSTANTIATE(float)
SCN_INSTANTIATE(double)

#undef SCN_INSTANTIATE

}  // namespace scn

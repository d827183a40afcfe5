#pragma once

#include "scn/ingest/descriptors.hpp"
#include "scn/ingest/domain.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scn {

struct SyntheticSpec {
  std::size_t n_consumers = 200;
  std::size_t n_companies = 4;
  std::uint64_t seed = 7;
  /// 1 ties the face to the consumer's traits; 0 makes it independent of them.
  double signal_strength = 1.0;
  std::uint32_t image_size = 112;
  std::uint32_t d_pdm = 40;
  std::uint32_t n_lm = 68;
  std::uint32_t channels = 1;

  /// Throws std::invalid_argument describing the first bad field.
  void validate() const;
};

/// Number of latent consumer traits. Traits 0 and 1 reach the face only
/// through the image geometry; traits 2..5 drive the vector descriptors.
inline constexpr int kSyntheticTraits = 6;

struct SyntheticDataset {
  std::vector<std::string> consumer_ids;
  std::vector<TransactionRecord> transactions;
  DescriptorFile descriptors;
  /// Target companies in label order.
  std::vector<std::string> companies;
  /// Purchase features tallied by the generator from its own transactions.
  std::vector<PurchaseFeatureVector> features;
  /// n x k, 1 = purchased.
  Eigen::MatrixXi labels;
  /// Vector-descriptor columns that read a single trait directly.
  std::vector<std::string> planted_columns;
  /// n x kSyntheticTraits latent traits.
  Eigen::MatrixXd traits;
};

/// Deterministic in (spec, taxonomy). Every taxonomy category is eligible for
/// filler activity; each target company sells in one category.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const Taxonomy& taxonomy);

}  // namespace scn

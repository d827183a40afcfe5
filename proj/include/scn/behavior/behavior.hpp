#pragma once

#include "scn/ingest/domain.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace scn {

using CompanySet = std::set<std::string, std::less<>>;

struct ConsumerLedger {
  std::string consumer_id;
  std::array<long, kLifeAspects> frequency{};
  std::array<double, kStrata> expense{};
  double total_expense = 0.0;
  CompanySet companies;
  std::size_t transactions = 0;
};

/// One ledger per consumer in order of first appearance.
std::vector<ConsumerLedger> build_ledgers(const std::vector<TransactionRecord>& transactions,
                                          const Taxonomy& taxonomy);
/// One ledger per id of `consumers`, in that order; consumers without
/// transactions get empty ledgers. Transactions of other consumers are an error.
std::vector<ConsumerLedger> build_ledgers(const std::vector<TransactionRecord>& transactions,
                                          const Taxonomy& taxonomy,
                                          std::span<const std::string> consumers);

/// 5 * frequency / population max per aspect; 0 when the population max is 0.
std::vector<std::array<double, kLifeAspects>> life_features(
    std::span<const ConsumerLedger> ledgers);

/// 5 * stratum expense / total stratum expense. Consumers with zero expense
/// get zeros and their ids are appended to `zero_expense` when given.
std::vector<std::array<double, kStrata>> stratum_features(
    std::span<const ConsumerLedger> ledgers, std::vector<std::string>* zero_expense = nullptr);

std::vector<PurchaseFeatureVector> purchase_features(
    std::span<const ConsumerLedger> ledgers, std::vector<std::string>* zero_expense = nullptr);

/// n x 20 matrix with rows in ledger order.
Eigen::MatrixXd feature_matrix(std::span<const PurchaseFeatureVector> features);

struct ChoiceLabels {
  std::vector<std::string> companies;
  Eigen::MatrixXi labels;  // n x k, 1 = purchased
};

/// labels(i, j) = 1 iff company j is in consumer i's payee set. Throws
/// DataError when a company never occurs as a payee.
ChoiceLabels choice_labels(std::span<const ConsumerLedger> ledgers,
                           const std::vector<std::string>& companies);

enum class GroupSplit {
  /// The first n mod 10 groups hold one extra consumer.
  Balanced,
  /// The first nine groups hold ceil(n / 10) each and the last the rest,
  /// e.g. 1485 -> 9 x 149 + 144. Requires the rest to be non-empty.
  CeilThenRemainder,
};

struct GroupPartition {
  /// Ledger indices per group, groups by ascending total expense.
  std::vector<std::vector<std::size_t>> groups;
};

inline constexpr std::size_t kExpenseGroups = 10;

std::vector<std::size_t> group_sizes(std::size_t n, GroupSplit split = GroupSplit::Balanced);

/// Stable sort by total expense (ties by consumer id) then split into ten.
GroupPartition partition_groups(std::span<const ConsumerLedger> ledgers,
                                GroupSplit split = GroupSplit::Balanced);

CompanySet group_companies(const std::vector<std::size_t>& members,
                           std::span<const ConsumerLedger> ledgers);

/// |a ∩ b| / |a ∪ b|.
double overlap_rate(const CompanySet& a, const CompanySet& b);

/// Sum over groups j other than a and b of
/// | |A∩B∩J| / |B∪J| - |B∩J| / |B∪J| |.
double impact_score(std::size_t a, std::size_t b, std::span<const CompanySet> groups);

/// Negative population standard deviation of the 17 differences between
/// the two groups' mean life vectors.
double aio_sd(std::span<const std::array<double, kLifeAspects>> group_a,
              std::span<const std::array<double, kLifeAspects>> group_b);

struct CompanyProfile {
  std::string company;
  std::size_t consumers = 0;
  double inverse_frequency = 0.0;
  /// Weighted features before block normalization; NaN where undefined.
  std::array<double, kPurchaseFeatures> weighted{};
  /// Block-normalized to [0, 1]; NaN where undefined.
  std::array<double, kPurchaseFeatures> normalized{};
  /// false where the feature's spread among the company's consumers is zero
  /// or undefined.
  std::array<bool, kPurchaseFeatures> defined{};
};

/// Inverse-frequency weighted profile of company `j`. `features` is n x 20,
/// `labels` n x k; N is the number of rows. The spread is the sample standard
/// deviation over the company's consumers. Stratum and life blocks are each
/// min-max scaled to [0, 1] over their defined components.
CompanyProfile weighted_company_features(std::size_t j, const Eigen::MatrixXd& features,
                                         const ChoiceLabels& labels);

/// features.csv: consumer_id then the 20 features in purchase_feature_names()
/// order. `provenance` becomes leading "# " comment lines.
void write_features_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                        std::span<const PurchaseFeatureVector> features,
                        std::string_view provenance = {});
/// labels.csv: consumer_id then one 0/1 column per company.
void write_labels_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                      const ChoiceLabels& labels, std::string_view provenance = {});

struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<PurchaseFeatureVector> features;
};
FeatureTable read_features_csv(const std::filesystem::path& path);

struct LabelTable {
  std::vector<std::string> ids;
  ChoiceLabels labels;
};
LabelTable read_labels_csv(const std::filesystem::path& path);

}  // namespace scn

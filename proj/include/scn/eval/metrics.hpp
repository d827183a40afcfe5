#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace scn {

/// Binary confusion counts for one company; positive = purchased.
struct Confusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

struct CompanyMetrics {
  std::string company;
  Confusion counts;
  /// False when the truth holds no purchasers: recall is undefined and the
  /// company is left out of every macro mean.
  bool defined = true;
  double precision = 0, recall = 0, f1 = 0;
};

/// Precision with no positive predictions is 0; F1 with precision and recall
/// both 0 is 0.
CompanyMetrics company_metrics(std::string company, const Confusion& counts);

struct MetricReport {
  std::vector<CompanyMetrics> companies;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  /// Mean absolute purchase-feature error; NaN when not measured.
  double mae = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  std::size_t consumers = 0;
};

/// Row-aligned predicted and true n x k label matrices. Throws
/// std::invalid_argument on shape mismatch or when no company is defined.
MetricReport macro_metrics(const Eigen::MatrixXi& predicted, const Eigen::MatrixXi& truth,
                           std::span<const std::string> companies);

/// Consumer-keyed overload: rows are matched by id, and the two id sets must
/// be identical (order may differ).
MetricReport macro_metrics(std::span<const std::string> predicted_ids,
                           const Eigen::MatrixXi& predicted,
                           std::span<const std::string> truth_ids, const Eigen::MatrixXi& truth,
                           std::span<const std::string> companies);

/// Mean of |a - b| over all cells.
double feature_mae(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth);

/// Across repeated runs: unweighted means, sample standard deviations (0 for
/// a single run) and the macro-F1 of the confusion counts pooled per company.
struct MetricSummary {
  std::size_t runs = 0;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0, mae = 0;
  double sd_macro_precision = 0, sd_macro_recall = 0, sd_macro_f1 = 0, sd_mae = 0;
  double pooled_macro_f1 = 0;
};

MetricSummary summarize(std::span<const MetricReport> runs);

nlohmann::ordered_json to_json(const MetricReport& report);
nlohmann::ordered_json to_json(const MetricSummary& summary);

}  // namespace scn

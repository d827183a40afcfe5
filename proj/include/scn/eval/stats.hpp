#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace scn {

/// I_x(a, b) by Lentz's continued fraction. a, b > 0, x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided tail probability of Student's t with df degrees of freedom.
double student_t_two_sided(double t, double df);

struct Correlation {
  double r = 0;
  double p = 1;
};

/// Sample Pearson correlation and its two-sided p-value on n - 2 degrees of
/// freedom. Throws std::invalid_argument for length < 3, unequal lengths or a
/// constant input.
Correlation pearson_p(std::span<const double> x, std::span<const double> y);

struct CorrelationCell {
  std::string row;
  std::string column;
  double r = 0;
  double p = 1;
};

/// Descriptor-to-feature and feature-to-label p-value tables. Cells touching a
/// constant column hold NaN and are listed in notes.
struct CorrelationTables {
  std::vector<std::string> descriptor_names;
  std::vector<std::string> feature_names;
  std::vector<std::string> companies;
  Eigen::MatrixXd descriptor_r, descriptor_p;  // descriptors x features
  Eigen::MatrixXd label_r, label_p;            // features x companies
  /// Smallest descriptor-to-feature p-values, ties broken by table position.
  std::vector<CorrelationCell> top;
  std::vector<std::string> notes;
};

CorrelationTables correlation_matrix(const Eigen::MatrixXd& descriptors,
                                     std::span<const std::string> descriptor_names,
                                     const Eigen::MatrixXd& features,
                                     std::span<const std::string> feature_names,
                                     const Eigen::MatrixXi& labels,
                                     std::span<const std::string> companies,
                                     std::size_t top_n = 20);

/// Share of finite cells with p < alpha.
double significant_fraction(const Eigen::MatrixXd& p_values, double alpha = 0.05);

nlohmann::ordered_json to_json(const CorrelationTables& tables);

}  // namespace scn

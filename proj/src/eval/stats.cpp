#include "scn/eval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace scn {

namespace {

// Continued fraction for I_x(a, b), modified Lentz. Converges fast for
// x < (a + 1) / (a + b + 2).
double beta_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1, d = 1 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1) < eps) return h;
  }
  throw std::runtime_error("regularized_incomplete_beta: continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0) || !(x >= 0 && x <= 1)) {
    throw std::invalid_argument("regularized_incomplete_beta: need a, b > 0 and x in [0, 1]");
  }
  if (x == 0) return 0;
  if (x == 1) return 1;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1) / (a + b + 2)) return front * beta_fraction(a, b, x) / a;
  return 1 - front * beta_fraction(b, a, 1 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0)) throw std::invalid_argument("student_t_two_sided: df must be positive");
  if (std::isinf(t)) return 0;
  return regularized_incomplete_beta(df / 2, 0.5, df / (df + t * t));
}

Correlation pearson_p(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson_p: inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("pearson_p: need at least 3 observations");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / double(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / double(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0 || syy == 0) throw std::invalid_argument("pearson_p: constant input");
  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  // With t = r sqrt(df / (1 - r^2)), df / (df + t^2) is exactly 1 - r^2.
  const double one_minus_r2 = (1 - c.r) * (1 + c.r);
  c.p = one_minus_r2 <= 0 ? 0.0
                          : regularized_incomplete_beta(double(n - 2) / 2, 0.5, one_minus_r2);
  return c;
}

CorrelationTables correlation_matrix(const Eigen::MatrixXd& descriptors,
                                     std::span<const std::string> descriptor_names,
                                     const Eigen::MatrixXd& features,
                                     std::span<const std::string> feature_names,
                                     const Eigen::MatrixXi& labels,
                                     std::span<const std::string> companies, std::size_t top_n) {
  const Eigen::Index n = descriptors.rows();
  if (features.rows() != n || labels.rows() != n ||
      descriptor_names.size() != static_cast<std::size_t>(descriptors.cols()) ||
      feature_names.size() != static_cast<std::size_t>(features.cols()) ||
      companies.size() != static_cast<std::size_t>(labels.cols())) {
    throw std::invalid_argument("correlation_matrix: inputs are not row- and name-aligned");
  }
  CorrelationTables t;
  t.descriptor_names.assign(descriptor_names.begin(), descriptor_names.end());
  t.feature_names.assign(feature_names.begin(), feature_names.end());
  t.companies.assign(companies.begin(), companies.end());

  auto is_constant = [](const Eigen::VectorXd& v) { return v.size() == 0 || (v.array() == v[0]).all(); };
  std::vector<bool> const_desc(descriptor_names.size()), const_feat(feature_names.size()),
      const_label(companies.size());
  for (Eigen::Index c = 0; c < descriptors.cols(); ++c) {
    const_desc[c] = is_constant(descriptors.col(c));
    if (const_desc[c]) t.notes.push_back("descriptor column " + descriptor_names[c] + " is constant; skipped");
  }
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const_feat[c] = is_constant(features.col(c));
    if (const_feat[c]) t.notes.push_back("feature " + feature_names[c] + " is constant; skipped");
  }
  const Eigen::MatrixXd label_values = labels.cast<double>();
  for (Eigen::Index c = 0; c < labels.cols(); ++c) {
    const_label[c] = is_constant(label_values.col(c));
    if (const_label[c]) t.notes.push_back("labels of " + companies[c] + " are constant; skipped");
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto table = [&](const Eigen::MatrixXd& a, const std::vector<bool>& ca, const Eigen::MatrixXd& b,
                   const std::vector<bool>& cb, Eigen::MatrixXd& r, Eigen::MatrixXd& p) {
    r.setConstant(a.cols(), b.cols(), nan);
    p.setConstant(a.cols(), b.cols(), nan);
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
      if (ca[i]) continue;
      const Eigen::VectorXd x = a.col(i);
      for (Eigen::Index j = 0; j < b.cols(); ++j) {
        if (cb[j]) continue;
        const Eigen::VectorXd y = b.col(j);
        const auto c = pearson_p(std::span(x.data(), x.size()), std::span(y.data(), y.size()));
        r(i, j) = c.r;
        p(i, j) = c.p;
      }
    }
  };
  table(descriptors, const_desc, features, const_feat, t.descriptor_r, t.descriptor_p);
  table(features, const_feat, label_values, const_label, t.label_r, t.label_p);

  std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
  for (Eigen::Index i = 0; i < t.descriptor_p.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.descriptor_p.cols(); ++j) {
      if (!std::isnan(t.descriptor_p(i, j))) cells.emplace_back(i, j);
    }
  }
  std::stable_sort(cells.begin(), cells.end(), [&](const auto& a, const auto& b) {
    return t.descriptor_p(a.first, a.second) < t.descriptor_p(b.first, b.second);
  });
  cells.resize(std::min(cells.size(), top_n));
  for (auto [i, j] : cells) {
    t.top.push_back({t.descriptor_names[i], t.feature_names[j], t.descriptor_r(i, j), t.descriptor_p(i, j)});
  }
  return t;
}

double significant_fraction(const Eigen::MatrixXd& p_values, double alpha) {
  long finite = 0, hits = 0;
  for (Eigen::Index i = 0; i < p_values.size(); ++i) {
    const double p = p_values.data()[i];
    if (std::isnan(p)) continue;
    ++finite;
    hits += p < alpha;
  }
  if (finite == 0) throw std::invalid_argument("significant_fraction: no finite p-values");
  return double(hits) / double(finite);
}

namespace {

nlohmann::ordered_json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back(std::isnan(m(i, j)) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(m(i, j)));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

nlohmann::ordered_json to_json(const CorrelationTables& t) {
  nlohmann::ordered_json top = nlohmann::ordered_json::array();
  for (const auto& c : t.top) top.push_back({{"descriptor", c.row}, {"feature", c.column}, {"r", c.r}, {"p", c.p}});
  nlohmann::ordered_json j;
  j["top"] = std::move(top);
  j["notes"] = t.notes;
  j["descriptor_names"] = t.descriptor_names;
  j["feature_names"] = t.feature_names;
  j["companies"] = t.companies;
  j["descriptor_feature_p"] = matrix_json(t.descriptor_p);
  j["descriptor_feature_r"] = matrix_json(t.descriptor_r);
  j["feature_label_p"] = matrix_json(t.label_p);
  j["feature_label_r"] = matrix_json(t.label_r);
  return j;
}

}  // namespace scn

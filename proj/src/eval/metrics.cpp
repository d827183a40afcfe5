#include "scn/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace scn {

CompanyMetrics company_metrics(std::string company, const Confusion& c) {
  CompanyMetrics m;
  m.company = std::move(company);
  m.counts = c;
  m.defined = c.tp + c.fn > 0;
  m.precision = c.tp + c.fp > 0 ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  m.recall = m.defined ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

namespace {

void fill_macro(MetricReport& r) {
  double p = 0, rc = 0, f = 0;
  int defined = 0;
  for (const auto& c : r.companies) {
    if (!c.defined) continue;
    p += c.precision;
    rc += c.recall;
    f += c.f1;
    ++defined;
  }
  if (defined == 0) throw std::invalid_argument("macro_metrics: no company has a true purchaser");
  r.macro_precision = p / defined;
  r.macro_recall = rc / defined;
  r.macro_f1 = f / defined;
}

}  // namespace

MetricReport macro_metrics(const Eigen::MatrixXi& predicted, const Eigen::MatrixXi& truth,
                           std::span<const std::string> companies) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols() ||
      truth.cols() != static_cast<Eigen::Index>(companies.size())) {
    throw std::invalid_argument("macro_metrics: predicted " + std::to_string(predicted.rows()) +
                                "x" + std::to_string(predicted.cols()) + ", truth " +
                                std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()) +
                                ", " + std::to_string(companies.size()) + " companies");
  }
  MetricReport r;
  r.consumers = static_cast<std::size_t>(truth.rows());
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    Confusion c;
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      const bool y = truth(i, j) != 0, p = predicted(i, j) != 0;
      c.tp += y && p;
      c.fp += !y && p;
      c.fn += y && !p;
      c.tn += !y && !p;
    }
    r.companies.push_back(company_metrics(companies[static_cast<std::size_t>(j)], c));
  }
  fill_macro(r);
  return r;
}

MetricReport macro_metrics(std::span<const std::string> predicted_ids,
                           const Eigen::MatrixXi& predicted,
                           std::span<const std::string> truth_ids, const Eigen::MatrixXi& truth,
                           std::span<const std::string> companies) {
  if (predicted_ids.size() != static_cast<std::size_t>(predicted.rows()) ||
      truth_ids.size() != static_cast<std::size_t>(truth.rows())) {
    throw std::invalid_argument("macro_metrics: id count does not match label rows");
  }
  if (predicted.cols() != truth.cols()) return macro_metrics(predicted, truth, companies);
  std::map<std::string_view, Eigen::Index> truth_row;
  for (std::size_t i = 0; i < truth_ids.size(); ++i) {
    if (!truth_row.emplace(truth_ids[i], Eigen::Index(i)).second) {
      throw std::invalid_argument("macro_metrics: duplicate consumer " + truth_ids[i]);
    }
  }
  if (predicted_ids.size() != truth_ids.size()) {
    throw std::invalid_argument("macro_metrics: predictions cover " +
                                std::to_string(predicted_ids.size()) + " consumers, truth " +
                                std::to_string(truth_ids.size()));
  }
  Eigen::MatrixXi aligned(truth.rows(), truth.cols());
  std::vector<bool> used(truth_ids.size(), false);
  for (std::size_t i = 0; i < predicted_ids.size(); ++i) {
    auto it = truth_row.find(predicted_ids[i]);
    if (it == truth_row.end()) {
      throw std::invalid_argument("macro_metrics: consumer " + predicted_ids[i] +
                                  " has no true labels");
    }
    if (used[static_cast<std::size_t>(it->second)]) {
      throw std::invalid_argument("macro_metrics: duplicate consumer " + predicted_ids[i]);
    }
    used[static_cast<std::size_t>(it->second)] = true;
    aligned.row(it->second) = predicted.row(static_cast<Eigen::Index>(i));
  }
  return macro_metrics(aligned, truth, companies);
}

double feature_mae(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols() || truth.size() == 0) {
    throw std::invalid_argument("feature_mae: shape mismatch or empty input");
  }
  return (predicted - truth).cwiseAbs().mean();
}

namespace {

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / double(v.size() - 1))};
}

}  // namespace

MetricSummary summarize(std::span<const MetricReport> runs) {
  if (runs.empty()) throw std::invalid_argument("summarize: no runs");
  MetricSummary s;
  s.runs = runs.size();
  std::vector<double> p, r, f, mae;
  for (const auto& run : runs) {
    p.push_back(run.macro_precision);
    r.push_back(run.macro_recall);
    f.push_back(run.macro_f1);
    mae.push_back(run.mae);
  }
  std::tie(s.macro_precision, s.sd_macro_precision) = mean_sd(p);
  std::tie(s.macro_recall, s.sd_macro_recall) = mean_sd(r);
  std::tie(s.macro_f1, s.sd_macro_f1) = mean_sd(f);
  std::tie(s.mae, s.sd_mae) = mean_sd(mae);

  MetricReport pooled;
  const std::size_t k = runs.front().companies.size();
  for (std::size_t j = 0; j < k; ++j) {
    Confusion total;
    for (const auto& run : runs) {
      if (run.companies.size() != k || run.companies[j].company != runs.front().companies[j].company) {
        throw std::invalid_argument("summarize: runs cover different companies");
      }
      const auto& c = run.companies[j].counts;
      total.tp += c.tp;
      total.fp += c.fp;
      total.fn += c.fn;
      total.tn += c.tn;
    }
    pooled.companies.push_back(company_metrics(runs.front().companies[j].company, total));
  }
  fill_macro(pooled);
  s.pooled_macro_f1 = pooled.macro_f1;
  return s;
}

nlohmann::ordered_json to_json(const MetricReport& report) {
  nlohmann::ordered_json companies = nlohmann::ordered_json::array();
  for (const auto& c : report.companies) {
    companies.push_back({{"company", c.company},
                         {"defined", c.defined},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"tp", c.counts.tp},
                         {"fp", c.counts.fp},
                         {"fn", c.counts.fn},
                         {"tn", c.counts.tn}});
  }
  nlohmann::ordered_json j;
  j["seed"] = report.seed;
  j["consumers"] = report.consumers;
  j["macro_precision"] = report.macro_precision;
  j["macro_recall"] = report.macro_recall;
  j["macro_f1"] = report.macro_f1;
  j["mae"] = std::isnan(report.mae) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(report.mae);
  j["companies"] = std::move(companies);
  return j;
}

nlohmann::ordered_json to_json(const MetricSummary& s) {
  return {{"runs", s.runs},
          {"macro_precision", s.macro_precision},
          {"sd_macro_precision", s.sd_macro_precision},
          {"macro_recall", s.macro_recall},
          {"sd_macro_recall", s.sd_macro_recall},
          {"macro_f1", s.macro_f1},
          {"sd_macro_f1", s.sd_macro_f1},
          {"model_macro_f1", s.pooled_macro_f1},
          {"mae", s.mae},
          {"sd_mae", s.sd_mae}};
}

}  // namespace scn

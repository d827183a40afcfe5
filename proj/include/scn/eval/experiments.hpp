#pragma once

#include "scn/eval/metrics.hpp"
#include "scn/model/train.hpp"

#include <functional>

namespace scn {

/// Everything one experiment needs, row-aligned by consumer.
struct ExperimentData {
  std::vector<std::string> ids;
  std::vector<std::string> companies;
  DescriptorFile descriptors;
  Eigen::MatrixXd features;  // n x 20
  Eigen::MatrixXi labels;    // n x k
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
};

struct RunResult {
  MetricReport metrics;  // held-out test consumers
  TrainReport report;
  std::array<Index, kAspects> initial_edges{};
  std::array<Index, kAspects> final_edges{};
};

/// One SCN training run in single precision, scored on the test split.
RunResult run_scn(const ExperimentData& data, const ExperimentConfig& config);

/// Calls job(i) for i in [0, count) on up to `jobs` threads. Results are
/// whatever job writes into caller-owned slots; the first exception by index
/// is rethrown after all threads finish.
void run_jobs(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& job);

struct FractionRow {
  double fraction = 0;
  std::vector<MetricReport> runs;  // in seed order
  MetricSummary summary;
};

struct FractionTable {
  std::vector<FractionRow> rows;  // in fraction order
};

FractionTable fraction_experiment(const ExperimentData& data, const ExperimentConfig& config,
                                  std::span<const double> fractions,
                                  std::span<const std::uint64_t> seeds, std::size_t jobs = 1);

struct SweepPoint {
  double threshold = 0;
  double mae = 0;
  double macro_f1 = 0;
  int epochs = 0;
  /// Summed over the four aspects. Initial counts come from the shared
  /// initialization, final ones from the best-validation state.
  Index initial_edges = 0;
  Index final_edges = 0;
};

struct SweepReport {
  std::vector<SweepPoint> points;  // ascending threshold
};

/// One run per threshold at the config's seed.
SweepReport threshold_sweep(const ExperimentData& data, const ExperimentConfig& config,
                            std::span<const double> thresholds, std::size_t jobs = 1);

/// 0.50, 0.55, ..., 0.95.
std::vector<double> default_thresholds();

struct LogisticOptions {
  std::vector<double> l2_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  int max_iterations = 20000;
  double tolerance = 1e-8;  // on the gradient norm
};

struct LogisticFit {
  Eigen::VectorXd w;
  double b = 0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes mean log-loss + l2/2 |w|^2 (bias unpenalized) by accelerated
/// gradient descent with adaptive restart.
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, double l2,
                         const LogisticOptions& options = {});

Eigen::VectorXd logistic_probabilities(const LogisticFit& fit, const Eigen::MatrixXd& x);

struct BaselineResult {
  MetricReport metrics;           // test consumers
  std::vector<double> chosen_l2;  // per company, NaN when degenerate
  std::vector<std::string> degenerate;
};

/// Per-company logistic regression on standardized inputs (statistics from the
/// training rows). L2 strength picked by validation log-loss. Companies with a
/// single class among training rows are flagged and excluded from the macro
/// means.
BaselineResult logistic_baseline(const Eigen::MatrixXd& inputs, const Eigen::MatrixXi& labels,
                                 std::span<const std::string> companies, const DataSplit& split,
                                 const LogisticOptions& options = {});

nlohmann::ordered_json to_json(const FractionTable& table);
nlohmann::ordered_json to_json(const SweepReport& report);
nlohmann::ordered_json to_json(const BaselineResult& result);

/// threshold,macro_f1,mae,initial_edges,final_edges
std::string sweep_csv(const SweepReport& report);

}  // namespace scn

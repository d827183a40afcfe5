#include "scn/eval/experiments.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>

namespace scn {

namespace {

std::array<Index, kAspects> edges_of(const ScnModel<float>& model) {
  std::array<Index, kAspects> e{};
  for (int a = 0; a < kAspects; ++a) e[a] = model.aspects[a].select.surviving_edges();
  return e;
}

template <typename Matrix>
Matrix gather(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

}  // namespace

RunResult run_scn(const ExperimentData& data, const ExperimentConfig& config) {
  const Index n = static_cast<Index>(data.ids.size());
  if (data.features.rows() != n || data.labels.rows() != n ||
      data.descriptors.sets.size() != data.ids.size() ||
      data.labels.cols() != static_cast<Index>(data.companies.size())) {
    throw std::invalid_argument("run_scn: descriptors, features and labels are not row-aligned");
  }
  TrainingData<float> td;
  td.inputs = prepare_inputs<float>(data.descriptors, config.model);
  td.features = data.features.cast<float>();
  td.labels = data.labels;
  const DataSplit split = make_split(data.labels, config.train);

  Rng rng(config.train.seed);
  auto model = ScnModel<float>::init(config.model, td.inputs, data.labels.cols(), rng);
  RunResult result;
  result.initial_edges = edges_of(model);
  result.report = train(model, td, split, config.train, config.loss);
  result.final_edges = edges_of(model);

  const auto inference = infer(model, td.inputs, split.test, config.train.batch_size);
  const Eigen::MatrixXi predicted = decide(inference.purchase, config.model.single_softmax);
  result.metrics = macro_metrics(predicted, gather(data.labels, split.test), data.companies);
  result.metrics.mae = feature_mae(inference.features, gather(data.features, split.test));
  result.metrics.seed = config.train.seed;
  return result;
}

void run_jobs(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

FractionTable fraction_experiment(const ExperimentData& data, const ExperimentConfig& config,
                                  std::span<const double> fractions,
                                  std::span<const std::uint64_t> seeds, std::size_t jobs) {
  if (fractions.empty() || seeds.empty()) {
    throw std::invalid_argument("fraction_experiment: need at least one fraction and one seed");
  }
  std::vector<MetricReport> flat(fractions.size() * seeds.size());
  run_jobs(flat.size(), jobs, [&](std::size_t i) {
    ExperimentConfig c = config;
    c.train.labeled_fraction = fractions[i / seeds.size()];
    c.train.seed = seeds[i % seeds.size()];
    flat[i] = run_scn(data, c).metrics;
  });
  FractionTable table;
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    FractionRow row;
    row.fraction = fractions[f];
    row.runs.assign(flat.begin() + static_cast<long>(f * seeds.size()),
                    flat.begin() + static_cast<long>((f + 1) * seeds.size()));
    row.summary = summarize(row.runs);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 10; i <= 19; ++i) t.push_back(i * 0.05);
  return t;
}

SweepReport threshold_sweep(const ExperimentData& data, const ExperimentConfig& config,
                            std::span<const double> thresholds, std::size_t jobs) {
  std::vector<double> sorted(thresholds.begin(), thresholds.end());
  std::sort(sorted.begin(), sorted.end());
  for (double t : sorted) {
    if (!(t > 0 && t < 1)) throw std::invalid_argument("threshold_sweep: thresholds must lie in (0, 1)");
  }
  SweepReport report;
  report.points.resize(sorted.size());
  run_jobs(sorted.size(), jobs, [&](std::size_t i) {
    ExperimentConfig c = config;
    c.model.select_threshold = sorted[i];
    const RunResult r = run_scn(data, c);
    SweepPoint& p = report.points[i];
    p.threshold = sorted[i];
    p.mae = r.metrics.mae;
    p.macro_f1 = r.metrics.macro_f1;
    p.epochs = r.report.epochs_run;
    for (int a = 0; a < kAspects; ++a) {
      p.initial_edges += r.initial_edges[a];
      p.final_edges += r.final_edges[a];
    }
  });
  return report;
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
  if (z >= 0) return 1 / (1 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1 + e);
}

}  // namespace

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, double l2,
                         const LogisticOptions& options) {
  const Index m = x.rows(), d = x.cols();
  if (m == 0 || y.size() != m) throw std::invalid_argument("fit_logistic: empty or misaligned input");
  if (l2 < 0) throw std::invalid_argument("fit_logistic: l2 must be non-negative");
  Eigen::MatrixXd xa(m, d + 1);
  xa << x, Eigen::VectorXd::Ones(m);
  const Eigen::VectorXd target = y.cast<double>();
  const double curvature =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(xa.transpose() * xa, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .maxCoeff();
  const double lipschitz = curvature / (4.0 * double(m)) + l2;
  auto gradient = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd z = xa * theta;
    Eigen::VectorXd residual(m);
    for (Index i = 0; i < m; ++i) residual[i] = sigmoid(z[i]) - target[i];
    Eigen::VectorXd g = xa.transpose() * residual / double(m);
    g.head(d) += l2 * theta.head(d);
    return g;
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1), look = theta;
  double t = 1;
  LogisticFit fit;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Eigen::VectorXd g = gradient(look);
    const Eigen::VectorXd next = look - g / lipschitz;
    const bool restart = g.dot(next - theta) > 0;
    const double t_next = restart ? 1.0 : (1 + std::sqrt(1 + 4 * t * t)) / 2;
    look = restart ? next : Eigen::VectorXd(next + ((t - 1) / t_next) * (next - theta));
    theta = next;
    t = t_next;
    fit.iterations = it;
    if (it % 10 == 0 && gradient(theta).norm() < options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.w = theta.head(d);
  fit.b = theta[d];
  return fit;
}

Eigen::VectorXd logistic_probabilities(const LogisticFit& fit, const Eigen::MatrixXd& x) {
  const Eigen::VectorXd z = (x * fit.w).array() + fit.b;
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

BaselineResult logistic_baseline(const Eigen::MatrixXd& inputs, const Eigen::MatrixXi& labels,
                                 std::span<const std::string> companies, const DataSplit& split,
                                 const LogisticOptions& options) {
  if (inputs.rows() != labels.rows() || labels.cols() != static_cast<Index>(companies.size())) {
    throw std::invalid_argument("logistic_baseline: inputs and labels are not aligned");
  }
  if (split.train.empty() || split.validation.empty() || split.test.empty()) {
    throw std::invalid_argument("logistic_baseline: train, validation and test sets must be non-empty");
  }
  if (options.l2_grid.empty()) throw std::invalid_argument("logistic_baseline: empty L2 grid");
  Eigen::MatrixXd train_x = gather(inputs, split.train);
  const Eigen::RowVectorXd mean = train_x.colwise().mean();
  Eigen::RowVectorXd sd = ((train_x.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Index c = 0; c < sd.size(); ++c) {
    if (sd[c] == 0) sd[c] = std::numeric_limits<double>::infinity();  // constant column maps to 0
  }
  auto standardize = [&](const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
    return (x.rowwise() - mean).array().rowwise() / sd.array();
  };
  train_x = standardize(train_x);
  const Eigen::MatrixXd val_x = standardize(gather(inputs, split.validation));
  const Eigen::MatrixXd test_x = standardize(gather(inputs, split.test));
  const Eigen::MatrixXi train_y = gather(labels, split.train);
  const Eigen::MatrixXi val_y = gather(labels, split.validation);
  const Eigen::MatrixXi test_y = gather(labels, split.test);

  BaselineResult result;
  std::vector<Index> kept;
  Eigen::MatrixXi predicted(test_x.rows(), labels.cols());
  for (Index j = 0; j < labels.cols(); ++j) {
    const Index positives = train_y.col(j).sum();
    if (positives == 0 || positives == train_y.rows()) {
      result.degenerate.push_back(companies[static_cast<std::size_t>(j)]);
      result.chosen_l2.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    kept.push_back(j);
    double best_loss = std::numeric_limits<double>::infinity();
    LogisticFit best;
    double best_l2 = options.l2_grid.front();
    for (double l2 : options.l2_grid) {
      const LogisticFit fit = fit_logistic(train_x, train_y.col(j), l2, options);
      const Eigen::VectorXd z = (val_x * fit.w).array() + fit.b;
      double loss = 0;
      for (Index i = 0; i < z.size(); ++i) loss += softplus(z[i]) - val_y(i, j) * z[i];
      if (loss < best_loss) {
        best_loss = loss;
        best = fit;
        best_l2 = l2;
      }
    }
    result.chosen_l2.push_back(best_l2);
    const Eigen::VectorXd p = logistic_probabilities(best, test_x);
    predicted.col(j) = (p.array() >= 0.5).cast<int>();
  }
  if (kept.empty()) throw std::invalid_argument("logistic_baseline: every company is single-class");
  Eigen::MatrixXi kept_pred(test_y.rows(), Index(kept.size())), kept_true(test_y.rows(), Index(kept.size()));
  std::vector<std::string> kept_names;
  for (std::size_t c = 0; c < kept.size(); ++c) {
    kept_pred.col(Index(c)) = predicted.col(kept[c]);
    kept_true.col(Index(c)) = test_y.col(kept[c]);
    kept_names.push_back(companies[static_cast<std::size_t>(kept[c])]);
  }
  result.metrics = macro_metrics(kept_pred, kept_true, kept_names);
  return result;
}

nlohmann::ordered_json to_json(const FractionTable& table) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& r : row.runs) runs.push_back(to_json(r));
    rows.push_back({{"fraction", row.fraction}, {"summary", to_json(row.summary)}, {"runs", std::move(runs)}});
  }
  return {{"rows", std::move(rows)}};
}

nlohmann::ordered_json to_json(const SweepReport& report) {
  nlohmann::ordered_json points = nlohmann::ordered_json::array();
  for (const auto& p : report.points) {
    points.push_back({{"threshold", p.threshold},
                      {"macro_f1", p.macro_f1},
                      {"mae", p.mae},
                      {"epochs", p.epochs},
                      {"initial_edges", p.initial_edges},
                      {"final_edges", p.final_edges}});
  }
  return {{"points", std::move(points)}};
}

nlohmann::ordered_json to_json(const BaselineResult& result) {
  nlohmann::ordered_json l2 = nlohmann::ordered_json::array();
  for (double v : result.chosen_l2) {
    l2.push_back(std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v));
  }
  return {{"metrics", to_json(result.metrics)}, {"chosen_l2", std::move(l2)}, {"degenerate", result.degenerate}};
}

std::string sweep_csv(const SweepReport& report) {
  std::string out = "threshold,macro_f1,mae,initial_edges,final_edges\n";
  char line[160];
  for (const auto& p : report.points) {
    std::snprintf(line, sizeof line, "%.2f,%.17g,%.17g,%ld,%ld\n", p.threshold, p.macro_f1, p.mae,
                  static_cast<long>(p.initial_edges), static_cast<long>(p.final_edges));
    out += line;
  }
  return out;
}

}  // namespace scn

#include "scn/model/train.hpp"

#include "scn/numerics/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace scn {

void TrainConfig::validate() const {
  if (!(labeled_fraction > 0 && labeled_fraction <= 1)) {
    throw std::invalid_argument("train: labeled_fraction must lie in (0, 1]");
  }
  if (!(validation_fraction > 0 && validation_fraction < 1)) {
    throw std::invalid_argument("train: validation_fraction must lie in (0, 1)");
  }
  if (!(test_fraction >= 0 && test_fraction < 1)) {
    throw std::invalid_argument("train: test_fraction must lie in [0, 1)");
  }
  if (batch_size < 2) throw std::invalid_argument("train: batch_size must be at least 2");
  if (patience < 1) throw std::invalid_argument("train: patience must be at least 1");
  if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be at least 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (!(weight_decay >= 0)) throw std::invalid_argument("train: weight_decay must be non-negative");
}

std::vector<std::uint8_t> DataSplit::mask(Index n, const std::vector<Index>& rows) const {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(n), 0);
  for (Index i : rows) m.at(static_cast<std::size_t>(i)) = 1;
  return m;
}

namespace {

std::string pattern_of(const Eigen::MatrixXi& labels, Index i) {
  std::string key;
  for (Index j = 0; j < labels.cols(); ++j) key += labels(i, j) ? '1' : '0';
  return key;
}

// Shuffles, groups by label pattern, then takes `count` items at evenly
// spaced positions so every pattern is represented in proportion.
std::pair<std::vector<Index>, std::vector<Index>> stratified_pick(std::vector<Index> pool,
                                                                  const Eigen::MatrixXi& labels,
                                                                  std::size_t count, Rng rng) {
  rng.shuffle(std::span<Index>(pool));
  std::stable_sort(pool.begin(), pool.end(), [&](Index a, Index b) {
    return pattern_of(labels, a) < pattern_of(labels, b);
  });
  const std::size_t n = pool.size();
  std::vector<Index> picked, rest;
  for (std::size_t p = 0; p < n; ++p) {
    if ((p + 1) * count / n > p * count / n) {
      picked.push_back(pool[p]);
    } else {
      rest.push_back(pool[p]);
    }
  }
  std::sort(picked.begin(), picked.end());
  std::sort(rest.begin(), rest.end());
  return {picked, rest};
}

std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

template <typename Scalar>
using Snapshot = std::map<std::string, VectorX<Scalar>>;

template <typename Scalar>
Snapshot<Scalar> snapshot(const ScnModel<Scalar>& model) {
  Snapshot<Scalar> out;
  for (const auto& [name, t] : model.state()) out.emplace(name, t.value());
  return out;
}

template <typename Scalar>
void restore(ScnModel<Scalar>& model, const Snapshot<Scalar>& snap) {
  ParameterMap<Scalar> live = model.state();
  for (auto& [name, t] : live) t.mutable_value() = snap.at(name);
  model.load_state(live);
}

template <typename Scalar>
MatrixX<Scalar> gather(const MatrixX<Scalar>& m, std::span<const Index> rows) {
  MatrixX<Scalar> out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

Eigen::MatrixXi gather(const Eigen::MatrixXi& m, std::span<const Index> rows) {
  Eigen::MatrixXi out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

// Chunk boundaries over n items; a trailing chunk of one is merged into the
// previous one since batch norm needs two samples.
std::vector<std::pair<Index, Index>> chunks(Index n, Index batch) {
  std::vector<std::pair<Index, Index>> out;
  for (Index start = 0; start < n;) {
    Index stop = std::min(n, start + batch);
    if (n - stop == 1) ++stop;
    out.emplace_back(start, stop);
    start = stop;
  }
  return out;
}

}  // namespace

DataSplit make_split(const Eigen::MatrixXi& labels, const TrainConfig& config) {
  config.validate();
  const Index n = labels.rows();
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  DataSplit split;
  auto [test, pool] = stratified_pick(all, labels, rounded(config.test_fraction * double(n)),
                                      Rng(config.split_seed).fork(1));
  split.test = std::move(test);
  const Rng rng(config.seed);
  std::size_t n_labeled = std::max<std::size_t>(2, rounded(config.labeled_fraction * double(pool.size())));
  n_labeled = std::min(n_labeled, pool.size());
  auto [labeled, unlabeled] = stratified_pick(pool, labels, n_labeled, rng.fork(2));
  split.unlabeled = std::move(unlabeled);
  std::size_t n_val = std::max<std::size_t>(1, rounded(config.validation_fraction * double(labeled.size())));
  if (labeled.size() < 3) throw TrainingError("train: fewer than 3 labeled consumers");
  n_val = std::min(n_val, labeled.size() - 2);
  auto [val, tr] = stratified_pick(labeled, labels, n_val, rng.fork(3));
  split.validation = std::move(val);
  split.train = std::move(tr);
  return split;
}

nlohmann::ordered_json to_json(const DataSplit& split) {
  return {{"train", split.train},
          {"validation", split.validation},
          {"unlabeled", split.unlabeled},
          {"test", split.test}};
}

DataSplit split_from_json(const nlohmann::ordered_json& j) {
  DataSplit s;
  s.train = j.at("train").get<std::vector<Index>>();
  s.validation = j.at("validation").get<std::vector<Index>>();
  s.unlabeled = j.at("unlabeled").get<std::vector<Index>>();
  s.test = j.at("test").get<std::vector<Index>>();
  return s;
}

nlohmann::ordered_json to_json(const TrainReport& report) {
  nlohmann::ordered_json history = nlohmann::ordered_json::array();
  for (const auto& e : report.history) {
    nlohmann::ordered_json edges;
    for (int a = 0; a < kAspects; ++a) {
      edges[name_of(kAllAspects[static_cast<std::size_t>(a)])] =
          e.surviving_edges[static_cast<std::size_t>(a)];
    }
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_mae", e.train_mae},
                       {"train_sce", e.train_sce},
                       {"val_loss", e.val_loss},
                       {"val_mae", e.val_mae},
                       {"val_sce", e.val_sce},
                       {"surviving_edges", edges}});
  }
  return {{"epochs_run", report.epochs_run},
          {"best_epoch", report.best_epoch},
          {"best_val_loss", report.best_val_loss},
          {"stopped_early", report.stopped_early},
          {"split", to_json(report.split)},
          {"history", history}};
}

template <typename Scalar>
StepLoss accumulate_gradients(ScnModel<Scalar>& model, const TrainingData<Scalar>& data,
                              std::span<const Index> rows, Index batch_size,
                              const LossConfig& loss_config) {
  if (rows.size() < 2) throw TrainingError("train: need at least 2 training consumers");
  const double n_rows = static_cast<double>(rows.size());
  const bool images = model.config.use_images;
  std::array<LightInceptionBlock<Scalar>*, 2> blocks = {&model.cnn.block1, &model.cnn.block2};
  std::array<BatchNormState<Scalar>, 2> mean_stats;
  if (images) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const Index c = blocks[b]->bn.running_mean.size();
      mean_stats[b] = {VectorX<Scalar>::Zero(c), VectorX<Scalar>::Zero(c)};
      blocks[b]->bn_momentum = Scalar(1);
    }
  }
  StepLoss out;
  auto graph = graph_embeddings(model, data.inputs);
  auto detached = graph.detach(true);
  for (auto [start, stop] : chunks(static_cast<Index>(rows.size()), batch_size)) {
    auto chunk = rows.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(stop - start));
    Tensor<Scalar> sem;
    if (images) {
      sem = semanticity(model.cnn, index_rows(data.inputs.images, chunk), NormMode::Train);
      const Scalar share = static_cast<Scalar>(chunk.size()) / static_cast<Scalar>(n_rows);
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        mean_stats[b].running_mean += share * blocks[b]->bn.running_mean;
        mean_stats[b].running_var += share * blocks[b]->bn.running_var;
      }
    }
    auto pred = predict_heads(model, index_rows(detached, chunk), sem);
    const std::vector<std::uint8_t> ones(chunk.size(), 1);
    auto terms = loss(pred, gather(data.features, chunk), gather(data.labels, chunk), ones,
                      loss_config, model.config.single_softmax, n_rows);
    out.loss += static_cast<double>(terms.total.item());
    out.mae += terms.mae;
    out.sce += terms.sce;
    backward(terms.total, BackwardOptions{.accumulate = true});
  }
  backward(graph, VectorX<Scalar>(detached.grad()), BackwardOptions{.accumulate = true});
  if (images) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      blocks[b]->bn = mean_stats[b];
      blocks[b]->bn_momentum = Scalar(0.1);
    }
  }
  return out;
}

template <typename Scalar>
TrainReport train(ScnModel<Scalar>& model, const TrainingData<Scalar>& data,
                  const DataSplit& split, const TrainConfig& config, const LossConfig& loss_config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  loss_config.validate();
  const Index n = data.inputs.n();
  const Index k = model.n_companies;
  if (data.features.rows() != n || data.labels.rows() != n || data.labels.cols() != k) {
    throw DimensionError("train: targets do not match " + std::to_string(n) + " consumers and " +
                         std::to_string(k) + " companies");
  }
  if (split.train.size() < 2 || split.validation.empty()) {
    throw TrainingError("train: need at least 2 training and 1 validation consumer");
  }
  std::vector<Index> labeled = split.train;
  labeled.insert(labeled.end(), split.validation.begin(), split.validation.end());
  for (Index j = 0; j < k; ++j) {
    Index pos = 0;
    for (Index i : labeled) pos += data.labels(i, j) != 0;
    const Index neg = static_cast<Index>(labeled.size()) - pos;
    if (pos < 2 || neg < 2) {
      throw TrainingError("train: company " + std::to_string(j) + " has " + std::to_string(pos) +
                          " positive and " + std::to_string(neg) +
                          " negative labeled consumers; need at least 2 of each");
    }
  }

  // Start the feature bias at the training mean so early epochs fit the
  // spread rather than the offset.
  {
    VectorX<Scalar> mean = VectorX<Scalar>::Zero(data.features.cols());
    for (Index i : split.train) mean += data.features.row(i).transpose();
    model.bf.mutable_value() = mean / static_cast<Scalar>(split.train.size());
  }

  // Weight decay would drag select weights under the threshold regardless of
  // the data, so they get their own optimizer without it.
  std::vector<Tensor<Scalar>> params, select_params;
  for (const auto& [name, t] : model.parameters()) {
    (name.starts_with("select.") ? select_params : params).push_back(t);
  }
  AdamConfig adam_config;
  adam_config.lr = config.learning_rate;
  adam_config.weight_decay = config.weight_decay;
  Adam<Scalar> adam(params, adam_config);
  adam_config.weight_decay = 0.0;
  Adam<Scalar> select_adam(select_params, adam_config);
  params.insert(params.end(), select_params.begin(), select_params.end());

  const auto val_targets = gather(data.features, split.validation);
  const auto val_labels = gather(data.labels, split.validation);
  const std::vector<std::uint8_t> val_mask(split.validation.size(), 1);
  Rng order_rng = Rng(config.seed).fork(4);

  TrainReport report;
  report.split = split;
  Snapshot<Scalar> best = snapshot(model);
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    adam.zero_grad();
    select_adam.zero_grad();
    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<Index> order = split.train;
    order_rng.shuffle(std::span<Index>(order));
    const auto step = accumulate_gradients(model, data, order, config.batch_size, loss_config);
    rec.train_loss = step.loss;
    rec.train_mae = step.mae;
    rec.train_sce = step.sce;
    if (!std::isfinite(step.loss)) {
      std::ostringstream msg;
      msg << "train: non-finite loss at epoch " << epoch << " (mae " << step.mae << ", sce "
          << step.sce << ")";
      throw TrainingError(msg.str());
    }
    for (const auto& p : params) {
      if (p.has_grad() && !p.grad().allFinite()) {
        throw TrainingError("train: non-finite gradient at epoch " + std::to_string(epoch) +
                            " (loss " + std::to_string(step.loss) + ")");
      }
    }
    adam.step();
    select_adam.step();

    {
      NoGradGuard no_grad;
      auto pred = forward(model, data.inputs, split.validation, NormMode::Infer, config.batch_size);
      auto terms = loss(pred, val_targets, val_labels, val_mask, loss_config,
                        model.config.single_softmax);
      rec.val_loss = static_cast<double>(terms.total.item());
      rec.val_mae = terms.mae;
      rec.val_sce = terms.sce;
    }
    if (!std::isfinite(rec.val_loss)) {
      throw TrainingError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    for (std::size_t a = 0; a < kAspects; ++a) {
      rec.surviving_edges[a] = model.aspects[a].select.surviving_edges();
    }
    report.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      best = snapshot(model);
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      report.stopped_early = true;
      break;
    }
  }
  adam.zero_grad();
  select_adam.zero_grad();
  restore(model, best);
  report.epochs_run = static_cast<int>(report.history.size());
  report.best_val_loss = best_loss;
  return report;
}

template <typename Scalar>
Inference<Scalar> infer(ScnModel<Scalar>& model, const ModelInputs<Scalar>& inputs,
                        std::span<const Index> rows, Index batch_size) {
  NoGradGuard no_grad;
  auto pred = forward(model, inputs, rows, NormMode::Infer, batch_size);
  Inference<Scalar> out;
  out.features = pred.features.matrix().template cast<double>();
  out.purchase = pred.purchase().template cast<double>();
  return out;
}

#define SCN_INSTANTIATE(S)                                                                      \
  template StepLoss accumulate_gradients<S>(ScnModel<S>&, const TrainingData<S>&,              \
                                            std::span<const Index>, Index, const LossConfig&); \
  template TrainReport train<S>(ScnModel<S>&, const TrainingData<S>&, const DataSplit&,        \
                                const TrainConfig&, const LossConfig&,                         \
                                const std::function<void(const EpochRecord&)>&);               \
  template Inference<S> infer<S>(ScnModel<S>&, const ModelInputs<S>&, std::span<const Index>,  \
                                 Index);

SCN_INSTANTIATE(float)
SCN_INSTANTIATE(double)

#undef SCN_INSTANTIATE

}  // namespace scn

#pragma once

#include "scn/model/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace scn {

/// Raised when training cannot proceed: too few labels, non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double labeled_fraction = 1.0;  // of the non-test consumers
  Index batch_size = 64;
  int patience = 50;
  int max_epochs = 500;
  double learning_rate = 1e-2;
  double weight_decay = 1e-2;  // not applied to select weights
  std::uint64_t seed = 7;
  double validation_fraction = 0.15;  // of the labeled consumers
  /// Held out for evaluation; fixed by split_seed so runs with different
  /// seeds or fractions score on the same consumers.
  double test_fraction = 0.2;
  std::uint64_t split_seed = 1;

  void validate() const;
};

/// Disjoint consumer index sets, each sorted ascending.
struct DataSplit {
  std::vector<Index> train;       // labeled, drive the gradient
  std::vector<Index> validation;  // labeled, drive early stopping
  std::vector<Index> unlabeled;   // in the graph, never in the loss
  std::vector<Index> test;        // in the graph, never in the loss

  std::vector<std::uint8_t> mask(Index n, const std::vector<Index>& rows) const;
};

/// Stratified by label pattern: test from split_seed, then the labeled subset
/// and its validation part from seed.
DataSplit make_split(const Eigen::MatrixXi& labels, const TrainConfig& config);

template <typename Scalar>
struct TrainingData {
  ModelInputs<Scalar> inputs;
  MatrixX<Scalar> features;  // n x 20 targets on the 0..5 scale
  Eigen::MatrixXi labels;    // n x k
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, train_mae = 0, train_sce = 0;
  double val_loss = 0, val_mae = 0, val_sce = 0;
  std::array<Index, kAspects> surviving_edges{};
};

struct TrainReport {
  std::vector<EpochRecord> history;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_loss = 0;
  bool stopped_early = false;
  DataSplit split;
};

nlohmann::ordered_json to_json(const TrainReport& report);
nlohmann::ordered_json to_json(const DataSplit& split);
DataSplit split_from_json(const nlohmann::ordered_json& j);

struct StepLoss {
  double loss = 0, mae = 0, sce = 0;
};

/// One optimizer step's worth of gradient: the graph part is evaluated once
/// over all nodes and detached, the heads and CNN run on chunks of `rows`,
/// and the accumulated gradient at the cut is pushed back through the graph.
/// Adds into existing gradients. Batch-norm running statistics are replaced
/// by the size-weighted mean of the chunk statistics.
template <typename Scalar>
StepLoss accumulate_gradients(ScnModel<Scalar>& model, const TrainingData<Scalar>& data,
                              std::span<const Index> rows, Index batch_size,
                              const LossConfig& loss_config);

/// Transductive semi-supervised training. Every step propagates over the full
/// graph; the CNN sees the training consumers in chunks of batch_size and the
/// chunk gradients are accumulated, so each optimizer step covers the whole
/// training set. The model ends at its best-validation state.
template <typename Scalar>
TrainReport train(ScnModel<Scalar>& model, const TrainingData<Scalar>& data,
                  const DataSplit& split, const TrainConfig& config, const LossConfig& loss_config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Purchase probabilities and predicted features for `rows`, inference mode.
template <typename Scalar>
struct Inference {
  Eigen::MatrixXd features;
  Eigen::MatrixXd purchase;
};

template <typename Scalar>
Inference<Scalar> infer(ScnModel<Scalar>& model, const ModelInputs<Scalar>& inputs,
                        std::span<const Index> rows, Index batch_size = 64);

}  // namespace scn

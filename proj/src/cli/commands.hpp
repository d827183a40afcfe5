#pragma once

#include "config.hpp"

#include <optional>

namespace scn::cli {

/// A required input is absent; maps to exit code 2.
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenOptions {
  std::string out;
};

struct TrainOptions {
  std::string checkpoint;  // empty: <dir>/model.ckpt
  std::string report;      // empty: <dir>/train_report.json
  bool quiet = false;
};

struct EvalOptions {
  std::string checkpoint;
  std::string report;  // empty: <dir>/eval_report.json
  bool table = false;
};

int run_gen(const RunConfig& config, const GenOptions& options);
int run_features(const RunConfig& config);
int run_groups(const RunConfig& config);
int run_train(const RunConfig& config, const TrainOptions& options);
int run_eval(const RunConfig& config, const EvalOptions& options);
int run_sweep(const RunConfig& config, const std::string& report);
int run_correlate(const RunConfig& config, const std::string& report);

}  // namespace scn::cli

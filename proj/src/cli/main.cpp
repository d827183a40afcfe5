#include "commands.hpp"

#include "scn/numerics/allocator.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

namespace {

using namespace scn;
using namespace scn::cli;

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string dir;
  std::string taxonomy;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_file, "INI file (default: $SCN_CONFIG)");
  cmd->add_option("--set", common.overrides, "Override one setting, section.key=value (repeatable)");
  cmd->add_option("--dir", common.dir, "Data directory (data.dir)");
  cmd->add_option("--taxonomy", common.taxonomy, "Transaction taxonomy CSV (data.taxonomy)");
}

/// Defaults, then the INI file, then dedicated flags, then --set.
RunConfig resolve(const Common& common, const std::vector<std::string>& flag_overrides) {
  RunConfig config;
  std::string file = common.config_file;
  if (file.empty()) {
    if (const char* env = std::getenv("SCN_CONFIG")) file = env;
  }
  if (!file.empty()) {
    if (!std::filesystem::exists(file)) throw ConfigError("config file " + file + " does not exist");
    load_ini(file, config);
  }
  if (!common.dir.empty()) config.data.dir = common.dir;
  if (!common.taxonomy.empty()) config.data.taxonomy = common.taxonomy;
  for (const auto& o : flag_overrides) apply_override(o, config);
  for (const auto& o : common.overrides) apply_override(o, config);
  config.validate();
  return config;
}

/// Records "key=value" for each flag the user actually passed.
template <typename T>
void forward(CLI::App* cmd, const char* flag, const T& value, const char* key, std::vector<std::string>& out) {
  if (cmd->count(flag) == 0) return;
  if constexpr (std::is_same_v<T, std::string>) {
    out.push_back(std::string(key) + "=" + value);
  } else {
    out.push_back(std::string(key) + "=" + std::to_string(value));
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Selective convolutional network for face-based purchase prediction"};
  app.require_subcommand(1);
  Common common;

  // Flag storage; forwarded as overrides only when given.
  long n = 0, companies = 0, image_size = 0, jobs = 0;
  double signal = 0;
  std::uint64_t seed = 0;
  std::string out, report;
  TrainOptions train_options;
  EvalOptions eval_options;
  double fraction = 0;
  std::string companies_list;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common(gen, common);
  gen->add_option("--n", n, "Consumers");
  gen->add_option("--companies", companies, "Target companies");
  gen->add_option("--signal", signal, "Signal strength in [0, 1]");
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--image-size", image_size, "Face image side in pixels");
  gen->add_option("--out", out, "Output directory (default: data.dir)");

  auto* features = app.add_subcommand("features", "Purchase features and labels from transactions");
  add_common(features, common);
  features->add_option("--companies", companies_list, "Comma-separated target companies");

  auto* groups = app.add_subcommand("groups", "Expense-group overlap, impact and AIO dispersion");
  add_common(groups, common);

  auto* train = app.add_subcommand("train", "Train the network");
  add_common(train, common);
  train->add_option("--checkpoint", train_options.checkpoint, "Checkpoint path (default: <dir>/model.ckpt)");
  train->add_option("--report", train_options.report, "Report path");
  train->add_option("--seed", seed, "Initialization and batching seed (train.seed)");
  train->add_option("--fraction", fraction, "Labeled fraction (train.labeled_fraction)");
  train->add_flag("--quiet", train_options.quiet, "No per-epoch progress");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint and the logistic baseline on the test split");
  add_common(eval, common);
  eval->add_option("--checkpoint", eval_options.checkpoint, "Checkpoint written by train");
  eval->add_option("--report", eval_options.report, "Report path");
  eval->add_flag("--table", eval_options.table, "Also run the labeled-fraction experiment");
  eval->add_option("--jobs", jobs, "Parallel training runs (experiment.jobs)");

  auto* sweep = app.add_subcommand("sweep", "Retrain across graph thresholds");
  add_common(sweep, common);
  sweep->add_option("--jobs", jobs, "Parallel training runs (experiment.jobs)");
  sweep->add_option("--report", report, "Report path (sweep.csv is written next to it)");

  auto* correlate = app.add_subcommand("correlate", "Descriptor-feature correlations and company profiles");
  add_common(correlate, common);
  correlate->add_option("--report", report, "Report path");

  auto* config_cmd = app.add_subcommand("config", "Print the resolved configuration as INI");
  add_common(config_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::vector<std::string> flags;
  forward(gen, "--n", n, "gen.n", flags);
  forward(gen, "--companies", companies, "gen.companies", flags);
  forward(gen, "--seed", seed, "gen.seed", flags);
  forward(gen, "--image-size", image_size, "gen.image_size", flags);
  if (gen->count("--signal")) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "gen.signal=%.17g", signal);
    flags.emplace_back(buf);
  }
  forward(features, "--companies", companies_list, "data.companies", flags);
  forward(train, "--seed", seed, "train.seed", flags);
  if (train->count("--fraction")) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "train.labeled_fraction=%.17g", fraction);
    flags.emplace_back(buf);
  }
  forward(eval, "--jobs", jobs, "experiment.jobs", flags);
  forward(sweep, "--jobs", jobs, "experiment.jobs", flags);

  const RunConfig config = resolve(common, flags);
  if (*gen) return run_gen(config, GenOptions{out});
  if (*features) return run_features(config);
  if (*groups) return run_groups(config);
  if (*train) return run_train(config, train_options);
  if (*eval) {
    if (eval_options.checkpoint.empty()) {
      std::fprintf(stderr, "scn eval: --checkpoint is required\n");
      return 2;
    }
    return run_eval(config, eval_options);
  }
  if (*sweep) return run_sweep(config, report);
  if (*correlate) return run_correlate(config, report);
  if (*config_cmd) {
    std::fputs(to_ini(config).c_str(), stdout);
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  scn::tune_allocator();
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "scn: %s\n", e.what());
    return 2;
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "scn: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "scn: error: %s\n", e.what());
    return 1;
  }
}

#include "commands.hpp"

#include "scn/eval/experiments.hpp"
#include "scn/eval/stats.hpp"
#include "scn/ingest/csv.hpp"
#include "scn/ingest/transactions.hpp"
#include "scn/numerics/atomic_file.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace scn::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

Json provenance(const std::string& command, const RunConfig& config) {
  return {{"command", command}, {"config", to_json(config)}};
}

std::string provenance_text(const std::string& command, const RunConfig& config) {
  return "scn " + command + "\nconfig " + to_json(config).dump();
}

/// Creates the directory and probes it, so an unwritable destination is a
/// usage error reported before any work starts.
void ensure_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("cannot create output directory " + dir.string() +
                      (ec ? ": " + ec.message() : std::string()));
  }
  const fs::path probe = dir / ".scn_write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw ConfigError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

fs::path require_input(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw MissingInput("missing input " + path.string() + " (produced by `scn " + producer + "`)");
  }
  return path;
}

void write_json(const fs::path& path, const Json& j) { write_text_atomically(path, j.dump(2) + "\n"); }

void write_csv(const fs::path& path, const std::string& provenance_lines,
               const std::vector<std::vector<std::string>>& rows) {
  write_atomically(path, [&](std::ostream& os) {
    csv::write_comments(os, provenance_lines);
    for (const auto& row : rows) csv::write_row(os, row);
  });
}

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 3) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Taxonomy load_taxonomy(const RunConfig& config) {
  return Taxonomy::load(require_input(taxonomy_path(config), "the source tree (data/taxonomy.csv)"));
}

std::vector<std::string> feature_names() {
  const auto& names = purchase_feature_names();
  return {names.begin(), names.end()};
}

/// Descriptors, features and labels aligned on the descriptor order.
ExperimentData load_experiment(const RunConfig& config) {
  const fs::path dir = config.data.dir;
  ExperimentData data;
  data.descriptors = load_descriptors(require_input(dir / "descriptors.bin", "gen"));
  const auto features = read_features_csv(require_input(dir / "features.csv", "features"));
  const auto labels = read_labels_csv(require_input(dir / "labels.csv", "features"));
  std::map<std::string_view, std::size_t> feature_row, label_row;
  for (std::size_t i = 0; i < features.ids.size(); ++i) feature_row[features.ids[i]] = i;
  for (std::size_t i = 0; i < labels.ids.size(); ++i) label_row[labels.ids[i]] = i;
  const Index n = static_cast<Index>(data.descriptors.sets.size());
  data.companies = labels.labels.companies;
  data.features.resize(n, kPurchaseFeatures);
  data.labels.resize(n, static_cast<Index>(data.companies.size()));
  for (Index i = 0; i < n; ++i) {
    const std::string& id = data.descriptors.sets[static_cast<std::size_t>(i)].consumer_id;
    auto f = feature_row.find(id);
    auto l = label_row.find(id);
    if (f == feature_row.end() || l == label_row.end()) {
      throw DataError("consumer " + id + " has descriptors but no row in features.csv/labels.csv");
    }
    data.ids.push_back(id);
    data.features.row(i) = features.features[f->second].as_vector().transpose();
    data.labels.row(i) = labels.labels.labels.row(static_cast<Index>(l->second));
  }
  return data;
}

/// The CNN input geometry always follows the data.
RunConfig fit_to_data(RunConfig config, const DescriptorLayout& layout) {
  config.model.cnn.image_size = layout.image_size;
  config.model.cnn.channels = layout.channels;
  if (config.model.use_images) {
    try {
      config.model.cnn.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string(e.what()) + "; adjust the [cnn] section or set model.use_images = false");
    }
  }
  return config;
}

template <typename Matrix>
Matrix gather_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

void print_metrics_row(const std::string& name, double p, double r, double f, double mae) {
  std::printf("%-22s %9s %9s %9s %9s\n", name.c_str(), fixed(p).c_str(), fixed(r).c_str(),
              fixed(f).c_str(), std::isnan(mae) ? "-" : fixed(mae).c_str());
}

}  // namespace

int run_gen(const RunConfig& config, const GenOptions& options) {
  const fs::path out = options.out.empty() ? fs::path(config.data.dir) : fs::path(options.out);
  const Taxonomy taxonomy = load_taxonomy(config);
  ensure_output_dir(out);
  const auto data = generate_synthetic(config.gen, taxonomy);
  const std::string prov = provenance_text("gen", config);
  save_transactions(out / "transactions.csv", data.transactions, prov);
  save_descriptors(out / "descriptors.bin", data.descriptors);
  Json sidecar = provenance("gen", config);
  sidecar["planted_columns"] = data.planted_columns;
  write_json(out / "descriptors.bin.json", sidecar);
  write_features_csv(out / "truth_features.csv", data.consumer_ids, data.features, prov);
  write_labels_csv(out / "truth_labels.csv", data.consumer_ids, ChoiceLabels{data.companies, data.labels}, prov);

  const auto counts = count_dataset(data.transactions);
  std::printf("wrote %s\n", out.string().c_str());
  std::printf("%-14s %10s\n", "consumers", std::to_string(data.consumer_ids.size()).c_str());
  std::printf("%-14s %10s\n", "transactions", std::to_string(counts.records).c_str());
  std::printf("%-14s %10s\n", "payees", std::to_string(counts.companies).c_str());
  std::printf("%-14s %10s\n", "image size", std::to_string(config.gen.image_size).c_str());
  std::printf("%-14s %10s\n", "signal", fixed(config.gen.signal_strength, 2).c_str());
  std::printf("\n%-14s %10s\n", "company", "buy rate");
  for (std::size_t j = 0; j < data.companies.size(); ++j) {
    std::printf("%-14s %10s\n", data.companies[j].c_str(),
                fixed(data.labels.col(Index(j)).cast<double>().mean()).c_str());
  }
  return 0;
}

int run_features(const RunConfig& config) {
  const fs::path dir = config.data.dir;
  const Taxonomy taxonomy = load_taxonomy(config);
  const auto log = load_transactions(require_input(dir / "transactions.csv", "gen"), taxonomy);
  std::vector<std::string> companies = config.data.companies;
  if (companies.empty()) {
    if (!fs::exists(dir / "truth_labels.csv")) {
      throw ConfigError("no target companies: set data.companies or provide truth_labels.csv");
    }
    companies = read_labels_csv(dir / "truth_labels.csv").labels.companies;
  }
  ensure_output_dir(dir);
  std::vector<ConsumerLedger> ledgers;
  if (fs::exists(dir / "descriptors.bin")) {
    std::vector<std::string> ids;
    for (const auto& set : load_descriptors(dir / "descriptors.bin").sets) ids.push_back(set.consumer_id);
    ledgers = build_ledgers(log.records, taxonomy, ids);
  } else {
    ledgers = build_ledgers(log.records, taxonomy);
  }
  std::vector<std::string> zero_expense;
  const auto features = purchase_features(ledgers, &zero_expense);
  const auto labels = choice_labels(ledgers, companies);
  std::vector<std::string> ids;
  for (const auto& l : ledgers) ids.push_back(l.consumer_id);
  const std::string prov = provenance_text("features", config);
  write_features_csv(dir / "features.csv", ids, features, prov);
  write_labels_csv(dir / "labels.csv", ids, labels, prov);
  std::printf("features for %zu consumers, %zu companies\n", ids.size(), companies.size());
  if (!zero_expense.empty()) {
    std::printf("%zu consumers without expenses got zero stratum features\n", zero_expense.size());
  }
  return 0;
}

int run_groups(const RunConfig& config) {
  const fs::path dir = config.data.dir;
  const Taxonomy taxonomy = load_taxonomy(config);
  const auto log = load_transactions(require_input(dir / "transactions.csv", "gen"), taxonomy);
  ensure_output_dir(dir);
  const auto ledgers = build_ledgers(log.records, taxonomy);
  const GroupSplit split =
      config.experiment.balanced_groups ? GroupSplit::Balanced : GroupSplit::CeilThenRemainder;
  const auto partition = partition_groups(ledgers, split);
  const auto life = life_features(ledgers);
  const std::size_t g = partition.groups.size();
  std::vector<CompanySet> sets;
  std::vector<std::vector<std::array<double, kLifeAspects>>> group_life(g);
  for (std::size_t a = 0; a < g; ++a) {
    sets.push_back(group_companies(partition.groups[a], ledgers));
    for (std::size_t i : partition.groups[a]) group_life[a].push_back(life[i]);
  }
  const std::string prov = provenance_text("groups", config);
  std::vector<std::vector<std::string>> pairs = {{"group_a", "group_b", "overlap", "impact", "aio_sd"}};
  std::vector<std::vector<std::string>> summary = {
      {"group", "consumers", "companies", "mean_total_expense", "mean_impact"}};
  Json j = provenance("groups", config);
  Json rows = Json::array();
  for (std::size_t a = 0; a < g; ++a) {
    double impact_sum = 0, expense = 0;
    for (std::size_t b = 0; b < g; ++b) {
      if (a == b) continue;
      const double overlap = overlap_rate(sets[a], sets[b]);
      const double impact = impact_score(a, b, sets);
      const double sd = aio_sd(group_life[a], group_life[b]);
      impact_sum += impact;
      pairs.push_back({std::to_string(a + 1), std::to_string(b + 1), num(overlap), num(impact), num(sd)});
    }
    for (std::size_t i : partition.groups[a]) expense += ledgers[i].total_expense;
    const double mean_impact = g > 1 ? impact_sum / double(g - 1) : 0.0;
    const double mean_expense = partition.groups[a].empty() ? 0.0 : expense / double(partition.groups[a].size());
    summary.push_back({std::to_string(a + 1), std::to_string(partition.groups[a].size()),
                       std::to_string(sets[a].size()), num(mean_expense), num(mean_impact)});
    rows.push_back({{"group", a + 1},
                    {"consumers", partition.groups[a].size()},
                    {"companies", sets[a].size()},
                    {"mean_total_expense", mean_expense},
                    {"mean_impact", mean_impact}});
  }
  j["groups"] = std::move(rows);
  write_csv(dir / "groups_pairs.csv", prov, pairs);
  write_csv(dir / "groups_summary.csv", prov, summary);
  write_json(dir / "groups_report.json", j);
  std::printf("%-6s %10s %10s %14s %12s\n", "group", "consumers", "companies", "mean expense", "mean impact");
  for (std::size_t a = 1; a < summary.size(); ++a) {
    std::printf("%-6s %10s %10s %14s %12s\n", summary[a][0].c_str(), summary[a][1].c_str(),
                summary[a][2].c_str(), fixed(std::stod(summary[a][3]), 2).c_str(),
                fixed(std::stod(summary[a][4]), 4).c_str());
  }
  return 0;
}

int run_train(const RunConfig& base, const TrainOptions& options) {
  const ExperimentData data = load_experiment(base);
  const RunConfig config = fit_to_data(base, data.descriptors.layout);
  const fs::path dir = config.data.dir;
  const fs::path checkpoint = options.checkpoint.empty() ? dir / "model.ckpt" : fs::path(options.checkpoint);
  const fs::path report_path = options.report.empty() ? dir / "train_report.json" : fs::path(options.report);
  ensure_output_dir(checkpoint.parent_path().empty() ? fs::path(".") : checkpoint.parent_path());
  ensure_output_dir(report_path.parent_path().empty() ? fs::path(".") : report_path.parent_path());

  TrainingData<float> td;
  td.inputs = prepare_inputs<float>(data.descriptors, config.model);
  td.features = data.features.cast<float>();
  td.labels = data.labels;
  const DataSplit split = make_split(data.labels, config.train);
  Rng rng(config.train.seed);
  auto model = ScnModel<float>::init(config.model, td.inputs, data.labels.cols(), rng);
  const auto report = train(model, td, split, config.train, config.loss, [&](const EpochRecord& e) {
    if (!options.quiet && (e.epoch == 1 || e.epoch % 10 == 0)) {
      std::fprintf(stderr, "epoch %4d  train %.4f  val %.4f (mae %.4f)\n", e.epoch, e.train_loss,
                   e.val_loss, e.val_mae);
    }
  });
  save_checkpoint(checkpoint, model.state());
  Json sidecar = provenance("train", config);
  sidecar["companies"] = data.companies;
  sidecar["split"] = to_json(split);
  write_json(checkpoint.string() + ".json", sidecar);
  Json j = provenance("train", config);
  j["checkpoint"] = checkpoint.filename().string();
  j["report"] = to_json(report);
  write_json(report_path, j);
  std::printf("trained %d epochs, best epoch %d, validation loss %.4f, mae %.4f\n", report.epochs_run,
              report.best_epoch, report.best_val_loss,
              report.history[static_cast<std::size_t>(report.best_epoch - 1)].val_mae);
  std::printf("checkpoint %s\n", checkpoint.string().c_str());
  return 0;
}

int run_eval(const RunConfig& base, const EvalOptions& options) {
  if (options.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  const fs::path checkpoint = require_input(options.checkpoint, "train");
  const fs::path sidecar_path = require_input(checkpoint.string() + ".json", "train");
  Json sidecar;
  try {
    std::ifstream in(sidecar_path);
    sidecar = Json::parse(in);
  } catch (const std::exception& e) {
    throw DataError("cannot read " + sidecar_path.string() + ": " + e.what());
  }
  // The architecture and split come from training; experiment settings and
  // paths from this invocation.
  RunConfig resolved = base;
  for (auto& field : fields_of(resolved)) {
    const auto dot = field.key.find('.');
    const std::string section = field.key.substr(0, dot);
    if (section != "model" && section != "cnn" && section != "train" && section != "loss") continue;
    const auto& value = sidecar.at("config").at(section).at(field.key.substr(dot + 1));
    if (value.is_array()) continue;
    field.set(value.is_string() ? value.get<std::string>() : value.dump());
  }
  const ExperimentData data = load_experiment(resolved);
  const RunConfig config = fit_to_data(resolved, data.descriptors.layout);
  const fs::path dir = config.data.dir;
  const fs::path report_path = options.report.empty() ? dir / "eval_report.json" : fs::path(options.report);
  ensure_output_dir(report_path.parent_path().empty() ? fs::path(".") : report_path.parent_path());
  if (sidecar.at("companies").get<std::vector<std::string>>() != data.companies) {
    throw DataError("checkpoint was trained on different companies than labels.csv lists");
  }
  const DataSplit split = split_from_json(sidecar.at("split"));

  TrainingData<float> td;
  td.inputs = prepare_inputs<float>(data.descriptors, config.model);
  Rng rng(config.train.seed);
  auto model = ScnModel<float>::init(config.model, td.inputs, data.labels.cols(), rng);
  model.load_state(load_checkpoint<float>(checkpoint));
  const auto inference = infer(model, td.inputs, split.test, config.train.batch_size);
  MetricReport scn = macro_metrics(decide(inference.purchase, config.model.single_softmax),
                                   gather_rows(data.labels, split.test), data.companies);
  scn.mae = feature_mae(inference.features, gather_rows(data.features, split.test));
  scn.seed = config.train.seed;
  const auto baseline =
      logistic_baseline(vector_columns(data.descriptors), data.labels, data.companies, split);

  Json j = provenance("eval", config);
  j["checkpoint"] = checkpoint.filename().string();
  j["scn"] = to_json(scn);
  j["linear_logistic"] = to_json(baseline);
  std::printf("%-22s %9s %9s %9s %9s\n", "model", "macro-P", "macro-R", "macro-F1", "MAE");
  print_metrics_row("SCN", scn.macro_precision, scn.macro_recall, scn.macro_f1, scn.mae);
  print_metrics_row("Linear logistic", baseline.metrics.macro_precision, baseline.metrics.macro_recall,
                    baseline.metrics.macro_f1, std::nan(""));
  if (options.table) {
    ExperimentConfig ec{config.model, config.train, config.loss};
    const auto table = fraction_experiment(data, ec, config.experiment.fractions, config.experiment.seeds,
                                           std::size_t(config.experiment.jobs));
    j["fractions"] = to_json(table);
    std::printf("\n%-10s %14s %14s %14s %10s %14s\n", "fraction", "macro-P", "macro-R", "macro-F1",
                "model-F1", "MAE");
    for (const auto& row : table.rows) {
      const auto& s = row.summary;
      std::printf("%-10s %7s±%-6s %7s±%-6s %7s±%-6s %10s %7s±%-6s\n", fixed(row.fraction, 2).c_str(),
                  fixed(s.macro_precision).c_str(), fixed(s.sd_macro_precision).c_str(),
                  fixed(s.macro_recall).c_str(), fixed(s.sd_macro_recall).c_str(),
                  fixed(s.macro_f1).c_str(), fixed(s.sd_macro_f1).c_str(), fixed(s.pooled_macro_f1).c_str(),
                  fixed(s.mae).c_str(), fixed(s.sd_mae).c_str());
    }
  }
  write_json(report_path, j);
  return 0;
}

int run_sweep(const RunConfig& base, const std::string& report) {
  const ExperimentData data = load_experiment(base);
  const RunConfig config = fit_to_data(base, data.descriptors.layout);
  const fs::path dir = config.data.dir;
  const fs::path report_path = report.empty() ? dir / "sweep_report.json" : fs::path(report);
  ensure_output_dir(report_path.parent_path().empty() ? fs::path(".") : report_path.parent_path());
  const auto thresholds =
      config.experiment.thresholds.empty() ? default_thresholds() : config.experiment.thresholds;
  ExperimentConfig ec{config.model, config.train, config.loss};
  const auto sweep = threshold_sweep(data, ec, thresholds, std::size_t(config.experiment.jobs));
  Json j = provenance("sweep", config);
  j["sweep"] = to_json(sweep);
  write_json(report_path, j);
  std::ostringstream os;
  csv::write_comments(os, provenance_text("sweep", config));
  os << sweep_csv(sweep);
  const fs::path csv_path = report_path.parent_path() / "sweep.csv";
  write_text_atomically(csv_path, os.str());
  std::printf("%-10s %9s %9s %8s %14s %12s\n", "threshold", "macro-F1", "MAE", "epochs", "initial edges",
              "final edges");
  for (const auto& p : sweep.points) {
    std::printf("%-10s %9s %9s %8d %14ld %12ld\n", fixed(p.threshold, 2).c_str(), fixed(p.macro_f1).c_str(),
                fixed(p.mae).c_str(), p.epochs, static_cast<long>(p.initial_edges),
                static_cast<long>(p.final_edges));
  }
  return 0;
}

int run_correlate(const RunConfig& config, const std::string& report) {
  const ExperimentData data = load_experiment(config);
  const fs::path dir = config.data.dir;
  const fs::path report_path = report.empty() ? dir / "correlate_report.json" : fs::path(report);
  const fs::path out_dir = report_path.parent_path().empty() ? fs::path(".") : report_path.parent_path();
  ensure_output_dir(out_dir);
  const auto names = vector_column_names(data.descriptors.layout);
  const auto fnames = feature_names();
  const auto tables = correlation_matrix(vector_columns(data.descriptors), names, data.features, fnames,
                                         data.labels, data.companies, std::size_t(config.experiment.top_n));
  const ChoiceLabels labels{data.companies, data.labels};
  Json profiles = Json::array();
  std::vector<std::vector<std::string>> profile_rows;
  {
    std::vector<std::string> header = {"company", "consumers", "inverse_frequency"};
    header.insert(header.end(), fnames.begin(), fnames.end());
    profile_rows.push_back(header);
  }
  for (std::size_t j = 0; j < data.companies.size(); ++j) {
    const auto p = weighted_company_features(j, data.features, labels);
    std::vector<std::string> row = {p.company, std::to_string(p.consumers), num(p.inverse_frequency)};
    Json normalized = Json::array();
    for (std::size_t f = 0; f < kPurchaseFeatures; ++f) {
      row.push_back(num(p.normalized[f]));
      normalized.push_back(std::isnan(p.normalized[f]) ? Json(nullptr) : Json(p.normalized[f]));
    }
    profile_rows.push_back(std::move(row));
    profiles.push_back({{"company", p.company},
                        {"consumers", p.consumers},
                        {"inverse_frequency", p.inverse_frequency},
                        {"normalized", std::move(normalized)}});
  }
  Json j = provenance("correlate", config);
  j["correlation"] = to_json(tables);
  j["company_profiles"] = std::move(profiles);
  write_json(report_path, j);

  const std::string prov = provenance_text("correlate", config);
  std::vector<std::vector<std::string>> top = {{"rank", "descriptor", "feature", "r", "p"}};
  for (std::size_t i = 0; i < tables.top.size(); ++i) {
    const auto& c = tables.top[i];
    top.push_back({std::to_string(i + 1), c.row, c.column, num(c.r), num(c.p)});
  }
  write_csv(out_dir / "pvalues_top.csv", prov, top);
  std::vector<std::vector<std::string>> grid = {{"descriptor"}};
  grid[0].insert(grid[0].end(), fnames.begin(), fnames.end());
  for (Index d = 0; d < tables.descriptor_p.rows(); ++d) {
    std::vector<std::string> row = {names[static_cast<std::size_t>(d)]};
    for (Index f = 0; f < tables.descriptor_p.cols(); ++f) row.push_back(num(tables.descriptor_p(d, f)));
    grid.push_back(std::move(row));
  }
  write_csv(out_dir / "descriptor_feature_p.csv", prov, grid);
  std::vector<std::vector<std::string>> label_rows = {{"feature"}};
  label_rows[0].insert(label_rows[0].end(), data.companies.begin(), data.companies.end());
  for (std::size_t f = 0; f < fnames.size(); ++f) {
    std::vector<std::string> row = {fnames[f]};
    for (Index c = 0; c < tables.label_p.cols(); ++c) row.push_back(num(tables.label_p(Index(f), c)));
    label_rows.push_back(std::move(row));
  }
  write_csv(out_dir / "feature_label_p.csv", prov, label_rows);
  write_csv(out_dir / "company_profiles.csv", prov, profile_rows);

  std::printf("%-5s %-12s %-16s %9s %12s\n", "rank", "descriptor", "feature", "r", "p");
  for (std::size_t i = 0; i < tables.top.size(); ++i) {
    const auto& c = tables.top[i];
    std::printf("%-5zu %-12s %-16s %9s %12.3e\n", i + 1, c.row.c_str(), c.column.c_str(), fixed(c.r).c_str(), c.p);
  }
  for (const auto& note : tables.notes) std::printf("note: %s\n", note.c_str());
  std::printf("share of descriptor-feature cells with p < 0.05: %s\n",
              fixed(significant_fraction(tables.descriptor_p), 4).c_str());
  return 0;
}

}  // namespace scn::cli

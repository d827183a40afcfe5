#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <sstream>

namespace scn::cli {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string text = trim(raw);
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ConfigError("config " + key + ": cannot parse '" + raw + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string t = trim(raw);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config " + key + ": expected true or false, got '" + raw + "'");
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  for (const auto& item : split_list(raw)) out.push_back(parse_number<T>(key, item));
  return out;
}

template <typename T>
Field number(std::string key, T& target) {
  return {key, [key, &target](const std::string& v) { target = parse_number<T>(key, v); },
          [&target] { return nlohmann::ordered_json(target); }};
}

Field flag(std::string key, bool& target) {
  return {key, [key, &target](const std::string& v) { target = parse_bool(key, v); },
          [&target] { return nlohmann::ordered_json(target); }};
}

Field text(std::string key, std::string& target) {
  return {key, [&target](const std::string& v) { target = trim(v); },
          [&target] { return nlohmann::ordered_json(target); }};
}

template <typename T>
Field list(std::string key, std::vector<T>& target) {
  return {key,
          [key, &target](const std::string& v) {
            if constexpr (std::is_same_v<T, std::string>) {
              target = split_list(v);
            } else {
              target = parse_list<T>(key, v);
            }
          },
          [&target] { return nlohmann::ordered_json(target); }};
}

std::string ini_value(const nlohmann::ordered_json& v) {
  if (v.is_array()) {
    std::string out;
    for (const auto& item : v) {
      if (!out.empty()) out += ",";
      out += ini_value(item);
    }
    return out;
  }
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
  }
  return v.dump();
}

}  // namespace

std::vector<Field> fields_of(RunConfig& c) {
  return {
      text("data.dir", c.data.dir),
      text("data.taxonomy", c.data.taxonomy),
      list("data.companies", c.data.companies),
      number("gen.n", c.gen.n_consumers),
      number("gen.companies", c.gen.n_companies),
      number("gen.signal", c.gen.signal_strength),
      number("gen.seed", c.gen.seed),
      number("gen.image_size", c.gen.image_size),
      number("gen.d_pdm", c.gen.d_pdm),
      number("gen.n_lm", c.gen.n_lm),
      number("gen.channels", c.gen.channels),
      number("model.d_hidden", c.model.d_hidden),
      number("model.d_out", c.model.d_out),
      number("model.leaky_slope", c.model.leaky_slope),
      number("model.select_threshold", c.model.select_threshold),
      flag("model.graph_on_normalized", c.model.graph_on_normalized),
      flag("model.use_images", c.model.use_images),
      flag("model.single_softmax", c.model.single_softmax),
      number("cnn.image_size", c.model.cnn.image_size),
      number("cnn.channels", c.model.cnn.channels),
      number("cnn.stem_channels", c.model.cnn.stem_channels),
      number("cnn.stage1_branch", c.model.cnn.stage1_branch),
      number("cnn.stage2_branch", c.model.cnn.stage2_branch),
      flag("cnn.conv_relu", c.model.cnn.conv_relu),
      number("train.labeled_fraction", c.train.labeled_fraction),
      number("train.batch_size", c.train.batch_size),
      number("train.patience", c.train.patience),
      number("train.max_epochs", c.train.max_epochs),
      number("train.learning_rate", c.train.learning_rate),
      number("train.weight_decay", c.train.weight_decay),
      number("train.seed", c.train.seed),
      number("train.validation_fraction", c.train.validation_fraction),
      number("train.test_fraction", c.train.test_fraction),
      number("train.split_seed", c.train.split_seed),
      number("loss.alpha", c.loss.alpha),
      number("loss.beta", c.loss.beta),
      list("experiment.fractions", c.experiment.fractions),
      list("experiment.seeds", c.experiment.seeds),
      list("experiment.thresholds", c.experiment.thresholds),
      number("experiment.jobs", c.experiment.jobs),
      number("experiment.top_n", c.experiment.top_n),
      flag("experiment.balanced_groups", c.experiment.balanced_groups),
  };
}

void RunConfig::validate() const {
  try {
    gen.validate();
    model.validate();
    train.validate();
    loss.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  for (double f : experiment.fractions) {
    if (!(f > 0 && f <= 1)) throw ConfigError("experiment.fractions: values must lie in (0, 1]");
  }
  for (double t : experiment.thresholds) {
    if (!(t > 0 && t < 1)) throw ConfigError("experiment.thresholds: values must lie in (0, 1)");
  }
  if (experiment.fractions.empty()) throw ConfigError("experiment.fractions: empty");
  if (experiment.seeds.empty()) throw ConfigError("experiment.seeds: empty");
  if (experiment.jobs < 1) throw ConfigError("experiment.jobs: must be at least 1");
  if (experiment.top_n < 1) throw ConfigError("experiment.top_n: must be at least 1");
}

void load_ini(const std::filesystem::path& path, RunConfig& config) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  auto fields = fields_of(config);
  for (const auto& [section, entries] : tree) {
    if (entries.empty()) {
      throw ConfigError("config file " + path.string() + ": key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : entries) {
      const std::string full = section + "." + key;
      auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.key == full; });
      if (it == fields.end()) throw ConfigError("config file " + path.string() + ": unknown key " + full);
      it->set(value.get_value<std::string>());
    }
  }
}

void apply_override(const std::string& assignment, RunConfig& config) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  auto fields = fields_of(config);
  auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.key == key; });
  if (it == fields.end()) throw ConfigError("--set: unknown key " + key);
  it->set(assignment.substr(eq + 1));
}

nlohmann::ordered_json to_json(const RunConfig& config) {
  RunConfig copy = config;
  nlohmann::ordered_json out;
  for (const auto& f : fields_of(copy)) {
    const auto dot = f.key.find('.');
    out[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get();
  }
  return out;
}

std::string to_ini(const RunConfig& config) {
  std::string out;
  const auto j = to_json(config);
  for (const auto& [section, entries] : j.items()) {
    out += "[" + section + "]\n";
    for (const auto& [key, value] : entries.items()) out += key + " = " + ini_value(value) + "\n";
  }
  return out;
}

std::filesystem::path taxonomy_path(const RunConfig& config) {
  if (!config.data.taxonomy.empty()) return config.data.taxonomy;
  return std::filesystem::path(SCN_SOURCE_DIR) / "data" / "taxonomy.csv";
}

}  // namespace scn::cli

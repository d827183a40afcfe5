#include "scn/behavior/behavior.hpp"

#include "scn/ingest/csv.hpp"
#include "scn/numerics/atomic_file.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace scn {

namespace {

void add_transaction(ConsumerLedger& ledger, const TransactionRecord& r, const Taxonomy& taxonomy) {
  const auto* entry = taxonomy.find(r.category);
  if (!entry) throw DataError("unmapped category '" + r.category + "'");
  ledger.frequency[static_cast<std::size_t>(entry->aspect)] += 1;
  ledger.expense[static_cast<std::size_t>(entry->stratum)] += r.expense;
  ledger.total_expense += r.expense;
  ledger.companies.insert(r.payee);
  ledger.transactions += 1;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw DataError(where + ": malformed number '" + text + "'");
  }
  return v;
}

std::size_t intersection_size(const CompanySet& a, const CompanySet& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

std::size_t union_size(const CompanySet& a, const CompanySet& b) {
  return a.size() + b.size() - intersection_size(a, b);
}

void normalize_block(CompanyProfile& p, std::size_t begin, std::size_t end) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    if (!p.defined[i]) continue;
    lo = std::min(lo, p.weighted[i]);
    hi = std::max(hi, p.weighted[i]);
  }
  for (std::size_t i = begin; i < end; ++i) {
    if (!p.defined[i]) {
      p.normalized[i] = std::numeric_limits<double>::quiet_NaN();
    } else {
      p.normalized[i] = hi > lo ? (p.weighted[i] - lo) / (hi - lo) : 0.0;
    }
  }
}

}  // namespace

std::vector<ConsumerLedger> build_ledgers(const std::vector<TransactionRecord>& transactions,
                                          const Taxonomy& taxonomy) {
  std::vector<ConsumerLedger> ledgers;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : transactions) {
    auto [it, inserted] = index.emplace(r.consumer_id, ledgers.size());
    if (inserted) {
      ledgers.emplace_back();
      ledgers.back().consumer_id = r.consumer_id;
    }
    add_transaction(ledgers[it->second], r, taxonomy);
  }
  return ledgers;
}

std::vector<ConsumerLedger> build_ledgers(const std::vector<TransactionRecord>& transactions,
                                          const Taxonomy& taxonomy,
                                          std::span<const std::string> consumers) {
  std::vector<ConsumerLedger> ledgers(consumers.size());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < consumers.size(); ++i) {
    ledgers[i].consumer_id = consumers[i];
    if (!index.emplace(consumers[i], i).second) {
      throw DataError("duplicate consumer id '" + consumers[i] + "'");
    }
  }
  for (const auto& r : transactions) {
    auto it = index.find(r.consumer_id);
    if (it == index.end()) {
      throw DataError("transaction for unknown consumer '" + r.consumer_id + "'");
    }
    add_transaction(ledgers[it->second], r, taxonomy);
  }
  return ledgers;
}

std::vector<std::array<double, kLifeAspects>> life_features(
    std::span<const ConsumerLedger> ledgers) {
  std::array<long, kLifeAspects> max_freq{};
  for (const auto& l : ledgers) {
    for (std::size_t a = 0; a < kLifeAspects; ++a) max_freq[a] = std::max(max_freq[a], l.frequency[a]);
  }
  std::vector<std::array<double, kLifeAspects>> out(ledgers.size());
  for (std::size_t i = 0; i < ledgers.size(); ++i) {
    for (std::size_t a = 0; a < kLifeAspects; ++a) {
      out[i][a] = max_freq[a] == 0 ? 0.0
                                   : 5.0 * static_cast<double>(ledgers[i].frequency[a]) /
                                         static_cast<double>(max_freq[a]);
    }
  }
  return out;
}

std::vector<std::array<double, kStrata>> stratum_features(std::span<const ConsumerLedger> ledgers,
                                                          std::vector<std::string>* zero_expense) {
  std::vector<std::array<double, kStrata>> out(ledgers.size());
  for (std::size_t i = 0; i < ledgers.size(); ++i) {
    const auto& e = ledgers[i].expense;
    const double total = e[0] + e[1] + e[2];
    if (total > 0.0) {
      for (std::size_t s = 0; s < kStrata; ++s) out[i][s] = 5.0 * e[s] / total;
    } else if (zero_expense) {
      zero_expense->push_back(ledgers[i].consumer_id);
    }
  }
  return out;
}

std::vector<PurchaseFeatureVector> purchase_features(std::span<const ConsumerLedger> ledgers,
                                                     std::vector<std::string>* zero_expense) {
  auto life = life_features(ledgers);
  auto stratum = stratum_features(ledgers, zero_expense);
  std::vector<PurchaseFeatureVector> out(ledgers.size());
  for (std::size_t i = 0; i < ledgers.size(); ++i) {
    out[i].stratum = stratum[i];
    out[i].life = life[i];
  }
  return out;
}

Eigen::MatrixXd feature_matrix(std::span<const PurchaseFeatureVector> features) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(features.size()), kPurchaseFeatures);
  for (std::size_t i = 0; i < features.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = features[i].as_vector().transpose();
  }
  return m;
}

ChoiceLabels choice_labels(std::span<const ConsumerLedger> ledgers,
                           const std::vector<std::string>& companies) {
  if (companies.empty()) throw std::invalid_argument("choice_labels: no companies given");
  ChoiceLabels out;
  out.companies = companies;
  out.labels = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(ledgers.size()),
                                     static_cast<Eigen::Index>(companies.size()));
  for (std::size_t j = 0; j < companies.size(); ++j) {
    bool seen = false;
    for (std::size_t i = 0; i < ledgers.size(); ++i) {
      if (ledgers[i].companies.count(companies[j])) {
        out.labels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1;
        seen = true;
      }
    }
    if (!seen) throw DataError("unknown company id '" + companies[j] + "'");
  }
  return out;
}

std::vector<std::size_t> group_sizes(std::size_t n, GroupSplit split) {
  if (n < kExpenseGroups) {
    throw std::invalid_argument("grouping needs at least 10 consumers, got " + std::to_string(n));
  }
  std::vector<std::size_t> sizes(kExpenseGroups);
  if (split == GroupSplit::Balanced) {
    for (std::size_t g = 0; g < kExpenseGroups; ++g) {
      sizes[g] = n / kExpenseGroups + (g < n % kExpenseGroups ? 1 : 0);
    }
    return sizes;
  }
  const std::size_t head = (n + kExpenseGroups - 1) / kExpenseGroups;
  if (head * (kExpenseGroups - 1) >= n) {
    throw std::invalid_argument("ceil-then-remainder split leaves the last group empty for n = " +
                                std::to_string(n));
  }
  std::fill(sizes.begin(), sizes.end() - 1, head);
  sizes.back() = n - head * (kExpenseGroups - 1);
  return sizes;
}

GroupPartition partition_groups(std::span<const ConsumerLedger> ledgers, GroupSplit split) {
  const auto sizes = group_sizes(ledgers.size(), split);
  std::vector<std::size_t> order(ledgers.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (ledgers[a].total_expense != ledgers[b].total_expense) {
      return ledgers[a].total_expense < ledgers[b].total_expense;
    }
    return ledgers[a].consumer_id < ledgers[b].consumer_id;
  });
  GroupPartition p;
  std::size_t pos = 0;
  for (std::size_t size : sizes) {
    p.groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                          order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return p;
}

CompanySet group_companies(const std::vector<std::size_t>& members,
                           std::span<const ConsumerLedger> ledgers) {
  CompanySet out;
  for (std::size_t i : members) out.insert(ledgers[i].companies.begin(), ledgers[i].companies.end());
  return out;
}

double overlap_rate(const CompanySet& a, const CompanySet& b) {
  const std::size_t u = union_size(a, b);
  if (u == 0) throw std::invalid_argument("overlap_rate: both company sets are empty");
  return static_cast<double>(intersection_size(a, b)) / static_cast<double>(u);
}

double impact_score(std::size_t a, std::size_t b, std::span<const CompanySet> groups) {
  if (groups.size() < 3) throw std::invalid_argument("impact_score needs at least 3 groups");
  if (a >= groups.size() || b >= groups.size()) {
    throw std::out_of_range("impact_score: group index out of range");
  }
  const CompanySet& A = groups[a];
  const CompanySet& B = groups[b];
  double score = 0.0;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    if (j == a || j == b) continue;
    const CompanySet& J = groups[j];
    const std::size_t u = union_size(B, J);
    if (u == 0) throw std::invalid_argument("impact_score: empty union of groups b and j");
    std::size_t triple = 0, pair = 0;
    for (const auto& c : B) {
      if (!J.count(c)) continue;
      ++pair;
      triple += A.count(c);
    }
    score += std::abs(static_cast<double>(triple) / static_cast<double>(u) -
                      static_cast<double>(pair) / static_cast<double>(u));
  }
  return score;
}

double aio_sd(std::span<const std::array<double, kLifeAspects>> group_a,
              std::span<const std::array<double, kLifeAspects>> group_b) {
  if (group_a.empty() || group_b.empty()) throw std::invalid_argument("aio_sd: empty group");
  std::array<double, kLifeAspects> diff{};
  for (std::size_t k = 0; k < kLifeAspects; ++k) {
    double ma = 0.0, mb = 0.0;
    for (const auto& v : group_a) ma += v[k];
    for (const auto& v : group_b) mb += v[k];
    diff[k] = ma / static_cast<double>(group_a.size()) - mb / static_cast<double>(group_b.size());
  }
  const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / kLifeAspects;
  double ss = 0.0;
  for (double d : diff) ss += (d - mean) * (d - mean);
  return -std::sqrt(ss / kLifeAspects);
}

CompanyProfile weighted_company_features(std::size_t j, const Eigen::MatrixXd& features,
                                         const ChoiceLabels& labels) {
  const auto n = features.rows();
  if (features.cols() != static_cast<Eigen::Index>(kPurchaseFeatures) || labels.labels.rows() != n) {
    throw std::invalid_argument("weighted_company_features: features must be n x 20 matching labels");
  }
  if (j >= labels.companies.size()) throw std::out_of_range("company index out of range");
  const auto col = static_cast<Eigen::Index>(j);
  std::vector<Eigen::Index> members;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels.labels(i, col) == 1) members.push_back(i);
  }
  if (members.empty()) {
    throw std::invalid_argument("company '" + labels.companies[j] + "' has no consumers");
  }
  CompanyProfile p;
  p.company = labels.companies[j];
  p.consumers = members.size();
  p.inverse_frequency = std::log(static_cast<double>(n) / static_cast<double>(members.size()));
  const double m = static_cast<double>(members.size());
  for (std::size_t f = 0; f < kPurchaseFeatures; ++f) {
    double sum = 0.0;
    for (auto i : members) sum += features(i, static_cast<Eigen::Index>(f));
    double sd = 0.0;
    if (members.size() > 1) {
      const double mean = sum / m;
      double ss = 0.0;
      for (auto i : members) {
        const double d = features(i, static_cast<Eigen::Index>(f)) - mean;
        ss += d * d;
      }
      sd = std::sqrt(ss / (m - 1.0));
    }
    p.defined[f] = sd > 0.0;
    p.weighted[f] = p.defined[f] ? p.inverse_frequency * sum / sd
                                 : std::numeric_limits<double>::quiet_NaN();
  }
  normalize_block(p, 0, kStrata);
  normalize_block(p, kStrata, kPurchaseFeatures);
  return p;
}

void write_features_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                        std::span<const PurchaseFeatureVector> features,
                        std::string_view provenance) {
  if (ids.size() != features.size()) throw std::invalid_argument("ids and features differ in length");
  write_atomically(path, [&](std::ostream& os) {
    csv::write_comments(os, provenance);
    csv::Row header = {"consumer_id"};
    for (const auto& name : purchase_feature_names()) header.push_back(name);
    csv::write_row(os, header);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      csv::Row row = {ids[i]};
      for (std::size_t f = 0; f < kPurchaseFeatures; ++f) row.push_back(format_double(features[i][f]));
      csv::write_row(os, row);
    }
  }, true);
}

void write_labels_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                      const ChoiceLabels& labels, std::string_view provenance) {
  if (static_cast<Eigen::Index>(ids.size()) != labels.labels.rows()) {
    throw std::invalid_argument("ids and labels differ in length");
  }
  write_atomically(path, [&](std::ostream& os) {
    csv::write_comments(os, provenance);
    csv::Row header = {"consumer_id"};
    header.insert(header.end(), labels.companies.begin(), labels.companies.end());
    csv::write_row(os, header);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      csv::Row row = {ids[i]};
      for (Eigen::Index j = 0; j < labels.labels.cols(); ++j) {
        row.push_back(labels.labels(static_cast<Eigen::Index>(i), j) ? "1" : "0");
      }
      csv::write_row(os, row);
    }
  }, true);
}

FeatureTable read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open features file " + path.string());
  const std::size_t skipped = csv::skip_comments(in);
  csv::Reader reader(in, skipped + 1);
  auto header = reader.next();
  csv::Row expected = {"consumer_id"};
  for (const auto& name : purchase_feature_names()) expected.push_back(name);
  if (!header || *header != expected) {
    throw DataError(path.string() + ": unexpected features header");
  }
  FeatureTable table;
  while (auto row = reader.next()) {
    const std::string where = path.string() + ":" + std::to_string(reader.line());
    if (row->size() != expected.size()) throw DataError(where + ": expected 21 fields");
    PurchaseFeatureVector f;
    for (std::size_t k = 0; k < kPurchaseFeatures; ++k) {
      const double v = parse_double((*row)[k + 1], where);
      if (k < kStrata) f.stratum[k] = v; else f.life[k - kStrata] = v;
    }
    table.ids.push_back((*row)[0]);
    table.features.push_back(f);
  }
  return table;
}

LabelTable read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open labels file " + path.string());
  const std::size_t skipped = csv::skip_comments(in);
  csv::Reader reader(in, skipped + 1);
  auto header = reader.next();
  if (!header || header->size() < 2 || (*header)[0] != "consumer_id") {
    throw DataError(path.string() + ": labels header must be consumer_id,<company>...");
  }
  LabelTable table;
  table.labels.companies.assign(header->begin() + 1, header->end());
  std::vector<std::vector<int>> rows;
  while (auto row = reader.next()) {
    const std::string where = path.string() + ":" + std::to_string(reader.line());
    if (row->size() != header->size()) throw DataError(where + ": wrong field count");
    std::vector<int> values;
    for (std::size_t j = 1; j < row->size(); ++j) {
      if ((*row)[j] != "0" && (*row)[j] != "1") throw DataError(where + ": label must be 0 or 1");
      values.push_back((*row)[j] == "1");
    }
    table.ids.push_back((*row)[0]);
    rows.push_back(std::move(values));
  }
  const auto k = static_cast<Eigen::Index>(table.labels.companies.size());
  table.labels.labels.resize(static_cast<Eigen::Index>(rows.size()), k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      table.labels.labels(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    }
  }
  return table;
}

}  // namespace scn

#include "scn/ingest/domain.hpp"

#include "scn/ingest/csv.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace scn {

namespace {

constexpr std::array<std::string_view, kStrata> kStratumNames = {"basic", "social", "self"};
constexpr std::array<std::string_view, kLifeAspects> kAspectNames = {
    "restaurant", "entertainment", "service", "travel",     "shop",     "health",
    "work",       "credit",        "home",    "daily",      "investment", "bill",
    "gambling",   "education",     "charity", "fashion",    "tax"};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view name_of(Stratum s) { return kStratumNames[static_cast<std::size_t>(s)]; }
std::string_view name_of(LifeAspect a) { return kAspectNames[static_cast<std::size_t>(a)]; }

std::optional<Stratum> parse_stratum(std::string_view text) {
  text = trim(text);
  for (std::size_t i = 0; i < kStrata; ++i) {
    if (iequals(text, kStratumNames[i])) return static_cast<Stratum>(i);
  }
  return std::nullopt;
}

std::optional<LifeAspect> parse_life_aspect(std::string_view text) {
  text = trim(text);
  for (std::size_t i = 0; i < kLifeAspects; ++i) {
    if (iequals(text, kAspectNames[i])) return static_cast<LifeAspect>(i);
  }
  return std::nullopt;
}

const std::array<std::string, kPurchaseFeatures>& purchase_feature_names() {
  static const auto names = [] {
    std::array<std::string, kPurchaseFeatures> out;
    for (std::size_t i = 0; i < kStrata; ++i) out[i] = std::string(kStratumNames[i]);
    for (std::size_t i = 0; i < kLifeAspects; ++i) out[kStrata + i] = std::string(kAspectNames[i]);
    return out;
  }();
  return names;
}

Eigen::VectorXd PurchaseFeatureVector::as_vector() const {
  Eigen::VectorXd v(kPurchaseFeatures);
  for (std::size_t i = 0; i < kPurchaseFeatures; ++i) v[static_cast<Eigen::Index>(i)] = (*this)[i];
  return v;
}

void Taxonomy::add(std::string category, Stratum stratum, LifeAspect aspect) {
  if (category.empty()) throw DataError("taxonomy: empty category name");
  auto [it, inserted] = entries_.emplace(std::move(category), Entry{stratum, aspect});
  if (!inserted) throw DataError("taxonomy: duplicate category '" + it->first + "'");
}

const Taxonomy::Entry* Taxonomy::find(std::string_view category) const {
  auto it = entries_.find(category);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> Taxonomy::categories() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> Taxonomy::categories_for(LifeAspect aspect) const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_) {
    if (entry.aspect == aspect) out.push_back(name);
  }
  return out;
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open taxonomy file " + path.string());
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || header->size() != 3 || trim((*header)[0]) != "category" ||
      trim((*header)[1]) != "stratum" || trim((*header)[2]) != "life_aspect") {
    throw DataError(path.string() + ": expected header category,stratum,life_aspect");
  }
  Taxonomy taxonomy;
  while (auto row = reader.next()) {
    if (row->size() == 1 && trim((*row)[0]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(reader.line());
    if (row->size() != 3) throw DataError(where + ": expected 3 fields");
    auto stratum = parse_stratum((*row)[1]);
    if (!stratum) throw DataError(where + ": unknown stratum '" + (*row)[1] + "'");
    auto aspect = parse_life_aspect((*row)[2]);
    if (!aspect) throw DataError(where + ": unknown life aspect '" + (*row)[2] + "'");
    try {
      taxonomy.add(std::string(trim((*row)[0])), *stratum, *aspect);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return taxonomy;
}

}  // namespace scn

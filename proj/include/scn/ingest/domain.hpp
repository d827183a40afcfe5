#pragma once

#include <Eigen/Core>

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scn {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stratum : std::uint8_t { Basic, Social, Self };
inline constexpr std::size_t kStrata = 3;

enum class LifeAspect : std::uint8_t {
  Restaurant,
  Entertainment,
  Service,
  Travel,
  Shop,
  Health,
  Work,
  Credit,
  Home,
  Daily,
  Investment,
  Bill,
  Gambling,
  Education,
  Charity,
  Fashion,
  Tax,
};
inline constexpr std::size_t kLifeAspects = 17;
inline constexpr std::size_t kPurchaseFeatures = kStrata + kLifeAspects;

std::string_view name_of(Stratum s);
std::string_view name_of(LifeAspect a);
std::optional<Stratum> parse_stratum(std::string_view text);
std::optional<LifeAspect> parse_life_aspect(std::string_view text);

/// Column names of the 20 purchase features in their fixed order:
/// basic, social, self, then the 17 life aspects.
const std::array<std::string, kPurchaseFeatures>& purchase_feature_names();

/// Maps dataset category codes to a stratum and a life aspect.
class Taxonomy {
 public:
  struct Entry {
    Stratum stratum;
    LifeAspect aspect;
  };

  void add(std::string category, Stratum stratum, LifeAspect aspect);
  const Entry* find(std::string_view category) const;
  bool contains(std::string_view category) const { return find(category) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  /// Categories in lexical order.
  std::vector<std::string> categories() const;
  std::vector<std::string> categories_for(LifeAspect aspect) const;

  static Taxonomy load(const std::filesystem::path& path);

 private:
  std::map<std::string, Entry, std::less<>> entries_;
};

enum class PaymentType : std::uint8_t { Debit, Credit };

struct TransactionRecord {
  std::string consumer_id;
  std::chrono::year_month_day date;
  double expense = 0.0;
  PaymentType payment_type = PaymentType::Debit;
  std::string category;
  std::string description;
  std::string payee;

  bool operator==(const TransactionRecord&) const = default;
};

/// The 20 purchase features: stratum ratios then life frequencies, each 0..5.
struct PurchaseFeatureVector {
  std::array<double, kStrata> stratum{};
  std::array<double, kLifeAspects> life{};

  double operator[](std::size_t i) const {
    return i < kStrata ? stratum[i] : life[i - kStrata];
  }
  Eigen::VectorXd as_vector() const;
};

inline constexpr std::size_t kFacialAttributes = 16;
inline constexpr std::size_t kFacialDistances = 170;

/// Five-aspect face data for one consumer. Stored in single precision, which
/// is also the on-disk width.
struct DescriptorSet {
  std::string consumer_id;
  Eigen::VectorXf fa;     // 16 attribute scores in [0, 1]
  Eigen::VectorXf pdm;    // d_pdm shape parameters
  Eigen::VectorXf fl;     // 2 * n_lm landmark coords, x/y interleaved, in [0, 1]
  Eigen::VectorXf fd;     // 170 non-negative distances
  Eigen::VectorXf image;  // channels * S * S, values in [0, 1], row-major

  bool operator==(const DescriptorSet&) const = default;
};

}  // namespace scn

#include "scn/ingest/synthetic.hpp"

#include "scn/numerics/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace scn {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kVectorTraits = 4;   // traits 2..5
constexpr int kPlanted = 4;        // pdm[0..3] read traits 2..5 directly
constexpr double kPdmNoise = 0.35;
constexpr double kLandmarkScale = 0.01;
constexpr double kRateLoading = 0.5;
constexpr double kStratumLoading = 0.45;
constexpr double kPriceNoise = 0.35;
constexpr int kFillerPayees = 20;
constexpr std::array<int, kStrata> kStratumTrait = {3, 4, 0};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

VectorXd normal_vector(Rng& rng, Index n) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

VectorXd unit_vector(Rng& rng, Index n) {
  VectorXd v = normal_vector(rng, n);
  return v / v.norm();
}

std::string padded(const char* prefix, std::size_t value, int width) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, value);
  return buf;
}

// Population-level structure shared by every consumer of one seed.
struct World {
  // descriptors
  VectorXd pdm_scale;
  MatrixXd pdm_dirs;      // d_pdm x 4
  VectorXd mean_shape;    // 2 n_lm
  MatrixXd shape_basis;   // 2 n_lm x d_pdm
  std::vector<std::pair<int, int>> fd_pairs;
  MatrixXd fa_dirs;       // 16 x 4
  // behavior
  std::array<double, kLifeAspects> base_rate{};
  std::array<int, kLifeAspects> aspect_trait{};
  MatrixXd aspect_mix;    // 17 x 6
  std::vector<std::string> categories;
  std::vector<std::vector<std::size_t>> aspect_categories;  // indices into categories
  std::vector<Stratum> category_stratum;
  std::vector<LifeAspect> category_aspect;
  std::vector<double> category_price;
  // target companies
  std::vector<std::size_t> company_category;
  MatrixXd affinity;      // k x 6
};

World build_world(const SyntheticSpec& spec, const Taxonomy& taxonomy, Rng rng) {
  World w;
  const Index d = spec.d_pdm;
  w.pdm_scale.resize(d);
  w.pdm_dirs.resize(d, kVectorTraits);
  for (Index c = 0; c < d; ++c) {
    w.pdm_scale[c] = 3.0 * std::pow(0.93, static_cast<double>(c));
    if (c < kPlanted) {
      w.pdm_dirs.row(c).setZero();
      w.pdm_dirs(c, c) = 1.0;
    } else {
      w.pdm_dirs.row(c) = unit_vector(rng, kVectorTraits).transpose();
    }
  }
  const Index nl = 2 * static_cast<Index>(spec.n_lm);
  w.mean_shape.resize(nl);
  for (Index i = 0; i < nl; ++i) w.mean_shape[i] = rng.uniform(0.25, 0.75);
  w.shape_basis = MatrixXd(nl, d);
  for (Index i = 0; i < nl; ++i) {
    for (Index j = 0; j < d; ++j) w.shape_basis(i, j) = rng.normal() / std::sqrt(double(d));
  }
  std::set<std::pair<int, int>> seen;
  while (w.fd_pairs.size() < kFacialDistances) {
    int a = static_cast<int>(rng.below(spec.n_lm));
    int b = static_cast<int>(rng.below(spec.n_lm));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (seen.insert({a, b}).second) w.fd_pairs.emplace_back(a, b);
  }
  w.fa_dirs.resize(kFacialAttributes, kVectorTraits);
  for (Index c = 0; c < static_cast<Index>(kFacialAttributes); ++c) {
    w.fa_dirs.row(c) = unit_vector(rng, kVectorTraits).transpose();
  }

  w.aspect_mix.resize(kLifeAspects, kSyntheticTraits);
  for (std::size_t a = 0; a < kLifeAspects; ++a) {
    w.base_rate[a] = rng.uniform(4.0, 12.0);
    w.aspect_trait[a] = static_cast<int>(a % kSyntheticTraits);
    w.aspect_mix.row(static_cast<Index>(a)) =
        0.3 * normal_vector(rng, kSyntheticTraits).transpose() / std::sqrt(double(kSyntheticTraits));
  }
  w.categories = taxonomy.categories();
  w.aspect_categories.resize(kLifeAspects);
  for (std::size_t c = 0; c < w.categories.size(); ++c) {
    const auto* entry = taxonomy.find(w.categories[c]);
    w.category_stratum.push_back(entry->stratum);
    w.category_aspect.push_back(entry->aspect);
    w.aspect_categories[static_cast<std::size_t>(entry->aspect)].push_back(c);
    w.category_price.push_back(std::exp(rng.uniform(std::log(4.0), std::log(200.0))));
  }

  std::vector<std::size_t> order(w.categories.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  w.affinity.resize(static_cast<Index>(spec.n_companies), kSyntheticTraits);
  for (std::size_t j = 0; j < spec.n_companies; ++j) {
    const std::size_t cat = order[j % order.size()];
    w.company_category.push_back(cat);
    VectorXd eta = normal_vector(rng, kSyntheticTraits);
    eta[0] *= 0.6;
    eta[1] *= 0.6;
    eta[w.aspect_trait[static_cast<std::size_t>(w.category_aspect[cat])]] += 1.0;
    w.affinity.row(static_cast<Index>(j)) = eta.transpose() / eta.norm();
  }
  return w;
}

void render_face(const SyntheticSpec& spec, double u0, double u1, Rng& rng,
                 Eigen::VectorXf& image) {
  const Index S = spec.image_size;
  const double c = 0.5 * static_cast<double>(S - 1);
  const double rx = S * 0.22 * std::exp(0.2 * std::clamp(u0, -3.0, 3.0));
  const double ry = S * 0.27 * std::exp(0.2 * std::clamp(u1, -3.0, 3.0));
  static constexpr std::array<double, 3> tint = {1.0, 0.85, 0.7};
  image.resize(static_cast<Index>(spec.channels) * S * S);
  for (Index y = 0; y < S; ++y) {
    for (Index x = 0; x < S; ++x) {
      const double dx = (static_cast<double>(x) - c) / rx;
      const double dy = (static_cast<double>(y) - c) / ry;
      const double r = std::sqrt(dx * dx + dy * dy);
      const double base = 0.1 + 0.75 * sigmoid(6.0 * (1.0 - r));
      const double noise = 0.03 * rng.normal();
      for (Index ch = 0; ch < static_cast<Index>(spec.channels); ++ch) {
        const double v = std::clamp(base * tint[static_cast<std::size_t>(ch)] + noise, 0.0, 1.0);
        image[(ch * S + y) * S + x] = static_cast<float>(v);
      }
    }
  }
}

DescriptorSet make_descriptor(const SyntheticSpec& spec, const World& w, const VectorXd& u,
                              Rng& rng) {
  DescriptorSet set;
  const VectorXd uv = u.segment(2, kVectorTraits);
  const Index d = spec.d_pdm;
  VectorXd pdm(d);
  for (Index c = 0; c < d; ++c) {
    pdm[c] = w.pdm_scale[c] * (w.pdm_dirs.row(c).dot(uv) + kPdmNoise * rng.normal());
  }
  set.pdm = pdm.cast<float>();

  const Index nl = w.mean_shape.size();
  VectorXd landmarks = w.mean_shape + kLandmarkScale * (w.shape_basis * pdm);
  for (Index i = 0; i < nl; ++i) {
    landmarks[i] = std::clamp(landmarks[i] + 0.002 * rng.normal(), 0.0, 1.0);
  }
  set.fl = landmarks.cast<float>();

  set.fd.resize(kFacialDistances);
  for (std::size_t p = 0; p < kFacialDistances; ++p) {
    const auto [a, b] = w.fd_pairs[p];
    const double dx = landmarks[2 * a] - landmarks[2 * b];
    const double dy = landmarks[2 * a + 1] - landmarks[2 * b + 1];
    set.fd[static_cast<Index>(p)] =
        static_cast<float>(static_cast<double>(spec.image_size) * std::sqrt(dx * dx + dy * dy));
  }

  set.fa.resize(kFacialAttributes);
  for (Index c = 0; c < static_cast<Index>(kFacialAttributes); ++c) {
    set.fa[c] = static_cast<float>(sigmoid(2.0 * w.fa_dirs.row(c).dot(uv) + 0.4 * rng.normal()));
  }
  render_face(spec, u[0] + 0.1 * rng.normal(), u[1] + 0.1 * rng.normal(), rng, set.image);
  return set;
}

std::string describe(PaymentType type, Rng& rng) {
  const std::size_t ref = 100000 + rng.below(900000);
  return type == PaymentType::Credit ? "card payment, ref " + std::to_string(ref)
                                     : "POS purchase " + std::to_string(ref);
}

}  // namespace

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("synthetic spec: " + msg); };
  if (n_consumers < 1) fail("n_consumers must be at least 1");
  if (n_companies < 2) fail("n_companies must be at least 2");
  if (!(signal_strength >= 0.0 && signal_strength <= 1.0)) fail("signal_strength must lie in [0, 1]");
  if (image_size < 8) fail("image_size must be at least 8");
  if (d_pdm < static_cast<std::uint32_t>(kPlanted)) fail("d_pdm must be at least 4");
  if (n_lm < 20) fail("n_lm must be at least 20 to supply 170 landmark pairs");
  if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const Taxonomy& taxonomy) {
  spec.validate();
  if (taxonomy.size() == 0) throw std::invalid_argument("synthetic spec: empty taxonomy");
  const Rng root(spec.seed);
  const World w = build_world(spec, taxonomy, root.fork(1));
  const std::size_t n = spec.n_consumers;
  const std::size_t k = spec.n_companies;
  const double s = spec.signal_strength;

  SyntheticDataset out;
  out.descriptors.layout = {spec.n_lm, spec.d_pdm, spec.image_size, spec.channels};
  out.labels = Eigen::MatrixXi::Zero(static_cast<Index>(n), static_cast<Index>(k));
  out.traits.resize(static_cast<Index>(n), kSyntheticTraits);
  for (std::size_t j = 0; j < k; ++j) out.companies.push_back(padded("company_", j + 1, 2));
  for (int c = 0; c < kPlanted; ++c) out.planted_columns.push_back("pdm[" + std::to_string(c) + "]");

  const int id_width = std::max(4, static_cast<int>(std::to_string(n).size()));
  std::vector<std::array<long, kLifeAspects>> freq(n);
  std::vector<std::array<double, kStrata>> spend(n);

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = root.fork(1000 + i);
    const std::string id = padded("U", i + 1, id_width);
    out.consumer_ids.push_back(id);
    const VectorXd z = normal_vector(rng, kSyntheticTraits);
    const VectorXd xi = normal_vector(rng, kSyntheticTraits);
    out.traits.row(static_cast<Index>(i)) = z.transpose();
    const VectorXd u = s * z + (1.0 - s) * xi;

    Rng face_rng = rng.fork(1);
    DescriptorSet set = make_descriptor(spec, w, u, face_rng);
    set.consumer_id = id;
    out.descriptors.sets.push_back(std::move(set));

    Rng tx_rng = rng.fork(2);
    std::array<double, kStrata> multiplier{};
    for (std::size_t st = 0; st < kStrata; ++st) {
      multiplier[st] = std::exp(kStratumLoading * z[kStratumTrait[st]]);
    }
    std::vector<TransactionRecord> mine;
    freq[i].fill(0);
    spend[i].fill(0.0);
    auto emit = [&](std::size_t cat, std::string payee) {
      TransactionRecord rec;
      rec.consumer_id = id;
      rec.date = std::chrono::year(2019) / std::chrono::July /
                 std::chrono::day(static_cast<unsigned>(1 + tx_rng.below(31)));
      const auto stratum = static_cast<std::size_t>(w.category_stratum[cat]);
      const double raw = w.category_price[cat] * std::exp(kPriceNoise * tx_rng.normal()) *
                         multiplier[stratum];
      rec.expense = std::max(0.01, std::round(raw * 100.0) / 100.0);
      rec.payment_type = tx_rng.uniform() < 0.3 ? PaymentType::Credit : PaymentType::Debit;
      rec.category = w.categories[cat];
      rec.description = describe(rec.payment_type, tx_rng);
      rec.payee = std::move(payee);
      freq[i][static_cast<std::size_t>(w.category_aspect[cat])] += 1;
      spend[i][stratum] += rec.expense;
      mine.push_back(std::move(rec));
    };

    for (std::size_t a = 0; a < kLifeAspects; ++a) {
      const auto& cats = w.aspect_categories[a];
      if (cats.empty()) continue;
      const double log_rate =
          std::log(w.base_rate[a]) +
          kRateLoading * (z[w.aspect_trait[a]] + w.aspect_mix.row(static_cast<Index>(a)).dot(z));
      const auto count = tx_rng.poisson(std::exp(log_rate));
      for (std::uint64_t t = 0; t < count; ++t) {
        const std::size_t cat = cats[tx_rng.below(cats.size())];
        const double r = tx_rng.uniform();
        const auto rank = static_cast<std::size_t>(kFillerPayees * r * r);
        emit(cat, w.categories[cat] + padded("_shop_", rank + 1, 2));
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (w.affinity.row(static_cast<Index>(j)).dot(z) <= 0.0) continue;
      out.labels(static_cast<Index>(i), static_cast<Index>(j)) = 1;
      const auto visits = 1 + tx_rng.poisson(1.5);
      for (std::uint64_t t = 0; t < visits; ++t) emit(w.company_category[j], out.companies[j]);
    }
    std::stable_sort(mine.begin(), mine.end(),
                     [](const auto& a, const auto& b) { return a.date < b.date; });
    for (auto& rec : mine) out.transactions.push_back(std::move(rec));
  }

  std::array<long, kLifeAspects> max_freq{};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < kLifeAspects; ++a) max_freq[a] = std::max(max_freq[a], freq[i][a]);
  }
  out.features.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& f = out.features[i];
    for (std::size_t a = 0; a < kLifeAspects; ++a) {
      f.life[a] = max_freq[a] == 0 ? 0.0 : 5.0 * static_cast<double>(freq[i][a]) /
                                                static_cast<double>(max_freq[a]);
    }
    const double total = spend[i][0] + spend[i][1] + spend[i][2];
    for (std::size_t st = 0; st < kStrata; ++st) {
      f.stratum[st] = total > 0.0 ? 5.0 * spend[i][st] / total : 0.0;
    }
  }
  return out;
}

}  // namespace scn

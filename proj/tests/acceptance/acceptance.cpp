// Acceptance gate. `scn_acceptance --criterion N` runs one criterion and
// prints one PASS/FAIL line for it, preceded by one line per sub-check.

#include "commands.hpp"

#include "scn/eval/experiments.hpp"
#include "scn/eval/stats.hpp"
#include "scn/graph/graph.hpp"
#include "scn/ingest/synthetic.hpp"
#include "scn/numerics/allocator.hpp"
#include "support/gradcheck.hpp"
#include "support/naive_ops.hpp"
#include "support/random_tensor.hpp"

#include <CLI11.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace scn;
using T = Tensor<double>;
using Mat = MatrixX<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Criterion {
 public:
  explicit Criterion(int id) : id_(id), start_(std::chrono::steady_clock::now()) {}

  void check(const std::string& name, const std::function<Outcome()>& body) {
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all_ &= o.pass;
    std::printf("  [%s] %s: %s\n", o.pass ? " ok " : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  int finish(const std::string& title) const {
    std::printf("criterion %d (%s): %s in %.1f s\n", id_, title.c_str(), all_ ? "PASS" : "FAIL", elapsed());
    return all_ ? 0 : 1;
  }

 private:
  int id_;
  bool all_ = true;
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const Taxonomy& taxonomy() {
  static const Taxonomy t = Taxonomy::load(fs::path(SCN_SOURCE_DIR) / "data" / "taxonomy.csv");
  return t;
}

Mat random_matrix(Index r, Index c, Rng& rng, double lo = -1, double hi = 1) {
  Mat m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

/// The same features, labels and descriptor order the CLI pipeline produces.
ExperimentData pipeline_data(const SyntheticSpec& spec) {
  const auto synthetic = generate_synthetic(spec, taxonomy());
  ExperimentData data;
  data.ids = synthetic.consumer_ids;
  data.companies = synthetic.companies;
  data.descriptors = synthetic.descriptors;
  const auto ledgers = build_ledgers(synthetic.transactions, taxonomy(), synthetic.consumer_ids);
  data.features = feature_matrix(purchase_features(ledgers));
  data.labels = choice_labels(ledgers, synthetic.companies).labels;
  return data;
}

SyntheticSpec learnability_spec() {
  SyntheticSpec spec;
  spec.n_consumers = 200;
  spec.n_companies = 4;
  spec.signal_strength = 1.0;
  spec.seed = 7;
  return spec;
}

// ---------------------------------------------------------------- criterion 1

Outcome grad_outcome(const testing::GradCheckResult& r, double tol = 1e-4) {
  return {r.worst_relative_error <= tol,
          fmt("worst relative error %.2e", r.worst_relative_error) + " (" + r.worst_parameter + ")"};
}

/// Inputs bounded away from the kinks of relu and abs.
T signed_away_from_zero(Shape shape, Rng& rng) {
  VectorX<double> v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) {
    const double m = rng.uniform(0.05, 1.0);
    v[i] = rng.uniform() < 0.5 ? -m : m;
  }
  return T(std::move(shape), std::move(v), true);
}

// Gradient norms below kFloor cannot be told apart from finite-difference
// round-off, so the relative error is taken against at least this norm. Some
// CNN states have an exactly zero batch-norm shift gradient where the numeric
// estimate is pure noise around 1e-14.
constexpr double kFloor = 1e-8;

int criterion_1() {
  Criterion c(1);
  const double h = 1e-6;
  using testing::check_gradients;
  using testing::random_tensor;
  Rng rng(101);

  c.check("elementwise and reductions", [&] {
    auto a = random_tensor({4, 3}, rng, true, 0.5, 2.0);
    auto b = random_tensor({4, 3}, rng, true, 0.5, 2.0);
    auto w = random_tensor({4, 3}, rng);
    auto bias = random_tensor({3}, rng, true);
    std::vector<std::pair<std::string, T>> ab = {{"a", a}, {"b", b}};
    testing::GradCheckResult worst;
    auto keep = [&](const std::string& op, testing::GradCheckResult r) {
      if (r.worst_relative_error >= worst.worst_relative_error) {
        worst = r;
        worst.worst_parameter = op + "." + r.worst_parameter;
      }
    };
    keep("add", check_gradients([&] { return sum(mul(add(a, b), w)); }, ab, h, kFloor));
    keep("sub", check_gradients([&] { return sum(mul(sub(a, b), w)); }, ab, h, kFloor));
    keep("mul", check_gradients([&] { return sum(mul(mul(a, b), w)); }, ab, h, kFloor));
    keep("scale", check_gradients([&] { return sum(mul(scale(a, -1.7), w)); }, ab, h, kFloor));
    keep("add_scalar", check_gradients([&] { return sum(mul(add_scalar(a, 0.3), w)); }, ab, h, kFloor));
    keep("add_row_vector",
         check_gradients([&] { return sum(mul(add_row_vector(a, bias), w)); }, {{"a", a}, {"bias", bias}}, h, kFloor));
    keep("mean", check_gradients([&] { return mean(mul(a, w)); }, ab, h, kFloor));
    keep("log", check_gradients([&] { return sum(mul(log(a), w)); }, ab, h, kFloor));
    keep("pow", check_gradients([&] { return sum(mul(pow(a, -0.5), w)); }, ab, h, kFloor));
    auto sq = random_tensor({4, 4}, rng, true, 0.1, 1.0);
    auto s = random_tensor({4}, rng, true, 0.5, 1.5);
    auto w4 = random_tensor({4, 4}, rng);
    auto w1 = random_tensor({4}, rng);
    keep("scale_rows_cols",
         check_gradients([&] { return sum(mul(scale_rows_cols(sq, s), w4)); }, {{"a", sq}, {"s", s}}, h, kFloor));
    keep("row_sum", check_gradients([&] { return sum(mul(row_sum(sq), w1)); }, {{"a", sq}}, h, kFloor));
    auto m1 = random_tensor({3, 5}, rng, true), m2 = random_tensor({5, 2}, rng, true);
    auto wm = random_tensor({3, 2}, rng);
    keep("matmul", check_gradients([&] { return sum(mul(matmul(m1, m2), wm)); }, {{"a", m1}, {"b", m2}}, h, kFloor));
    return grad_outcome(worst);
  });

  c.check("activations and softmax", [&] {
    auto x = signed_away_from_zero({5, 6}, rng);
    auto w = random_tensor({5, 6}, rng);
    testing::GradCheckResult worst;
    auto run = [&](const std::string& op, auto f) {
      auto r = check_gradients([&] { return sum(mul(f(x), w)); }, {{"x", x}}, h, kFloor);
      if (r.worst_relative_error >= worst.worst_relative_error) {
        worst = r;
        worst.worst_parameter = op;
      }
    };
    run("relu", [](const T& t) { return relu(t); });
    run("leaky_relu", [](const T& t) { return leaky_relu(t, 0.01); });
    run("abs", [](const T& t) { return abs(t); });
    run("softmax(1)", [](const T& t) { return softmax(t, 1); });
    run("softmax(0)", [](const T& t) { return softmax(t, 0); });
    run("log_softmax(1)", [](const T& t) { return log_softmax(t, 1); });
    return grad_outcome(worst);
  });

  c.check("structural ops", [&] {
    auto a = random_tensor({2, 3, 2, 2}, rng, true);
    auto b = random_tensor({2, 1, 2, 2}, rng, true);
    std::vector<T> parts = {a, b};
    auto w = random_tensor({2, 4, 2, 2}, rng);
    auto r1 = check_gradients([&] { return sum(mul(concat<double>(parts, 1), w)); }, {{"a", a}, {"b", b}}, h, kFloor);
    auto m = random_tensor({5, 3}, rng, true);
    std::vector<Index> rows = {4, 0, 4};
    auto wp = random_tensor({3, 3}, rng);
    auto r2 = check_gradients([&] { return sum(mul(index_rows<double>(m, rows), wp)); }, {{"m", m}}, h, kFloor);
    auto wr = random_tensor({15}, rng);
    auto r3 = check_gradients([&] { return sum(mul(reshape(m, {15}), wr)); }, {{"m", m}}, h, kFloor);
    return grad_outcome(std::max({r1, r2, r3}, [](auto& p, auto& q) {
      return p.worst_relative_error < q.worst_relative_error;
    }));
  });

  c.check("conv2d, pool2d, batch_norm", [&] {
    auto x = random_tensor({2, 3, 7, 7}, rng, true);
    auto k = random_tensor({4, 3, 3, 3}, rng, true);
    testing::GradCheckResult worst;
    auto keep = [&](const std::string& op, testing::GradCheckResult r) {
      if (r.worst_relative_error >= worst.worst_relative_error) {
        worst = r;
        worst.worst_parameter = op + "." + r.worst_parameter;
      }
    };
    for (auto [stride, pad] : {std::pair{1, 1}, {2, 0}, {2, 1}}) {
      auto probe = conv2d(x, k, stride, pad);
      auto w = random_tensor(probe.shape(), rng);
      keep("conv2d", check_gradients([&] { return sum(mul(conv2d(x, k, stride, pad), w)); },
                                     {{"x", x}, {"kernel", k}}, h, kFloor));
    }
    for (auto kind : {PoolKind::Max, PoolKind::Avg}) {
      auto probe = pool2d(x, kind, 3, 2, 1);
      auto w = random_tensor(probe.shape(), rng);
      keep(kind == PoolKind::Max ? "max_pool" : "avg_pool",
           check_gradients([&] { return sum(mul(pool2d(x, kind, 3, 2, 1), w)); }, {{"x", x}}, h, kFloor));
    }
    auto gamma = random_tensor({3}, rng, true, 0.5, 1.5);
    auto beta = random_tensor({3}, rng, true);
    auto wb = random_tensor(x.shape(), rng);
    for (auto mode : {NormMode::Train, NormMode::Infer}) {
      keep("batch_norm", check_gradients(
                             [&] {
                               auto state = BatchNormState<double>::identity(3);
                               return sum(mul(batch_norm(x, gamma, beta, state, mode), wb));
                             },
                             {{"x", x}, {"gamma", gamma}, {"beta", beta}}, h, kFloor));
    }
    return grad_outcome(worst);
  });

  c.check("select, normalized adjacency, gcn", [&] {
    const Index n = 7;
    auto unit = GcnUnit<double>::init(5, 4, 3, rng);
    auto layer = SelectLayer<double>::init(n, 0.75, rng);
    for (Index i = 0; i < n * n; ++i) {
      double& r = layer.weight.mutable_value()[i];
      if (std::abs(r - 0.75) < 0.01) r += 0.02;
    }
    Mat feats = random_matrix(n, 5, rng);
    auto g = build_graph(feats).tensor();
    auto x = T::from_matrix(normalize_features(feats));
    auto wn = random_tensor({n, n}, rng);
    auto sw = random_tensor({n, n}, rng, true, 0.1, 1.0);
    auto r1 = check_gradients([&] { return sum(mul(normalized_adjacency(sw), wn)); }, {{"w", sw}}, h, kFloor);
    auto hmat = random_tensor({n, 5}, rng, true), wmat = random_tensor({5, 3}, rng, true);
    auto wo = random_tensor({n, 3}, rng);
    auto r2 = check_gradients([&] { return sum(mul(gcn_propagate(sw, hmat, wmat), wo)); },
                              {{"w", sw}, {"h", hmat}, {"weight", wmat}}, h, kFloor);
    auto r3 = check_gradients([&] { return sum(mul(gcn_unit_forward(unit, select_forward(layer, g), x), wo)); },
                              {{"w0", unit.w0}, {"w1", unit.w1}, {"select", layer.weight}}, h, kFloor);
    return grad_outcome(std::max({r1, r2, r3}, [](auto& p, auto& q) {
      return p.worst_relative_error < q.worst_relative_error;
    }));
  });

  c.check("light inception and semanticity CNN", [&] {
    CnnConfig cfg;
    cfg.image_size = 16;
    cfg.stem_channels = 3;
    cfg.stage1_branch = 2;
    cfg.stage2_branch = 2;
    auto net = SemanticCnn<double>::init(cfg, rng);
    auto images = random_tensor({4, 1, 16, 16}, rng, false, 0.0, 1.0);
    auto readout = random_tensor({4, cfg.embedding_dim()}, rng);
    auto r = check_gradients(
        [&] {
          auto sem = semanticity(net, images, NormMode::Train);
          return add(sum(mul(sem, readout)), sum(mul(sem, sem)));
        },
        net.named_parameters(), 1e-5, kFloor);
    return grad_outcome(r);
  });

  c.check("full SCN forward and loss (16 consumers, 56x56, d_hidden 8)", [&] {
    SyntheticSpec spec;
    spec.n_consumers = 16;
    spec.n_companies = 3;
    spec.image_size = 56;
    spec.seed = 21;
    const auto data = generate_synthetic(spec, taxonomy());
    ModelConfig mc;
    mc.d_hidden = 8;
    mc.cnn = CnnConfig::reduced();
    TrainingData<double> td;
    td.inputs = prepare_inputs<double>(data.descriptors, mc);
    td.features = feature_matrix(data.features);
    td.labels = data.labels;
    Rng init(22);
    auto model = ScnModel<double>::init(mc, td.inputs, data.labels.cols(), init);
    for (auto& unit : model.aspects) {
      for (Index i = 0; i < unit.select.weight.size(); ++i) {
        auto& w = unit.select.weight.mutable_value()[i];
        if (std::abs(w - unit.select.threshold) < 1e-3) w += 2e-3;
      }
    }
    std::vector<std::uint8_t> mask(16, 1);
    mask[3] = mask[9] = mask[14] = 0;
    std::vector<std::pair<std::string, T>> params;
    for (auto& [name, t] : model.parameters()) params.emplace_back(name, t);
    auto r = check_gradients(
        [&] {
          auto pred = forward(model, td.inputs, {}, NormMode::Train);
          return loss(pred, td.features, td.labels, mask, LossConfig{}, false).total;
        },
        params, h, kFloor, 32);
    auto o = grad_outcome(r);
    o.detail += ", " + std::to_string(params.size()) + " parameter tensors";
    return o;
  });

  c.check("runtime under 2 min", [&] { return Outcome{c.elapsed() < 120.0, fmt("%.1f s", c.elapsed())}; });
  return c.finish("gradient integrity");
}

// ---------------------------------------------------------------- criterion 2

Mat propagate_oracle(const Mat& w, const Mat& h, const Mat& weight) {
  const Index n = w.rows();
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) deg[std::size_t(i)] += w(i, j) + (i == j ? 1.0 : 0.0);
  Mat out = Mat::Zero(n, weight.cols());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const double a = (w(i, j) + (i == j ? 1.0 : 0.0)) / std::sqrt(deg[std::size_t(i)] * deg[std::size_t(j)]);
      for (Index c = 0; c < weight.cols(); ++c) {
        double hw = 0;
        for (Index k = 0; k < h.cols(); ++k) hw += h(j, k) * weight(k, c);
        out(i, c) += a * hw;
      }
    }
  return out;
}

double overlap_oracle(const CompanySet& a, const CompanySet& b) {
  CompanySet universe = a;
  universe.insert(b.begin(), b.end());
  double inter = 0;
  for (const auto& c : universe) inter += a.count(c) && b.count(c);
  return inter / double(universe.size());
}

double impact_oracle(std::size_t a, std::size_t b, const std::vector<CompanySet>& g) {
  CompanySet universe;
  for (const auto& s : g) universe.insert(s.begin(), s.end());
  double total = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (j == a || j == b) continue;
    double tri = 0, pair = 0, uni = 0;
    for (const auto& c : universe) {
      const bool in_a = g[a].count(c), in_b = g[b].count(c), in_j = g[j].count(c);
      tri += in_a && in_b && in_j;
      pair += in_b && in_j;
      uni += in_b || in_j;
    }
    total += std::abs(tri / uni - pair / uni);
  }
  return total;
}

int criterion_2() {
  Criterion c(2);
  Rng rng(202);

  c.check("conv2d vs naive loops", [&] {
    double worst = 0;
    int cases = 0;
    for (auto [k, stride, pad] : {std::tuple{1, 1, 0}, {3, 1, 1}, {3, 2, 1}, {5, 1, 2}, {7, 2, 3}, {2, 2, 0}}) {
      for (Index size : {7, 8, 11}) {
        auto x = testing::random_tensor({2, 3, size, size}, rng);
        auto kernel = testing::random_tensor({4, 3, k, k}, rng);
        Index oh = 0, ow = 0;
        const auto expect = testing::naive_conv2d(x, kernel, stride, pad, oh, ow);
        const auto got = conv2d(x, kernel, stride, pad);
        for (std::size_t i = 0; i < expect.size(); ++i) {
          worst = std::max(worst, std::abs(got.value()[Index(i)] - expect[i]));
        }
        ++cases;
      }
    }
    return Outcome{worst <= 1e-10, fmt("max abs difference %.2e", worst) + " over " + std::to_string(cases) + " cases"};
  });

  c.check("pool2d vs naive loops", [&] {
    double worst = 0;
    int cases = 0;
    for (auto kind : {PoolKind::Max, PoolKind::Avg}) {
      for (auto [k, stride, pad] : {std::tuple{1, 1, 0}, {2, 2, 0}, {3, 2, 1}, {3, 1, 1}, {5, 3, 2}}) {
        for (Index size : {6, 9}) {
          auto x = testing::random_tensor({2, 2, size, size}, rng);
          const auto expect = testing::naive_pool2d(x, kind == PoolKind::Max, k, stride, pad);
          const auto got = pool2d(x, kind, k, stride, pad);
          for (std::size_t i = 0; i < expect.size(); ++i) {
            worst = std::max(worst, std::abs(got.value()[Index(i)] - expect[i]));
          }
          ++cases;
        }
      }
    }
    return Outcome{worst <= 1e-10, fmt("max abs difference %.2e", worst) + " over " + std::to_string(cases) + " cases"};
  });

  c.check("gcn_propagate vs neighbor sum, random graphs n <= 8", [&] {
    double worst = 0;
    int graphs = 0;
    for (Index n = 1; n <= 8; ++n) {
      for (int trial = 0; trial < 50; ++trial) {
        Mat w = random_matrix(n, n, rng, 0, 1);
        const double sparsity = rng.uniform(0.0, 0.9);
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < n; ++j)
            if (rng.uniform() < sparsity) w(i, j) = 0;
        Mat h = random_matrix(n, 4, rng), weight = random_matrix(4, 3, rng);
        auto out = gcn_propagate(T::from_matrix(w), T::from_matrix(h), T::from_matrix(weight));
        worst = std::max(worst, (out.matrix() - propagate_oracle(w, h, weight)).cwiseAbs().maxCoeff());
        ++graphs;
      }
    }
    return Outcome{worst <= 1e-10, fmt("max abs difference %.2e", worst) + " over " + std::to_string(graphs) + " graphs"};
  });

  SyntheticSpec spec;
  spec.n_consumers = 120;
  spec.n_companies = 4;
  spec.image_size = 8;
  spec.seed = 31;
  const auto synthetic = generate_synthetic(spec, taxonomy());
  const auto ledgers = build_ledgers(synthetic.transactions, taxonomy(), synthetic.consumer_ids);

  c.check("overlap rate vs set enumeration", [&] {
    const auto partition = partition_groups(ledgers);
    std::vector<CompanySet> sets;
    for (const auto& g : partition.groups) sets.push_back(group_companies(g, ledgers));
    double worst = 0;
    for (std::size_t a = 0; a < sets.size(); ++a)
      for (std::size_t b = 0; b < sets.size(); ++b)
        worst = std::max(worst, std::abs(overlap_rate(sets[a], sets[b]) - overlap_oracle(sets[a], sets[b])));
    return Outcome{worst <= 1e-9, fmt("max difference %.2e", worst) + " over all group pairs"};
  });

  c.check("impact score vs set enumeration", [&] {
    const auto partition = partition_groups(ledgers);
    std::vector<CompanySet> sets;
    for (const auto& g : partition.groups) sets.push_back(group_companies(g, ledgers));
    double worst = 0;
    for (std::size_t a = 0; a < sets.size(); ++a)
      for (std::size_t b = 0; b < sets.size(); ++b)
        if (a != b) worst = std::max(worst, std::abs(impact_score(a, b, sets) - impact_oracle(a, b, sets)));
    // random small families as well
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<CompanySet> r(5);
      for (auto& s : r) {
        for (int k = 0; k < 8; ++k)
          if (rng.uniform() < 0.4) s.insert(std::string(1, char('a' + k)));
        s.insert("z");
      }
      for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t b = 0; b < 5; ++b)
          if (a != b) worst = std::max(worst, std::abs(impact_score(a, b, r) - impact_oracle(a, b, r)));
    }
    return Outcome{worst <= 1e-9, fmt("max difference %.2e", worst)};
  });

  // Brute-force per-consumer sums straight from the transaction records.
  std::map<std::string, std::array<double, kStrata>> expense;
  std::map<std::string, std::array<double, kLifeAspects>> count;
  for (const auto& r : synthetic.transactions) {
    const auto* e = taxonomy().find(r.category);
    expense[r.consumer_id][std::size_t(e->stratum)] += r.expense;
    count[r.consumer_id][std::size_t(e->aspect)] += 1;
  }

  c.check("stratum features vs record scan", [&] {
    const auto features = stratum_features(ledgers);
    double worst = 0;
    for (std::size_t i = 0; i < ledgers.size(); ++i) {
      const auto& e = expense[ledgers[i].consumer_id];
      const double total = e[0] + e[1] + e[2];
      for (std::size_t s = 0; s < kStrata; ++s) worst = std::max(worst, std::abs(features[i][s] - 5 * e[s] / total));
    }
    return Outcome{worst <= 1e-9, fmt("max difference %.2e", worst)};
  });

  c.check("life features vs record scan", [&] {
    const auto features = life_features(ledgers);
    std::array<double, kLifeAspects> max{};
    for (const auto& [id, f] : count)
      for (std::size_t a = 0; a < kLifeAspects; ++a) max[a] = std::max(max[a], f[a]);
    double worst = 0;
    for (std::size_t i = 0; i < ledgers.size(); ++i) {
      const auto& f = count[ledgers[i].consumer_id];
      for (std::size_t a = 0; a < kLifeAspects; ++a) {
        const double expect = max[a] == 0 ? 0.0 : 5 * f[a] / max[a];
        worst = std::max(worst, std::abs(features[i][a] - expect));
      }
    }
    return Outcome{worst <= 1e-9, fmt("max difference %.2e", worst)};
  });

  c.check("weighted company profiles vs direct formula", [&] {
    const Mat f = feature_matrix(purchase_features(ledgers));
    const ChoiceLabels labels = choice_labels(ledgers, synthetic.companies);
    double worst = 0;
    const double n = double(f.rows());
    for (std::size_t j = 0; j < labels.companies.size(); ++j) {
      const auto p = weighted_company_features(j, f, labels);
      std::vector<Index> who;
      for (Index i = 0; i < f.rows(); ++i)
        if (labels.labels(i, Index(j))) who.push_back(i);
      const double inv = std::log(n / double(who.size()));
      worst = std::max(worst, std::abs(p.inverse_frequency - inv));
      std::array<double, kPurchaseFeatures> raw{};
      for (std::size_t k = 0; k < kPurchaseFeatures; ++k) {
        double s = 0, mu = 0, ss = 0;
        for (Index i : who) s += f(i, Index(k));
        mu = s / double(who.size());
        for (Index i : who) ss += (f(i, Index(k)) - mu) * (f(i, Index(k)) - mu);
        const double sd = std::sqrt(ss / double(who.size() - 1));
        raw[k] = inv * s / sd;
        if (p.defined[k]) worst = std::max(worst, std::abs(p.weighted[k] - raw[k]) / std::max(1.0, std::abs(raw[k])));
      }
      for (auto [b, e] : {std::pair<std::size_t, std::size_t>{0, kStrata}, {kStrata, kPurchaseFeatures}}) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t k = b; k < e; ++k)
          if (p.defined[k]) lo = std::min(lo, raw[k]), hi = std::max(hi, raw[k]);
        for (std::size_t k = b; k < e; ++k)
          if (p.defined[k] && hi > lo) worst = std::max(worst, std::abs(p.normalized[k] - (raw[k] - lo) / (hi - lo)));
      }
    }
    return Outcome{worst <= 1e-9, fmt("max relative difference %.2e", worst)};
  });

  return c.finish("oracle equivalence");
}

// ---------------------------------------------------------------- criterion 3

int criterion_3() {
  Criterion c(3);
  Rng rng(303);

  c.check("RBF graph symmetric, unit diagonal, values in (0, 1]", [&] {
    std::size_t violations = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const Index n = 2 + Index(trial % 9) * 3, d = 1 + Index(trial % 5) * 7;
      Mat x = random_matrix(n, d, rng, -2, 2);
      const auto g = build_graph(x).adjacency;
      for (Index i = 0; i < n; ++i) {
        violations += g(i, i) != 1.0;
        for (Index j = 0; j < n; ++j) violations += g(i, j) != g(j, i) || !(g(i, j) > 0 && g(i, j) <= 1);
      }
    }
    return Outcome{violations == 0, std::to_string(violations) + " violations in 20 graphs"};
  });

  c.check("select layer zero count equals dropped weights", [&] {
    std::size_t mismatches = 0;
    for (double threshold : {0.5, 0.6, 0.75, 0.9, 0.95}) {
      const Index n = 12;
      auto layer = SelectLayer<double>::init(n, threshold, rng);
      auto g = testing::random_tensor({n, n}, rng, false, 0.01, 1.0);
      auto w = select_forward(layer, g);
      Index zeros = 0, dropped = 0;
      for (Index i = 0; i < n * n; ++i) {
        zeros += w.value()[i] == 0.0;
        dropped += layer.weight.value()[i] <= threshold;
      }
      mismatches += zeros != dropped || layer.surviving_edges() != n * n - dropped;
    }
    return Outcome{mismatches == 0, std::to_string(mismatches) + " mismatching thresholds of 5"};
  });

  SyntheticSpec spec;
  spec.n_consumers = 150;
  spec.image_size = 8;
  spec.seed = 33;
  const auto synthetic = generate_synthetic(spec, taxonomy());
  const auto ledgers = build_ledgers(synthetic.transactions, taxonomy());

  c.check("stratum features sum to 5", [&] {
    std::vector<std::string> zero;
    const auto s = stratum_features(ledgers, &zero);
    double worst = 0;
    for (const auto& row : s) worst = std::max(worst, std::abs(row[0] + row[1] + row[2] - 5.0));
    return Outcome{worst <= 1e-9 && zero.empty(), fmt("max deviation %.2e", worst)};
  });

  c.check("life features invariant to repeating every transaction", [&] {
    std::vector<TransactionRecord> tripled;
    for (const auto& r : synthetic.transactions)
      for (int k = 0; k < 3; ++k) tripled.push_back(r);
    const auto base = life_features(ledgers);
    const auto scaled = life_features(build_ledgers(tripled, taxonomy()));
    double worst = 0;
    for (std::size_t i = 0; i < base.size(); ++i)
      for (std::size_t a = 0; a < kLifeAspects; ++a) worst = std::max(worst, std::abs(base[i][a] - scaled[i][a]));
    return Outcome{worst <= 1e-12, fmt("max difference %.2e", worst)};
  });

  c.check("softmax rows sum to 1", [&] {
    double worst = 0;
    for (double spread : {1.0, 30.0, 700.0}) {
      auto x = testing::random_tensor({40, 9}, rng, false, -spread, spread);
      for (int axis : {0, 1}) {
        const Mat y = softmax(x, axis).matrix();
        const auto sums = axis == 1 ? Eigen::VectorXd(y.rowwise().sum()) : Eigen::VectorXd(y.colwise().sum().transpose());
        worst = std::max(worst, (sums.array() - 1.0).abs().maxCoeff());
      }
    }
    return Outcome{worst <= 1e-12, fmt("max deviation %.2e", worst)};
  });

  c.check("loss ignores targets of masked-out consumers, bit for bit", [&] {
    SyntheticSpec small;
    small.n_consumers = 24;
    small.n_companies = 3;
    small.image_size = 16;
    small.d_pdm = 6;
    small.n_lm = 20;
    small.seed = 34;
    const auto data = generate_synthetic(small, taxonomy());
    ModelConfig mc;
    mc.d_hidden = 4;
    mc.d_out = 3;
    mc.cnn.image_size = 16;
    mc.cnn.stem_channels = 3;
    mc.cnn.stage1_branch = 2;
    mc.cnn.stage2_branch = 2;
    const auto inputs = prepare_inputs<double>(data.descriptors, mc);
    Rng init(35);
    auto model = ScnModel<double>::init(mc, inputs, 3, init);
    Mat f = feature_matrix(data.features);
    Eigen::MatrixXi labels = data.labels;
    std::vector<std::uint8_t> mask(24);
    for (std::size_t i = 0; i < 24; ++i) mask[i] = i % 3 != 0;
    NoGradGuard guard;
    const auto pred = forward(model, inputs, {}, NormMode::Infer);
    const auto before = loss(pred, f, labels, mask, LossConfig{}, false);
    int differing = 0;
    for (int trial = 0; trial < 10; ++trial) {
      Mat f2 = f;
      Eigen::MatrixXi l2 = labels;
      for (Index i = 0; i < 24; i += 3) {
        f2.row(i) = random_matrix(1, kPurchaseFeatures, rng, 0, 5);
        for (Index j = 0; j < 3; ++j) l2(i, j) = rng.uniform() < 0.5;
      }
      const auto after = loss(pred, f2, l2, mask, LossConfig{}, false);
      differing += after.total.item() != before.total.item() || after.mae != before.mae || after.sce != before.sce;
    }
    return Outcome{differing == 0, std::to_string(differing) + " of 10 perturbations changed the loss"};
  });

  return c.finish("invariants");
}

// ---------------------------------------------------------------- criterion 4

int criterion_4() {
  Criterion c(4);
  const ExperimentData data = pipeline_data(learnability_spec());
  ExperimentConfig config;
  config.model.cnn.image_size = data.descriptors.layout.image_size;
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult scn = run_scn(data, config);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const DataSplit split = make_split(data.labels, config.train);
  const auto baseline = logistic_baseline(vector_columns(data.descriptors), data.labels, data.companies, split);
  std::printf("  SCN: %d epochs (best %d), %.1f s; logistic L2 per company:", scn.report.epochs_run,
              scn.report.best_epoch, seconds);
  for (double l2 : baseline.chosen_l2) std::printf(" %g", l2);
  std::printf("\n");

  c.check("held-out macro-F1 >= 0.80",
          [&] { return Outcome{scn.metrics.macro_f1 >= 0.80, fmt("%.4f", scn.metrics.macro_f1)}; });
  c.check("held-out feature MAE <= 0.6", [&] { return Outcome{scn.metrics.mae <= 0.6, fmt("%.4f", scn.metrics.mae)}; });
  c.check("within 500 epochs and 10 min", [&] {
    return Outcome{scn.report.epochs_run <= 500 && seconds <= 600,
                   std::to_string(scn.report.epochs_run) + " epochs, " + fmt("%.1f s", seconds)};
  });
  c.check("beats logistic baseline on raw descriptors by >= 0.03", [&] {
    const double gap = scn.metrics.macro_f1 - baseline.metrics.macro_f1;
    return Outcome{gap >= 0.03, fmt("SCN %.4f", scn.metrics.macro_f1) + fmt(" vs logistic %.4f", baseline.metrics.macro_f1) +
                                    fmt(", gap %.4f", gap)};
  });
  return c.finish("end-to-end learnability");
}

// ---------------------------------------------------------------- criterion 5

int criterion_5() {
  Criterion c(5);
  const ExperimentData data = pipeline_data(learnability_spec());
  ExperimentConfig config;
  config.model.cnn.image_size = data.descriptors.layout.image_size;
  const std::vector<double> fractions = {0.13, 0.35, 1.0};
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  const auto table = fraction_experiment(data, config, fractions, seeds);
  double f[3];
  for (std::size_t r = 0; r < 3; ++r) {
    const auto& row = table.rows[r];
    f[r] = row.summary.macro_f1;
    std::printf("  fraction %.2f: macro-F1", row.fraction);
    for (const auto& run : row.runs) std::printf(" %.4f", run.macro_f1);
    std::printf("  mean %.4f sd %.4f, MAE %.4f\n", row.summary.macro_f1, row.summary.sd_macro_f1, row.summary.mae);
  }
  c.check("13% run within 0.15 of the 100% run",
          [&] { return Outcome{f[2] - f[0] <= 0.15, fmt("gap %.4f", f[2] - f[0])}; });
  c.check("13% <= 35% <= 100% within 0.05", [&] {
    return Outcome{f[0] <= f[1] + 0.05 && f[1] <= f[2] + 0.05,
                   fmt("%.4f", f[0]) + fmt(" / %.4f", f[1]) + fmt(" / %.4f", f[2])};
  });
  return c.finish("semi-supervised trend");
}

// ---------------------------------------------------------------- criterion 6

int criterion_6() {
  Criterion c(6);
  const ExperimentData data = pipeline_data(learnability_spec());
  ExperimentConfig config;
  config.model.cnn.image_size = data.descriptors.layout.image_size;
  const auto thresholds = default_thresholds();
  const auto sweep = threshold_sweep(data, config, thresholds);
  std::printf("  threshold  macro-F1     MAE  epochs  initial edges  final edges\n");
  for (const auto& p : sweep.points) {
    std::printf("  %9.2f  %8.4f  %6.4f  %6d  %13ld  %11ld\n", p.threshold, p.macro_f1, p.mae, p.epochs,
                long(p.initial_edges), long(p.final_edges));
  }
  c.check("ten thresholds 0.50 .. 0.95", [&] {
    bool ok = sweep.points.size() == 10;
    for (std::size_t i = 0; ok && i < 10; ++i) ok = std::abs(sweep.points[i].threshold - (0.5 + 0.05 * double(i))) < 1e-12;
    return Outcome{ok, std::to_string(sweep.points.size()) + " points"};
  });
  c.check("edge counts non-increasing in the threshold", [&] {
    int breaks = 0;
    for (std::size_t i = 1; i < sweep.points.size(); ++i) breaks += sweep.points[i].initial_edges > sweep.points[i - 1].initial_edges;
    return Outcome{breaks == 0, std::to_string(breaks) + " increases in the selected-edge count"};
  });
  c.check("0.95 run completes", [&] {
    const auto& last = sweep.points.back();
    return Outcome{last.epochs > 0 && std::isfinite(last.mae) && std::isfinite(last.macro_f1),
                   std::to_string(last.epochs) + " epochs"};
  });
  c.check("MAE range below 0.15", [&] {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& p : sweep.points) lo = std::min(lo, p.mae), hi = std::max(hi, p.mae);
    return Outcome{hi - lo < 0.15, fmt("range %.4f", hi - lo)};
  });
  return c.finish("sweep protocol");
}

// ---------------------------------------------------------------- criterion 7

double quadrature_p(double r, std::size_t n) {
  const double df = double(n) - 2.0;
  const double t = std::abs(r) * std::sqrt(df / (1 - r * r));
  const double norm =
      std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi);
  auto density = [&](double s) { return norm * std::pow(1 + s * s / df, -(df + 1) / 2); };
  return 2 * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                 density, t, std::numeric_limits<double>::infinity(), 20, 1e-14);
}

int criterion_7() {
  Criterion c(7);
  c.check("pearson_p matches t-density quadrature on 50 instances", [&] {
    std::mt19937_64 gen(707);
    std::uniform_int_distribution<int> size(4, 80);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> mix(-1, 1);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = std::size_t(size(gen));
      const double w = mix(gen);
      std::vector<double> x(n), y(n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = z(gen);
        y[i] = w * x[i] + (1 - std::abs(w)) * z(gen);
      }
      const auto r = pearson_p(x, y);
      worst = std::max(worst, std::abs(r.p - quadrature_p(r.r, n)));
    }
    return Outcome{worst <= 1e-9, fmt("max abs difference %.2e", worst)};
  });
  c.check("null data: share of cells with p < 0.05 is 5% +- 3%", [&] {
    SyntheticSpec spec;
    spec.n_consumers = 1000;
    spec.n_companies = 4;
    spec.signal_strength = 0.0;
    spec.image_size = 8;
    spec.seed = 77;
    const ExperimentData data = pipeline_data(spec);
    const auto names = vector_column_names(data.descriptors.layout);
    const auto& fn = purchase_feature_names();
    const std::vector<std::string> fnames(fn.begin(), fn.end());
    const auto tables = correlation_matrix(vector_columns(data.descriptors), names, data.features, fnames,
                                           data.labels, data.companies);
    const double share = significant_fraction(tables.descriptor_p);
    return Outcome{share >= 0.02 && share <= 0.08,
                   fmt("%.4f", share) + " of " + std::to_string(tables.descriptor_p.size()) + " cells"};
  });
  return c.finish("statistics");
}

// ---------------------------------------------------------------- criterion 8

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[entry.path().filename().string()] = ss.str();
  }
  return files;
}

int criterion_8() {
  Criterion c(8);
  const fs::path dir = fs::temp_directory_path() / "scn_acceptance_determinism";
  cli::RunConfig config;
  config.data.dir = dir.string();
  config.gen.n_consumers = 80;
  config.gen.n_companies = 3;
  config.gen.image_size = 32;
  config.gen.seed = 8;
  config.model.cnn.stem_channels = 4;
  config.model.cnn.stage1_branch = 2;
  config.model.cnn.stage2_branch = 3;
  config.model.d_hidden = 8;
  config.model.d_out = 4;
  config.train.max_epochs = 6;
  config.train.patience = 3;
  config.experiment.fractions = {0.35, 1.0};
  config.experiment.seeds = {1, 2};
  config.experiment.thresholds = {0.6, 0.9};
  config.experiment.jobs = 2;
  config.validate();

  auto pipeline = [&] {
    fs::remove_all(dir);
    cli::run_gen(config, {});
    cli::run_features(config);
    cli::run_groups(config);
    cli::run_train(config, {.checkpoint = "", .report = "", .quiet = true});
    cli::run_eval(config, {.checkpoint = (dir / "model.ckpt").string(), .report = "", .table = true});
    cli::run_sweep(config, "");
    cli::run_correlate(config, "");
    return snapshot(dir);
  };
  const auto first = pipeline();
  const auto second = pipeline();
  fs::remove_all(dir);
  c.check("every output byte-identical across two full runs", [&] {
    std::vector<std::string> differing;
    for (const auto& [name, bytes] : first) {
      auto it = second.find(name);
      if (it == second.end() || it->second != bytes) differing.push_back(name);
    }
    std::string detail = std::to_string(first.size()) + " files compared";
    for (const auto& d : differing) detail += ", differs: " + d;
    return Outcome{differing.empty() && first.size() == second.size() && first.size() >= 20, detail};
  });
  return c.finish("determinism");
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Acceptance criteria"};
  int criterion = 0;
  app.add_option("--criterion", criterion, "Criterion 1..8")->required()->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  std::printf("acceptance criterion %d\n", criterion);
  std::fflush(stdout);
  switch (criterion) {
    case 1: return criterion_1();
    case 2: return criterion_2();
    case 3: return criterion_3();
    case 4: return criterion_4();
    case 5: return criterion_5();
    case 6: return criterion_6();
    case 7: return criterion_7();
    default: return criterion_8();
  }
}

#include "scn/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace scn {

const char* name_of(Aspect aspect) {
  switch (aspect) {
    case Aspect::FA: return "fa";
    case Aspect::PDM: return "pdm";
    case Aspect::FD: return "fd";
    case Aspect::FL: return "fl";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (d_hidden < 1 || d_out < 1) throw std::invalid_argument("model: GCN widths must be positive");
  if (!(select_threshold > 0 && select_threshold < 1)) {
    throw std::invalid_argument("model: select threshold must lie in (0, 1)");
  }
  if (!(leaky_slope >= 0 && leaky_slope < 1)) {
    throw std::invalid_argument("model: leaky slope must lie in [0, 1)");
  }
  if (use_images) cnn.validate();
}

void LossConfig::validate() const {
  if (!(alpha >= 0) || !(beta >= 0) || (alpha == 0 && beta == 0)) {
    throw std::invalid_argument("loss: weights must be non-negative and not both zero");
  }
}

namespace {

constexpr Index kFeatures = static_cast<Index>(kPurchaseFeatures);

const Eigen::VectorXf& aspect_values(const DescriptorSet& set, Aspect aspect) {
  switch (aspect) {
    case Aspect::FA: return set.fa;
    case Aspect::PDM: return set.pdm;
    case Aspect::FD: return set.fd;
    case Aspect::FL: return set.fl;
  }
  throw std::logic_error("unknown aspect");
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

template <typename Scalar>
void put_vector(ParameterMap<Scalar>& map, const std::string& name, const VectorX<Scalar>& v) {
  map.emplace(name, Tensor<Scalar>({v.size()}, v));
}

}  // namespace

template <typename Scalar>
ModelInputs<Scalar> prepare_inputs(const DescriptorFile& file, const ModelConfig& config) {
  const Index n = static_cast<Index>(file.sets.size());
  if (n == 0) throw DimensionError("prepare_inputs: no consumers");
  const auto& layout = file.layout;
  if (config.use_images && (static_cast<Index>(layout.image_size) != config.cnn.image_size ||
                            static_cast<Index>(layout.channels) != config.cnn.channels)) {
    throw DimensionError("prepare_inputs: descriptor images are " +
                         std::to_string(layout.channels) + " x " + std::to_string(layout.image_size) +
                         "^2, the CNN expects " + std::to_string(config.cnn.channels) + " x " +
                         std::to_string(config.cnn.image_size) + "^2");
  }
  ModelInputs<Scalar> in;
  for (int a = 0; a < kAspects; ++a) {
    const Aspect aspect = kAllAspects[static_cast<std::size_t>(a)];
    const Index d = aspect_values(file.sets[0], aspect).size();
    MatrixX<Scalar> raw(n, d);
    for (Index i = 0; i < n; ++i) {
      const auto& v = aspect_values(file.sets[static_cast<std::size_t>(i)], aspect);
      if (v.size() != d) {
        throw DimensionError(std::string("prepare_inputs: ") + name_of(aspect) + " of consumer " +
                             file.sets[static_cast<std::size_t>(i)].consumer_id +
                             " has length " + std::to_string(v.size()));
      }
      raw.row(i) = v.transpose().template cast<Scalar>();
    }
    MatrixX<Scalar> normalized = normalize_features(raw);
    in.graphs[static_cast<std::size_t>(a)] =
        build_graph<Scalar>(config.graph_on_normalized ? normalized : raw).tensor();
    in.features[static_cast<std::size_t>(a)] = Tensor<Scalar>::from_matrix(normalized);
  }
  const Index S = layout.image_size, C = layout.channels;
  VectorX<Scalar> pixels(n * layout.image_values());
  for (Index i = 0; i < n; ++i) {
    pixels.segment(i * layout.image_values(), layout.image_values()) =
        file.sets[static_cast<std::size_t>(i)].image.template cast<Scalar>();
  }
  in.images = Tensor<Scalar>({n, C, S, S}, std::move(pixels));
  return in;
}

template <typename Scalar>
ScnModel<Scalar> ScnModel<Scalar>::init(const ModelConfig& config, const ModelInputs<Scalar>& inputs,
                                        Index n_companies, Rng& rng) {
  config.validate();
  if (n_companies < 1) throw std::invalid_argument("model: need at least one company");
  ScnModel m;
  m.config = config;
  m.n_nodes = inputs.n();
  m.n_companies = n_companies;
  // Separate streams so changing one part's size leaves the others' draws alone.
  for (int a = 0; a < kAspects; ++a) {
    Rng sub = rng.fork(10 + static_cast<std::uint64_t>(a));
    auto& unit = m.aspects[static_cast<std::size_t>(a)];
    unit.select = SelectLayer<Scalar>::init(m.n_nodes, static_cast<Scalar>(config.select_threshold), sub);
    unit.gcn = GcnUnit<Scalar>::init(inputs.features[static_cast<std::size_t>(a)].dim(1),
                                     config.d_hidden, config.d_out, sub,
                                     static_cast<Scalar>(config.leaky_slope));
  }
  if (config.use_images) {
    Rng sub = rng.fork(20);
    m.cnn = SemanticCnn<Scalar>::init(config.cnn, sub);
  }
  Rng heads = rng.fork(30);
  const Index width = m.concat_width();
  const Index label_width = config.single_softmax ? n_companies : 2 * n_companies;
  m.wf = Tensor<Scalar>::from_matrix(glorot_uniform<Scalar>(width, kFeatures, heads), true);
  m.bf = Tensor<Scalar>::zeros({kFeatures}, true);
  m.wl = Tensor<Scalar>::from_matrix(glorot_uniform<Scalar>(kFeatures, label_width, heads), true);
  m.bl = Tensor<Scalar>::zeros({label_width}, true);
  return m;
}

template <typename Scalar>
Index ScnModel<Scalar>::concat_width() const {
  return kAspects * config.d_out + (config.use_images ? config.cnn.embedding_dim() : 0);
}

template <typename Scalar>
ParameterMap<Scalar> ScnModel<Scalar>::parameters() const {
  ParameterMap<Scalar> out;
  for (int a = 0; a < kAspects; ++a) {
    const std::string name = name_of(kAllAspects[static_cast<std::size_t>(a)]);
    const auto& unit = aspects[static_cast<std::size_t>(a)];
    out.emplace("select." + name, unit.select.weight);
    out.emplace("gcn." + name + ".w0", unit.gcn.w0);
    out.emplace("gcn." + name + ".w1", unit.gcn.w1);
  }
  if (config.use_images) {
    for (auto& [name, t] : cnn.named_parameters()) out.emplace(name, t);
  }
  out.emplace("head.wf", wf);
  out.emplace("head.bf", bf);
  out.emplace("head.wl", wl);
  out.emplace("head.bl", bl);
  return out;
}

template <typename Scalar>
ParameterMap<Scalar> ScnModel<Scalar>::state() const {
  ParameterMap<Scalar> out = parameters();
  if (config.use_images) {
    put_vector(out, "cnn.block1.bn.mean", cnn.block1.bn.running_mean);
    put_vector(out, "cnn.block1.bn.var", cnn.block1.bn.running_var);
    put_vector(out, "cnn.block2.bn.mean", cnn.block2.bn.running_mean);
    put_vector(out, "cnn.block2.bn.var", cnn.block2.bn.running_var);
  }
  return out;
}

template <typename Scalar>
void ScnModel<Scalar>::load_state(const ParameterMap<Scalar>& archived) {
  ParameterMap<Scalar> live = state();
  if (archived.size() != live.size()) {
    throw DimensionError("checkpoint holds " + std::to_string(archived.size()) +
                         " entries, model expects " + std::to_string(live.size()));
  }
  restore_parameters(archived, live);
  if (config.use_images) {
    cnn.block1.bn.running_mean = live.at("cnn.block1.bn.mean").value();
    cnn.block1.bn.running_var = live.at("cnn.block1.bn.var").value();
    cnn.block2.bn.running_mean = live.at("cnn.block2.bn.mean").value();
    cnn.block2.bn.running_var = live.at("cnn.block2.bn.var").value();
  }
}

template <typename Scalar>
Tensor<Scalar> graph_embeddings(const ScnModel<Scalar>& model, const ModelInputs<Scalar>& inputs) {
  if (inputs.n() != model.n_nodes) {
    throw DimensionError("graph_embeddings: model was built for " + std::to_string(model.n_nodes) +
                         " consumers, inputs have " + std::to_string(inputs.n()));
  }
  std::array<Tensor<Scalar>, kAspects> parts;
  for (std::size_t a = 0; a < kAspects; ++a) {
    const auto& unit = model.aspects[a];
    auto w = select_forward(unit.select, inputs.graphs[a]);
    parts[a] = gcn_unit_forward(unit.gcn, w, inputs.features[a]);
  }
  return concat(std::span<const Tensor<Scalar>>(parts), 1);
}

template <typename Scalar>
MatrixX<Scalar> Prediction<Scalar>::purchase() const {
  const auto lp = log_probs.matrix();
  if (single_softmax) return lp.array().exp().matrix();
  MatrixX<Scalar> out(lp.rows(), lp.cols() / 2);
  for (Index j = 0; j < out.cols(); ++j) out.col(j) = lp.col(2 * j + 1).array().exp().matrix();
  return out;
}

template <typename Scalar>
Prediction<Scalar> predict_heads(const ScnModel<Scalar>& model, const Tensor<Scalar>& graph_rows,
                                 const Tensor<Scalar>& sem) {
  Tensor<Scalar> h = graph_rows;
  if (model.config.use_images) {
    const std::array<Tensor<Scalar>, 2> parts = {graph_rows, sem};
    h = concat(std::span<const Tensor<Scalar>>(parts), 1);
  }
  Prediction<Scalar> p;
  p.single_softmax = model.config.single_softmax;
  p.features = add_row_vector(matmul(h, model.wf), model.bf);
  auto logits = add_row_vector(matmul(p.features, model.wl), model.bl);
  const Index rows = logits.dim(0);
  if (model.config.single_softmax) {
    p.log_probs = log_softmax(logits, 1);
  } else {
    auto pairs = reshape(logits, {rows * model.n_companies, 2});
    p.log_probs = reshape(log_softmax(pairs, 1), {rows, 2 * model.n_companies});
  }
  return p;
}

template <typename Scalar>
Prediction<Scalar> forward(ScnModel<Scalar>& model, const ModelInputs<Scalar>& inputs,
                           std::span<const Index> rows, NormMode mode, Index batch_size) {
  std::vector<Index> owned;
  if (rows.empty()) {
    owned = all_rows(inputs.n());
    rows = owned;
  }
  if (batch_size < 1) throw std::invalid_argument("forward: batch size must be positive");
  auto graph = graph_embeddings(model, inputs);
  auto graph_rows = index_rows(graph, rows);
  Tensor<Scalar> sem;
  if (model.config.use_images) {
    std::vector<Tensor<Scalar>> chunks;
    const Index n = static_cast<Index>(rows.size());
    for (Index start = 0; start < n;) {
      Index stop = std::min(n, start + batch_size);
      // A trailing single image cannot be batch-normalized in training mode.
      if (n - stop == 1) ++stop;
      auto images = index_rows(inputs.images, rows.subspan(static_cast<std::size_t>(start),
                                                           static_cast<std::size_t>(stop - start)));
      chunks.push_back(semanticity(model.cnn, images, mode));
      start = stop;
    }
    sem = chunks.size() == 1 ? chunks[0] : concat(std::span<const Tensor<Scalar>>(chunks), 0);
  }
  return predict_heads(model, graph_rows, sem);
}

template <typename Scalar>
LossTerms<Scalar> loss(const Prediction<Scalar>& pred, const MatrixX<Scalar>& features_true,
                       const Eigen::MatrixXi& labels_true, std::span<const std::uint8_t> mask,
                       const LossConfig& config, bool single_softmax, double normalizer) {
  config.validate();
  const Index rows = pred.features.dim(0);
  const Index k = labels_true.cols();
  if (features_true.rows() != rows || features_true.cols() != pred.features.dim(1) ||
      labels_true.rows() != rows || static_cast<Index>(mask.size()) != rows ||
      pred.log_probs.dim(1) != (single_softmax ? k : 2 * k)) {
    throw DimensionError("loss: prediction " + to_string(pred.features.shape()) + " / " +
                         to_string(pred.log_probs.shape()) + " does not match targets " +
                         std::to_string(features_true.rows()) + " x " +
                         std::to_string(features_true.cols()) + ", labels " +
                         std::to_string(labels_true.rows()) + " x " + std::to_string(k) +
                         ", mask " + std::to_string(mask.size()));
  }
  std::vector<Index> picked;
  for (Index i = 0; i < rows; ++i) {
    if (mask[static_cast<std::size_t>(i)]) picked.push_back(i);
  }
  if (picked.empty()) throw std::invalid_argument("loss: the mask selects no consumer");
  const Index n_l = static_cast<Index>(picked.size());
  const Scalar norm = static_cast<Scalar>(normalizer > 0 ? normalizer : static_cast<double>(n_l));

  MatrixX<Scalar> f_target(n_l, features_true.cols());
  // Flat positions of the true-class log-probabilities. Gathering them rather
  // than multiplying by a one-hot target keeps -inf entries of other classes
  // out of the sum.
  const Index width = pred.log_probs.dim(1);
  std::vector<Index> hits;
  for (Index r = 0; r < n_l; ++r) {
    const Index i = picked[static_cast<std::size_t>(r)];
    f_target.row(r) = features_true.row(i);
    for (Index j = 0; j < k; ++j) {
      const bool bought = labels_true(i, j) != 0;
      if (single_softmax) {
        if (bought) hits.push_back(r * width + j);
      } else {
        hits.push_back(r * width + 2 * j + (bought ? 1 : 0));
      }
    }
  }
  auto f = index_rows(pred.features, picked);
  auto lp = reshape(index_rows(pred.log_probs, picked), {n_l * width});
  const Scalar m = static_cast<Scalar>(features_true.cols());
  auto mae = scale(sum(abs(sub(f, Tensor<Scalar>::from_matrix(f_target)))), Scalar(1) / (m * norm));
  auto sce = hits.empty() ? Tensor<Scalar>::scalar(Scalar(0))
                          : scale(sum(index_rows(lp, hits)), Scalar(-1) / (static_cast<Scalar>(k) * norm));
  LossTerms<Scalar> out;
  out.mae = static_cast<double>(mae.item());
  out.sce = static_cast<double>(sce.item());
  if (config.alpha == 0) {
    out.total = scale(sce, static_cast<Scalar>(config.beta));
  } else if (config.beta == 0) {
    out.total = scale(mae, static_cast<Scalar>(config.alpha));
  } else {
    out.total = add(scale(mae, static_cast<Scalar>(config.alpha)),
                    scale(sce, static_cast<Scalar>(config.beta)));
  }
  return out;
}

std::vector<std::vector<Index>> predict_topn(const Eigen::MatrixXd& purchase, Index n_top) {
  const Index k = purchase.cols();
  if (n_top < 1 || n_top > k) {
    throw std::invalid_argument("predict_topn: n_top " + std::to_string(n_top) +
                                " outside 1.." + std::to_string(k));
  }
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(purchase.rows()));
  for (Index i = 0; i < purchase.rows(); ++i) {
    std::vector<Index> order = all_rows(k);
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return purchase(i, a) > purchase(i, b); });
    order.resize(static_cast<std::size_t>(n_top));
    out[static_cast<std::size_t>(i)] = std::move(order);
  }
  return out;
}

Eigen::MatrixXi decide(const Eigen::MatrixXd& purchase, bool single_softmax) {
  const double cut = single_softmax ? 1.0 / static_cast<double>(purchase.cols()) : 0.5;
  return (purchase.array() >= cut).cast<int>();
}

#define SCN_INSTANTIATE(S)                                                                        \
  template ModelInputs<S> prepare_inputs<S>(const DescriptorFile&, const ModelConfig&);          \
  template struct ScnModel<S>;                                                                   \
  template struct Prediction<S>;                                                                 \
  template Tensor<S> graph_embeddings<S>(const ScnModel<S>&, const ModelInputs<S>&);             \
  template Prediction<S> predict_heads<S>(const ScnModel<S>&, const Tensor<S>&, const Tensor<S>&); \
  template Prediction<S> forward<S>(ScnModel<S>&, const ModelInputs<S>&, std::span<const Index>, \
                                    NormMode, Index);                                            \
  template LossTerms<S> loss<S>(const Prediction<S>&, const MatrixX<S>&, const Eigen::MatrixXi&, \
                                std::span<const std::uint8_t>, const LossConfig&, bool, double);

SCN_INSTANTIATE(float)
SCN_INSTANTIATE(double)

#undef SCN_INSTANTIATE

}  // namespace scn

#include "scn/numerics/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace scn {

namespace {
thread_local bool t_grad_enabled = true;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

template <typename Scalar>
Tensor<Scalar>::Tensor() : Tensor(Shape{0}, VectorX<Scalar>()) {}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, VectorX<Scalar> values, bool requires_grad)
    : node_(std::make_shared<detail::Node<Scalar>>()) {
  for (Index e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " holds " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad = VectorX<Scalar>::Zero(node_->value.size());
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Shape shape, bool requires_grad) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), VectorX<Scalar>::Zero(n), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value, bool requires_grad) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), VectorX<Scalar>::Constant(n, value), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_matrix(const MatrixX<Scalar>& m, bool requires_grad) {
  VectorX<Scalar> v(m.size());
  MatrixMap<Scalar>(v.data(), m.rows(), m.cols()) = m;
  return Tensor({m.rows(), m.cols()}, std::move(v), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar value, bool requires_grad) {
  return Tensor(Shape{}, VectorX<Scalar>::Constant(1, value), requires_grad);
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
  if (node_->requires_grad) node_->grad.setZero(node_->value.size());
  node_->has_grad = false;
}

template <typename Scalar>
ConstMatrixMap<Scalar> Tensor<Scalar>::matrix() const {
  const Index rows = rank() == 0 ? 1 : dim(0);
  const Index cols = rows == 0 ? 0 : size() / rows;
  return ConstMatrixMap<Scalar>(node_->value.data(), rows, cols);
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (size() != 1) {
    throw DimensionError("item() on tensor of shape " + to_string(shape()));
  }
  return node_->value[0];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(std::initializer_list<Index> index) const {
  if (index.size() != rank()) throw DimensionError("index rank mismatch for " + to_string(shape()));
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= dim(axis)) throw DimensionError("index out of range for " + to_string(shape()));
    flat = flat * dim(axis) + i;
    ++axis;
  }
  return node_->value[flat];
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach(bool requires_grad) const {
  return Tensor(shape(), value(), requires_grad);
}

namespace {

template <typename Scalar>
std::vector<detail::Node<Scalar>*> topological_order(detail::Node<Scalar>* root) {
  // Iterative post-order DFS over nodes that carry gradients.
  std::vector<detail::Node<Scalar>*> order;
  std::unordered_set<detail::Node<Scalar>*> visited;
  std::vector<std::pair<detail::Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<Scalar>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

template <typename Scalar>
void run_backward(detail::Node<Scalar>* root, const VectorX<Scalar>& seed,
                  BackwardOptions options) {
  if (!root->requires_grad) {
    throw std::logic_error("backward: root does not depend on any tensor requiring grad");
  }
  if (seed.size() != root->value.size()) {
    throw DimensionError("backward: seed size does not match root shape " + to_string(root->shape));
  }
  auto order = topological_order(root);
  for (auto* node : order) {
    if (node->is_leaf()) {
      if (node->has_grad && !options.accumulate) {
        throw std::logic_error(
            "backward: gradients from a previous pass are still present; "
            "zero them or request accumulation");
      }
      if (!node->has_grad) node->grad.setZero(node->value.size());
    } else {
      if (node->has_grad && !options.accumulate) {
        throw std::logic_error("backward: this graph was already differentiated");
      }
      node->grad.setZero(node->value.size());
    }
  }
  root->grad += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<Scalar>* node = *it;
    if (!node->is_leaf() && node->backward) node->backward(*node);
    node->has_grad = true;
  }
}

}  // namespace

template <typename Scalar>
void backward(const Tensor<Scalar>& root, BackwardOptions options) {
  if (root.size() != 1) {
    throw DimensionError("backward: loss must be a scalar, got shape " + to_string(root.shape()));
  }
  run_backward<Scalar>(root.node().get(), VectorX<Scalar>::Ones(1), options);
}

template <typename Scalar>
void backward(const Tensor<Scalar>& root, const VectorX<Scalar>& seed, BackwardOptions options) {
  run_backward(root.node().get(), seed, options);
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, VectorX<Scalar> value,
                           std::vector<Tensor<Scalar>> parents,
                           std::function<void(Node<Scalar>&)> backward_fn, const char* op) {
  Tensor<Scalar> out(std::move(shape), std::move(value));
  auto& node = *out.node();
  node.op = op;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  node.requires_grad = true;
  node.parents.reserve(parents.size());
  for (const auto& p : parents) node.parents.push_back(p.node());
  node.backward = std::move(backward_fn);
  return out;
}

}  // namespace detail

#define SCN_INSTANTIATE(S)                                                              \
  template class Tensor<S>;                                                             \
  template void backward<S>(const Tensor<S>&, BackwardOptions);                         \
  template void backward<S>(const Tensor<S>&, const VectorX<S>&, BackwardOptions);      \
  template Tensor<S> detail::make_result<S>(Shape, VectorX<S>, std::vector<Tensor<S>>,  \
                                            std::function<void(detail::Node<S>&)>,      \
                                            const char*);

SCN_INSTANTIATE(float)
SCN_INSTANTIATE(double)

#undef SCN_INSTANTIATE

}  // namespace scn

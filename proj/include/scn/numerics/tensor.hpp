#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace scn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Tensors are stored row-major, so matrices viewed over tensor storage are
// row-major too.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<MatrixX<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const MatrixX<Scalar>>;

/// Raised whenever operand extents are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);
Index numel(const Shape& shape);

namespace detail {

template <typename Scalar>
struct Node {
  Shape shape;
  VectorX<Scalar> value;
  VectorX<Scalar> grad;
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  bool is_leaf() const { return parents.empty(); }
};

}  // namespace detail

/// Dense row-major tensor with reverse-mode gradient tracking.
///
/// Copies share the underlying node, so a parameter held by a model and the
/// same parameter handed to an optimizer refer to one buffer.
template <typename Scalar>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

  Tensor();
  Tensor(Shape shape, VectorX<Scalar> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor from_matrix(const MatrixX<Scalar>& m, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  Index size() const { return node_->value.size(); }

  const VectorX<Scalar>& value() const { return node_->value; }
  // Writable access for initializers and optimizers; never used inside ops.
  VectorX<Scalar>& mutable_value() { return node_->value; }
  const VectorX<Scalar>& grad() const { return node_->grad; }
  VectorX<Scalar>& mutable_grad() { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad; }
  void zero_grad();

  /// Matrix view: first extent as rows, remaining extents flattened as columns.
  ConstMatrixMap<Scalar> matrix() const;
  Scalar item() const;
  Scalar at(std::initializer_list<Index> index) const;

  /// A new leaf holding a copy of the values and no history.
  Tensor detach(bool requires_grad = false) const;

  const NodePtr& node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

struct BackwardOptions {
  // Leaf gradients left over from an earlier pass are summed into instead of
  // rejected.
  bool accumulate = false;
};

/// Backpropagates from a scalar root.
template <typename Scalar>
void backward(const Tensor<Scalar>& root, BackwardOptions options = {});

/// Backpropagates from an arbitrary root seeded with d(loss)/d(root).
template <typename Scalar>
void backward(const Tensor<Scalar>& root, const VectorX<Scalar>& seed,
              BackwardOptions options = {});

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

// Creates the result node of an op. History is recorded only when grad mode
// is on and some parent requires a gradient.
template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, VectorX<Scalar> value,
                           std::vector<Tensor<Scalar>> parents,
                           std::function<void(Node<Scalar>&)> backward_fn,
                           const char* op);

}  // namespace detail

}  // namespace scn

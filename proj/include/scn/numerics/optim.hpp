#pragma once

#include "scn/numerics/tensor.hpp"

#include <vector>

namespace scn {

/// Plain gradient descent: p -= lr * grad for every parameter.
template <typename Scalar>
void sgd_step(std::vector<Tensor<Scalar>>& params, Scalar lr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

/// Adam with bias correction. Moment buffers are keyed by parameter position,
/// so the parameter list must keep its order between steps.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Tensor<Scalar>> params, AdamConfig config = {});

  void step();
  void zero_grad();

  long steps_taken() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<VectorX<Scalar>>& first_moments() const { return m_; }
  const std::vector<VectorX<Scalar>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor<Scalar>> params_;
  AdamConfig config_;
  std::vector<VectorX<Scalar>> m_;
  std::vector<VectorX<Scalar>> v_;
  long step_count_ = 0;
};

}  // namespace scn

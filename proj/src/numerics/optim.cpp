#include "scn/numerics/optim.hpp"

#include <cmath>

namespace scn {

template <typename Scalar>
void sgd_step(std::vector<Tensor<Scalar>>& params, Scalar lr) {
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    if (p.grad().size() != p.size()) throw DimensionError("sgd_step: gradient shape mismatch");
    p.mutable_value() -= lr * p.grad();
  }
}

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<Tensor<Scalar>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.push_back(VectorX<Scalar>::Zero(p.size()));
    v_.push_back(VectorX<Scalar>::Zero(p.size()));
  }
}

template <typename Scalar>
void Adam<Scalar>::step() {
  ++step_count_;
  const Scalar b1 = static_cast<Scalar>(config_.beta1);
  const Scalar b2 = static_cast<Scalar>(config_.beta2);
  const Scalar lr = static_cast<Scalar>(config_.lr);
  const Scalar eps = static_cast<Scalar>(config_.eps);
  const Scalar wd = static_cast<Scalar>(config_.weight_decay);
  const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(config_.beta1, step_count_));
  const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(config_.beta2, step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    VectorX<Scalar> g = p.grad();
    if (wd != Scalar(0)) g += wd * p.value();
    m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
    v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
    p.mutable_value().array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

template <typename Scalar>
void Adam<Scalar>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template void sgd_step<float>(std::vector<Tensor<float>>&, float);
template void sgd_step<double>(std::vector<Tensor<double>>&, double);
template class Adam<float>;
template class Adam<double>;

}  // namespace scn

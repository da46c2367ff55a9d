#include "defend/autodiff/adam.hpp"

#include <cmath>

#include "defend/errors.hpp"

namespace defend::ad {

Adam::Adam(std::vector<Tensor*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw PreconditionError("adam: learning_rate must be positive");
  if (!(config_.beta1 > 0.0 && config_.beta1 < 1.0) || !(config_.beta2 > 0.0 && config_.beta2 < 1.0)) {
    throw PreconditionError("adam: betas must lie in (0, 1)");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor* p : params_) {
    m_.emplace_back(p->shape(), 0.0);
    v_.emplace_back(p->shape(), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    if (p.shape() != m_[k].shape()) {
      throw DimensionError("adam: parameter " + std::to_string(k) + " changed shape to " +
                           p.shape().str());
    }
    const bool has = p.has_grad();
    if (has && p.grad().size() != p.size()) {
      throw DimensionError("adam: gradient size mismatch for parameter " + std::to_string(k));
    }
    auto m = m_[k].data();
    auto v = v_[k].data();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has ? p.grad()[i] : 0.0;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      w[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
}

}  // namespace defend::ad

#pragma once

#include <cstdint>
#include <vector>

#include "defend/autodiff/tensor.hpp"

namespace defend::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameter tensors. Moment
// buffers are created on construction and must keep matching the
// parameters' shapes.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamConfig config = {});

  // One update from the gradients currently stored in the parameters.
  // A parameter without a gradient buffer is treated as having zero gradient.
  void step();

  std::uint64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }

 private:
  std::vector<Tensor*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_count_ = 0;
};

}  // namespace defend::ad

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "duocast/autograd.hpp"

namespace duocast {

struct AdamConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient norm clip; 0 disables
};

// Adam over the unfrozen tensors of a ParamSet. Moments are keyed by
// parameter id so the state survives checkpointing.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  AdamConfig& config() { return cfg_; }
  // Applies one update from the accumulated gradients, then zeroes them.
  // Returns the pre-clip global gradient norm.
  double step(ParamSet<float>& params);

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::map<std::string, Tensor<float>>& first_moments() { return m_; }
  std::map<std::string, Tensor<float>>& second_moments() { return v_; }
  const std::map<std::string, Tensor<float>>& first_moments() const { return m_; }
  const std::map<std::string, Tensor<float>>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor<float>> m_;
  std::map<std::string, Tensor<float>> v_;
};

}  // namespace duocast

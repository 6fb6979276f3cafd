#pragma once

#include <string>
#include <vector>

#include "duocast/autograd.hpp"
#include "duocast/ops.hpp"
#include "duocast/rng.hpp"

namespace duocast {

// Gaussian init scaled by 1/sqrt(fan_in) (times gain).
Tensor<float> scaled_normal(const Shape& shape, int fan_in, Rng& rng, double gain = 1.0);

template <class Real>
Var<Real> param_var(Tape<Real>& tape, ParamSet<Real>& params, const std::string& id) {
  return tape.param(params[id]);
}

// Two-layer MLP on a sinusoidal timestep embedding; returns [1, dim].
template <class Real>
Var<Real> time_features(Tape<Real>& tape, ParamSet<Real>& params, const std::string& prefix, int t, int dim);
void init_time_features(ParamSet<float>& params, const std::string& prefix, int dim, Rng& rng);

// Projects time features to a per-channel bias and adds it to x [N, C, H, W].
template <class Real>
Var<Real> add_time_bias(Tape<Real>& tape, ParamSet<Real>& params, const std::string& id, Var<Real> x,
                        Var<Real> tfeat);
void init_time_bias(ParamSet<float>& params, const std::string& id, int dim, int channels, Rng& rng);

struct UNetConfig {
  int in_channels = 1;
  int out_channels = 1;
  int base = 16;
  int levels = 2;
  int time_dim = 0;  // 0 disables timestep conditioning
};

// Convolutional encoder-decoder with average-pool downsampling,
// nearest-neighbour upsampling and concatenated skips; SiLU activations,
// 3x3 kernels and a zero-initialized output convolution.
class UNet {
 public:
  UNet() = default;
  UNet(std::string prefix, UNetConfig cfg) : prefix_(std::move(prefix)), cfg_(cfg) {}

  const UNetConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }
  int width(int level) const { return cfg_.base << level; }

  void init(ParamSet<float>& params, Rng& rng) const;

  // x: [1, in_channels, H, W] with H, W divisible by 2^levels; t ignored
  // when time_dim == 0.
  template <class Real>
  Var<Real> forward(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> x, int t = 0) const;

  // Ids of the convolutions that act at full resolution, input to output.
  std::vector<std::string> full_resolution_kernels() const;

 private:
  std::string id(const std::string& name) const { return prefix_ + "/" + name; }
  std::string prefix_;
  UNetConfig cfg_;
};

}  // namespace duocast

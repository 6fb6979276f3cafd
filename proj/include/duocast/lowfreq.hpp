#pragma once

#include <vector>

#include "duocast/diffusion.hpp"
#include "duocast/field.hpp"
#include "duocast/nn.hpp"
#include "duocast/spectral.hpp"

namespace duocast {

struct LowConfig {
  int frames = 5;
  int height = 32;
  int width = 32;
  int pred_base = 16;
  int den_base = 16;
  int levels = 2;
  int time_dim = 32;
  int airmass_mult = 2;  // feature channels per air-mass path
  int conv1_kernel = 7;
  int conv2_kernel = 3;
  int conv2_dilation = 3;
  int conv3_temporal = 3;
  int attn_kernel = 3;
  double theta_int = 0.6;
};

template <class Real>
struct AirMass {
  Var<Real> bar;   // [S, m, H, W] from the base forecast
  Var<Real> dag;   // [S, m, H, W] from the high-intensity mask
  Var<Real> both;  // [S, 2m, H, W]
};

template <class Real>
struct FrontFeatures {
  Var<Real> f;                    // [S, 2m, H, W]
  std::vector<Var<Real>> weights;  // per frame, [HW, HW]
};

template <class Real>
struct LowConditioning {
  Var<Real> x;     // [S, 1, H, W]
  Var<Real> ybar;  // [S, 1, H, W]
  Var<Real> ydag;
  AirMass<Real> air;
  FrontFeatures<Real> front;
};

// Base predictor, threshold operator, air-mass encoder, front attention and
// the convolutional noise predictor of the low-frequency branch. All
// parameters live under "low/".
class LowBranch {
 public:
  explicit LowBranch(LowConfig cfg);

  const LowConfig& config() const { return cfg_; }
  void init(ParamSet<float>& params, Rng& rng) const;

  template <class Real>
  Var<Real> base_predict(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> x) const;
  template <class Real>
  AirMass<Real> airmass_encode(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> ybar, Var<Real> ydag) const;
  template <class Real>
  FrontFeatures<Real> front_temporal(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> a) const;
  template <class Real>
  LowConditioning<Real> condition(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> x) const;
  // Noise estimate for yt [S, 1, H, W] given the conditioning inputs X, the
  // base forecast, air-mass features A and front features F (all on the
  // same tape).
  template <class Real>
  Var<Real> denoise(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> yt, int t, Var<Real> x, Var<Real> ybar,
                    Var<Real> a, Var<Real> f) const;
  template <class Real>
  Var<Real> denoise(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> yt, int t,
                    const LowConditioning<Real>& cond) const {
    return denoise(tape, params, yt, t, cond.x, cond.ybar, cond.air.both, cond.front.f);
  }

  // lambda1 * L_P + lambda2 * L_low for one event with a fixed timestep and
  // noise. target is the diffusion-space clean state, a constant on the tape
  // (see low_residual_target).
  template <class Real>
  Var<Real> joint_loss(Tape<Real>& tape, ParamSet<Real>& params, const Tensor<Real>& x, const Tensor<Real>& y,
                       const Tensor<Real>& target, int t, const Tensor<Real>& noise, const NoiseSchedule& sched,
                       double lambda1, double lambda2) const;
  // low_residual_target against the current base forecast, without gradient.
  template <class Real>
  Tensor<Real> diffusion_target(ParamSet<Real>& params, const Tensor<Real>& x, const Tensor<Real>& y_low,
                                const SpectralMask& mask) const;

  // Kernel ids of the two air-mass paths (Conv I, Conv II), in order.
  std::vector<std::string> airmass_kernels(const std::string& path) const;
  const UNet& predictor() const { return predictor_; }
  const UNet& denoiser() const { return denoiser_; }

 private:
  LowConfig cfg_;
  UNet predictor_;
  UNet denoiser_;
  std::vector<int> kv_order_;
};

// Value-preserving mask: keeps entries >= theta, zeroes the rest.
SequenceField threshold_high(const SequenceField& ybar, double theta);
double predictor_loss(const SequenceField& ybar, const SequenceField& y);

struct LowForecast {
  SequenceField base;       // predictor output
  SequenceField raw;        // sampled field before the band projection
  SequenceField projected;  // P_low(raw), the branch output
};

LowForecast lowfreq_forecast(const LowBranch& branch, ParamSet<float>& params, const SequenceField& x,
                             const NoiseSchedule& sched, const SpectralMask& mask, Rng& rng);
SequenceField base_forecast(const LowBranch& branch, ParamSet<float>& params, const SequenceField& x);

// Diffusion-space encoding of the low band: s * (P_low(Y) - P_low(Ybar)),
// and its inverse.
constexpr double kLowResidualScale = 4.0;
template <class Real>
Tensor<Real> low_residual_target(const Tensor<Real>& y_low, const Tensor<Real>& ybar, const SpectralMask& mask);
SequenceField low_from_residual(const Tensor<float>& sample, const SequenceField& ybar, const SpectralMask& mask);

}  // namespace duocast

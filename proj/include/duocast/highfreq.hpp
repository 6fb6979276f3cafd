#pragma once

#include <string>

#include "duocast/diffusion.hpp"
#include "duocast/field.hpp"
#include "duocast/nn.hpp"
#include "duocast/spectral.hpp"

namespace duocast {

struct HighConfig {
  int frames = 5;
  int height = 32;
  int width = 32;
  int latent_channels = 8;
  int ae_width = 32;
  bool ae_bias = true;
  int model_dim = 64;
  int blocks = 2;
  int time_dim = 32;
};

// Latents of S frames, [S, latent_channels, H/4, W/4], plus the scale that
// maps them to roughly unit variance for diffusion.
struct LatentConditioning {
  Tensor<float> x;       // encode(X)
  Tensor<float> low;     // encode(Y_low estimate)
  Tensor<float> x_high;  // encode(P_high X)
  Tensor<float> base;    // encode(P_high Ybar), high band of the base forecast
};

// Autoencoder (parameters under "ae/") and latent attention noise predictor
// (parameters under "high/").
class HighBranch {
 public:
  static constexpr int kDown = 4;

  explicit HighBranch(HighConfig cfg);
  const HighConfig& config() const { return cfg_; }
  int latent_height() const { return cfg_.height / kDown; }
  int latent_width() const { return cfg_.width / kDown; }
  Shape latent_shape() const { return {cfg_.frames, cfg_.latent_channels, latent_height(), latent_width()}; }

  void init_autoencoder(ParamSet<float>& params, Rng& rng) const;
  void init_denoiser(ParamSet<float>& params, Rng& rng) const;

  // frames [N, 1, H, W] -> [N, latent_channels, H/4, W/4] and back.
  template <class Real>
  Var<Real> encode(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> frames) const;
  template <class Real>
  Var<Real> decode(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> z) const;

  // One residual block: self-attention over latent tokens, then a pointwise
  // two-layer mixer. h is [1, D, h, w].
  template <class Real>
  Var<Real> attention_block(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> h, int block) const;

  // Noise estimate for zt [S, C, h, w]; cx, clow, chigh, cbase are the
  // scaled conditioning latents (same shape as zt).
  template <class Real>
  Var<Real> denoise(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> zt, int t, Var<Real> cx, Var<Real> clow,
                    Var<Real> chigh, Var<Real> cbase) const;

  // Reconstruction MSE of high-band frames [N, 1, H, W].
  template <class Real>
  Var<Real> reconstruction_loss(Tape<Real>& tape, ParamSet<Real>& params, const Tensor<Real>& frames) const;

  // lambda3 * L_high with the encoder on the tape: targets and conditioning
  // are encoded from pixel space, so unfrozen autoencoder parameters also
  // receive gradient.
  template <class Real>
  Var<Real> loss(Tape<Real>& tape, ParamSet<Real>& params, const Tensor<Real>& x, const Tensor<Real>& x_high,
                 const Tensor<Real>& y_low, const Tensor<Real>& ybar_high, const Tensor<Real>& y_high,
                 double latent_scale, int t,
                 const Tensor<Real>& noise, const NoiseSchedule& sched, double lambda3) const;

  // Fixed sinusoidal token encodings, [1, D, h, w].
  template <class Real>
  Tensor<Real> positional_encoding() const;

 private:
  HighConfig cfg_;
};

// Latents (unscaled) of a sequence under the current autoencoder.
Tensor<float> encode_sequence(const HighBranch& branch, ParamSet<float>& params, const SequenceField& seq);
SequenceField decode_sequence(const HighBranch& branch, ParamSet<float>& params, const Tensor<float>& z);

LatentConditioning high_conditioning(const HighBranch& branch, ParamSet<float>& params, const SequenceField& x,
                                     const SequenceField& y_low, const SequenceField& ybar, const SpectralMask& mask,
                                     double latent_scale);

struct HighForecast {
  SequenceField decoded;    // decoder output before the band projection
  SequenceField projected;  // P_high(decoded), the branch output
};

HighForecast highfreq_forecast(const HighBranch& branch, ParamSet<float>& params, const SequenceField& x,
                               const SequenceField& y_low, const SequenceField& ybar, const NoiseSchedule& sched,
                               const SpectralMask& mask, double latent_scale, Rng& rng);

// clamp(low + high, 0, 1).
SequenceField combine_forecast(const SequenceField& low, const SequenceField& high);

}  // namespace duocast

#pragma once

#include <functional>
#include <vector>

#include "duocast/autograd.hpp"
#include "duocast/field.hpp"
#include "duocast/rng.hpp"

namespace duocast {

// Forward-process variances; index t - 1 holds step t for t = 1..T.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
  double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
  double alpha_bar_at(int t) const { return alpha_bar[static_cast<std::size_t>(t - 1)]; }
  // Posterior variance of the ancestral step t -> t-1 (0 at t = 1).
  double sigma2_at(int t) const;
};

// Linear beta interpolation from beta_start to beta_end.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

// sqrt(abar_t) y0 + sqrt(1 - abar_t) noise.
SequenceField q_sample(const SequenceField& y0, int t, const SequenceField& noise, const NoiseSchedule& sched);
template <class Real>
Tensor<Real> q_sample(const Tensor<Real>& y0, int t, const Tensor<Real>& noise, const NoiseSchedule& sched);

// Noise predictor on a tape: (tape, noised state, t) -> noise estimate of the
// same shape. Conditioning is captured by the closure.
template <class Real>
using DenoiserFn = std::function<Var<Real>(Tape<Real>&, Var<Real>, int)>;

// mse(noise, model(q_sample(y0, t, noise), t)) for a fixed t and noise.
template <class Real>
Var<Real> denoise_loss_at(Tape<Real>& tape, const DenoiserFn<Real>& model, const Tensor<Real>& y0, int t,
                          const Tensor<Real>& noise, const NoiseSchedule& sched);

// Same with t ~ U{1..T} and standard normal noise drawn from rng.
template <class Real>
Var<Real> denoise_loss(Tape<Real>& tape, const DenoiserFn<Real>& model, const Tensor<Real>& y0,
                       const NoiseSchedule& sched, Rng& rng);

template <class Real>
Tensor<Real> normal_tensor(const Shape& shape, Rng& rng);

// Inference-time noise predictor: (state, t) -> noise estimate.
using SampleModel = std::function<Tensor<float>(const Tensor<float>&, int)>;

// Ancestral sampler starting from N(0, I) of the given shape. clip > 0 clamps
// the clean-state estimate of every step to [-clip, clip].
Tensor<float> ddpm_sample(const SampleModel& model, const NoiseSchedule& sched, const Shape& shape, Rng& rng,
                          double clip = 0.0);

// Same recursion from a supplied initial state and per-step noises
// (z[t - 1] is used at step t; z[0] is ignored).
Tensor<float> ddpm_sample_from(const SampleModel& model, const NoiseSchedule& sched, Tensor<float> y_T,
                               const std::vector<Tensor<float>>& z, double clip = 0.0);

// Sinusoidal embedding of a timestep: [sin(t w_i), cos(t w_i)], w_i = 10000^(-i / (dim/2)).
std::vector<double> timestep_embedding(int t, int dim);

}  // namespace duocast

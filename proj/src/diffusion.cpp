#include "duocast/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "duocast/ops.hpp"

namespace duocast {

double NoiseSchedule::sigma2_at(int t) const {
  if (t <= 1) return 0.0;
  return beta_at(t) * (1.0 - alpha_bar_at(t - 1)) / (1.0 - alpha_bar_at(t));
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  require(T >= 1, "schedule needs T >= 1, got " + std::to_string(T));
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "schedule needs 0 < beta_start <= beta_end < 1, got [" + std::to_string(beta_start) + ", " +
              std::to_string(beta_end) + "]");
  NoiseSchedule s;
  s.T = T;
  double abar = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double b = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    abar *= 1.0 - b;
    s.alpha_bar.push_back(abar);
  }
  return s;
}

namespace {
void check_t(int t, const NoiseSchedule& sched) {
  require(t >= 1 && t <= sched.T, "timestep " + std::to_string(t) + " outside [1, " + std::to_string(sched.T) + "]");
}
}  // namespace

SequenceField q_sample(const SequenceField& y0, int t, const SequenceField& noise, const NoiseSchedule& sched) {
  check_t(t, sched);
  require(y0.same_shape(noise), "q_sample: state and noise shapes differ");
  const double a = std::sqrt(sched.alpha_bar_at(t)), b = std::sqrt(1.0 - sched.alpha_bar_at(t));
  return scaled(y0, a) + scaled(noise, b);
}

template <class Real>
Tensor<Real> q_sample(const Tensor<Real>& y0, int t, const Tensor<Real>& noise, const NoiseSchedule& sched) {
  check_t(t, sched);
  require(y0.shape() == noise.shape(), "q_sample: state and noise shapes differ");
  const Real a = static_cast<Real>(std::sqrt(sched.alpha_bar_at(t)));
  const Real b = static_cast<Real>(std::sqrt(1.0 - sched.alpha_bar_at(t)));
  Tensor<Real> out(y0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * y0[i] + b * noise[i];
  return out;
}

template <class Real>
Var<Real> denoise_loss_at(Tape<Real>& tape, const DenoiserFn<Real>& model, const Tensor<Real>& y0, int t,
                          const Tensor<Real>& noise, const NoiseSchedule& sched) {
  Var<Real> yt = tape.constant(q_sample(y0, t, noise, sched));
  Var<Real> pred = model(tape, yt, t);
  require(pred.shape() == noise.shape(), "denoiser output shape " + shape_str(pred.shape()) +
                                             " differs from noise shape " + shape_str(noise.shape()));
  for (Real v : pred.value().values())
    if (!std::isfinite(static_cast<double>(v))) throw DiagnosticError("denoiser produced a non-finite output");
  return mse(pred, tape.constant(noise));
}

template <class Real>
Tensor<Real> normal_tensor(const Shape& shape, Rng& rng) {
  Tensor<Real> z(shape);
  for (auto& v : z.values()) v = static_cast<Real>(rng.normal());
  return z;
}

template <class Real>
Var<Real> denoise_loss(Tape<Real>& tape, const DenoiserFn<Real>& model, const Tensor<Real>& y0,
                       const NoiseSchedule& sched, Rng& rng) {
  const int t = rng.uniform_int(1, sched.T);
  return denoise_loss_at(tape, model, y0, t, normal_tensor<Real>(y0.shape(), rng), sched);
}

namespace {

// One ancestral step t -> t-1 before the noise term. With clip > 0 the clean
// estimate is clamped to [-clip, clip] and the posterior mean is rebuilt from it.
void ancestral_mean(Tensor<float>& y, const Tensor<float>& eps, const NoiseSchedule& sched, int t, double clip) {
  require(eps.shape() == y.shape(), "sampler: model output shape " + shape_str(eps.shape()) + " differs from state " +
                                        shape_str(y.shape()));
  const double ab = sched.alpha_bar_at(t);
  if (clip <= 0.0) {
    const double coef = sched.beta_at(t) / std::sqrt(1.0 - ab);
    const double inv = 1.0 / std::sqrt(sched.alpha_at(t));
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = static_cast<float>(inv * (static_cast<double>(y[i]) - coef * static_cast<double>(eps[i])));
    return;
  }
  const double ab_prev = t > 1 ? sched.alpha_bar_at(t - 1) : 1.0;
  const double c0 = std::sqrt(ab_prev) * sched.beta_at(t) / (1.0 - ab);
  const double ct = std::sqrt(sched.alpha_at(t)) * (1.0 - ab_prev) / (1.0 - ab);
  const double s1 = std::sqrt(1.0 - ab), s0 = std::sqrt(ab);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double yi = y[i];
    const double x0 = std::clamp((yi - s1 * static_cast<double>(eps[i])) / s0, -clip, clip);
    y[i] = static_cast<float>(c0 * x0 + ct * yi);
  }
}

}  // namespace

Tensor<float> ddpm_sample_from(const SampleModel& model, const NoiseSchedule& sched, Tensor<float> y,
                               const std::vector<Tensor<float>>& z, double clip) {
  require(static_cast<int>(z.size()) >= sched.T, "ddpm_sample_from: need one noise tensor per step");
  for (int t = sched.T; t >= 1; --t) {
    ancestral_mean(y, model(y, t), sched, t, clip);
    if (t == 1) break;
    const double sigma = std::sqrt(sched.sigma2_at(t));
    const Tensor<float>& zt = z[static_cast<std::size_t>(t - 1)];
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<float>(y[i] + sigma * static_cast<double>(zt[i]));
  }
  return y;
}

Tensor<float> ddpm_sample(const SampleModel& model, const NoiseSchedule& sched, const Shape& shape, Rng& rng,
                          double clip) {
  Tensor<float> y = normal_tensor<float>(shape, rng);
  // Step noises are drawn lazily in the same order a replay would use: t = T..2.
  for (int t = sched.T; t >= 1; --t) {
    ancestral_mean(y, model(y, t), sched, t, clip);
    if (t == 1) break;
    const double sigma = std::sqrt(sched.sigma2_at(t));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<float>(y[i] + sigma * rng.normal());
  }
  return y;
}

std::vector<double> timestep_embedding(int t, int dim) {
  require(dim >= 2 && dim % 2 == 0, "timestep embedding dimension must be even and >= 2");
  const int half = dim / 2;
  std::vector<double> e(static_cast<std::size_t>(dim));
  for (int i = 0; i < half; ++i) {
    const double w = std::pow(10000.0, -static_cast<double>(i) / half);
    e[static_cast<std::size_t>(i)] = std::sin(t * w);
    e[static_cast<std::size_t>(half + i)] = std::cos(t * w);
  }
  return e;
}

template Tensor<float> q_sample<float>(const Tensor<float>&, int, const Tensor<float>&, const NoiseSchedule&);
template Tensor<double> q_sample<double>(const Tensor<double>&, int, const Tensor<double>&, const NoiseSchedule&);
template Var<float> denoise_loss_at<float>(Tape<float>&, const DenoiserFn<float>&, const Tensor<float>&, int,
                                           const Tensor<float>&, const NoiseSchedule&);
template Var<double> denoise_loss_at<double>(Tape<double>&, const DenoiserFn<double>&, const Tensor<double>&, int,
                                             const Tensor<double>&, const NoiseSchedule&);
template Var<float> denoise_loss<float>(Tape<float>&, const DenoiserFn<float>&, const Tensor<float>&,
                                        const NoiseSchedule&, Rng&);
template Var<double> denoise_loss<double>(Tape<double>&, const DenoiserFn<double>&, const Tensor<double>&,
                                          const NoiseSchedule&, Rng&);
template Tensor<float> normal_tensor<float>(const Shape&, Rng&);
template Tensor<double> normal_tensor<double>(const Shape&, Rng&);

}  // namespace duocast

#include "duocast/lowfreq.hpp"

#include <cmath>

namespace duocast {

namespace {

std::string air_id(const std::string& path, const std::string& name) { return "low/air_" + path + "/" + name; }

}  // namespace

LowBranch::LowBranch(LowConfig cfg) : cfg_(cfg) {
  require(cfg_.frames >= 1, "low branch needs at least one frame");
  require(cfg_.airmass_mult >= 1, "air-mass channel multiplier must be >= 1");
  require(cfg_.conv3_temporal % 2 == 1 && cfg_.conv3_temporal <= cfg_.frames,
          "temporal kernel extent " + std::to_string(cfg_.conv3_temporal) + " must be odd and <= frames " +
              std::to_string(cfg_.frames));
  require(cfg_.theta_int >= 0.0 && cfg_.theta_int <= 1.0, "theta_int must lie in [0, 1]");
  const int s = cfg_.frames, m = cfg_.airmass_mult;
  predictor_ = UNet("low/pred", UNetConfig{s, s, cfg_.pred_base, cfg_.levels, 0});
  denoiser_ = UNet("low/den", UNetConfig{3 * s + 4 * m * s, s, cfg_.den_base, cfg_.levels, cfg_.time_dim});
  // Key/value source: channel c of A_1 next to channel c of A_{n-1}, so a
  // grouped projection with two inputs per group mixes exactly that pair.
  for (int c = 0; c < 2 * m; ++c) {
    kv_order_.push_back(c);
    kv_order_.push_back(2 * m + c);
  }
}

void LowBranch::init(ParamSet<float>& params, Rng& rng) const {
  const int m = cfg_.airmass_mult;
  predictor_.init(params, rng);
  denoiser_.init(params, rng);
  const int k1 = cfg_.conv1_kernel, k2 = cfg_.conv2_kernel, kt = cfg_.conv3_temporal, ka = cfg_.attn_kernel;
  for (const std::string path : {"bar", "dag"}) {
    params.add(air_id(path, "c1"), scaled_normal({m, 1, k1, k1}, k1 * k1, rng, 2.0));
    params.add(air_id(path, "c2"), scaled_normal({m, 1, k2, k2}, k2 * k2, rng, 1.0));
    params.add(air_id(path, "c3"), scaled_normal({m, kt}, kt, rng, 1.0));
  }
  params.add("low/front/wq", scaled_normal({2 * m, 1, ka, ka}, ka * ka, rng, 1.0));
  params.add("low/front/wk", scaled_normal({2 * m, 2, ka, ka}, 2 * ka * ka, rng, 1.0));
  params.add("low/front/wv", scaled_normal({2 * m, 2, ka, ka}, 2 * ka * ka, rng, 1.0));
}

template <class Real>
Var<Real> LowBranch::base_predict(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> x) const {
  const int s = cfg_.frames, h = cfg_.height, w = cfg_.width;
  require(x.shape() == Shape({s, 1, h, w}), "base_predict: expected X of shape " + shape_str({s, 1, h, w}) +
                                                ", got " + shape_str(x.shape()));
  Var<Real> out = predictor_.forward(tape, params, reshape(x, {1, s, h, w}));
  for (Real v : out.value().values())
    if (!std::isfinite(static_cast<double>(v))) throw DiagnosticError("base predictor produced a non-finite output");
  return reshape(clamp(out, 0.0, 1.0), {s, 1, h, w});
}

template <class Real>
AirMass<Real> LowBranch::airmass_encode(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> ybar,
                                        Var<Real> ydag) const {
  require(ybar.shape() == ydag.shape(), "airmass_encode: base and masked forecasts differ in shape");
  const int m = cfg_.airmass_mult;
  auto path = [&](const std::string& name, Var<Real> in) {
    Var<Real> c1 = conv2d(in, param_var(tape, params, air_id(name, "c1")));
    Var<Real> c2 = conv2d(c1, param_var(tape, params, air_id(name, "c2")), Conv2dSpec{cfg_.conv2_dilation, m});
    return conv_temporal(c2, param_var(tape, params, air_id(name, "c3")));
  };
  AirMass<Real> a;
  a.bar = path("bar", ybar);
  a.dag = path("dag", ydag);
  a.both = concat<Real>({a.bar, a.dag}, 1);
  return a;
}

template <class Real>
FrontFeatures<Real> LowBranch::front_temporal(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> a) const {
  require(a.value().rank() == 4 && a.dim(0) >= 1, "front_temporal: expected [S, C, H, W] features");
  Var<Real> wq = param_var(tape, params, "low/front/wq");
  Var<Real> wk = param_var(tape, params, "low/front/wk");
  Var<Real> wv = param_var(tape, params, "low/front/wv");
  const int s = a.dim(0);
  Var<Real> first = slice(a, 0, 0, 1);
  FrontFeatures<Real> out;
  std::vector<Var<Real>> frames;
  for (int n = 0; n < s; ++n) {
    Var<Real> an = n == 0 ? first : slice(a, 0, n, 1);
    Var<Real> prev = n == 0 ? first : slice(a, 0, n - 1, 1);
    Var<Real> kv = gather_channels(concat<Real>({first, prev}, 1), kv_order_);
    AttentionOutput<Real> r = cross_attention(an, kv, wq, wk, wv);
    frames.push_back(r.output);
    out.weights.push_back(r.weights);
  }
  out.f = s == 1 ? frames[0] : concat<Real>(frames, 0);
  return out;
}

template <class Real>
LowConditioning<Real> LowBranch::condition(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> x) const {
  LowConditioning<Real> c;
  c.x = x;
  c.ybar = base_predict(tape, params, x);
  c.ydag = threshold_mask(c.ybar, cfg_.theta_int);
  c.air = airmass_encode(tape, params, c.ybar, c.ydag);
  c.front = front_temporal(tape, params, c.air.both);
  return c;
}

template <class Real>
Var<Real> LowBranch::denoise(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> yt, int t, Var<Real> x,
                             Var<Real> ybar, Var<Real> a, Var<Real> f) const {
  const int s = cfg_.frames, h = cfg_.height, w = cfg_.width, m = cfg_.airmass_mult;
  require(yt.shape() == Shape({s, 1, h, w}), "low denoiser: expected state of shape " + shape_str({s, 1, h, w}) +
                                                 ", got " + shape_str(yt.shape()));
  Var<Real> in = concat<Real>({reshape(yt, {1, s, h, w}), reshape(x, {1, s, h, w}), reshape(ybar, {1, s, h, w}),
                               reshape(a, {1, 2 * m * s, h, w}),
                               reshape(f, {1, 2 * m * s, h, w})},
                              1);
  return reshape(denoiser_.forward(tape, params, in, t), {s, 1, h, w});
}

template <class Real>
Var<Real> LowBranch::joint_loss(Tape<Real>& tape, ParamSet<Real>& params, const Tensor<Real>& x, const Tensor<Real>& y,
                                const Tensor<Real>& target, int t, const Tensor<Real>& noise,
                                const NoiseSchedule& sched, double lambda1, double lambda2) const {
  LowConditioning<Real> c = condition(tape, params, tape.constant(x));
  Var<Real> lp = mse(c.ybar, tape.constant(y));
  Var<Real> yt = tape.constant(q_sample(target, t, noise, sched));
  Var<Real> eps = denoise(tape, params, yt, t, c);
  for (Real v : eps.value().values())
    if (!std::isfinite(static_cast<double>(v))) throw DiagnosticError("low denoiser produced a non-finite output");
  Var<Real> ll = mse(eps, tape.constant(noise));
  return add(scale(lp, lambda1), scale(ll, lambda2));
}

template <class Real>
Tensor<Real> LowBranch::diffusion_target(ParamSet<Real>& params, const Tensor<Real>& x, const Tensor<Real>& y_low,
                                         const SpectralMask& mask) const {
  Tape<Real> tape(false);
  return low_residual_target(y_low, base_predict(tape, params, tape.constant(x)).value(), mask);
}

std::vector<std::string> LowBranch::airmass_kernels(const std::string& path) const {
  return {air_id(path, "c1"), air_id(path, "c2")};
}

SequenceField threshold_high(const SequenceField& ybar, double theta) {
  require(theta >= 0.0 && theta <= 1.0, "threshold must lie in [0, 1]");
  std::vector<Field> frames;
  for (const Field& f : ybar.frames()) {
    std::vector<double> v(f.values().begin(), f.values().end());
    for (double& e : v)
      if (!(e >= theta)) e = 0.0;
    frames.emplace_back(f.channels(), f.height(), f.width(), std::move(v));
  }
  return SequenceField(std::move(frames));
}

double predictor_loss(const SequenceField& ybar, const SequenceField& y) {
  require(ybar.same_shape(y), "predictor_loss: shape mismatch");
  const SequenceField d = ybar - y;
  return d.squared_norm() / static_cast<double>(d.size());
}

template <class Real>
Tensor<Real> low_residual_target(const Tensor<Real>& y_low, const Tensor<Real>& ybar, const SpectralMask& mask) {
  require(y_low.shape() == ybar.shape(), "low residual target: shape mismatch");
  const Tensor<double> base = project_low(SequenceField::from_tensor(ybar), mask).template to_tensor<double>();
  Tensor<Real> out(y_low.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<Real>(kLowResidualScale * (static_cast<double>(y_low[i]) - base[i]));
  return out;
}

SequenceField low_from_residual(const Tensor<float>& sample, const SequenceField& ybar, const SpectralMask& mask) {
  Tensor<double> t = project_low(ybar, mask).to_tensor<double>();
  require(t.shape() == sample.shape(), "low residual decode: shape mismatch");
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += static_cast<double>(sample[i]) / kLowResidualScale;
  return SequenceField::from_tensor(t);
}

SequenceField base_forecast(const LowBranch& branch, ParamSet<float>& params, const SequenceField& x) {
  Tape<float> tape(false);
  Var<float> ybar = branch.base_predict(tape, params, tape.constant(x.to_tensor<float>()));
  return SequenceField::from_tensor(ybar.value());
}

// Clean-state bound of the sampler in residual units (0.375 in intensity).
constexpr double kSampleClip = 1.5;

LowForecast lowfreq_forecast(const LowBranch& branch, ParamSet<float>& params, const SequenceField& x,
                             const NoiseSchedule& sched, const SpectralMask& mask, Rng& rng) {
  Tensor<float> xt, bt, at, ft;
  LowForecast out;
  {
    Tape<float> tape(false);
    LowConditioning<float> c = branch.condition(tape, params, tape.constant(x.to_tensor<float>()));
    xt = c.x.value();
    bt = c.ybar.value();
    at = c.air.both.value();
    ft = c.front.f.value();
    out.base = SequenceField::from_tensor(c.ybar.value());
  }
  SampleModel model = [&](const Tensor<float>& y, int t) {
    Tape<float> tape(false);
    return branch.denoise(tape, params, tape.constant(y), t, tape.constant(xt), tape.constant(bt), tape.constant(at),
                          tape.constant(ft))
        .value();
  };
  const LowConfig& cfg = branch.config();
  const Tensor<float> sample = ddpm_sample(model, sched, {cfg.frames, 1, cfg.height, cfg.width}, rng, kSampleClip);
  for (float v : sample.values())
    if (!std::isfinite(v)) throw DiagnosticError("low-frequency sampler diverged");
  out.raw = low_from_residual(sample, out.base, mask);
  out.projected = project_low(out.raw, mask);
  return out;
}

#define DUOCAST_INSTANTIATE_LOW(R)                                                                               \
  template Var<R> LowBranch::base_predict<R>(Tape<R>&, ParamSet<R>&, Var<R>) const;                             \
  template AirMass<R> LowBranch::airmass_encode<R>(Tape<R>&, ParamSet<R>&, Var<R>, Var<R>) const;               \
  template FrontFeatures<R> LowBranch::front_temporal<R>(Tape<R>&, ParamSet<R>&, Var<R>) const;                 \
  template LowConditioning<R> LowBranch::condition<R>(Tape<R>&, ParamSet<R>&, Var<R>) const;                    \
  template Var<R> LowBranch::denoise<R>(Tape<R>&, ParamSet<R>&, Var<R>, int, Var<R>, Var<R>, Var<R>, Var<R>)    \
      const;                                                                                                      \
  template Var<R> LowBranch::joint_loss<R>(Tape<R>&, ParamSet<R>&, const Tensor<R>&, const Tensor<R>&,          \
                                           const Tensor<R>&, int, const Tensor<R>&, const NoiseSchedule&, double, \
                                           double) const;                                                         \
  template Tensor<R> LowBranch::diffusion_target<R>(ParamSet<R>&, const Tensor<R>&, const Tensor<R>&,           \
                                                    const SpectralMask&) const;                                  \
  template Tensor<R> low_residual_target<R>(const Tensor<R>&, const Tensor<R>&, const SpectralMask&);

DUOCAST_INSTANTIATE_LOW(float)
DUOCAST_INSTANTIATE_LOW(double)

#undef DUOCAST_INSTANTIATE_LOW

}  // namespace duocast

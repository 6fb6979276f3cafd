#include "duocast/highfreq.hpp"

#include <cmath>

namespace duocast {

namespace {

void add_conv(ParamSet<float>& params, const std::string& id, int co, int ci, int k, bool bias, Rng& rng,
              double gain = 1.4) {
  params.add(id + ".w", scaled_normal({co, ci, k, k}, ci * k * k, rng, gain));
  if (bias) params.add(id + ".b", Tensor<float>({co}));
}

template <class Real>
Var<Real> conv(Tape<Real>& tape, ParamSet<Real>& params, const std::string& id, Var<Real> x) {
  Var<Real> w = param_var(tape, params, id + ".w");
  if (params.contains(id + ".b")) return conv2d(x, w, param_var(tape, params, id + ".b"));
  return conv2d(x, w);
}

std::string block_id(int b, const std::string& name) { return "high/block" + std::to_string(b) + "/" + name; }

}  // namespace

HighBranch::HighBranch(HighConfig cfg) : cfg_(cfg) {
  require(cfg_.height % kDown == 0 && cfg_.width % kDown == 0,
          "grid " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) + " is not divisible by " +
              std::to_string(kDown));
  require(cfg_.model_dim % 4 == 0, "high denoiser width must be a multiple of 4");
}

void HighBranch::init_autoencoder(ParamSet<float>& params, Rng& rng) const {
  const int a = cfg_.ae_width, c = cfg_.latent_channels, s2 = kDown * kDown;
  const bool b = cfg_.ae_bias;
  add_conv(params, "ae/enc1", a, s2, 3, b, rng);
  add_conv(params, "ae/enc2", a, a, 3, b, rng);
  add_conv(params, "ae/enc_out", c, a, 1, b, rng, 1.0);
  add_conv(params, "ae/enc_skip", c, s2, 1, false, rng, 1.0);
  add_conv(params, "ae/dec1", a, c, 3, b, rng);
  add_conv(params, "ae/dec2", a, a, 3, b, rng);
  add_conv(params, "ae/dec_out", s2, a, 1, b, rng, 1.0);
  add_conv(params, "ae/dec_skip", s2, c, 1, false, rng, 1.0);
}

void HighBranch::init_denoiser(ParamSet<float>& params, Rng& rng) const {
  const int d = cfg_.model_dim, cin = 5 * cfg_.frames * cfg_.latent_channels;
  add_conv(params, "high/in", d, cin, 1, true, rng, 1.0);
  init_time_features(params, "high", cfg_.time_dim, rng);
  init_time_bias(params, "high/tin", cfg_.time_dim, d, rng);
  for (int b = 0; b < cfg_.blocks; ++b) {
    add_conv(params, block_id(b, "wq"), d, d, 1, false, rng, 1.0);
    add_conv(params, block_id(b, "wk"), d, d, 1, false, rng, 1.0);
    add_conv(params, block_id(b, "wv"), d, d, 1, false, rng, 1.0);
    add_conv(params, block_id(b, "wo"), d, d, 1, true, rng, 0.5);
    add_conv(params, block_id(b, "mlp1"), 2 * d, d, 1, true, rng, 1.4);
    add_conv(params, block_id(b, "mlp2"), d, 2 * d, 1, true, rng, 0.5);
  }
  const int cout = cfg_.frames * cfg_.latent_channels;
  params.add("high/out.w", Tensor<float>({cout, d, 1, 1}));
  params.add("high/out.b", Tensor<float>({cout}));
}

template <class Real>
Var<Real> HighBranch::encode(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> frames) const {
  require(frames.value().rank() == 4 && frames.dim(1) == 1, "encode: expected [N, 1, H, W] frames, got " +
                                                                shape_str(frames.shape()));
  require(frames.dim(2) % kDown == 0 && frames.dim(3) % kDown == 0,
          "encode: frame shape " + shape_str(frames.shape()) + " is not divisible by " + std::to_string(kDown));
  Var<Real> s = space_to_depth(frames, kDown);
  Var<Real> h = silu(conv(tape, params, "ae/enc1", s));
  h = silu(conv(tape, params, "ae/enc2", h));
  return add(conv(tape, params, "ae/enc_out", h), conv(tape, params, "ae/enc_skip", s));
}

template <class Real>
Var<Real> HighBranch::decode(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> z) const {
  require(z.value().rank() == 4 && z.dim(1) == cfg_.latent_channels,
          "decode: expected [N, " + std::to_string(cfg_.latent_channels) + ", h, w] latents, got " + shape_str(z.shape()));
  Var<Real> h = silu(conv(tape, params, "ae/dec1", z));
  h = silu(conv(tape, params, "ae/dec2", h));
  Var<Real> o = add(conv(tape, params, "ae/dec_out", h), conv(tape, params, "ae/dec_skip", z));
  return depth_to_space(o, kDown);
}

template <class Real>
Tensor<Real> HighBranch::positional_encoding() const {
  const int d = cfg_.model_dim, h = latent_height(), w = latent_width();
  Tensor<Real> pe({1, d, h, w});
  const int quarter = d / 4;
  for (int i = 0; i < quarter; ++i) {
    const double freq = std::pow(100.0, -static_cast<double>(i) / quarter);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        pe.at(0, i, y, x) = static_cast<Real>(std::sin(y * freq));
        pe.at(0, quarter + i, y, x) = static_cast<Real>(std::cos(y * freq));
        pe.at(0, 2 * quarter + i, y, x) = static_cast<Real>(std::sin(x * freq));
        pe.at(0, 3 * quarter + i, y, x) = static_cast<Real>(std::cos(x * freq));
      }
  }
  return pe;
}

template <class Real>
Var<Real> HighBranch::attention_block(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> h, int b) const {
  AttentionOutput<Real> a = self_attention(h, param_var(tape, params, block_id(b, "wq") + ".w"),
                                           param_var(tape, params, block_id(b, "wk") + ".w"),
                                           param_var(tape, params, block_id(b, "wv") + ".w"));
  h = add(h, conv(tape, params, block_id(b, "wo"), a.output));
  Var<Real> m = silu(conv(tape, params, block_id(b, "mlp1"), h));
  return add(h, conv(tape, params, block_id(b, "mlp2"), m));
}

template <class Real>
Var<Real> HighBranch::denoise(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> zt, int t, Var<Real> cx,
                              Var<Real> clow, Var<Real> chigh, Var<Real> cbase) const {
  const Shape ls = latent_shape();
  require(zt.shape() == ls, "high denoiser: expected latent state " + shape_str(ls) + ", got " + shape_str(zt.shape()));
  require(cx.shape() == ls && clow.shape() == ls && chigh.shape() == ls && cbase.shape() == ls,
          "high denoiser: conditioning latents must match the state shape " + shape_str(ls));
  const int c = cfg_.frames * cfg_.latent_channels, h = latent_height(), w = latent_width();
  Var<Real> in = concat<Real>({reshape(zt, {1, c, h, w}), reshape(cx, {1, c, h, w}), reshape(clow, {1, c, h, w}),
                               reshape(chigh, {1, c, h, w}), reshape(cbase, {1, c, h, w})},
                              1);
  Var<Real> x = add(conv(tape, params, "high/in", in), tape.constant(positional_encoding<Real>()));
  Var<Real> tf = time_features(tape, params, "high", t, cfg_.time_dim);
  x = add_time_bias(tape, params, "high/tin", x, tf);
  for (int b = 0; b < cfg_.blocks; ++b) x = attention_block(tape, params, x, b);
  return reshape(conv(tape, params, "high/out", x), ls);
}

template <class Real>
Var<Real> HighBranch::reconstruction_loss(Tape<Real>& tape, ParamSet<Real>& params, const Tensor<Real>& frames) const {
  Var<Real> f = tape.constant(frames);
  return mse(decode(tape, params, encode(tape, params, f)), f);
}

template <class Real>
Var<Real> HighBranch::loss(Tape<Real>& tape, ParamSet<Real>& params, const Tensor<Real>& x, const Tensor<Real>& x_high,
                           const Tensor<Real>& y_low, const Tensor<Real>& ybar_high, const Tensor<Real>& y_high,
                           double latent_scale, int t,
                           const Tensor<Real>& noise, const NoiseSchedule& sched, double lambda3) const {
  auto enc = [&](const Tensor<Real>& v) { return scale(encode(tape, params, tape.constant(v)), latent_scale); };
  Var<Real> z0 = enc(y_high);
  require(z0.shape() == noise.shape(), "high loss: noise shape " + shape_str(noise.shape()) +
                                           " differs from latent shape " + shape_str(z0.shape()));
  const double a = std::sqrt(sched.alpha_bar_at(t)), b = std::sqrt(1.0 - sched.alpha_bar_at(t));
  Var<Real> zt = add(scale(z0, a), tape.constant(scaled_tensor(noise, b)));
  Var<Real> eps = denoise(tape, params, zt, t, enc(x), enc(y_low), enc(x_high), enc(ybar_high));
  for (Real v : eps.value().values())
    if (!std::isfinite(static_cast<double>(v))) throw DiagnosticError("high denoiser produced a non-finite output");
  return scale(mse(eps, tape.constant(noise)), lambda3);
}

Tensor<float> encode_sequence(const HighBranch& branch, ParamSet<float>& params, const SequenceField& seq) {
  Tape<float> tape(false);
  return branch.encode(tape, params, tape.constant(seq.to_tensor<float>())).value();
}

SequenceField decode_sequence(const HighBranch& branch, ParamSet<float>& params, const Tensor<float>& z) {
  Tape<float> tape(false);
  return SequenceField::from_tensor(branch.decode(tape, params, tape.constant(z)).value());
}

LatentConditioning high_conditioning(const HighBranch& branch, ParamSet<float>& params, const SequenceField& x,
                                     const SequenceField& y_low, const SequenceField& ybar, const SpectralMask& mask,
                                     double latent_scale) {
  auto enc = [&](const SequenceField& s) {
    Tensor<float> z = encode_sequence(branch, params, s);
    for (auto& v : z.values()) v *= static_cast<float>(latent_scale);
    return z;
  };
  return {enc(x), enc(y_low), enc(project_high(x, mask)), enc(project_high(ybar, mask))};
}

// Latents are scaled to unit RMS; clean estimates beyond this are sampler error.
constexpr double kLatentClip = 5.0;

HighForecast highfreq_forecast(const HighBranch& branch, ParamSet<float>& params, const SequenceField& x,
                               const SequenceField& y_low, const SequenceField& ybar, const NoiseSchedule& sched,
                               const SpectralMask& mask, double latent_scale, Rng& rng) {
  require(latent_scale > 0.0 && std::isfinite(latent_scale), "latent scale must be positive");
  const LatentConditioning c = high_conditioning(branch, params, x, y_low, ybar, mask, latent_scale);
  SampleModel model = [&](const Tensor<float>& z, int t) {
    Tape<float> tape(false);
    return branch
        .denoise(tape, params, tape.constant(z), t, tape.constant(c.x), tape.constant(c.low), tape.constant(c.x_high),
                 tape.constant(c.base))
        .value();
  };
  Tensor<float> z = ddpm_sample(model, sched, branch.latent_shape(), rng, kLatentClip);
  for (auto& v : z.values()) {
    if (!std::isfinite(v)) throw DiagnosticError("high-frequency sampler diverged");
    v /= static_cast<float>(latent_scale);
  }
  HighForecast out;
  out.decoded = decode_sequence(branch, params, z);
  out.projected = project_high(out.decoded, mask);
  return out;
}

SequenceField combine_forecast(const SequenceField& low, const SequenceField& high) {
  require(low.same_shape(high), "combine_forecast: low and high parts differ in shape");
  return clamp01(low + high);
}

#define DUOCAST_INSTANTIATE_HIGH(R)                                                                                 \
  template Var<R> HighBranch::encode<R>(Tape<R>&, ParamSet<R>&, Var<R>) const;                                     \
  template Var<R> HighBranch::decode<R>(Tape<R>&, ParamSet<R>&, Var<R>) const;                                     \
  template Var<R> HighBranch::attention_block<R>(Tape<R>&, ParamSet<R>&, Var<R>, int) const;                       \
  template Var<R> HighBranch::denoise<R>(Tape<R>&, ParamSet<R>&, Var<R>, int, Var<R>, Var<R>, Var<R>, Var<R>)     \
      const;                                                                                                        \
  template Var<R> HighBranch::reconstruction_loss<R>(Tape<R>&, ParamSet<R>&, const Tensor<R>&) const;              \
  template Var<R> HighBranch::loss<R>(Tape<R>&, ParamSet<R>&, const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, \
                                      const Tensor<R>&, const Tensor<R>&, double, int, const Tensor<R>&,           \
                                      const NoiseSchedule&, double)                                                 \
      const;                                                                                                        \
  template Tensor<R> HighBranch::positional_encoding<R>() const;

DUOCAST_INSTANTIATE_HIGH(float)
DUOCAST_INSTANTIATE_HIGH(double)

#undef DUOCAST_INSTANTIATE_HIGH

}  // namespace duocast

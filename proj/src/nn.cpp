#include "duocast/nn.hpp"

#include <cmath>

#include "duocast/diffusion.hpp"

namespace duocast {

Tensor<float> scaled_normal(const Shape& shape, int fan_in, Rng& rng, double gain) {
  Tensor<float> t(shape);
  const double s = gain / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (auto& v : t.values()) v = static_cast<float>(s * rng.normal());
  return t;
}

void init_time_features(ParamSet<float>& params, const std::string& prefix, int dim, Rng& rng) {
  params.add(prefix + "/t1.w", scaled_normal({dim, dim}, dim, rng));
  params.add(prefix + "/t1.b", Tensor<float>({dim}));
}

template <class Real>
Var<Real> time_features(Tape<Real>& tape, ParamSet<Real>& params, const std::string& prefix, int t, int dim) {
  const std::vector<double> e = timestep_embedding(t, dim);
  Var<Real> ev = tape.constant(Tensor<Real>({1, dim}, std::vector<Real>(e.begin(), e.end())));
  Var<Real> h = matmul(ev, param_var(tape, params, prefix + "/t1.w"));
  return silu(add_row_bias(h, param_var(tape, params, prefix + "/t1.b")));
}

void init_time_bias(ParamSet<float>& params, const std::string& id, int dim, int channels, Rng& rng) {
  params.add(id + ".w", scaled_normal({dim, channels}, dim, rng, 0.5));
  params.add(id + ".b", Tensor<float>({channels}));
}

template <class Real>
Var<Real> add_time_bias(Tape<Real>& tape, ParamSet<Real>& params, const std::string& id, Var<Real> x,
                        Var<Real> tfeat) {
  Var<Real> v = add_row_bias(matmul(tfeat, param_var(tape, params, id + ".w")), param_var(tape, params, id + ".b"));
  return add_channel_bias(x, reshape(v, {x.dim(1)}));
}

namespace {

void add_conv(ParamSet<float>& params, const std::string& id, int co, int ci, int k, Rng& rng, bool zero = false) {
  params.add(id + ".w", zero ? Tensor<float>({co, ci, k, k}) : scaled_normal({co, ci, k, k}, ci * k * k, rng, 1.4));
  params.add(id + ".b", Tensor<float>({co}));
}

template <class Real>
Var<Real> conv(Tape<Real>& tape, ParamSet<Real>& params, const std::string& id, Var<Real> x) {
  return conv2d(x, param_var(tape, params, id + ".w"), param_var(tape, params, id + ".b"));
}

}  // namespace

void UNet::init(ParamSet<float>& params, Rng& rng) const {
  const int L = cfg_.levels;
  add_conv(params, id("in"), width(0), cfg_.in_channels, 3, rng);
  for (int l = 0; l < L; ++l) {
    add_conv(params, id("enc" + std::to_string(l)), width(l), width(l), 3, rng);
    add_conv(params, id("down" + std::to_string(l)), width(l + 1), width(l), 3, rng);
    if (cfg_.time_dim > 0) init_time_bias(params, id("tenc" + std::to_string(l)), cfg_.time_dim, width(l), rng);
  }
  add_conv(params, id("mid"), width(L), width(L), 3, rng);
  if (cfg_.time_dim > 0) {
    init_time_bias(params, id("tmid"), cfg_.time_dim, width(L), rng);
    init_time_features(params, prefix_, cfg_.time_dim, rng);
  }
  for (int l = L - 1; l >= 0; --l)
    add_conv(params, id("up" + std::to_string(l)), width(l), width(l + 1) + width(l), 3, rng);
  add_conv(params, id("out"), cfg_.out_channels, width(0), 3, rng, true);
}

template <class Real>
Var<Real> UNet::forward(Tape<Real>& tape, ParamSet<Real>& params, Var<Real> x, int t) const {
  const int L = cfg_.levels;
  require(x.value().rank() == 4 && x.dim(0) == 1 && x.dim(1) == cfg_.in_channels,
          "unet " + prefix_ + ": expected [1," + std::to_string(cfg_.in_channels) + ",H,W], got " + shape_str(x.shape()));
  require(x.dim(2) % (1 << L) == 0 && x.dim(3) % (1 << L) == 0,
          "unet " + prefix_ + ": spatial shape " + shape_str(x.shape()) + " not divisible by 2^levels");
  Var<Real> tf;
  if (cfg_.time_dim > 0) tf = time_features(tape, params, prefix_, t, cfg_.time_dim);

  Var<Real> h = silu(conv(tape, params, id("in"), x));
  std::vector<Var<Real>> skips;
  for (int l = 0; l < L; ++l) {
    h = conv(tape, params, id("enc" + std::to_string(l)), h);
    if (tf.valid()) h = add_time_bias(tape, params, id("tenc" + std::to_string(l)), h, tf);
    h = silu(h);
    skips.push_back(h);
    h = silu(conv(tape, params, id("down" + std::to_string(l)), avg_pool2(h)));
  }
  h = conv(tape, params, id("mid"), h);
  if (tf.valid()) h = add_time_bias(tape, params, id("tmid"), h, tf);
  h = silu(h);
  for (int l = L - 1; l >= 0; --l) {
    h = concat<Real>({upsample2(h), skips[static_cast<std::size_t>(l)]}, 1);
    h = silu(conv(tape, params, id("up" + std::to_string(l)), h));
  }
  return conv(tape, params, id("out"), h);
}

std::vector<std::string> UNet::full_resolution_kernels() const {
  return {id("in.w"), id("enc0.w"), id("up0.w"), id("out.w")};
}

template Var<float> time_features<float>(Tape<float>&, ParamSet<float>&, const std::string&, int, int);
template Var<double> time_features<double>(Tape<double>&, ParamSet<double>&, const std::string&, int, int);
template Var<float> add_time_bias<float>(Tape<float>&, ParamSet<float>&, const std::string&, Var<float>, Var<float>);
template Var<double> add_time_bias<double>(Tape<double>&, ParamSet<double>&, const std::string&, Var<double>,
                                           Var<double>);
template Var<float> UNet::forward<float>(Tape<float>&, ParamSet<float>&, Var<float>, int) const;
template Var<double> UNet::forward<double>(Tape<double>&, ParamSet<double>&, Var<double>, int) const;

}  // namespace duocast

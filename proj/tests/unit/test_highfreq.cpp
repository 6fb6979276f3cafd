#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "duocast/highfreq.hpp"
#include "support.hpp"

using namespace duocast;
using namespace duocast::test;

namespace {

HighConfig tiny_config() {
  HighConfig c;
  c.frames = 2;
  c.height = 8;
  c.width = 8;
  c.latent_channels = 2;
  c.ae_width = 4;
  c.model_dim = 8;
  c.blocks = 1;
  c.time_dim = 4;
  return c;
}

ParamSet<float> initialized(const HighBranch& branch, std::uint64_t seed) {
  ParamSet<float> p;
  Rng rng(seed);
  branch.init_autoencoder(p, rng);
  branch.init_denoiser(p, rng);
  for (auto& v : p["high/out.w"].value().values()) v = static_cast<float>(0.1 * rng.normal());
  return p;
}

}  // namespace

TEST_SUITE("highfreq") {

TEST_CASE("autoencoder shape contract and zero input") {
  const HighBranch branch{HighConfig{}};
  ParamSet<float> params = initialized(branch, 1);
  Rng rng(2);
  const Tensor<float> frames = randn<float>({3, 1, 32, 32}, rng);
  Tape<float> tape(false);
  const Var<float> z = branch.encode(tape, params, tape.constant(frames));
  CHECK(z.shape() == Shape{3, 8, 8, 8});
  CHECK(branch.decode(tape, params, z).shape() == Shape{3, 1, 32, 32});
  CHECK_THROWS_AS(branch.encode(tape, params, tape.constant(Tensor<float>({1, 1, 30, 32}))), ContractViolation);

  HighConfig nb;
  nb.ae_bias = false;
  const HighBranch plain(nb);
  ParamSet<float> pp;
  Rng r2(3);
  plain.init_autoencoder(pp, r2);
  const Var<float> z0 = plain.encode(tape, pp, tape.constant(Tensor<float>({2, 1, 32, 32})));
  for (float v : z0.value().values()) REQUIRE(v == 0.0f);
  for (float v : plain.decode(tape, pp, z0).value().values()) REQUIRE(v == 0.0f);
}

TEST_CASE("attention block is token-permutation equivariant") {
  const HighConfig cfg = tiny_config();
  const HighBranch branch(cfg);
  ParamSet<double> params = initialized(branch, 4).cast<double>();
  Rng rng(5);
  const int d = cfg.model_dim, h = 2, w = 2, n = h * w;
  const Tensor<double> x = randn({1, d, h, w}, rng);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(7));
  Tensor<double> xp({1, d, h, w});
  for (int c = 0; c < d; ++c)
    for (int i = 0; i < n; ++i) xp[c * n + i] = x[c * n + perm[i]];
  Tape<double> tape(false);
  const Tensor<double> y = branch.attention_block(tape, params, tape.constant(x), 0).value();
  const Tensor<double> yp = branch.attention_block(tape, params, tape.constant(xp), 0).value();
  for (int c = 0; c < d; ++c)
    for (int i = 0; i < n; ++i) CHECK(yp[c * n + i] == doctest::Approx(y[c * n + perm[i]]).epsilon(1e-12));
}

TEST_CASE("gradcheck: one attention block") {
  const HighConfig cfg = tiny_config();
  const HighBranch branch(cfg);
  ParamSet<double> params = initialized(branch, 6).cast<double>();
  Rng rng(7);
  const Tensor<double> x = randn({1, cfg.model_dim, 2, 2}, rng);
  const GradcheckReport r = gradcheck(
      [&](Tape<double>& t, ParamSet<double>& ps) { return readout(t, branch.attention_block(t, ps, t.constant(x), 0)); },
      params);
  CHECK(r.passed(kGradTol));
  CHECK(r.max_abs_adjoint.at("high/block0/wq.w") > 0.0);
  CHECK(r.max_abs_adjoint.at("high/block0/mlp2.w") > 0.0);
}

TEST_CASE("denoiser maps latents to latents") {
  const HighBranch branch{HighConfig{}};
  ParamSet<float> params = initialized(branch, 8);
  Rng rng(9);
  const Shape ls = branch.latent_shape();
  CHECK(ls == Shape{5, 8, 8, 8});
  Tape<float> tape(false);
  auto c = [&] { return tape.constant(randn<float>(ls, rng)); };
  CHECK(branch.denoise(tape, params, c(), 7, c(), c(), c(), c()).shape() == ls);
  CHECK_THROWS_AS(branch.denoise(tape, params, tape.constant(Tensor<float>({4, 8, 8, 8})), 7, c(), c(), c(), c()),
                  ContractViolation);
}

TEST_CASE("gradcheck: end-to-end high-branch loss with the encoder on the tape") {
  const HighConfig cfg = tiny_config();
  const HighBranch branch(cfg);
  ParamSet<double> params = initialized(branch, 10).cast<double>();
  Rng rng(11);
  const Shape px{2, 1, 8, 8};
  const Tensor<double> x = uniform(px, rng), xh = randn(px, rng, 0.2), yl = uniform(px, rng), yb = randn(px, rng, 0.2),
                       yh = randn(px, rng, 0.2);
  const Tensor<double> noise = randn(branch.latent_shape(), rng);
  const NoiseSchedule sched = make_schedule(10, 1e-3, 0.2);
  const GradcheckReport r = gradcheck(
      [&](Tape<double>& t, ParamSet<double>& ps) {
        return branch.loss(t, ps, x, xh, yl, yb, yh, 2.0, 5, noise, sched, 0.7);
      },
      params);
  MESSAGE("worst " << r.worst_param << " rel " << r.max_rel_error << " over " << r.entries_checked << " entries");
  CHECK(r.passed(kGradTol));
  CHECK(r.max_abs_adjoint.at("ae/enc1.w") > 0.0);
  CHECK(r.max_abs_adjoint.at("high/in.w") > 0.0);
}

TEST_CASE("frozen autoencoder receives exactly zero gradient") {
  const HighConfig cfg = tiny_config();
  const HighBranch branch(cfg);
  ParamSet<float> params = initialized(branch, 12);
  params.set_frozen("ae/", true);
  Rng rng(13);
  const Shape px{2, 1, 8, 8};
  const Tensor<float> x = randn<float>(px, rng), noise = randn<float>(branch.latent_shape(), rng);
  const NoiseSchedule sched = make_schedule(10, 1e-3, 0.2);
  Tape<float> tape;
  tape.backward(branch.loss(tape, params, x, x, x, x, x, 1.0, 3, noise, sched, 1.0));
  double ae = 0.0, high = 0.0;
  for (const std::string& id : {"ae/enc1.w", "ae/enc_out.w", "ae/dec1.w", "ae/enc_skip.w"})
    for (float g : params[id].grad().values()) ae = std::max(ae, static_cast<double>(std::abs(g)));
  for (float g : params["high/in.w"].grad().values()) high = std::max(high, static_cast<double>(std::abs(g)));
  CHECK(ae == 0.0);
  CHECK(high > 0.0);
}

TEST_CASE("high forecast is deterministic and orthogonal to the low band") {
  const HighConfig cfg = tiny_config();
  const HighBranch branch(cfg);
  ParamSet<float> params = initialized(branch, 14);
  const SpectralMask mask = SpectralMask::from_fraction(8, 8, 0.25);
  const NoiseSchedule sched = make_schedule(6, 1e-3, 0.3);
  Rng data(15);
  const SequenceField x = random_sequence(2, 8, 8, data), yl = random_sequence(2, 8, 8, data),
                      yb = random_sequence(2, 8, 8, data);
  Rng a(16), b(16);
  const HighForecast fa = highfreq_forecast(branch, params, x, yl, yb, sched, mask, 1.5, a);
  const HighForecast fb = highfreq_forecast(branch, params, x, yl, yb, sched, mask, 1.5, b);
  CHECK(max_abs_difference(fa.projected, fb.projected) == 0.0);
  CHECK(std::sqrt(project_low(fa.projected, mask).squared_norm()) <= 1e-6);
  CHECK(fa.projected.squared_norm() > 0.0);
  CHECK_THROWS_AS(highfreq_forecast(branch, params, x, yl, yb, sched, mask, 0.0, a), ContractViolation);
}

TEST_CASE("combining the two bands") {
  Rng rng(17);
  const SpectralMask mask = SpectralMask::from_fraction(16, 16, 0.25);
  const SequenceField y = random_sequence(3, 16, 16, rng);
  const SequenceField low = project_low(y, mask), high = project_high(y, mask);
  CHECK(max_abs_difference(combine_forecast(low, high), y) < 1e-12);
  const SequenceField zero(3, 1, 16, 16);
  CHECK(max_abs_difference(combine_forecast(low, zero), clamp01(low)) == 0.0);
  const SequenceField a = project_low(random_sequence(3, 16, 16, rng, -1.0, 2.0), mask);
  const SequenceField b = project_high(random_sequence(3, 16, 16, rng, -1.0, 2.0), mask);
  const double lhs = (a + b).squared_norm(), rhs = a.squared_norm() + b.squared_norm();
  CHECK(std::abs(lhs - rhs) / rhs < 1e-5);
  for (const Field& f : combine_forecast(a, b).frames())
    for (double v : f.values()) REQUIRE((v >= 0.0 && v <= 1.0));
  CHECK_THROWS_AS(combine_forecast(a, a.slice(0, 2)), ContractViolation);
}

}  // TEST_SUITE

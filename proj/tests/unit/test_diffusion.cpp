#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "duocast/config.hpp"
#include "duocast/diffusion.hpp"
#include "support.hpp"

using namespace duocast;
using namespace duocast::test;

TEST_SUITE("diffusion") {

TEST_CASE("schedule arithmetic") {
  const NoiseSchedule one = make_schedule(1, 0.5, 0.5);
  CHECK(one.alpha_bar_at(1) == doctest::Approx(0.5));
  const NoiseSchedule two = make_schedule(2, 0.5, 0.5);
  CHECK(two.alpha_bar_at(1) == doctest::Approx(0.5));
  CHECK(two.alpha_bar_at(2) == doctest::Approx(0.25));
  CHECK(two.sigma2_at(2) == doctest::Approx(0.5 * 0.5 / 0.75));
  CHECK(two.sigma2_at(1) == 0.0);
  const NoiseSchedule lin = make_schedule(5, 0.1, 0.5);
  for (int t = 1; t <= 5; ++t) CHECK(lin.beta_at(t) == doctest::Approx(0.1 + 0.1 * (t - 1)));
  CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), ContractViolation);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), ContractViolation);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), ContractViolation);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), ContractViolation);
}

TEST_CASE("default schedules decrease monotonically") {
  const RunConfig cfg;
  const NoiseSchedule s = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
  for (int t = 1; t <= s.T; ++t) {
    CHECK(s.beta_at(t) > 0.0);
    CHECK(s.beta_at(t) < 1.0);
    if (t > 1) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
  }
  CHECK(s.alpha_bar_at(s.T) < 0.05);
  const NoiseSchedule small = make_schedule(50, 1e-4, 0.02);
  for (int t = 2; t <= 50; ++t) CHECK(small.alpha_bar_at(t) < small.alpha_bar_at(t - 1));
}

TEST_CASE("q_sample closed form") {
  const NoiseSchedule two = make_schedule(2, 0.5, 0.5);
  const SequenceField y0(2, 1, 3, 3, 1.0);
  const SequenceField zero(2, 1, 3, 3, 0.0);
  const SequenceField y2 = q_sample(y0, 2, zero, two);
  for (const Field& f : y2.frames())
    for (double v : f.values()) CHECK(v == doctest::Approx(0.5));
  CHECK_THROWS_AS(q_sample(y0, 0, zero, two), ContractViolation);
  CHECK_THROWS_AS(q_sample(y0, 3, zero, two), ContractViolation);
  Rng rng(1);
  const SequenceField noise = random_sequence(2, 3, 3, rng, -1.0, 1.0);
  const SequenceField near = q_sample(y0, 1, noise, make_schedule(3, 1e-12, 1e-12));
  CHECK(max_abs_difference(near, y0) < 1e-5);
}

TEST_CASE("stepwise chain matches the closed form (Monte Carlo)") {
  const NoiseSchedule s = make_schedule(2, 0.2, 0.35);
  Rng rng(7);
  const int trials = 10000;
  const double y0 = 0.8;
  double sum = 0.0, sum2 = 0.0, closed_sum = 0.0, closed_sum2 = 0.0;
  for (int i = 0; i < trials; ++i) {
    const double y1 = std::sqrt(s.alpha_at(1)) * y0 + std::sqrt(s.beta_at(1)) * rng.normal();
    const double y2 = std::sqrt(s.alpha_at(2)) * y1 + std::sqrt(s.beta_at(2)) * rng.normal();
    sum += y2;
    sum2 += y2 * y2;
    const Tensor<double> z({1}, rng.normal());
    const double c = q_sample(Tensor<double>({1}, y0), 2, z, s)[0];
    closed_sum += c;
    closed_sum2 += c * c;
  }
  const double mean_expected = std::sqrt(s.alpha_bar_at(2)) * y0;
  const double var_expected = 1.0 - s.alpha_bar_at(2);
  const double se_mean = std::sqrt(var_expected / trials);
  const double se_var = var_expected * std::sqrt(2.0 / (trials - 1));
  for (auto [m1, m2] : {std::pair{sum, sum2}, {closed_sum, closed_sum2}}) {
    const double mean = m1 / trials;
    const double var = m2 / trials - mean * mean;
    CHECK(std::abs(mean - mean_expected) < 3.0 * se_mean);
    CHECK(std::abs(var - var_expected) < 3.0 * se_var);
  }
}

TEST_CASE("expected energy of the noised state") {
  const NoiseSchedule s = make_schedule(10, 0.01, 0.3);
  Rng rng(8);
  const Tensor<double> y0 = uniform({64}, rng);
  double e0 = 0.0;
  for (double v : y0.values()) e0 += v * v;
  const int t = 6, trials = 10000;
  std::vector<double> energies;
  for (int i = 0; i < trials; ++i) {
    const Tensor<double> yt = q_sample(y0, t, normal_tensor<double>({64}, rng), s);
    double e = 0.0;
    for (double v : yt.values()) e += v * v;
    energies.push_back(e);
  }
  double mean = 0.0, var = 0.0;
  for (double e : energies) mean += e / trials;
  for (double e : energies) var += (e - mean) * (e - mean) / (trials - 1);
  const double expected = s.alpha_bar_at(t) * e0 + (1.0 - s.alpha_bar_at(t)) * 64.0;
  CHECK(std::abs(mean - expected) < 3.0 * std::sqrt(var / trials));
}

TEST_CASE("denoising loss with stub models") {
  const NoiseSchedule s = make_schedule(10, 0.01, 0.2);
  Rng rng(9);
  const Tensor<double> y0 = uniform({2, 1, 4, 4}, rng);
  const Tensor<double> noise = normal_tensor<double>({2, 1, 4, 4}, rng);
  Tape<double> tape;
  DenoiserFn<double> oracle = [&](Tape<double>& tp, Var<double>, int) { return tp.constant(noise); };
  CHECK(denoise_loss_at(tape, oracle, y0, 4, noise, s).value()[0] == 0.0);
  DenoiserFn<double> zero = [](Tape<double>& tp, Var<double> y, int) { return tp.constant(Tensor<double>(y.shape())); };
  double e2 = 0.0;
  for (double v : noise.values()) e2 += v * v / noise.size();
  CHECK(denoise_loss_at(tape, zero, y0, 4, noise, s).value()[0] == doctest::Approx(e2).epsilon(1e-12));
  const Tensor<double> big_y0 = uniform({50000}, rng);
  CHECK(denoise_loss(tape, zero, big_y0, s, rng).value()[0] == doctest::Approx(1.0).epsilon(0.03));
  DenoiserFn<double> broken = [](Tape<double>& tp, Var<double> y, int) {
    return tp.constant(Tensor<double>(y.shape(), std::nan("")));
  };
  CHECK_THROWS_AS(denoise_loss_at(tape, broken, y0, 4, noise, s), DiagnosticError);
}

TEST_CASE("gradcheck: denoising loss") {
  const NoiseSchedule s = make_schedule(10, 0.01, 0.2);
  Rng rng(10);
  const Tensor<double> y0 = uniform({2, 1, 5, 5}, rng);
  const Tensor<double> noise = normal_tensor<double>({2, 1, 5, 5}, rng);
  ParamSet<double> p = param_set({{"k", randn({1, 1, 3, 3}, rng, 0.3)}, {"b", randn({1}, rng)}});
  GradcheckReport r = gradcheck([&](Tape<double>& t, ParamSet<double>& ps) {
    DenoiserFn<double> model = [&](Tape<double>& tp, Var<double> y, int) {
      return silu(conv2d(y, tp.param(ps["k"]), tp.param(ps["b"])));
    };
    return denoise_loss_at(t, model, y0, 7, noise, s);
  }, p);
  CHECK(r.passed(kGradTol));
}

TEST_CASE("perfect noise oracle inverts q_sample at every t") {
  const NoiseSchedule s = make_schedule(50, 1e-4, 0.12);
  Rng rng(11);
  const Tensor<double> y0 = uniform({3, 1, 4, 4}, rng);
  const Tensor<double> noise = normal_tensor<double>({3, 1, 4, 4}, rng);
  double worst = 0.0;
  for (int t = 1; t <= s.T; ++t) {
    const Tensor<double> yt = q_sample(y0, t, noise, s);
    for (std::size_t i = 0; i < y0.size(); ++i) {
      const double rec = (yt[i] - std::sqrt(1.0 - s.alpha_bar_at(t)) * noise[i]) / std::sqrt(s.alpha_bar_at(t));
      worst = std::max(worst, std::abs(rec - y0[i]));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("T = 1 sampler with a perfect oracle recovers y0") {
  const NoiseSchedule s = make_schedule(1, 0.3, 0.3);
  Rng rng(12);
  const Tensor<float> y0 = randn<float>({2, 1, 4, 4}, rng, 0.5);
  const Tensor<float> noise = randn<float>({2, 1, 4, 4}, rng);
  const Tensor<float> y1 = q_sample(y0, 1, noise, s);
  SampleModel oracle = [&](const Tensor<float>&, int) { return noise; };
  for (double clip : {0.0, 10.0}) {
    const Tensor<float> out = ddpm_sample_from(oracle, s, y1, {Tensor<float>(y0.shape())}, clip);
    for (std::size_t i = 0; i < y0.size(); ++i) CHECK(std::abs(out[i] - y0[i]) < 1e-5);
  }
  const Tensor<float> clipped = ddpm_sample_from(oracle, s, y1, {Tensor<float>(y0.shape())}, 0.2);
  for (std::size_t i = 0; i < y0.size(); ++i)
    CHECK(clipped[i] == doctest::Approx(std::clamp(y0[i], -0.2f, 0.2f)).epsilon(1e-5));
}

TEST_CASE("zero-noise stub matches an independent replay") {
  const NoiseSchedule s = make_schedule(8, 0.05, 0.3);
  SampleModel zero = [](const Tensor<float>& y, int) { return Tensor<float>(y.shape()); };
  const Shape shape{2, 1, 3, 3};
  Rng a(21), b(21);
  const Tensor<float> out = ddpm_sample(zero, s, shape, a);
  std::vector<double> y(shape_numel(shape));
  for (double& v : y) v = static_cast<float>(b.normal());
  for (int t = s.T; t >= 1; --t) {
    for (double& v : y) {
      v = static_cast<float>(v / std::sqrt(s.alpha_at(t)));
      if (t > 1) v = static_cast<float>(v + std::sqrt(s.beta_at(t) * (1.0 - s.alpha_bar_at(t - 1)) / (1.0 - s.alpha_bar_at(t))) * b.normal());
    }
  }
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(out[i] == doctest::Approx(y[i]).epsilon(1e-6));
}

TEST_CASE("sampling is deterministic and clipping at a wide bound is neutral") {
  const NoiseSchedule s = make_schedule(12, 1e-3, 0.2);
  SampleModel model = [](const Tensor<float>& y, int t) {
    Tensor<float> e = y;
    for (auto& v : e.values()) v = std::tanh(v) * (0.5f + 0.01f * t);
    return e;
  };
  Rng a(5), b(5), c(5);
  const Tensor<float> x = ddpm_sample(model, s, {1, 1, 4, 4}, a);
  const Tensor<float> y = ddpm_sample(model, s, {1, 1, 4, 4}, b);
  const Tensor<float> z = ddpm_sample(model, s, {1, 1, 4, 4}, c, 1e6);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i] == y[i]);
    CHECK(z[i] == doctest::Approx(x[i]).epsilon(1e-4));
  }
}

TEST_CASE("timestep embedding") {
  const std::vector<double> e = timestep_embedding(3, 8);
  REQUIRE(e.size() == 8);
  CHECK(e[0] == doctest::Approx(std::sin(3.0)));
  CHECK(e[4] == doctest::Approx(std::cos(3.0)));
  CHECK(e[1] == doctest::Approx(std::sin(3.0 * std::pow(10000.0, -0.25))));
  CHECK_THROWS_AS(timestep_embedding(1, 7), ContractViolation);
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "duocast/io.hpp"
#include "duocast/pipeline.hpp"
#include "support.hpp"

using namespace duocast;
using namespace duocast::test;

namespace {

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("duocast_pipeline_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

RunConfig tiny_run(const std::string& dir) {
  RunConfig c;
  c.height = c.width = 16;
  c.frames = 3;
  c.horizon = 6;
  c.events = 10;
  c.pred_base = 4;
  c.den_base = 4;
  c.time_dim = 8;
  c.latent_channels = 2;
  c.ae_width = 4;
  c.model_dim = 8;
  c.blocks = 1;
  c.T = 10;
  c.epochs = 2;
  c.high_epochs = 0;
  c.batch_size = 2;
  c.theory_events = 10;
  c.theory_epochs = 1;
  c.data = dir + "/data.duo1";
  c.checkpoint = dir + "/model.duoc";
  c.out_dir = dir + "/out";
  return c;
}

int count_lines(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("tiny run: train, reload, roll out, evaluate") {
  const std::string dir = temp_dir("smoke");
  const RunConfig cfg = tiny_run(dir);
  gen_data(cfg);
  const EventDataset data = read_duo1(cfg.data);
  REQUIRE(data.size() == 10);

  DuoModel model(cfg);
  std::ostringstream log;
  const TrainReport rep = train(cfg, data, model, &log);
  REQUIRE(rep.curve.size() == 6);
  std::set<int> phases;
  for (const LossRow& r : rep.curve) {
    CHECK(std::isfinite(r.loss));
    phases.insert(r.phase);
  }
  CHECK(phases == std::set<int>{1, 2, 3});
  CHECK(std::isfinite(rep.latent_scale));
  CHECK(count_lines(cfg.out_dir + "/loss_curve.csv") == 7);

  // A reloaded checkpoint reproduces the in-memory model's forecast.
  DuoModel back = model_from_checkpoint(load_checkpoint(cfg.checkpoint));
  CHECK(back.latent_scale == doctest::Approx(model.latent_scale));
  const EventDataset test = test_split(data);
  const SequenceField& x = test.events[0].x;
  Rng ra(3), rb(3);
  const ForecastResult fa = forecast(model, x, cfg.horizon, ra);
  const ForecastResult fb = forecast(back, x, cfg.horizon, rb);
  CHECK(max_abs_difference(fa.combined, fb.combined) == 0.0);

  // Horizon 2S takes two passes and the second is conditioned on the first.
  REQUIRE(fa.passes.size() == 2);
  CHECK(fa.combined.length() == 6);
  CHECK(max_abs_difference(fa.conditions[0], x) == 0.0);
  CHECK(max_abs_difference(fa.conditions[1], fa.passes[0]) == 0.0);
  for (int i = 0; i < 6; ++i) CHECK(max_abs_difference(fa.combined.slice(i, 1), fa.passes[i / 3].slice(i % 3, 1)) == 0.0);
  Rng rc(3);
  const ForecastResult partial = forecast(model, x, 4, rc);
  CHECK(partial.combined.length() == 4);
  CHECK(max_abs_difference(partial.combined, fa.combined.slice(0, 4)) == 0.0);
  for (const Field& f : fa.combined.frames())
    for (double v : f.values()) REQUIRE((v >= 0.0 && v <= 1.0));

  const EvalSummary s = evaluate(model, test, cfg, cfg.out_dir);
  CHECK(s.combined.events() == 1);
  // One event, S lead times, csi and hss per threshold plus csi_m, ssim and mse.
  const std::size_t per_lead = 2 * default_thresholds().size() + 3;
  CHECK(s.rows == 3 * per_lead);
  for (const char* f : {"metrics.csv", "metrics_low.csv", "metrics_persistence.csv", "summary.csv"})
    CHECK(std::filesystem::exists(cfg.out_dir + "/" + f));
  CHECK(count_lines(cfg.out_dir + "/metrics_persistence.csv") == static_cast<int>(s.rows) + 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const std::string dir = temp_dir("determinism");
  RunConfig cfg = tiny_run(dir);
  cfg.epochs = 1;
  const EventDataset data = generate_benchmark(cfg);
  DuoModel a(cfg), b(cfg);
  train(cfg, data, a);
  const std::vector<std::uint8_t> first = read_file_bytes(cfg.checkpoint);
  train(cfg, data, b);
  CHECK(read_file_bytes(cfg.checkpoint) == first);
  cfg.seed += 1;
  DuoModel c(cfg);
  train(cfg, data, c);
  CHECK(read_file_bytes(cfg.checkpoint) != first);
  std::filesystem::remove_all(dir);
}

TEST_CASE("the base predictor alone beats per-pixel climatology") {
  const std::string dir = temp_dir("predictor");
  RunConfig cfg = tiny_run(dir);
  cfg.events = 40;
  cfg.epochs = 16;
  cfg.ae_epochs = 1;
  cfg.high_epochs = 1;
  cfg.lambda2 = 0.0;
  cfg.lambda3 = 0.0;
  const EventDataset data = generate_benchmark(cfg);
  DuoModel model(cfg);
  const TrainReport rep = train(cfg, data, model);
  MESSAGE("predictor " << rep.heldout_predictor_mse << " climatology " << rep.heldout_climatology_mse);
  CHECK(rep.heldout_predictor_mse < rep.heldout_climatology_mse);
  std::filesystem::remove_all(dir);
}

TEST_CASE("scoring the truth against itself and the persistence baseline") {
  Rng rng(4);
  const SequenceField y = random_sequence(3, 16, 16, rng);
  MetricAccumulator acc(default_thresholds(), 3);
  acc.add(y, y);
  CHECK(acc.csi_m() == 1.0);
  for (std::size_t k = 0; k < default_thresholds().size(); ++k) CHECK(acc.hss_at(k) == doctest::Approx(1.0));
  CHECK(acc.mean_ssim() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(acc.mean_mse() == 0.0);

  const SequenceField x = random_sequence(4, 16, 16, rng);
  const SequenceField p = persistence(x, 5);
  REQUIRE(p.length() == 5);
  for (int i = 0; i < 5; ++i) CHECK(max_abs_difference(p.slice(i, 1), x.slice(3, 1)) == 0.0);
}

TEST_CASE("invalid forecast requests are rejected") {
  const std::string dir = temp_dir("contracts");
  const RunConfig cfg = tiny_run(dir);
  DuoModel model(cfg);
  Rng rng(5);
  model.init(rng);
  CHECK_THROWS_AS(forecast(model, random_sequence(2, 16, 16, rng), 3, rng), ContractViolation);
  CHECK_THROWS_AS(forecast(model, random_sequence(3, 8, 8, rng), 3, rng), ContractViolation);
  CHECK_THROWS_AS(forecast(model, random_sequence(3, 16, 16, rng), 0, rng), ContractViolation);
  RunConfig missing = cfg;
  missing.data = dir + "/absent.duo1";
  CHECK_THROWS_AS(train(missing), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("theory verification on a small grid") {
  const std::string dir = temp_dir("theory");
  RunConfig cfg = tiny_run(dir);
  cfg.height = cfg.width = 32;
  const TheoryReport rep = verify_theory(cfg, nullptr);
  std::set<std::string> families;
  for (const CheckRow& r : rep.rows) {
    families.insert(r.name.substr(0, r.name.find('/')));
    if (r.mandatory && !r.passed) MESSAGE("failed " << r.name << " bound " << r.bound << " measured " << r.measured);
    if (r.name.starts_with("bv_decay/") || r.name.starts_with("envelope/") || r.name.starts_with("two_stage/"))
      CHECK(r.passed);
  }
  CHECK(families == std::set<std::string>{"bv_decay", "envelope", "capacity", "two_stage"});
  const std::string path = cfg.out_dir + "/theory_report.csv";
  write_theory_report(path, rep);
  CHECK(count_lines(path) == static_cast<int>(rep.rows.size()) + 1);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE

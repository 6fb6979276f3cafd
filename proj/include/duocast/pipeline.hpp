#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "duocast/checkpoint.hpp"
#include "duocast/config.hpp"
#include "duocast/metrics.hpp"
#include "duocast/theory.hpp"

namespace duocast {

// Both branches, their parameters and the fixed operators they share.
struct DuoModel {
  explicit DuoModel(const RunConfig& cfg);

  RunConfig cfg;
  LowBranch low;
  HighBranch high;
  NoiseSchedule sched;
  SpectralMask mask;
  ParamSet<float> params;
  double latent_scale = 1.0;

  // Fresh parameters for every component.
  void init(Rng& rng);
};

Checkpoint make_checkpoint(const DuoModel& model, const Adam* optimizer, std::uint32_t epoch);
// Rebuilds the model from the stored configuration and tensors; every
// parameter the configuration implies must be present with its shape.
DuoModel model_from_checkpoint(const Checkpoint& ck);
void restore_optimizer(const Checkpoint& ck, Adam& optimizer);

EventDataset generate_benchmark(const RunConfig& cfg);
// Writes the benchmark dataset to cfg.data.
void gen_data(const RunConfig& cfg);

struct LossRow {
  int phase = 0;
  int epoch = 0;
  double loss = 0.0;
};

struct TrainReport {
  std::vector<LossRow> curve;
  double heldout_predictor_mse = 0.0;    // base predictor on the validation split
  double heldout_climatology_mse = 0.0;  // per-pixel training mean on the validation split
  double latent_scale = 1.0;
};

// Phase 1: predictor and low branch on lambda1 L_P + lambda2 L_low.
// Phase 2: autoencoder pretraining on high-band frames, then frozen.
// Phase 3: high branch on lambda3 L_high, conditioned on sampled low forecasts.
// Writes cfg.checkpoint and <out_dir>/loss_curve.csv. A non-finite loss
// restores the last finite parameters, writes them, and throws DiagnosticError.
TrainReport train(const RunConfig& cfg, const EventDataset& data, DuoModel& model, std::ostream* log = nullptr);
TrainReport train(const RunConfig& cfg, std::ostream* log = nullptr);

struct ForecastResult {
  SequenceField combined;  // horizon frames
  SequenceField low;       // low-branch output of every pass, clamped to [0, 1]
  std::vector<SequenceField> conditions;  // condition window of each pass
  std::vector<SequenceField> passes;      // full S-frame output of each pass
};

// Autoregressive rollout: each pass predicts S frames and the next pass is
// conditioned on them. A final partial pass is truncated to the horizon.
ForecastResult forecast(DuoModel& model, const SequenceField& x, int horizon, Rng& rng);

// Repeats the last condition frame.
SequenceField persistence(const SequenceField& x, int frames);

struct EvalSummary {
  MetricAccumulator combined;
  MetricAccumulator low_only;
  MetricAccumulator persistence;
  std::size_t rows = 0;  // rows written to metrics.csv
};

// Forecasts every evaluated test event with horizon S and writes
// metrics.csv (combined), metrics_low.csv, metrics_persistence.csv and
// summary.csv into out_dir.
EvalSummary evaluate(DuoModel& model, const EventDataset& test, const RunConfig& cfg, const std::string& out_dir);

struct CheckRow {
  std::string name;
  double bound = 0.0;
  double measured = 0.0;
  bool passed = false;
  bool mandatory = true;
};

struct TheoryReport {
  std::vector<CheckRow> rows;
  bool passed() const;
};

struct CapacityCase {
  double high_fraction = 0.0;
  BottleneckCertificate certificate;
};

struct CapacityExperiment {
  double leakage = 0.0;
  std::vector<CapacityCase> cases;  // held-out events
};

// Trains a plain convolutional encoder-decoder X -> Y on high-speckle events
// and certifies its held-out errors against the capacity bound.
CapacityExperiment run_capacity_experiment(const RunConfig& cfg);

// Kernel battery, envelope stacks, the capacity experiment and the two-stage
// identity; rows for the trained low branch when a model is given.
TheoryReport verify_theory(const RunConfig& cfg, DuoModel* trained);
void write_theory_report(const std::string& path, const TheoryReport& report);

}  // namespace duocast

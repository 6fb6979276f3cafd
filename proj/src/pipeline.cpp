#include "duocast/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "duocast/io.hpp"

namespace duocast {

namespace {

using Snapshot = std::map<std::string, Tensor<float>>;

Snapshot snapshot(const ParamSet<float>& params) {
  Snapshot s;
  for (const auto& [id, p] : params) s.emplace(id, p.value());
  return s;
}

void restore(ParamSet<float>& params, const Snapshot& s) {
  for (auto& [id, p] : params) {
    p.value() = s.at(id);
    p.zero_grad();
  }
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)))]);
  return idx;
}

void log_line(std::ostream* log, const std::string& s) {
  if (log != nullptr) *log << s << std::endl;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// Shared epoch loop: one optimizer step per `batch` events, snapshot at the
// start of each epoch, restore-and-save on a non-finite loss.
template <class LossFn>
void run_phase(int phase, int epochs, std::size_t n_events, const RunConfig& cfg, DuoModel& model, Adam& opt,
               Rng& rng, TrainReport& report, std::ostream* log, int& epoch_counter, LossFn&& loss_fn) {
  if (n_events == 0) return;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const Snapshot safe = snapshot(model.params);
    double total = 0.0;
    int pending = 0;
    try {
      for (std::size_t i : shuffled(n_events, rng)) {
        Tape<float> tape;
        Var<float> loss = loss_fn(tape, i);
        const double lv = loss.value()[0];
        if (!std::isfinite(lv)) throw DiagnosticError("non-finite loss in phase " + std::to_string(phase));
        tape.backward(scale(loss, 1.0 / cfg.batch_size));
        total += lv;
        if (++pending == cfg.batch_size) {
          opt.step(model.params);
          pending = 0;
        }
      }
      if (pending > 0) opt.step(model.params);
    } catch (const DiagnosticError& err) {
      restore(model.params, safe);
      ensure_parent(cfg.checkpoint);
      save_checkpoint(cfg.checkpoint, make_checkpoint(model, nullptr, static_cast<std::uint32_t>(epoch_counter)));
      throw DiagnosticError(std::string(err.what()) + " at epoch " + std::to_string(epoch) +
                            "; last finite parameters saved to " + cfg.checkpoint);
    }
    ++epoch_counter;
    const double mean = total / static_cast<double>(n_events);
    report.curve.push_back({phase, epoch, mean});
    log_line(log, "phase " + std::to_string(phase) + " epoch " + std::to_string(epoch) + " loss " + fmt(mean));
    if (cfg.checkpoint_every > 0 && epoch_counter % cfg.checkpoint_every == 0) {
      ensure_parent(cfg.checkpoint);
      save_checkpoint(cfg.checkpoint, make_checkpoint(model, &opt, static_cast<std::uint32_t>(epoch_counter)));
    }
  }
}

}  // namespace

DuoModel::DuoModel(const RunConfig& c)
    : cfg((c.validate(), c)),
      low(c.low_config()),
      high(c.high_config()),
      sched(make_schedule(c.T, c.beta_start, c.beta_end)),
      mask(SpectralMask::from_fraction(c.height, c.width, c.rho)) {}

void DuoModel::init(Rng& rng) {
  Rng low_rng = rng.split(1), ae_rng = rng.split(2), high_rng = rng.split(3);
  low.init(params, low_rng);
  high.init_autoencoder(params, ae_rng);
  high.init_denoiser(params, high_rng);
}

Checkpoint make_checkpoint(const DuoModel& model, const Adam* optimizer, std::uint32_t epoch) {
  Checkpoint ck;
  ck.epoch = epoch;
  ck.config = config_to_string(model.cfg);
  for (const auto& [id, p] : model.params) ck.tensors.emplace(id, p.value());
  ck.tensors.emplace("meta/latent_scale", Tensor<float>({1}, static_cast<float>(model.latent_scale)));
  if (optimizer != nullptr) {
    ck.tensors.emplace("meta/adam_step", Tensor<float>({1}, static_cast<float>(optimizer->steps())));
    for (const auto& [id, m] : optimizer->first_moments()) ck.tensors.emplace("opt/m/" + id, m);
    for (const auto& [id, v] : optimizer->second_moments()) ck.tensors.emplace("opt/v/" + id, v);
  }
  return ck;
}

DuoModel model_from_checkpoint(const Checkpoint& ck) {
  const RunConfig cfg = parse_config(ck.config);
  DuoModel model(cfg);
  Rng shape_only(0);
  model.init(shape_only);
  for (auto& [id, p] : model.params) {
    auto it = ck.tensors.find(id);
    require(it != ck.tensors.end(), "checkpoint is missing parameter '" + id + "'");
    require(it->second.shape() == p.value().shape(), "checkpoint parameter '" + id + "' has shape " +
                                                         shape_str(it->second.shape()) + ", expected " +
                                                         shape_str(p.value().shape()));
    p.value() = it->second;
  }
  auto ls = ck.tensors.find("meta/latent_scale");
  require(ls != ck.tensors.end(), "checkpoint is missing meta/latent_scale");
  model.latent_scale = ls->second[0];
  return model;
}

void restore_optimizer(const Checkpoint& ck, Adam& optimizer) {
  optimizer.first_moments().clear();
  optimizer.second_moments().clear();
  for (const auto& [name, t] : ck.tensors) {
    if (name.starts_with("opt/m/")) optimizer.first_moments().emplace(name.substr(6), t);
    if (name.starts_with("opt/v/")) optimizer.second_moments().emplace(name.substr(6), t);
  }
  auto it = ck.tensors.find("meta/adam_step");
  optimizer.set_steps(it == ck.tensors.end() ? 0 : static_cast<std::int64_t>(it->second[0]));
}

EventDataset generate_benchmark(const RunConfig& cfg) {
  cfg.validate();
  return generate_dataset(static_cast<std::size_t>(cfg.events), cfg.event_spec(), cfg.data_seed);
}

void gen_data(const RunConfig& cfg) {
  ensure_parent(cfg.data);
  write_duo1(cfg.data, generate_benchmark(cfg));
}

TrainReport train(const RunConfig& cfg, const EventDataset& data, DuoModel& model, std::ostream* log) {
  cfg.validate();
  require(data.frames == cfg.frames && data.height == cfg.height && data.width == cfg.width,
          "dataset geometry does not match the configuration");
  const EventDataset tr = train_split(data);
  require(tr.size() > 0, "training split is empty");
  const std::size_t n = tr.size();
  const int S = cfg.frames;
  TrainReport report;
  Rng rng(cfg.seed);
  Rng init_rng = rng.split(100);
  model.init(init_rng);
  int epoch_counter = 0;

  std::vector<Tensor<float>> xs(n), ys(n), ylow(n), xhigh(n), yhigh(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = tr.events[i].x.to_tensor<float>();
    ys[i] = tr.events[i].y.to_tensor<float>();
    ylow[i] = project_low(tr.events[i].y, model.mask).to_tensor<float>();
    xhigh[i] = project_high(tr.events[i].x, model.mask).to_tensor<float>();
    yhigh[i] = project_high(tr.events[i].y, model.mask).to_tensor<float>();
  }
  const Shape pixel_shape{S, 1, cfg.height, cfg.width};

  // Phase 1.
  {
    model.params.set_frozen("", true);
    model.params.set_frozen("low/", false);
    Adam opt(cfg.adam(cfg.lr));
    Rng prng = rng.split(1);
    run_phase(1, cfg.phase_epochs(1), n, cfg, model, opt, prng, report, log, epoch_counter,
              [&](Tape<float>& tape, std::size_t i) {
                const int t = prng.uniform_int(1, cfg.T);
                const Tensor<float> noise = normal_tensor<float>(pixel_shape, prng);
                const Tensor<float> target = model.low.diffusion_target(model.params, xs[i], ylow[i], model.mask);
                return model.low.joint_loss(tape, model.params, xs[i], ys[i], target, t, noise, model.sched,
                                            cfg.lambda1, cfg.lambda2);
              });
  }

  // Phase 2.
  {
    model.params.set_frozen("", true);
    model.params.set_frozen("ae/", false);
    Adam opt(cfg.adam(cfg.ae_lr));
    Rng prng = rng.split(2);
    std::vector<Tensor<float>> frames(n);
    for (std::size_t i = 0; i < n; ++i) {
      Tensor<float> both({2 * S, 1, cfg.height, cfg.width});
      std::copy(yhigh[i].values().begin(), yhigh[i].values().end(), both.values().begin());
      std::copy(xhigh[i].values().begin(), xhigh[i].values().end(), both.values().begin() + yhigh[i].size());
      frames[i] = std::move(both);
    }
    run_phase(2, cfg.phase_epochs(2), n, cfg, model, opt, prng, report, log, epoch_counter,
              [&](Tape<float>& tape, std::size_t i) { return model.high.reconstruction_loss(tape, model.params, frames[i]); });
    model.params.set_frozen("ae/", true);

    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Tape<float> tape(false);
      const Tensor<float> z = model.high.encode(tape, model.params, tape.constant(yhigh[i])).value();
      for (float v : z.values()) sq += static_cast<double>(v) * v;
      count += z.size();
    }
    const double rms = std::sqrt(sq / static_cast<double>(count));
    model.latent_scale = static_cast<float>(rms > 0.0 && std::isfinite(rms) ? 1.0 / rms : 1.0);
    report.latent_scale = model.latent_scale;
    log_line(log, "latent scale " + fmt(model.latent_scale));
  }

  // Phase 3.
  {
    model.params.set_frozen("", true);
    model.params.set_frozen("high/", false);
    Adam opt(cfg.adam(cfg.lr));
    Rng prng = rng.split(3);
    std::vector<Tensor<float>> ylow_hat(n), ybar_high(n);
    if (cfg.phase_epochs(3) > 0) {
      Rng srng = rng.split(4);
      for (std::size_t i = 0; i < n; ++i) {
        const LowForecast lf = lowfreq_forecast(model.low, model.params, tr.events[i].x, model.sched, model.mask, srng);
        ylow_hat[i] = lf.projected.to_tensor<float>();
        ybar_high[i] = project_high(lf.base, model.mask).to_tensor<float>();
      }
      log_line(log, "sampled low-branch conditioning for " + std::to_string(n) + " events");
    }
    run_phase(3, cfg.phase_epochs(3), n, cfg, model, opt, prng, report, log, epoch_counter,
              [&](Tape<float>& tape, std::size_t i) {
                const int t = prng.uniform_int(1, cfg.T);
                const Tensor<float> noise = normal_tensor<float>(model.high.latent_shape(), prng);
                return model.high.loss(tape, model.params, xs[i], xhigh[i], ylow_hat[i], ybar_high[i], yhigh[i],
                                       model.latent_scale, t, noise, model.sched, cfg.lambda3);
              });
    model.params.set_frozen("", false);
    ensure_parent(cfg.checkpoint);
    save_checkpoint(cfg.checkpoint, make_checkpoint(model, &opt, static_cast<std::uint32_t>(epoch_counter)));
  }

  // Held-out predictor error against per-pixel climatology.
  {
    Field clim(1, cfg.height, cfg.width);
    for (const EventPair& ev : tr.events)
      for (const Field& f : ev.y.frames())
        for (std::size_t k = 0; k < f.size(); ++k) clim.values()[k] += f.values()[k];
    for (double& v : clim.values()) v /= static_cast<double>(n * static_cast<std::size_t>(S));
    const SequenceField clim_seq(std::vector<Field>(static_cast<std::size_t>(S), clim));
    EventDataset held = val_split(data);
    if (held.size() == 0) held = tr;
    double p = 0.0, c = 0.0;
    for (const EventPair& ev : held.events) {
      p += predictor_loss(base_forecast(model.low, model.params, ev.x), ev.y);
      c += mse(clim_seq, ev.y);
    }
    report.heldout_predictor_mse = p / static_cast<double>(held.size());
    report.heldout_climatology_mse = c / static_cast<double>(held.size());
  }

  ensure_dir(cfg.out_dir);
  std::ofstream csv(std::filesystem::path(cfg.out_dir) / "loss_curve.csv");
  if (!csv) throw IoError("cannot write loss curve into '" + cfg.out_dir + "'");
  csv << "phase,epoch,loss\n" << std::setprecision(9);
  for (const LossRow& r : report.curve) csv << r.phase << ',' << r.epoch << ',' << r.loss << '\n';
  return report;
}

TrainReport train(const RunConfig& cfg, std::ostream* log) {
  if (!std::filesystem::exists(cfg.data)) throw ConfigError("dataset '" + cfg.data + "' does not exist");
  const EventDataset data = read_duo1(cfg.data);
  DuoModel model(cfg);
  return train(cfg, data, model, log);
}

ForecastResult forecast(DuoModel& model, const SequenceField& x, int horizon, Rng& rng) {
  const int S = model.cfg.frames;
  require(horizon >= 1, "forecast horizon must be positive");
  require(x.length() == S && x.channels() == 1 && x.height() == model.cfg.height && x.width() == model.cfg.width,
          "forecast input must be " + std::to_string(S) + " frames of the configured grid");
  ForecastResult out;
  std::vector<Field> combined, low;
  SequenceField cond = x;
  while (static_cast<int>(combined.size()) < horizon) {
    out.conditions.push_back(cond);
    const LowForecast lf = lowfreq_forecast(model.low, model.params, cond, model.sched, model.mask, rng);
    // Mean of independent high-band samples; each is already in the high band.
    SequenceField high;
    for (int k = 0; k < model.cfg.high_samples; ++k) {
      const HighForecast hf = highfreq_forecast(model.high, model.params, cond, lf.projected, lf.base, model.sched,
                                                model.mask, model.latent_scale, rng);
      high = k == 0 ? hf.projected : high + hf.projected;
    }
    if (model.cfg.high_samples > 1) high = scaled(high, 1.0 / model.cfg.high_samples);
    const SequenceField pass = combine_forecast(lf.projected, high);
    const SequenceField pass_low = clamp01(lf.projected);
    const int take = std::min(S, horizon - static_cast<int>(combined.size()));
    for (int i = 0; i < take; ++i) {
      combined.push_back(pass[i]);
      low.push_back(pass_low[i]);
    }
    out.passes.push_back(pass);
    cond = pass;
  }
  out.combined = SequenceField(std::move(combined));
  out.low = SequenceField(std::move(low));
  return out;
}

SequenceField persistence(const SequenceField& x, int frames) {
  require(x.length() >= 1 && frames >= 1, "persistence needs a non-empty condition and horizon");
  std::vector<Field> out(static_cast<std::size_t>(frames), x[x.length() - 1]);
  return SequenceField(std::move(out));
}

EvalSummary evaluate(DuoModel& model, const EventDataset& test, const RunConfig& cfg, const std::string& out_dir) {
  const std::vector<double> thresholds = default_thresholds();
  const int S = cfg.frames;
  EvalSummary summary{MetricAccumulator(thresholds, S), MetricAccumulator(thresholds, S),
                      MetricAccumulator(thresholds, S), 0};
  std::size_t n = test.size();
  if (cfg.eval_events > 0) n = std::min(n, static_cast<std::size_t>(cfg.eval_events));
  std::vector<MetricRow> rows, rows_low, rows_persist;
  for (std::size_t i = 0; i < n; ++i) {
    const EventPair& ev = test.events[i];
    Rng rng(cfg.sample_seed + 1000003ull * i);
    const ForecastResult f = forecast(model, ev.x, S, rng);
    const SequenceField pers = persistence(ev.x, S);
    summary.combined.add(f.combined, ev.y);
    summary.low_only.add(f.low, ev.y);
    summary.persistence.add(pers, ev.y);
    const int id = static_cast<int>(i);
    for (MetricRow& r : event_metrics(id, f.combined, ev.y, thresholds)) rows.push_back(std::move(r));
    for (MetricRow& r : event_metrics(id, f.low, ev.y, thresholds)) rows_low.push_back(std::move(r));
    for (MetricRow& r : event_metrics(id, pers, ev.y, thresholds)) rows_persist.push_back(std::move(r));
  }
  summary.rows = rows.size();
  ensure_dir(out_dir);
  const std::filesystem::path dir(out_dir);
  write_metrics_csv((dir / "metrics.csv").string(), rows);
  write_metrics_csv((dir / "metrics_low.csv").string(), rows_low);
  write_metrics_csv((dir / "metrics_persistence.csv").string(), rows_persist);

  std::ofstream s(dir / "summary.csv");
  if (!s) throw IoError("cannot write summary into '" + out_dir + "'");
  s << "method,metric,lead_time,threshold,value\n" << std::setprecision(9);
  auto emit = [&](const char* method, const MetricAccumulator& acc) {
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      s << method << ",csi,0," << thresholds[k] << ',' << acc.csi_at(k) << '\n';
      s << method << ",hss,0," << thresholds[k] << ',' << acc.hss_at(k) << '\n';
    }
    s << method << ",csi_m,0,," << acc.csi_m() << '\n';
    for (int l = 0; l < acc.lead_times(); ++l) s << method << ",csi_m," << l + 1 << ",," << acc.csi_m_at_lead(l) << '\n';
    s << method << ",ssim,0,," << acc.mean_ssim() << '\n';
    s << method << ",mse,0,," << acc.mean_mse() << '\n';
  };
  emit("combined", summary.combined);
  emit("low_only", summary.low_only);
  emit("persistence", summary.persistence);
  return summary;
}

bool TheoryReport::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.passed || !r.mandatory; });
}

CapacityExperiment run_capacity_experiment(const RunConfig& cfg) {
  cfg.validate();
  EventSpec spec = cfg.event_spec();
  spec.speckle_amplitude = cfg.theory_speckle;
  const EventDataset ds = generate_dataset(static_cast<std::size_t>(cfg.theory_events), spec, cfg.data_seed + 7919);
  const std::size_t n_test = ds.size() / 5;
  const std::size_t n_train = ds.size() - n_test;
  const int S = cfg.frames, H = cfg.height, W = cfg.width;
  const SpectralMask mask = SpectralMask::from_fraction(H, W, cfg.rho);

  UNet net("cap", UNetConfig{S, S, 16, 2, 0});
  ParamSet<float> params;
  Rng rng(cfg.seed + 17);
  net.init(params, rng);
  auto as_input = [&](const SequenceField& s) { return s.to_tensor<float>().reshaped({1, S, H, W}); };

  Adam opt(cfg.adam(cfg.lr));
  for (int epoch = 0; epoch < cfg.theory_epochs; ++epoch) {
    int pending = 0;
    for (std::size_t i : shuffled(n_train, rng)) {
      Tape<float> tape;
      Var<float> out = net.forward(tape, params, tape.constant(as_input(ds.events[i].x)));
      Var<float> loss = mse(out, tape.constant(as_input(ds.events[i].y)));
      if (!std::isfinite(loss.value()[0])) throw DiagnosticError("capacity experiment: non-finite loss");
      tape.backward(scale(loss, 1.0 / cfg.batch_size));
      if (++pending == cfg.batch_size) {
        opt.step(params);
        pending = 0;
      }
    }
    if (pending > 0) opt.step(params);
  }

  const SequenceMap g = [&](const SequenceField& f) {
    Tape<float> tape(false);
    const Tensor<float> out = net.forward(tape, params, tape.constant(as_input(f))).value();
    return SequenceField::from_tensor(out.reshaped({S, 1, H, W}));
  };
  std::vector<SequenceField> probes;
  for (const EventPair& ev : ds.events) probes.push_back(ev.x);

  CapacityExperiment exp;
  exp.leakage = measure_leakage(g, probes, mask);
  for (std::size_t i = n_train; i < ds.size(); ++i) {
    const EventPair& ev = ds.events[i];
    CapacityCase c;
    c.high_fraction = band_energy(ev.y, mask).high_fraction();
    c.certificate = bottleneck_bound(ev.y, ev.x, mask, exp.leakage);
    certify(c.certificate, ev.y, g(ev.x));
    exp.cases.push_back(c);
  }
  return exp;
}

namespace {

// Largest-L1 slice of a [O, I, k, k] kernel, as a single-channel Field.
Field representative_slice(const Tensor<float>& w) {
  require(w.rank() == 4, "expected a 4-D convolution kernel");
  const int o = w.dim(0), in = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  double best = -1.0;
  int bo = 0, bi = 0;
  for (int a = 0; a < o; ++a)
    for (int b = 0; b < in; ++b) {
      double l1 = 0.0;
      for (int y = 0; y < kh; ++y)
        for (int x = 0; x < kw; ++x) l1 += std::abs(w.at(a, b, y, x));
      if (l1 > best) {
        best = l1;
        bo = a;
        bi = b;
      }
    }
  Field f(1, kh, kw);
  for (int y = 0; y < kh; ++y)
    for (int x = 0; x < kw; ++x) f(y, x) = w.at(bo, bi, y, x);
  return f;
}

}  // namespace

TheoryReport verify_theory(const RunConfig& cfg, DuoModel* trained) {
  TheoryReport rep;
  auto add = [&](std::string name, double bound, double measured, bool passed, bool mandatory = true) {
    rep.rows.push_back({std::move(name), bound, measured, passed, mandatory});
  };

  // Decay constants of the oversampled smoothing battery.
  constexpr int kTaps = 16;
  SpectralSampling battery_sampling{512, 4.0, static_cast<double>(kTaps)};
  const auto battery = kernel_battery(kTaps);
  for (const auto& [name, k] : battery) {
    const KernelProfile p = profile_kernel(k, battery_sampling);
    add("bv_decay/" + name + "/constant", p.bv_bound, p.decay_constant,
        std::isfinite(p.decay_constant) && p.decay_constant <= p.bv_bound * (1.0 + 1e-9) && p.decays());
    add("bv_decay/" + name + "/stability", 0.05, p.stability(), p.stability() <= 0.05);
  }
  {
    SpectralSampling flat{512, 8.0, 1.0};
    const KernelProfile p = profile_kernel(Field(1, 1, 1, 1.0), flat);
    const double ratio = p.decay_constant / p.half_range_constant;
    add("bv_decay/single_tap/flat_spectrum_flagged", 1.5, ratio, !p.decays());
  }

  // Composite envelopes.
  auto envelope_rows = [&](const std::string& name, const std::vector<Field>& stack, const SpectralSampling& s,
                           bool slope_mandatory) {
    const EnvelopeReport e = composite_envelope(stack, s);
    const std::string base = "envelope/" + name + "/L" + std::to_string(e.depth);
    add(base + "/violations", 0.0, static_cast<double>(e.violations), e.violations == 0);
    add(base + "/tail_slope", -e.depth + 0.25, e.tail_slope, e.slope_ok(), slope_mandatory);
  };
  for (const char* name : {"box_2d", "hat_2d", "gaussian_2d", "hann_2d", "box_1d", "hat_1d"}) {
    const Field* k = nullptr;
    for (const auto& [n, f] : battery)
      if (n == name) k = &f;
    for (int L = 1; L <= 3; ++L) envelope_rows(name, std::vector<Field>(static_cast<std::size_t>(L), *k), battery_sampling, true);
  }
  {
    std::vector<Field> mixed, random;
    for (int L = 1; L <= 3; ++L) {
      mixed.push_back(battery[static_cast<std::size_t>(4 + L)].second);
      envelope_rows("mixed_2d", mixed, battery_sampling, true);
      random.push_back(random_step_kernel(3, kTaps, true, cfg.seed + static_cast<std::uint64_t>(L)));
      envelope_rows("random_step_2d", random, battery_sampling, true);
    }
    std::vector<Field> with_zero = {battery[4].second, Field(1, kTaps, kTaps, 0.0)};
    envelope_rows("zero_layer", with_zero, battery_sampling, true);
  }

  // Capacity bound on a plain convolutional model.
  {
    const CapacityExperiment exp = run_capacity_experiment(cfg);
    double min_frac = 1.0;
    for (const CapacityCase& c : exp.cases) min_frac = std::min(min_frac, c.high_fraction);
    add("capacity/target_high_fraction_min", 0.30, min_frac, min_frac >= 0.30);
    add("capacity/leakage", 0.0, exp.leakage, true, false);
    for (std::size_t i = 0; i < exp.cases.size(); ++i) {
      const BottleneckCertificate& c = exp.cases[i].certificate;
      add("capacity/case" + std::to_string(i), c.bound, c.measured_error, c.holds());
    }
  }

  // Orthogonal two-stage error identity on random subspace-consistent triples.
  {
    const SpectralMask mask = SpectralMask::from_fraction(cfg.height, cfg.width, cfg.rho);
    Rng rng(cfg.seed + 31);
    auto random_seq = [&]() {
      SequenceField s(2, 1, cfg.height, cfg.width);
      for (int f = 0; f < s.length(); ++f)
        for (double& v : s[f].values()) v = rng.normal();
      return s;
    };
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const SequenceField y = random_seq(), g1 = random_seq(), g2 = random_seq();
      worst = std::max(worst, two_stage_identity_check(y, g1, g2, mask).relative_error);
    }
    add("two_stage/identity_1000", 1e-5, worst, worst <= 1e-5);
  }

  if (trained != nullptr) {
    DuoModel& m = *trained;
    std::vector<Field> stack;
    for (const std::string& id : m.low.denoiser().full_resolution_kernels())
      stack.push_back(representative_slice(m.params[id].value()));
    // Index units of the forecast grid.
    SpectralSampling grid{256, 0.0, static_cast<double>(m.cfg.height)};
    const EnvelopeReport e = composite_envelope(stack, grid);
    add("trained/low_denoiser/L" + std::to_string(e.depth) + "/violations", 0.0, static_cast<double>(e.violations),
        e.violations == 0);
    add("trained/low_denoiser/L" + std::to_string(e.depth) + "/tail_slope", -e.depth + 0.25, e.tail_slope,
        e.slope_ok(), false);
    add("trained/low_denoiser/constant", 0.0, e.constant, std::isfinite(e.constant), false);

    const EventSpec spec = m.cfg.event_spec();
    const EventDataset probes_ds = generate_dataset(10, spec, m.cfg.data_seed + 104729);
    const SequenceMap pred = [&](const SequenceField& f) { return base_forecast(m.low, m.params, f); };
    std::vector<SequenceField> probes;
    for (const EventPair& ev : probes_ds.events) probes.push_back(ev.x);
    const double eps = measure_leakage(pred, probes, m.mask);
    add("trained/low_predictor/leakage", 0.0, eps, std::isfinite(eps), false);
    double margin = std::numeric_limits<double>::infinity();
    for (const EventPair& ev : probes_ds.events) {
      BottleneckCertificate c = bottleneck_bound(ev.y, ev.x, m.mask, eps);
      certify(c, ev.y, pred(ev.x));
      margin = std::min(margin, c.measured_error - c.bound);
    }
    add("trained/low_predictor/certificate_margin", 0.0, margin, margin >= 0.0);
  }
  return rep;
}

void write_theory_report(const std::string& path, const TheoryReport& report) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write theory report '" + path + "'");
  out << "name,bound,measured,pass,mandatory\n" << std::setprecision(9);
  for (const CheckRow& r : report.rows)
    out << r.name << ',' << r.bound << ',' << r.measured << ',' << (r.passed ? "pass" : "FAIL") << ','
        << (r.mandatory ? "yes" : "no") << '\n';
}

}  // namespace duocast

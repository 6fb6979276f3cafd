// Command-line front end: gen-data, train, forecast, eval, verify-theory, render.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "duocast/io.hpp"
#include "duocast/pipeline.hpp"

using namespace duocast;

namespace {

struct Common {
  std::string config_file;
  std::map<std::string, std::string> overrides;
};

// Every configuration key becomes a --key flag on the subcommand.
void add_config_flags(CLI::App* sub, Common& common) {
  sub->add_option("--config", common.config_file, "key=value configuration file");
  for (const ConfigKey& k : config_schema()) {
    sub->add_option_function<std::string>(
        "--" + k.key, [&common, key = k.key](const std::string& v) { common.overrides[key] = v; }, k.description);
  }
}

RunConfig resolve(const Common& common) {
  return resolve_config(common.config_file, common.overrides, std::getenv("DUOCAST_SEED"));
}

int cmd_gen_data(const RunConfig& cfg) {
  gen_data(cfg);
  const SplitSizes s = split_sizes(static_cast<std::size_t>(cfg.events));
  std::cout << "wrote " << cfg.events << " events to " << cfg.data << " (train " << s.train << ", val " << s.val
            << ", test " << s.test << ")\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const TrainReport r = train(cfg, &std::cout);
  std::cout << "held-out predictor mse " << r.heldout_predictor_mse << " vs climatology "
            << r.heldout_climatology_mse << "\n"
            << "checkpoint written to " << cfg.checkpoint << "\n";
  return 0;
}

int cmd_forecast(const RunConfig& cfg, const std::string& input, const std::string& output, const std::string& split) {
  DuoModel model = model_from_checkpoint(load_checkpoint(cfg.checkpoint));
  model.cfg.high_samples = cfg.high_samples;  // inference-time setting
  const EventDataset all = read_duo1(input.empty() ? cfg.data : input);
  const EventDataset src = split == "test" ? test_split(all) : all;
  std::size_t n = src.size();
  if (cfg.eval_events > 0) n = std::min(n, static_cast<std::size_t>(cfg.eval_events));
  EventDataset out;
  out.frames = cfg.frames;
  out.height = cfg.height;
  out.width = cfg.width;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(cfg.sample_seed + 1000003ull * i);
    const ForecastResult f = forecast(model, src.events[i].x, cfg.horizon, rng);
    for (std::size_t p = 0; p < f.passes.size(); ++p) out.events.push_back({f.conditions[p], f.passes[p]});
  }
  write_duo1(output, out);
  std::cout << "forecast " << n << " events, horizon " << cfg.horizon << ", " << out.events.size()
            << " passes written to " << output << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  DuoModel model = model_from_checkpoint(load_checkpoint(cfg.checkpoint));
  model.cfg.high_samples = cfg.high_samples;  // inference-time setting
  const EventDataset test = test_split(read_duo1(cfg.data));
  const EvalSummary s = evaluate(model, test, cfg, cfg.out_dir);
  std::cout << "events " << s.combined.events() << ", rows " << s.rows << "\n"
            << "CSI-M combined " << s.combined.csi_m() << ", low-only " << s.low_only.csi_m() << ", persistence "
            << s.persistence.csi_m() << "\n"
            << "SSIM combined " << s.combined.mean_ssim() << ", MSE combined " << s.combined.mean_mse() << "\n";
  return 0;
}

int cmd_verify(const RunConfig& cfg, bool use_model) {
  std::optional<DuoModel> model;
  if (use_model && std::filesystem::exists(cfg.checkpoint)) model.emplace(model_from_checkpoint(load_checkpoint(cfg.checkpoint)));
  const TheoryReport rep = verify_theory(cfg, model ? &*model : nullptr);
  const std::string path = (std::filesystem::path(cfg.out_dir) / "theory_report.csv").string();
  write_theory_report(path, rep);
  int failed = 0;
  for (const CheckRow& r : rep.rows) {
    if (!r.passed) {
      std::cout << (r.mandatory ? "FAIL " : "note ") << r.name << " bound " << r.bound << " measured " << r.measured
                << "\n";
      if (r.mandatory) ++failed;
    }
  }
  std::cout << rep.rows.size() << " checks, " << failed << " mandatory failures; report at " << path << "\n";
  return rep.passed() ? 0 : 1;
}

int cmd_render(const RunConfig& cfg, const std::string& input, std::size_t event, const std::string& part) {
  const EventDataset ds = read_duo1(input.empty() ? cfg.data : input);
  require(event < ds.size(), "event index " + std::to_string(event) + " out of range");
  const EventPair& ev = ds.events[event];
  SequenceField seq = part == "x" ? ev.x : part == "y" ? ev.y : concat_time(ev.x, ev.y);
  const auto paths = render_sequence(clamp01(seq), cfg.out_dir);
  std::cout << "rendered " << paths.size() << " frames into " << cfg.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-band diffusion nowcasting on synthetic radar sequences"};
  app.require_subcommand(1);
  Common gen, tr, fc, ev, vt, rd;
  auto* s_gen = app.add_subcommand("gen-data", "generate the synthetic benchmark as DUO1");
  add_config_flags(s_gen, gen);
  auto* s_train = app.add_subcommand("train", "train both branches and write a checkpoint");
  add_config_flags(s_train, tr);
  auto* s_fc = app.add_subcommand("forecast", "autoregressive forecasts written as DUO1 (one event per pass)");
  add_config_flags(s_fc, fc);
  std::string fc_input, fc_output = "forecast.duo1", fc_split = "test";
  s_fc->add_option("--input", fc_input, "DUO1 file with condition sequences (default: data)");
  s_fc->add_option("--output", fc_output, "DUO1 output path");
  s_fc->add_option("--split", fc_split, "events to forecast")->check(CLI::IsMember({"test", "all"}));
  auto* s_eval = app.add_subcommand("eval", "metrics over the test split");
  add_config_flags(s_eval, ev);
  auto* s_vt = app.add_subcommand("verify-theory", "spectral capacity checks; nonzero exit on failure");
  add_config_flags(s_vt, vt);
  bool no_model = false;
  s_vt->add_flag("--no-model", no_model, "skip the rows of the trained checkpoint");
  auto* s_rd = app.add_subcommand("render", "write PGM frames of one event");
  add_config_flags(s_rd, rd);
  std::string rd_input, rd_part = "both";
  std::size_t rd_event = 0;
  s_rd->add_option("--input", rd_input, "DUO1 file (default: data)");
  s_rd->add_option("--event", rd_event, "event index");
  s_rd->add_option("--part", rd_part, "frames to render")->check(CLI::IsMember({"x", "y", "both"}));

  CLI11_PARSE(app, argc, argv);
  try {
    if (s_gen->parsed()) return cmd_gen_data(resolve(gen));
    if (s_train->parsed()) return cmd_train(resolve(tr));
    if (s_fc->parsed()) return cmd_forecast(resolve(fc), fc_input, fc_output, fc_split);
    if (s_eval->parsed()) return cmd_eval(resolve(ev));
    if (s_vt->parsed()) return cmd_verify(resolve(vt), !no_model);
    if (s_rd->parsed()) return cmd_render(resolve(rd), rd_input, rd_event, rd_part);
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const DiagnosticError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

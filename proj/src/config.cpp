#include "duocast/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

namespace duocast {

namespace {

using Member = std::variant<int RunConfig::*, double RunConfig::*, std::uint64_t RunConfig::*, std::string RunConfig::*>;

struct Entry {
  const char* key;
  Member member;
  const char* description;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"height", &RunConfig::height, "grid height in pixels (multiple of 4)"},
      {"width", &RunConfig::width, "grid width in pixels (multiple of 4)"},
      {"frames", &RunConfig::frames, "condition and target length S"},
      {"horizon", &RunConfig::horizon, "forecast length in frames"},
      {"events", &RunConfig::events, "events generated by gen-data"},
      {"speckle", &RunConfig::speckle, "speckle amplitude of generated events"},
      {"data_seed", &RunConfig::data_seed, "base seed of generated events"},
      {"rho", &RunConfig::rho, "band cutoff as a fraction of min(H, W) / 2"},
      {"theta_int", &RunConfig::theta_int, "high-intensity threshold"},
      {"pred_base", &RunConfig::pred_base, "base predictor width"},
      {"den_base", &RunConfig::den_base, "low denoiser width"},
      {"time_dim", &RunConfig::time_dim, "timestep embedding size"},
      {"latent_channels", &RunConfig::latent_channels, "autoencoder latent channels"},
      {"ae_width", &RunConfig::ae_width, "autoencoder hidden width"},
      {"model_dim", &RunConfig::model_dim, "high denoiser token width"},
      {"blocks", &RunConfig::blocks, "high denoiser attention blocks"},
      {"T", &RunConfig::T, "diffusion steps"},
      {"beta_start", &RunConfig::beta_start, "first noise variance"},
      {"beta_end", &RunConfig::beta_end, "last noise variance"},
      {"lambda1", &RunConfig::lambda1, "weight of the predictor loss"},
      {"lambda2", &RunConfig::lambda2, "weight of the low-branch diffusion loss"},
      {"lambda3", &RunConfig::lambda3, "weight of the high-branch diffusion loss"},
      {"lr", &RunConfig::lr, "Adam learning rate for the diffusion phases"},
      {"ae_lr", &RunConfig::ae_lr, "Adam learning rate for autoencoder pretraining"},
      {"batch_size", &RunConfig::batch_size, "events per optimizer step"},
      {"epochs", &RunConfig::epochs, "epochs of phase 1 (and of phases 2, 3 when unset)"},
      {"ae_epochs", &RunConfig::ae_epochs, "epochs of autoencoder pretraining; 0 = epochs"},
      {"high_epochs", &RunConfig::high_epochs, "epochs of high-branch training; 0 = epochs"},
      {"checkpoint_every", &RunConfig::checkpoint_every, "epochs between periodic checkpoints; 0 = off"},
      {"seed", &RunConfig::seed, "initialization and training seed"},
      {"eval_events", &RunConfig::eval_events, "test events evaluated; 0 = all"},
      {"high_samples", &RunConfig::high_samples, "high-band samples averaged per forecast pass"},
      {"sample_seed", &RunConfig::sample_seed, "seed of forecast sampling"},
      {"theory_speckle", &RunConfig::theory_speckle, "speckle amplitude of the capacity experiment"},
      {"theory_events", &RunConfig::theory_events, "events in the capacity experiment"},
      {"theory_epochs", &RunConfig::theory_epochs, "training epochs of the capacity experiment"},
      {"data", &RunConfig::data, "DUO1 dataset path"},
      {"checkpoint", &RunConfig::checkpoint, "DUOC checkpoint path"},
      {"out_dir", &RunConfig::out_dir, "directory for reports and rendered frames"},
  };
  return table;
}

const Entry& find_entry(const std::string& key) {
  for (const Entry& e : entries())
    if (key == e.key) return e;
  throw ConfigError("unknown configuration key '" + key + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw ConfigError("invalid value '" + text + "' for key '" + key + "'");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

int RunConfig::phase_epochs(int phase) const {
  if (phase == 2 && ae_epochs > 0) return ae_epochs;
  if (phase == 3 && high_epochs > 0) return high_epochs;
  return epochs;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  check(height >= 8 && width >= 8 && height % 4 == 0 && width % 4 == 0,
        "height and width must be multiples of 4 and at least 8");
  check(height <= 65535 && width <= 65535, "grid too large");
  check(frames >= 1 && frames <= 65535, "frames must be in [1, 65535]");
  check(horizon >= 1, "horizon must be positive");
  check(events >= 1, "events must be positive");
  check(speckle >= 0.0 && theory_speckle >= 0.0, "speckle amplitudes must be >= 0");
  check(rho > 0.0 && rho <= 1.5, "rho must be in (0, 1.5]");
  check(theta_int >= 0.0 && theta_int <= 1.0, "theta_int must be in [0, 1]");
  check(pred_base >= 1 && den_base >= 1 && time_dim >= 2 && time_dim % 2 == 0, "bad low-branch widths");
  check(latent_channels >= 1 && ae_width >= 1 && model_dim >= 2 && model_dim % 2 == 0 && blocks >= 0,
        "bad high-branch widths");
  check(T >= 1, "T must be positive");
  check(beta_start > 0.0 && beta_end >= beta_start && beta_end < 1.0, "need 0 < beta_start <= beta_end < 1");
  check(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0, "loss weights must be >= 0");
  check(lr > 0.0 && ae_lr > 0.0, "learning rates must be positive");
  check(batch_size >= 1, "batch_size must be positive");
  check(epochs >= 0 && ae_epochs >= 0 && high_epochs >= 0 && checkpoint_every >= 0, "epoch counts must be >= 0");
  check(eval_events >= 0, "eval_events must be >= 0");
  check(high_samples >= 1, "high_samples must be >= 1");
  check(theory_events >= 10 && theory_epochs >= 1, "capacity experiment needs >= 10 events and >= 1 epoch");
}

LowConfig RunConfig::low_config() const {
  LowConfig c;
  c.frames = frames;
  c.height = height;
  c.width = width;
  c.pred_base = pred_base;
  c.den_base = den_base;
  c.time_dim = time_dim;
  c.theta_int = theta_int;
  c.conv3_temporal = std::min(c.conv3_temporal, frames);
  return c;
}

HighConfig RunConfig::high_config() const {
  HighConfig c;
  c.frames = frames;
  c.height = height;
  c.width = width;
  c.latent_channels = latent_channels;
  c.ae_width = ae_width;
  c.model_dim = model_dim;
  c.blocks = blocks;
  c.time_dim = time_dim;
  return c;
}

EventSpec RunConfig::event_spec() const {
  EventSpec s;
  s.height = height;
  s.width = width;
  s.frames = frames;
  s.total_frames = 2 * frames;
  s.speckle_amplitude = speckle;
  return s;
}

AdamConfig RunConfig::adam(double rate) const {
  AdamConfig a;
  a.lr = rate;
  return a;
}

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const Entry& e : entries()) k.push_back({e.key, e.description});
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& raw) {
  const Entry& e = find_entry(key);
  const std::string value = trim(raw);
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          if (value.empty()) throw ConfigError("empty value for key '" + key + "'");
          cfg.*member = value;
        } else if constexpr (std::is_same_v<T, double>) {
          const double v = parse_number<double>(key, value);
          if (!std::isfinite(v)) throw ConfigError("non-finite value for key '" + key + "'");
          cfg.*member = v;
        } else {
          cfg.*member = parse_number<T>(key, value);
        }
      },
      e.member);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  const Entry& e = find_entry(key);
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) return cfg.*member;
        else if constexpr (std::is_same_v<T, double>) return format_double(cfg.*member);
        else return std::to_string(cfg.*member);
      },
      e.member);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    try {
      set_config_value(base, key, line.substr(eq + 1));
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + err.what());
    }
  }
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_string(const RunConfig& cfg) {
  std::string out;
  for (const Entry& e : entries()) out += std::string(e.key) + "=" + get_config_value(cfg, e.key) + "\n";
  return out;
}

RunConfig resolve_config(const std::string& file, const std::map<std::string, std::string>& overrides,
                         const char* seed_env) {
  RunConfig cfg;
  if (!file.empty()) cfg = load_config_file(file, cfg);
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  if (seed_env != nullptr && *seed_env != '\0') set_config_value(cfg, "seed", seed_env);
  cfg.validate();
  return cfg;
}

}  // namespace duocast

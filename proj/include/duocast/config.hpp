#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "duocast/highfreq.hpp"
#include "duocast/lowfreq.hpp"
#include "duocast/optim.hpp"
#include "duocast/synthdata.hpp"

namespace duocast {

// Every tunable of a run. Text form is flat `key=value` lines; see
// config_schema() for the keys and their meaning.
struct RunConfig {
  // geometry
  int height = 32;
  int width = 32;
  int frames = 5;    // S, condition and target length
  int horizon = 5;   // forecast length in frames

  // data
  int events = 100;
  double speckle = 0.35;
  std::uint64_t data_seed = 1;

  // band split and low branch
  double rho = 0.25;
  double theta_int = 0.6;
  int pred_base = 16;
  int den_base = 16;
  int time_dim = 32;

  // high branch
  int latent_channels = 8;
  int ae_width = 32;
  int model_dim = 64;
  int blocks = 2;

  // diffusion
  int T = 50;
  double beta_start = 1e-4;
  double beta_end = 0.12;

  // training
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double lr = 2e-3;
  double ae_lr = 2e-3;
  int batch_size = 4;
  int epochs = 12;       // phase 1
  int ae_epochs = 0;     // phase 2; 0 means `epochs`
  int high_epochs = 60;  // phase 3; 0 means `epochs`
  int checkpoint_every = 0;  // epochs between periodic checkpoints; 0 disables
  std::uint64_t seed = 7;

  // evaluation and theory
  int eval_events = 0;  // 0 means the whole test split
  int high_samples = 8;  // high-band samples averaged per forecast pass
  std::uint64_t sample_seed = 11;
  double theory_speckle = 1.5;
  int theory_events = 40;
  int theory_epochs = 10;

  // paths
  std::string data = "data.duo1";
  std::string checkpoint = "model.duoc";
  std::string out_dir = "out";

  int phase_epochs(int phase) const;
  void validate() const;

  LowConfig low_config() const;
  HighConfig high_config() const;
  EventSpec event_spec() const;
  AdamConfig adam(double rate) const;
};

struct ConfigKey {
  std::string key;
  std::string description;
};

const std::vector<ConfigKey>& config_schema();

// Sets one key from text; unknown keys and unparsable values throw ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// Parses `key=value` lines on top of `base`. Blank lines and text after '#'
// are ignored.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::string& path, RunConfig base = {});
// Canonical text: every schema key in schema order.
std::string config_to_string(const RunConfig& cfg);

// defaults < config file < command-line overrides < DUOCAST_SEED.
RunConfig resolve_config(const std::string& file, const std::map<std::string, std::string>& overrides,
                         const char* seed_env);

}  // namespace duocast

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duocast/field.hpp"

namespace duocast {

// Ranges are inclusive [lo, hi]; a concrete event draws one value per range.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct EventSpec {
  int height = 32;
  int width = 32;
  int frames = 5;         // S; one event spans 2S frames
  int total_frames = 10;  // must be >= 2 * frames

  int blobs_min = 2;
  int blobs_max = 4;
  Range blob_sigma{2.5, 6.0};     // px, along the minor axis
  Range blob_anisotropy{1.0, 2.5};
  Range blob_amplitude{0.5, 1.3};
  Range blob_growth{-0.06, 0.06};  // log-amplitude change per frame

  Range advection_speed{0.3, 1.2};  // px/frame, uniform translation
  Range rotation_rate{-0.02, 0.02};  // rad/frame about the grid centre

  double front_probability = 0.8;
  Range front_speed{0.5, 1.5};     // px/frame along the front normal
  Range front_amplitude{0.6, 1.4};
  Range front_gradient{-0.6, 0.6};  // relative intensity change along the front per grid width
  double front_edge = 0.6;          // px, logistic scale of the leading edge
  double front_width = 4.0;         // px, Gaussian width of the trailing band

  double speckle_amplitude = 0.35;
  double speckle_length = 2.0;  // px, half-period of the speckle waves
  int speckle_waves = 64;

  std::uint64_t seed = 0;

  void validate() const;
};

struct Blob {
  double cy = 0.0, cx = 0.0;  // material position at frame 0
  double sigma_major = 1.0, sigma_minor = 1.0;
  double angle = 0.0;
  double amplitude = 0.0;
  double growth = 0.0;
};

struct Front {
  bool enabled = false;
  double ny = 0.0, nx = 1.0;  // unit normal, direction of travel
  double offset = 0.0;        // signed distance of the edge from the grid centre at frame 0
  double speed = 0.0;
  double amplitude = 0.0;
  double gradient = 0.0;
  double edge = 0.6;
  double width = 4.0;
};

struct SpeckleWave {
  double ky = 0.0, kx = 0.0;  // cycles per pixel
  double phase = 0.0;
};

// Fully concrete event; rendering is a pure function of this.
struct EventParams {
  int height = 32;
  int width = 32;
  int frames = 5;
  int total_frames = 10;
  std::vector<Blob> blobs;
  double uy = 0.0, ux = 0.0;  // translation velocity, px/frame
  double rotation = 0.0;      // rad/frame
  Front front;
  double speckle_amplitude = 0.0;
  std::vector<SpeckleWave> speckle;
};

struct EventPair {
  SequenceField x;  // first S frames
  SequenceField y;  // next S frames
};

struct EventDataset {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<EventPair> events;

  std::size_t size() const { return events.size(); }
};

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};

EventParams sample_event(const EventSpec& spec);
// All total_frames frames of the simulation, values in [0, 1].
SequenceField render_frames(const EventParams& params);
// First 2S rendered frames cut into (X, Y).
EventPair render_event(const EventParams& params);
EventPair generate_event(const EventSpec& spec);

// Event i uses seed base_seed + i.
EventDataset generate_dataset(std::size_t n_events, const EventSpec& spec_template, std::uint64_t base_seed);

// Index split: val and test take floor(n/10) events each, from the end.
SplitSizes split_sizes(std::size_t n);
EventDataset train_split(const EventDataset& ds);
EventDataset val_split(const EventDataset& ds);
EventDataset test_split(const EventDataset& ds);

}  // namespace duocast

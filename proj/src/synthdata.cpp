#include "duocast/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "duocast/rng.hpp"

namespace duocast {

namespace {

void check_range(const Range& r, const char* name, double min_lo) {
  require(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi,
          std::string("event spec: range ") + name + " is empty or non-finite");
  require(r.lo >= min_lo, std::string("event spec: range ") + name + " is out of bounds");
}

double draw(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

void EventSpec::validate() const {
  require(height >= 4 && width >= 4, "event spec: grid must be at least 4x4");
  require(height <= 65535 && width <= 65535, "event spec: grid too large");
  require(frames >= 1, "event spec: frames must be positive");
  require(total_frames >= 2 * frames, "event spec: total_frames must be at least 2 * frames");
  require(blobs_min >= 0 && blobs_max >= blobs_min, "event spec: bad blob count range");
  check_range(blob_sigma, "blob_sigma", 1e-3);
  check_range(blob_anisotropy, "blob_anisotropy", 1.0);
  check_range(blob_amplitude, "blob_amplitude", 0.0);
  check_range(blob_growth, "blob_growth", -10.0);
  check_range(advection_speed, "advection_speed", 0.0);
  check_range(rotation_rate, "rotation_rate", -10.0);
  check_range(front_speed, "front_speed", 0.0);
  check_range(front_amplitude, "front_amplitude", 0.0);
  check_range(front_gradient, "front_gradient", -10.0);
  require(front_probability >= 0.0 && front_probability <= 1.0, "event spec: front_probability outside [0, 1]");
  require(front_edge > 0.0 && front_width > 0.0, "event spec: front edge and width must be positive");
  require(speckle_amplitude >= 0.0 && std::isfinite(speckle_amplitude), "event spec: bad speckle amplitude");
  require(speckle_length > 0.0, "event spec: speckle length must be positive");
  require(speckle_waves >= 1, "event spec: need at least one speckle wave");
}

EventParams sample_event(const EventSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  EventParams p;
  p.height = spec.height;
  p.width = spec.width;
  p.frames = spec.frames;
  p.total_frames = spec.total_frames;

  const double two_pi = 2.0 * std::numbers::pi;
  const double span = spec.total_frames - 1;
  const double dir = rng.uniform(0.0, two_pi);
  const double speed = draw(rng, spec.advection_speed);
  p.uy = speed * std::sin(dir);
  p.ux = speed * std::cos(dir);
  p.rotation = draw(rng, spec.rotation_rate);

  const int nblobs = rng.uniform_int(spec.blobs_min, spec.blobs_max);
  for (int i = 0; i < nblobs; ++i) {
    Blob b;
    // Start half a trajectory upstream so blobs stay near the grid.
    b.cy = rng.uniform(0.15, 0.85) * spec.height - 0.5 * span * p.uy;
    b.cx = rng.uniform(0.15, 0.85) * spec.width - 0.5 * span * p.ux;
    b.sigma_minor = draw(rng, spec.blob_sigma);
    b.sigma_major = b.sigma_minor * draw(rng, spec.blob_anisotropy);
    b.angle = rng.uniform(0.0, std::numbers::pi);
    b.amplitude = draw(rng, spec.blob_amplitude);
    b.growth = draw(rng, spec.blob_growth);
    p.blobs.push_back(b);
  }

  Front& f = p.front;
  f.enabled = rng.uniform() < spec.front_probability;
  const double fdir = rng.uniform(0.0, two_pi);
  f.ny = std::sin(fdir);
  f.nx = std::cos(fdir);
  f.speed = draw(rng, spec.front_speed);
  f.offset = -0.5 * span * f.speed + rng.uniform(-0.2, 0.2) * std::min(spec.height, spec.width);
  f.amplitude = draw(rng, spec.front_amplitude);
  f.gradient = draw(rng, spec.front_gradient);
  f.edge = spec.front_edge;
  f.width = spec.front_width;

  p.speckle_amplitude = spec.speckle_amplitude;
  const double k_mid = 1.0 / (2.0 * spec.speckle_length);
  for (int i = 0; i < spec.speckle_waves; ++i) {
    SpeckleWave w;
    const double k = rng.uniform(0.6, 1.4) * k_mid;
    const double a = rng.uniform(0.0, two_pi);
    w.ky = k * std::sin(a);
    w.kx = k * std::cos(a);
    w.phase = rng.uniform(0.0, two_pi);
    p.speckle.push_back(w);
  }
  return p;
}

SequenceField render_frames(const EventParams& p) {
  require(p.height >= 1 && p.width >= 1 && p.total_frames >= 1, "render: bad event geometry");
  const double two_pi = 2.0 * std::numbers::pi;
  const double cy = 0.5 * (p.height - 1), cx = 0.5 * (p.width - 1);
  const double wave_norm = p.speckle.empty() ? 0.0 : std::sqrt(2.0 / static_cast<double>(p.speckle.size()));
  std::vector<Field> frames;
  frames.reserve(static_cast<std::size_t>(p.total_frames));
  for (int fi = 0; fi < p.total_frames; ++fi) {
    const double tau = fi;
    const double ca = std::cos(-p.rotation * tau), sa = std::sin(-p.rotation * tau);
    std::vector<double> amp(p.blobs.size());
    for (std::size_t b = 0; b < p.blobs.size(); ++b) amp[b] = p.blobs[b].amplitude * std::exp(p.blobs[b].growth * tau);
    Field out(1, p.height, p.width);
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        // Material coordinate: undo translation, then rotation about the centre.
        const double ry = y - p.uy * tau - cy, rx = x - p.ux * tau - cx;
        const double qy = cy + ca * ry - sa * rx;
        const double qx = cx + sa * ry + ca * rx;

        double sum = 0.0;
        for (std::size_t b = 0; b < p.blobs.size(); ++b) {
          const Blob& bl = p.blobs[b];
          const double dy = qy - bl.cy, dx = qx - bl.cx;
          const double c = std::cos(bl.angle), s = std::sin(bl.angle);
          const double u = c * dx + s * dy, v = -s * dx + c * dy;
          sum += amp[b] * std::exp(-0.5 * (u * u / (bl.sigma_major * bl.sigma_major) +
                                           v * v / (bl.sigma_minor * bl.sigma_minor)));
        }

        const Front& f = p.front;
        if (f.enabled) {
          const double py = y - cy, px = x - cx;
          const double d = f.ny * py + f.nx * px - f.offset - f.speed * tau;
          double profile = logistic(-d / f.edge);
          if (d < 0.0) profile *= std::exp(-d * d / (2.0 * f.width * f.width));
          const double along = -f.nx * py + f.ny * px;
          const double g = std::max(0.0, 1.0 + f.gradient * along / p.width);
          sum += f.amplitude * profile * g;
        }

        const double intensity = 1.0 - std::exp(-sum);
        double noise = 0.0;
        if (p.speckle_amplitude > 0.0) {
          for (const SpeckleWave& w : p.speckle) noise += std::cos(two_pi * (w.ky * qy + w.kx * qx) + w.phase);
          noise *= wave_norm;
        }
        out(y, x) = std::clamp(intensity * (1.0 + p.speckle_amplitude * noise), 0.0, 1.0);
      }
    frames.push_back(std::move(out));
  }
  return SequenceField(std::move(frames));
}

EventPair render_event(const EventParams& params) {
  require(params.total_frames >= 2 * params.frames, "render: total_frames must be at least 2 * frames");
  const SequenceField all = render_frames(params);
  return {all.slice(0, params.frames), all.slice(params.frames, params.frames)};
}

EventPair generate_event(const EventSpec& spec) { return render_event(sample_event(spec)); }

EventDataset generate_dataset(std::size_t n_events, const EventSpec& spec_template, std::uint64_t base_seed) {
  spec_template.validate();
  EventDataset ds;
  ds.frames = spec_template.frames;
  ds.height = spec_template.height;
  ds.width = spec_template.width;
  ds.events.reserve(n_events);
  for (std::size_t i = 0; i < n_events; ++i) {
    EventSpec spec = spec_template;
    spec.seed = base_seed + i;
    ds.events.push_back(generate_event(spec));
  }
  return ds;
}

SplitSizes split_sizes(std::size_t n) {
  SplitSizes s;
  s.val = n / 10;
  s.test = n / 10;
  s.train = n - s.val - s.test;
  return s;
}

namespace {

EventDataset subset(const EventDataset& ds, std::size_t begin, std::size_t count) {
  EventDataset out;
  out.frames = ds.frames;
  out.height = ds.height;
  out.width = ds.width;
  out.events.assign(ds.events.begin() + static_cast<std::ptrdiff_t>(begin),
                    ds.events.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return out;
}

}  // namespace

EventDataset train_split(const EventDataset& ds) { return subset(ds, 0, split_sizes(ds.size()).train); }

EventDataset val_split(const EventDataset& ds) {
  const SplitSizes s = split_sizes(ds.size());
  return subset(ds, s.train, s.val);
}

EventDataset test_split(const EventDataset& ds) {
  const SplitSizes s = split_sizes(ds.size());
  return subset(ds, s.train + s.val, s.test);
}

}  // namespace duocast

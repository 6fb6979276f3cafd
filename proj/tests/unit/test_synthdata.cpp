#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <string_view>

#include "duocast/spectral.hpp"
#include "duocast/synthdata.hpp"
#include "support.hpp"

using namespace duocast;
using namespace duocast::test;

namespace {

double high_fraction(const SequenceField& s, const SpectralMask& mask) {
  const BandEnergy e = band_energy(s, mask);
  return e.high / (e.low + e.high);
}

bool bit_identical(const SequenceField& a, const SequenceField& b) {
  if (!a.same_shape(b)) return false;
  for (int i = 0; i < a.length(); ++i)
    if (std::memcmp(a[i].values().data(), b[i].values().data(), a[i].size() * sizeof(double)) != 0) return false;
  return true;
}

std::size_t event_hash(const EventPair& e) {
  std::size_t h = 0;
  for (const SequenceField* s : {&e.x, &e.y})
    for (const Field& f : s->frames()) {
      std::string_view bytes(reinterpret_cast<const char*>(f.values().data()), f.size() * sizeof(double));
      h = h * 1000003u ^ std::hash<std::string_view>{}(bytes);
    }
  return h;
}

// Intensity-weighted mean of the coordinate along the given axis.
double centroid(const Field& f, bool along_x) {
  double m = 0.0, c = 0.0;
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      m += f(y, x);
      c += f(y, x) * (along_x ? x : y);
    }
  return c / m;
}

EventSpec front_only_spec(std::uint64_t seed) {
  EventSpec spec;
  spec.height = spec.width = 64;
  spec.blobs_min = spec.blobs_max = 0;
  spec.front_probability = 1.0;
  spec.speckle_amplitude = 0.0;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("events are deterministic per seed and stay in [0, 1]") {
  EventSpec spec;
  spec.seed = 42;
  const EventPair a = generate_event(spec), b = generate_event(spec);
  CHECK(bit_identical(a.x, b.x));
  CHECK(bit_identical(a.y, b.y));
  CHECK(a.x.length() == 5);
  CHECK(a.y.length() == 5);
  spec.seed = 43;
  CHECK_FALSE(bit_identical(generate_event(spec).x, a.x));
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    spec.seed = seed;
    spec.speckle_amplitude = 2.0;
    const EventPair e = generate_event(spec);
    bool in_range = true;
    for (const SequenceField* s : {&e.x, &e.y})
      for (const Field& f : s->frames())
        for (double v : f.values()) in_range = in_range && std::isfinite(v) && v >= 0.0 && v <= 1.0;
    CHECK(in_range);
  }
}

TEST_CASE("X and Y are cut from one continuous simulation") {
  EventSpec spec;
  spec.seed = 5;
  spec.total_frames = 14;
  const EventParams p = sample_event(spec);
  const SequenceField all = render_frames(p);
  REQUIRE(all.length() == 14);
  const EventPair e = render_event(p);
  CHECK(bit_identical(e.x, all.slice(0, 5)));
  CHECK(bit_identical(e.y, all.slice(5, 5)));
}

TEST_CASE("zero speckle keeps the high band under 10 percent") {
  EventSpec spec;
  spec.speckle_amplitude = 0.0;
  const SpectralMask mask = SpectralMask::from_fraction(32, 32, 0.25);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    spec.seed = seed;
    const EventPair e = generate_event(spec);
    worst = std::max({worst, high_fraction(e.x, mask), high_fraction(e.y, mask)});
  }
  CHECK(worst < 0.10);
}

TEST_CASE("speckle amplitude raises the high-band fraction") {
  const SpectralMask mask = SpectralMask::from_fraction(32, 32, 0.25);
  double previous = -1.0;
  for (double amp : {0.0, 0.2, 0.4, 0.8, 1.5}) {
    EventSpec spec;
    spec.speckle_amplitude = amp;
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
      spec.seed = 100 + seed;
      mean += high_fraction(generate_event(spec).y, mask) / 12.0;
    }
    CHECK(mean > previous);
    previous = mean;
  }
}

TEST_CASE("front centroid moves at the front speed") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    EventParams p = sample_event(front_only_spec(seed));
    const bool along_x = seed % 2 == 0;
    p.front.ny = along_x ? 0.0 : 1.0;
    p.front.nx = along_x ? 1.0 : 0.0;
    p.front.gradient = 0.0;
    p.front.offset = -12.0;
    p.uy = p.ux = 0.0;
    p.rotation = 0.0;
    const SequenceField frames = render_frames(p);
    for (int i = 1; i < frames.length(); ++i) {
      const double shift = centroid(frames[i], along_x) - centroid(frames[i - 1], along_x);
      CHECK(std::abs(shift - p.front.speed) <= 0.5);
    }
  }
}

TEST_CASE("datasets: seeds, distinct events and splits") {
  EventSpec spec;
  const EventDataset ds = generate_dataset(100, spec, 1000);
  REQUIRE(ds.size() == 100);
  std::set<std::size_t> hashes;
  for (const EventPair& e : ds.events) hashes.insert(event_hash(e));
  CHECK(hashes.size() == 100);
  spec.seed = 1007;
  const EventPair seventh = generate_event(spec);
  CHECK(bit_identical(seventh.x, ds.events[7].x));

  const SplitSizes s = split_sizes(100);
  CHECK(s.train == 80);
  CHECK(s.val == 10);
  CHECK(s.test == 10);
  CHECK(train_split(ds).size() == 80);
  CHECK(val_split(ds).size() == 10);
  CHECK(test_split(ds).size() == 10);
  CHECK(bit_identical(val_split(ds).events[0].y, ds.events[80].y));
  CHECK(bit_identical(test_split(ds).events[9].y, ds.events[99].y));

  const EventDataset one = generate_dataset(1, spec, 3);
  CHECK(one.size() == 1);
  CHECK(split_sizes(1).train == 1);
}

TEST_CASE("invalid specs are rejected") {
  EventSpec spec;
  spec.total_frames = 9;
  CHECK_THROWS_AS(generate_event(spec), ContractViolation);
  spec = {};
  spec.blob_sigma = {3.0, 2.0};
  CHECK_THROWS_AS(generate_event(spec), ContractViolation);
  spec = {};
  spec.speckle_amplitude = -0.1;
  CHECK_THROWS_AS(generate_event(spec), ContractViolation);
  spec = {};
  spec.height = 2;
  CHECK_THROWS_AS(generate_dataset(3, spec, 0), ContractViolation);
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "duocast/spectral.hpp"
#include "support.hpp"

using namespace duocast;
using namespace duocast::test;

namespace {

double max_abs(const Field& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

Field cosine(int h, int w, int ky, int kx) {
  Field f(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f(y, x) = std::cos(2.0 * std::numbers::pi * (ky * y / double(h) + kx * x / double(w)));
  return f;
}

double dot(const Field& a, const Field& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("two-point transform by hand") {
  const Spectrum s = dft2(Field::single(1, 2, {3.0, 4.0}));
  CHECK(s(0, 0, 0).real() == doctest::Approx(7.0 / std::sqrt(2.0)));
  CHECK(s(0, 0, 1).real() == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(std::abs(s(0, 0, 0).imag()) < 1e-15);
  CHECK(s.energy() == doctest::Approx(25.0));
}

TEST_CASE("constant field puts all energy at DC") {
  const double c = 0.37;
  const Spectrum s = dft2(Field(1, 6, 10, c));
  CHECK(std::abs(s(0, 0, 0)) == doctest::Approx(c * std::sqrt(60.0)));
  double rest = 0.0;
  for (int ky = 0; ky < 6; ++ky)
    for (int kx = 0; kx < 10; ++kx)
      if (ky || kx) rest += std::norm(s(0, ky, kx));
  CHECK(rest < 1e-24);
}

TEST_CASE("round trip, realness and non-square grids") {
  Rng rng(1);
  for (auto [h, w] : {std::pair{8, 8}, {5, 7}, {12, 9}, {32, 32}}) {
    const Field f = random_field(2, h, w, rng, -1.0, 1.0);
    const Spectrum s = dft2(f);
    const Field g = idft2(s);
    double err = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) err = std::max(err, std::abs(f.values()[i] - g.values()[i]));
    CHECK(err < 1e-6);
    CHECK(imaginary_residue(s) < 1e-6);
  }
}

TEST_CASE("mask geometry") {
  const SpectralMask m(16, 12, 3.0);
  for (int ky = 0; ky < 16; ++ky)
    for (int kx = 0; kx < 12; ++kx) {
      const double fy = signed_frequency(ky, 16), fx = signed_frequency(kx, 12);
      CHECK(m.inside(ky, kx) == (std::hypot(fy, fx) <= 3.0));
      CHECK(m.inside(ky, kx) == m.inside((16 - ky) % 16, (12 - kx) % 12));
    }
  CHECK(SpectralMask::from_fraction(32, 32, 0.25).cutoff() == doctest::Approx(4.0));
}

TEST_CASE("projection examples") {
  const SpectralMask mask(8, 8, 2.0);
  const Field c(1, 8, 8, 0.6);
  const Field lc = project_low(c, mask);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(lc.values()[i] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(max_abs(project_high(c, mask)) < 1e-12);
  CHECK(max_abs(project_low(cosine(8, 8, 3, 0), mask)) < 1e-6);
  CHECK(max_abs(project_low(cosine(8, 8, 0, 3), mask)) < 1e-6);
  const Field in_band = cosine(8, 8, 1, 1);
  const BandEnergy e = band_energy(in_band, mask);
  CHECK(e.low == doctest::Approx(in_band.squared_norm()));
  CHECK(e.high < 1e-20);
  const BandEnergy z = band_energy(SequenceField(3, 1, 8, 8), mask);
  CHECK(z.low == 0.0);
  CHECK(z.high == 0.0);
  CHECK_THROWS_AS(project_low(Field(1, 8, 6), mask), ContractViolation);
}

TEST_CASE("projection identities on 1000 random fields") {
  Rng rng(2024);
  const SpectralMask mask = SpectralMask::from_fraction(16, 16, 0.25);
  double worst_idem = 0.0, worst_cross = 0.0, worst_parseval = 0.0, worst_split = 0.0, worst_orth = 0.0,
         worst_energy = 0.0, worst_complement = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Field f = random_field(1, 16, 16, rng, -1.0, 1.0);
    const Field lo = project_low(f, mask), hi = project_high(f, mask);
    const Field lo2 = project_low(lo, mask), hi2 = project_high(hi, mask);
    for (std::size_t i = 0; i < f.size(); ++i) {
      worst_idem = std::max({worst_idem, std::abs(lo2.values()[i] - lo.values()[i]),
                             std::abs(hi2.values()[i] - hi.values()[i])});
      worst_complement = std::max(worst_complement, std::abs(lo.values()[i] + hi.values()[i] - f.values()[i]));
    }
    worst_cross = std::max({worst_cross, max_abs(project_low(hi, mask)), max_abs(project_high(lo, mask))});
    const double e = f.squared_norm();
    worst_parseval = std::max(worst_parseval, std::abs(dft2(f).energy() - e) / e);
    worst_split = std::max(worst_split, std::abs(lo.squared_norm() + hi.squared_norm() - e) / e);
    worst_orth = std::max(worst_orth, std::abs(dot(lo, hi)) / e);
    const BandEnergy be = band_energy(f, mask);
    worst_energy = std::max({worst_energy, std::abs(be.low - lo.squared_norm()) / e,
                             std::abs(be.high - hi.squared_norm()) / e});
  }
  CHECK(worst_idem < 1e-6);
  CHECK(worst_cross < 1e-6);
  CHECK(worst_complement < 1e-12);
  CHECK(worst_parseval < 1e-5);
  CHECK(worst_split < 1e-5);
  CHECK(worst_orth < 1e-5);
  CHECK(worst_energy < 1e-5);
}

TEST_CASE("sequence projections act per frame") {
  Rng rng(3);
  const SpectralMask mask = SpectralMask::from_fraction(8, 8, 0.5);
  const SequenceField s = random_sequence(3, 8, 8, rng);
  const SequenceField lo = project_low(s, mask);
  for (int i = 0; i < 3; ++i) {
    const Field ref = project_low(s[i], mask);
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(lo[i].values()[k] == ref.values()[k]);
  }
}

}  // TEST_SUITE

#include "duocast/theory.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "duocast/rng.hpp"

namespace duocast {

double total_variation(const Field& k) {
  require(k.all_finite(), "total_variation: kernel has non-finite taps");
  const int h = k.height(), w = k.width();
  const bool along_h = h > 1;
  const bool along_w = w > 1 || h == 1;
  double tv = 0.0;
  for (int c = 0; c < k.channels(); ++c) {
    auto at = [&](int y, int x) { return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : k(c, y, x); };
    if (along_w)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x <= w; ++x) tv += std::abs(at(y, x) - at(y, x - 1));
    if (along_h)
      for (int x = 0; x < w; ++x)
        for (int y = 0; y <= h; ++y) tv += std::abs(at(y, x) - at(y - 1, x));
  }
  return tv;
}

namespace {

using Complex = std::complex<double>;

// Phase table e^{-2 pi i xi_i x_j} for centred tap positions.
std::vector<Complex> phase_table(const std::vector<double>& xi, int taps, double m) {
  std::vector<Complex> t(xi.size() * static_cast<std::size_t>(taps));
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < xi.size(); ++i)
    for (int j = 0; j < taps; ++j) {
      const double x = (j - 0.5 * (taps - 1)) / m;
      t[i * taps + j] = std::polar(1.0, -two_pi * xi[i] * x);
    }
  return t;
}

std::vector<double> axis_samples(const SpectralSampling& s) {
  const double r = s.range();
  std::vector<double> xi(static_cast<std::size_t>(s.samples) + 1);
  for (int i = 0; i <= s.samples; ++i) xi[static_cast<std::size_t>(i)] = -r + 2.0 * r * i / s.samples;
  return xi;
}

double lin_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

ResponseGrid kernel_response(const Field& kernel, const SpectralSampling& s) {
  require(kernel.channels() == 1, "kernel_response: expected a single-channel kernel");
  require(kernel.all_finite(), "kernel_response: kernel has non-finite taps");
  require(s.samples >= 2 && s.taps_per_unit > 0.0 && s.range() > 0.0, "kernel_response: bad sampling");
  const double m = s.taps_per_unit;
  const std::vector<double> xi = axis_samples(s);
  const std::size_t n = xi.size();
  const int h = kernel.height(), w = kernel.width();
  ResponseGrid g;

  if (h == 1 || w == 1) {
    // One active axis.
    const int taps = std::max(h, w);
    const std::vector<Complex> e = phase_table(xi, taps, m);
    std::vector<double> taps_v(kernel.values().begin(), kernel.values().end());
    g.axes = 1;
    g.radius.resize(n);
    g.magnitude.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Complex acc = 0.0;
      for (int j = 0; j < taps; ++j) acc += taps_v[static_cast<std::size_t>(j)] * e[i * taps + j];
      g.radius[i] = std::abs(xi[i]);
      g.magnitude[i] = std::abs(acc) / m;
    }
    return g;
  }

  const std::vector<Complex> ex = phase_table(xi, w, m);
  const std::vector<Complex> ey = phase_table(xi, h, m);
  // Row transforms first: rows[y][ix].
  std::vector<Complex> rows(static_cast<std::size_t>(h) * n);
  for (int y = 0; y < h; ++y)
    for (std::size_t ix = 0; ix < n; ++ix) {
      Complex acc = 0.0;
      for (int x = 0; x < w; ++x) acc += kernel(0, y, x) * ex[ix * w + x];
      rows[static_cast<std::size_t>(y) * n + ix] = acc;
    }
  g.axes = 2;
  g.radius.resize(n * n);
  g.magnitude.resize(n * n);
  const double norm = 1.0 / (m * m);
  for (std::size_t iy = 0; iy < n; ++iy)
    for (std::size_t ix = 0; ix < n; ++ix) {
      Complex acc = 0.0;
      for (int y = 0; y < h; ++y) acc += rows[static_cast<std::size_t>(y) * n + ix] * ey[iy * h + y];
      g.radius[iy * n + ix] = std::hypot(xi[iy], xi[ix]);
      g.magnitude[iy * n + ix] = std::abs(acc) * norm;
    }
  return g;
}

double decay_constant(const Field& kernel, const SpectralSampling& s) {
  const ResponseGrid g = kernel_response(kernel, s);
  double c = 0.0;
  for (std::size_t i = 0; i < g.radius.size(); ++i) c = std::max(c, g.magnitude[i] * (1.0 + g.radius[i]));
  return c;
}

double decay_constant(const Field& kernel, int freq_samples) {
  SpectralSampling s;
  s.samples = freq_samples;
  return decay_constant(kernel, s);
}

double KernelProfile::stability() const {
  if (decay_constant == 0.0) return dense_constant == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(dense_constant / decay_constant - 1.0);
}

KernelProfile profile_kernel(const Field& kernel, const SpectralSampling& s) {
  KernelProfile p;
  p.kernel = kernel;
  p.tv = total_variation(kernel);
  const int axes = (kernel.height() > 1 && kernel.width() > 1) ? 2 : 1;
  double l1 = 0.0;
  for (double v : kernel.values()) l1 += std::abs(v);
  p.l1 = l1 / std::pow(s.taps_per_unit, axes);
  p.decay_constant = decay_constant(kernel, s);
  p.dense_constant = decay_constant(kernel, s.denser());
  p.half_range_constant = decay_constant(kernel, s.half_range());
  p.bv_bound = p.l1 + p.tv / (4.0 * std::pow(s.taps_per_unit, axes - 1));
  p.within_nyquist = s.range() <= 0.5 * s.taps_per_unit + 1e-12;
  return p;
}

EnvelopeReport composite_envelope(const std::vector<Field>& kernels, const SpectralSampling& s) {
  require(!kernels.empty(), "composite_envelope: empty kernel list");
  EnvelopeReport rep;
  rep.depth = static_cast<int>(kernels.size());
  std::vector<ResponseGrid> grids;
  for (const Field& k : kernels) {
    grids.push_back(kernel_response(k, s));
    require(grids.back().axes == grids.front().axes, "composite_envelope: kernels mix 1-D and 2-D shapes");
  }
  const ResponseGrid& g0 = grids.front();
  const std::size_t n = g0.radius.size();
  rep.samples = n;

  std::vector<double> per_layer(grids.size(), 0.0);
  for (std::size_t l = 0; l < grids.size(); ++l)
    for (std::size_t i = 0; i < n; ++i)
      per_layer[l] = std::max(per_layer[l], grids[l].magnitude[i] * (1.0 + grids[l].radius[i]));
  rep.constant = *std::max_element(per_layer.begin(), per_layer.end());

  const double r_max = s.range();
  const double ring_width = 2.0 * r_max / s.samples;
  const std::size_t rings = static_cast<std::size_t>(std::floor(r_max / ring_width)) + 1;
  rep.ring_radius.resize(rings);
  rep.ring_max.assign(rings, 0.0);
  for (std::size_t k = 0; k < rings; ++k) rep.ring_radius[k] = (static_cast<double>(k) + 0.5) * ring_width;

  const double depth = rep.depth;
  for (std::size_t i = 0; i < n; ++i) {
    double hmag = 1.0;
    for (const ResponseGrid& g : grids) hmag *= g.magnitude[i];
    const double r = g0.radius[i];
    const double envelope = std::pow(rep.constant, depth) * std::pow(1.0 + r, -depth);
    if (envelope > 0.0) rep.max_ratio = std::max(rep.max_ratio, hmag / envelope);
    if (hmag > envelope * (1.0 + 1e-9)) ++rep.violations;
    const std::size_t ring = static_cast<std::size_t>(r / ring_width);
    if (ring < rings) rep.ring_max[ring] = std::max(rep.ring_max[ring], hmag);
  }

  // Outer envelope: max of |H_L| at this radius or beyond, so sidelobe
  // zeros do not drag the fit.
  std::vector<double> outer(rings, 0.0);
  for (std::size_t k = rings; k-- > 0;) outer[k] = std::max(rep.ring_max[k], k + 1 < rings ? outer[k + 1] : 0.0);
  std::vector<double> lx, ly;
  bool vanished = true;
  for (std::size_t k = 0; k < rings; ++k) {
    const double r = rep.ring_radius[k];
    if (r < 0.5 * r_max || r > 0.75 * r_max) continue;
    if (outer[k] > 0.0) {
      vanished = false;
      lx.push_back(std::log(1.0 + r));
      ly.push_back(std::log(outer[k]));
    }
  }
  if (vanished || lx.size() < 2)
    rep.tail_slope = -std::numeric_limits<double>::infinity();
  else
    rep.tail_slope = lin_slope(lx, ly);
  return rep;
}

double measure_leakage(const SequenceMap& model, const std::vector<SequenceField>& probes, const SpectralMask& mask) {
  require(!probes.empty(), "measure_leakage: no probes");
  double eps = 0.0;
  for (const SequenceField& f : probes) {
    const double e = f.squared_norm();
    require(e > 0.0, "measure_leakage: probe has zero energy");
    const SequenceField out = model(f);
    eps = std::max(eps, band_energy(out, mask).high / e);
  }
  return eps;
}

BottleneckCertificate bottleneck_bound(const SequenceField& target, const SequenceField& input,
                                       const SpectralMask& mask, double leakage) {
  require(leakage >= 0.0 && std::isfinite(leakage), "bottleneck_bound: leakage must be finite and >= 0");
  BottleneckCertificate c;
  c.target_high_norm = std::sqrt(band_energy(target, mask).high);
  c.input_norm = std::sqrt(input.squared_norm());
  c.leakage = leakage;
  c.bound = std::max(0.0, c.target_high_norm - std::sqrt(leakage) * c.input_norm);
  return c;
}

void certify(BottleneckCertificate& cert, const SequenceField& target, const SequenceField& prediction) {
  require(target.same_shape(prediction), "certify: target and prediction differ in shape");
  cert.measured_error = std::sqrt((target - prediction).squared_norm());
}

TwoStageReport two_stage_identity_check(const SequenceField& target, const SequenceField& g1,
                                        const SequenceField& g2, const SpectralMask& mask) {
  require(target.same_shape(g1) && target.same_shape(g2), "two_stage_identity_check: shape mismatch");
  const SequenceField p1 = project_low(g1, mask);
  const SequenceField p2 = project_high(g2, mask);
  const SequenceField ylow = project_low(target, mask);
  const SequenceField yhigh = project_high(target, mask);
  TwoStageReport r;
  r.lhs = (target - p1 - p2).squared_norm();
  r.rhs = (ylow - p1).squared_norm() + (yhigh - p2).squared_norm();
  const double scale = target.squared_norm() + p1.squared_norm() + p2.squared_norm();
  const double den = std::max({r.lhs, r.rhs, 1e-12 * scale, std::numeric_limits<double>::min()});
  r.relative_error = std::abs(r.lhs - r.rhs) / den;
  return r;
}

namespace {

double shape_value(KernelShape shape, double x, double half) {
  const double u = std::abs(x) / half;  // 0 at centre, 1 at the support edge
  if (u > 1.0 + 1e-12) return 0.0;
  switch (shape) {
    case KernelShape::box: return 1.0;
    case KernelShape::hat: return 1.0 - std::min(u, 1.0);
    case KernelShape::gaussian: return std::exp(-0.5 * (3.0 * u) * (3.0 * u));
    case KernelShape::hann: {
      const double c = std::cos(0.5 * std::numbers::pi * std::min(u, 1.0));
      return c * c;
    }
  }
  return 0.0;
}

}  // namespace

Field battery_kernel(KernelShape shape, double width, int taps_per_unit, bool two_dimensional) {
  require(width > 0.0 && taps_per_unit >= 1, "battery_kernel: bad width or sampling");
  const double half = 0.5 * width;
  // Box taps sit at cell midpoints; the other shapes include both end points.
  const int n = shape == KernelShape::box ? static_cast<int>(std::lround(width * taps_per_unit))
                                          : static_cast<int>(std::lround(width * taps_per_unit)) + 1;
  std::vector<double> line(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) line[static_cast<std::size_t>(j)] = shape_value(shape, (j - 0.5 * (n - 1)) / taps_per_unit, half);
  if (!two_dimensional) return Field(1, 1, n, line);
  std::vector<double> v(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      v[static_cast<std::size_t>(y) * n + x] = line[static_cast<std::size_t>(y)] * line[static_cast<std::size_t>(x)];
  return Field(1, n, n, std::move(v));
}

std::vector<std::pair<std::string, Field>> kernel_battery(int m) {
  return {
      {"box_1d", battery_kernel(KernelShape::box, 1.0, m, false)},
      {"hat_1d", battery_kernel(KernelShape::hat, 2.0, m, false)},
      {"gaussian_1d", battery_kernel(KernelShape::gaussian, 2.0, m, false)},
      {"hann_1d", battery_kernel(KernelShape::hann, 2.0, m, false)},
      {"box_2d", battery_kernel(KernelShape::box, 1.0, m, true)},
      {"hat_2d", battery_kernel(KernelShape::hat, 2.0, m, true)},
      {"gaussian_2d", battery_kernel(KernelShape::gaussian, 2.0, m, true)},
      {"hann_2d", battery_kernel(KernelShape::hann, 1.5, m, true)},
  };
}

Field random_step_kernel(int cells, int m, bool two_dimensional, std::uint64_t seed) {
  require(cells >= 1 && m >= 1, "random_step_kernel: bad size");
  Rng rng(seed);
  auto line = [&]() {
    std::vector<double> l(static_cast<std::size_t>(cells) * m);
    for (int c = 0; c < cells; ++c) {
      const double level = rng.uniform(0.1, 1.0);
      for (int j = 0; j < m; ++j) l[static_cast<std::size_t>(c) * m + j] = level;
    }
    return l;
  };
  const std::vector<double> a = line();
  const int n = cells * m;
  if (!two_dimensional) return Field(1, 1, n, a);
  const std::vector<double> b = line();
  std::vector<double> v(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) v[static_cast<std::size_t>(y) * n + x] = a[static_cast<std::size_t>(y)] * b[static_cast<std::size_t>(x)];
  return Field(1, n, n, std::move(v));
}

}  // namespace duocast

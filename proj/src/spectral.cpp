#include "duocast/spectral.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace duocast {

namespace {

// Unitary twiddle table for one axis length: w[j * n + k] = exp(-2 pi i j k / n) / sqrt(n).
class AxisTable {
 public:
  explicit AxisTable(int n) : n_(n), w_(static_cast<std::size_t>(n) * n) {
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const int jk = (j * k) % n;
        const double a = -2.0 * std::numbers::pi * jk / n;
        w_[static_cast<std::size_t>(j) * n + k] = Complex(std::cos(a), std::sin(a)) * norm;
      }
  }
  int size() const { return n_; }
  Complex forward(int j, int k) const { return w_[static_cast<std::size_t>(j) * n_ + k]; }
  Complex inverse(int j, int k) const { return std::conj(forward(j, k)); }

 private:
  int n_;
  std::vector<Complex> w_;
};

const AxisTable& axis_table(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<AxisTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<AxisTable>(n);
  return *slot;
}

// Separable transform of one plane in place (rows, then columns).
void transform_plane(Complex* plane, int h, int w, bool inverse) {
  const AxisTable& tx = axis_table(w);
  const AxisTable& ty = axis_table(h);
  std::vector<Complex> buf(static_cast<std::size_t>(std::max(h, w)));
  for (int y = 0; y < h; ++y) {
    Complex* row = plane + static_cast<std::size_t>(y) * w;
    for (int k = 0; k < w; ++k) {
      Complex acc = 0.0;
      for (int x = 0; x < w; ++x) acc += row[x] * (inverse ? tx.inverse(k, x) : tx.forward(k, x));
      buf[static_cast<std::size_t>(k)] = acc;
    }
    std::copy_n(buf.begin(), w, row);
  }
  for (int x = 0; x < w; ++x) {
    for (int k = 0; k < h; ++k) {
      Complex acc = 0.0;
      for (int y = 0; y < h; ++y)
        acc += plane[static_cast<std::size_t>(y) * w + x] * (inverse ? ty.inverse(k, y) : ty.forward(k, y));
      buf[static_cast<std::size_t>(k)] = acc;
    }
    for (int k = 0; k < h; ++k) plane[static_cast<std::size_t>(k) * w + x] = buf[static_cast<std::size_t>(k)];
  }
}

void check_mask(const Field& f, const SpectralMask& mask) {
  require(f.height() == mask.height() && f.width() == mask.width(),
          "spectral mask shape " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
              " does not match field shape " + std::to_string(f.height()) + "x" + std::to_string(f.width()));
}

Spectrum masked(const Field& f, const SpectralMask& mask, bool keep_inside) {
  check_mask(f, mask);
  Spectrum s = dft2(f);
  for (int c = 0; c < s.channels; ++c)
    for (int ky = 0; ky < s.height; ++ky)
      for (int kx = 0; kx < s.width; ++kx)
        if (mask.inside(ky, kx) != keep_inside) s(c, ky, kx) = 0.0;
  return s;
}

}  // namespace

double Spectrum::energy() const {
  double e = 0.0;
  for (const Complex& v : values) e += std::norm(v);
  return e;
}

Spectrum dft2(const Field& field) {
  Spectrum s{field.channels(), field.height(), field.width(), {}};
  s.values.assign(field.values().begin(), field.values().end());
  const std::size_t plane = field.plane_size();
  for (int c = 0; c < s.channels; ++c) transform_plane(s.values.data() + c * plane, s.height, s.width, false);
  return s;
}

Spectrum idft2_complex(const Spectrum& spec) {
  Spectrum out = spec;
  const std::size_t plane = static_cast<std::size_t>(spec.height) * spec.width;
  for (int c = 0; c < spec.channels; ++c) transform_plane(out.values.data() + c * plane, spec.height, spec.width, true);
  return out;
}

Field idft2(const Spectrum& spec) {
  const Spectrum z = idft2_complex(spec);
  std::vector<double> re(z.values.size());
  for (std::size_t i = 0; i < re.size(); ++i) re[i] = z.values[i].real();
  return Field(spec.channels, spec.height, spec.width, std::move(re));
}

double imaginary_residue(const Spectrum& spec) {
  double r = 0.0;
  for (const Complex& v : idft2_complex(spec).values) r = std::max(r, std::abs(v.imag()));
  return r;
}

SpectralMask::SpectralMask(int height, int width, double cutoff)
    : height_(height), width_(width), cutoff_(cutoff), bits_(static_cast<std::size_t>(height) * width) {
  require(height >= 1 && width >= 1, "spectral mask needs a positive grid");
  require(std::isfinite(cutoff) && cutoff >= 0.0, "spectral mask cutoff must be finite and >= 0");
  for (int ky = 0; ky < height; ++ky)
    for (int kx = 0; kx < width; ++kx) {
      const double fy = signed_frequency(ky, height), fx = signed_frequency(kx, width);
      bits_[static_cast<std::size_t>(ky) * width + kx] = std::hypot(fy, fx) <= cutoff ? 1 : 0;
    }
}

SpectralMask SpectralMask::from_fraction(int height, int width, double rho) {
  require(rho >= 0.0, "cutoff fraction must be >= 0");
  return SpectralMask(height, width, rho * 0.5 * std::min(height, width));
}

std::size_t SpectralMask::inside_count() const {
  std::size_t n = 0;
  for (unsigned char b : bits_) n += b;
  return n;
}

Field project_low(const Field& f, const SpectralMask& mask) { return idft2(masked(f, mask, true)); }

Field project_high(const Field& f, const SpectralMask& mask) {
  Field low = project_low(f, mask);
  std::vector<double> v(f.values().begin(), f.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= low.values()[i];
  return Field(f.channels(), f.height(), f.width(), std::move(v));
}

SequenceField project_low(const SequenceField& seq, const SpectralMask& mask) {
  std::vector<Field> frames;
  frames.reserve(static_cast<std::size_t>(seq.length()));
  for (const Field& f : seq.frames()) frames.push_back(project_low(f, mask));
  return SequenceField(std::move(frames));
}

SequenceField project_high(const SequenceField& seq, const SpectralMask& mask) {
  std::vector<Field> frames;
  frames.reserve(static_cast<std::size_t>(seq.length()));
  for (const Field& f : seq.frames()) frames.push_back(project_high(f, mask));
  return SequenceField(std::move(frames));
}

BandEnergy band_energy(const Field& f, const SpectralMask& mask) {
  check_mask(f, mask);
  const Spectrum s = dft2(f);
  BandEnergy e;
  for (int c = 0; c < s.channels; ++c)
    for (int ky = 0; ky < s.height; ++ky)
      for (int kx = 0; kx < s.width; ++kx)
        (mask.inside(ky, kx) ? e.low : e.high) += std::norm(s(c, ky, kx));
  return e;
}

BandEnergy band_energy(const SequenceField& seq, const SpectralMask& mask) {
  BandEnergy e;
  for (const Field& f : seq.frames()) {
    const BandEnergy b = band_energy(f, mask);
    e.low += b.low;
    e.high += b.high;
  }
  return e;
}

}  // namespace duocast

#pragma once

#include <complex>
#include <vector>

#include "duocast/field.hpp"

namespace duocast {

using Complex = std::complex<double>;

// Unitary 2-D DFT of every channel plane of a Field. Bin (ky, kx) is stored
// unshifted: index k corresponds to signed frequency k for k <= N/2 and
// k - N above.
struct Spectrum {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<Complex> values;

  Complex& operator()(int c, int ky, int kx) {
    return values[(static_cast<std::size_t>(c) * height + ky) * width + kx];
  }
  Complex operator()(int c, int ky, int kx) const {
    return values[(static_cast<std::size_t>(c) * height + ky) * width + kx];
  }
  double energy() const;
};

Spectrum dft2(const Field& field);
// Complex inverse; use idft2 for the real part of a conjugate-symmetric input.
Spectrum idft2_complex(const Spectrum& spec);
Field idft2(const Spectrum& spec);
// Largest |imaginary part| of the inverse transform.
double imaginary_residue(const Spectrum& spec);

// Signed frequency index of unshifted bin k on an n-point axis.
inline int signed_frequency(int k, int n) { return k <= n / 2 ? k : k - n; }

// Indicator of the disk |xi| <= cutoff in centered frequency-index units.
class SpectralMask {
 public:
  SpectralMask(int height, int width, double cutoff);
  // Cutoff given as a fraction of the Nyquist radius min(H, W) / 2.
  static SpectralMask from_fraction(int height, int width, double rho);

  int height() const { return height_; }
  int width() const { return width_; }
  double cutoff() const { return cutoff_; }
  bool inside(int ky, int kx) const { return bits_[static_cast<std::size_t>(ky) * width_ + kx] != 0; }
  std::size_t inside_count() const;

 private:
  int height_;
  int width_;
  double cutoff_;
  std::vector<unsigned char> bits_;
};

Field project_low(const Field& f, const SpectralMask& mask);
Field project_high(const Field& f, const SpectralMask& mask);
SequenceField project_low(const SequenceField& seq, const SpectralMask& mask);
SequenceField project_high(const SequenceField& seq, const SpectralMask& mask);

struct BandEnergy {
  double low = 0.0;
  double high = 0.0;
  double total() const { return low + high; }
  double high_fraction() const { return total() > 0.0 ? high / total() : 0.0; }
};

BandEnergy band_energy(const Field& f, const SpectralMask& mask);
BandEnergy band_energy(const SequenceField& seq, const SpectralMask& mask);

}  // namespace duocast

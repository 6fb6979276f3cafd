#pragma once

#include <functional>
#include <string>
#include <vector>

#include "duocast/field.hpp"
#include "duocast/spectral.hpp"

namespace duocast {

// Sum of absolute first differences along every axis of extent > 1 (the W
// axis for a single tap), counting the jumps to the implicit zero boundary.
// Channels are summed.
double total_variation(const Field& kernel);

// Frequency sampling of a kernel transform. Taps sit 1/taps_per_unit apart,
// the transform is the Riemann sum (1/M^d) sum k_j exp(-2 pi i xi . x_j), and
// xi runs over `samples` + 1 points per active axis in [-max_frequency,
// max_frequency]. With taps_per_unit = H of a grid, xi is in the centred
// index units of SpectralMask. max_frequency <= 0 means taps_per_unit / 2.
struct SpectralSampling {
  int samples = 512;
  double max_frequency = 0.0;
  double taps_per_unit = 1.0;

  double range() const { return max_frequency > 0.0 ? max_frequency : 0.5 * taps_per_unit; }
  SpectralSampling denser() const { return {2 * samples, max_frequency, taps_per_unit}; }
  SpectralSampling half_range() const { return {samples, 0.5 * range(), taps_per_unit}; }
};

// |k_hat| on the sampling grid, with the radius of every point.
struct ResponseGrid {
  int axes = 1;
  std::vector<double> radius;
  std::vector<double> magnitude;
};

ResponseGrid kernel_response(const Field& kernel, const SpectralSampling& sampling);

// max over the sampling of |k_hat(xi)| (1 + |xi|).
double decay_constant(const Field& kernel, const SpectralSampling& sampling);
double decay_constant(const Field& kernel, int freq_samples);

struct KernelProfile {
  Field kernel;
  double tv = 0.0;
  double l1 = 0.0;               // (1/M^d) sum |k_j|
  double decay_constant = 0.0;
  double dense_constant = 0.0;   // with twice the samples
  double half_range_constant = 0.0;
  // l1 + tv / (4 M^(d-1)) bounds |k_hat| (1 + |xi|) whenever the range stays
  // within the per-axis Nyquist limit M / 2.
  double bv_bound = 0.0;
  bool within_nyquist = true;

  double stability() const;  // |dense / base - 1|
  // False when the constant keeps growing with the sampled range, as for a
  // flat spectrum.
  bool decays() const { return !(decay_constant > 1.5 * half_range_constant); }
};

KernelProfile profile_kernel(const Field& kernel, const SpectralSampling& sampling);

struct EnvelopeReport {
  int depth = 0;
  double constant = 0.0;  // C = max per-layer decay constant
  std::size_t samples = 0;
  std::size_t violations = 0;  // points with |H_L| > C^L (1 + |xi|)^-L
  double max_ratio = 0.0;      // max |H_L| / (C^L (1 + |xi|)^-L)
  // Least-squares slope of log(outer envelope of |H_L|) against log(1 + r)
  // over r in [R/2, 3R/4]; the envelope at r is the max over rings at radius
  // r..R, so every fitted point sees at least R/4 of lookahead. -inf when
  // H_L vanishes there.
  double tail_slope = 0.0;
  std::vector<double> ring_radius;
  std::vector<double> ring_max;

  bool slope_ok() const { return tail_slope <= -depth + 0.25; }
};

EnvelopeReport composite_envelope(const std::vector<Field>& kernels, const SpectralSampling& sampling);

// Any map from conditioning sequences to output sequences built from
// convolutional primitives.
using SequenceMap = std::function<SequenceField(const SequenceField&)>;

// max over probes f of ||P_high g(f)||^2 / ||f||^2.
double measure_leakage(const SequenceMap& model, const std::vector<SequenceField>& probes, const SpectralMask& mask);

struct BottleneckCertificate {
  double target_high_norm = 0.0;  // ||Y_high||
  double input_norm = 0.0;        // ||Y0||
  double leakage = 0.0;           // eps
  double bound = 0.0;             // max(0, ||Y_high|| - sqrt(eps) ||Y0||)
  double measured_error = -1.0;   // ||Y - g(Y0)||, negative until certified

  bool holds() const { return measured_error >= bound; }
};

BottleneckCertificate bottleneck_bound(const SequenceField& target, const SequenceField& input,
                                       const SpectralMask& mask, double leakage);
// Records ||target - prediction|| in the certificate.
void certify(BottleneckCertificate& cert, const SequenceField& target, const SequenceField& prediction);

struct TwoStageReport {
  double lhs = 0.0;  // ||Y - g1 - g2||^2
  double rhs = 0.0;  // ||Y_low - g1||^2 + ||Y_high - g2||^2
  double relative_error = 0.0;

  bool passed(double tol = 1e-5) const { return relative_error <= tol; }
};

// g1 and g2 are projected onto the low and high band before both sides are
// evaluated.
TwoStageReport two_stage_identity_check(const SequenceField& target, const SequenceField& g1,
                                        const SequenceField& g2, const SpectralMask& mask);

// Named smoothing kernels, oversampled at `taps_per_unit` taps per unit
// length; 2-D versions are outer products of the 1-D profile.
enum class KernelShape { box, hat, gaussian, hann };
Field battery_kernel(KernelShape shape, double width, int taps_per_unit, bool two_dimensional);
std::vector<std::pair<std::string, Field>> kernel_battery(int taps_per_unit);
// Piecewise-constant kernel on `cells` unit cells with random non-negative
// levels, separable in 2-D.
Field random_step_kernel(int cells, int taps_per_unit, bool two_dimensional, std::uint64_t seed);

}  // namespace duocast

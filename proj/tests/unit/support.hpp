#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "duocast/autograd.hpp"
#include "duocast/field.hpp"
#include "duocast/gradcheck.hpp"
#include "duocast/ops.hpp"
#include "duocast/rng.hpp"

namespace duocast::test {

template <class Real = double>
Tensor<Real> randn(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<Real> t(shape);
  for (auto& v : t.values()) v = static_cast<Real>(scale * rng.normal());
  return t;
}

inline Tensor<double> uniform(const Shape& shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Field random_field(int c, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Field f(c, h, w);
  for (auto& v : f.values()) v = rng.uniform(lo, hi);
  return f;
}

inline SequenceField random_sequence(int s, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<Field> frames;
  for (int i = 0; i < s; ++i) frames.push_back(random_field(1, h, w, rng, lo, hi));
  return SequenceField(std::move(frames));
}

// sum(w * v) with w drawn from a fixed seed, so every call of a gradcheck
// closure sees the same readout.
template <class Real>
Var<Real> readout(Tape<Real>& tape, Var<Real> v, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(v, tape.constant(randn<Real>(v.shape(), rng))));
}

inline ParamSet<double> param_set(std::vector<std::pair<std::string, Tensor<double>>> entries) {
  ParamSet<double> p;
  for (auto& [id, t] : entries) p.add(id, std::move(t));
  return p;
}

// Random values kept at least `gap` away from each of the given kinks.
inline Tensor<double> away_from(const Shape& shape, Rng& rng, std::vector<double> kinks, double lo, double hi,
                                double gap = 0.02) {
  Tensor<double> t(shape);
  for (auto& v : t.values()) {
    for (;;) {
      v = rng.uniform(lo, hi);
      bool ok = true;
      for (double k : kinks) ok = ok && std::abs(v - k) > gap;
      if (ok) break;
    }
  }
  return t;
}

constexpr double kGradTol = 1e-4;

}  // namespace duocast::test

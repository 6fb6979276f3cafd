#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <string>

#include "duocast/autograd.hpp"
#include "duocast/rng.hpp"

namespace duocast {

// Builds a scalar loss on the given tape from the given parameters. Must be
// deterministic: the harness calls it once for the adjoints and twice per
// perturbed entry.
using GradClosure = std::function<Var<double>(Tape<double>&, ParamSet<double>&)>;

struct GradcheckOptions {
  double step = 1e-5;
  // Entries checked per tensor; 0 checks every entry. Sampled entries are
  // chosen with a seeded stream so reports are reproducible.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 7;
  // Floor for the relative-error denominator.
  double floor = 1e-6;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  // Largest |adjoint| seen per parameter tensor (0 for unused parameters).
  std::map<std::string, double> max_abs_adjoint;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Compares tape adjoints against central differences in double precision.
// Frozen parameters are skipped.
GradcheckReport gradcheck(const GradClosure& closure, ParamSet<double>& params, const GradcheckOptions& opts = {});

}  // namespace duocast

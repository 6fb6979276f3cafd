#include "duocast/gradcheck.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace duocast {

namespace {

double eval_loss(const GradClosure& closure, ParamSet<double>& params) {
  Tape<double> tape;
  Var<double> loss = closure(tape, params);
  require(loss.value().size() == 1, "gradcheck: closure must return a scalar, got " + shape_str(loss.shape()));
  const double v = loss.value()[0];
  if (!std::isfinite(v)) throw DiagnosticError("gradcheck: closure produced a non-finite loss");
  return v;
}

}  // namespace

GradcheckReport gradcheck(const GradClosure& closure, ParamSet<double>& params, const GradcheckOptions& opts) {
  params.zero_grad();
  {
    Tape<double> tape;
    Var<double> loss = closure(tape, params);
    require(loss.value().size() == 1, "gradcheck: closure must return a scalar, got " + shape_str(loss.shape()));
    if (!std::isfinite(loss.value()[0])) throw DiagnosticError("gradcheck: closure produced a non-finite loss");
    tape.backward(loss);
  }

  GradcheckReport report;
  Rng rng(opts.seed);
  for (auto& [id, p] : params) {
    double max_adj = 0.0;
    for (double g : p.grad().values()) max_adj = std::max(max_adj, std::abs(g));
    report.max_abs_adjoint[id] = max_adj;
    if (p.frozen) continue;

    std::vector<std::size_t> entries(p.size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (opts.max_entries_per_tensor > 0 && entries.size() > opts.max_entries_per_tensor) {
      for (std::size_t i = 0; i < opts.max_entries_per_tensor; ++i) {
        const int j = rng.uniform_int(static_cast<int>(i), static_cast<int>(entries.size()) - 1);
        std::swap(entries[i], entries[static_cast<std::size_t>(j)]);
      }
      entries.resize(opts.max_entries_per_tensor);
    }

    for (std::size_t k : entries) {
      double& w = p.value()[k];
      const double saved = w;
      w = saved + opts.step;
      const double up = eval_loss(closure, params);
      w = saved - opts.step;
      const double down = eval_loss(closure, params);
      w = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double analytic = p.grad()[k];
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = rel;
        report.worst_param = id;
        report.worst_index = k;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return report;
}

}  // namespace duocast

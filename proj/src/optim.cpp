#include "duocast/optim.hpp"

#include <cmath>

namespace duocast {

double Adam::step(ParamSet<float>& params) {
  double sq = 0.0;
  for (auto& [id, p] : params) {
    if (p.frozen) continue;
    for (float g : p.grad().values()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw DiagnosticError("non-finite gradient norm in optimizer step");
  const double clip = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double step_size = cfg_.lr / bc1;
  for (auto& [id, p] : params) {
    if (p.frozen) continue;
    auto mi = m_.find(id);
    if (mi == m_.end()) {
      mi = m_.emplace(id, Tensor<float>(p.value().shape())).first;
      v_.emplace(id, Tensor<float>(p.value().shape()));
    }
    Tensor<float>& m = mi->second;
    Tensor<float>& v = v_.at(id);
    float* w = p.value().data();
    const float* g = p.grad().data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi);
      v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi);
      w[i] = static_cast<float>(w[i] - step_size * m[i] / (std::sqrt(v[i] / bc2) + cfg_.eps));
    }
    p.zero_grad();
  }
  return norm;
}

}  // namespace duocast

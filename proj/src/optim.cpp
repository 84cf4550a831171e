#include "pathtree/optim.hpp"

#include <cmath>

namespace pathtree {

Parameter init_param(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(cols));
  Rng stream = rng.stream(name);
  return Parameter(name, Tensor::uniform(rows, cols, -s, s, stream));
}

void adam_step(const AdamConfig& cfg, AdamState& state, Parameter& p) {
  if (!state.m.same_shape(p.value)) fail(ErrorCode::ShapeMismatch, "adam state vs parameter");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i] + cfg.weight_decay * p.value[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    p.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Parameter* p : params) {
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
    }
  }
  return norm;
}

}  // namespace pathtree

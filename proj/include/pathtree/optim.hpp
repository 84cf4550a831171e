#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "pathtree/tensor.hpp"

namespace pathtree {

// Trainable tensor with its gradient buffer. Gradients accumulate across a
// backward pass and are zeroed explicitly between steps.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 1e-4;  // L2-coupled: folded into the gradient
  double eps = 1e-8;
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::int64_t step = 0;

  explicit AdamState(const Parameter& p)
      : m(p.value.rows(), p.value.cols()), v(p.value.rows(), p.value.cols()) {}
  AdamState() = default;
};

// One Adam update. The step counter increments before bias correction.
void adam_step(const AdamConfig& cfg, AdamState& state, Parameter& p);

// Seeded uniform(-s, s) with s = 1/sqrt(fan_in); the stream is derived from
// the parameter name so init does not depend on construction order.
Parameter init_param(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng);

// Returns the pre-clip global norm; scales all gradients when it exceeds max_norm.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace pathtree

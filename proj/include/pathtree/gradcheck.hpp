#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pathtree/optim.hpp"

namespace pathtree {

struct GradCheckOptions {
  double h = 1e-5;            // central-difference step
  double tol = 1e-4;          // pass threshold on max relative error
  std::size_t max_coords_per_param = 0;  // 0 = check every coordinate
  std::uint64_t sample_seed = 1;         // coordinate sampling stream
};

struct GradCheckParamReport {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_analytic = 0.0;  // coverage signal: 0 means no gradient flowed
  std::size_t coords_checked = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::vector<GradCheckParamReport> per_param;

  bool passed(double tol) const { return max_rel_err < tol; }
  std::string to_text() const;
};

// loss_fn(true) must populate param grads (one analytic backward pass);
// loss_fn(false) must only return the loss at the current parameter values.
// Relative error per coordinate: |ga - gn| / max(1, |ga|, |gn|).
GradCheckReport grad_check(const std::function<double(bool)>& loss_fn,
                           std::span<Parameter* const> params,
                           const GradCheckOptions& opts = {});

}  // namespace pathtree

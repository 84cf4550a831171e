#include "pathtree/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pathtree/rng.hpp"

namespace pathtree {

std::string GradCheckReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  os << std::scientific;
  for (const auto& p : per_param) {
    os << p.name << " max_rel_err=" << p.max_rel_err
       << " max_abs_grad=" << p.max_abs_analytic << " coords=" << p.coords_checked << "\n";
  }
  os << "max_rel_err=" << max_rel_err << " worst=" << worst_param << "\n";
  return os.str();
}

GradCheckReport grad_check(const std::function<double(bool)>& loss_fn,
                           std::span<Parameter* const> params,
                           const GradCheckOptions& opts) {
  for (Parameter* p : params) p->zero_grad();
  const double base = loss_fn(true);
  if (!std::isfinite(base)) fail(ErrorCode::NonFiniteLoss, "loss at probe point");

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  Rng sampler = Rng(opts.sample_seed).stream("gradcheck-coords");

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    GradCheckParamReport pr;
    pr.name = p.name;

    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords_per_param > 0 && coords.size() > opts.max_coords_per_param) {
      // Fisher-Yates prefix shuffle over the sampled count.
      for (std::size_t i = 0; i < opts.max_coords_per_param; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(sampler.next_u64() % (coords.size() - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(opts.max_coords_per_param);
    }

    for (std::size_t ci : coords) {
      const double saved = p.value[ci];
      p.value[ci] = saved + opts.h;
      const double lp = loss_fn(false);
      p.value[ci] = saved - opts.h;
      const double lm = loss_fn(false);
      p.value[ci] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        fail(ErrorCode::NonFiniteLoss, "loss at perturbed point of " + p.name);
      }
      const double gn = (lp - lm) / (2.0 * opts.h);
      const double ga = analytic[pi][ci];
      const double rel = std::abs(ga - gn) / std::max({1.0, std::abs(ga), std::abs(gn)});
      pr.max_rel_err = std::max(pr.max_rel_err, rel);
      pr.max_abs_analytic = std::max(pr.max_abs_analytic, std::abs(ga));
      ++pr.coords_checked;
    }

    if (pr.max_rel_err >= report.max_rel_err) {
      report.max_rel_err = pr.max_rel_err;
      report.worst_param = pr.name;
    }
    report.per_param.push_back(std::move(pr));
  }

  // Leave the analytic gradients in place for callers that inspect them.
  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  return report;
}

}  // namespace pathtree

#include "paxl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "paxl/errors.hpp"

namespace paxl {

std::vector<GradCheckEntry> GradCheckReport::failures(double tol) const {
  std::vector<GradCheckEntry> out;
  for (const auto& e : entries)
    if (e.rel_err > tol) out.push_back(e);
  return out;
}

GradCheckReport grad_check(const std::function<TensorPtr(const TensorPtr&)>& f,
                           const TensorPtr& point, double h, double tol) {
  if (!(h > 0.0 && h <= 1e-3))
    throw NumericError("grad_check: step h must lie in (0, 1e-3]");

  auto x = Tensor::make(point->shape, point->values, /*requires_grad=*/true);
  auto loss = f(x);
  if (!loss->is_scalar()) throw GraphError("grad_check: f must be scalar-valued");
  backward(loss);
  std::vector<double> analytic = x->grad;

  GradCheckReport report;
  report.entries.reserve(x->size());
  NoGradGuard ng;
  auto probe = Tensor::make(point->shape, point->values, false);
  for (std::size_t i = 0; i < probe->size(); ++i) {
    const double orig = probe->values[i];
    probe->values[i] = orig + h;
    const double fp = f(probe)->item();
    probe->values[i] = orig - h;
    const double fm = f(probe)->item();
    probe->values[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    report.entries.push_back({i, analytic[i], numeric, rel});
    report.max_rel_err = std::max(report.max_rel_err, rel);
  }
  (void)tol;
  return report;
}

}  // namespace paxl

#pragma once

#include <functional>
#include <vector>

#include "paxl/tensor.hpp"

namespace paxl {

struct GradCheckEntry {
  std::size_t index;
  double analytic;
  double numeric;
  double rel_err;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> entries;

  bool ok(double tol) const { return max_rel_err <= tol; }
  std::vector<GradCheckEntry> failures(double tol) const;
};

// Central-difference verification of the analytic gradient of a scalar-valued
// tensor function at the given point. For each entry i the numeric value is
// (f(x + h e_i) - f(x - h e_i)) / 2h and the relative error is
// |a - n| / max(|a|, |n|, 1e-8). Requires 0 < h <= 1e-3 and a pure f.
GradCheckReport grad_check(const std::function<TensorPtr(const TensorPtr&)>& f,
                           const TensorPtr& point, double h, double tol);

}  // namespace paxl

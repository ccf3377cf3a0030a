// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_NN_GRADCHECK_HPP_
#define VCDESK_NN_GRADCHECK_HPP_

#include <cmath>
#include <functional>
#include <vector>

#include "vcdesk/nn/tensor.hpp"

namespace vcdesk::nn {

// Compares an analytic gradient against central finite differences and
// returns the worst relative error over all coordinates.
//
// f(x) evaluates the scalar function at x. analytic_grad is d f / d x at
// `point`, typically taken from one Backward pass. Relative error per
// coordinate is |a - n| / max(|a|, |n|, scale_floor).
inline double GradCheck(const std::function<double(const std::vector<double>&)>& f,
                        const std::vector<double>& point,
                        const std::vector<double>& analytic_grad,
                        double eps = 1e-5, double scale_floor = 1e-4) {
  double worst = 0.0;
  std::vector<double> x = point;
  for (size_t i = 0; i < point.size(); ++i) {
    x[i] = point[i] + eps;
    const double fp = f(x);
    x[i] = point[i] - eps;
    const double fm = f(x);
    x[i] = point[i];
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic_grad[i];
    const double err =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), scale_floor});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace vcdesk::nn

#endif  // VCDESK_NN_GRADCHECK_HPP_

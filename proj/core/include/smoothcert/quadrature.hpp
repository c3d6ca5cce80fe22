#pragma once

#include <cmath>
#include <functional>

namespace smoothcert {

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance `tol`.
///
/// Endpoint singularities must be removed by a change of variables first; recursion stops at
/// `max_depth` and accepts the local estimate there.
double integrate_adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-8,
                                  int max_depth = 50);

}  // namespace smoothcert

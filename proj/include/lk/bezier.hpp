#pragma once

#include <vector>

#include "lk/common.hpp"

namespace lk {

// Order-m Bezier curve on s = t/T in [0,1], used as the desired output
// trajectory h_des.  Derivatives are taken in time, i.e. the s-domain
// derivative carries a (1/T)^k factor.
struct BezierCurve {
  std::vector<double> coeffs;  // alpha_0..alpha_m
  double horizon = 1.0;        // T, seconds

  int order() const { return static_cast<int>(coeffs.size()) - 1; }
  void validate() const;

  // k-th time derivative at t in [0, horizon], k in 0..3.
  double eval(double t, int k = 0) const;

  // Gradient of eval(t,k) w.r.t. the coefficient vector (eval is linear in
  // the coefficients); used by the trajectory optimizer.
  Vec eval_grad(double t, int k = 0) const;
};

// Replaces alpha_0..alpha_2 so that value/slope/curvature at t = 0 equal
// prev (time-domain derivatives); alpha_3.. are untouched.
BezierCurve splice_smooth(double h0, double hd0, double hdd0,
                          const BezierCurve& curve);

}  // namespace lk

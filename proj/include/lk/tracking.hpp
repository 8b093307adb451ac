#pragma once

#include <complex>
#include <vector>

#include "lk/common.hpp"
#include "lk/truck_model.hpp"

namespace lk {

struct TrackerGains {
  double kp = 9.0;  // 1/s^2
  double kd = 6.0;  // 1/s
  void validate() const;
};

// Monic-polynomial coefficients {k_0..k_{n-1}} of prod(lambda - root_i),
// requiring a conjugate-closed set of strictly stable roots.
std::vector<double> stabilizing_gains(
    const std::vector<std::complex<double>>& roots);

// Feedback-linearizing PD tracking of (h, hdot, hddot) references.
double fl_track(const Vec8& x, double rd, double h_des, double hd_des,
                double hdd_des, const TrackerGains& gains,
                const OutputChain& chain);

struct LqrBaseline {
  RowVec8 K;          // state feedback, u = -K x + kff * rd
  double kff = 0.0;   // feedforward so steady-state y = 0
  Mat8 P;             // CARE solution
  double riccati_residual = 0.0;

  double lyapunov(const Vec8& xbar) const {
    return xbar.dot(P * xbar);
  }
};

// Continuous algebraic Riccati equation via Newton-Kleinman iteration.
LqrBaseline lqr_baseline(const LinearDynamics& dyn, const Mat8& Q, double R);

// Lyapunov solve A^T X + X A + Q = 0 (A Hurwitz), dense Kronecker route.
Mat solve_lyapunov(const Mat& A, const Mat& Q);

}  // namespace lk

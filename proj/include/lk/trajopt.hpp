#pragma once

#include <functional>
#include <vector>

#include "lk/bezier.hpp"
#include "lk/poly.hpp"
#include "lk/tracking.hpp"
#include "lk/truck_model.hpp"

namespace lk {

// Quadratic barrier b(x) = c0 + 2 q'x + x'Px extracted from a polynomial
// barrier; the trajectory optimizer and the supervisor work on this form.
struct QuadBarrier {
  Mat8 P = Mat8::Zero();
  Vec8 q = Vec8::Zero();
  double c0 = 0.0;
  double kappa = 1.0;

  double value(const Vec8& x) const {
    return c0 + 2.0 * q.dot(x) + x.dot(P * x);
  }
  Vec8 gradient(const Vec8& x) const { return 2.0 * q + 2.0 * (P * x); }
};

QuadBarrier quad_barrier(const MultiPoly& b,
                         const std::vector<std::string>& state_vars,
                         double kappa);

// sigmoid-relaxed CBF residual bdot + kappa (e^b - 1)/(e^b + 1)
double cbf_residual(const QuadBarrier& bar, const Vec8& x, const Vec8& xdot);

// Linear map from the 5 slow states x1 = [z, zdot, psi, -B_r v_y + B_vy r,
// psi_a] to the 3 fast states x2 = [r_s, phi, p], exact on the
// r_d-parameterized equilibrium line, minimum-Frobenius-norm off it.
struct InsertionMap {
  Mat C1;  // 5x8 slow-coordinate selector
  Mat C2;  // 3x8 fast-coordinate selector
  Mat G;   // 3x5, x2 = G x1

  Vec x1(const Vec8& x) const { return C1 * x; }
  Vec x2(const Vec8& x) const { return C2 * x; }
  Vec map(const Vec& xi1) const { return G * xi1; }
  // terminal mismatch x2 - gamma(x1) as a linear function of the state
  Mat mismatch() const { return C2 - G * C1; }
};

InsertionMap build_insertion_map(const LinearDynamics& dyn,
                                 const OutputChain& chain);

struct TrajOptSpec {
  int N = 30;            // even node-interval count
  double T = 3.0;        // horizon (s)
  Vec8 x0 = Vec8::Zero();
  double rd = 0.0;       // road yaw rate over the horizon
  int bezier_order = 8;
  double u_max = 0.2;    // rad
  double kappa = 1.0;    // 1/s
  double c1 = 0.25;
  double c3 = 0.05;
  Vec weights = Vec::Ones(7);  // [V(T), int z^2, int zdot^2, |y|inf, |r|inf,
                               //  int u^2, |alpha_m|]
  TrackerGains gains;
  double beta = 50.0;    // log-sum-exp sharpness for the inf-norm terms
  int max_iters = 300;

  void validate() const;
};

struct TrajSolution {
  BezierCurve h_des;
  std::vector<Vec8> x;     // node states, N+1
  std::vector<Vec8> xdot;  // node derivatives (dynamics at the nodes)
  std::vector<double> u;   // node inputs
  double cost = 0.0;
  Vec cost_terms = Vec::Zero(7);  // true-max breakdown
  bool feasible = false;
  int iterations = 0;
  double kkt_residual = 0.0;
  double max_violation = 0.0;
};

// Everything the optimizer needs besides the per-instance spec.
struct TrajContext {
  LinearDynamics dyn;
  OutputChain chain;
  QuadBarrier bar;
  Mat8 P_lyap = Mat8::Identity();  // terminal Lyapunov x'Px
  InsertionMap gamma;
};

// Hermite-Simpson defects (zeta, delta) at interior odd node i given the
// three consecutive (state, derivative) pairs and the horizon.
void hs_defects(const Vec8& xm, const Vec8& xdm, const Vec8& xc,
                const Vec8& xdc, const Vec8& xp, const Vec8& xdp,
                double interval, Vec8& zeta, Vec8& delta);

struct Nlp {
  int n = 0;
  int n_eq = 0;
  int n_in = 0;
  std::function<double(const Vec&, Vec*)> cost;           // value (+grad)
  std::function<void(const Vec&, Vec&, Mat*)> eq;         // c(x) = 0
  std::function<void(const Vec&, Vec&, Mat*)> ineq;       // g(x) >= 0
};

Nlp assemble_nlp(const TrajOptSpec& spec, const TrajContext& ctx);

struct SqpResult {
  Vec x;
  bool converged = false;
  int iterations = 0;
  double kkt_residual = 0.0;
  double max_violation = 0.0;
};

SqpResult nlp_solve(const Nlp& nlp, const Vec& guess, int max_iters = 300);

// True-max / Simpson cost breakdown for reporting (the NLP itself uses the
// smoothed inf-norms).
Vec cost_breakdown(const TrajOptSpec& spec, const TrajContext& ctx,
                   const std::vector<Vec8>& x, const std::vector<double>& u,
                   const BezierCurve& h);

Vec default_guess(const TrajOptSpec& spec, const TrajContext& ctx);

TrajSolution optimize_trajectory(const TrajOptSpec& spec,
                                 const TrajContext& ctx);

}  // namespace lk

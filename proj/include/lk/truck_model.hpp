#pragma once

#include "lk/common.hpp"
#include "lk/config.hpp"

namespace lk {

// 4-DOF lateral-yaw-roll tractor-semitrailer, linearized about straight
// driving at constant v_x.  State ordering, fixed project-wide:
//   x = [y, v_y, psi, r, psi_a, r_s, phi, p]
struct TruckParams {
  double tractor_mass = 8800.0;       // kg
  double trailer_mass = 26200.0;      // kg
  double tractor_yaw_inertia = 46000.0;   // kg m^2
  double trailer_yaw_inertia = 450000.0;  // kg m^2
  double roll_inertia = 60000.0;      // kg m^2, combined, about roll axis
  double front_axle_dist = 1.4;       // m, ahead of tractor CG
  double rear_axle_dist = 2.7;        // m, behind tractor CG
  double hitch_offset = 2.3;          // m, fifth wheel behind tractor CG
  double hitch_to_trailer_cg = 5.2;   // m
  double hitch_to_trailer_axle = 9.5; // m
  double cornering_front = 350e3;     // N/rad, whole axle
  double cornering_rear = 900e3;      // N/rad
  double cornering_trailer = 1100e3;  // N/rad
  double roll_stiffness = 2.5e6;      // N m/rad
  double roll_damping = 120e3;        // N m s/rad
  double cg_height = 1.1;             // m, above roll axis
  double wind_height = 1.5;           // m, side-force application height
  double vx = 20.0;                   // m/s
  double preview_time = 1.0;          // s, T0

  static TruckParams from_config(const Config& cfg);
  void validate() const;  // throws ModelError on non-physical values
};

struct LinearDynamics {
  Mat8 A;
  Vec8 B;
  Vec8 E1;  // road yaw-rate disturbance r_d
  Vec8 E2;  // side-wind force F_y
  double vx = 0.0;
};

// Output z = y + T0 vx psi and its first two derivatives as affine
// functions of (x, u, r_d):
//   z      = c x
//   zdot   = cA x + dz_rd * r_d
//   zddot  = cA2 x + lglfh * u + lfgd1h * r_d
struct OutputChain {
  RowVec8 c;
  RowVec8 cA;    // state part of zdot
  double dz_rd = 0.0;   // r_d coefficient in zdot
  RowVec8 cA2;   // state part of zddot (c A^2 with the r_d chain removed)
  double lglfh = 0.0;   // u coefficient in zddot, = cAB
  double lfgd1h = 0.0;  // r_d coefficient in zddot
  double T0 = 0.0;
  double vx = 0.0;
};

struct ZeroDynamicsReport {
  Mat8 T;          // transformation of the state into [z, zdot, sigma]
  Mat8 A_bar;      // T A T^{-1}
  Vec8 B_bar;      // T B
  Vec8 E1_bar;
  Eigen::Matrix<double, 6, 6> zero_dyn;  // sigma block at z = zdot = 0
  Eigen::VectorXcd zero_dyn_eigs;
  bool stable = false;
  double condition_number = 0.0;
};

LinearDynamics build_dynamics(const TruckParams& params);

OutputChain output_chain(const LinearDynamics& dyn, double T0, double vx);

// Steady state (x_e, u_e) under constant r_d with c x_e = 0 (Sec. on the
// unique-equilibrium assumption): solves the 9x9 linear system.
struct Equilibrium {
  Vec8 x;
  double u = 0.0;
};
Equilibrium equilibrium(const LinearDynamics& dyn, const OutputChain& chain,
                        double rd);

ZeroDynamicsReport zero_dynamics(const LinearDynamics& dyn,
                                 const OutputChain& chain);

}  // namespace lk

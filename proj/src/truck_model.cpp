#include "lk/truck_model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace lk {

namespace {
constexpr double kGravity = 9.81;
}

TruckParams TruckParams::from_config(const Config& cfg) {
  TruckParams p;
  p.tractor_mass = cfg.get_double("tractor_mass", p.tractor_mass);
  p.trailer_mass = cfg.get_double("trailer_mass", p.trailer_mass);
  p.tractor_yaw_inertia =
      cfg.get_double("tractor_yaw_inertia", p.tractor_yaw_inertia);
  p.trailer_yaw_inertia =
      cfg.get_double("trailer_yaw_inertia", p.trailer_yaw_inertia);
  p.roll_inertia = cfg.get_double("roll_inertia", p.roll_inertia);
  p.front_axle_dist = cfg.get_double("front_axle_dist", p.front_axle_dist);
  p.rear_axle_dist = cfg.get_double("rear_axle_dist", p.rear_axle_dist);
  p.hitch_offset = cfg.get_double("hitch_offset", p.hitch_offset);
  p.hitch_to_trailer_cg =
      cfg.get_double("hitch_to_trailer_cg", p.hitch_to_trailer_cg);
  p.hitch_to_trailer_axle =
      cfg.get_double("hitch_to_trailer_axle", p.hitch_to_trailer_axle);
  p.cornering_front = cfg.get_double("cornering_front", p.cornering_front);
  p.cornering_rear = cfg.get_double("cornering_rear", p.cornering_rear);
  p.cornering_trailer =
      cfg.get_double("cornering_trailer", p.cornering_trailer);
  p.roll_stiffness = cfg.get_double("roll_stiffness", p.roll_stiffness);
  p.roll_damping = cfg.get_double("roll_damping", p.roll_damping);
  p.cg_height = cfg.get_double("cg_height", p.cg_height);
  p.wind_height = cfg.get_double("wind_height", p.wind_height);
  p.vx = cfg.get_double("vx", p.vx);
  p.preview_time = cfg.get_double("preview_time", p.preview_time);
  p.validate();
  return p;
}

void TruckParams::validate() const {
  auto pos = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ModelError(std::string("truck params: ") + name +
                       " must be strictly positive");
  };
  pos(tractor_mass, "tractor_mass");
  pos(trailer_mass, "trailer_mass");
  pos(tractor_yaw_inertia, "tractor_yaw_inertia");
  pos(trailer_yaw_inertia, "trailer_yaw_inertia");
  pos(roll_inertia, "roll_inertia");
  pos(front_axle_dist, "front_axle_dist");
  pos(rear_axle_dist, "rear_axle_dist");
  pos(hitch_offset, "hitch_offset");
  pos(hitch_to_trailer_cg, "hitch_to_trailer_cg");
  pos(hitch_to_trailer_axle, "hitch_to_trailer_axle");
  pos(cornering_front, "cornering_front");
  pos(cornering_rear, "cornering_rear");
  pos(cornering_trailer, "cornering_trailer");
  pos(roll_stiffness, "roll_stiffness");
  pos(roll_damping, "roll_damping");
  pos(cg_height, "cg_height");
  pos(vx, "vx");
  if (preview_time < 0.0)
    throw ModelError("truck params: preview_time must be >= 0");
}

LinearDynamics build_dynamics(const TruckParams& p) {
  p.validate();
  const double m1 = p.tractor_mass, m2 = p.trailer_mass;
  const double I1 = p.tractor_yaw_inertia, I2 = p.trailer_yaw_inertia;
  const double Ix = p.roll_inertia;
  const double a = p.front_axle_dist, b = p.rear_axle_dist;
  const double c = p.hitch_offset, e = p.hitch_to_trailer_cg;
  const double l2 = p.hitch_to_trailer_axle;
  const double Cf = p.cornering_front, Cr = p.cornering_rear,
               Ct = p.cornering_trailer;
  const double kphi = p.roll_stiffness, cphi = p.roll_damping;
  const double h = p.cg_height, hw = p.wind_height, vx = p.vx;
  const double ms = m1 + m2;

  // Generalized accelerations w = [vy_dot, r_dot, rs_dot, p_dot]; the
  // trailer is coupled through the fifth wheel (internal hitch force
  // eliminated) and both units share one roll DOF.
  Eigen::Matrix4d M;
  M << ms, -m2 * c, -m2 * e, ms * h,
      -c * m2, I1 + c * c * m2, c * e * m2, 0.0,
      -e * m2, e * c * m2, I2 + e * e * m2, 0.0,
      ms * h, -m2 * h * c, -m2 * h * e, Ix;

  Eigen::FullPivLU<Eigen::Matrix4d> lu(M);
  if (!lu.isInvertible())
    throw ModelError("truck params: singular mass matrix");

  // Axle force rows, d(force)/d(state).
  RowVec8 Ff = RowVec8::Zero(), Fr = RowVec8::Zero(), Ft = RowVec8::Zero();
  Ff(1) = -Cf / vx;
  Ff(3) = -Cf * a / vx;
  Fr(1) = -Cr / vx;
  Fr(3) = Cr * b / vx;
  Ft(1) = -Ct / vx;
  Ft(3) = Ct * c / vx;
  Ft(5) = Ct * l2 / vx;
  Ft(4) = -Ct;

  Eigen::Matrix<double, 4, 8> K = Eigen::Matrix<double, 4, 8>::Zero();
  K.row(0) = Ff + Fr + Ft;
  K(0, 3) += -ms * vx;
  K.row(1) = a * Ff - b * Fr - c * Ft;
  K(1, 3) += c * m2 * vx;
  K.row(2) = -l2 * Ft;
  K(2, 3) += e * m2 * vx;
  K(3, 6) = ms * kGravity * h - kphi;
  K(3, 7) = -cphi;
  K(3, 3) = -ms * h * vx;

  const Eigen::Matrix<double, 4, 8> W = lu.solve(K);
  const Eigen::Vector4d Bu = lu.solve(Eigen::Vector4d(Cf, a * Cf, 0.0, 0.0));
  const Eigen::Vector4d Ew = lu.solve(Eigen::Vector4d(1.0, 0.0, 0.0, hw));

  LinearDynamics dyn;
  dyn.vx = vx;
  dyn.A.setZero();
  dyn.A(0, 1) = 1.0;
  dyn.A(0, 2) = vx;
  dyn.A(2, 3) = 1.0;
  dyn.A(4, 3) = 1.0;
  dyn.A(4, 5) = -1.0;
  dyn.A(6, 7) = 1.0;
  dyn.A.row(1) = W.row(0);
  dyn.A.row(3) = W.row(1);
  dyn.A.row(5) = W.row(2);
  dyn.A.row(7) = W.row(3);

  dyn.B.setZero();
  dyn.B(1) = Bu(0);
  dyn.B(3) = Bu(1);
  dyn.B(5) = Bu(2);
  dyn.B(7) = Bu(3);

  dyn.E1.setZero();
  dyn.E1(2) = -1.0;  // lane frame rotates with the road: psi_dot = r - r_d

  dyn.E2.setZero();
  dyn.E2(1) = Ew(0);
  dyn.E2(3) = Ew(1);
  dyn.E2(5) = Ew(2);
  dyn.E2(7) = Ew(3);

  if (!dyn.A.allFinite() || !dyn.B.allFinite() || !dyn.E2.allFinite())
    throw ModelError("truck params: non-finite dynamics");
  return dyn;
}

OutputChain output_chain(const LinearDynamics& dyn, double T0, double vx) {
  OutputChain ch;
  ch.T0 = T0;
  ch.vx = vx;
  ch.c.setZero();
  ch.c(0) = 1.0;
  ch.c(2) = T0 * vx;

  const double cB = ch.c * dyn.B;
  if (std::abs(cB) > 1e-9)
    throw ModelError("output chain: c*B != 0, relative degree < 2");

  ch.cA = ch.c * dyn.A;
  ch.dz_rd = ch.c * dyn.E1;

  ch.lglfh = ch.cA * dyn.B;
  if (std::abs(ch.lglfh) < 1e-9)
    throw ModelError("output chain: c*A*B = 0, relative degree > 2");

  ch.cA2 = ch.cA * dyn.A;
  // zddot = cA (A x + B u + E1 r_d); the c*E1 part of zdot is constant in
  // x so it contributes nothing further (r_d treated as constant).
  ch.lfgd1h = ch.cA * dyn.E1;
  return ch;
}

Equilibrium equilibrium(const LinearDynamics& dyn, const OutputChain& chain,
                        double rd) {
  Eigen::Matrix<double, 9, 9> M = Eigen::Matrix<double, 9, 9>::Zero();
  M.topLeftCorner<8, 8>() = dyn.A;
  M.topRightCorner<8, 1>() = dyn.B;
  M.bottomLeftCorner<1, 8>() = chain.c;
  Eigen::Matrix<double, 9, 1> rhs = Eigen::Matrix<double, 9, 1>::Zero();
  rhs.head<8>() = -dyn.E1 * rd;

  Eigen::FullPivLU<Eigen::Matrix<double, 9, 9>> lu(M);
  if (!lu.isInvertible())
    throw ModelError("equilibrium: singular system (invalid parameter set)");
  const Eigen::Matrix<double, 9, 1> sol = lu.solve(rhs);

  Equilibrium eq;
  eq.x = sol.head<8>();
  eq.u = sol(8);
  return eq;
}

ZeroDynamicsReport zero_dynamics(const LinearDynamics& dyn,
                                 const OutputChain& chain) {
  const Vec8& B = dyn.B;
  const double T0 = chain.T0, vx = chain.vx;

  Mat8 T = Mat8::Zero();
  T(0, 0) = 1.0;
  T(0, 2) = vx * T0;
  T(1, 1) = 1.0;
  T(1, 2) = vx;
  T(1, 3) = vx * T0;
  T(2, 2) = 1.0;
  T(3, 1) = -B(3);
  T(3, 3) = B(1);
  T(4, 4) = 1.0;
  T(5, 1) = -B(5);
  T(5, 5) = B(1);
  T(6, 6) = 1.0;
  T(7, 1) = -B(7);
  T(7, 7) = B(1);

  Eigen::FullPivLU<Mat8> lu(T);
  if (!lu.isInvertible())
    throw ModelError("zero dynamics: transformation T is singular");

  ZeroDynamicsReport rep;
  rep.T = T;
  rep.A_bar = T * dyn.A * lu.inverse();
  rep.B_bar = T * B;
  rep.E1_bar = T * dyn.E1;
  rep.condition_number =
      T.jacobiSvd().singularValues()(0) /
      T.jacobiSvd().singularValues()(7);

  rep.zero_dyn = rep.A_bar.bottomRightCorner<6, 6>();
  Eigen::EigenSolver<Eigen::Matrix<double, 6, 6>> es(rep.zero_dyn);
  rep.zero_dyn_eigs = es.eigenvalues();
  rep.stable = (rep.zero_dyn_eigs.real().maxCoeff() < 0.0);
  return rep;
}

}  // namespace lk

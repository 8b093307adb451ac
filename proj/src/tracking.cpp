#include "lk/tracking.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace lk {

void TrackerGains::validate() const {
  if (!(kp > 0.0) || !(kd > 0.0))
    throw ModelError("tracker gains: kp and kd must be > 0");
}

std::vector<double> stabilizing_gains(
    const std::vector<std::complex<double>>& roots) {
  if (roots.empty()) throw ModelError("stabilizing_gains: empty root set");
  for (const auto& r : roots)
    if (!(r.real() < 0.0))
      throw ModelError("stabilizing_gains: root with Re >= 0");

  // Conjugate closure check (multiset match).
  std::vector<std::complex<double>> conj;
  for (const auto& r : roots) conj.push_back(std::conj(r));
  auto cmp = [](const std::complex<double>& a, const std::complex<double>& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  };
  auto sorted = roots;
  std::sort(sorted.begin(), sorted.end(), cmp);
  std::sort(conj.begin(), conj.end(), cmp);
  for (std::size_t i = 0; i < sorted.size(); ++i)
    if (std::abs(sorted[i] - conj[i]) > 1e-9 * (1.0 + std::abs(sorted[i])))
      throw ModelError("stabilizing_gains: root set not conjugate-closed");

  std::vector<std::complex<double>> poly = {1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += poly[i] * (-r);
      next[i + 1] += poly[i];
    }
    poly = std::move(next);
  }
  // poly = [k_0 .. k_{n-1}, 1]; return the non-leading coefficients.
  std::vector<double> out(poly.size() - 1);
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    if (std::abs(poly[i].imag()) > 1e-9 * (1.0 + std::abs(poly[i])))
      throw ModelError("stabilizing_gains: complex coefficient remainder");
    out[i] = poly[i].real();
  }
  return out;
}

double fl_track(const Vec8& x, double rd, double h_des, double hd_des,
                double hdd_des, const TrackerGains& gains,
                const OutputChain& chain) {
  gains.validate();
  const double z = chain.c * x;
  const double zd = chain.cA * x + chain.dz_rd * rd;
  const double e1 = z - h_des;
  const double e2 = zd - hd_des;
  const double lf2h = chain.cA2 * x;
  return -(gains.kp * e1 + gains.kd * e2 + lf2h + chain.lfgd1h * rd -
           hdd_des) /
         chain.lglfh;
}

Mat solve_lyapunov(const Mat& A, const Mat& Q) {
  const Eigen::Index n = A.rows();
  Mat M = Mat::Zero(n * n, n * n);
  const Mat I = Mat::Identity(n, n);
  // vec(A^T X + X A) = (I (x) A^T + A^T (x) I) vec(X)
  for (Eigen::Index c = 0; c < n; ++c)
    M.block(c * n, c * n, n, n) += A.transpose();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      M.block(i * n, j * n, n, n) += A(j, i) * I;
  Vec q(n * n);
  for (Eigen::Index c = 0; c < n; ++c) q.segment(c * n, n) = -Q.col(c);
  Vec xv = M.partialPivLu().solve(q);
  Mat X(n, n);
  for (Eigen::Index c = 0; c < n; ++c) X.col(c) = xv.segment(c * n, n);
  return 0.5 * (X + X.transpose());
}

namespace {

// Matrix-sign solve of the CARE: sign of the Hamiltonian yields the stable
// invariant subspace, P = -(S+I) restricted.  Used to seed Newton-Kleinman.
Mat8 care_sign_seed(const Mat8& A, const Vec8& B, const Mat8& Q, double R) {
  Eigen::Matrix<double, 16, 16> H;
  const Mat8 G = B * B.transpose() / R;
  H.topLeftCorner<8, 8>() = A;
  H.topRightCorner<8, 8>() = -G;
  H.bottomLeftCorner<8, 8>() = -Q;
  H.bottomRightCorner<8, 8>() = -A.transpose();

  Eigen::Matrix<double, 16, 16> Z = H;
  for (int it = 0; it < 200; ++it) {
    const double mu =
        std::pow(std::abs(Z.determinant()), -1.0 / 16.0);
    Eigen::Matrix<double, 16, 16> Zs = mu * Z;
    Eigen::Matrix<double, 16, 16> Znext =
        0.5 * (Zs + Zs.partialPivLu().inverse());
    const double delta = (Znext - Z).norm();
    Z = Znext;
    if (delta < 1e-12 * Z.norm()) break;
  }
  // (S+I) v = 0 on the stable subspace; with v = [x; Px] this stacks to an
  // overdetermined linear system for P.
  Mat M(16, 8), rhs(16, 8);
  M.topRows(8) = Z.topRightCorner<8, 8>();
  M.bottomRows(8) = Z.bottomRightCorner<8, 8>() + Mat8::Identity();
  rhs.topRows(8) = -(Z.topLeftCorner<8, 8>() + Mat8::Identity());
  rhs.bottomRows(8) = -Z.bottomLeftCorner<8, 8>();
  Mat8 P = M.colPivHouseholderQr().solve(rhs);
  return 0.5 * (P + P.transpose());
}

}  // namespace

LqrBaseline lqr_baseline(const LinearDynamics& dyn, const Mat8& Q, double R) {
  if (!(R > 0.0)) throw ModelError("lqr: R must be > 0");
  const Mat8& A = dyn.A;
  const Vec8& B = dyn.B;

  Mat8 P = care_sign_seed(A, B, Q, R);
  RowVec8 K = (B.transpose() * P) / R;
  {
    Eigen::EigenSolver<Mat8> es(A - B * K);
    if (es.eigenvalues().real().maxCoeff() >= 0.0)
      throw ModelError("lqr: sign-method seed is not stabilizing");
  }

  double residual = 1e300;
  for (int it = 0; it < 100; ++it) {
    const Mat8 Acl = A - B * K;
    const Mat8 Qcl = Q + K.transpose() * (R * K);
    P = solve_lyapunov(Acl, Qcl);
    K = (B.transpose() * P) / R;
    const Mat8 res = A.transpose() * P + P * A -
                     P * B * B.transpose() * P / R + Q;
    residual = res.norm();
    if (residual <= 1e-10) break;
  }
  if (residual > 1e-8)
    throw ModelError("lqr: Riccati iteration stalled, residual " +
                     std::to_string(residual));

  LqrBaseline out;
  out.K = K;
  out.P = P;
  out.riccati_residual = residual;

  // Feedforward: with u = -K x + kff rd, steady state solves
  // (A - B K) x_ss + (B kff + E1) rd = 0; pick kff so y_ss = 0.
  const Mat8 Acl = A - B * K;
  Eigen::FullPivLU<Mat8> lu(Acl);
  const Vec8 xe1 = -lu.solve(dyn.E1);  // response to rd with kff = 0
  const Vec8 xeb = -lu.solve(dyn.B);   // sensitivity to kff
  if (std::abs(xeb(0)) < 1e-14)
    throw ModelError("lqr: feedforward has no authority over y");
  out.kff = -xe1(0) / xeb(0);
  return out;
}

}  // namespace lk

#include "lk/trajopt.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace lk {

QuadBarrier quad_barrier(const MultiPoly& b,
                         const std::vector<std::string>& state_vars,
                         double kappa) {
  if (b.degree() > 2)
    throw ModelError("quad_barrier: barrier degree exceeds 2");
  const MultiPoly bn = b.on_vars(state_vars);
  const int n = static_cast<int>(state_vars.size());
  if (n != 8) throw ModelError("quad_barrier: expected 8 state variables");
  QuadBarrier out;
  out.kappa = kappa;
  for (const auto& [e, c] : bn.terms()) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < e[i]; ++k) idx.push_back(i);
    if (idx.empty()) {
      out.c0 = c;
    } else if (idx.size() == 1) {
      out.q(idx[0]) += 0.5 * c;
    } else {
      if (idx[0] == idx[1]) {
        out.P(idx[0], idx[0]) += c;
      } else {
        out.P(idx[0], idx[1]) += 0.5 * c;
        out.P(idx[1], idx[0]) += 0.5 * c;
      }
    }
  }
  return out;
}

double cbf_residual(const QuadBarrier& bar, const Vec8& x, const Vec8& xdot) {
  const double b = bar.value(x);
  const double eb = std::exp(b);
  return bar.gradient(x).dot(xdot) + bar.kappa * (eb - 1.0) / (eb + 1.0);
}

InsertionMap build_insertion_map(const LinearDynamics& dyn,
                                 const OutputChain& chain) {
  InsertionMap m;
  m.C1 = Mat::Zero(5, 8);
  m.C1.row(0) = chain.c;
  m.C1.row(1) = chain.cA;
  m.C1(2, 2) = 1.0;                 // psi
  m.C1(3, 1) = -dyn.B(3);          // -B_r * v_y
  m.C1(3, 3) = dyn.B(1);           // +B_vy * r
  m.C1(4, 4) = 1.0;                // psi_a
  m.C2 = Mat::Zero(3, 8);
  m.C2(0, 5) = 1.0;                // r_s
  m.C2(1, 6) = 1.0;                // phi
  m.C2(2, 7) = 1.0;                // p

  // equilibria are linear in r_d, so the whole locus is one direction
  const auto chain_check = output_chain(dyn, chain.T0, chain.vx);
  const Equilibrium e1 = equilibrium(dyn, chain_check, 0.01);
  if (!e1.x.allFinite())
    throw ModelError("build_insertion_map: inconsistent equilibrium data");
  const Vec a = m.C1 * e1.x;  // slow-state direction
  const Vec b = m.C2 * e1.x;  // fast-state direction
  const double a2 = a.squaredNorm();
  m.G = a2 > 1e-14 ? Mat(b * a.transpose() / a2) : Mat(Mat::Zero(3, 5));
  return m;
}

void hs_defects(const Vec8& xm, const Vec8& xdm, const Vec8& xc,
                const Vec8& xdc, const Vec8& xp, const Vec8& xdp,
                double interval, Vec8& zeta, Vec8& delta) {
  zeta = xdc - 1.5 / interval * (xp - xm) + 0.25 * (xdm + xdp);
  delta = xc - 0.5 * (xp + xm) - interval / 8.0 * (xdm - xdp);
}

void TrajOptSpec::validate() const {
  if (N < 4 || N % 2 != 0) throw ModelError("trajopt: N must be even, >= 4");
  if (T <= 0.0) throw ModelError("trajopt: horizon must be positive");
  if (c1 <= 0.0 || c1 >= 1.0) throw ModelError("trajopt: c1 outside (0,1)");
  if (c3 <= 0.0) throw ModelError("trajopt: c3 must be positive");
  if (u_max <= 0.0) throw ModelError("trajopt: u_max must be positive");
  if (weights.size() != 7 || weights.minCoeff() < 0.0)
    throw ModelError("trajopt: need 7 non-negative weights");
  if (bezier_order < 3) throw ModelError("trajopt: bezier order too low");
  gains.validate();
}

namespace {

struct Layout {
  int m;       // bezier order
  int N;
  int n;       // total decision dim
  int ix(int i) const { return m + 1 + 8 * i; }
  int iu(int i) const { return m + 1 + 8 * (N + 1) + i; }
};

Vec simpson_weights(int N, double T) {
  Vec w = Vec::Zero(N + 1);
  const double h = T / N;
  for (int i = 0; i <= N; ++i)
    w(i) = (i == 0 || i == N) ? h / 3.0 : (i % 2 == 1 ? 4.0 * h / 3.0
                                                      : 2.0 * h / 3.0);
  return w;
}

// log-sum-exp over {beta*v_j}, returns lse/beta and softmax weights
double smooth_max(const std::vector<double>& v, double beta,
                  std::vector<double>* w) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(beta * (x - mx));
  const double lse = mx + std::log(s) / beta;
  if (w) {
    w->resize(v.size());
    for (std::size_t j = 0; j < v.size(); ++j)
      (*w)[j] = std::exp(beta * (v[j] - lse)) / 1.0;
    // normalize (weights sum to s * e^{beta(mx-lse)} = 1 by construction)
  }
  return lse;
}

}  // namespace

Nlp assemble_nlp(const TrajOptSpec& spec, const TrajContext& ctx) {
  spec.validate();
  const Layout L{spec.bezier_order, spec.N,
                 spec.bezier_order + 1 + 9 * (spec.N + 1)};
  const int N = spec.N;
  const double T = spec.T;
  const double dt = T / N;
  const Mat8& A = ctx.dyn.A;
  const Vec8& B = ctx.dyn.B;
  const Vec8 Erd = ctx.dyn.E1 * spec.rd;
  const OutputChain& ch = ctx.chain;
  const double kp = spec.gains.kp, kd = spec.gains.kd;
  const Equilibrium eq = equilibrium(ctx.dyn, ctx.chain, spec.rd);
  const Mat M = ctx.gamma.mismatch();
  const Mat8 MtM = M.transpose() * M;
  const double v0 = (spec.x0 - eq.x).dot(ctx.P_lyap * (spec.x0 - eq.x));

  Nlp nlp;
  // One elastic scalar (last variable) relaxes the nonconvex rows (CBF and
  // the two terminal conditions) so every QP subproblem stays consistent;
  // a steep linear cost drives it to zero and a solution that keeps it
  // positive is reported as infeasible.
  nlp.n = L.n + 1;
  nlp.n_eq = 8 + 2 + (N + 1) + 8 * N;
  nlp.n_in = 3 * (N + 1) + 3;
  const int es = L.n;            // elastic index
  const double w_es = 100.0;     // elastic cost slope

  auto bez = [L, T](const Vec& z) {
    BezierCurve c;
    c.coeffs.assign(z.data(), z.data() + L.m + 1);
    c.horizon = T;
    return c;
  };
  auto node_xdot = [=](const Vec& z, int i) -> Vec8 {
    return A * z.segment<8>(L.ix(i)) + B * z(L.iu(i)) + Erd;
  };

  nlp.eq = [=](const Vec& z, Vec& c, Mat* J) {
    c.resize(nlp.n_eq);
    if (J) J->setZero(nlp.n_eq, L.n);
    const BezierCurve h = bez(z);
    int r = 0;
    // x(0) = x0
    c.segment<8>(r) = z.segment<8>(L.ix(0)) - spec.x0;
    if (J) J->block<8, 8>(r, L.ix(0)).setIdentity();
    r += 8;
    // h(0) = z(x0), hdot(0) = zdot(x0)
    c(r) = h.eval(0.0, 0) - ch.c * spec.x0;
    if (J) J->row(r).segment(0, L.m + 1) = h.eval_grad(0.0, 0).transpose();
    ++r;
    c(r) = h.eval(0.0, 1) - (ch.cA * spec.x0 + ch.dz_rd * spec.rd);
    if (J) J->row(r).segment(0, L.m + 1) = h.eval_grad(0.0, 1).transpose();
    ++r;
    // virtual constraint (closed-loop output error dynamics) at every node
    const RowVec8 cx = ch.cA2 + kd * ch.cA + kp * ch.c;
    for (int i = 0; i <= N; ++i) {
      const double t = i * dt;
      const Vec8 xi = z.segment<8>(L.ix(i));
      const double ui = z(L.iu(i));
      const double rdterm = ch.lfgd1h * spec.rd + kd * ch.dz_rd * spec.rd;
      const double href =
          h.eval(t, 2) + kd * h.eval(t, 1) + kp * h.eval(t, 0);
      c(r) = cx * xi + ch.lglfh * ui + rdterm - href;
      if (J) {
        J->row(r).segment<8>(L.ix(i)) = cx;
        (*J)(r, L.iu(i)) = ch.lglfh;
        J->row(r).segment(0, L.m + 1) =
            -(h.eval_grad(t, 2) + kd * h.eval_grad(t, 1) +
              kp * h.eval_grad(t, 0))
                 .transpose();
      }
      ++r;
    }
    // Hermite-Simpson defects at interior odd nodes
    const double iv = 2.0 * dt;
    for (int i = 1; i < N; i += 2) {
      const Vec8 xm = z.segment<8>(L.ix(i - 1)), xc = z.segment<8>(L.ix(i)),
                 xp = z.segment<8>(L.ix(i + 1));
      const Vec8 xdm = node_xdot(z, i - 1), xdc = node_xdot(z, i),
                 xdp = node_xdot(z, i + 1);
      Vec8 zeta, delta;
      hs_defects(xm, xdm, xc, xdc, xp, xdp, iv, zeta, delta);
      c.segment<8>(r) = zeta;
      c.segment<8>(r + 8) = delta;
      if (J) {
        const double a = 1.5 / iv;
        // zeta rows
        J->block<8, 8>(r, L.ix(i)) = A;
        J->block<8, 1>(r, L.iu(i)) = B;
        J->block<8, 8>(r, L.ix(i - 1)) = a * Mat8::Identity() + 0.25 * A;
        J->block<8, 1>(r, L.iu(i - 1)) = 0.25 * B;
        J->block<8, 8>(r, L.ix(i + 1)) = -a * Mat8::Identity() + 0.25 * A;
        J->block<8, 1>(r, L.iu(i + 1)) = 0.25 * B;
        // delta rows
        J->block<8, 8>(r + 8, L.ix(i)).setIdentity();
        J->block<8, 8>(r + 8, L.ix(i - 1)) =
            -0.5 * Mat8::Identity() - iv / 8.0 * A;
        J->block<8, 1>(r + 8, L.iu(i - 1)) = -iv / 8.0 * B;
        J->block<8, 8>(r + 8, L.ix(i + 1)) =
            -0.5 * Mat8::Identity() + iv / 8.0 * A;
        J->block<8, 1>(r + 8, L.iu(i + 1)) = iv / 8.0 * B;
      }
      r += 16;
    }
  };

  nlp.ineq = [=](const Vec& z, Vec& g, Mat* J) {
    g.resize(nlp.n_in);
    if (J) J->setZero(nlp.n_in, L.n);
    int r = 0;
    for (int i = 0; i <= N; ++i) {
      const double ui = z(L.iu(i));
      g(r) = spec.u_max - ui;
      g(r + 1) = spec.u_max + ui;
      if (J) {
        (*J)(r, L.iu(i)) = -1.0;
        (*J)(r + 1, L.iu(i)) = 1.0;
      }
      r += 2;
    }
    for (int i = 0; i <= N; ++i) {
      const Vec8 xi = z.segment<8>(L.ix(i));
      const Vec8 xd = node_xdot(z, i);
      const double b = ctx.bar.value(xi);
      const double eb = std::exp(b);
      const double sig = (eb - 1.0) / (eb + 1.0);
      const double dsig = 2.0 * eb / ((eb + 1.0) * (eb + 1.0));
      const Vec8 gb = ctx.bar.gradient(xi);
      g(r) = gb.dot(xd) + spec.kappa * sig;
      if (J) {
        const Vec8 dx = 2.0 * (ctx.bar.P * xd) + A.transpose() * gb +
                        spec.kappa * dsig * gb;
        J->row(r).segment<8>(L.ix(i)) = dx.transpose();
        (*J)(r, L.iu(i)) = gb.dot(B);
      }
      ++r;
    }
    // terminal Lyapunov contraction
    {
      const Vec8 xT = z.segment<8>(L.ix(N));
      const Vec8 d = xT - eq.x;
      g(r) = spec.c1 * v0 - d.dot(ctx.P_lyap * d);
      if (J)
        J->row(r).segment<8>(L.ix(N)) =
            (-2.0 * (ctx.P_lyap * d)).transpose();
      ++r;
    }
    // insertion-map terminal condition (squared form)
    {
      const Vec8 xT = z.segment<8>(L.ix(N));
      g(r) = spec.c3 * spec.c3 - xT.dot(MtM * xT);
      if (J) J->row(r).segment<8>(L.ix(N)) = (-2.0 * (MtM * xT)).transpose();
      ++r;
    }
  };

  const Vec sw = simpson_weights(N, T);
  nlp.cost = [=](const Vec& z, Vec* grad) -> double {
    if (grad) grad->setZero(L.n);
    const Vec& w = spec.weights;
    double cost = 0.0;
    // terminal Lyapunov
    {
      const Vec8 d = z.segment<8>(L.ix(N)) - eq.x;
      cost += w(0) * d.dot(ctx.P_lyap * d);
      if (grad)
        grad->segment<8>(L.ix(N)) += w(0) * 2.0 * (ctx.P_lyap * d);
    }
    // Simpson integrals of z^2, zdot^2, u^2
    for (int i = 0; i <= N; ++i) {
      const Vec8 xi = z.segment<8>(L.ix(i));
      const double zi = ch.c * xi;
      const double zdi = ch.cA * xi + ch.dz_rd * spec.rd;
      const double ui = z(L.iu(i));
      cost += sw(i) * (w(1) * zi * zi + w(2) * zdi * zdi + w(5) * ui * ui);
      if (grad) {
        grad->segment<8>(L.ix(i)) +=
            sw(i) * (2.0 * w(1) * zi * ch.c.transpose() +
                     2.0 * w(2) * zdi * ch.cA.transpose());
        (*grad)(L.iu(i)) += sw(i) * 2.0 * w(5) * ui;
      }
    }
    // smoothed inf-norms of y and r
    for (const auto& [state, wi] : {std::pair<int, int>{0, 3},
                                    std::pair<int, int>{3, 4}}) {
      std::vector<double> vals(2 * (N + 1));
      for (int i = 0; i <= N; ++i) {
        const double v = z(L.ix(i) + state);
        vals[2 * i] = v;
        vals[2 * i + 1] = -v;
      }
      std::vector<double> sm;
      const double mx = smooth_max(vals, spec.beta, grad ? &sm : nullptr);
      cost += w(wi) * mx;
      if (grad)
        for (int i = 0; i <= N; ++i)
          (*grad)(L.ix(i) + state) += w(wi) * (sm[2 * i] - sm[2 * i + 1]);
    }
    // smoothed |alpha_m|
    {
      const double am = z(L.m);
      std::vector<double> sm;
      const double mx = smooth_max({am, -am}, spec.beta, grad ? &sm : nullptr);
      cost += w(6) * mx;
      if (grad) (*grad)(L.m) += w(6) * (sm[0] - sm[1]);
    }
    return cost;
  };

  return nlp;
}

namespace {

struct QpOut {
  Vec d;
  Vec lam;  // equality multipliers
  Vec mu;   // inequality multipliers (full length, zero when inactive)
  bool ok = false;
  std::vector<int> active;
};

// dense active-set QP:  min 1/2 d'Hd + g'd  s.t.  Aeq d = beq, Ain d >= bin
// The equalities leave only a handful of degrees of freedom here, so the
// problem is reduced onto the null space of Aeq once (one QR) and the
// active-set iteration runs on the tiny reduced KKT system.
QpOut solve_qp(const Mat& H, const Vec& g, const Mat& Aeq, const Vec& beq,
               const Mat& Ain, const Vec& bin, std::vector<int> W) {
  const int n = static_cast<int>(H.rows());
  const int me = static_cast<int>(Aeq.rows());
  const int mi = static_cast<int>(Ain.rows());
  QpOut out;
  out.mu = Vec::Zero(mi);
  std::vector<char> in_w(mi, 0);
  // drop warm indices out of range
  std::vector<int> Wf;
  for (int j : W)
    if (j >= 0 && j < mi && !in_w[j]) {
      Wf.push_back(j);
      in_w[j] = 1;
    }
  W = Wf;

  // Aeq' P = Q R: particular solution d_p and null-space basis Z
  Eigen::ColPivHouseholderQR<Mat> qr(Aeq.transpose());
  const int rank = static_cast<int>(qr.rank());
  if (rank < me) return out;  // rank-deficient equalities: give up
  const Mat Qfull = qr.householderQ() * Mat::Identity(n, n);
  const Mat R1 = qr.matrixR().topLeftCorner(me, me).triangularView<Eigen::Upper>();
  const Vec u1 = R1.transpose().triangularView<Eigen::Lower>().solve(
      qr.colsPermutation().transpose() * beq);
  const Vec d_p = Qfull.leftCols(me) * u1;
  const Mat Z = Qfull.rightCols(n - me);
  const int nz = n - me;

  const Mat Hr = Z.transpose() * H * Z;
  const Vec gr = Z.transpose() * (H * d_p + g);
  const Mat Ar = Ain * Z;            // reduced inequality rows
  const Vec br = bin - Ain * d_p;

  Vec w_sol;
  for (int it = 0; it < 200; ++it) {
    const int ma = static_cast<int>(W.size());
    Mat K = Mat::Zero(nz + ma, nz + ma);
    Vec rhs(nz + ma);
    K.topLeftCorner(nz, nz) = Hr;
    for (int a = 0; a < ma; ++a) {
      K.block(0, nz + a, nz, 1) = Ar.row(W[a]).transpose();
      K.block(nz + a, 0, 1, nz) = Ar.row(W[a]);
    }
    rhs.head(nz) = -gr;
    for (int a = 0; a < ma; ++a) rhs(nz + a) = br(W[a]);

    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) {
      K.topLeftCorner(nz, nz) += 1e-8 * Mat::Identity(nz, nz);
      lu.compute(K);
      if (!lu.isInvertible()) return out;
    }
    const Vec sol = lu.solve(rhs);
    const Vec w = sol.head(nz);

    // most violated inactive inequality
    int worst = -1;
    double worst_v = -1e-9;
    const Vec rin = Ar * w - br;
    for (int j = 0; j < mi; ++j)
      if (!in_w[j] && rin(j) < worst_v) {
        worst_v = rin(j);
        worst = j;
      }
    if (worst >= 0) {
      W.push_back(worst);
      in_w[worst] = 1;
      continue;
    }
    // multiplier signs on the working set (mu >= 0 for g >= 0 constraints)
    int drop = -1;
    double drop_v = -1e-9;
    for (int a = 0; a < ma; ++a) {
      const double mu_a = -sol(nz + a);
      if (mu_a < drop_v) {
        drop_v = mu_a;
        drop = a;
      }
    }
    if (drop >= 0) {
      in_w[W[drop]] = 0;
      W.erase(W.begin() + drop);
      continue;
    }
    w_sol = w;
    for (int a = 0; a < ma; ++a) out.mu(W[a]) = -sol(nz + a);
    out.active = W;
    out.ok = true;
    break;
  }
  if (!out.ok) return out;

  out.d = d_p + Z * w_sol;
  // equality multipliers from stationarity: Aeq' lam = H d + g - Ain' mu
  const Vec rhs_lam = H * out.d + g - Ain.transpose() * out.mu;
  out.lam = qr.colsPermutation() *
            R1.triangularView<Eigen::Upper>()
                .solve((Qfull.leftCols(me).transpose() * rhs_lam).eval());
  return out;
}

}  // namespace

SqpResult nlp_solve(const Nlp& nlp, const Vec& guess, int max_iters) {
  SqpResult res;
  Vec z = guess;
  Mat H = Mat::Identity(nlp.n, nlp.n);
  Vec lam = Vec::Zero(nlp.n_eq), mu = Vec::Zero(nlp.n_in);
  double merit_mu = 10.0;
  std::vector<int> warm;

  Vec gradf(nlp.n), ceq(nlp.n_eq), cin(nlp.n_in);
  Mat Jeq(nlp.n_eq, nlp.n), Jin(nlp.n_in, nlp.n);
  double f = nlp.cost(z, &gradf);
  nlp.eq(z, ceq, &Jeq);
  nlp.ineq(z, cin, &Jin);

  auto viol1 = [&](const Vec& ce, const Vec& ci) {
    return ce.cwiseAbs().sum() + (-ci).cwiseMax(0.0).sum();
  };
  auto violinf = [&](const Vec& ce, const Vec& ci) {
    double v = ce.size() ? ce.cwiseAbs().maxCoeff() : 0.0;
    if (ci.size()) v = std::max(v, (-ci).cwiseMax(0.0).maxCoeff());
    return v;
  };

  for (int it = 0; it < max_iters; ++it) {
    res.iterations = it + 1;
    // KKT residual with current multiplier estimates
    const Vec stat = gradf - Jeq.transpose() * lam - Jin.transpose() * mu;
    res.kkt_residual = stat.cwiseAbs().maxCoeff();
    res.max_violation = violinf(ceq, cin);
    if (res.kkt_residual <= 1e-6 && res.max_violation <= 1e-6) {
      res.converged = true;
      break;
    }

    auto qp = solve_qp(H, gradf, Jeq, -ceq, Jin, -cin, warm);
    if (!qp.ok) {
      // The linearization can be inconsistent far from feasibility (deeply
      // violated CBF rows against the input box).  Ask for only a fraction
      // of the correction; the merit line search still judges the step.
      for (double beta : {0.5, 0.25, 0.1, 0.02}) {
        Vec rin = -cin;
        for (int i = 0; i < cin.size(); ++i)
          if (cin(i) < 0.0) rin(i) = -beta * cin(i);
        qp = solve_qp(H, gradf, Jeq, -beta * ceq, Jin, rin, warm);
        if (qp.ok) break;
      }
    }
    if (!qp.ok) break;
    warm = qp.active;
    lam = qp.lam;
    mu = qp.mu;

    const double mult_inf =
        std::max(lam.size() ? lam.cwiseAbs().maxCoeff() : 0.0,
                 mu.size() ? mu.cwiseAbs().maxCoeff() : 0.0);
    merit_mu = std::max(merit_mu, 1.5 * mult_inf + 1.0);

    const double phi0 = f + merit_mu * viol1(ceq, cin);
    const double dderiv = gradf.dot(qp.d) - merit_mu * viol1(ceq, cin);
    double alpha = 1.0;
    Vec ztrial, ce_t(nlp.n_eq), ci_t(nlp.n_in);
    double f_t = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      ztrial = z + alpha * qp.d;
      f_t = nlp.cost(ztrial, nullptr);
      nlp.eq(ztrial, ce_t, nullptr);
      nlp.ineq(ztrial, ci_t, nullptr);
      const double phi = f_t + merit_mu * viol1(ce_t, ci_t);
      if (phi <= phi0 + 1e-4 * alpha * dderiv || alpha < 1e-10) break;
      alpha *= 0.5;
    }

    // damped BFGS on the Lagrangian
    const Vec grad_l_old =
        gradf - Jeq.transpose() * lam - Jin.transpose() * mu;
    z = ztrial;
    f = nlp.cost(z, &gradf);
    nlp.eq(z, ceq, &Jeq);
    nlp.ineq(z, cin, &Jin);
    const Vec grad_l_new =
        gradf - Jeq.transpose() * lam - Jin.transpose() * mu;
    const Vec s = alpha * qp.d;
    Vec y = grad_l_new - grad_l_old;
    const double sts = s.squaredNorm();
    if (sts > 1e-16) {
      const Vec Hs = H * s;
      const double sHs = s.dot(Hs);
      double sy = s.dot(y);
      if (sy < 0.2 * sHs) {
        const double theta = 0.8 * sHs / (sHs - sy);
        y = theta * y + (1.0 - theta) * Hs;
        sy = s.dot(y);
      }
      if (sy > 1e-12 && sHs > 1e-12)
        H += y * y.transpose() / sy - Hs * Hs.transpose() / sHs;
    }
  }
  res.x = z;
  if (!res.converged) {
    res.max_violation = violinf(ceq, cin);
  }
  return res;
}

Vec cost_breakdown(const TrajOptSpec& spec, const TrajContext& ctx,
                   const std::vector<Vec8>& x, const std::vector<double>& u,
                   const BezierCurve& h) {
  (void)h;
  const int N = spec.N;
  const Vec sw = simpson_weights(N, spec.T);
  const Equilibrium eq = equilibrium(ctx.dyn, ctx.chain, spec.rd);
  Vec terms = Vec::Zero(7);
  const Vec8 d = x[N] - eq.x;
  terms(0) = d.dot(ctx.P_lyap * d);
  for (int i = 0; i <= N; ++i) {
    const double zi = ctx.chain.c * x[i];
    const double zdi = ctx.chain.cA * x[i] + ctx.chain.dz_rd * spec.rd;
    terms(1) += sw(i) * zi * zi;
    terms(2) += sw(i) * zdi * zdi;
    terms(3) = std::max(terms(3), std::abs(x[i](0)));
    terms(4) = std::max(terms(4), std::abs(x[i](3)));
    terms(5) += sw(i) * u[i] * u[i];
  }
  terms(6) = std::abs(h.coeffs.back());
  return terms;
}

Vec default_guess(const TrajOptSpec& spec, const TrajContext& ctx) {
  const Layout L{spec.bezier_order, spec.N,
                 spec.bezier_order + 1 + 9 * (spec.N + 1)};
  const int N = spec.N;
  const double dt = spec.T / N;
  const OutputChain& ch = ctx.chain;
  const double kp = spec.gains.kp, kd = spec.gains.kd;

  // C2 decay reference from the measured output to the lane center
  BezierCurve target;
  target.coeffs.assign(L.m + 1, 0.0);
  target.horizon = spec.T;
  const double h0 = ch.c * spec.x0;
  const double hd0 = ch.cA * spec.x0 + ch.dz_rd * spec.rd;
  const BezierCurve h = splice_smooth(h0, hd0, -kd * hd0 - kp * h0, target);

  // Integrate the feedback-linearized loop along the reference so the guess
  // satisfies the dynamics and virtual-constraint rows up to integration
  // error; a straight-line state guess leaves O(1) residuals at aggressive
  // initial conditions and the first QP subproblem becomes inconsistent.
  const RowVec8 cx = ch.cA2 + kd * ch.cA + kp * ch.c;
  const double rdterm = ch.lfgd1h * spec.rd + kd * ch.dz_rd * spec.rd;
  auto input = [&](double t, const Vec8& x) -> double {
    const double href =
        h.eval(t, 2) + kd * h.eval(t, 1) + kp * h.eval(t, 0);
    return (href - cx * x - rdterm) / ch.lglfh;
  };
  auto field = [&](double t, const Vec8& x) -> Vec8 {
    return ctx.dyn.A * x + ctx.dyn.B * input(t, x) + ctx.dyn.E1 * spec.rd;
  };

  Vec z = Vec::Zero(L.n);
  for (int j = 0; j <= L.m; ++j) z(j) = h.coeffs[j];
  Vec8 x = spec.x0;
  const int sub = 8;
  for (int i = 0; i <= N; ++i) {
    z.segment<8>(L.ix(i)) = x;
    z(L.iu(i)) = input(i * dt, x);
    if (i == N) break;
    const double hs = dt / sub;
    for (int s = 0; s < sub; ++s) {
      const double t = i * dt + s * hs;
      const Vec8 k1 = field(t, x);
      const Vec8 k2 = field(t + 0.5 * hs, x + 0.5 * hs * k1);
      const Vec8 k3 = field(t + 0.5 * hs, x + 0.5 * hs * k2);
      const Vec8 k4 = field(t + hs, x + hs * k3);
      x += hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return z;
}

TrajSolution optimize_trajectory(const TrajOptSpec& spec,
                                 const TrajContext& ctx) {
  const Layout L{spec.bezier_order, spec.N,
                 spec.bezier_order + 1 + 9 * (spec.N + 1)};
  Nlp nlp = assemble_nlp(spec, ctx);
  const Vec guess = default_guess(spec, ctx);
  SqpResult sr = nlp_solve(nlp, guess, spec.max_iters);

  TrajSolution sol;
  sol.iterations = sr.iterations;
  sol.kkt_residual = sr.kkt_residual;
  sol.max_violation = sr.max_violation;
  sol.h_des.coeffs.assign(sr.x.data(), sr.x.data() + L.m + 1);
  sol.h_des.horizon = spec.T;
  for (int i = 0; i <= spec.N; ++i) {
    sol.x.push_back(sr.x.segment<8>(L.ix(i)));
    sol.u.push_back(sr.x(L.iu(i)));
    sol.xdot.push_back(ctx.dyn.A * sol.x.back() + ctx.dyn.B * sol.u.back() +
                       ctx.dyn.E1 * spec.rd);
  }
  sol.feasible = sr.converged && sr.max_violation <= 1e-6;
  sol.cost_terms = cost_breakdown(spec, ctx, sol.x, sol.u, sol.h_des);
  sol.cost = spec.weights.dot(sol.cost_terms);
  return sol;
}

}  // namespace lk

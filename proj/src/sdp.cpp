#include "lk/sdp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lk {

namespace {

struct BlockIndex {
  // constraint entries grouped per block, then per constraint
  std::vector<std::vector<std::vector<SdpProblem::Entry>>> by_block_con;
  std::vector<std::vector<int>> cons_in_block;  // constraints touching block
};

BlockIndex build_index(const SdpProblem& p) {
  BlockIndex idx;
  const int J = static_cast<int>(p.block_dims.size());
  idx.by_block_con.assign(J, {});
  idx.cons_in_block.assign(J, {});
  std::vector<std::vector<std::vector<SdpProblem::Entry>>> tmp(
      J, std::vector<std::vector<SdpProblem::Entry>>(p.num_cons));
  for (const auto& e : p.entries) tmp[e.block][e.con].push_back(e);
  for (int j = 0; j < J; ++j) {
    for (int i = 0; i < p.num_cons; ++i) {
      if (tmp[j][i].empty()) continue;
      idx.cons_in_block[j].push_back(i);
      idx.by_block_con[j].push_back(std::move(tmp[j][i]));
    }
  }
  return idx;
}

// <A, X> with the symmetric triplet convention.
double sym_dot(const std::vector<SdpProblem::Entry>& a, const Mat& X) {
  double s = 0.0;
  for (const auto& e : a)
    s += (e.row == e.col) ? e.value * X(e.row, e.col)
                          : 2.0 * e.value * X(e.row, e.col);
  return s;
}

void add_sym(Mat& X, const std::vector<SdpProblem::Entry>& a, double scale) {
  for (const auto& e : a) {
    X(e.row, e.col) += scale * e.value;
    if (e.row != e.col) X(e.col, e.row) += scale * e.value;
  }
}

// W A W for sparse symmetric A given as triplets.
Mat sandwich(const Mat& W, const std::vector<SdpProblem::Entry>& a) {
  Mat U = Mat::Zero(W.rows(), W.cols());
  for (const auto& e : a) {
    const auto wr = W.col(e.row);
    const auto wc = W.col(e.col);
    if (e.row == e.col) {
      U.noalias() += e.value * (wr * wr.transpose());
    } else {
      U.noalias() += e.value * (wr * wc.transpose());
      U.noalias() += e.value * (wc * wr.transpose());
    }
  }
  return U;
}

// Largest alpha in (0,1] with X + alpha*D staying PSD (fraction applied).
double max_step(const Mat& X, const Mat& D, double frac) {
  Eigen::LLT<Mat> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  const Mat L = llt.matrixL();
  const Mat Y = L.triangularView<Eigen::Lower>().solve(
      L.triangularView<Eigen::Lower>().solve(D).transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Y + Y.transpose()),
                                        Eigen::EigenvaluesOnly);
  const double emin = es.eigenvalues().minCoeff();
  if (emin >= 0.0) return 1.0;
  return std::min(1.0, -frac / emin);
}

}  // namespace

SdpSolution sdp_solve(const SdpProblem& p, const SdpOptions& opt) {
  const int J = static_cast<int>(p.block_dims.size());
  const int m = p.num_cons;
  const int k = p.num_free;
  const BlockIndex idx = build_index(p);

  // objective blocks
  std::vector<Mat> C(J);
  for (int j = 0; j < J; ++j) C[j] = Mat::Zero(p.block_dims[j], p.block_dims[j]);
  {
    std::vector<std::vector<SdpProblem::Entry>> per(J);
    for (const auto& e : p.cost_entries) per[e.block].push_back(e);
    for (int j = 0; j < J; ++j) add_sym(C[j], per[j], 1.0);
  }

  // dense F (m x k)
  Mat F = Mat::Zero(m, k);
  for (const auto& e : p.free_entries) F(e.con, e.var) += e.value;

  SdpSolution sol;
  sol.X.resize(J);
  sol.S.resize(J);
  int ntot = 0;
  for (int j = 0; j < J; ++j) ntot += p.block_dims[j];
  const double binf = m ? p.b.cwiseAbs().maxCoeff() : 0.0;
  double cinf = 0.0;
  for (int j = 0; j < J; ++j)
    cinf = std::max(cinf, C[j].cwiseAbs().maxCoeff());
  const double xi = 1.0 + binf;
  const double eta = 1.0 + cinf;
  for (int j = 0; j < J; ++j) {
    sol.X[j] = xi * Mat::Identity(p.block_dims[j], p.block_dims[j]);
    sol.S[j] = eta * Mat::Identity(p.block_dims[j], p.block_dims[j]);
  }
  sol.y = Vec::Zero(k);
  sol.lambda = Vec::Zero(m);

  auto apply_A = [&](const std::vector<Mat>& X) {
    Vec out = Vec::Zero(m);
    for (int j = 0; j < J; ++j)
      for (std::size_t q = 0; q < idx.cons_in_block[j].size(); ++q)
        out(idx.cons_in_block[j][q]) += sym_dot(idx.by_block_con[j][q], X[j]);
    return out;
  };
  auto apply_At = [&](const Vec& lam) {
    std::vector<Mat> out(J);
    for (int j = 0; j < J; ++j) {
      out[j] = Mat::Zero(p.block_dims[j], p.block_dims[j]);
      for (std::size_t q = 0; q < idx.cons_in_block[j].size(); ++q)
        add_sym(out[j], idx.by_block_con[j][q],
                lam(idx.cons_in_block[j][q]));
    }
    return out;
  };

  const double scale_p = 1.0 + binf;
  const double scale_d = 1.0 + cinf;

  for (int it = 0; it < opt.max_iters; ++it) {
    sol.iterations = it + 1;

    const Vec rp = p.b - apply_A(sol.X) - F * sol.y;
    auto At = apply_At(sol.lambda);
    std::vector<Mat> Rd(J);
    for (int j = 0; j < J; ++j) Rd[j] = C[j] - At[j] - sol.S[j];
    const Vec rf = p.c_free - F.transpose() * sol.lambda;

    double gap = 0.0;
    for (int j = 0; j < J; ++j)
      gap += (sol.X[j].array() * sol.S[j].array()).sum();
    const double mu = gap / std::max(1, ntot);
    sol.mu = mu;
    sol.primal_residual = m ? rp.cwiseAbs().maxCoeff() : 0.0;
    double dres = k ? rf.cwiseAbs().maxCoeff() : 0.0;
    for (int j = 0; j < J; ++j)
      dres = std::max(dres, Rd[j].cwiseAbs().maxCoeff());
    sol.dual_residual = dres;

    if (mu <= opt.tol * scale_d && sol.primal_residual <= opt.feas_tol * scale_p &&
        sol.dual_residual <= opt.feas_tol * scale_d) {
      sol.status = SdpStatus::Optimal;
      break;
    }
    // crude dual-ray certificate of primal infeasibility
    const double lam_norm = m ? sol.lambda.norm() : 0.0;
    if (lam_norm > 1e9 && p.b.dot(sol.lambda) > 1e-6 * lam_norm &&
        dres / lam_norm < 1e-8) {
      sol.status = SdpStatus::Infeasible;
      break;
    }

    // NT scaling per block
    std::vector<Mat> W(J), Sinv(J);
    bool scaling_ok = true;
    for (int j = 0; j < J; ++j) {
      Eigen::LLT<Mat> lx(sol.X[j]), ls(sol.S[j]);
      if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) {
        scaling_ok = false;
        break;
      }
      const Mat Lx = lx.matrixL();
      const Mat Ls = ls.matrixL();
      Eigen::JacobiSVD<Mat> svd(Ls.transpose() * Lx,
                                Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Vec sv = svd.singularValues();
      const Mat R = Lx * svd.matrixV() * sv.cwiseSqrt().cwiseInverse().asDiagonal();
      W[j] = R * R.transpose();
      Sinv[j] = ls.solve(Mat::Identity(p.block_dims[j], p.block_dims[j]));
    }
    if (!scaling_ok) {
      sol.status = SdpStatus::Stuck;
      break;
    }

    // Schur complement M_ik = sum_j <A_i, W A_k W>, shared by both solves
    Mat KKT = Mat::Zero(m + k, m + k);
    for (int j = 0; j < J; ++j) {
      const auto& cons = idx.cons_in_block[j];
      const int nj = static_cast<int>(cons.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
      for (int qi = 0; qi < nj; ++qi) {
        const Mat U = sandwich(W[j], idx.by_block_con[j][qi]);
        for (int qk = 0; qk < nj; ++qk) {
          const double v = sym_dot(idx.by_block_con[j][qk], U);
#ifdef _OPENMP
#pragma omp atomic
#endif
          KKT(cons[qi], cons[qk]) += v;
        }
      }
    }
    KKT.block(0, m, m, k) = F;
    KKT.block(m, 0, k, m) = F.transpose();
    Eigen::PartialPivLU<Mat> kktlu(KKT);

    auto solve_direction = [&](double sigma, const std::vector<Mat>* corr,
                               std::vector<Mat>& dX, std::vector<Mat>& dS,
                               Vec& dlam, Vec& dy) {
      std::vector<Mat> h(J);
      for (int j = 0; j < J; ++j) {
        h[j] = sigma * mu * Sinv[j] - sol.X[j] - W[j] * Rd[j] * W[j];
        if (corr) h[j] -= (*corr)[j];
        h[j] = 0.5 * (h[j] + h[j].transpose()).eval();
      }
      Vec rhs(m + k);
      rhs.head(m) = rp - apply_A(h);
      rhs.tail(k) = rf;
      const Vec dz = kktlu.solve(rhs);
      dlam = dz.head(m);
      dy = dz.tail(k);
      auto Atd = apply_At(dlam);
      dX.resize(J);
      dS.resize(J);
      for (int j = 0; j < J; ++j) {
        dS[j] = Rd[j] - Atd[j];
        dX[j] = h[j] + W[j] * Atd[j] * W[j];
        dX[j] = 0.5 * (dX[j] + dX[j].transpose()).eval();
        dS[j] = 0.5 * (dS[j] + dS[j].transpose()).eval();
      }
    };

    // predictor
    std::vector<Mat> dXa, dSa;
    Vec dla, dya;
    solve_direction(0.0, nullptr, dXa, dSa, dla, dya);
    double ap = 1.0, ad = 1.0;
    for (int j = 0; j < J; ++j) {
      ap = std::min(ap, max_step(sol.X[j], dXa[j], opt.step_frac));
      ad = std::min(ad, max_step(sol.S[j], dSa[j], opt.step_frac));
    }
    double gap_aff = 0.0;
    for (int j = 0; j < J; ++j)
      gap_aff += ((sol.X[j] + ap * dXa[j]).array() *
                  (sol.S[j] + ad * dSa[j]).array())
                     .sum();
    double sigma = std::pow(std::max(gap_aff, 0.0) / std::max(gap, 1e-300), 3.0);
    sigma = std::clamp(sigma, 1e-6, 0.9);

    // corrector with the second-order term from the affine direction
    std::vector<Mat> corr(J);
    for (int j = 0; j < J; ++j) {
      const Mat Tm = dXa[j] * dSa[j] * Sinv[j];
      corr[j] = 0.5 * (Tm + Tm.transpose());
    }
    std::vector<Mat> dX, dS;
    Vec dlam, dy;
    solve_direction(sigma, &corr, dX, dS, dlam, dy);

    ap = 1.0;
    ad = 1.0;
    for (int j = 0; j < J; ++j) {
      ap = std::min(ap, max_step(sol.X[j], dX[j], opt.step_frac));
      ad = std::min(ad, max_step(sol.S[j], dS[j], opt.step_frac));
    }
    if (ap < 1e-10 && ad < 1e-10) {
      sol.status = SdpStatus::Stuck;
      break;
    }
    for (int j = 0; j < J; ++j) {
      sol.X[j] += ap * dX[j];
      sol.S[j] += ad * dS[j];
    }
    sol.y += ap * dy;
    sol.lambda += ad * dlam;
  }

  sol.primal_obj = sol.y.size() ? p.c_free.dot(sol.y) : 0.0;
  for (int j = 0; j < J; ++j)
    sol.primal_obj += (C[j].array() * sol.X[j].array()).sum();
  sol.dual_obj = m ? p.b.dot(sol.lambda) : 0.0;
  if (sol.status != SdpStatus::Optimal && sol.status != SdpStatus::Infeasible)
    sol.status = SdpStatus::Stuck;
  if (sol.status == SdpStatus::Stuck && sol.mu <= 1e3 * opt.tol &&
      sol.primal_residual <= 1e2 * opt.feas_tol * scale_p &&
      sol.dual_residual <= 1e2 * opt.feas_tol * scale_d)
    sol.status = SdpStatus::Optimal;  // near-optimal fallback
  return sol;
}

}  // namespace lk

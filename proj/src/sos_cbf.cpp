#include "lk/sos_cbf.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace lk {

namespace {

// removes a variable that no term actually uses
MultiPoly drop_var(const MultiPoly& p, const std::string& name) {
  const auto& vars = p.vars();
  const auto it = std::find(vars.begin(), vars.end(), name);
  if (it == vars.end()) return p;
  const int idx = static_cast<int>(it - vars.begin());
  std::vector<std::string> reduced;
  for (int i = 0; i < static_cast<int>(vars.size()); ++i)
    if (i != idx) reduced.push_back(vars[i]);
  MultiPoly out(reduced);
  for (const auto& [e, c] : p.terms()) {
    if (e[idx] != 0)
      throw ModelError("drop_var: '" + name + "' still present");
    std::vector<int> d;
    for (int i = 0; i < static_cast<int>(e.size()); ++i)
      if (i != idx) d.push_back(e[i]);
    out.add_term(d, c);
  }
  return out;
}

MultiPoly from_expo(const std::vector<std::string>& vars,
                    const std::vector<int>& expo) {
  MultiPoly p(vars);
  p.add_term(expo, 1.0);
  return p;
}

// monomials over the first k of n variables, padded with zeros
std::vector<std::vector<int>> monomials_prefix(int k, int n, int d) {
  auto ms = monomials_up_to(k, d);
  for (auto& e : ms) e.resize(n, 0);
  return ms;
}

}  // namespace

SosProgram::SosProgram(std::vector<std::string> poly_vars)
    : vars_(std::move(poly_vars)) {}

int SosProgram::add_free(double cost) {
  costs_.push_back(cost);
  return prob_.num_free++;
}

int SosProgram::add_gram(const std::vector<std::vector<int>>& basis) {
  gram_basis_.push_back(basis);
  prob_.block_dims.push_back(static_cast<int>(basis.size()));
  return static_cast<int>(prob_.block_dims.size()) - 1;
}

void SosProgram::require_zero(const Expr& e) {
  Expr norm = e;
  norm.cst = e.cst.on_vars(vars_);
  for (auto& [v, p] : norm.freev) p = p.on_vars(vars_);
  for (auto& g : norm.grams) g.g = g.g.on_vars(vars_);

  // enumerate every monomial the identity can touch
  std::map<std::vector<int>, int, GradedLex> row_of;
  auto touch = [&](const std::vector<int>& expo) {
    if (!row_of.count(expo)) {
      const int r = prob_.num_cons++;
      row_of[expo] = r;
      brows_.push_back(0.0);
    }
  };
  for (const auto& [expo, c] : norm.cst.terms()) touch(expo);
  for (const auto& [v, p] : norm.freev)
    for (const auto& [expo, c] : p.terms()) touch(expo);
  for (const auto& gt : norm.grams) {
    const auto& basis = gram_basis_[gt.block];
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t j = i; j < basis.size(); ++j)
        for (const auto& [ge, gc] : gt.g.terms()) {
          std::vector<int> expo(vars_.size());
          for (std::size_t q = 0; q < expo.size(); ++q)
            expo[q] = basis[i][q] + basis[j][q] + ge[q];
          touch(expo);
        }
  }

  // rows: sum of all parts must vanish -> b_row = -cst coefficient
  for (const auto& [expo, c] : norm.cst.terms()) brows_[row_of[expo]] -= c;
  for (const auto& [v, p] : norm.freev)
    for (const auto& [expo, c] : p.terms())
      prob_.free_entries.push_back({row_of[expo], v, c});
  for (const auto& gt : norm.grams) {
    const auto& basis = gram_basis_[gt.block];
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t j = i; j < basis.size(); ++j)
        for (const auto& [ge, gc] : gt.g.terms()) {
          std::vector<int> expo(vars_.size());
          for (std::size_t q = 0; q < expo.size(); ++q)
            expo[q] = basis[i][q] + basis[j][q] + ge[q];
          prob_.entries.push_back({row_of[expo], gt.block,
                                   static_cast<int>(i), static_cast<int>(j),
                                   gc});
        }
  }
  exprs_.push_back(std::move(norm));
}

void SosProgram::add_ineq(const std::vector<std::pair<int, double>>& terms,
                          double cst) {
  const int blk = add_gram({std::vector<int>(vars_.size(), 0)});
  // slack - (cst + sum a_v w_v) = 0
  const int row = prob_.num_cons++;
  brows_.push_back(cst);
  prob_.entries.push_back({row, blk, 0, 0, 1.0});
  for (const auto& [v, a] : terms) prob_.free_entries.push_back({row, v, -a});
}

SdpSolution SosProgram::solve(const SdpOptions& opt) {
  prob_.b = Eigen::Map<Vec>(brows_.data(), static_cast<int>(brows_.size()));
  prob_.c_free = Eigen::Map<Vec>(costs_.data(), static_cast<int>(costs_.size()));
  return sdp_solve(prob_, opt);
}

double SosProgram::certificate_error(const SdpSolution& sol) const {
  double worst = 0.0;
  for (const auto& ex : exprs_) {
    MultiPoly acc = ex.cst;
    for (const auto& [v, p] : ex.freev) acc = acc + p * sol.y(v);
    for (const auto& gt : ex.grams) {
      const auto& basis = gram_basis_[gt.block];
      MultiPoly gram(vars_);
      for (std::size_t i = 0; i < basis.size(); ++i)
        for (std::size_t j = 0; j < basis.size(); ++j) {
          std::vector<int> expo(vars_.size());
          for (std::size_t q = 0; q < expo.size(); ++q)
            expo[q] = basis[i][q] + basis[j][q];
          gram.add_term(expo, sol.X[gt.block](i, j));
        }
      acc = acc + gram * gt.g;
    }
    for (const auto& [e, c] : acc.terms()) worst = std::max(worst, std::abs(c));
  }
  return worst;
}

double SosProgram::min_gram_eig(const SdpSolution& sol) const {
  double worst = 0.0;
  for (const auto& X : sol.X) {
    Eigen::SelfAdjointEigenSolver<Mat> es(X, Eigen::EigenvaluesOnly);
    worst = std::min(worst, es.eigenvalues().minCoeff());
  }
  return worst;
}

SosConfig SosConfig::from_config(const Config& c) {
  SosConfig s;
  s.deg_b = c.get_int("sos.deg_b", s.deg_b);
  s.deg_u = c.get_int("sos.deg_u", s.deg_u);
  s.deg_mult = c.get_int("sos.deg_mult", s.deg_mult);
  s.kappa = c.get_double("sos.kappa", s.kappa);
  s.eps = c.get_double("sos.eps", s.eps);
  s.outer_iters = c.get_int("sos.outer_iters", s.outer_iters);
  s.inner_iters = c.get_int("sos.inner_iters", s.inner_iters);
  s.e_tol = c.get_double("sos.e_tol", s.e_tol);
  s.db_tol = c.get_double("sos.db_tol", s.db_tol);
  s.sdp_max_iters = c.get_int("sos.sdp_max_iters", s.sdp_max_iters);
  if (s.kappa <= 0.0) throw ModelError("sos: kappa must be positive");
  if (s.eps < 0.0 || s.eps >= 1.0) throw ModelError("sos: eps out of range");
  return s;
}

namespace {

struct Closed {
  std::vector<std::string> pvars;  // state + dist
  std::vector<MultiPoly> field_u;  // over state + input + dist
  MultiPoly q_poly;                // x'x over states
};

Closed program_vars(const SosSystem& sys) {
  Closed c;
  c.pvars = sys.state_vars;
  c.pvars.insert(c.pvars.end(), sys.dist_vars.begin(), sys.dist_vars.end());
  std::vector<std::string> fv = sys.state_vars;
  fv.push_back(sys.input_var);
  fv.insert(fv.end(), sys.dist_vars.begin(), sys.dist_vars.end());
  for (const auto& f : sys.field) c.field_u.push_back(f.on_vars(fv));
  c.q_poly = MultiPoly(c.pvars);
  for (std::size_t i = 0; i < sys.state_vars.size(); ++i) {
    std::vector<int> e(c.pvars.size(), 0);
    e[i] = 2;
    c.q_poly.add_term(e, 1.0);
  }
  return c;
}

}  // namespace

OptUResult opt_u(const MultiPoly& b, const SosSystem& sys,
                 const SosConfig& cfg) {
  Closed cl = program_vars(sys);
  const int nv = static_cast<int>(cl.pvars.size());
  const int ns = static_cast<int>(sys.state_vars.size());
  SosProgram sp(cl.pvars);

  std::vector<std::string> full = sys.state_vars;
  full.push_back(sys.input_var);
  full.insert(full.end(), sys.dist_vars.begin(), sys.dist_vars.end());

  // L b along the open-loop field; must be affine in the input
  MultiPoly L = lie_derivative(b.on_vars(full), cl.field_u, sys.state_vars);
  MultiPoly L1f = L.differentiate(sys.input_var);
  if (!L1f.differentiate(sys.input_var).is_zero())
    throw ModelError("opt_u: field not affine in the input");
  MultiPoly L0 = drop_var(L.substitute(sys.input_var, 0.0), sys.input_var)
                     .on_vars(cl.pvars);
  MultiPoly L1 = drop_var(L1f, sys.input_var).on_vars(cl.pvars);

  // unknown controller coefficients
  auto umonos = monomials_up_to(nv, cfg.deg_u);
  std::vector<int> ucoef;
  for (std::size_t m = 0; m < umonos.size(); ++m) ucoef.push_back(sp.add_free());
  const int evar = sp.add_free(1.0);  // minimize e

  const MultiPoly bp = b.on_vars(cl.pvars);
  const int half_main = (cfg.deg_mult + std::max(bp.degree(), 2) + 1) / 2;
  auto main_basis = monomials_up_to(nv, half_main);
  auto mult_basis = monomials_up_to(nv, cfg.deg_mult / 2);

  // CBF row: L0 + L1*u + kappa*b + e*Q - s2*b - sum s_d*h_d = Gram
  {
    SosProgram::Expr ex;
    ex.cst = L0 + bp * cfg.kappa;
    for (std::size_t m = 0; m < umonos.size(); ++m)
      ex.freev.push_back({ucoef[m], L1 * from_expo(cl.pvars, umonos[m])});
    ex.freev.push_back({evar, cl.q_poly});
    ex.grams.push_back({sp.add_gram(mult_basis), -bp});
    for (const auto& hd : sys.h_d)
      ex.grams.push_back({sp.add_gram(mult_basis), -hd.on_vars(cl.pvars)});
    ex.grams.push_back(
        {sp.add_gram(main_basis), MultiPoly::constant(cl.pvars, -1.0)});
    sp.require_zero(ex);
  }
  // input box rows: u_max -/+ u - s1*b - sum s_d*h_d = Gram
  for (double sgn : {-1.0, 1.0}) {
    SosProgram::Expr ex;
    ex.cst = MultiPoly::constant(cl.pvars, sys.u_max);
    for (std::size_t m = 0; m < umonos.size(); ++m)
      ex.freev.push_back({ucoef[m], from_expo(cl.pvars, umonos[m]) * sgn});
    ex.grams.push_back({sp.add_gram(mult_basis), -bp});
    for (const auto& hd : sys.h_d)
      ex.grams.push_back({sp.add_gram(mult_basis), -hd.on_vars(cl.pvars)});
    ex.grams.push_back(
        {sp.add_gram(main_basis), MultiPoly::constant(cl.pvars, -1.0)});
    sp.require_zero(ex);
  }

  SdpOptions sopt;
  sopt.max_iters = cfg.sdp_max_iters;
  auto sol = sp.solve(sopt);
  OptUResult out;
  out.feasible = sol.status == SdpStatus::Optimal;
  if (!out.feasible) return out;
  out.e = sol.y(evar);
  out.u = MultiPoly(cl.pvars);
  for (std::size_t m = 0; m < umonos.size(); ++m)
    if (sol.y(ucoef[m]) != 0.0) out.u.add_term(umonos[m], sol.y(ucoef[m]));
  out.cert_error = sp.certificate_error(sol);
  (void)ns;
  return out;
}

OptBResult opt_b(const MultiPoly& b0, const MultiPoly& u, const SosSystem& sys,
                 const SosConfig& cfg) {
  Closed cl = program_vars(sys);
  const int nv = static_cast<int>(cl.pvars.size());
  const int ns = static_cast<int>(sys.state_vars.size());

  std::vector<std::string> full = sys.state_vars;
  full.push_back(sys.input_var);
  full.insert(full.end(), sys.dist_vars.begin(), sys.dist_vars.end());

  // close the loop with the fixed controller
  std::vector<MultiPoly> field_cl;
  const MultiPoly uf = u.on_vars(full);
  for (const auto& f : cl.field_u)
    field_cl.push_back(
        drop_var(f.substitute(sys.input_var, uf), sys.input_var)
            .on_vars(cl.pvars));

  const MultiPoly b0p = b0.on_vars(cl.pvars);
  auto lie_cl = [&](const MultiPoly& p) {
    return lie_derivative(p.on_vars(cl.pvars), field_cl, sys.state_vars);
  };

  // unknown perturbation over the states only
  auto dmonos = monomials_prefix(ns, nv, cfg.deg_b);
  std::vector<MultiPoly> dlie;
  for (const auto& m : dmonos) dlie.push_back(lie_cl(from_expo(cl.pvars, m)));
  const MultiPoly b0lie = lie_cl(b0p);

  // average of each monomial over the state box (level-set volume proxy)
  std::vector<double> volw(dmonos.size(), 0.0);
  if (sys.box_lo.size() == ns) {
    for (std::size_t m = 0; m < dmonos.size(); ++m) {
      double w = 1.0;
      for (int i = 0; i < ns; ++i) {
        const int k = dmonos[m][i];
        const double hi = sys.box_hi(i), lo = sys.box_lo(i);
        w *= (std::pow(hi, k + 1) - std::pow(lo, k + 1)) /
             ((k + 1) * (hi - lo));
      }
      volw[m] = w;
    }
  } else {
    volw[0] = 1.0;  // no box given: grow the constant term
  }

  const int half_main = (cfg.deg_mult + std::max(b0p.degree(), 2) + 1) / 2;
  auto main_basis = monomials_up_to(nv, half_main);
  auto mult_basis = monomials_up_to(nv, cfg.deg_mult / 2);
  auto state_main = monomials_prefix(ns, nv, half_main);
  auto state_mult = monomials_prefix(ns, nv, cfg.deg_mult / 2);

  struct Built {
    SosProgram sp;
    std::vector<int> dcoef;
    int evar;
  };
  auto assemble = [&](bool growth, double e_cap) {
    Built bl{SosProgram(cl.pvars), {}, 0};
    SosProgram& sp = bl.sp;
    for (std::size_t m = 0; m < dmonos.size(); ++m)
      bl.dcoef.push_back(sp.add_free(growth ? -volw[m] : 0.0));
    bl.evar = sp.add_free(growth ? 0.0 : 1.0);

    // separation per danger component: -(b0+db) - sum s_k h_k = Gram
    for (const auto& comp : sys.danger) {
      SosProgram::Expr ex;
      ex.cst = -b0p;
      for (std::size_t m = 0; m < dmonos.size(); ++m)
        ex.freev.push_back({bl.dcoef[m], from_expo(cl.pvars, dmonos[m]) * -1.0});
      for (const auto& h : comp)
        ex.grams.push_back({sp.add_gram(state_mult), -h.on_vars(cl.pvars)});
      ex.grams.push_back(
          {sp.add_gram(state_main), MultiPoly::constant(cl.pvars, -1.0)});
      sp.require_zero(ex);
    }

    // CBF row on b0's level set:
    //   L(b0+db) + kappa(b0+db) + eQ - s3*b0 - sum s_d*h_d = Gram
    {
      SosProgram::Expr ex;
      ex.cst = b0lie + b0p * cfg.kappa;
      for (std::size_t m = 0; m < dmonos.size(); ++m) {
        const MultiPoly mu = from_expo(cl.pvars, dmonos[m]);
        ex.freev.push_back({bl.dcoef[m], dlie[m] + mu * cfg.kappa});
      }
      ex.freev.push_back({bl.evar, cl.q_poly});
      ex.grams.push_back({sp.add_gram(mult_basis), -b0p});
      for (const auto& hd : sys.h_d)
        ex.grams.push_back({sp.add_gram(mult_basis), -hd.on_vars(cl.pvars)});
      ex.grams.push_back(
          {sp.add_gram(main_basis), MultiPoly::constant(cl.pvars, -1.0)});
      sp.require_zero(ex);
    }

    // l1 cap: t_m >= |c_m|, sum t_m <= eps * ||b0||_1
    std::vector<std::pair<int, double>> sum_terms;
    for (std::size_t m = 0; m < dmonos.size(); ++m) {
      const int t = sp.add_free();
      sp.add_ineq({{t, 1.0}, {bl.dcoef[m], -1.0}}, 0.0);
      sp.add_ineq({{t, 1.0}, {bl.dcoef[m], 1.0}}, 0.0);
      sum_terms.push_back({t, -1.0});
    }
    sp.add_ineq(sum_terms, cfg.eps * b0.l1_norm());
    if (growth) sp.add_ineq({{bl.evar, -1.0}}, e_cap);
    return bl;
  };

  OptBResult out;
  SdpOptions sopt;
  sopt.max_iters = cfg.sdp_max_iters;
  // phase 1: minimize the relaxation scalar
  Built p1 = assemble(false, 0.0);
  auto sol1 = p1.sp.solve(sopt);
  if (sol1.status != SdpStatus::Optimal) return out;
  const double e_min = sol1.y(p1.evar);

  // phase 2: if certifiable (e <= 0), spend the slack pushing the level
  // set outward instead of driving e further below the threshold
  bool use2 = false;
  SdpSolution sol2;
  Built p2 = assemble(true, 0.0);
  if (e_min <= 0.0) {
    sol2 = p2.sp.solve(sopt);
    use2 = sol2.status == SdpStatus::Optimal;
  }
  const auto& sol = use2 ? sol2 : sol1;
  const auto& bl = use2 ? p2 : p1;

  out.feasible = true;
  out.e = sol.y(bl.evar);
  out.db = MultiPoly(sys.state_vars);
  for (std::size_t m = 0; m < dmonos.size(); ++m)
    if (sol.y(bl.dcoef[m]) != 0.0) {
      std::vector<int> e(dmonos[m].begin(), dmonos[m].begin() + ns);
      out.db.add_term(e, sol.y(bl.dcoef[m]));
    }
  out.cert_error = bl.sp.certificate_error(sol);
  return out;
}

BarrierFunction synthesize_cbf(const SosSystem& sys, const SosConfig& cfg,
                               const MultiPoly& b0) {
  BarrierFunction bar;
  bar.kappa = cfg.kappa;
  bar.b = b0;  // carried even if the first opt_u fails
  MultiPoly b = b0;
  // acceptance works on e clamped at 0: below the certification threshold
  // all iterates are equally good and the loop optimizes coverage instead
  double best_e = std::numeric_limits<double>::infinity();

  for (int outer = 0; outer < cfg.outer_iters; ++outer) {
    auto ru = opt_u(b, sys, cfg);
    if (!ru.feasible) break;
    const double ec = std::max(ru.e, 0.0);
    if (ec > best_e + 1e-12) break;  // monotone acceptance
    best_e = ec;
    bar.e_log.push_back(ec);
    bar.b = b;
    bar.u = ru.u;
    bar.certified = ru.e <= cfg.e_tol;

    bool moved = false;
    for (int inner = 0; inner < cfg.inner_iters; ++inner) {
      auto rb = opt_b(b, ru.u, sys, cfg);
      if (!rb.feasible) break;
      const double ecb = std::max(rb.e, 0.0);
      if (ecb > best_e + 1e-12) break;
      b = b + rb.db;
      best_e = ecb;
      bar.e_log.push_back(ecb);
      moved = true;
      if (rb.db.l1_norm() < cfg.db_tol) break;
    }
    if (!moved) break;  // stalled
  }
  return bar;
}

MultiPoly seed_barrier(const std::vector<std::string>& state_vars,
                       const Mat& P, const Vec& box, double margin) {
  const int n = static_cast<int>(P.rows());
  const Mat Pinv = P.inverse();
  double gamma = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    gamma = std::min(gamma, box(i) * box(i) / Pinv(i, i));
  gamma *= margin * margin;
  return quadratic_form(state_vars, -P / gamma, Vec::Zero(n), 1.0);
}

SosSystem truck_sos_system(const LinearDynamics& dyn, double y_max,
                           double phi_max, double rd_max, double fy_max,
                           double delta_max) {
  SosSystem sys;
  sys.state_vars = {"y", "vy", "psi", "r", "psia", "rs", "phi", "p"};
  sys.dist_vars = {"rd", "fy"};
  sys.input_var = "df";
  std::vector<std::string> full = sys.state_vars;
  full.push_back("df");
  full.push_back("rd");
  full.push_back("fy");
  for (int i = 0; i < 8; ++i) {
    MultiPoly fi(full);
    auto put = [&](int slot, double v) {
      if (v == 0.0) return;
      std::vector<int> e(11, 0);
      e[slot] = 1;
      fi.add_term(e, v);
    };
    for (int j = 0; j < 8; ++j) put(j, dyn.A(i, j));
    put(8, dyn.B(i));
    put(9, dyn.E1(i));
    put(10, dyn.E2(i));
    sys.field.push_back(fi);
  }
  sys.u_max = delta_max;
  auto sq_minus = [](const std::vector<std::string>& vars,
                     const std::string& v, double bound, double sign) {
    auto x = MultiPoly::variable(vars, v);
    return (x * x - MultiPoly::constant(vars, bound * bound)) * sign;
  };
  sys.h_d = {sq_minus({"rd"}, "rd", rd_max, -1.0),
             sq_minus({"fy"}, "fy", fy_max, -1.0)};
  sys.dist_bounds = Vec(2);
  sys.dist_bounds << rd_max, fy_max;
  sys.danger = {{sq_minus(sys.state_vars, "y", y_max, 1.0)},
                {sq_minus(sys.state_vars, "phi", phi_max, 1.0)}};
  sys.box_hi = Vec(8);
  sys.box_hi << y_max, 0.5, 0.15, 0.1, 0.15, 0.1, phi_max, 0.3;
  sys.box_lo = -sys.box_hi;
  return sys;
}

MultiPoly rescale_vars(const MultiPoly& p, const Vec& s) {
  if (static_cast<int>(p.vars().size()) != s.size())
    throw ModelError("rescale_vars: scale length mismatch");
  MultiPoly out(p.vars());
  for (const auto& [expo, coeff] : p.terms()) {
    double c = coeff;
    for (int i = 0; i < s.size(); ++i)
      for (int k = 0; k < expo[i]; ++k) c *= s(i);
    out.add_term(expo, c);
  }
  return out;
}

TruckCbfResult synthesize_truck_cbf(const LinearDynamics& dyn,
                                    const Vec& state_box, double rd_max,
                                    double fy_max, double u_max,
                                    const SosConfig& cfg) {
  if (state_box.size() != 8 || (state_box.array() <= 0.0).any())
    throw ModelError("synthesize_truck_cbf: state_box must be 8 positives");
  TruckCbfResult out;
  out.state_scale = state_box;
  const Mat8 D = state_box.asDiagonal();
  const Mat8 Dinv = state_box.cwiseInverse().asDiagonal();
  LinearDynamics dh;
  dh.vx = dyn.vx;
  dh.A = Dinv * dyn.A * D;
  dh.B = Dinv * dyn.B * u_max;
  dh.E1 = Dinv * dyn.E1 * rd_max;
  dh.E2 = Dinv * dyn.E2 * fy_max;
  out.sys = truck_sos_system(dh, 1.0, 1.0, 1.0, 1.0, 1.0);
  out.sys.box_hi = Vec::Ones(8);
  out.sys.box_lo = -out.sys.box_hi;

  // Box-metric seed: identity quadratic in normalized coordinates.  Its
  // level set is inscribed in the safety box, so danger separation holds,
  // and it contains the constant-curvature equilibria a Lyapunov-matrix
  // sublevel set would cut off.
  MultiPoly b0 =
      seed_barrier(out.sys.state_vars, Mat8::Identity(), Vec::Ones(8), 0.9);
  // b and s*b certify the same set; unit l1 norm keeps the SOS rows O(1)
  b0 = b0 * (1.0 / b0.l1_norm());
  out.scaled = synthesize_cbf(out.sys, cfg, b0);
  out.raw = out.scaled;
  out.raw.b = rescale_vars(out.scaled.b, state_box.cwiseInverse());
  return out;
}

VerifyReport sampled_verify(const BarrierFunction& bar, const SosSystem& sys,
                            int n_samples, unsigned seed, bool parallel) {
  const int ns = static_cast<int>(sys.state_vars.size());
  const int nd = static_cast<int>(sys.dist_vars.size());
  std::vector<std::string> full = sys.state_vars;
  full.push_back(sys.input_var);
  full.insert(full.end(), sys.dist_vars.begin(), sys.dist_vars.end());

  const MultiPoly bsv = bar.b.on_vars(sys.state_vars);
  std::vector<std::vector<MultiPoly>> danger_sv;
  for (const auto& comp : sys.danger) {
    danger_sv.emplace_back();
    for (const auto& h : comp)
      danger_sv.back().push_back(h.on_vars(sys.state_vars));
  }
  std::vector<MultiPoly> grad;
  for (const auto& v : sys.state_vars)
    grad.push_back(bar.b.on_vars(full).differentiate(v));
  std::vector<MultiPoly> field_full;
  for (const auto& f : sys.field) field_full.push_back(f.on_vars(full));
  const MultiPoly uf = bar.u.on_vars(full);

  VerifyReport rep;
  rep.worst_cbf_margin = std::numeric_limits<double>::infinity();
  rep.worst_input_margin = std::numeric_limits<double>::infinity();
  rep.worst_danger_value = -std::numeric_limits<double>::infinity();
  int witness_idx = -1;
  Vec witness;

  const int nvert = 1 << nd;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (int s = 0; s < n_samples; ++s) {
    std::mt19937 rng(seed + 0x9e3779b9u * static_cast<unsigned>(s));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec x(ns);
    // danger check uses an inflated box so the danger set is reachable
    const bool danger_pass = (s % 4 == 3);
    for (int i = 0; i < ns; ++i) {
      const double lo = sys.box_lo(i) * (danger_pass ? 2.0 : 1.0);
      const double hi = sys.box_hi(i) * (danger_pass ? 2.0 : 1.0);
      x(i) = lo + (hi - lo) * unit(rng);
    }
    const double bval = bsv.eval(x);

    double local_cbf = std::numeric_limits<double>::infinity();
    double local_inp = std::numeric_limits<double>::infinity();
    double local_danger = -std::numeric_limits<double>::infinity();
    bool violated = false;

    if (danger_pass) {
      for (const auto& comp : danger_sv) {
        bool inside = true;
        for (const auto& h : comp)
          if (h.eval(x) < 0.0) inside = false;
        if (inside) {
          local_danger = std::max(local_danger, bval);
          if (bval > 1e-9) violated = true;
        }
      }
    } else if (bval >= 0.0) {
      Vec pt(full.size());
      pt.head(ns) = x;
      for (int vtx = 0; vtx < nvert; ++vtx) {
        for (int j = 0; j < nd; ++j)
          pt(ns + 1 + j) = ((vtx >> j) & 1) ? sys.dist_bounds(j)
                                            : -sys.dist_bounds(j);
        pt(ns) = 0.0;
        const double uval = uf.eval(pt);
        pt(ns) = uval;
        local_inp = std::min(local_inp, sys.u_max - std::abs(uval));
        double bdot = 0.0;
        for (int i = 0; i < ns; ++i)
          bdot += grad[i].eval(pt) * field_full[i].eval(pt);
        local_cbf = std::min(local_cbf, bdot + bar.kappa * bval);
      }
      if (local_inp < -1e-9 || local_cbf < -1e-6) violated = true;
    }

#ifdef _OPENMP
#pragma omp critical
#endif
    {
      rep.n_checked += 1;
      rep.worst_cbf_margin = std::min(rep.worst_cbf_margin, local_cbf);
      rep.worst_input_margin = std::min(rep.worst_input_margin, local_inp);
      rep.worst_danger_value = std::max(rep.worst_danger_value, local_danger);
      if (violated) {
        rep.n_violations += 1;
        if (witness_idx < 0 || s < witness_idx) {
          witness_idx = s;
          witness = x;
        }
      }
    }
  }
  rep.witness = witness;
  return rep;
}

void save_barrier(const BarrierFunction& bar, const std::string& path,
                  std::uint64_t config_hash) {
  std::ofstream os(path);
  if (!os) throw ModelError("save_barrier: cannot open " + path);
  // doubles stored as IEEE-754 bit patterns for a bit-exact round trip
  auto put = [&os](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    os << std::hex << bits << std::dec;
  };
  os << "barrier-v1\n";
  os << "hash " << std::hex << config_hash << std::dec << "\n";
  os << "kappa ";
  put(bar.kappa);
  os << "\ncertified " << (bar.certified ? 1 : 0) << "\n";
  auto dump_poly = [&](const char* tag, const MultiPoly& p) {
    os << tag << "_vars " << p.vars().size();
    for (const auto& v : p.vars()) os << " " << v;
    os << "\n" << tag << "_terms " << p.terms().size() << "\n";
    for (const auto& [e, c] : p.terms()) {
      for (int k : e) os << k << " ";
      put(c);
      os << "\n";
    }
  };
  dump_poly("b", bar.b);
  dump_poly("u", bar.u);
  os << "e_log " << bar.e_log.size();
  for (double e : bar.e_log) {
    os << " ";
    put(e);
  }
  os << "\n";
}

BarrierFunction load_barrier(const std::string& path,
                             std::uint64_t* config_hash) {
  std::ifstream is(path);
  if (!is) throw ModelError("load_barrier: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "barrier-v1") throw ModelError("load_barrier: bad header");
  std::string tag;
  std::uint64_t h = 0;
  is >> tag >> std::hex >> h >> std::dec;
  if (config_hash) *config_hash = h;
  auto get = [&is]() {
    std::uint64_t bits = 0;
    is >> std::hex >> bits >> std::dec;
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  };
  BarrierFunction bar;
  int cert = 0;
  is >> tag;
  bar.kappa = get();
  is >> tag >> cert;
  bar.certified = cert != 0;
  auto read_poly = [&]() {
    std::size_t nv = 0, nt = 0;
    is >> tag >> nv;
    std::vector<std::string> vars(nv);
    for (auto& v : vars) is >> v;
    is >> tag >> nt;
    MultiPoly p(vars);
    for (std::size_t t = 0; t < nt; ++t) {
      std::vector<int> e(nv);
      for (auto& k : e) is >> k;
      p.add_term(e, get());
    }
    return p;
  };
  bar.b = read_poly();
  bar.u = read_poly();
  std::size_t ne = 0;
  is >> tag >> ne;
  bar.e_log.resize(ne);
  for (auto& e : bar.e_log) e = get();
  if (!is) throw ModelError("load_barrier: truncated file");
  return bar;
}

}  // namespace lk

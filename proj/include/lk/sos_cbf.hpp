#pragma once

#include <string>
#include <vector>

#include "lk/config.hpp"
#include "lk/poly.hpp"
#include "lk/sdp.hpp"
#include "lk/truck_model.hpp"

namespace lk {

// Helper that assembles SOS feasibility programs into the block SDP form.
// Unknown polynomial coefficients become free variables; every SOS
// membership becomes one PSD (Gram) block; products of an unknown Gram
// with a *fixed* polynomial stay linear and are expanded here.
class SosProgram {
 public:
  explicit SosProgram(std::vector<std::string> poly_vars);

  int add_free(double cost = 0.0);
  int add_gram(const std::vector<std::vector<int>>& basis);  // block id

  struct Expr {
    MultiPoly cst;
    std::vector<std::pair<int, MultiPoly>> freev;  // coeff poly per free var
    struct GramTerm {
      int block;
      MultiPoly g;  // fixed factor multiplying the Gram polynomial
    };
    std::vector<GramTerm> grams;
  };

  // Adds coefficient-matching rows asserting the expression is identically 0.
  void require_zero(const Expr& e);
  // Scalar affine inequality cst + sum coeff_v * w_v >= 0 (1x1 slack block).
  void add_ineq(const std::vector<std::pair<int, double>>& terms, double cst);

  SdpSolution solve(const SdpOptions& opt = {});
  // Independent re-check: expand each stored identity with the solved Gram
  // matrices and free variables via polynomial arithmetic.
  double certificate_error(const SdpSolution& sol) const;
  double min_gram_eig(const SdpSolution& sol) const;

  const std::vector<std::string>& poly_vars() const { return vars_; }
  const SdpProblem& problem() const { return prob_; }

 private:
  std::vector<std::string> vars_;
  SdpProblem prob_;
  std::vector<std::vector<std::vector<int>>> gram_basis_;
  std::vector<Expr> exprs_;
  std::vector<double> costs_;
  std::vector<double> brows_;
};

// Polynomial control-affine system for barrier synthesis.  The vector field
// is given over state_vars + {input_var} + dist_vars and must be affine in
// the input.
struct SosSystem {
  std::vector<std::string> state_vars;
  std::vector<std::string> dist_vars;
  std::string input_var = "u";
  std::vector<MultiPoly> field;
  double u_max = 0.2;
  std::vector<MultiPoly> h_d;  // disturbance box polynomials (>= 0 on D)
  Vec dist_bounds;             // |d_i| bound per disturbance channel
  // danger set: union over components of {x : all polys >= 0}
  std::vector<std::vector<MultiPoly>> danger;
  Vec box_lo, box_hi;  // state sampling box for verification
};

struct SosConfig {
  int deg_b = 2;
  int deg_u = 1;
  int deg_mult = 2;
  double kappa = 1.0;
  double eps = 0.05;
  int outer_iters = 8;
  int inner_iters = 4;
  double e_tol = 1e-9;    // e <= e_tol counts as certified
  double db_tol = 1e-9;   // stall threshold on ||db||_1
  int sdp_max_iters = 100;
  static SosConfig from_config(const Config& c);
};

struct BarrierFunction {
  MultiPoly b;  // over the state variables
  double kappa = 1.0;
  MultiPoly u;  // certified feasibility witness over state + dist vars
  std::vector<double> e_log;
  bool certified = false;
};

struct OptUResult {
  bool feasible = false;
  MultiPoly u;
  double e = 0.0;
  double cert_error = 0.0;
};

struct OptBResult {
  bool feasible = false;
  MultiPoly db;
  double e = 0.0;
  double cert_error = 0.0;
};

OptUResult opt_u(const MultiPoly& b, const SosSystem& sys, const SosConfig& cfg);
OptBResult opt_b(const MultiPoly& b0, const MultiPoly& u, const SosSystem& sys,
                 const SosConfig& cfg);

BarrierFunction synthesize_cbf(const SosSystem& sys, const SosConfig& cfg,
                               const MultiPoly& b0);

// Largest sublevel set 1 - x'Px/gamma of a Lyapunov quadratic that fits in
// the state box (with margin), as the synthesis seed.
MultiPoly seed_barrier(const std::vector<std::string>& state_vars,
                       const Mat& P, const Vec& box, double margin = 0.9);

// Truck synthesis problem from the linearized dynamics and the safety box.
SosSystem truck_sos_system(const LinearDynamics& dyn, double y_max,
                           double phi_max, double rd_max, double fy_max,
                           double delta_max);

// Substitutes var_i -> s_i * var_i (coefficient rescaling).
MultiPoly rescale_vars(const MultiPoly& p, const Vec& s);

// Full 8-state synthesis in box-normalized coordinates.  Raw-unit rows in
// the SOS assembly span ~12 orders of magnitude (F_y in Newtons against
// barrier coefficients ~1e5) and stall the interior-point solver, so the
// states, input, and disturbances are scaled to unit boxes first and the
// barrier is mapped back to raw state units afterwards.  state_box must
// carry |y|max in slot 0 and |phi|max in slot 6 (the danger-set bounds).
// The alternation is seeded with the box-metric ellipsoid (identity
// quadratic in normalized coordinates): it contains every constant-
// curvature equilibrium of the Table-I envelope and stays inside the
// danger slabs, which a Lyapunov-matrix sublevel set does not.
struct TruckCbfResult {
  BarrierFunction scaled;  // over unit-box coordinates, with the witness u
  BarrierFunction raw;     // b in raw state units, for the supervisor
  SosSystem sys;           // the normalized system (verification domain)
  Vec state_scale;
};
TruckCbfResult synthesize_truck_cbf(const LinearDynamics& dyn,
                                    const Vec& state_box, double rd_max,
                                    double fy_max, double u_max,
                                    const SosConfig& cfg);

struct VerifyReport {
  int n_checked = 0;
  int n_violations = 0;
  double worst_cbf_margin = 0.0;    // min over samples of bdot + kappa*b
  double worst_input_margin = 0.0;  // min of u_max - |u(x,d)|
  double worst_danger_value = 0.0;  // max of b over danger samples
  Vec witness;                      // first violating state (empty if none)
};

VerifyReport sampled_verify(const BarrierFunction& bar, const SosSystem& sys,
                            int n_samples, unsigned seed, bool parallel);

void save_barrier(const BarrierFunction& bar, const std::string& path,
                  std::uint64_t config_hash);
BarrierFunction load_barrier(const std::string& path,
                             std::uint64_t* config_hash = nullptr);

}  // namespace lk

#pragma once

#include <vector>

#include "lk/common.hpp"

namespace lk {

// Mixed-cone semidefinite program in primal form:
//   min  sum_j <C_j, X_j> + c_f^T y
//   s.t. sum_j <A_ij, X_j> + (F y)_i = b_i,   i = 1..m
//        X_j PSD (dense symmetric blocks), y free.
//
// Constraint matrices are stored as sparse symmetric triplets.  Rows are
// indexed by monomials when the problem comes from an SOS reduction, and
// each SOS constraint owns exactly one PSD block.
struct SdpProblem {
  struct Entry {
    int con = 0;    // constraint index i
    int block = 0;  // PSD block j
    int row = 0, col = 0;
    double value = 0.0;  // applied symmetrically when row != col
  };
  struct FreeEntry {
    int con = 0;
    int var = 0;
    double value = 0.0;
  };

  std::vector<int> block_dims;
  int num_free = 0;
  int num_cons = 0;
  std::vector<Entry> entries;
  std::vector<FreeEntry> free_entries;
  Vec b;       // size num_cons
  Vec c_free;  // size num_free, objective on free variables
  // objective on PSD blocks, same triplet convention with con unused
  std::vector<Entry> cost_entries;
};

enum class SdpStatus { Optimal, Stuck, Infeasible };

struct SdpSolution {
  SdpStatus status = SdpStatus::Stuck;
  std::vector<Mat> X;  // Gram matrices
  std::vector<Mat> S;  // dual slacks
  Vec y;               // free variables
  Vec lambda;          // constraint multipliers
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double mu = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

struct SdpOptions {
  int max_iters = 100;
  double tol = 1e-9;        // complementarity target
  double feas_tol = 1e-8;   // residual target
  double step_frac = 0.98;
};

SdpSolution sdp_solve(const SdpProblem& p, const SdpOptions& opt = {});

}  // namespace lk

#pragma once

#include <map>
#include <string>
#include <vector>

#include "lk/common.hpp"

namespace lk {

// Graded lexicographic order on exponent vectors; fixed project-wide so
// SDP assembly is reproducible.
struct GradedLex {
  bool operator()(const std::vector<int>& a, const std::vector<int>& b) const;
};

// Sparse multivariate polynomial over a named, ordered variable list.
class MultiPoly {
 public:
  MultiPoly() = default;
  explicit MultiPoly(std::vector<std::string> vars) : vars_(std::move(vars)) {}

  static MultiPoly constant(std::vector<std::string> vars, double c);
  static MultiPoly variable(std::vector<std::string> vars,
                            const std::string& name);

  const std::vector<std::string>& vars() const { return vars_; }
  const std::map<std::vector<int>, double, GradedLex>& terms() const {
    return terms_;
  }

  bool is_zero() const { return terms_.empty(); }
  int degree() const;
  double l1_norm() const;  // sum of |coefficients|

  void add_term(const std::vector<int>& expo, double coeff);
  double coeff(const std::vector<int>& expo) const;

  MultiPoly operator+(const MultiPoly& o) const;
  MultiPoly operator-(const MultiPoly& o) const;
  MultiPoly operator*(const MultiPoly& o) const;
  MultiPoly operator*(double s) const;
  MultiPoly operator-() const { return *this * -1.0; }

  MultiPoly differentiate(const std::string& var) const;
  MultiPoly substitute(const std::string& var, double value) const;
  MultiPoly substitute(const std::string& var, const MultiPoly& p) const;

  // Evaluation at a point given in variable order.
  double eval(const Vec& point) const;

  // Lifts this polynomial onto a superset variable list (by name).
  MultiPoly on_vars(const std::vector<std::string>& vars) const;

  std::string str() const;

 private:
  int var_index(const std::string& name) const;

  std::vector<std::string> vars_;
  std::map<std::vector<int>, double, GradedLex> terms_;
};

// Quadratic-form helper: x^T M x + 2 q^T x + c as a MultiPoly over the
// first n variables of `vars`.
MultiPoly quadratic_form(const std::vector<std::string>& vars, const Mat& M,
                         const Vec& q, double c);

// db/dx . field, where field[i] is the polynomial dx_i/dt.
MultiPoly lie_derivative(const MultiPoly& b,
                         const std::vector<MultiPoly>& field,
                         const std::vector<std::string>& state_vars);

// All monomial exponent vectors over nvars variables with total degree <= d,
// in graded lex order.
std::vector<std::vector<int>> monomials_up_to(int nvars, int d);

}  // namespace lk

#include "lk/poly.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace lk {

namespace {
constexpr double kDropTol = 0.0;  // exact: only true zeros are dropped

int total_degree(const std::vector<int>& e) {
  return std::accumulate(e.begin(), e.end(), 0);
}
}  // namespace

bool GradedLex::operator()(const std::vector<int>& a,
                           const std::vector<int>& b) const {
  const int da = total_degree(a), db = total_degree(b);
  if (da != db) return da < db;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

MultiPoly MultiPoly::constant(std::vector<std::string> vars, double c) {
  MultiPoly p(std::move(vars));
  if (c != 0.0) p.terms_[std::vector<int>(p.vars_.size(), 0)] = c;
  return p;
}

MultiPoly MultiPoly::variable(std::vector<std::string> vars,
                              const std::string& name) {
  MultiPoly p(std::move(vars));
  std::vector<int> e(p.vars_.size(), 0);
  e[p.var_index(name)] = 1;
  p.terms_[e] = 1.0;
  return p;
}

int MultiPoly::var_index(const std::string& name) const {
  auto it = std::find(vars_.begin(), vars_.end(), name);
  if (it == vars_.end())
    throw ModelError("poly: unknown variable '" + name + "'");
  return static_cast<int>(it - vars_.begin());
}

int MultiPoly::degree() const {
  int d = 0;
  for (const auto& [e, c] : terms_) d = std::max(d, total_degree(e));
  return d;
}

double MultiPoly::l1_norm() const {
  double s = 0.0;
  for (const auto& [e, c] : terms_) s += std::abs(c);
  return s;
}

void MultiPoly::add_term(const std::vector<int>& expo, double coeff) {
  if (expo.size() != vars_.size())
    throw ModelError("poly: exponent arity mismatch");
  for (int v : expo)
    if (v < 0) throw ModelError("poly: negative exponent");
  double& c = terms_[expo];
  c += coeff;
  if (c == kDropTol) terms_.erase(expo);
}

double MultiPoly::coeff(const std::vector<int>& expo) const {
  auto it = terms_.find(expo);
  return it == terms_.end() ? 0.0 : it->second;
}

MultiPoly MultiPoly::operator+(const MultiPoly& o) const {
  if (vars_ != o.vars_) {
    // merge by name when variable lists differ
    std::vector<std::string> merged = vars_;
    for (const auto& v : o.vars_)
      if (std::find(merged.begin(), merged.end(), v) == merged.end())
        merged.push_back(v);
    return on_vars(merged) + o.on_vars(merged);
  }
  MultiPoly out = *this;
  for (const auto& [e, c] : o.terms_) out.add_term(e, c);
  return out;
}

MultiPoly MultiPoly::operator-(const MultiPoly& o) const {
  return *this + (o * -1.0);
}

MultiPoly MultiPoly::operator*(const MultiPoly& o) const {
  if (vars_ != o.vars_) {
    std::vector<std::string> merged = vars_;
    for (const auto& v : o.vars_)
      if (std::find(merged.begin(), merged.end(), v) == merged.end())
        merged.push_back(v);
    return on_vars(merged) * o.on_vars(merged);
  }
  MultiPoly out(vars_);
  for (const auto& [ea, ca] : terms_)
    for (const auto& [eb, cb] : o.terms_) {
      std::vector<int> e(ea.size());
      for (std::size_t i = 0; i < e.size(); ++i) e[i] = ea[i] + eb[i];
      out.add_term(e, ca * cb);
    }
  return out;
}

MultiPoly MultiPoly::operator*(double s) const {
  MultiPoly out(vars_);
  if (s == 0.0) return out;
  for (const auto& [e, c] : terms_) out.terms_[e] = c * s;
  return out;
}

MultiPoly MultiPoly::differentiate(const std::string& var) const {
  const int idx = var_index(var);
  MultiPoly out(vars_);
  for (const auto& [e, c] : terms_) {
    if (e[idx] == 0) continue;
    std::vector<int> d = e;
    d[idx] -= 1;
    out.add_term(d, c * e[idx]);
  }
  return out;
}

MultiPoly MultiPoly::substitute(const std::string& var, double value) const {
  const int idx = var_index(var);
  MultiPoly out(vars_);
  for (const auto& [e, c] : terms_) {
    std::vector<int> d = e;
    const int k = d[idx];
    d[idx] = 0;
    out.add_term(d, c * std::pow(value, k));
  }
  return out;
}

MultiPoly MultiPoly::substitute(const std::string& var,
                                const MultiPoly& p) const {
  const int idx = var_index(var);
  MultiPoly out(vars_);
  for (const auto& [e, c] : terms_) {
    std::vector<int> d = e;
    const int k = d[idx];
    d[idx] = 0;
    MultiPoly term(vars_);
    term.terms_[d] = c;
    MultiPoly pk = MultiPoly::constant(vars_, 1.0);
    for (int i = 0; i < k; ++i) pk = pk * p.on_vars(vars_);
    out = out + term * pk;
  }
  return out;
}

double MultiPoly::eval(const Vec& point) const {
  if (point.size() != static_cast<Eigen::Index>(vars_.size()))
    throw ModelError("poly: eval point arity mismatch");
  double s = 0.0;
  for (const auto& [e, c] : terms_) {
    double t = c;
    for (std::size_t i = 0; i < e.size(); ++i)
      for (int k = 0; k < e[i]; ++k) t *= point(i);
    s += t;
  }
  return s;
}

MultiPoly MultiPoly::on_vars(const std::vector<std::string>& vars) const {
  std::vector<int> remap(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    auto it = std::find(vars.begin(), vars.end(), vars_[i]);
    if (it == vars.end())
      throw ModelError("poly: variable '" + vars_[i] +
                       "' missing from target list");
    remap[i] = static_cast<int>(it - vars.begin());
  }
  MultiPoly out(vars);
  for (const auto& [e, c] : terms_) {
    std::vector<int> d(vars.size(), 0);
    for (std::size_t i = 0; i < e.size(); ++i) d[remap[i]] = e[i];
    out.add_term(d, c);
  }
  return out;
}

std::string MultiPoly::str() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [e, c] : terms_) {
    if (!first) os << (c >= 0 ? " + " : " - ");
    else if (c < 0) os << "-";
    os << std::abs(c);
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e[i] == 0) continue;
      os << "*" << vars_[i];
      if (e[i] > 1) os << "^" << e[i];
    }
    first = false;
  }
  return os.str();
}

MultiPoly quadratic_form(const std::vector<std::string>& vars, const Mat& M,
                         const Vec& q, double c) {
  const int n = static_cast<int>(M.rows());
  MultiPoly p = MultiPoly::constant(vars, c);
  for (int i = 0; i < n; ++i) {
    if (q(i) != 0.0) {
      std::vector<int> e(vars.size(), 0);
      e[i] = 1;
      p.add_term(e, 2.0 * q(i));
    }
    for (int j = 0; j < n; ++j) {
      if (M(i, j) == 0.0) continue;
      std::vector<int> e(vars.size(), 0);
      e[i] += 1;
      e[j] += 1;
      p.add_term(e, M(i, j));
    }
  }
  return p;
}

MultiPoly lie_derivative(const MultiPoly& b,
                         const std::vector<MultiPoly>& field,
                         const std::vector<std::string>& state_vars) {
  if (field.size() != state_vars.size())
    throw ModelError("lie_derivative: field/state dimension mismatch");
  MultiPoly out(b.vars());
  for (std::size_t i = 0; i < state_vars.size(); ++i)
    out = out + b.differentiate(state_vars[i]) * field[i];
  return out;
}

std::vector<std::vector<int>> monomials_up_to(int nvars, int d) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(nvars, 0);
  // recursive enumeration, then sort graded-lex
  std::function<void(int, int)> rec = [&](int idx, int remaining) {
    if (idx == nvars) {
      out.push_back(cur);
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      cur[idx] = k;
      rec(idx + 1, remaining - k);
    }
    cur[idx] = 0;
  };
  rec(0, d);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return GradedLex{}(a, b);
  });
  return out;
}

}  // namespace lk

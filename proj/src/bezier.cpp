#include "lk/bezier.hpp"

#include <cmath>

namespace lk {

void BezierCurve::validate() const {
  if (order() < 3) throw ModelError("bezier: order must be >= 3");
  if (!(horizon > 0.0)) throw ModelError("bezier: horizon must be > 0");
  for (double a : coeffs)
    if (!std::isfinite(a)) throw ModelError("bezier: non-finite coefficient");
}

namespace {

// de Casteljau on a scratch copy.
double de_casteljau(std::vector<double> c, double s) {
  for (std::size_t lvl = c.size() - 1; lvl > 0; --lvl)
    for (std::size_t i = 0; i < lvl; ++i)
      c[i] = (1.0 - s) * c[i] + s * c[i + 1];
  return c[0];
}

}  // namespace

double BezierCurve::eval(double t, int k) const {
  if (t < -1e-12 || t > horizon + 1e-12)
    throw ModelError("bezier: eval time outside [0, T]");
  if (k < 0 || k > 3) throw ModelError("bezier: derivative order must be 0..3");
  const double s = std::min(std::max(t / horizon, 0.0), 1.0);

  // k-th s-derivative is an order (m-k) curve on finite differences.
  std::vector<double> c = coeffs;
  double factor = 1.0;
  for (int j = 0; j < k; ++j) {
    const int m = static_cast<int>(c.size()) - 1;
    for (int i = 0; i < m; ++i) c[i] = c[i + 1] - c[i];
    c.pop_back();
    factor *= static_cast<double>(m) / horizon;
  }
  return factor * de_casteljau(std::move(c), s);
}

Vec BezierCurve::eval_grad(double t, int k) const {
  const int n = static_cast<int>(coeffs.size());
  Vec g(n);
  BezierCurve basis = *this;
  for (int i = 0; i < n; ++i) {
    std::fill(basis.coeffs.begin(), basis.coeffs.end(), 0.0);
    basis.coeffs[i] = 1.0;
    g(i) = basis.eval(t, k);
  }
  return g;
}

BezierCurve splice_smooth(double h0, double hd0, double hdd0,
                          const BezierCurve& curve) {
  curve.validate();
  const double m = static_cast<double>(curve.order());
  const double T = curve.horizon;
  BezierCurve out = curve;
  out.coeffs[0] = h0;
  out.coeffs[1] = h0 + hd0 * T / m;
  out.coeffs[2] = hdd0 * T * T / (m * (m - 1.0)) + 2.0 * out.coeffs[1] - h0;
  return out;
}

}  // namespace lk

#include "flowharnack/grid.hpp"

#include <algorithm>
#include <limits>

namespace fh {

void GridChart::validate() const {
  if (nx < 16 || ny < 16 || nx % 2 || ny % 2)
    throw Error("grid sizes must be even and at least 16");
  if (!(lx > 0) || !(ly > 0)) throw Error("side lengths must be positive");
}

double torus_dist2(const GridChart& c, double x1, double y1, double x2, double y2) {
  double dx = std::remainder(x1 - x2, c.lx);
  double dy = std::remainder(y1 - y2, c.ly);
  return dx * dx + dy * dy;
}

ScalarField ScalarField::from_function(const GridChart& c,
                                       const std::function<double(double, double)>& f) {
  ScalarField out(c);
  for (int j = 0; j < c.ny; ++j)
    for (int i = 0; i < c.nx; ++i) out.v[c.idx(i, j)] = f(c.x(i), c.y(j));
  return out;
}

double ScalarField::min() const { return *std::min_element(v.begin(), v.end()); }
double ScalarField::max() const { return *std::max_element(v.begin(), v.end()); }

double ScalarField::max_abs() const {
  double m = 0;
  for (double a : v) m = std::max(m, std::abs(a));
  return m;
}

double ScalarField::mean() const {
  double s = 0;
  for (double a : v) s += a;
  return s / v.size();
}

bool ScalarField::all_finite() const {
  return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

ScalarField& ScalarField::operator+=(const ScalarField& o) {
  require_same(chart, o.chart);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += o.v[k];
  return *this;
}
ScalarField& ScalarField::operator-=(const ScalarField& o) {
  require_same(chart, o.chart);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] -= o.v[k];
  return *this;
}
ScalarField& ScalarField::operator*=(const ScalarField& o) {
  require_same(chart, o.chart);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] *= o.v[k];
  return *this;
}
ScalarField& ScalarField::operator*=(double s) {
  for (double& a : v) a *= s;
  return *this;
}
ScalarField& ScalarField::operator+=(double s) {
  for (double& a : v) a += s;
  return *this;
}

ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(ScalarField a, const ScalarField& b) { return a *= b; }
ScalarField operator*(double s, ScalarField a) { return a *= s; }
ScalarField operator*(ScalarField a, double s) { return a *= s; }
ScalarField operator+(ScalarField a, double s) { return a += s; }
ScalarField operator-(ScalarField a, double s) { return a += -s; }
ScalarField operator-(ScalarField a) { return a *= -1.0; }

ScalarField map(const ScalarField& a, const std::function<double(double)>& f) {
  ScalarField out(a.chart);
  for (std::size_t k = 0; k < a.v.size(); ++k) out.v[k] = f(a.v[k]);
  return out;
}

ScalarField exp(const ScalarField& a) {
  return map(a, [](double x) { return std::exp(x); });
}
ScalarField log(const ScalarField& a) {
  return map(a, [](double x) { return std::log(x); });
}

VectorField::VectorField(ScalarField a, ScalarField b) : x(std::move(a)), y(std::move(b)) {
  require_same(x.chart, y.chart);
}

VectorField operator+(const VectorField& a, const VectorField& b) { return {a.x + b.x, a.y + b.y}; }
VectorField operator-(const VectorField& a, const VectorField& b) { return {a.x - b.x, a.y - b.y}; }
VectorField operator*(double s, const VectorField& a) { return {s * a.x, s * a.y}; }
VectorField operator*(const ScalarField& f, const VectorField& a) { return {f * a.x, f * a.y}; }

SymTensor2Field::SymTensor2Field(ScalarField a, ScalarField b, ScalarField c)
    : t11(std::move(a)), t12(std::move(b)), t22(std::move(c)) {
  require_same(t11.chart, t12.chart);
  require_same(t11.chart, t22.chart);
}

SymTensor2Field operator+(const SymTensor2Field& a, const SymTensor2Field& b) {
  return {a.t11 + b.t11, a.t12 + b.t12, a.t22 + b.t22};
}
SymTensor2Field operator-(const SymTensor2Field& a, const SymTensor2Field& b) {
  return {a.t11 - b.t11, a.t12 - b.t12, a.t22 - b.t22};
}
SymTensor2Field operator*(double s, const SymTensor2Field& a) {
  return {s * a.t11, s * a.t12, s * a.t22};
}
SymTensor2Field operator*(const ScalarField& f, const SymTensor2Field& a) {
  return {f * a.t11, f * a.t12, f * a.t22};
}

}  // namespace fh

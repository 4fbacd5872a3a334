#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "flowharnack/errors.hpp"

namespace fh {

// Periodic fundamental domain [0,lx) x [0,ly) sampled at nx x ny points.
// Storage is row-major with x fastest: k = j*nx + i.
struct GridChart {
  int nx = 64;
  int ny = 64;
  double lx = 1.0;
  double ly = 1.0;

  double hx() const { return lx / nx; }
  double hy() const { return ly / ny; }
  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
  double x(int i) const { return i * hx(); }
  double y(int j) const { return j * hy(); }
  int wrap_i(int i) const { return ((i % nx) + nx) % nx; }
  int wrap_j(int j) const { return ((j % ny) + ny) % ny; }
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(wrap_j(j)) * nx + wrap_i(i);
  }

  // Throws fh::Error unless sizes are even and >= 16 and lengths positive.
  void validate() const;

  bool operator==(const GridChart& o) const {
    return nx == o.nx && ny == o.ny && lx == o.lx && ly == o.ly;
  }
  bool operator!=(const GridChart& o) const { return !(*this == o); }
};

// Squared flat distance on the torus, minimized over lattice translates.
double torus_dist2(const GridChart& c, double x1, double y1, double x2, double y2);

struct ScalarField {
  GridChart chart;
  std::vector<double> v;

  ScalarField() = default;
  explicit ScalarField(const GridChart& c, double value = 0.0) : chart(c), v(c.size(), value) {}

  static ScalarField from_function(const GridChart& c, const std::function<double(double, double)>& f);

  std::size_t size() const { return v.size(); }
  double& operator[](std::size_t k) { return v[k]; }
  double operator[](std::size_t k) const { return v[k]; }
  double& at(int i, int j) { return v[chart.idx(i, j)]; }
  double at(int i, int j) const { return v[chart.idx(i, j)]; }

  double min() const;
  double max() const;
  double max_abs() const;
  double mean() const;
  bool all_finite() const;

  ScalarField& operator+=(const ScalarField& o);
  ScalarField& operator-=(const ScalarField& o);
  ScalarField& operator*=(const ScalarField& o);
  ScalarField& operator*=(double s);
  ScalarField& operator+=(double s);
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(ScalarField a, const ScalarField& b);
ScalarField operator*(double s, ScalarField a);
ScalarField operator*(ScalarField a, double s);
ScalarField operator+(ScalarField a, double s);
ScalarField operator-(ScalarField a, double s);
ScalarField operator-(ScalarField a);

ScalarField map(const ScalarField& a, const std::function<double(double)>& f);
ScalarField exp(const ScalarField& a);
ScalarField log(const ScalarField& a);

// Covariant components (V_1, V_2) in the flat chart.
struct VectorField {
  ScalarField x;
  ScalarField y;

  VectorField() = default;
  explicit VectorField(const GridChart& c) : x(c), y(c) {}
  VectorField(ScalarField a, ScalarField b);
  const GridChart& chart() const { return x.chart; }
};

VectorField operator+(const VectorField& a, const VectorField& b);
VectorField operator-(const VectorField& a, const VectorField& b);
VectorField operator*(double s, const VectorField& a);
VectorField operator*(const ScalarField& f, const VectorField& a);

// Covariant components t_ij in the flat chart.
struct SymTensor2Field {
  ScalarField t11;
  ScalarField t12;
  ScalarField t22;

  SymTensor2Field() = default;
  explicit SymTensor2Field(const GridChart& c) : t11(c), t12(c), t22(c) {}
  SymTensor2Field(ScalarField a, ScalarField b, ScalarField c);
  const GridChart& chart() const { return t11.chart; }
};

SymTensor2Field operator+(const SymTensor2Field& a, const SymTensor2Field& b);
SymTensor2Field operator-(const SymTensor2Field& a, const SymTensor2Field& b);
SymTensor2Field operator*(double s, const SymTensor2Field& a);
SymTensor2Field operator*(const ScalarField& f, const SymTensor2Field& a);

inline void require_same(const GridChart& a, const GridChart& b) {
  if (a != b) throw ChartMismatch();
}

}  // namespace fh

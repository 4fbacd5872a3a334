#include <cmath>

#include "doctest.h"
#include "flowharnack/reduced.hpp"
#include "oracles.hpp"

using namespace fh;
using oracle::kPi;

namespace {

GridChart chart(int n, double l = 1.0) { return GridChart{n, n, l, l}; }

Model kind(ModelKind k) {
  Model m;
  m.kind = k;
  return m;
}

ScalarField bump(const GridChart& c, double a) {
  return ScalarField::from_function(c, [&](double x, double y) {
    return a * std::sin(2 * kPi * x / c.lx) * std::sin(2 * kPi * y / c.ly);
  });
}

FlowTrajectory flat(int n, double T, int stride) {
  return evolve(kind(ModelKind::Static), ConformalMetric(ScalarField(chart(n))), std::nullopt, T, DtPolicy{}, stride);
}

FlowTrajectory ricci(int n, double T, int stride) {
  GridChart c = chart(n);
  return evolve(kind(ModelKind::Ricci), ConformalMetric(bump(c, 0.05)), std::nullopt, T, DtPolicy{}, stride);
}

// hand-built history with u = c and S = sigma at every time
FlowTrajectory constant_history(const GridChart& c, double u, double sigma, double T) {
  FlowTrajectory tr;
  tr.chart = c;
  for (int k = 0; k <= 4; ++k) {
    tr.times.push_back(T * k / 4);
    tr.u.push_back(ScalarField(c, u));
    tr.s.push_back(ScalarField(c, sigma));
  }
  return tr;
}

// stored taus T - t_k near the requested ones
std::vector<double> stored_taus(const FlowTrajectory& tr, std::initializer_list<double> want) {
  std::vector<double> out;
  for (double w : want) out.push_back(tr.T() - tr.times[tr.nearest_index(tr.T() - w)]);
  return out;
}

}  // namespace

TEST_CASE("flat torus: ell is |x - y|^2 / (4 tau) over the nearest lift, zero on the diagonal") {
  FlowTrajectory tr = flat(32, 0.05, 20);
  const GridChart& c = tr.chart;
  for (double tau : {0.01, 0.04}) {
    CHECK(reduced_distance(tr, {8, 8}, {8, 8}, tau).ell == 0.0);
    for (GridPoint x : {GridPoint{11, 8}, GridPoint{14, 11}, GridPoint{18, 2}, GridPoint{30, 29}}) {
      ReducedDistance r = reduced_distance(tr, {8, 8}, x, tau);
      double d2 = oracle::torus_d2(c, c.x(8), c.y(8), c.x(x.first), c.y(x.second));
      CHECK(r.ell == doctest::Approx(d2 / (4 * tau)).epsilon(1e-10));
      CHECK(r.L <= r.L_straight * (1 + 1e-14));
    }
  }
  CHECK(reduced_distance(tr, {8, 8}, {30, 29}, 0.01).lift == std::array<int, 2>{-1, -1});
}

TEST_CASE("straight segment on the flat torus has L = d^2 / (2 sqrt(tau1))") {
  FlowTrajectory tr = flat(16, 0.05, 20);
  DiscreteCurve cv;
  cv.tau1 = 0.03;
  for (int k = 0; k <= 20; ++k) cv.nodes.push_back({0.1 + 0.3 * k / 20.0, 0.2 - 0.4 * k / 20.0});
  CHECK(l_length(tr, cv) == doctest::Approx(0.25 / (2 * std::sqrt(0.03))).epsilon(1e-13));
}

TEST_CASE("constant conformal factor and scalar curvature: closed-form L") {
  GridChart c = chart(16);
  double u = 0.3, sigma = 1.7, tau = 0.04;
  FlowTrajectory tr = constant_history(c, u, sigma, 0.05);
  // Simpson integrates 2 s^2 sigma exactly
  double pot = 2.0 / 3.0 * sigma * std::pow(tau, 1.5);
  ReducedDistance r0 = reduced_distance(tr, {3, 3}, {3, 3}, tau);
  CHECK(r0.L == doctest::Approx(pot).epsilon(1e-13));
  ReducedDistance r = reduced_distance(tr, {3, 3}, {7, 5}, tau);
  double d2 = std::pow(4 * c.hx(), 2) + std::pow(2 * c.hy(), 2);
  CHECK(r.L == doctest::Approx(pot + std::exp(2 * u) * d2 / (2 * std::sqrt(tau))).epsilon(1e-12));
  CHECK(r.ell == doctest::Approx(r.L / (2 * std::sqrt(tau))).epsilon(1e-15));
}

TEST_CASE("analytic gradient of the discrete L matches finite differences") {
  FlowTrajectory tr = ricci(32, 0.03, 4);
  CurveField f(tr, 0.02, 16);
  std::vector<Point2> nodes;
  for (int k = 0; k <= 16; ++k) {
    double r = k / 16.0;
    nodes.push_back({0.2 + 0.5 * r + 0.03 * std::sin(kPi * r), 0.7 - 0.3 * r});
  }
  std::vector<Point2> g;
  f.length(nodes, &g);
  double eps = 1e-6, worst = 0;
  for (std::size_t k = 1; k < 16; ++k)
    for (int a = 0; a < 2; ++a) {
      auto p = nodes, m = nodes;
      p[k][a] += eps;
      m[k][a] -= eps;
      double fd = (f.length(p) - f.length(m)) / (2 * eps);
      worst = std::max(worst, std::abs(fd - g[k][a]) / (1 + std::abs(g[k][a])));
    }
  CHECK(worst < 1e-7);
}

TEST_CASE("g(T) distance from frozen curve energy") {
  GridChart c = chart(16);
  FlowTrajectory tr = constant_history(c, 0.4, 0.0, 0.05);
  ScalarField d2 = distance2_T(tr, {2, 3});
  double worst = 0;
  for (int j = 0; j < c.ny; ++j)
    for (int i = 0; i < c.nx; ++i) {
      double e = std::exp(0.8) * oracle::torus_d2(c, c.x(2), c.y(3), c.x(i), c.y(j));
      worst = std::max(worst, std::abs(d2.at(i, j) - e));
    }
  CHECK(worst < 1e-12);
}

TEST_CASE("optimizer that cannot finish reports the best L as an upper bound") {
  FlowTrajectory tr = ricci(32, 0.03, 4);
  CurveOptions stop;
  stop.max_iter = 0;
  ReducedDistance ref = reduced_distance(tr, {8, 8}, {20, 14}, 0.02);
  try {
    reduced_distance(tr, {8, 8}, {20, 14}, 0.02, stop);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.best() >= ref.L);
    CHECK(e.residual() > 0);
  }
}

TEST_CASE("flat reduced volume equals the lattice sum of the Gaussian over one cell") {
  FlowTrajectory tr = flat(32, 0.05, 20);
  const GridChart& c = tr.chart;
  for (double tau : {0.005, 0.02, 0.04}) {
    ScalarField ell = reduced_distance_field(tr, {8, 8}, tau);
    double sum = 0;
    for (int j = 0; j < c.ny; ++j)
      for (int i = 0; i < c.nx; ++i)
        sum += std::exp(-oracle::torus_d2(c, c.x(8), c.y(8), c.x(i), c.y(j)) / (4 * tau)) / (4 * kPi * tau);
    sum *= c.hx() * c.hy();
    CHECK(reduced_volume(tr, ell, tau) == doctest::Approx(sum).epsilon(1e-12));
    // per axis: Gaussian mass inside the cell, minus the Euler-Maclaurin term of the kink at +-1/2
    double g = std::exp(-0.25 / (4 * tau)) / std::sqrt(4 * kPi * tau);
    double s1 = std::erf(0.5 / std::sqrt(4 * tau)) - c.hx() * c.hx() * g / (24 * tau);
    double eps = 1 - s1 * s1;
    CHECK(std::abs(reduced_volume(tr, ell, tau) - s1 * s1) <= 1e-5);
    CHECK(std::abs(reduced_volume(tr, ell, tau) - 1) <= eps + 1e-5);
  }
}

TEST_CASE("ell converges at second order in the grid and in the curve resolution") {
  std::vector<double> by_grid, by_m;
  for (int n : {16, 32, 64}) {
    FlowTrajectory tr = ricci(n, 0.02, n / 8);
    CurveField f(tr, 0.02, 32);
    by_grid.push_back(reduced_distance(f, {0.25, 0.25}, {0.625, 0.5}).ell);
    if (n == 32)
      for (int m : {16, 32, 64}) {
        CurveOptions o;
        o.m = m;
        by_m.push_back(reduced_distance(CurveField(tr, 0.02, m), {0.25, 0.25}, {0.625, 0.5}, o).ell);
      }
  }
  double og = std::log2(std::abs(by_grid[1] - by_grid[0]) / std::abs(by_grid[2] - by_grid[1]));
  double om = std::log2(std::abs(by_m[1] - by_m[0]) / std::abs(by_m[2] - by_m[1]));
  MESSAGE("grid order " << og << ", curve order " << om);
  CHECK(og > 1.8);
  CHECK(om > 1.8);
}

TEST_CASE("Ricci flow: sandwich, Lipschitz, subsolution and h <= ell") {
  FlowTrajectory tr = ricci(32, 0.05, 4);
  CurvatureBounds b = measure_bounds(tr);
  GridPoint y{8, 8};
  ReducedReport rep = reduced_series(tr, y, stored_taus(tr, {0.008, 0.012, 0.016, 0.024, 0.032, 0.04, 0.048}));
  CHECK(rep.volume_nonincreasing);
  CHECK(rep.volume.front() <= 1 + 1e-6);
  ScalarField d2 = distance2_T(tr, y);
  for (std::size_t q = 0; q < rep.tau.size(); ++q) {
    SandwichReport s = check_sandwich(tr, b, rep.ell[q], d2, rep.tau[q]);
    CHECK(s.pass);
    LipschitzReport l = check_lipschitz(tr, b, rep.ell[q], d2, rep.tau[q]);
    CHECK(l.pass);
  }
  SubsolutionReport sub = check_subsolution(tr, rep);
  CHECK(sub.pass);
  KernelSolution ker = solve_kernel(tr, y.first, y.second);
  ComparisonReport cmp = check_h_le_ell(ker, rep);
  CHECK(cmp.pass);
  KernelSolution other = solve_kernel(tr, 9, 8);
  CHECK_THROWS(check_h_le_ell(other, rep));
}

TEST_CASE("flat static flow: subsolution and h <= ell") {
  FlowTrajectory tr = flat(32, 0.05, 4);
  ReducedReport rep = reduced_series(tr, {16, 16}, stored_taus(tr, {0.01, 0.02, 0.03, 0.04}));
  CHECK(check_subsolution(tr, rep).pass);
  CHECK(check_h_le_ell(solve_kernel(tr, 16, 16), rep).pass);
  CHECK_THROWS(check_subsolution(tr, reduced_series(tr, {16, 16}, stored_taus(tr, {0.01, 0.02}))));
}

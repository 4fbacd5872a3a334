#include <cmath>

#include "doctest.h"
#include "flowharnack/entropy.hpp"
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

// h of a density normalized on m
ScalarField h_of(const ConformalMetric& m, ScalarField density, double tau) {
  density *= 1 / integrate(m, density);
  return map(density, [&](double x) { return -std::log(4 * kPi * tau * x); });
}

double lattice_allowance(const GridChart& c, double tau) { return 0.1 * c.hx() * c.hx() / tau; }

}  // namespace

TEST_CASE("W of a constant density is h - n") {
  GridChart c = chart(32, 2.0);
  ConformalMetric m{ScalarField(c)};
  for (double tau : {0.01, 0.3, 2.0}) {
    double vol = 4.0;
    double h = std::log(vol / (4 * kPi * tau));
    CHECK(w_functional(m, ScalarField(c), tau, ScalarField(c, h)) == doctest::Approx(h - 2).epsilon(1e-13));
  }
}

TEST_CASE("W rejects unnormalized densities and reports the mass") {
  GridChart c = chart(16);
  ConformalMetric m{ScalarField(c)};
  double tau = 0.1;
  ScalarField h(c, -std::log(4 * kPi * tau * 2.0));
  try {
    w_functional(m, ScalarField(c), tau, h);
    FAIL("expected NormalizationError");
  } catch (const NormalizationError& e) {
    CHECK(e.mass() == doctest::Approx(2.0));
  }
  CHECK_THROWS(w_functional(m, ScalarField(c), 0.0, h));
}

TEST_CASE("W is invariant under g -> c g, tau -> c tau") {
  GridChart c = chart(32);
  ConformalMetric m{oracle::random_smooth(c, 3, 0.2)};
  double tau = 0.02;
  ScalarField h = h_of(m, exp(oracle::random_smooth(c, 8, 0.5)), tau);
  double w0 = w_functional(m, scalar_curvature(m), tau, h);
  for (double k : {0.25, 3.0, 17.0}) {
    ConformalMetric mc{m.u + 0.5 * std::log(k)};
    double wc = w_functional(mc, scalar_curvature(mc), k * tau, h);
    CHECK(std::abs(wc - w0) <= 1e-12 * std::abs(w0));
  }
}

TEST_CASE("flat torus: sampled Gaussian approaches the log-Sobolev equality and bounds mu from above") {
  // tau well below the 2 pi torus threshold 1/2, where the truncation of the Gaussian to one cell is negligible
  for (double tau : {0.05, 0.1}) {
    double prev = 0;
    for (int n : {32, 64, 128}) {
      GridChart c = chart(n, 2 * kPi);
      ConformalMetric m{ScalarField(c)};
      ScalarField g = ScalarField::from_function(c, [&](double x, double y) {
        return oracle::image_sum_kernel(c, x, y, kPi, kPi, tau);
      });
      double w = w_functional(m, ScalarField(c), tau, h_of(m, g, tau));
      // forward-difference Dirichlet energy of a sampled Gaussian: W = O(h^2/tau)
      if (prev != 0) CHECK(oracle::order(std::abs(prev), std::abs(w)) > 1.9);
      CHECK(std::abs(w) <= lattice_allowance(c, tau));
      prev = w;
      if (n == 64) {
        MuResult mu = mu_minimize(m, ScalarField(c), tau);
        CHECK(mu.mu <= w + mu.tol_el);
        CHECK(mu.mu <= 0);
        CHECK(std::abs(mu.mu) <= lattice_allowance(c, tau));
        CHECK(mu.el_residual <= mu.tol_el);
      }
    }
  }
}

TEST_CASE("unit flat torus: the constant is the minimizer above tau = 1/(2 lambda_1) and is beaten below") {
  GridChart c = chart(32);
  ConformalMetric m{ScalarField(c)};
  double lam1 = 4 * std::pow(std::sin(kPi * c.hx()) / c.hx(), 2);
  for (double tau : {1.2 / (2 * lam1), 0.04}) {
    MuResult r = mu_minimize(m, ScalarField(c), tau);
    CHECK(r.mu == doctest::Approx(-std::log(4 * kPi * tau) - 2).epsilon(1e-10));
  }
  double tau = 0.8 / (2 * lam1);
  MuResult r = mu_minimize(m, ScalarField(c), tau);
  CHECK(r.mu < -std::log(4 * kPi * tau) - 2 - 1e-4);
  CHECK(r.el_residual <= r.tol_el);
  CHECK(r.w.max() > 1.5 * r.w.min());
}

TEST_CASE("flat dyadic sequence: |mu| decreases toward 0") {
  GridChart c = chart(64);
  ConformalMetric m{ScalarField(c)};
  double prev = 1e9;
  for (double tau : {0.04, 0.02, 0.01, 0.005}) {
    MuResult r = mu_minimize(m, ScalarField(c), tau);
    MESSAGE("tau " << tau << " mu " << r.mu << " EL " << r.el_residual);
    CHECK(r.mu <= 0);
    CHECK(std::abs(r.mu) < prev);
    CHECK(r.el_residual <= r.tol_el);
    prev = std::abs(r.mu);
  }
  CHECK(prev <= 1e-2);
}

TEST_CASE("mu: scaling, infimum against kernel densities, restarts") {
  GridChart c = chart(32);
  FlowTrajectory tr = evolve(kind(ModelKind::Ricci), ConformalMetric(bump(c, 0.05)), std::nullopt, 0.03, DtPolicy{}, 1);
  KernelSolution ker = solve_kernel(tr, 8, 8);
  std::size_t k = tr.nearest_index(0.0);
  ConformalMetric m = tr.metric(k);
  double tau = ker.tau[k];
  MuResult r = mu_minimize(m, tr.s[k], tau);
  CHECK(r.el_residual <= r.tol_el);
  CHECK(r.mu <= w_of_density(m, tr.s[k], tau, ker.u[k]) + r.tol_el);

  for (double s : {0.5, 4.0}) {
    ConformalMetric ms{m.u + 0.5 * std::log(s)};
    MuResult rs = mu_minimize(ms, (1 / s) * tr.s[k], s * tau);
    CHECK(std::abs(rs.mu - r.mu) <= r.tol_el);
  }

  double spread = 0;
  for (unsigned seed = 1; seed <= 5; ++seed) {
    ScalarField init = exp(oracle::random_smooth(c, seed, 2.0));
    MuOptions forced;
    forced.compare_defaults = false;
    spread = std::max(spread, std::abs(mu_minimize(m, tr.s[k], tau, init, forced).mu - r.mu));
  }
  MESSAGE("five random restarts: largest |mu - mu_0| = " << spread);
}

TEST_CASE("W along conjugate solutions is non-decreasing on D >= 0 flows") {
  for (ModelKind mk : {ModelKind::Ricci, ModelKind::ExtendedRicci, ModelKind::Static}) {
    GridChart c = chart(32);
    std::optional<ScalarField> phi;
    if (mk == ModelKind::ExtendedRicci)
      phi = ScalarField::from_function(c, [](double x, double y) {
        return 0.2 * std::sin(2 * kPi * x) + 0.1 * std::cos(2 * kPi * y);
      });
    FlowTrajectory tr = evolve(kind(mk), ConformalMetric(bump(c, 0.05)), phi, 0.1, DtPolicy{}, 2);
    KernelSolution smooth = solve_conjugate(tr, exp(oracle::random_smooth(c, 11, 0.6)));
    MonotoneSeries a = check_w_monotone(smooth, 1);
    CHECK(a.monotone);
    CHECK(a.value.back() > a.value.front());
    MonotoneSeries b = check_w_monotone(solve_kernel(tr, 8, 8));
    CHECK(b.monotone);
    CHECK(b.tau.front() > b.tau.back());
    CHECK(b.tau.back() >= 40 * c.hx() * c.hx());
  }
}

TEST_CASE("mu non-decreasing in t along Ricci flow, flat static stays near 0") {
  GridChart c = chart(32);
  FlowTrajectory tr = evolve(kind(ModelKind::Ricci), ConformalMetric(bump(c, 0.05)), std::nullopt, 0.05, DtPolicy{}, 1);
  std::vector<std::size_t> sl;
  for (int q = 0; q < 5; ++q) sl.push_back(tr.nearest_index(tr.T() * q / 5.0));
  MonotoneSeries warm = check_mu_monotone(tr, sl);
  MonotoneSeries cold = check_mu_monotone(tr, sl, false);
  CHECK(warm.monotone);
  CHECK(cold.monotone);
  for (std::size_t i = 0; i < sl.size(); ++i) {
    CHECK(std::abs(warm.value[i] - cold.value[i]) <= 1e-5 * (1 + std::abs(cold.value[i])));
    CHECK(warm.value[i] <= 0);
  }

  GridChart cf = chart(64, 2 * kPi);
  FlowTrajectory flat = evolve(kind(ModelKind::Static), ConformalMetric(ScalarField(cf)), std::nullopt, 0.2, DtPolicy{}, 20);
  std::vector<std::size_t> fs{0, flat.size() / 4, flat.size() / 2};
  MonotoneSeries f = check_mu_monotone(flat, fs, false);
  CHECK(f.monotone);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    CHECK(f.value[i] <= 0);
    CHECK(std::abs(f.value[i]) <= lattice_allowance(cf, f.tau[i]));
  }
}

TEST_CASE("upsilon on the flat torus is non-positive and mu approaches 0 at the small end of the grid") {
  GridChart c = chart(32);
  ConformalMetric m{ScalarField(c)};
  UpsilonReport u = upsilon(m, ScalarField(c), 0.05, 1e-3, 16);
  CHECK(u.tau.size() == 28);
  CHECK(u.upsilon <= 0);
  CHECK(u.upsilon == doctest::Approx(-std::log(4 * kPi * u.tau_at_min) - 2).epsilon(1e-9));
  CHECK(std::abs(u.mu.front()) <= lattice_allowance(c, u.tau.front()));
  CHECK_THROWS(upsilon(m, ScalarField(c), 0.05, 0.0));
}

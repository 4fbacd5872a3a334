#include <cmath>

#include "doctest.h"
#include "flowharnack/flow.hpp"
#include "oracles.hpp"

using namespace fh;
using oracle::kPi;

namespace {

GridChart chart(int n, double l = 1.0) { return GridChart{n, n, l, l}; }

ScalarField bump(const GridChart& c, double a) {
  return ScalarField::from_function(c, [&](double x, double y) {
    return a * std::sin(2 * kPi * x / c.lx) * std::sin(2 * kPi * y / c.ly);
  });
}

VectorField unit_e1(const ConformalMetric& m) {
  return VectorField(map(m.u, [](double x) { return std::exp(x); }), ScalarField(m.chart()));
}

double ricci_dmax(int n) {
  GridChart c = chart(n);
  Model rf;
  FlowTrajectory tr = evolve(rf, ConformalMetric(bump(c, 0.05)), std::nullopt, 0.002, DtPolicy{}, 1);
  double t = tr.times[tr.size() / 2];
  ConformalMetric m = tr.metric(tr.size() / 2);
  double worst = 0;
  for (const VectorField& v : {VectorField(c), unit_e1(m), gradient(m, oracle::random_smooth(c, 7, 1.0))}) {
    worst = std::max(worst, eval_dalpha_generic(tr, t, v).value.max_abs());
  }
  return worst;
}

}  // namespace

TEST_CASE("make_alpha closed forms") {
  GridChart c = chart(64, 1.5);
  ConformalMetric curved(bump(c, 0.1));
  Model st;
  st.kind = ModelKind::Static;
  AlphaSnapshot a = make_alpha(st, curved, nullptr);
  CHECK(a.alpha.t11.max_abs() == 0.0);
  CHECK(a.trace_s.max_abs() == 0.0);

  Model ricci;
  ConformalMetric flat{ScalarField(c)};
  CHECK(make_alpha(ricci, flat, nullptr).alpha.t11.max_abs() == 0.0);

  Model ext;
  ext.kind = ModelKind::ExtendedRicci;
  ext.coupling = 1.0;
  double k = 2 * kPi / c.lx;
  ScalarField phi = ScalarField::from_function(c, [&](double x, double) { return std::sin(k * x); });
  AlphaSnapshot e = make_alpha(ext, flat, &phi);
  ScalarField ref = ScalarField::from_function(c, [&](double x, double) { return -k * k * std::pow(std::cos(k * x), 2); });
  CHECK((e.trace_s - ref).max_abs() < 0.4 * ref.max_abs() * std::pow(k * c.hx(), 2));
  CHECK((trace(flat, e.alpha) - e.trace_s).max_abs() < 1e-12);
  CHECK_THROWS_AS(make_alpha(ext, flat, nullptr), Error);
}

TEST_CASE("D parts sum to the value and D is quadratic-affine in V") {
  GridChart c = chart(32);
  ConformalMetric m(oracle::random_smooth(c, 2, 0.1));
  SymTensor2Field alpha(oracle::random_smooth(c, 3, 1.0), oracle::random_smooth(c, 4, 1.0),
                        oracle::random_smooth(c, 5, 1.0));
  ScalarField s = trace(m, alpha);
  ScalarField dsdt = oracle::random_smooth(c, 6, 1.0);
  VectorField v = gradient(m, oracle::random_smooth(c, 8, 1.0));
  DalphaEvaluation d = eval_dalpha(m, alpha, s, dsdt, v);
  ScalarField sum = d.parts[0] + d.parts[1] + d.parts[2] + d.parts[3] + d.parts[4];
  CHECK((sum - d.value).max_abs() == 0.0);

  ScalarField d0 = eval_dalpha(m, alpha, s, dsdt, VectorField(c)).value;
  ScalarField q[4];
  for (int l = 0; l < 4; ++l) q[l] = eval_dalpha(m, alpha, s, dsdt, double(l) * v).value - d0;
  // quadratic through l = 0,1,2 extrapolated to l = 3: p(3) = p(0) - 3 p(1) + 3 p(2)
  ScalarField pred = q[0] - 3.0 * q[1] + 3.0 * q[2];
  CHECK((pred - q[3]).max_abs() < 1e-9 * (1 + q[3].max_abs()));
}

TEST_CASE("static flat torus: D vanishes; static curved: D = 2 Rc(V,V)") {
  GridChart c = chart(32);
  Model st;
  st.kind = ModelKind::Static;
  FlowTrajectory flat = evolve(st, ConformalMetric(ScalarField(c)), std::nullopt, 0.001, DtPolicy{}, 1);
  DalphaCertificate cert = dalpha_nonneg_certificate(flat, {flat.times[0], flat.times[1]}, {}, 3, 1);
  CHECK(cert.min_d == 0.0);
  CHECK(cert.nonnegative);

  FlowTrajectory curved = evolve(st, ConformalMetric(bump(c, 0.1)), std::nullopt, 0.001, DtPolicy{}, 1);
  ConformalMetric m = curved.metric(0);
  VectorField v = unit_e1(m);
  DalphaEvaluation d = eval_dalpha_generic(curved, 0.0, v);
  CHECK((d.value - 2.0 * tensor_apply(m, ricci(m), v)).max_abs() < 1e-12);
}

TEST_CASE("Ricci flow: D vanishes under refinement") {
  double d32 = ricci_dmax(32), d64 = ricci_dmax(64), d128 = ricci_dmax(128);
  MESSAGE("max|D| 32/64/128: " << d32 << " " << d64 << " " << d128);
  CHECK(d64 < d32);
  CHECK(d128 < d64);
  CHECK(oracle::order(d64, d128) > 1.5);
}

TEST_CASE("extended Ricci: generic D agrees with the closed form under refinement") {
  for (unsigned seed : {11u, 12u, 13u}) {
    double prev = 0;
    for (int n : {32, 64, 128}) {
      GridChart c = chart(n);
      ConformalMetric m(oracle::random_smooth(c, seed, 0.1));
      ScalarField phi = oracle::random_smooth(c, seed + 50, 0.5);
      Model ext;
      ext.kind = ModelKind::ExtendedRicci;
      ext.coupling = 0.7;
      AlphaSnapshot a = make_alpha(ext, m, &phi);
      ScalarField dsdt = *analytic_dsdt(ext, m, a);
      VectorField v = gradient(m, oracle::random_smooth(c, seed + 90, 1.0));
      ScalarField generic = eval_dalpha(m, a.alpha, a.trace_s, dsdt, v).value;
      ScalarField closed = dalpha_extended_closed_form(m, phi, ext.coupling, v);
      double err = (generic - closed).max_abs() / closed.max_abs();
      if (prev > 0) CHECK(oracle::order(prev, err) > 1.8);
      prev = err;
    }
    CHECK(prev < 2e-2);
  }
}

TEST_CASE("negative control: alpha = -eps g gives D(0) = -4 eps^2") {
  GridChart c = chart(32);
  Model neg;
  neg.kind = ModelKind::Custom;
  neg.custom.kind = CustomSchedule::Kind::ScaledCurrent;
  double eps = 0.5;
  neg.custom.lambda = -eps;
  FlowTrajectory tr = evolve(neg, ConformalMetric(ScalarField(c)), std::nullopt, 0.01, DtPolicy{}, 10);
  DalphaEvaluation d = eval_dalpha_generic(tr, tr.times[1], VectorField(c));
  CHECK(d.value.max() == doctest::Approx(-4 * eps * eps).epsilon(1e-10));
  CHECK(d.value.min() == doctest::Approx(-4 * eps * eps).epsilon(1e-10));
  DalphaCertificate cert = dalpha_nonneg_certificate(tr, {tr.times[0], tr.times[1]}, {}, 2, 3);
  CHECK(cert.min_d < 0);
  CHECK_FALSE(cert.nonnegative);
}

TEST_CASE("extended Ricci certificate is nonnegative") {
  GridChart c = chart(64);
  Model ext;
  ext.kind = ModelKind::ExtendedRicci;
  ScalarField phi = ScalarField::from_function(c, [](double x, double y) {
    return 0.2 * std::sin(2 * kPi * x) + 0.1 * std::cos(2 * kPi * y);
  });
  FlowTrajectory tr = evolve(ext, ConformalMetric(bump(c, 0.02)), phi, 0.002, DtPolicy{}, 20);
  DalphaCertificate cert = dalpha_nonneg_certificate(tr, tr.times, {}, 3, 5);
  MESSAGE("extended min D " << cert.min_d << " tol " << cert.tol_d << " at " << cert.argmin_field << " t=" << cert.argmin_time);
  CHECK(cert.nonnegative);
}

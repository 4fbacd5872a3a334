#include "flowharnack/entropy.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace fh {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDimE = 2.0;
constexpr double kLogFloor = 1e-150;

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

double log_const(double tau) { return 0.5 * kDimE * std::log(4 * kPi * tau) + kDimE; }

double xlogx2(double w) { return w > 0 ? w * w * std::log(w * w) : 0.0; }

ScalarField volume_weights(const ConformalMetric& m) {
  const GridChart& c = m.chart();
  return m.conformal() * (c.hx() * c.hy());
}

double mass_w(const ScalarField& w, const ScalarField& dmu) {
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w.v[i] * w.v[i] * dmu.v[i];
  return s;
}

// tau (4 int|grad w|^2 + int S w^2) - int w^2 log w^2 - c int w^2
double functional(const ConformalMetric& m, const ScalarField& s, double tau, const ScalarField& w,
                  const ScalarField& dmu) {
  double pot = 0;
  double c = log_const(tau);
  for (std::size_t i = 0; i < w.size(); ++i)
    pot += (tau * s.v[i] * w.v[i] * w.v[i] - xlogx2(w.v[i]) - c * w.v[i] * w.v[i]) * dmu.v[i];
  return 4 * tau * dirichlet_form(m, w, w) + pot;
}

// Riemannian gradient with respect to the dmu inner product
ScalarField gradient_w(const ConformalMetric& m, const ScalarField& s, double tau, const ScalarField& w) {
  ScalarField g = -8.0 * tau * (m.inv_conformal() * flat_laplacian(w));
  double c = log_const(tau);
  for (std::size_t i = 0; i < w.size(); ++i) {
    double wi = w.v[i];
    double lw = wi > 0 ? std::log(wi * wi) : 0.0;
    g.v[i] += 2 * tau * s.v[i] * wi - 2 * wi * lw - 2 * wi - 2 * c * wi;
  }
  return g;
}

double dot(const ScalarField& a, const ScalarField& b, const ScalarField& dmu) {
  double r = 0;
  for (std::size_t i = 0; i < a.size(); ++i) r += a.v[i] * b.v[i] * dmu.v[i];
  return r;
}

SpMat flat_laplacian_matrix(const GridChart& c) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(5 * c.size());
  double ax = 1 / (c.hx() * c.hx()), ay = 1 / (c.hy() * c.hy());
  for (int j = 0; j < c.ny; ++j)
    for (int i = 0; i < c.nx; ++i) {
      int k = static_cast<int>(c.idx(i, j));
      t.emplace_back(k, k, -2 * ax - 2 * ay);
      t.emplace_back(k, static_cast<int>(c.idx(i + 1, j)), ax);
      t.emplace_back(k, static_cast<int>(c.idx(i - 1, j)), ax);
      t.emplace_back(k, static_cast<int>(c.idx(i, j + 1)), ay);
      t.emplace_back(k, static_cast<int>(c.idx(i, j - 1)), ay);
    }
  SpMat a(c.size(), c.size());
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

ScalarField to_field(const GridChart& c, const Vec& v) {
  ScalarField f(c);
  for (std::size_t i = 0; i < f.size(); ++i) f.v[i] = v[static_cast<Eigen::Index>(i)];
  return f;
}

Vec to_vec(const ScalarField& f) { return Eigen::Map<const Vec>(f.v.data(), static_cast<Eigen::Index>(f.size())); }

ScalarField normalized(ScalarField w, const ScalarField& dmu) {
  w *= 1 / std::sqrt(mass_w(w, dmu));
  return w;
}

ScalarField h_from_w(const ScalarField& w, double tau) {
  return map(w, [&](double x) { return -std::log(std::max(x * x, kLogFloor)) - 0.5 * kDimE * std::log(4 * kPi * tau); });
}

// Candidate starts: the normalized constant nudged by a small bump (on a flat torus the exact constant
// is a critical point and would stall the descent), and a Gaussian bump of width sqrt(2 tau) centred
// at the maximum of S.
std::vector<ScalarField> default_starts(const ConformalMetric& m, const ScalarField& s, double tau,
                                        const ScalarField& dmu) {
  const GridChart& c = m.chart();
  std::size_t k0 = static_cast<std::size_t>(std::max_element(s.v.begin(), s.v.end()) - s.v.begin());
  int i0 = static_cast<int>(k0 % c.nx), j0 = static_cast<int>(k0 / c.nx);
  double e2 = std::exp(2 * m.u.v[k0]);
  ScalarField bump(c);
  for (int j = 0; j < c.ny; ++j)
    for (int i = 0; i < c.nx; ++i)
      bump.at(i, j) = std::exp(-e2 * torus_dist2(c, c.x(i), c.y(j), c.x(i0), c.y(j0)) / (8 * tau)) + 1e-100;
  bump = normalized(bump, dmu);
  ScalarField flat = normalized(ScalarField(c, 1.0), dmu);
  return {normalized(flat + 1e-3 * flat.max() / bump.max() * bump, dmu), bump};
}

}  // namespace

double w_of_density(const ConformalMetric& m, const ScalarField& s, double tau, const ScalarField& density,
                    double tol_norm) {
  require_same(m.chart(), density.chart);
  require_same(m.chart(), s.chart);
  if (!(tau > 0)) throw Error("tau must be positive");
  ScalarField dmu = volume_weights(m);
  double mass = 0;
  for (std::size_t i = 0; i < density.size(); ++i) {
    if (density.v[i] < 0) throw Error("density must be non-negative");
    mass += density.v[i] * dmu.v[i];
  }
  if (!(std::abs(mass - 1) <= tol_norm)) throw NormalizationError(mass);
  return functional(m, s, tau, map(density, [](double x) { return std::sqrt(x); }), dmu);
}

double w_functional(const ConformalMetric& m, const ScalarField& s, double tau, const ScalarField& h,
                    double tol_norm) {
  if (!(tau > 0)) throw Error("tau must be positive");
  double pref = std::pow(4 * kPi * tau, -0.5 * kDimE);
  return w_of_density(m, s, tau, map(h, [&](double x) { return pref * std::exp(-x); }), tol_norm);
}

double euler_lagrange_residual(const ConformalMetric& m, const ScalarField& s, double tau, const ScalarField& w,
                               double mu) {
  ScalarField lw = m.inv_conformal() * flat_laplacian(w);
  ScalarField h = h_from_w(w, tau);
  double r = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w.v[i] < kLogFloor) continue;
    r = std::max(r, std::abs(-4 * tau * lw.v[i] / w.v[i] + tau * s.v[i] + h.v[i] - kDimE - mu));
  }
  return r;
}

MuResult mu_minimize(const ConformalMetric& m, const ScalarField& s, double tau, const std::optional<ScalarField>& init,
                     const MuOptions& opt) {
  if (!(tau > 0)) throw Error("tau must be positive");
  require_same(m.chart(), s.chart);
  const GridChart& c = m.chart();
  ScalarField dmu = volume_weights(m);
  ScalarField e2 = m.conformal();

  ScalarField w;
  if (init) {
    require_same(c, init->chart);
    if (init->min() < 0) throw Error("initial density must be non-negative");
    w = normalized(map(*init, [](double x) { return std::sqrt(x) + 1e-100; }), dmu);
  }
  if (!init || opt.compare_defaults)
    for (ScalarField& cand : default_starts(m, s, tau, dmu))
      if (w.size() == 0 || functional(m, s, tau, cand, dmu) < functional(m, s, tau, w, dmu)) w = std::move(cand);

  SpMat lap = flat_laplacian_matrix(c);
  SpMat pre = -8.0 * tau * lap;
  for (std::size_t i = 0; i < c.size(); ++i) pre.coeffRef(i, i) += opt.sigma * e2.v[i];
  Eigen::SimplicialLDLT<SpMat> chol(pre);
  if (chol.info() != Eigen::Success) throw Error("preconditioner factorization failed");

  MuResult r;
  r.tau = tau;
  double f = functional(m, s, tau, w, dmu);
  auto tol_of = [](double mu) { return 1e-5 * (1 + std::abs(mu)); };
  double res = euler_lagrange_residual(m, s, tau, w, f);
  std::vector<double> hist{f};

  // projected gradient
  for (int it = 0; it < opt.max_iter && res > tol_of(f); ++it) {
    ScalarField g = gradient_w(m, s, tau, w);
    g -= dot(g, w, dmu) * w;
    ScalarField d = to_field(c, chol.solve(to_vec(g * e2)));
    d -= dot(d, w, dmu) * w;
    double slope = -dot(g, d, dmu);
    if (!(slope < 0)) break;
    double t = 1.0, fn = f;
    ScalarField wn;
    bool ok = false;
    for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
      wn = w - t * d;
      if (wn.min() <= 0) continue;
      wn = normalized(std::move(wn), dmu);
      fn = functional(m, s, tau, wn, dmu);
      if (fn <= f + opt.armijo * t * slope) {
        ok = true;
        break;
      }
    }
    if (!ok) break;
    w = std::move(wn);
    f = fn;
    r.pg_iters = it + 1;
    res = euler_lagrange_residual(m, s, tau, w, f);
    hist.push_back(f);
    std::size_t n = hist.size();
    if (n > static_cast<std::size_t>(opt.stall_window)) {
      double old = hist[n - 1 - opt.stall_window];
      if (old - f <= opt.stall * std::max(1.0, std::abs(f))) break;
    }
  }

  // bordered Newton polish in psi = log w on E(psi, mu) = 0, int w^2 dmu = 1
  ScalarField best_w = w;
  double best_f = f, best_res = res;
  for (int it = 0; it < opt.newton_iter && best_res > 1e-2 * tol_of(best_f); ++it) {
    ScalarField lw = m.inv_conformal() * flat_laplacian(w);
    ScalarField h = h_from_w(w, tau);
    Vec e(static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i)
      e[i] = -4 * tau * lw.v[i] / w.v[i] + tau * s.v[i] + h.v[i] - kDimE - f;
    std::vector<Eigen::Triplet<double>> tr;
    tr.reserve(lap.nonZeros());
    for (int col = 0; col < lap.outerSize(); ++col)
      for (SpMat::InnerIterator itr(lap, col); itr; ++itr) {
        std::size_t i = static_cast<std::size_t>(itr.row()), j = static_cast<std::size_t>(itr.col());
        double v = -4 * tau * itr.value() * w.v[j] / (e2.v[i] * w.v[i]);
        if (i == j) v += 4 * tau * lw.v[i] / w.v[i] - 2;
        tr.emplace_back(itr.row(), itr.col(), v);
      }
    SpMat jac(c.size(), c.size());
    jac.setFromTriplets(tr.begin(), tr.end());
    // Levenberg damping: on the flat torus translations are an almost-null mode of the Jacobian
    bool improved = false;
    for (double eps : {0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0}) {
      SpMat jd = jac;
      if (eps > 0)
        for (std::size_t i = 0; i < c.size(); ++i) jd.coeffRef(i, i) -= eps;
      Eigen::SparseLU<SpMat> lu;
      lu.compute(jd);
      if (lu.info() != Eigen::Success) continue;
      Vec a = lu.solve(-e), b = lu.solve(Vec::Ones(e.size()));
      double ga = 0, gb = 0;
      for (std::size_t i = 0; i < c.size(); ++i) {
        double gi = 2 * w.v[i] * w.v[i] * dmu.v[i];
        ga += gi * a[i];
        gb += gi * b[i];
      }
      Vec dpsi = a - (ga / gb) * b;
      for (double t = 1.0; t > 0.1 && !improved; t *= 0.5) {
        ScalarField wn = w;
        for (std::size_t i = 0; i < c.size(); ++i) wn.v[i] = w.v[i] * std::exp(t * dpsi[i]);
        wn = normalized(std::move(wn), dmu);
        double fn = functional(m, s, tau, wn, dmu);
        double rn = euler_lagrange_residual(m, s, tau, wn, fn);
        if (std::isfinite(rn) && rn < best_res) {
          w = wn;
          f = fn;
          best_w = wn;
          best_f = fn;
          best_res = rn;
          improved = true;
        }
      }
      if (improved) break;
    }
    r.newton_iters = it + 1;
    if (!improved) break;
  }

  r.mu = best_f;
  r.w = best_w;
  r.h = h_from_w(best_w, tau);
  r.el_residual = best_res;
  r.tol_el = tol_of(best_f);
  if (!(best_res <= r.tol_el))
    throw ConvergenceError("mu minimization did not reach the Euler-Lagrange tolerance at tau=" + std::to_string(tau),
                           best_f, best_res);
  return r;
}

namespace {

// Largest drop from a running maximum, against 1e-4 max|value| plus the lattice allowance
// 0.1 h_g^2 / tau_min (h_g the largest metric grid spacing). On the flat torus the discrete
// mu sits at -0.031 h^2/tau below its continuum value at every resolution tried.
void finish(MonotoneSeries& out, double hg2) {
  double scale = 0, run = -std::numeric_limits<double>::infinity();
  for (double x : out.value) scale = std::max(scale, std::abs(x));
  double tau_min = *std::min_element(out.tau.begin(), out.tau.end());
  out.tol_mono = 1e-4 * scale + 0.1 * hg2 / tau_min;
  out.worst_decrease = 0;
  for (double x : out.value) {
    run = std::max(run, x);
    out.worst_decrease = std::max(out.worst_decrease, run - x);
  }
  out.monotone = out.worst_decrease <= out.tol_mono;
}

double metric_h2(const FlowTrajectory& tr, std::size_t k) {
  double h = std::max(tr.chart.hx(), tr.chart.hy());
  return h * h * std::exp(2 * tr.u[k].max());
}

}  // namespace

MonotoneSeries check_w_monotone(const KernelSolution& sol, double floor_h2) {
  const FlowTrajectory& tr = *sol.traj;
  MonotoneSeries out;
  double hg2 = 0;
  for (std::size_t k = 0; k < sol.size(); ++k) hg2 = std::max(hg2, metric_h2(tr, k));
  for (std::size_t k = 0; k < sol.size(); ++k) {
    if (!(sol.tau[k] > 0) || sol.tau[k] < floor_h2 * hg2 * (1 - 1e-9)) continue;
    out.times.push_back(sol.times[k]);
    out.tau.push_back(sol.tau[k]);
    out.value.push_back(w_of_density(sol.metric(k), tr.s[k], sol.tau[k], sol.u[k]));
  }
  if (out.value.empty()) throw Error("no stored time above the tau floor");
  finish(out, hg2);
  return out;
}

MonotoneSeries check_mu_monotone(const FlowTrajectory& traj, const std::vector<std::size_t>& slices, bool warm_start) {
  MonotoneSeries out;
  std::vector<std::size_t> ks = slices;
  std::sort(ks.begin(), ks.end());
  if (ks.empty()) throw Error("no slices");
  for (std::size_t k : ks) {
    if (k >= traj.size()) throw Error("slice index out of range");
    if (!(traj.T() - traj.times[k] > 0)) throw Error("mu needs tau > 0");
  }
  std::vector<MuResult> res(ks.size());
  auto solve = [&](std::size_t i, const std::optional<ScalarField>& init) {
    std::size_t k = ks[i];
    res[i] = mu_minimize(traj.metric(k), traj.s[k], traj.T() - traj.times[k], init);
  };
  if (warm_start) {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      std::optional<ScalarField> init;
      if (i > 0) init = res[i - 1].w * res[i - 1].w;
      solve(i, init);
    }
  } else {
    tbb::parallel_for(std::size_t(0), ks.size(), [&](std::size_t i) { solve(i, std::nullopt); });
  }
  double hg2 = 0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    out.times.push_back(traj.times[ks[i]]);
    out.tau.push_back(res[i].tau);
    out.value.push_back(res[i].mu);
    out.el_residual.push_back(res[i].el_residual);
    hg2 = std::max(hg2, metric_h2(traj, ks[i]));
  }
  finish(out, hg2);
  return out;
}

UpsilonReport upsilon(const ConformalMetric& m, const ScalarField& s, double tau_max, double tau_min, int per_decade) {
  if (!(tau_min > 0) || !(tau_max >= tau_min) || per_decade < 1) throw Error("invalid tau grid");
  UpsilonReport r;
  for (int k = 0;; ++k) {
    double t = tau_min * std::pow(10.0, double(k) / per_decade);
    if (t > tau_max * (1 + 1e-12)) break;
    r.tau.push_back(t);
  }
  r.mu.resize(r.tau.size());
  tbb::parallel_for(std::size_t(0), r.tau.size(), [&](std::size_t i) { r.mu[i] = mu_minimize(m, s, r.tau[i]).mu; });
  std::size_t best = static_cast<std::size_t>(std::min_element(r.mu.begin(), r.mu.end()) - r.mu.begin());
  r.upsilon = r.mu[best];
  r.tau_at_min = r.tau[best];
  return r;
}

}  // namespace fh

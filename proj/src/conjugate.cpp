#include "flowharnack/conjugate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace fh {

namespace {

constexpr double kPi = 3.14159265358979323846;

int substeps(const FlowTrajectory& traj, std::size_t k) {
  double span = traj.times[k] - traj.times[k - 1];
  return std::max(1, static_cast<int>(std::ceil(span / traj.dt_max - 1e-9)));
}

// e^{-2u_c(t)}; exact at stored times, cubic Hermite in between.
ScalarField inv_conformal_at(const FlowTrajectory& traj, double t) {
  return metric_at(traj, t).metric.inv_conformal();
}

double discrete_mass(const ScalarField& m) {
  double s = 0;
  for (double a : m.v) s += a;
  return s * m.chart.hx() * m.chart.hy();
}

}  // namespace

ScalarField KernelSolution::h(std::size_t k) const {
  if (!(tau[k] > 0)) throw Error("h is undefined at tau = 0");
  double shift = std::log(4 * kPi * tau[k]);
  return map(u[k], [shift](double a) { return -std::log(std::max(a, 1e-300)) - shift; });
}

std::size_t KernelSolution::index_of_tau(double t) const { return traj->index_of(traj->T() - t); }

KernelSolution solve_conjugate(const FlowTrajectory& traj, const ScalarField& init, bool normalize, int n_burn) {
  require_same(traj.chart, init.chart);
  if (init.min() < 0) throw Error("initial data must be nonnegative");
  std::size_t last = traj.size() - 1;
  ScalarField m = init * traj.metric(last).conformal();
  double mass0 = discrete_mass(m);
  if (!(mass0 > 0)) throw Error("initial data vanishes identically");
  if (normalize) m *= 1.0 / mass0;

  KernelSolution sol;
  sol.traj = &traj;
  sol.n_burn = n_burn;
  sol.times = traj.times;
  sol.tau.resize(traj.size());
  sol.u.resize(traj.size());
  sol.mass.resize(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) sol.tau[k] = traj.T() - traj.times[k];

  Stencil st = traj.stencil;
  auto record = [&](std::size_t k, const ScalarField& w) {
    sol.u[k] = m * w;
    sol.mass[k] = discrete_mass(m);
  };
  ScalarField w_hi = traj.metric(last).inv_conformal();
  record(last, w_hi);
  // compactly supported data reaches every cell after `fill` steps (4 or 8 cells per RK4 step)
  int reach = st == Stencil::Second ? 4 : 8;
  std::size_t fill = static_cast<std::size_t>(std::max(n_burn, (traj.chart.nx / 2 + traj.chart.ny / 2 + reach - 1) / reach));

  for (std::size_t k = last; k >= 1; --k) {
    int ns = substeps(traj, k);
    double t_hi = traj.times[k], d = (t_hi - traj.times[k - 1]) / ns;
    for (int s = 0; s < ns; ++s) {
      double t0 = t_hi - s * d, t1 = s + 1 == ns ? traj.times[k - 1] : t0 - d;
      ScalarField w_mid = inv_conformal_at(traj, 0.5 * (t0 + t1));
      ScalarField w_lo = s + 1 == ns ? traj.metric(k - 1).inv_conformal() : inv_conformal_at(traj, t1);
      ScalarField k1 = flat_laplacian(m * w_hi, st);
      ScalarField k2 = flat_laplacian((m + (d / 2) * k1) * w_mid, st);
      ScalarField k3 = flat_laplacian((m + (d / 2) * k2) * w_mid, st);
      ScalarField k4 = flat_laplacian((m + d * k3) * w_lo, st);
      for (std::size_t i = 0; i < m.size(); ++i)
        m.v[i] += d / 6 * (k1.v[i] + 2 * k2.v[i] + 2 * k3.v[i] + k4.v[i]);
      ++sol.steps;
      double mn = m.min();
      if (mn < 0 || !m.all_finite() || (mn == 0 && sol.steps > fill))
        throw PositivityLoss("conjugate solution lost positivity (dt too large)", t1);
      w_hi = std::move(w_lo);
    }
    record(k - 1, w_hi);
  }
  return sol;
}

KernelSolution solve_kernel(const FlowTrajectory& traj, int i, int j, int n_burn) {
  const GridChart& c = traj.chart;
  if (i < 0 || j < 0 || i >= c.nx || j >= c.ny) throw Error("basepoint outside the grid");
  ScalarField init(c);
  double w = traj.metric(traj.size() - 1).inv_conformal().at(i, j);
  init.at(i, j) = w / (c.hx() * c.hy());
  KernelSolution sol = solve_conjugate(traj, init, true, n_burn);
  sol.base = std::make_pair(i, j);
  return sol;
}

ForwardSolution solve_forward(const FlowTrajectory& traj, const ScalarField& phi0) {
  require_same(traj.chart, phi0.chart);
  if (!(phi0.min() > 0)) throw Error("forward initial data must be positive");
  ForwardSolution out;
  out.traj = &traj;
  out.times = traj.times;
  out.phi.push_back(phi0);
  ScalarField p = phi0;
  Stencil st = traj.stencil;
  ScalarField w_lo = traj.metric(0).inv_conformal();
  for (std::size_t k = 1; k < traj.size(); ++k) {
    int ns = substeps(traj, k);
    double t_lo = traj.times[k - 1], d = (traj.times[k] - t_lo) / ns;
    for (int s = 0; s < ns; ++s) {
      double t0 = t_lo + s * d, t1 = s + 1 == ns ? traj.times[k] : t0 + d;
      ScalarField w_mid = inv_conformal_at(traj, 0.5 * (t0 + t1));
      ScalarField w_hi = s + 1 == ns ? traj.metric(k).inv_conformal() : inv_conformal_at(traj, t1);
      ScalarField k1 = w_lo * flat_laplacian(p, st);
      ScalarField k2 = w_mid * flat_laplacian(p + (d / 2) * k1, st);
      ScalarField k3 = w_mid * flat_laplacian(p + (d / 2) * k2, st);
      ScalarField k4 = w_hi * flat_laplacian(p + d * k3, st);
      for (std::size_t i = 0; i < p.size(); ++i)
        p.v[i] += d / 6 * (k1.v[i] + 2 * k2.v[i] + 2 * k3.v[i] + k4.v[i]);
      if (!(p.min() > 0) || !p.all_finite())
        throw PositivityLoss("forward heat solution lost positivity", t1);
      w_lo = std::move(w_hi);
    }
    out.phi.push_back(p);
  }
  return out;
}

std::vector<double> duality_pairing(const KernelSolution& sol, const ForwardSolution& fwd) {
  if (sol.traj != fwd.traj) throw Error("solutions live on different trajectories");
  std::vector<double> out(sol.size());
  for (std::size_t k = 0; k < sol.size(); ++k) out[k] = integrate(sol.metric(k), sol.u[k] * fwd.phi[k]);
  return out;
}

DistanceField distance2_from(const ConformalMetric& m, int i0, int j0) {
  const GridChart& c = m.chart();
  DistanceField out{ScalarField(c), true};
  double u0 = m.u[0];
  bool constant = std::all_of(m.u.v.begin(), m.u.v.end(), [u0](double a) { return a == u0; });
  if (constant) {
    double s = std::exp(2 * u0);
    for (int j = 0; j < c.ny; ++j)
      for (int i = 0; i < c.nx; ++i) out.d2.at(i, j) = s * torus_dist2(c, c.x(i), c.y(j), c.x(i0), c.y(j0));
    return out;
  }
  out.exact = false;
  ScalarField e = map(m.u, [](double a) { return std::exp(a); });
  std::vector<double> dist(c.size(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  std::size_t src = c.idx(i0, j0);
  dist[src] = 0;
  pq.push({0.0, src});
  const int di[8] = {1, -1, 0, 0, 1, 1, -1, -1}, dj[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!pq.empty()) {
    auto [d, k] = pq.top();
    pq.pop();
    if (d > dist[k]) continue;
    int i = static_cast<int>(k % c.nx), j = static_cast<int>(k / c.nx);
    for (int n = 0; n < 8; ++n) {
      std::size_t q = c.idx(i + di[n], j + dj[n]);
      double len = std::hypot(di[n] * c.hx(), dj[n] * c.hy()) * 0.5 * (e.v[k] + e.v[q]);
      if (d + len < dist[q]) {
        dist[q] = d + len;
        pq.push({dist[q], q});
      }
    }
  }
  for (std::size_t k = 0; k < c.size(); ++k) out.d2.v[k] = dist[k] * dist[k];
  return out;
}

AsymptoticsReport check_asymptotics(const KernelSolution& ker, double tau_probe, double radius_factor, double tol) {
  if (!ker.base) throw Error("asymptotics need a kernel with a basepoint");
  std::size_t k = ker.index_of_tau(tau_probe);
  AsymptoticsReport r;
  r.tau = ker.tau[k];
  r.tol = tol;
  r.steps = r.tau / ker.traj->dt_max;
  if (r.steps < ker.n_burn) throw Error("probe time shorter than the burn-in");
  auto [i0, j0] = *ker.base;
  DistanceField df = distance2_from(ker.metric(k), i0, j0);
  r.trend_only = !df.exact;
  r.disc_radius2 = radius_factor * r.tau;
  double pre = 4 * kPi * r.tau;
  r.diag_ratio = pre * ker.u[k].at(i0, j0);
  for (std::size_t q = 0; q < df.d2.size(); ++q) {
    if (df.d2.v[q] > r.disc_radius2) continue;
    double ratio = pre * ker.u[k].v[q] * std::exp(df.d2.v[q] / (4 * r.tau));
    r.max_ratio_err = std::max(r.max_ratio_err, std::abs(ratio - 1));
  }
  r.pass = r.max_ratio_err <= tol;
  return r;
}

}  // namespace fh

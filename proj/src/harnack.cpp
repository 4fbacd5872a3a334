#include "flowharnack/harnack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fh {

namespace {

struct Slice {
  std::size_t k;
  ConformalMetric m;
  double tau;
};

Slice slice(const KernelSolution& sol, double t) {
  std::size_t k = sol.traj->index_of(t);
  if (!(sol.tau[k] > 0)) throw Error("tau must be positive");
  return {k, sol.metric(k), sol.tau[k]};
}

ScalarField lhs_at(const KernelSolution& sol, std::size_t k) {
  ConformalMetric m = sol.metric(k);
  ScalarField h = sol.h(k);
  double tau = sol.tau[k];
  return tau * (2.0 * laplace_beltrami(m, h) - grad_norm_sq(m, h) + sol.traj->s[k]) + h - double(kDim);
}

ScalarField v_at(const KernelSolution& sol, std::size_t k) { return lhs_at(sol, k) * sol.u[k]; }

std::size_t interior(const KernelSolution& sol, double t) {
  std::size_t k = sol.traj->index_of(t);
  if (k == 0 || k + 1 >= sol.size() || !(sol.tau[k + 1] > 0))
    throw Error("time derivative needs stored neighbours with tau > 0");
  return k;
}

// Box* w = -dw/dt - Delta w + S w at interior index k
ScalarField box_star(const KernelSolution& sol, std::size_t k, const ScalarField& wm, const ScalarField& w0,
                     const ScalarField& wp) {
  const FlowTrajectory& tr = *sol.traj;
  ScalarField dwdt = centered_difference(wm, w0, wp, tr.times[k - 1], tr.times[k], tr.times[k + 1]);
  return -dwdt - laplace_beltrami(sol.metric(k), w0) + tr.s[k] * w0;
}

}  // namespace

ScalarField harnack_lhs(const KernelSolution& sol, double t) { return lhs_at(sol, slice(sol, t).k); }

ScalarField v_field(const KernelSolution& sol, double t) { return v_at(sol, slice(sol, t).k); }

IdentityResidual identity_residual(const KernelSolution& sol, double t) {
  std::size_t k = interior(sol, t);
  const FlowTrajectory& tr = *sol.traj;
  ScalarField lhs = box_star(sol, k, v_at(sol, k - 1), v_at(sol, k), v_at(sol, k + 1));

  ConformalMetric m = sol.metric(k);
  double tau = sol.tau[k];
  ScalarField f = sol.h(k);
  SymTensor2Field alpha = flow_alpha(m, tr.alpha(k));
  SymTensor2Field q = alpha + hessian(m, f) - (0.5 / tau) * metric_tensor(m);
  VectorField gf = gradient(m, f);
  ScalarField d = eval_dalpha_generic(tr, tr.times[k], gf, AlphaChoice::Flow, DsdtSource::Difference).value;
  ScalarField rhs = -2.0 * tau * sol.u[k] * tensor_norm_sq(m, q) - tau * sol.u[k] * d;
  return {(lhs - rhs).max_abs(), rhs.max_abs()};
}

double ulogu_residual(const KernelSolution& sol, double t) {
  std::size_t k = interior(sol, t);
  auto ulogu = [&](std::size_t j) { return sol.u[j] * log(sol.u[j]); };
  ScalarField b = box_star(sol, k, ulogu(k - 1), ulogu(k), ulogu(k + 1));
  ConformalMetric m = sol.metric(k);
  ScalarField rhs = sol.u[k] * grad_norm_sq(m, log(sol.u[k])) + sol.u[k] * sol.traj->s[k];
  return (-b - rhs).max_abs();
}

RhoSeries rho_phi(const KernelSolution& ker, const ForwardSolution& fwd, int min_steps, double tol_limit) {
  if (ker.traj != fwd.traj) throw Error("solutions live on different trajectories");
  RhoSeries r;
  r.tol_limit = tol_limit;
  double floor = min_steps * ker.traj->dt_max * (1 - 1e-9);
  for (std::size_t k = 0; k < ker.size(); ++k) {
    if (!(ker.tau[k] > 0) || ker.tau[k] < floor) continue;
    r.times.push_back(ker.times[k]);
    r.tau.push_back(ker.tau[k]);
    r.rho.push_back(integrate(ker.metric(k), v_at(ker, k) * fwd.phi[k]));
  }
  if (r.rho.empty()) throw Error("no stored time above the tau floor");
  double scale = 0;
  for (double x : r.rho) scale = std::max(scale, std::abs(x));
  r.tol_mono = 1e-4 * scale;
  for (std::size_t i = 1; i < r.rho.size(); ++i) r.worst_decrease = std::max(r.worst_decrease, r.rho[i - 1] - r.rho[i]);
  r.monotone = r.worst_decrease <= r.tol_mono;
  r.final_abs = std::abs(r.rho.back());
  r.limit_ok = r.final_abs <= tol_limit;
  return r;
}

double lemma33_integral(const KernelSolution& ker, const ForwardSolution& fwd, double t) {
  Slice s = slice(ker, t);
  return integrate(s.m, (ker.h(s.k) - 0.5 * kDim) * ker.u[s.k] * fwd.phi[s.k]);
}

GradientEstimateReport gradient_estimate_check(const KernelSolution& sol, const CurvatureBounds& b, double tau_end) {
  const FlowTrajectory& tr = *sol.traj;
  if (!(tau_end > 0) || tau_end > std::min(1.0, tr.T()) * (1 + 1e-12))
    throw Error("window end must satisfy 0 < tau <= min(1, T)");
  std::size_t k_end = sol.index_of_tau(tau_end);
  std::size_t k_start = tr.nearest_index(tr.T() - 0.5 * sol.tau[k_end]);
  GradientEstimateReport r;
  r.tau_end = sol.tau[k_end];
  r.tau_start = sol.tau[k_start];
  r.sigma = r.tau_end - r.tau_start;
  r.steps = static_cast<int>(std::lround(r.sigma / tr.dt_max));
  if (k_start <= k_end || r.steps < 5) throw Error("gradient-estimate window shorter than 5 steps");

  const double n = kDim;
  r.A = 2 * b.k1 + (2 + n) * b.k2 + 1;
  r.B = std::exp(b.k4) - 1;
  r.C1 = r.A + r.B + r.A * r.B;
  r.C2 = n * b.k2 + 0.5 * b.k3;
  for (std::size_t k = k_end; k <= k_start; ++k) r.Q = std::max(r.Q, sol.u[k].max());

  ConformalMetric m = sol.metric(k_end);
  const ScalarField& q = sol.u[k_end];
  ScalarField g2 = grad_norm_sq(m, q);
  r.worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.size(); ++i) {
    double lhs = r.sigma * g2.v[i] / (q.v[i] * q.v[i]);
    double rhs = (1 + r.C1 * r.sigma) * (std::log(r.Q / q.v[i]) + r.C2 * r.sigma);
    r.max_lhs = std::max(r.max_lhs, lhs);
    r.worst = std::max(r.worst, lhs - rhs);
  }
  r.pass = r.worst <= 0;
  return r;
}

LinfReport linf_bound_check(const KernelSolution& sol) {
  LinfReport r;
  double cap = std::min(1.0, sol.traj->T());
  for (std::size_t k = 0; k < sol.size(); ++k) {
    double tau = sol.tau[k];
    if (!(tau > 0) || tau > cap * (1 + 1e-12)) continue;
    double v = std::pow(tau, 0.5 * kDim) * sol.u[k].max();
    r.tau.push_back(tau);
    r.scaled_max.push_back(v);
    if (v > r.c_emp) {
      r.c_emp = v;
      r.tau_at_max = tau;
    }
  }
  return r;
}

}  // namespace fh

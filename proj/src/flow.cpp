#include "flowharnack/flow.hpp"

#include <algorithm>
#include <cmath>

namespace fh {

AlphaSnapshot FlowTrajectory::alpha(std::size_t k) const {
  ConformalMetric g0 = metric(0);
  return make_alpha(model, metric(k), aux_at(k), times[k], &g0);
}

std::size_t FlowTrajectory::index_of(double t) const {
  std::size_t k = nearest_index(t);
  if (std::abs(times[k] - t) > 1e-9 * std::max(1.0, std::abs(T())))
    throw Error("time " + std::to_string(t) + " is not a stored trajectory time");
  return k;
}

std::size_t FlowTrajectory::nearest_index(double t) const {
  if (t < -1e-12 || t > T() * (1 + 1e-12)) throw Error("time outside trajectory");
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end()) return times.size() - 1;
  std::size_t k = it - times.begin();
  if (k > 0 && t - times[k - 1] < times[k] - t) --k;
  return k;
}

namespace {

double cfl_dt(const GridChart& c, const ScalarField& u, double safety) {
  double h = std::min(c.hx(), c.hy());
  return safety * h * h * std::exp(2 * u.min()) / 4;
}

double stability_limit(const GridChart& c, Stencil s, const ScalarField& u) {
  double lam = 1 / (c.hx() * c.hx()) + 1 / (c.hy() * c.hy());
  lam *= s == Stencil::Second ? 4.0 : 16.0 / 3.0;
  return 2.78 / (lam * std::exp(-2 * u.min()));
}

struct State {
  ScalarField u;
  std::optional<ScalarField> phi;
};

State axpy(const State& a, double h, const State& k) {
  State r{a.u + h * k.u, std::nullopt};
  if (a.phi) r.phi = *a.phi + h * *k.phi;
  return r;
}

}  // namespace

std::size_t estimate_trajectory_bytes(const GridChart& c, const Model& model, const ScalarField& u0, double T,
                                      const DtPolicy& p, int store_stride) {
  double dt = p.kind == DtPolicy::Kind::Fixed ? p.dt : cfl_dt(c, u0, p.safety);
  double steps = std::ceil(T / dt);
  double stored = std::floor(steps / std::max(1, store_stride)) + 2;
  int fields = model.has_aux() ? 3 : 2;
  return static_cast<std::size_t>(stored * fields * c.size() * sizeof(double));
}

FlowTrajectory evolve(const Model& model, const ConformalMetric& g0, const std::optional<ScalarField>& aux0,
                      double T, const DtPolicy& policy, int store_stride) {
  if (!(T > 0)) throw Error("final time must be positive");
  if (store_stride < 1) throw Error("store_stride must be positive");
  const GridChart& c = g0.chart();
  c.validate();
  if (model.has_aux() && !aux0) throw Error("extended Ricci flow needs the scalar field phi");
  if (policy.kind == DtPolicy::Kind::Fixed && !(policy.dt > 0)) throw Error("fixed dt must be positive");

  FlowTrajectory traj;
  traj.chart = c;
  traj.stencil = g0.stencil;
  traj.model = model;
  traj.store_stride = store_stride;

  auto rhs = [&](double t, const State& st) {
    check_nondegenerate(st.u, t);
    ConformalMetric m(st.u, g0.stencil);
    const ScalarField* ph = st.phi ? &*st.phi : nullptr;
    AlphaSnapshot a = make_alpha(model, m, ph, t, &g0);
    if (!model.conformal_project && model.kind != ModelKind::Ricci && model.kind != ModelKind::Static &&
        trace_free_ratio(a) > 1e-12)
      throw Error("alpha has a trace-free part and conformal_project is off");
    State k{-0.5 * a.trace_s, std::nullopt};
    if (st.phi) k.phi = laplace_beltrami(m, *st.phi);
    return k;
  };
  auto store = [&](double t, const State& st) {
    traj.times.push_back(t);
    traj.u.push_back(st.u);
    if (st.phi) traj.aux.push_back(*st.phi);
    ConformalMetric m(st.u, g0.stencil);
    traj.s.push_back(make_alpha(model, m, st.phi ? &*st.phi : nullptr, t, &g0).trace_s);
  };

  State st{g0.u, model.has_aux() ? aux0 : std::nullopt};
  double t = 0;
  store(t, st);
  std::size_t n = 0;
  double fixed_dt = 0;
  if (policy.kind == DtPolicy::Kind::Fixed) {
    double steps = std::ceil(T / policy.dt - 1e-9);
    fixed_dt = T / steps;
  }
  while (t < T) {
    double dt;
    if (policy.kind == DtPolicy::Kind::Fixed) {
      dt = fixed_dt;
      if (dt > stability_limit(c, g0.stencil, st.u)) throw CflViolation("time step above stability limit", t);
    } else {
      dt = cfl_dt(c, st.u, policy.safety);
    }
    double remaining = T - t;
    double left = std::ceil(remaining / dt - 1e-9);
    dt = remaining / left;
    bool last = left <= 1;

    State k1 = rhs(t, st);
    State k2 = rhs(t + dt / 2, axpy(st, dt / 2, k1));
    State k3 = rhs(t + dt / 2, axpy(st, dt / 2, k2));
    State k4 = rhs(t + dt, axpy(st, dt, k3));
    State nx = axpy(st, dt / 6, k1);
    nx = axpy(nx, dt / 3, k2);
    nx = axpy(nx, dt / 3, k3);
    nx = axpy(nx, dt / 6, k4);
    st = std::move(nx);
    t = last ? T : t + dt;
    ++n;
    traj.dt_max = std::max(traj.dt_max, dt);
    check_nondegenerate(st.u, t);
    if (last || n % store_stride == 0) store(t, st);
    if (last) break;
  }
  traj.steps = n;
  return traj;
}

MetricSample metric_at(const FlowTrajectory& traj, double t, TimeInterp mode) {
  if (t < -1e-12 * traj.T() || t > traj.T() * (1 + 1e-12)) throw Error("time outside trajectory");
  t = std::clamp(t, 0.0, traj.T());
  auto it = std::upper_bound(traj.times.begin(), traj.times.end(), t);
  std::size_t k1 = std::min<std::size_t>(it - traj.times.begin(), traj.size() - 1);
  if (k1 == 0) k1 = 1;
  std::size_t k0 = k1 - 1;
  double t0 = traj.times[k0], t1 = traj.times[k1], dt = t1 - t0;
  double th = (t - t0) / dt;
  MetricSample out;
  if (th <= 0 || th >= 1) {
    std::size_t k = th <= 0 ? k0 : k1;
    out.metric = traj.metric(k);
    if (!traj.aux.empty()) out.aux = traj.aux[k];
    return out;
  }
  ScalarField u(traj.chart);
  if (mode == TimeInterp::Cubic) {
    double h00 = (1 + 2 * th) * (1 - th) * (1 - th), h10 = th * (1 - th) * (1 - th);
    double h01 = th * th * (3 - 2 * th), h11 = th * th * (th - 1);
    for (std::size_t i = 0; i < u.size(); ++i)
      u.v[i] = h00 * traj.u[k0].v[i] + h01 * traj.u[k1].v[i] -
               0.5 * dt * (h10 * traj.s[k0].v[i] + h11 * traj.s[k1].v[i]);
  } else {
    u = (1 - th) * traj.u[k0] + th * traj.u[k1];
  }
  out.metric = ConformalMetric(std::move(u), traj.stencil);
  if (!traj.aux.empty()) out.aux = (1 - th) * traj.aux[k0] + th * traj.aux[k1];
  return out;
}

CurvatureBounds measure_bounds(const FlowTrajectory& traj) {
  CurvatureBounds b;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    ConformalMetric m = traj.metric(k);
    const ScalarField& s = traj.s[k];
    b.k1 = std::max(b.k1, -gauss_curvature(m).min());
    b.k2 = std::max(b.k2, -0.5 * s.min());
    b.alpha_upper = std::max(b.alpha_upper, 0.5 * s.max());
    b.k3 = std::max(b.k3, grad_norm_sq(m, s).max());
    b.k4 = std::max(b.k4, s.max_abs());
  }
  return b;
}

ScalarField centered_difference(const ScalarField& fm, const ScalarField& f0, const ScalarField& fp, double tm,
                                double t0, double tp) {
  double a = t0 - tm, b = tp - t0;
  double wm = -b / (a * (a + b)), w0 = (b - a) / (a * b), wp = a / (b * (a + b));
  ScalarField out(f0.chart);
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = wm * fm.v[i] + w0 * f0.v[i] + wp * fp.v[i];
  return out;
}

}  // namespace fh

#include "flowharnack/alpha.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "flowharnack/flow.hpp"

namespace fh {

std::string Model::tag() const {
  switch (kind) {
    case ModelKind::Ricci: return "ricci";
    case ModelKind::Static: return "static";
    case ModelKind::ExtendedRicci: return "extended-ricci";
    case ModelKind::Custom: return "custom";
  }
  return "?";
}

namespace {

SymTensor2Field tabulated(const CustomSchedule& c, double t) {
  if (c.times.empty() || c.times.size() != c.tensors.size())
    throw Error("custom schedule has no tensor samples");
  if (t <= c.times.front()) return c.tensors.front();
  if (t >= c.times.back()) return c.tensors.back();
  auto it = std::upper_bound(c.times.begin(), c.times.end(), t);
  std::size_t k = it - c.times.begin();
  double th = (t - c.times[k - 1]) / (c.times[k] - c.times[k - 1]);
  return (1 - th) * c.tensors[k - 1] + th * c.tensors[k];
}

}  // namespace

AlphaSnapshot make_alpha(const Model& model, const ConformalMetric& m, const ScalarField* aux, double t,
                         const ConformalMetric* initial) {
  AlphaSnapshot a;
  a.model_tag = model.kind;
  a.coupling = model.coupling;
  const GridChart& c = m.chart();
  switch (model.kind) {
    case ModelKind::Static:
      a.alpha = SymTensor2Field(c);
      a.trace_s = ScalarField(c);
      break;
    case ModelKind::Ricci:
      a.alpha = ricci(m);
      a.trace_s = scalar_curvature(m);
      break;
    case ModelKind::ExtendedRicci: {
      if (!aux) throw Error("extended Ricci flow needs the scalar field phi");
      if (!(model.coupling > 0)) throw Error("extended Ricci flow needs coupling a > 0");
      require_same(c, aux->chart);
      VectorField dphi = gradient(m, *aux);
      a.alpha = ricci(m) - model.coupling * outer(dphi);
      a.trace_s = scalar_curvature(m) - model.coupling * norm_sq(m, dphi);
      a.aux = *aux;
      break;
    }
    case ModelKind::Custom: {
      const CustomSchedule& cs = model.custom;
      if (cs.kind == CustomSchedule::Kind::ScaledInitial) {
        if (!initial) throw Error("scaled-initial schedule needs the initial metric");
        a.alpha = cs.lambda * metric_tensor(*initial);
      } else if (cs.kind == CustomSchedule::Kind::ScaledCurrent) {
        a.alpha = cs.lambda * metric_tensor(m);
      } else {
        a.alpha = tabulated(cs, t);
        require_same(c, a.alpha.chart());
      }
      a.trace_s = trace(m, a.alpha);
      break;
    }
  }
  return a;
}

double trace_free_ratio(const AlphaSnapshot& a) {
  double tf = 0, sz = 0;
  for (std::size_t k = 0; k < a.alpha.t11.size(); ++k) {
    tf = std::max({tf, 0.5 * std::abs(a.alpha.t11.v[k] - a.alpha.t22.v[k]), std::abs(a.alpha.t12.v[k])});
    sz = std::max({sz, std::abs(a.alpha.t11.v[k]), std::abs(a.alpha.t22.v[k])});
  }
  return sz > 0 ? tf / sz : 0.0;
}

SymTensor2Field flow_alpha(const ConformalMetric& m, const AlphaSnapshot& a) {
  ScalarField half = 0.5 * (m.conformal() * a.trace_s);
  return {half, ScalarField(m.chart()), half};
}

std::optional<ScalarField> analytic_dsdt(const Model& model, const ConformalMetric& m, const AlphaSnapshot& a) {
  switch (model.kind) {
    case ModelKind::Static:
      return ScalarField(m.chart());
    case ModelKind::ExtendedRicci: {
      // dS/dt = 2|alpha|^2 + 2 Delta S - 2 div div alpha - 2a <grad Delta phi, grad phi>
      const ScalarField& phi = *a.aux;
      ScalarField lphi = laplace_beltrami(m, phi);
      ScalarField out = 2.0 * tensor_norm_sq(m, a.alpha) + 2.0 * laplace_beltrami(m, a.trace_s) -
                        2.0 * divergence(m, divergence_sym(m, a.alpha)) -
                        (2.0 * model.coupling) * inner(m, gradient(m, lphi), gradient(m, phi));
      return out;
    }
    case ModelKind::Custom:
      // alpha = lambda g0: S = 2 lambda e^{2(u0-u)} and du/dt = -S/2, so dS/dt = S^2.
      if (model.custom.kind == CustomSchedule::Kind::ScaledInitial) return a.trace_s * a.trace_s;
      if (model.custom.kind == CustomSchedule::Kind::ScaledCurrent) return ScalarField(m.chart());
      return std::nullopt;
    case ModelKind::Ricci:
      return std::nullopt;
  }
  return std::nullopt;
}

DalphaEvaluation eval_dalpha(const ConformalMetric& m, const SymTensor2Field& alpha, const ScalarField& s,
                             const ScalarField& dsdt, const VectorField& v) {
  DalphaEvaluation d;
  d.parts[0] = dsdt;
  d.parts[1] = -laplace_beltrami(m, s);
  d.parts[2] = -2.0 * tensor_norm_sq(m, alpha);
  d.parts[3] = 2.0 * tensor_apply(m, ricci(m) - alpha, v);
  d.parts[4] = inner(m, 4.0 * divergence_sym(m, alpha) - 2.0 * gradient(m, s), v);
  d.value = d.parts[0];
  for (int i = 1; i < 5; ++i) d.value += d.parts[i];
  return d;
}

ScalarField dalpha_extended_closed_form(const ConformalMetric& m, const ScalarField& phi, double a,
                                        const VectorField& v) {
  ScalarField r = laplace_beltrami(m, phi) - inner(m, gradient(m, phi), v);
  return (2 * a) * (r * r);
}

DalphaEvaluation eval_dalpha_generic(const FlowTrajectory& traj, double t, const VectorField& v,
                                     AlphaChoice which, DsdtSource src) {
  std::size_t k = traj.index_of(t);
  ConformalMetric m = traj.metric(k);
  AlphaSnapshot a = traj.alpha(k);
  SymTensor2Field alpha = which == AlphaChoice::Flow ? flow_alpha(m, a) : a.alpha;

  std::optional<ScalarField> dsdt;
  bool analytic_ok = which == AlphaChoice::Model || traj.model.kind != ModelKind::ExtendedRicci;
  if (src != DsdtSource::Difference && analytic_ok) dsdt = analytic_dsdt(traj.model, m, a);
  if (src == DsdtSource::Analytic && !dsdt) throw Error("model has no analytic dS/dt");
  if (!dsdt) {
    if (k == 0 || k + 1 >= traj.size()) throw Error("dS/dt needs an interior trajectory time");
    dsdt = centered_difference(traj.s[k - 1], traj.s[k], traj.s[k + 1], traj.times[k - 1], traj.times[k],
                               traj.times[k + 1]);
  }
  return eval_dalpha(m, alpha, a.trace_s, *dsdt, v);
}

DalphaCertificate dalpha_nonneg_certificate(const FlowTrajectory& traj, const std::vector<double>& times,
                                            const std::vector<VectorField>& extra, int random_fields,
                                            unsigned seed) {
  DalphaCertificate cert;
  cert.min_d = std::numeric_limits<double>::infinity();
  const GridChart& c = traj.chart;
  double h2 = std::max(c.hx(), c.hy());
  h2 *= h2;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(0.0, 2 * M_PI);
  std::vector<ScalarField> angles;
  for (int r = 0; r < random_fields; ++r) {
    ScalarField th(c);
    for (double& x : th.v) x = ang(rng);
    angles.push_back(std::move(th));
  }
  double alpha_scale = 0, dt2 = 0;
  bool any = false;
  for (double t : times) {
    std::size_t k = traj.index_of(t);
    ConformalMetric m = traj.metric(k);
    AlphaSnapshot a = traj.alpha(k);
    bool analytic = analytic_dsdt(traj.model, m, a).has_value();
    if (!analytic && (k == 0 || k + 1 >= traj.size())) continue;
    any = true;
    if (k > 0) dt2 = std::max(dt2, std::pow(traj.times[k] - traj.times[k - 1], 2));
    if (k + 1 < traj.size()) dt2 = std::max(dt2, std::pow(traj.times[k + 1] - traj.times[k], 2));
    alpha_scale = std::max(alpha_scale, tensor_norm_sq(m, a.alpha).max_abs());

    ScalarField eu = map(m.u, [](double x) { return std::exp(x); });
    ScalarField zero(c);
    std::vector<std::pair<std::string, VectorField>> dirs;
    dirs.emplace_back("0", VectorField(c));
    dirs.emplace_back("+e1", VectorField(eu, zero));
    dirs.emplace_back("-e1", VectorField(-eu, zero));
    dirs.emplace_back("+e2", VectorField(zero, eu));
    dirs.emplace_back("-e2", VectorField(zero, -eu));
    for (std::size_t i = 0; i < extra.size(); ++i) dirs.emplace_back("extra" + std::to_string(i), extra[i]);
    for (std::size_t r = 0; r < angles.size(); ++r) {
      ScalarField cx = eu * map(angles[r], [](double x) { return std::cos(x); });
      ScalarField cy = eu * map(angles[r], [](double x) { return std::sin(x); });
      dirs.emplace_back("random" + std::to_string(r), VectorField(cx, cy));
    }
    if (traj.model.kind == ModelKind::ExtendedRicci) {
      VectorField dphi = gradient(m, *a.aux);
      ScalarField g2 = norm_sq(m, dphi);
      ScalarField lphi = laplace_beltrami(m, *a.aux);
      ScalarField coef(c);
      // pointwise minimizer along grad phi, clipped to |V|_g <= 1 like the other probes
      for (std::size_t i = 0; i < coef.size(); ++i) {
        if (g2.v[i] <= 1e-12) continue;
        double cv = lphi.v[i] / g2.v[i], lim = 1.0 / std::sqrt(g2.v[i]);
        coef.v[i] = std::clamp(cv, -lim, lim);
      }
      dirs.emplace_back("minimizer", coef * dphi);
    }
    for (auto& [name, v] : dirs) {
      DalphaEvaluation d = eval_dalpha_generic(traj, traj.times[k], v);
      double mn = d.value.min();
      if (mn < cert.min_d) {
        cert.min_d = mn;
        cert.argmin_field = name;
        cert.argmin_time = traj.times[k];
      }
    }
  }
  if (!any) throw Error("no probe time admits a D evaluation");
  cert.tol_d = 10 * (h2 + dt2) * alpha_scale;
  cert.nonnegative = cert.min_d >= -cert.tol_d;
  return cert;
}

}  // namespace fh

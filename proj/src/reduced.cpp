#include "flowharnack/reduced.hpp"

#include <gsl/gsl_blas.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace fh {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDimR = 2.0;

// Catmull-Rom weights and their derivatives at t in [0, 1)
void cr_weights(double t, double w[4], double d[4]) {
  double t2 = t * t, t3 = t2 * t;
  w[0] = 0.5 * (-t3 + 2 * t2 - t);
  w[1] = 0.5 * (3 * t3 - 5 * t2 + 2);
  w[2] = 0.5 * (-3 * t3 + 4 * t2 + t);
  w[3] = 0.5 * (t3 - t2);
  d[0] = 0.5 * (-3 * t2 + 4 * t - 1);
  d[1] = 0.5 * (9 * t2 - 10 * t);
  d[2] = 0.5 * (-9 * t2 + 8 * t + 1);
  d[3] = 0.5 * (3 * t2 - 2 * t);
}

// field at flow time t, linear between stored snapshots
ScalarField at_time(const FlowTrajectory& tr, const std::vector<ScalarField>& f, double t) {
  const auto& ts = tr.times;
  if (t <= ts.front()) return f.front();
  if (t >= ts.back()) return f.back();
  std::size_t k = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin()) - 1;
  double a = (t - ts[k]) / (ts[k + 1] - ts[k]);
  if (a == 0) return f[k];
  return (1 - a) * f[k] + a * f[k + 1];
}

double metric_h2(const FlowTrajectory& tr) {
  double h = std::max(tr.chart.hx(), tr.chart.hy());
  double umax = -std::numeric_limits<double>::infinity();
  for (const auto& u : tr.u) umax = std::max(umax, u.max());
  return h * h * std::exp(2 * umax);
}

Point2 grid_point(const GridChart& c, GridPoint p) { return {c.x(p.first), c.y(p.second)}; }

// Interior nodes are x = x0 + B z with B the discrete sine basis scaled by the inverse square root of
// the eigenvalues of the kinetic Hessian (1/ds) tridiag(-1, 2, -1); L is then close to |z|^2 / 2 in z.
struct GslCtx {
  const CurveField* field;
  std::vector<Point2> base;
  std::vector<Point2> nodes;
  std::vector<double> B;  // (m - 1) x (m - 1), row i = interior node i + 1
  int n;
};

void unpack(const gsl_vector* v, GslCtx& c) {
  for (int i = 0; i < c.n; ++i) {
    double x = c.base[i + 1][0], y = c.base[i + 1][1];
    for (int k = 0; k < c.n; ++k) {
      double b = c.B[i * c.n + k];
      x += b * gsl_vector_get(v, 2 * k);
      y += b * gsl_vector_get(v, 2 * k + 1);
    }
    c.nodes[i + 1] = {x, y};
  }
}

double eval(const gsl_vector* v, GslCtx& c, gsl_vector* g) {
  unpack(v, c);
  if (!g) return c.field->length(c.nodes);
  std::vector<Point2> grad;
  double L = c.field->length(c.nodes, &grad);
  for (int k = 0; k < c.n; ++k) {
    double gx = 0, gy = 0;
    for (int i = 0; i < c.n; ++i) {
      gx += c.B[i * c.n + k] * grad[i + 1][0];
      gy += c.B[i * c.n + k] * grad[i + 1][1];
    }
    gsl_vector_set(g, 2 * k, gx);
    gsl_vector_set(g, 2 * k + 1, gy);
  }
  return L;
}

double gsl_f(const gsl_vector* v, void* p) { return eval(v, *static_cast<GslCtx*>(p), nullptr); }
void gsl_df(const gsl_vector* v, void* p, gsl_vector* g) { eval(v, *static_cast<GslCtx*>(p), g); }
void gsl_fdf(const gsl_vector* v, void* p, double* f, gsl_vector* g) { *f = eval(v, *static_cast<GslCtx*>(p), g); }

struct Optimized {
  std::vector<Point2> nodes;
  double L;
  int iterations;
  bool converged;
  double grad_norm;
};

Optimized optimize(const CurveField& field, std::vector<Point2> nodes, const CurveOptions& opt) {
  int m = static_cast<int>(nodes.size()) - 1;
  Optimized out{nodes, field.length(nodes), 0, false, 0.0};
  if (m < 2) {
    out.converged = true;
    return out;
  }
  GslCtx ctx{&field, nodes, nodes, std::vector<double>((m - 1) * (m - 1)), m - 1};
  double ds = (field.frozen() ? 1.0 : std::sqrt(field.tau1())) / m;
  for (int k = 1; k < m; ++k) {
    double lam = (2 - 2 * std::cos(kPi * k / m)) / ds;
    double scale = std::sqrt(2.0 / m / lam);
    for (int i = 1; i < m; ++i) ctx.B[(i - 1) * (m - 1) + (k - 1)] = scale * std::sin(kPi * k * i / m);
  }
  std::size_t nvar = 2 * (m - 1);
  gsl_multimin_function_fdf fn{&gsl_f, &gsl_df, &gsl_fdf, nvar, &ctx};
  gsl_vector* z = gsl_vector_calloc(nvar);
  gsl_multimin_fdfminimizer* s = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, nvar);
  gsl_multimin_fdfminimizer_set(s, &fn, z, 0.01 * std::sqrt(1 + out.L), 0.1);
  auto small = [&](double tol) { return gsl_multimin_test_gradient(s->gradient, tol * (1 + std::abs(s->f))) == GSL_SUCCESS; };
  int it = 0;
  bool conv = small(opt.grad_tol);
  while (!conv && it < opt.max_iter) {
    ++it;
    int st = gsl_multimin_fdfminimizer_iterate(s);
    conv = small(opt.grad_tol);
    if (st != GSL_SUCCESS) break;
  }
  // the line search stops moving in double precision slightly above the target
  if (!conv) conv = small(1e3 * opt.grad_tol);
  unpack(s->x, ctx);
  out.nodes = ctx.nodes;
  out.L = s->f;
  out.iterations = it;
  out.converged = conv;
  out.grad_norm = gsl_blas_dnrm2(s->gradient);
  gsl_multimin_fdfminimizer_free(s);
  gsl_vector_free(z);
  return out;
}

ScalarField distance_field(const CurveField& field, const GridChart& c, GridPoint y, const CurveOptions& opt,
                           double scale) {
  ScalarField out(c);
  Point2 yp = grid_point(c, y);
  tbb::parallel_for(std::size_t(0), c.size(), [&](std::size_t k) {
    int i = static_cast<int>(k % c.nx), j = static_cast<int>(k / c.nx);
    out.v[k] = scale * reduced_distance(field, yp, grid_point(c, {i, j}), opt).L;
  });
  return out;
}

}  // namespace

CurveField::CurveField(const FlowTrajectory& traj, double tau1, int m, bool frozen)
    : chart_(traj.chart), tau1_(tau1), m_(m), frozen_(frozen) {
  if (m < 2) throw Error("curves need at least 2 segments");
  if (!frozen && (!(tau1 > 0) || tau1 > traj.T() * (1 + 1e-12))) throw Error("curve leaves the time range");
  double s1 = std::sqrt(tau1);
  for (int q = 0; q <= 2 * m; ++q) {
    if (frozen) {
      u_.push_back(traj.u.back());
      s_.push_back(ScalarField(chart_));
      continue;
    }
    double s = s1 * q / (2.0 * m);
    double t = traj.T() - s * s;
    u_.push_back(at_time(traj, traj.u, t));
    s_.push_back(at_time(traj, traj.s, t));
  }
  // Catmull-Rom weights have negative mass at most (1.125^2 - 1) / 2 < 0.14 in 2D
  auto low = [](const std::vector<ScalarField>& fs) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& f : fs) {
      lo = std::min(lo, f.min());
      hi = std::max(hi, f.max());
    }
    return lo - 0.14 * (hi - lo);
  };
  umin_ = low(u_);
  smin_ = frozen ? 0.0 : low(s_);
}

double CurveField::lower_bound(double dx, double dy) const {
  double s1 = frozen_ ? 1.0 : std::sqrt(tau1_);
  double pot = frozen_ ? 0.0 : 2.0 / 3.0 * s1 * s1 * s1 * smin_;
  return std::exp(2 * umin_) * (dx * dx + dy * dy) / (2 * s1) + pot;
}

CurveField::Sample CurveField::interp(const ScalarField& f, double x, double y) const {
  double fx = x / chart_.hx(), fy = y / chart_.hy();
  double ix = std::floor(fx), iy = std::floor(fy);
  double wx[4], dx[4], wy[4], dy[4];
  cr_weights(fx - ix, wx, dx);
  cr_weights(fy - iy, wy, dy);
  int i0 = static_cast<int>(ix), j0 = static_cast<int>(iy);
  Sample r{0, 0, 0};
  for (int b = 0; b < 4; ++b)
    for (int a = 0; a < 4; ++a) {
      double v = f.at(i0 - 1 + a, j0 - 1 + b);
      r.value += wx[a] * wy[b] * v;
      r.dx += dx[a] * wy[b] * v;
      r.dy += wx[a] * dy[b] * v;
    }
  r.dx /= chart_.hx();
  r.dy /= chart_.hy();
  return r;
}

double CurveField::length(const std::vector<Point2>& nodes, std::vector<Point2>* grad) const {
  if (nodes.size() != static_cast<std::size_t>(m_) + 1) throw Error("curve has the wrong number of nodes");
  double s1 = frozen_ ? 1.0 : std::sqrt(tau1_);
  double ds = s1 / m_;
  if (grad) grad->assign(nodes.size(), Point2{0, 0});
  double L = 0;
  for (int k = 0; k < m_; ++k) {
    const Point2& a = nodes[k];
    const Point2& b = nodes[k + 1];
    Point2 mid{0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])};
    double ex = b[0] - a[0], ey = b[1] - a[1];
    Sample um = interp(u_[2 * k + 1], mid[0], mid[1]);
    double e2 = std::exp(2 * um.value);
    double kin = e2 * (ex * ex + ey * ey) / (2 * ds);
    L += kin;
    double sa = k * ds, sm = (k + 0.5) * ds, sb = (k + 1) * ds;
    double pot = 0;
    Sample Sa{0, 0, 0}, Sm{0, 0, 0}, Sb{0, 0, 0};
    if (!frozen_) {
      Sa = interp(s_[2 * k], a[0], a[1]);
      Sm = interp(s_[2 * k + 1], mid[0], mid[1]);
      Sb = interp(s_[2 * k + 2], b[0], b[1]);
      pot = ds / 6 * (2 * sa * sa * Sa.value + 8 * sm * sm * Sm.value + 2 * sb * sb * Sb.value);
    }
    L += pot;
    if (grad) {
      auto& ga = (*grad)[k];
      auto& gb = (*grad)[k + 1];
      ga[0] += -e2 * ex / ds + kin * um.dx;
      ga[1] += -e2 * ey / ds + kin * um.dy;
      gb[0] += e2 * ex / ds + kin * um.dx;
      gb[1] += e2 * ey / ds + kin * um.dy;
      if (!frozen_) {
        double cm = ds / 6 * 4 * sm * sm;
        ga[0] += ds / 6 * 2 * sa * sa * Sa.dx + cm * Sm.dx;
        ga[1] += ds / 6 * 2 * sa * sa * Sa.dy + cm * Sm.dy;
        gb[0] += ds / 6 * 2 * sb * sb * Sb.dx + cm * Sm.dx;
        gb[1] += ds / 6 * 2 * sb * sb * Sb.dy + cm * Sm.dy;
      }
    }
  }
  return L;
}

double l_length(const FlowTrajectory& traj, const DiscreteCurve& curve) {
  CurveField f(traj, curve.tau1, static_cast<int>(curve.segments()));
  return f.length(curve.nodes);
}

ReducedDistance reduced_distance(const CurveField& field, const Point2& y, const Point2& x, const CurveOptions& opt) {
  const GridChart& c = field.chart();
  int m = field.segments();
  struct Start {
    double L;
    std::array<int, 2> lift;
    std::vector<Point2> nodes;
  };
  std::vector<Start> starts;
  for (int b = -1; b <= 1; ++b)
    for (int a = -1; a <= 1; ++a) {
      Point2 xl{x[0] + a * c.lx, x[1] + b * c.ly};
      std::vector<Point2> nodes(m + 1);
      for (int k = 0; k <= m; ++k) {
        double r = double(k) / m;
        nodes[k] = {y[0] + r * (xl[0] - y[0]), y[1] + r * (xl[1] - y[1])};
      }
      starts.push_back({field.length(nodes), {a, b}, std::move(nodes)});
    }
  std::sort(starts.begin(), starts.end(), [](const Start& p, const Start& q) { return p.L < q.L; });
  ReducedDistance best;
  best.L = std::numeric_limits<double>::infinity();
  best.L_straight = starts.front().L;
  bool any = false;
  double best_any = std::numeric_limits<double>::infinity(), best_grad = 0;
  int kept = std::min<int>(opt.lifts_kept, static_cast<int>(starts.size()));
  for (int i = 0; i < kept; ++i) {
    const auto& n = starts[i].nodes;
    if (any && field.lower_bound(n.back()[0] - n.front()[0], n.back()[1] - n.front()[1]) >= best.L) continue;
    Optimized o = optimize(field, starts[i].nodes, opt);
    if (o.L < best_any) {
      best_any = o.L;
      best_grad = o.grad_norm;
    }
    if (!o.converged) continue;
    any = true;
    if (o.L < best.L) {
      best.L = o.L;
      best.lift = starts[i].lift;
      best.curve.nodes = o.nodes;
      best.iterations = o.iterations;
    }
  }
  if (!any) throw ConvergenceError("reduced distance optimizer did not converge", best_any, best_grad);
  best.curve.tau1 = field.tau1();
  best.ell = best.L / (2 * std::sqrt(field.tau1()));
  return best;
}

ReducedDistance reduced_distance(const FlowTrajectory& traj, GridPoint y, GridPoint x, double tau1,
                                 const CurveOptions& opt) {
  CurveField f(traj, tau1, opt.m);
  return reduced_distance(f, grid_point(traj.chart, y), grid_point(traj.chart, x), opt);
}

ScalarField reduced_distance_field(const FlowTrajectory& traj, GridPoint y, double tau1, const CurveOptions& opt) {
  CurveField f(traj, tau1, opt.m);
  return distance_field(f, traj.chart, y, opt, 1 / (2 * std::sqrt(tau1)));
}

ScalarField distance2_T(const FlowTrajectory& traj, GridPoint y, const CurveOptions& opt) {
  // frozen g(T) over s in [0, 1]: min L = d^2 / 2
  CurveField f(traj, 1.0, opt.m, true);
  return distance_field(f, traj.chart, y, opt, 2.0);
}

double reduced_volume(const FlowTrajectory& traj, const ScalarField& ell, double tau) {
  MetricSample g = metric_at(traj, traj.T() - tau);
  double pref = std::pow(4 * kPi * tau, -0.5 * kDimR);
  return integrate(g.metric, map(ell, [&](double l) { return pref * std::exp(-l); }));
}

ReducedReport reduced_series(const FlowTrajectory& traj, GridPoint y, const std::vector<double>& taus,
                             const CurveOptions& opt) {
  ReducedReport r;
  r.base = y;
  r.tau = taus;
  std::sort(r.tau.begin(), r.tau.end());
  for (double t : r.tau) {
    r.ell.push_back(reduced_distance_field(traj, y, t, opt));
    r.volume.push_back(reduced_volume(traj, r.ell.back(), t));
  }
  for (std::size_t i = 1; i < r.volume.size(); ++i)
    if (r.volume[i] > r.volume[i - 1]) r.volume_nonincreasing = false;
  return r;
}

SandwichReport check_sandwich(const FlowTrajectory& traj, const CurvatureBounds& b, const ScalarField& ell,
                              const ScalarField& d2T, double tau) {
  SandwichReport r;
  r.tau = tau;
  r.k1 = b.k1;
  r.k2 = b.k2;
  r.tol = 10 * metric_h2(traj);
  r.worst_lower = r.worst_upper = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ell.size(); ++i) {
    double L4 = 4 * tau * ell.v[i];
    double lower = std::exp(-2 * b.k1 * tau) * d2T.v[i] - 4 * b.k1 * kDimR / 3 * tau * tau;
    double upper = std::exp(2 * b.k2 * tau) * d2T.v[i] + 4 * b.k2 * kDimR / 3 * tau * tau;
    r.worst_lower = std::max(r.worst_lower, lower - L4);
    r.worst_upper = std::max(r.worst_upper, L4 - upper);
  }
  r.pass = r.worst_lower <= r.tol && r.worst_upper <= r.tol;
  return r;
}

LipschitzReport check_lipschitz(const FlowTrajectory& traj, const CurvatureBounds& b, const ScalarField& ell,
                                const ScalarField& d2T, double tau) {
  const GridChart& c = traj.chart;
  const ScalarField& uT = traj.u.back();
  LipschitzReport r;
  double diam = std::sqrt(d2T.max());
  for (int j = 0; j < c.ny; ++j)
    for (int i = 0; i < c.nx; ++i) {
      std::size_t k = c.idx(i, j);
      for (auto [di, dj] : {std::pair{1, 0}, std::pair{0, 1}, std::pair{1, 1}, std::pair{1, -1}}) {
        std::size_t q = c.idx(i + di, j + dj);
        // g(T) length of the grid edge with the midpoint conformal factor
        double flat = std::hypot(di * c.hx(), dj * c.hy());
        double d = flat * std::exp(0.5 * (uT.v[k] + uT.v[q]));
        r.max_quotient = std::max(r.max_quotient, std::abs(ell.v[k] - ell.v[q]) / d);
      }
    }
  double hg = std::sqrt(metric_h2(traj));
  r.bound = std::exp(2 * (b.k1 + b.k2) * tau) * (2 * diam + hg) / (4 * tau);
  r.pass = r.max_quotient <= r.bound;
  return r;
}

SubsolutionReport check_subsolution(const FlowTrajectory& traj, const ReducedReport& series) {
  if (series.tau.size() < 3) throw Error("subsolution check needs at least 3 tau samples");
  SubsolutionReport r;
  double hg2 = metric_h2(traj);
  double fmax = 0, worst_ratio = 0;
  std::vector<ScalarField> F;
  std::vector<std::size_t> idx;
  for (std::size_t q = 0; q < series.tau.size(); ++q) {
    double tau = series.tau[q];
    idx.push_back(traj.index_of(traj.T() - tau));
    double pref = std::pow(4 * kPi * tau, -0.5 * kDimR);
    F.push_back(map(series.ell[q], [&](double l) { return pref * std::exp(-l); }));
  }
  r.tol = 0;
  for (std::size_t q = 1; q + 1 < F.size(); ++q) {
    double tm = series.tau[q - 1], t0 = series.tau[q], tp = series.tau[q + 1];
    ScalarField dtau = centered_difference(F[q - 1], F[q], F[q + 1], tm, t0, tp);
    ConformalMetric m = traj.metric(idx[q]);
    ScalarField box = dtau - laplace_beltrami(m, F[q]) + traj.s[idx[q]] * F[q];
    double dt = std::max(t0 - tm, tp - t0);
    fmax = F[q].max();
    double tol = 10 * (hg2 + dt * dt / t0) * fmax / (t0 * t0);
    r.tau.push_back(t0);
    r.max_value.push_back(box.max());
    r.tol = std::max(r.tol, tol);
    worst_ratio = std::max(worst_ratio, box.max() / tol);
  }
  r.pass = worst_ratio <= 1;
  return r;
}

ComparisonReport check_h_le_ell(const KernelSolution& ker, const ReducedReport& series) {
  if (!ker.base || *ker.base != series.base) throw Error("kernel and reduced distance use different basepoints");
  const FlowTrajectory& tr = *ker.traj;
  ComparisonReport r;
  double tau_min = *std::min_element(series.tau.begin(), series.tau.end());
  r.tol = 10 * metric_h2(tr) / tau_min;
  r.pass = true;
  for (std::size_t q = 0; q < series.tau.size(); ++q) {
    std::size_t k = ker.index_of_tau(series.tau[q]);
    ScalarField d = ker.h(k) - series.ell[q];
    r.tau.push_back(series.tau[q]);
    r.max_excess.push_back(d.max());
    if (d.max() > r.tol) r.pass = false;
  }
  return r;
}

}  // namespace fh

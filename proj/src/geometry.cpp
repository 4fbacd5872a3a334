#include "flowharnack/geometry.hpp"

#include <cmath>

namespace fh {

namespace {

// out(i,j) = sum_k w_k f(i + di_k, j + dj_k) * scale
template <int N>
ScalarField stencil_apply(const ScalarField& f, const int (&di)[N], const int (&dj)[N],
                          const double (&w)[N], double scale) {
  const GridChart& c = f.chart;
  ScalarField out(c);
  for (int j = 0; j < c.ny; ++j)
    for (int i = 0; i < c.nx; ++i) {
      double s = 0;
      for (int k = 0; k < N; ++k) s += w[k] * f.v[c.idx(i + di[k], j + dj[k])];
      out.v[c.idx(i, j)] = s * scale;
    }
  return out;
}

ScalarField d1(const ScalarField& f, Stencil s, bool along_x) {
  const GridChart& c = f.chart;
  double h = along_x ? c.hx() : c.hy();
  if (s == Stencil::Second) {
    const int o[2] = {1, -1};
    const int z[2] = {0, 0};
    const double w[2] = {1, -1};
    return along_x ? stencil_apply(f, o, z, w, 0.5 / h) : stencil_apply(f, z, o, w, 0.5 / h);
  }
  const int o[4] = {2, 1, -1, -2};
  const int z[4] = {0, 0, 0, 0};
  const double w[4] = {-1, 8, -8, 1};
  return along_x ? stencil_apply(f, o, z, w, 1.0 / (12 * h)) : stencil_apply(f, z, o, w, 1.0 / (12 * h));
}

ScalarField d2(const ScalarField& f, Stencil s, bool along_x) {
  const GridChart& c = f.chart;
  double h = along_x ? c.hx() : c.hy();
  if (s == Stencil::Second) {
    const int o[3] = {1, 0, -1};
    const int z[3] = {0, 0, 0};
    const double w[3] = {1, -2, 1};
    return along_x ? stencil_apply(f, o, z, w, 1.0 / (h * h)) : stencil_apply(f, z, o, w, 1.0 / (h * h));
  }
  const int o[5] = {2, 1, 0, -1, -2};
  const int z[5] = {0, 0, 0, 0, 0};
  const double w[5] = {-1, 16, -30, 16, -1};
  return along_x ? stencil_apply(f, o, z, w, 1.0 / (12 * h * h))
                 : stencil_apply(f, z, o, w, 1.0 / (12 * h * h));
}

}  // namespace

void check_nondegenerate(const ScalarField& u, double time) {
  for (double a : u.v)
    if (!std::isfinite(a) || 2 * a < std::log(1e-12))
      throw DegenerateMetric("degenerate conformal factor", time);
}

ConformalMetric::ConformalMetric(ScalarField u_c, Stencil s) : u(std::move(u_c)), stencil(s) {
  check_nondegenerate(u);
}

ScalarField ConformalMetric::conformal() const {
  return map(u, [](double a) { return std::exp(2 * a); });
}

ScalarField ConformalMetric::inv_conformal() const {
  return map(u, [](double a) { return std::exp(-2 * a); });
}

double ConformalMetric::total_volume() const { return integrate(*this, ScalarField(chart(), 1.0)); }

ScalarField dx(const ScalarField& f, Stencil s) { return d1(f, s, true); }
ScalarField dy(const ScalarField& f, Stencil s) { return d1(f, s, false); }
ScalarField dxx(const ScalarField& f, Stencil s) { return d2(f, s, true); }
ScalarField dyy(const ScalarField& f, Stencil s) { return d2(f, s, false); }
ScalarField dxy(const ScalarField& f, Stencil s) { return dx(dy(f, s), s); }

ScalarField flat_laplacian(const ScalarField& f, Stencil s) {
  const GridChart& c = f.chart;
  if (s == Stencil::Second) {
    // fused 5-point stencil; the hot path of every time integrator
    ScalarField out(c);
    const double ax = 1.0 / (c.hx() * c.hx()), ay = 1.0 / (c.hy() * c.hy());
    const int nx = c.nx, ny = c.ny;
    const double* p = f.v.data();
    for (int j = 0; j < ny; ++j) {
      const double* row = p + static_cast<std::size_t>(j) * nx;
      const double* up = p + static_cast<std::size_t>(j + 1 == ny ? 0 : j + 1) * nx;
      const double* dn = p + static_cast<std::size_t>(j == 0 ? ny - 1 : j - 1) * nx;
      double* o = out.v.data() + static_cast<std::size_t>(j) * nx;
      for (int i = 0; i < nx; ++i) {
        int ip = i + 1 == nx ? 0 : i + 1, im = i == 0 ? nx - 1 : i - 1;
        o[i] = ax * (row[ip] - 2 * row[i] + row[im]) + ay * (up[i] - 2 * row[i] + dn[i]);
      }
    }
    return out;
  }
  return dxx(f, s) + dyy(f, s);
}

ScalarField laplace_beltrami(const ConformalMetric& m, const ScalarField& f) {
  require_same(m.chart(), f.chart);
  return m.inv_conformal() * flat_laplacian(f, m.stencil);
}

VectorField gradient(const ConformalMetric& m, const ScalarField& f) {
  require_same(m.chart(), f.chart);
  return {dx(f, m.stencil), dy(f, m.stencil)};
}

ScalarField inner(const ConformalMetric& m, const VectorField& a, const VectorField& b) {
  require_same(m.chart(), a.chart());
  require_same(m.chart(), b.chart());
  ScalarField out(m.chart());
  for (std::size_t k = 0; k < out.size(); ++k)
    out.v[k] = std::exp(-2 * m.u.v[k]) * (a.x.v[k] * b.x.v[k] + a.y.v[k] * b.y.v[k]);
  return out;
}

ScalarField norm_sq(const ConformalMetric& m, const VectorField& a) { return inner(m, a, a); }

ScalarField grad_norm_sq(const ConformalMetric& m, const ScalarField& f) {
  return norm_sq(m, gradient(m, f));
}

ScalarField divergence(const ConformalMetric& m, const VectorField& w) {
  require_same(m.chart(), w.chart());
  return m.inv_conformal() * (dx(w.x, m.stencil) + dy(w.y, m.stencil));
}

SymTensor2Field hessian(const ConformalMetric& m, const ScalarField& f) {
  require_same(m.chart(), f.chart);
  const Stencil s = m.stencil;
  ScalarField fx = dx(f, s), fy = dy(f, s);
  ScalarField ux = dx(m.u, s), uy = dy(m.u, s);
  SymTensor2Field h(dxx(f, s), dxy(f, s), dyy(f, s));
  for (std::size_t k = 0; k < f.size(); ++k) {
    h.t11.v[k] += -ux.v[k] * fx.v[k] + uy.v[k] * fy.v[k];
    h.t12.v[k] += -uy.v[k] * fx.v[k] - ux.v[k] * fy.v[k];
    h.t22.v[k] += ux.v[k] * fx.v[k] - uy.v[k] * fy.v[k];
  }
  return h;
}

SymTensor2Field metric_tensor(const ConformalMetric& m) {
  ScalarField e = m.conformal();
  return {e, ScalarField(m.chart()), e};
}

SymTensor2Field ricci(const ConformalMetric& m) {
  // Rc = K g = -(flat Laplacian of u) delta
  ScalarField r = -flat_laplacian(m.u, m.stencil);
  return {r, ScalarField(m.chart()), r};
}

ScalarField gauss_curvature(const ConformalMetric& m) {
  return -(m.inv_conformal() * flat_laplacian(m.u, m.stencil));
}

ScalarField scalar_curvature(const ConformalMetric& m) { return 2.0 * gauss_curvature(m); }

VectorField divergence_sym(const ConformalMetric& m, const SymTensor2Field& t) {
  require_same(m.chart(), t.chart());
  const Stencil s = m.stencil;
  ScalarField ux = dx(m.u, s), uy = dy(m.u, s);
  ScalarField tr = t.t11 + t.t22;
  ScalarField e = m.inv_conformal();
  VectorField out(dx(t.t11, s) + dy(t.t12, s), dx(t.t12, s) + dy(t.t22, s));
  for (std::size_t k = 0; k < e.size(); ++k) {
    out.x.v[k] = e.v[k] * (out.x.v[k] - ux.v[k] * tr.v[k]);
    out.y.v[k] = e.v[k] * (out.y.v[k] - uy.v[k] * tr.v[k]);
  }
  return out;
}

ScalarField trace(const ConformalMetric& m, const SymTensor2Field& t) {
  require_same(m.chart(), t.chart());
  return m.inv_conformal() * (t.t11 + t.t22);
}

ScalarField tensor_inner(const ConformalMetric& m, const SymTensor2Field& a, const SymTensor2Field& b) {
  require_same(m.chart(), a.chart());
  require_same(m.chart(), b.chart());
  ScalarField out(m.chart());
  for (std::size_t k = 0; k < out.size(); ++k) {
    double e = std::exp(-4 * m.u.v[k]);
    out.v[k] = e * (a.t11.v[k] * b.t11.v[k] + 2 * a.t12.v[k] * b.t12.v[k] + a.t22.v[k] * b.t22.v[k]);
  }
  return out;
}

ScalarField tensor_norm_sq(const ConformalMetric& m, const SymTensor2Field& t) {
  return tensor_inner(m, t, t);
}

ScalarField tensor_apply(const ConformalMetric& m, const SymTensor2Field& t, const VectorField& v) {
  require_same(m.chart(), t.chart());
  require_same(m.chart(), v.chart());
  ScalarField out(m.chart());
  for (std::size_t k = 0; k < out.size(); ++k) {
    double e = std::exp(-4 * m.u.v[k]);
    double a = v.x.v[k], b = v.y.v[k];
    out.v[k] = e * (t.t11.v[k] * a * a + 2 * t.t12.v[k] * a * b + t.t22.v[k] * b * b);
  }
  return out;
}

namespace {
ScalarField eig(const ConformalMetric& m, const SymTensor2Field& t, double sign) {
  require_same(m.chart(), t.chart());
  ScalarField out(m.chart());
  for (std::size_t k = 0; k < out.size(); ++k) {
    double p = 0.5 * (t.t11.v[k] + t.t22.v[k]);
    double q = 0.5 * (t.t11.v[k] - t.t22.v[k]);
    double r = std::hypot(q, t.t12.v[k]);
    out.v[k] = std::exp(-2 * m.u.v[k]) * (p + sign * r);
  }
  return out;
}
}  // namespace

ScalarField eig_min(const ConformalMetric& m, const SymTensor2Field& t) { return eig(m, t, -1.0); }
ScalarField eig_max(const ConformalMetric& m, const SymTensor2Field& t) { return eig(m, t, 1.0); }

SymTensor2Field outer(const VectorField& a) { return {a.x * a.x, a.x * a.y, a.y * a.y}; }

double integrate(const ConformalMetric& m, const ScalarField& f) {
  require_same(m.chart(), f.chart);
  double s = 0;
  for (std::size_t k = 0; k < f.size(); ++k) s += f.v[k] * std::exp(2 * m.u.v[k]);
  return s * m.chart().hx() * m.chart().hy();
}

double dirichlet_form(const ConformalMetric& m, const ScalarField& f, const ScalarField& w) {
  require_same(m.chart(), f.chart);
  require_same(m.chart(), w.chart);
  const GridChart& c = f.chart;
  // the conformal factor cancels between g^{ij} and dmu in two dimensions
  double sx = 0, sy = 0;
  for (int j = 0; j < c.ny; ++j)
    for (int i = 0; i < c.nx; ++i) {
      std::size_t k = c.idx(i, j), kx = c.idx(i + 1, j), ky = c.idx(i, j + 1);
      sx += (f.v[kx] - f.v[k]) * (w.v[kx] - w.v[k]);
      sy += (f.v[ky] - f.v[k]) * (w.v[ky] - w.v[k]);
    }
  return sx * c.hy() / c.hx() + sy * c.hx() / c.hy();
}

}  // namespace fh

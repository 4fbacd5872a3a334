#pragma once

#include "flowharnack/grid.hpp"

namespace fh {

enum class Stencil { Second = 2, Fourth = 4 };

// g = e^{2u}(dx^2 + dy^2). Construction rejects e^{2u} < 1e-12 or non-finite u.
struct ConformalMetric {
  ScalarField u;
  Stencil stencil = Stencil::Second;

  ConformalMetric() = default;
  explicit ConformalMetric(ScalarField u_c, Stencil s = Stencil::Second);

  const GridChart& chart() const { return u.chart; }
  ScalarField conformal() const;        // e^{2u}
  ScalarField inv_conformal() const;    // e^{-2u}
  double total_volume() const;
};

void check_nondegenerate(const ScalarField& u, double time = 0.0);

// Flat centered differences.
ScalarField dx(const ScalarField& f, Stencil s = Stencil::Second);
ScalarField dy(const ScalarField& f, Stencil s = Stencil::Second);
ScalarField dxx(const ScalarField& f, Stencil s = Stencil::Second);
ScalarField dyy(const ScalarField& f, Stencil s = Stencil::Second);
ScalarField dxy(const ScalarField& f, Stencil s = Stencil::Second);
ScalarField flat_laplacian(const ScalarField& f, Stencil s = Stencil::Second);

ScalarField laplace_beltrami(const ConformalMetric& m, const ScalarField& f);
VectorField gradient(const ConformalMetric& m, const ScalarField& f);
ScalarField grad_norm_sq(const ConformalMetric& m, const ScalarField& f);
ScalarField inner(const ConformalMetric& m, const VectorField& a, const VectorField& b);
ScalarField norm_sq(const ConformalMetric& m, const VectorField& a);
ScalarField divergence(const ConformalMetric& m, const VectorField& w);

SymTensor2Field hessian(const ConformalMetric& m, const ScalarField& f);
SymTensor2Field metric_tensor(const ConformalMetric& m);
SymTensor2Field ricci(const ConformalMetric& m);
ScalarField gauss_curvature(const ConformalMetric& m);
ScalarField scalar_curvature(const ConformalMetric& m);
VectorField divergence_sym(const ConformalMetric& m, const SymTensor2Field& t);

ScalarField trace(const ConformalMetric& m, const SymTensor2Field& t);
ScalarField tensor_inner(const ConformalMetric& m, const SymTensor2Field& a, const SymTensor2Field& b);
ScalarField tensor_norm_sq(const ConformalMetric& m, const SymTensor2Field& t);
// t(V,V) with V given by covariant components.
ScalarField tensor_apply(const ConformalMetric& m, const SymTensor2Field& t, const VectorField& v);
// Smallest / largest eigenvalue of t relative to g.
ScalarField eig_min(const ConformalMetric& m, const SymTensor2Field& t);
ScalarField eig_max(const ConformalMetric& m, const SymTensor2Field& t);
SymTensor2Field outer(const VectorField& a);  // a (x) a

double integrate(const ConformalMetric& m, const ScalarField& f);
// int <grad f, grad w> dmu with one-sided differences, the exact summation-by-parts
// partner of the second-order Laplacian: dirichlet_form(m,f,w) = -integrate(m, f Delta_g w).
double dirichlet_form(const ConformalMetric& m, const ScalarField& f, const ScalarField& w);

struct FlowTrajectory;
// sup-norm of (d/dt Delta_g) f minus 2<alpha,Hess f> + <2 Div alpha - grad S, grad f> at a stored time.
double check_laplacian_evolution(const FlowTrajectory& traj, const ScalarField& f, double t);

}  // namespace fh

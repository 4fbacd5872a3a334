#pragma once

#include <optional>
#include <vector>

#include "flowharnack/conjugate.hpp"

namespace fh {

// Entropy functionals for densities U = (4 pi tau)^{-n/2} e^{-h} of unit mass. Everything is evaluated
// in w = sqrt(U), where int |grad h|^2 U dmu = 4 int |grad w|^2 dmu uses the summation-by-parts
// Dirichlet form. W and the minimized functional are then the same discrete object.

// W(g, tau, h); throws NormalizationError when |int U dmu - 1| > tol_norm.
double w_functional(const ConformalMetric& m, const ScalarField& s, double tau, const ScalarField& h,
                    double tol_norm = 1e-6);
// Same, taking the density U directly (zero values allowed).
double w_of_density(const ConformalMetric& m, const ScalarField& s, double tau, const ScalarField& density,
                    double tol_norm = 1e-6);

// sup |-4 tau Delta_g w / w + tau S + h - n - mu|, the minimizer equation
// tau(2 Delta h - |grad h|^2 + S) + h - n = mu written in w. Grid points with w below 1e-150 are skipped.
double euler_lagrange_residual(const ConformalMetric& m, const ScalarField& s, double tau, const ScalarField& w,
                               double mu);

struct MuOptions {
  int max_iter = 5000;
  double armijo = 1e-4;
  double stall = 1e-10;      // relative decrease over `stall_window` steps
  int stall_window = 20;
  double sigma = 10.0;       // shift of the (8 tau K + sigma) preconditioner
  int newton_iter = 40;
  bool compare_defaults = true;  // with an init, still start from a default candidate if its W is lower
};

struct MuResult {
  double tau = 0;
  double mu = 0;
  ScalarField w;
  ScalarField h;
  double el_residual = 0;
  double tol_el = 0;  // 1e-5 (1 + |mu|)
  int pg_iters = 0;
  int newton_iters = 0;
};

// Minimizes W over unit-mass densities: preconditioned projected gradient with Armijo backtracking,
// then a bordered Newton polish in psi = log w. init is a density; without it the start is the
// lower-W of the normalized constant and a Gaussian bump of width sqrt(2 tau) at the maximum of S
// (the constant is a saddle once tau drops below the first eigenvalue scale).
// Throws ConvergenceError carrying the best value and residual when tol_el is not met.
MuResult mu_minimize(const ConformalMetric& m, const ScalarField& s, double tau,
                     const std::optional<ScalarField>& init = std::nullopt, const MuOptions& opt = {});

struct MonotoneSeries {
  std::vector<double> times;
  std::vector<double> tau;
  std::vector<double> value;
  std::vector<double> el_residual;  // mu series only
  double tol_mono = 0;
  double worst_decrease = 0;  // largest drop below the running maximum
  bool monotone = true;
};

// W(g(t_k), T - t_k, h_k) with h from a unit-mass conjugate solution, at stored times with
// tau >= floor_h2 * h_g^2. Below about 20 h_g^2 the lattice offset of a kernel's W changes faster
// than the flow raises it.
MonotoneSeries check_w_monotone(const KernelSolution& sol, double floor_h2 = 40);

// mu(g(t_k), T - t_k) at the given stored indices (tau > 0), each slice started from the previous
// minimizer transported as a density. Slices are independent when warm starts are off.
MonotoneSeries check_mu_monotone(const FlowTrajectory& traj, const std::vector<std::size_t>& slices,
                                 bool warm_start = true);

struct UpsilonReport {
  std::vector<double> tau;
  std::vector<double> mu;
  double upsilon = 0;  // minimum over the grid: an upper estimate of inf_tau mu
  double tau_at_min = 0;
};

// mu on per_decade logarithmic points over [tau_min, tau_max]; the points run concurrently.
UpsilonReport upsilon(const ConformalMetric& m, const ScalarField& s, double tau_max, double tau_min = 1e-3,
                      int per_decade = 16);

struct EntropyReport {
  MonotoneSeries w;
  MonotoneSeries mu;
  UpsilonReport ups;
  // the W values that each reported mu was compared against, with the worst mu - W (should be <= tol_el)
  double worst_infimum_gap = 0;
};

}  // namespace fh

#pragma once

#include <vector>

#include "flowharnack/conjugate.hpp"

namespace fh {

constexpr int kDim = 2;

// tau (2 Delta h - |grad h|^2 + S) + h - n on g(t). For non-kernel solutions h plays the role of f.
ScalarField harnack_lhs(const KernelSolution& sol, double t);
// v = harnack_lhs * U
ScalarField v_field(const KernelSolution& sol, double t);

struct IdentityResidual {
  double residual = 0;  // sup |Box* v - rhs|
  double scale = 0;     // sup |rhs|
};

// Box* v against -2 tau U |alpha + Hess f - g/2tau|^2 - tau U D(grad f), with alpha the tensor that
// drives the conformal flow and dS/dt from the stored S. t must have stored neighbours.
IdentityResidual identity_residual(const KernelSolution& sol, double t);

// sup |-Box*(U log U) - (U |grad log U|^2 + U S)|
double ulogu_residual(const KernelSolution& sol, double t);

struct RhoSeries {
  std::vector<double> times;
  std::vector<double> tau;
  std::vector<double> rho;
  double tol_mono = 0;       // 1e-4 max|rho|
  double worst_decrease = 0; // largest drop between consecutive times
  bool monotone = true;
  double final_abs = 0;      // |rho| at the smallest probed tau
  double tol_limit = 0;
  bool limit_ok = true;
};

// rho(t) = int v Phi dmu at stored times with tau >= min_steps * dt_max. For tau of order h^2 the
// lattice kernel is far from Gaussian and rho turns back down, so those slices are not probed.
RhoSeries rho_phi(const KernelSolution& ker, const ForwardSolution& fwd, int min_steps = 100,
                  double tol_limit = 5e-3 * kDim);

// int (h - n/2) H Phi dmu at time t
double lemma33_integral(const KernelSolution& ker, const ForwardSolution& fwd, double t);

struct GradientEstimateReport {
  double tau_start = 0, tau_end = 0, sigma = 0;  // window and elapsed window length
  double A = 0, B = 0, C1 = 0, C2 = 0;
  double Q = 0;
  double max_lhs = 0;
  double worst = 0;  // max of lhs - rhs over the final slice (<= 0 passes)
  int steps = 0;
  bool pass = false;
};

// Gradient estimate sigma |grad q|^2/q^2 <= (1 + C1 sigma)(ln(Q/q) + C2 sigma) at the end of the
// window [tau_end/2, tau_end], sigma the elapsed window length, Q the window maximum. Constants
// from the maximum-principle argument with a = s/(1+As), b = e^{k4 s}, c = e^{k4 s}(n k2 + k3 s/2)s:
//   A = 2k1 + (2+n)k2 + 1, B = e^{k4} - 1, C1 = A + B + AB, C2 = n k2 + k3/2  (sigma <= 1).
GradientEstimateReport gradient_estimate_check(const KernelSolution& sol, const CurvatureBounds& b, double tau_end);

struct LinfReport {
  std::vector<double> tau;
  std::vector<double> scaled_max;  // tau^{n/2} max q
  double c_emp = 0;
  double tau_at_max = 0;
};

// C_emp = max over stored 0 < tau <= min(1, T) of tau^{n/2} max_x q for a unit-mass solution.
LinfReport linf_bound_check(const KernelSolution& sol);

}  // namespace fh

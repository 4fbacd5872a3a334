#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "flowharnack/flow.hpp"

namespace fh {

// Positive solution of the conjugate heat equation dU/dtau = Delta_g U - S U, tau = T - t,
// stored on the trajectory's time grid (index k matches traj.times[k]; k = last is tau = 0).
// Kernels carry their grid basepoint.
struct KernelSolution {
  const FlowTrajectory* traj = nullptr;
  std::optional<std::pair<int, int>> base;
  std::vector<double> times;
  std::vector<double> tau;
  std::vector<ScalarField> u;
  std::vector<double> mass;
  std::size_t steps = 0;
  int n_burn = 10;

  std::size_t size() const { return times.size(); }
  ConformalMetric metric(std::size_t k) const { return traj->metric(k); }
  // h = -log u - (n/2) log(4 pi tau); throws at tau = 0.
  ScalarField h(std::size_t k) const;
  std::size_t index_of_tau(double t) const;
};

struct ForwardSolution {
  const FlowTrajectory* traj = nullptr;
  std::vector<double> times;
  std::vector<ScalarField> phi;
  std::size_t size() const { return times.size(); }
};

// Backward RK4 in density form: m = U e^{2u_c} obeys dm/dtau = Delta_0(m e^{-2u_c}), which keeps
// the discrete mass sum(m) hx hy fixed to rounding. init is read on g(T); with normalize it is
// rescaled to unit mass. Throws PositivityLoss on a negative value, or on a zero value once
// compactly supported data has had max(n_burn, steps to cross half the grid) steps to spread.
KernelSolution solve_conjugate(const FlowTrajectory& traj, const ScalarField& init, bool normalize = true,
                               int n_burn = 10);

// Discrete delta of unit mass on g(T) at grid point (i, j).
KernelSolution solve_kernel(const FlowTrajectory& traj, int i, int j, int n_burn = 10);

// dPhi/dt = Delta_g Phi forward along the trajectory.
ForwardSolution solve_forward(const FlowTrajectory& traj, const ScalarField& phi0);

// int U Phi dmu at every stored time; constant in the continuum.
std::vector<double> duality_pairing(const KernelSolution& sol, const ForwardSolution& fwd);

// Squared distance from grid point (i, j) on metric m: exact torus distance times e^{2c} when the
// conformal factor is the constant c, otherwise Dijkstra over the 8-neighbour graph with edge
// length |edge| * (e^{u_a} + e^{u_b})/2 (first order).
struct DistanceField {
  ScalarField d2;
  bool exact = true;
};
DistanceField distance2_from(const ConformalMetric& m, int i, int j);

struct AsymptoticsReport {
  double tau = 0;
  double steps = 0;         // tau / dt_max
  double diag_ratio = 0;    // 4 pi tau H(y, y)
  double max_ratio_err = 0; // max over the disc of |4 pi tau H e^{d^2/4tau} - 1|
  double disc_radius2 = 0;
  bool trend_only = false;  // curved metric: distance is approximate
  bool pass = false;
  double tol = 0.05;
};

// Leading-order comparison of the kernel with e^{-d^2/4tau}/(4 pi tau) on the disc d^2 <= radius_factor * tau.
AsymptoticsReport check_asymptotics(const KernelSolution& ker, double tau_probe, double radius_factor = 4.0,
                                    double tol = 0.05);

}  // namespace fh

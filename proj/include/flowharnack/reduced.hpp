#pragma once

#include <array>
#include <utility>
#include <vector>

#include "flowharnack/conjugate.hpp"

namespace fh {

using GridPoint = std::pair<int, int>;
using Point2 = std::array<double, 2>;

// Curves start at the basepoint y at tau = 0 (time T) and end at x at tau1, parametrized by
// s = sqrt(tau) at uniform spacing. nodes[0] = y, nodes[m] = x, in unwrapped chart coordinates.
struct DiscreteCurve {
  double tau1 = 0;
  std::vector<Point2> nodes;
  std::size_t segments() const { return nodes.empty() ? 0 : nodes.size() - 1; }
};

// Fields of the trajectory sampled at the node and midpoint times of an m-segment curve up to tau1
// (linear in time between stored snapshots), with C1 bicubic interpolation in space.
class CurveField {
 public:
  CurveField(const FlowTrajectory& traj, double tau1, int m, bool frozen = false);

  // L = int_0^{s1} (2 s^2 S + |dgamma/ds|^2_g / 2) ds, Simpson for the potential and the midpoint
  // metric for the kinetic term. Frozen fields use g(T) at every node and S = 0.
  double length(const std::vector<Point2>& nodes, std::vector<Point2>* grad = nullptr) const;

  // Lower bound for every curve whose endpoints differ by the chart displacement (dx, dy): the
  // kinetic sum is at least e^{2 min u} |d|^2 / (2 s1) and the potential at least (2/3) s1^3 min S,
  // with the minima lowered by the largest undershoot of the interpolant.
  double lower_bound(double dx, double dy) const;

  double tau1() const { return tau1_; }
  int segments() const { return m_; }
  bool frozen() const { return frozen_; }
  const GridChart& chart() const { return chart_; }

 private:
  struct Sample {
    double value;
    double dx;
    double dy;
  };
  Sample interp(const ScalarField& f, double x, double y) const;

  GridChart chart_;
  double tau1_;
  int m_;
  bool frozen_;
  double umin_ = 0;
  double smin_ = 0;
  std::vector<ScalarField> u_;  // 2m + 1 samples: index 2k node k, 2k + 1 midpoint
  std::vector<ScalarField> s_;
};

double l_length(const FlowTrajectory& traj, const DiscreteCurve& curve);

struct ReducedDistance {
  double ell = 0;        // L(gamma*) / (2 sqrt(tau1))
  double L = 0;          // L(gamma*)
  double L_straight = 0; // best straight lift
  std::array<int, 2> lift{0, 0};
  DiscreteCurve curve;
  int iterations = 0;
};

struct CurveOptions {
  int m = 32;
  int lifts_kept = 5;   // of the 9 straight lifts, the best ones seed the optimizer
  int max_iter = 2000;
  double grad_tol = 1e-9;  // on |grad L| relative to (1 + L)
};

// Quasi-Newton (BFGS) over interior nodes in a sine basis that whitens the kinetic term, started from
// the cheapest straight lifts. Lifts whose lower bound already exceeds the best L are skipped.
// Throws ConvergenceError with the best L (an upper bound) when no start converges.
ReducedDistance reduced_distance(const CurveField& field, const Point2& y, const Point2& x, const CurveOptions& opt = {});
ReducedDistance reduced_distance(const FlowTrajectory& traj, GridPoint y, GridPoint x, double tau1,
                                 const CurveOptions& opt = {});

// ell(., tau1) on every grid point; endpoints run concurrently.
ScalarField reduced_distance_field(const FlowTrajectory& traj, GridPoint y, double tau1, const CurveOptions& opt = {});

// Squared g(T) distance from y, by minimizing curve energy on the frozen metric.
ScalarField distance2_T(const FlowTrajectory& traj, GridPoint y, const CurveOptions& opt = {});

// V(tau) = int (4 pi tau)^{-n/2} e^{-ell} dmu on g(T - tau).
double reduced_volume(const FlowTrajectory& traj, const ScalarField& ell, double tau);

struct ReducedReport {
  GridPoint base{0, 0};
  std::vector<double> tau;
  std::vector<ScalarField> ell;
  std::vector<double> volume;
  bool volume_nonincreasing = true;  // observed trend, not asserted
};

ReducedReport reduced_series(const FlowTrajectory& traj, GridPoint y, const std::vector<double>& taus,
                             const CurveOptions& opt = {});

struct SandwichReport {
  double tau = 0;
  double k1 = 0, k2 = 0;
  double worst_lower = 0;  // max of lower - 4 tau ell (<= tol passes)
  double worst_upper = 0;  // max of 4 tau ell - upper
  double tol = 0;
  bool pass = false;
};

// e^{-2 k1 tau} d_T^2 - (4 k1 n/3) tau^2 <= 4 tau ell <= e^{2 k2 tau} d_T^2 + (4 k2 n/3) tau^2,
// with slack 10 h_g^2.
SandwichReport check_sandwich(const FlowTrajectory& traj, const CurvatureBounds& b, const ScalarField& ell,
                              const ScalarField& d2T, double tau);

struct LipschitzReport {
  double max_quotient = 0;  // max |ell(x) - ell(x')| / d_T(x, x') over grid neighbours
  double bound = 0;         // e^{2 (k1 + k2) tau} (2 diam_T + h_g) / (4 tau)
  bool pass = false;
};

LipschitzReport check_lipschitz(const FlowTrajectory& traj, const CurvatureBounds& b, const ScalarField& ell,
                                const ScalarField& d2T, double tau);

struct SubsolutionReport {
  std::vector<double> tau;    // probe times (middle samples)
  std::vector<double> max_value;  // max Box* F over interior probes
  double tol = 0;
  bool pass = false;
};

// Box* F, F = (4 pi tau)^{-n/2} e^{-ell}, at the middle of each consecutive sample triple, by centred
// differences in tau. Needs >= 3 stored sample times. tol_sub = 10 (h_g^2 + dtau^2/tau) max F / tau^2.
SubsolutionReport check_subsolution(const FlowTrajectory& traj, const ReducedReport& series);

struct ComparisonReport {
  std::vector<double> tau;
  std::vector<double> max_excess;  // max_x h - ell
  double tol = 0;
  bool pass = false;
};

// h(x, t; y, T) <= ell(x, T - t) + tol_cmp at every series time, tol_cmp = 10 h_g^2 / tau_min.
ComparisonReport check_h_le_ell(const KernelSolution& ker, const ReducedReport& series);

}  // namespace fh

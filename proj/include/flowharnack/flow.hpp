#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "flowharnack/alpha.hpp"

namespace fh {

struct DtPolicy {
  enum class Kind { Fixed, Cfl };
  Kind kind = Kind::Cfl;
  double dt = 0.0;       // Fixed only
  double safety = 0.2;   // Cfl: dt = safety * h^2 e^{2 min u} / 4
};

struct FlowTrajectory {
  GridChart chart;
  Stencil stencil = Stencil::Second;
  Model model;
  int store_stride = 1;
  std::size_t steps = 0;
  double dt_max = 0.0;  // largest step taken
  std::vector<double> times;
  std::vector<ScalarField> u;    // conformal factor per stored time
  std::vector<ScalarField> aux;  // phi per stored time (empty when the model has none)
  std::vector<ScalarField> s;    // trace S per stored time

  std::size_t size() const { return times.size(); }
  double T() const { return times.back(); }
  ConformalMetric metric(std::size_t k) const { return ConformalMetric(u[k], stencil); }
  const ScalarField* aux_at(std::size_t k) const { return aux.empty() ? nullptr : &aux[k]; }
  AlphaSnapshot alpha(std::size_t k) const;
  // Index of a stored time; throws if t is not stored (relative tolerance 1e-9).
  std::size_t index_of(double t) const;
  std::size_t nearest_index(double t) const;
};

std::size_t estimate_trajectory_bytes(const GridChart& c, const Model& model, const ScalarField& u0,
                                      double T, const DtPolicy& p, int store_stride);

// Integrates du/dt = -S/2 (conformal part of dg/dt = -2 alpha) with classical RK4.
// ExtendedRicci carries dphi/dt = Delta_g phi.
FlowTrajectory evolve(const Model& model, const ConformalMetric& g0, const std::optional<ScalarField>& aux0,
                      double T, const DtPolicy& policy, int store_stride = 1);

struct MetricSample {
  ConformalMetric metric;
  std::optional<ScalarField> aux;
};

enum class TimeInterp { Linear, Cubic };

// Cubic Hermite in u using du/dt = -S/2 at the bracketing snapshots; aux is linear.
MetricSample metric_at(const FlowTrajectory& traj, double t, TimeInterp mode = TimeInterp::Cubic);

struct CurvatureBounds {
  double k1 = 0;  // Rc >= -k1 g
  double k2 = 0;  // alpha >= -k2 g (flow tensor)
  double k3 = 0;  // |grad S|^2 <= k3
  double k4 = 0;  // |S| <= k4
  double alpha_upper = 0;  // alpha <= alpha_upper g
};

CurvatureBounds measure_bounds(const FlowTrajectory& traj);

// Three-point derivative at the middle sample for possibly unequal spacing.
ScalarField centered_difference(const ScalarField& fm, const ScalarField& f0, const ScalarField& fp,
                                double tm, double t0, double tp);

}  // namespace fh

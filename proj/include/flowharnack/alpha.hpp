#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "flowharnack/geometry.hpp"

namespace fh {

enum class ModelKind { Ricci, Static, ExtendedRicci, Custom };

// Time-indexed tensor schedule for the Custom model.
//   ScaledInitial: alpha = lambda * g(0)
//   ScaledCurrent: alpha = lambda * g(t)
//   Tabulated:     alpha_ij given at sample times, linear in t, held constant outside
struct CustomSchedule {
  enum class Kind { ScaledInitial, ScaledCurrent, Tabulated };
  Kind kind = Kind::ScaledCurrent;
  double lambda = 0.0;
  std::vector<double> times;
  std::vector<SymTensor2Field> tensors;
};

struct Model {
  ModelKind kind = ModelKind::Ricci;
  double coupling = 1.0;  // a in alpha = Rc - a dphi (x) dphi
  bool conformal_project = true;
  CustomSchedule custom;

  std::string tag() const;
  bool has_aux() const { return kind == ModelKind::ExtendedRicci; }
};

struct AlphaSnapshot {
  SymTensor2Field alpha;
  ScalarField trace_s;
  std::optional<ScalarField> aux;
  ModelKind model_tag = ModelKind::Ricci;
  double coupling = 0.0;
};

// `initial` is the t=0 metric; only ScaledInitial schedules read it.
AlphaSnapshot make_alpha(const Model& model, const ConformalMetric& m, const ScalarField* aux,
                         double t = 0.0, const ConformalMetric* initial = nullptr);

// Largest trace-free component of alpha relative to its size; 0 for conformal alpha.
double trace_free_ratio(const AlphaSnapshot& a);

// The tensor actually driving the conformal flow: (S/2) g.
SymTensor2Field flow_alpha(const ConformalMetric& m, const AlphaSnapshot& a);

// Time derivative of S along the model's own (unprojected) flow, when known in closed form.
std::optional<ScalarField> analytic_dsdt(const Model& model, const ConformalMetric& m,
                                         const AlphaSnapshot& a);

struct DalphaEvaluation {
  ScalarField value;
  // dS/dt, -Delta S, -2|alpha|^2, 2(Rc - alpha)(V,V), <4 Div alpha - 2 grad S, V>
  std::array<ScalarField, 5> parts;
};

DalphaEvaluation eval_dalpha(const ConformalMetric& m, const SymTensor2Field& alpha, const ScalarField& s,
                             const ScalarField& dsdt, const VectorField& v);

// 2a(Delta phi - <grad phi, V>)^2
ScalarField dalpha_extended_closed_form(const ConformalMetric& m, const ScalarField& phi, double a,
                                        const VectorField& v);

struct FlowTrajectory;

enum class AlphaChoice { Model, Flow };
enum class DsdtSource { Auto, Difference, Analytic };

// D_alpha(V) at a stored time of the trajectory.
DalphaEvaluation eval_dalpha_generic(const FlowTrajectory& traj, double t, const VectorField& v,
                                     AlphaChoice which = AlphaChoice::Model,
                                     DsdtSource src = DsdtSource::Auto);

struct DalphaCertificate {
  double min_d = 0.0;
  double tol_d = 0.0;
  std::string argmin_field;
  double argmin_time = 0.0;
  bool nonnegative = true;
};

// Minimum of D over the probe directions {0, +-e1, +-e2, extra..., random unit fields} at each
// probed time. For ExtendedRicci the minimizing direction grad(Delta phi)/... is added.
DalphaCertificate dalpha_nonneg_certificate(const FlowTrajectory& traj, const std::vector<double>& times,
                                            const std::vector<VectorField>& extra, int random_fields,
                                            unsigned seed);

}  // namespace fh

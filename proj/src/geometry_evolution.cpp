#include "flowharnack/flow.hpp"
#include "flowharnack/geometry.hpp"

namespace fh {

double check_laplacian_evolution(const FlowTrajectory& traj, const ScalarField& f, double t) {
  std::size_t k = traj.index_of(t);
  if (k == 0 || k + 1 >= traj.size()) throw Error("laplacian evolution needs an interior time");
  require_same(traj.chart, f.chart);
  ScalarField lhs = centered_difference(laplace_beltrami(traj.metric(k - 1), f), laplace_beltrami(traj.metric(k), f),
                                        laplace_beltrami(traj.metric(k + 1), f), traj.times[k - 1], traj.times[k],
                                        traj.times[k + 1]);
  ConformalMetric m = traj.metric(k);
  SymTensor2Field alpha = flow_alpha(m, traj.alpha(k));
  ScalarField rhs = 2.0 * tensor_inner(m, alpha, hessian(m, f)) +
                    inner(m, 2.0 * divergence_sym(m, alpha) - gradient(m, traj.s[k]), gradient(m, f));
  return (lhs - rhs).max_abs();
}

}  // namespace fh

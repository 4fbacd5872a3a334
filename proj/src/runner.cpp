#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "flowharnack/cli_io.hpp"
#include "flowharnack/entropy.hpp"
#include "flowharnack/harnack.hpp"
#include "flowharnack/reduced.hpp"
#include "json.hpp"

namespace fh {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr double kPi = 3.14159265358979323846;

struct Series {
  std::string file;
  std::vector<std::string> cols;
  std::vector<std::vector<double>> rows;
};

double image_tail(double L, double tau) { return std::exp(-L * L / (4 * tau)) / (4 * kPi * tau); }

ScalarField smooth_density(const GridChart& c) {
  return ScalarField::from_function(c, [&](double x, double y) {
    return 1 + 0.3 * std::cos(2 * kPi * x / c.lx) * std::sin(2 * kPi * (x / c.lx + y / c.ly));
  });
}

DtPolicy dt_policy(const Scenario& s) {
  DtPolicy p;
  p.safety = s.safety;
  if (s.dt != "cfl") {
    p.kind = DtPolicy::Kind::Fixed;
    p.dt = std::stod(s.dt);
  }
  return p;
}

FlowTrajectory evolve_scenario(const Scenario& s, double T, int stride) {
  Model m = model_of(s);
  ScalarField u0 = initial_field(s.u0, s.grid, s.seed);
  std::optional<ScalarField> phi;
  if (m.has_aux()) phi = initial_field(s.phi0, s.grid, s.seed + 1);
  Stencil st = s.stencil == 4 ? Stencil::Fourth : Stencil::Second;
  return evolve(m, ConformalMetric(u0, st), phi, T, dt_policy(s), stride);
}

struct Ctx {
  Scenario s;
  FlowTrajectory tr;
  std::optional<KernelSolution> ker;
  std::optional<ForwardSolution> one, wavy;
  std::optional<CurvatureBounds> bounds;
  std::optional<DalphaCertificate> cert;
  std::vector<Series> series;

  const GridChart& c() const { return tr.chart; }
  bool flat() const { return s.model == "static" && s.u0 == "zero"; }
  double h2() const { return std::max(c().hx() * c().hx(), c().hy() * c().hy()); }

  const KernelSolution& kernel() {
    if (!ker) ker = solve_kernel(tr, s.base.first, s.base.second);
    return *ker;
  }
  const ForwardSolution& phi_one() {
    if (!one) one = solve_forward(tr, ScalarField(c(), 1.0));
    return *one;
  }
  const ForwardSolution& phi_wavy() {
    if (!wavy) {
      const GridChart& g = c();
      wavy = solve_forward(tr, ScalarField::from_function(g, [&](double x, double y) {
        return 1.5 + 0.5 * std::sin(2 * kPi * x / g.lx) * std::cos(2 * kPi * y / g.ly);
      }));
    }
    return *wavy;
  }
  const CurvatureBounds& curvature() {
    if (!bounds) bounds = measure_bounds(tr);
    return *bounds;
  }
  std::size_t interior(double t) const {
    std::size_t k = tr.nearest_index(t);
    return std::clamp<std::size_t>(k, 1, tr.size() - 2);
  }
  const DalphaCertificate& certificate(int random_fields = 4) {
    if (!cert) {
      std::vector<double> ts;
      for (double f : {0.25, 0.5, 0.75}) ts.push_back(tr.times[interior(f * tr.T())]);
      cert = dalpha_nonneg_certificate(tr, ts, {}, random_fields, s.seed);
    }
    return *cert;
  }
  bool hypothesis_holds() { return certificate().nonnegative; }
};

double param(const CheckSpec& c, const std::string& k, double dflt) {
  auto it = c.params.find(k);
  return it == c.params.end() ? dflt : it->second;
}

CheckRecord rec(const std::string& name, double value, double tol, bool pass, const std::string& note = "") {
  return {name, value, tol, pass ? "pass" : "fail", note};
}

CheckRecord reported(const std::string& name, double value, const std::string& note = "") {
  return {name, value, 0.0, "reported", note};
}

std::string num(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

using Records = std::vector<CheckRecord>;

struct Residuals {
  double identity;
  double identity_scale;
  double ulogu;
  double laplacian;
};

// Short run from the scenario's initial data with a smooth conjugate solution.
Residuals short_residuals(const Scenario& s, double T) {
  FlowTrajectory tr = evolve_scenario(s, T, 1);
  KernelSolution sol = solve_conjugate(tr, smooth_density(tr.chart));
  double t = tr.times[std::clamp<std::size_t>(tr.nearest_index(T / 2), 1, tr.size() - 2)];
  IdentityResidual r = identity_residual(sol, t);
  const GridChart& c = tr.chart;
  ScalarField f = ScalarField::from_function(c, [&](double x, double y) {
    return std::sin(2 * kPi * x / c.lx) * std::cos(2 * kPi * y / c.ly) + 0.5 * std::cos(4 * kPi * x / c.lx);
  });
  return {r.residual, r.scale, ulogu_residual(sol, t), check_laplacian_evolution(tr, f, t)};
}

Records check_gauss_bonnet(Ctx& x, const CheckSpec& c) {
  double worst = 0;
  std::size_t step = std::max<std::size_t>(1, x.tr.size() / 50);
  for (std::size_t k = 0; k < x.tr.size(); k += step) {
    ConformalMetric m = x.tr.metric(k);
    worst = std::max(worst, std::abs(integrate(m, gauss_curvature(m))));
  }
  double tol = param(c, "tol", 1e-6);
  return {rec("gauss_bonnet", worst, tol, worst <= tol, "max |int K dmu| over stored times")};
}

Records check_dalpha(Ctx& x, const CheckSpec& c) {
  x.cert.reset();
  const DalphaCertificate& d = x.certificate(static_cast<int>(param(c, "random_fields", 4)));
  if (d.nonnegative) return {rec("dalpha", d.min_d, d.tol_d, true, "min D over probe directions >= -tolerance")};
  return {{"dalpha", d.min_d, d.tol_d, "warn",
           "D negative at t=" + num(d.argmin_time) + " (V=" + d.argmin_field + "): hypothesis unmet, D >= 0 checks skipped"}};
}

Records check_laplacian_evolution(Ctx& x, const CheckSpec& c) {
  Residuals r = short_residuals(x.s, param(c, "T", 0.004));
  return {reported("laplacian_evolution", r.laplacian, "sup residual; orders come from --refine")};
}

Records check_identity(Ctx& x, const CheckSpec& c) {
  Residuals r = short_residuals(x.s, param(c, "T", 0.004));
  return {reported("identity", r.identity / r.identity_scale, "relative sup residual of Box* v; orders come from --refine"),
          reported("identity.ulogu", r.ulogu, "sup residual of the U log U identity")};
}

Records skipped(const std::string& name) {
  return {{name, 0, 0, "skipped", "D >= 0 not certified on this flow"}};
}

Records check_harnack(Ctx& x, const CheckSpec& c) {
  const KernelSolution& ker = x.kernel();
  if (!x.hypothesis_holds()) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < ker.size(); ++k)
      if (ker.tau[k] >= x.tr.T() / 4) m = std::max(m, harnack_lhs(ker, ker.times[k]).max());
    return {{"harnack", m, 0, "skipped", "D >= 0 not certified; max LHS shown, not asserted"}};
  }
  const GridChart& g = x.c();
  double L = std::min(g.lx, g.ly);
  int every = static_cast<int>(param(c, "every", 10));
  Series ser{"harnack", {"time", "tau", "max_lhs", "tolerance"}, {}};
  double value = -std::numeric_limits<double>::infinity(), tol = std::numeric_limits<double>::infinity();
  bool pass = true;
  auto [i0, j0] = *ker.base;
  if (x.flat()) {
    // equality case: |L| in the single-image disc d^2 <= 8 tau
    double tau_min = param(c, "tau_min", std::min(0.1, x.tr.T() / 2));
    value = 0;
    for (std::size_t k = 0; k + 1 < ker.size(); k += every) {
      double tau = ker.tau[k];
      if (tau < tau_min) continue;
      ScalarField lhs = harnack_lhs(ker, ker.times[k]);
      double worst = 0;
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
          if (torus_dist2(g, g.x(i), g.y(j), g.x(i0), g.y(j0)) <= 8 * tau) worst = std::max(worst, std::abs(lhs.at(i, j)));
      double t = param(c, "tol", 10 * (x.h2() + image_tail(L, tau)));
      ser.rows.push_back({ker.times[k], tau, worst, t});
      value = std::max(value, worst);
      tol = std::min(tol, t);
      pass = pass && worst <= t;
    }
    x.series.push_back(std::move(ser));
    return {rec("harnack", value, tol, pass, "flat equality case: max |L| in the single-image disc")};
  }
  double smax = 0;
  for (auto& s : x.tr.s) smax = std::max(smax, s.max_abs());
  // below about 10 h^2 the kernel is not resolved and the lattice error takes over
  double tau_min = param(c, "tau_min", std::max(x.tr.T() / 4, 12 * x.h2()));
  for (std::size_t k = 0; k + 1 < ker.size(); k += every) {
    double tau = ker.tau[k];
    if (tau < tau_min) continue;
    double m = harnack_lhs(ker, ker.times[k]).max();
    double t = param(c, "tol", 20 * x.h2() * smax + image_tail(L, tau));
    ser.rows.push_back({ker.times[k], tau, m, t});
    value = std::max(value, m);
    tol = std::min(tol, t);
    pass = pass && m <= t;
  }
  x.series.push_back(std::move(ser));
  return {rec("harnack", value, tol, pass, "max over space and probed times of the Harnack quantity")};
}

Records check_mass(Ctx& x, const CheckSpec& c) {
  const KernelSolution& ker = x.kernel();
  double worst = 0;
  for (double m : ker.mass) worst = std::max(worst, std::abs(m - 1));
  double tol = param(c, "tol", 1e-6);
  return {rec("mass", worst, tol, worst <= tol, "max |mass - 1| along the kernel")};
}

Records check_asymptotics(Ctx& x, const CheckSpec& c) {
  const KernelSolution& ker = x.kernel();
  double probe = param(c, "steps", 100) * x.tr.dt_max;
  std::size_t k = x.tr.nearest_index(x.tr.T() - probe);
  AsymptoticsReport r = check_asymptotics(ker, ker.tau[k], 4.0, param(c, "tol", 0.05));
  if (r.trend_only)
    return {rec("asymptotics", std::abs(r.diag_ratio - 1), r.tol, std::abs(r.diag_ratio - 1) <= r.tol,
                "curved metric: diagonal ratio 4 pi tau H(y,y) at tau=" + num(r.tau))};
  return {rec("asymptotics", r.max_ratio_err, r.tol, r.pass, "max ratio error on the disc at tau=" + num(r.tau)),
          reported("asymptotics.diagonal", r.diag_ratio, "4 pi tau H(y,y)")};
}

Records check_gradient_estimate(Ctx& x, const CheckSpec& c) {
  if (!x.hypothesis_holds()) return skipped("gradient_estimate");
  const KernelSolution& ker = x.kernel();
  GradientEstimateReport g = gradient_estimate_check(ker, x.curvature(), param(c, "tau_end", ker.tau.front()));
  return {rec("gradient_estimate", g.worst, 0.0, g.pass,
              "max of lhs - rhs on the final slice; C1=" + num(g.C1) + " C2=" + num(g.C2))};
}

Records check_linf(Ctx& x, const CheckSpec&) {
  LinfReport l = linf_bound_check(x.kernel());
  Series ser{"linf", {"tau", "scaled_max"}, {}};
  for (std::size_t i = 0; i < l.tau.size(); ++i) ser.rows.push_back({l.tau[i], l.scaled_max[i]});
  x.series.push_back(std::move(ser));
  return {reported("linf", l.c_emp, "C_emp = max tau max q at tau=" + num(l.tau_at_max))};
}

Records check_rho(Ctx& x, const CheckSpec& c) {
  if (!x.hypothesis_holds()) return skipped("rho_phi");
  const KernelSolution& ker = x.kernel();
  int min_steps = static_cast<int>(param(c, "min_steps", 100));
  double tol_limit = param(c, "tol_limit", 5e-3 * kDim);
  Records out;
  Series ser{"rho", {"time", "tau", "rho_one", "rho_wavy"}, {}};
  std::vector<RhoSeries> rs;
  for (const ForwardSolution* f : {&x.phi_one(), &x.phi_wavy()}) rs.push_back(rho_phi(ker, *f, min_steps, tol_limit));
  const char* names[] = {"rho_phi.one", "rho_phi.wavy"};
  for (int q = 0; q < 2; ++q) {
    const RhoSeries& r = rs[q];
    out.push_back(rec(names[q], r.final_abs, r.tol_limit, r.monotone && r.limit_ok,
                      "|rho| at tau=" + num(r.tau.back()) + "; worst decrease " + num(r.worst_decrease) +
                          " against tol_mono " + num(r.tol_mono)));
  }
  for (std::size_t i = 0; i < rs[0].times.size(); ++i)
    ser.rows.push_back({rs[0].times[i], rs[0].tau[i], rs[0].rho[i], rs[1].rho[i]});
  x.series.push_back(std::move(ser));
  return out;
}

Records check_lemma33(Ctx& x, const CheckSpec& c) {
  if (!x.hypothesis_holds()) return skipped("lemma33");
  const KernelSolution& ker = x.kernel();
  RhoSeries r = rho_phi(ker, x.phi_one(), static_cast<int>(param(c, "min_steps", 100)), param(c, "tol_limit", 5e-3 * kDim));
  double v = lemma33_integral(ker, x.phi_one(), r.times.back());
  return {rec("lemma33", v, r.tol_limit, v <= r.tol_limit, "int (h - n/2) H dmu at tau=" + num(r.tau.back()))};
}

Records check_w(Ctx& x, const CheckSpec& c) {
  if (!x.hypothesis_holds()) return skipped("w_monotone");
  MonotoneSeries m = check_w_monotone(x.kernel(), param(c, "floor_h2", 40));
  Series ser{"w", {"time", "tau", "W"}, {}};
  for (std::size_t i = 0; i < m.times.size(); ++i) ser.rows.push_back({m.times[i], m.tau[i], m.value[i]});
  x.series.push_back(std::move(ser));
  return {rec("w_monotone", m.worst_decrease, m.tol_mono, m.monotone, "largest drop below the running maximum")};
}

Records check_mu(Ctx& x, const CheckSpec& c) {
  if (!x.hypothesis_holds()) return skipped("mu_monotone");
  int n = static_cast<int>(param(c, "slices", 5));
  std::vector<std::size_t> sl;
  for (int q = 0; q < n; ++q) sl.push_back(x.tr.nearest_index(x.tr.T() * q / n));
  MonotoneSeries m = check_mu_monotone(x.tr, sl);
  Series ser{"mu", {"time", "tau", "mu", "el_residual"}, {}};
  for (std::size_t i = 0; i < m.times.size(); ++i) ser.rows.push_back({m.times[i], m.tau[i], m.value[i], m.el_residual[i]});
  x.series.push_back(std::move(ser));
  Records out{rec("mu_monotone", m.worst_decrease, m.tol_mono, m.monotone, "largest drop below the running maximum")};
  double worst_el = 0, tol_el = std::numeric_limits<double>::infinity(), mu_max = -1e300;
  for (std::size_t i = 0; i < m.value.size(); ++i) {
    worst_el = std::max(worst_el, m.el_residual[i]);
    tol_el = std::min(tol_el, 1e-5 * (1 + std::abs(m.value[i])));
    mu_max = std::max(mu_max, m.value[i]);
  }
  out.push_back(rec("mu_euler_lagrange", worst_el, tol_el, worst_el <= tol_el, "sup Euler-Lagrange residual of the minimizers"));
  if (x.flat()) out.push_back(rec("mu_nonpositive", mu_max, 0.0, mu_max <= 0, "largest mu on the flat torus"));
  else out.push_back(reported("mu_nonpositive", mu_max, "largest mu; asserted on flat tori only"));
  return out;
}

Records check_upsilon(Ctx& x, const CheckSpec& c) {
  UpsilonReport u = upsilon(x.tr.metric(0), x.tr.s[0], param(c, "tau_max", 0.05), param(c, "tau_min", 1e-3),
                            static_cast<int>(param(c, "per_decade", 8)));
  Series ser{"upsilon", {"tau", "mu"}, {}};
  for (std::size_t i = 0; i < u.tau.size(); ++i) ser.rows.push_back({u.tau[i], u.mu[i]});
  x.series.push_back(std::move(ser));
  return {reported("upsilon", u.upsilon, "min of mu(g(0), tau) at tau=" + num(u.tau_at_min))};
}

Records check_reduced(Ctx& x, const CheckSpec& c) {
  const FlowTrajectory& tr = x.tr;
  const GridChart& g = x.c();
  int probes = static_cast<int>(param(c, "probes", 4));
  CurveOptions opt;
  opt.m = static_cast<int>(param(c, "segments", 16));
  std::vector<double> taus;
  for (int q = 1; q <= probes; ++q) taus.push_back(tr.T() - tr.times[tr.nearest_index(tr.T() * (1 - q / (probes + 1.0)))]);
  GridPoint y = x.s.base;
  ReducedReport rep = reduced_series(tr, y, taus, opt);
  ScalarField d2 = distance2_T(tr, y, opt);
  const CurvatureBounds& b = x.curvature();
  Records out;
  Series ser{"reduced", {"tau", "volume", "sandwich_lower", "sandwich_upper", "lipschitz", "lipschitz_bound"}, {}};
  double sw = -1e300, sw_tol = 0, lip = 0, lip_bound = 0;
  bool sw_ok = true, lip_ok = true;
  for (std::size_t q = 0; q < rep.tau.size(); ++q) {
    SandwichReport s = check_sandwich(tr, b, rep.ell[q], d2, rep.tau[q]);
    LipschitzReport l = check_lipschitz(tr, b, rep.ell[q], d2, rep.tau[q]);
    ser.rows.push_back({rep.tau[q], rep.volume[q], s.worst_lower, s.worst_upper, l.max_quotient, l.bound});
    double w = std::max(s.worst_lower, s.worst_upper);
    if (w > sw) {
      sw = w;
      sw_tol = s.tol;
    }
    sw_ok = sw_ok && s.pass;
    if (l.max_quotient / l.bound > lip / std::max(lip_bound, 1e-300) || q == 0) {
      lip = l.max_quotient;
      lip_bound = l.bound;
    }
    lip_ok = lip_ok && l.pass;
  }
  x.series.push_back(std::move(ser));
  out.push_back(rec("reduced.sandwich", sw, sw_tol, sw_ok, "largest violation of either side over the probes"));
  out.push_back(rec("reduced.lipschitz", lip, lip_bound, lip_ok, "neighbour quotient of ell against the bound"));
  out.push_back({"reduced.volume_trend", rep.volume_nonincreasing ? 1.0 : 0.0, 0.0, "reported",
                 rep.volume_nonincreasing ? "V(tau) non-increasing over the probes" : "V(tau) increases somewhere"});
  if (x.flat()) {
    double worst = 0, vol = 0, eps = std::numeric_limits<double>::infinity();
    double L = std::min(g.lx, g.ly);
    for (std::size_t q = 0; q < rep.tau.size(); ++q) {
      double tau = rep.tau[q];
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
          double dd = torus_dist2(g, g.x(i), g.y(j), g.x(y.first), g.y(y.second));
          if (dd < 9 * x.h2()) continue;
          worst = std::max(worst, std::abs(rep.ell[q].at(i, j) / (dd / (4 * tau)) - 1));
        }
      // Gaussian mass outside the fundamental cell
      double tail = 1 - std::pow(std::erf(L / (4 * std::sqrt(tau))), 2);
      vol = std::max(vol, std::abs(rep.volume[q] - 1));
      eps = std::min(eps, tail + 1e-3);
    }
    double tol = param(c, "tol_ell", 0.01);
    out.push_back(rec("reduced.flat_ell", worst, tol, worst <= tol, "relative error against d^2/4tau for d >= 3h"));
    out.push_back(rec("reduced.flat_volume", vol, eps, vol <= eps, "|V - 1| against image tail + 1e-3"));
  }
  if (!x.hypothesis_holds()) {
    out.push_back(skipped("reduced.subsolution").front());
    out.push_back(skipped("reduced.h_le_ell").front());
    return out;
  }
  if (rep.tau.size() >= 3) {
    SubsolutionReport sub = check_subsolution(tr, rep);
    double worst = -1e300;
    for (double v : sub.max_value) worst = std::max(worst, v);
    out.push_back(rec("reduced.subsolution", worst, sub.tol, sub.pass, "max Box* F at the interior probes"));
  }
  ComparisonReport cmp = check_h_le_ell(x.kernel(), rep);
  double ex = -1e300;
  for (double v : cmp.max_excess) ex = std::max(ex, v);
  out.push_back(rec("reduced.h_le_ell", ex, cmp.tol, cmp.pass, "max of h - ell over the probes"));
  return out;
}

using CheckFn = std::function<Records(Ctx&, const CheckSpec&)>;

const std::map<std::string, CheckFn>& registry() {
  static const std::map<std::string, CheckFn> r{
      {"gauss_bonnet", check_gauss_bonnet},
      {"dalpha", check_dalpha},
      {"laplacian_evolution", check_laplacian_evolution},
      {"identity", check_identity},
      {"harnack", check_harnack},
      {"mass", check_mass},
      {"asymptotics", check_asymptotics},
      {"gradient_estimate", check_gradient_estimate},
      {"linf", check_linf},
      {"rho_phi", check_rho},
      {"lemma33", check_lemma33},
      {"w_monotone", check_w},
      {"mu_monotone", check_mu},
      {"upsilon", check_upsilon},
      {"reduced", check_reduced},
  };
  return r;
}

Records run_one(Ctx& x, const CheckSpec& c) {
  try {
    return registry().at(c.name)(x, c);
  } catch (const NumericalAbort&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const ConvergenceError& e) {
    return {{c.name, e.best(), 0.0, "fail", std::string("did not converge: ") + e.what()}};
  } catch (const Error& e) {
    return {{c.name, 0.0, 0.0, "fail", e.what()}};
  }
}

json record_json(const CheckRecord& r) {
  json j;
  j["name"] = r.name;
  j["value"] = r.value;
  j["tolerance"] = r.tolerance;
  j["verdict"] = r.verdict;
  j["note"] = r.note;
  return j;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream o(p, std::ios::binary);
  if (!o) throw Error("cannot write " + p.string());
  o << text;
}

void write_series(const fs::path& dir, const Series& s) {
  std::ostringstream csv;
  csv.precision(17);
  csv << "# flowharnack csv v1 " << s.file << "\n";
  for (std::size_t i = 0; i < s.cols.size(); ++i) csv << (i ? "," : "") << s.cols[i];
  csv << "\n";
  for (auto& row : s.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
    csv << "\n";
  }
  write_text(dir / (s.file + ".csv"), csv.str());
  // two-column files against the second column when it is tau, else the first
  std::size_t xcol = s.cols.size() > 1 && s.cols[1] == "tau" ? 1 : 0;
  for (std::size_t col = 0; col < s.cols.size(); ++col) {
    if (col == xcol || s.cols[col] == "time" || s.cols[col] == "tau") continue;
    std::ostringstream dat;
    dat.precision(17);
    dat << "# " << s.cols[xcol] << " " << s.cols[col] << "\n";
    for (auto& row : s.rows) dat << row[xcol] << " " << row[col] << "\n";
    write_text(dir / (s.file + "_" + s.cols[col] + ".dat"), dat.str());
  }
}

std::string summary_text(const Scenario& s, const std::string& hash, const Records& recs, int exit_code) {
  json j;
  j["format"] = "flowharnack-summary";
  j["version"] = 1;
  j["scenario"] = s.name;
  j["config_hash"] = hash;
  j["seed"] = s.seed;
  j["grid"] = {s.grid.nx, s.grid.ny};
  j["model"] = s.model;
  j["harnack_coupling_note"] = "h evolves by the conjugate heat equation along the stored flow";
  json arr = json::array();
  for (auto& r : recs) arr.push_back(record_json(r));
  j["records"] = arr;
  j["exit_code"] = exit_code;
  return j.dump(2) + "\n";
}

int verdict_code(const Records& recs, std::string& message) {
  std::vector<std::string> failed;
  for (auto& r : recs)
    if (r.verdict == "fail") failed.push_back(r.name);
  if (failed.empty()) return 0;
  message = "failed checks:";
  for (auto& f : failed) message += " " + f;
  return 1;
}

Scenario apply(const Scenario& in, const RunOptions& opt) {
  Scenario s = in;
  if (opt.grid) {
    double hx = s.grid.lx / s.grid.nx;
    (void)hx;
    int old = s.grid.nx;
    s.grid.nx = s.grid.ny = *opt.grid;
    try {
      s.grid.validate();
    } catch (const Error& e) {
      throw ConfigError(0, std::string("--grid: ") + e.what());
    }
    // keep the basepoint at the same physical location
    s.base = {static_cast<int>(static_cast<long>(s.base.first) * *opt.grid / old),
              static_cast<int>(static_cast<long>(s.base.second) * *opt.grid / old)};
  }
  if (opt.seed) s.seed = *opt.seed;
  if (opt.output) s.output = *opt.output;
  return s;
}

template <class F>
RunResult guarded(F&& body) {
  RunResult r;
  try {
    body(r);
  } catch (const ConfigError& e) {
    r.exit_code = 2;
    r.message = std::string("config error: ") + e.what();
  } catch (const NumericalAbort& e) {
    r.exit_code = 3;
    std::ostringstream o;
    o.precision(17);
    o << "numerical abort at t=" << e.time() << ": " << e.what();
    r.message = o.str();
  } catch (const Error& e) {
    r.exit_code = 2;
    r.message = std::string("error: ") + e.what();
  }
  return r;
}

Records refine_records(const Scenario& s, int levels, double T, Series& ser) {
  std::vector<int> grids;
  for (int q = levels - 1; q >= 0; --q) {
    int n = s.grid.nx >> q;
    if (n < 16 || (n << q) != s.grid.nx) throw ConfigError(0, "--refine " + std::to_string(levels) + " needs a grid divisible down to 16");
    grids.push_back(n);
  }
  std::vector<Residuals> res;
  for (int n : grids) {
    Scenario t = s;
    t.grid.nx = n;
    t.grid.ny = s.grid.ny * n / s.grid.nx;
    res.push_back(short_residuals(t, T));
    ser.rows.push_back({double(n), res.back().identity, res.back().ulogu, res.back().laplacian});
  }
  double oid = 1e300, oul = 1e300, olap = 1e300;
  for (std::size_t i = 1; i < res.size(); ++i) {
    oid = std::min(oid, std::log2(res[i - 1].identity / res[i].identity));
    oul = std::min(oul, std::log2(res[i - 1].ulogu / res[i].ulogu));
    olap = std::min(olap, std::log2(res[i - 1].laplacian / res[i].laplacian));
  }
  std::string note = "smallest observed order over grids";
  for (int n : grids) note += " " + std::to_string(n);
  return {rec("identity.order", oid, 1.8, oid >= 1.8, note), rec("identity.ulogu_order", oul, 1.8, oul >= 1.8, note),
          rec("laplacian_evolution.order", olap, 1.8, olap >= 1.8, note)};
}

}  // namespace

RunResult run_scenario(const Scenario& in, const RunOptions& opt) {
  return guarded([&](RunResult& r) {
    Scenario s = apply(in, opt);
    r.hash = config_hash(s);
    r.run_dir = s.output;
    Ctx x{s, evolve_scenario(s, s.T, s.stride), {}, {}, {}, {}, {}, {}};
    Records recs;
    for (const auto& c : s.checks) {
      Records part = run_one(x, c);
      recs.insert(recs.end(), part.begin(), part.end());
    }
    if (opt.refine > 1) {
      Series ser{"refine", {"grid", "identity_residual", "ulogu_residual", "laplacian_residual"}, {}};
      Records part = refine_records(s, opt.refine, 0.004, ser);
      recs.insert(recs.end(), part.begin(), part.end());
      x.series.push_back(std::move(ser));
    }
    r.exit_code = verdict_code(recs, r.message);
    r.records = recs;
    r.summary_json = summary_text(s, r.hash, recs, r.exit_code);
    if (opt.write) {
      fs::path dir(s.output);
      fs::create_directories(dir);
      write_text(dir / "scenario.cfg", serialize(s));
      write_checkpoint((dir / "flow.ckpt").string(), trajectory_checkpoint(x.tr));
      for (auto& ser : x.series) write_series(dir, ser);
      write_text(dir / "summary.json", r.summary_json);
    }
  });
}

RunResult run_flow(const Scenario& in, const RunOptions& opt) {
  return guarded([&](RunResult& r) {
    Scenario s = apply(in, opt);
    r.hash = config_hash(s);
    r.run_dir = s.output;
    FlowTrajectory tr = evolve_scenario(s, s.T, s.stride);
    Series ser{"flow", {"time", "u_min", "u_max", "s_max_abs", "volume"}, {}};
    for (std::size_t k = 0; k < tr.size(); ++k)
      ser.rows.push_back({tr.times[k], tr.u[k].min(), tr.u[k].max(), tr.s[k].max_abs(), tr.metric(k).total_volume()});
    r.records.push_back(reported("flow.steps", double(tr.steps), "stored " + std::to_string(tr.size()) + " slices"));
    r.records.push_back(reported("flow.dt_max", tr.dt_max));
    r.summary_json = summary_text(s, r.hash, r.records, 0);
    if (opt.write) {
      fs::path dir(s.output);
      fs::create_directories(dir);
      write_text(dir / "scenario.cfg", serialize(s));
      write_checkpoint((dir / "flow.ckpt").string(), trajectory_checkpoint(tr));
      write_series(dir, ser);
    }
  });
}

RunResult run_kernel(const std::string& checkpoint, int i, int j) {
  return guarded([&](RunResult& r) {
    FlowTrajectory tr = trajectory_from_checkpoint(read_checkpoint(checkpoint));
    if (i < 0 || j < 0 || i >= tr.chart.nx || j >= tr.chart.ny) throw ConfigError(0, "--at lies outside the grid");
    KernelSolution ker = solve_kernel(tr, i, j);
    double drift = 0;
    for (double m : ker.mass) drift = std::max(drift, std::abs(m - 1));
    std::size_t k = tr.nearest_index(tr.T() / 2);
    r.records.push_back(rec("kernel.mass", drift, 1e-6, drift <= 1e-6, "max |mass - 1|"));
    r.records.push_back(reported("kernel.diagonal", 4 * kPi * ker.tau[k] * ker.u[k].at(i, j),
                                 "4 pi tau H(y,y) at tau=" + num(ker.tau[k])));
    fs::path out = fs::path(checkpoint).parent_path() / ("kernel_" + std::to_string(i) + "_" + std::to_string(j) + ".ckpt");
    write_checkpoint(out.string(), kernel_checkpoint(ker));
    r.run_dir = fs::path(checkpoint).parent_path().string();
    r.exit_code = verdict_code(r.records, r.message);
  });
}

RunResult run_check(const std::string& name, const std::string& run_dir) {
  return guarded([&](RunResult& r) {
    if (!registry().count(name)) throw ConfigError(0, "unknown check '" + name + "'");
    fs::path dir(run_dir);
    Scenario s = load_scenario((dir / "scenario.cfg").string());
    Checkpoint ck = read_checkpoint((dir / "flow.ckpt").string());
    FlowTrajectory tr = trajectory_from_checkpoint(ck);
    tr.model = model_of(s);
    r.hash = config_hash(s);
    r.run_dir = run_dir;
    Ctx x{s, std::move(tr), {}, {}, {}, {}, {}, {}};
    CheckSpec spec{name, {}};
    for (auto& c : s.checks)
      if (c.name == name) spec = c;
    r.records = run_one(x, spec);
    r.exit_code = verdict_code(r.records, r.message);
  });
}

RunResult run_report(const std::string& run_dir) {
  return guarded([&](RunResult& r) {
    fs::path p = fs::path(run_dir) / "summary.json";
    std::ifstream f(p);
    if (!f) throw ConfigError(0, "no summary.json in " + run_dir);
    json j;
    try {
      j = json::parse(f);
      r.hash = j.at("config_hash").get<std::string>();
      for (auto& e : j.at("records"))
        r.records.push_back({e.at("name").get<std::string>(), e.at("value").get<double>(), e.at("tolerance").get<double>(),
                             e.at("verdict").get<std::string>(), e.at("note").get<std::string>()});
    } catch (const json::exception& e) {
      throw ConfigError(0, std::string("summary.json: ") + e.what());
    }
    r.run_dir = run_dir;
    r.exit_code = verdict_code(r.records, r.message);
  });
}

}  // namespace fh

// One line per acceptance criterion. Tolerances are fixed here, not read from scenarios.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flowharnack/cli_io.hpp"
#include "flowharnack/entropy.hpp"
#include "flowharnack/harnack.hpp"
#include "flowharnack/reduced.hpp"
#include "oracles.hpp"

using namespace fh;
using oracle::kPi;
namespace fs = std::filesystem;

namespace {

// pinned tolerances
constexpr double kGaussBonnet = 1e-6;
constexpr double kOrder = 1.8;
constexpr double kKernelRel = 1e-3;
constexpr double kMassDrift = 1e-6;
constexpr double kDiagonal = 0.05;
constexpr double kLinfStability = 0.05;
constexpr double kScaling = 1e-12;
constexpr double kMuFinal = 1e-2;
constexpr double kEll = 0.01;
constexpr double kVolumeSlack = 1e-3;

struct Line {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED[" << what << "]";
    }
  }
};

std::string g(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

GridChart chart(int n, double l = 1.0) { return GridChart{n, n, l, l}; }

Model kind(ModelKind k) {
  Model m;
  m.kind = k;
  return m;
}

ScalarField bump(const GridChart& c, double a) {
  return ScalarField::from_function(c, [&](double x, double y) {
    return a * std::sin(2 * kPi * x / c.lx) * std::sin(2 * kPi * y / c.ly);
  });
}

double image_tail(double L, double tau) { return std::exp(-L * L / (4 * tau)) / (4 * kPi * tau); }

struct PresetRun {
  RunResult result;
  std::map<std::string, CheckRecord> by_name;
  const CheckRecord& operator[](const std::string& n) const {
    static const CheckRecord missing{"missing", NAN, NAN, "missing", ""};
    auto it = by_name.find(n);
    return it == by_name.end() ? missing : it->second;
  }
};

PresetRun run_preset(const std::string& name, int refine = 1) {
  RunOptions o;
  o.write = false;
  o.refine = refine;
  PresetRun p;
  p.result = run_scenario(preset(name), o);
  for (auto& r : p.result.records) p.by_name[r.name] = r;
  std::fprintf(stderr, "  preset %s: exit %d %s\n", name.c_str(), p.result.exit_code, p.result.message.c_str());
  return p;
}

bool ok(const CheckRecord& r) { return r.verdict == "pass"; }

void expect(Line& l, const PresetRun& p, const std::string& preset_name, const std::string& rec) {
  const CheckRecord& r = p[rec];
  l.require(ok(r), preset_name + ":" + rec + "=" + r.verdict);
}

double order(double a, double b) { return std::log2(a / b); }

}  // namespace

int main() {
  auto cap = thread_cap_from_env();
  std::vector<std::pair<std::string, Line>> lines;
  auto emit = [&](const std::string& title, Line& l) {
    std::printf("[%s] %s:%s\n", l.pass ? "PASS" : "FAIL", title.c_str(), l.detail.str().c_str());
    std::fflush(stdout);
    lines.emplace_back(title, std::move(l));
  };

  std::fprintf(stderr, "running presets\n");
  PresetRun rp = run_preset("ricci-perturbed", 3);
  PresetRun ext = run_preset("extended-ricci");
  PresetRun flat = run_preset("flat-static");
  PresetRun neg = run_preset("negative-control");
  std::vector<std::pair<std::string, const PresetRun*>> nonneg{
      {"ricci-perturbed", &rp}, {"extended-ricci", &ext}, {"flat-static", &flat}};

  {
    Line l;
    double worst = 0;
    for (auto& [n, p] : nonneg) worst = std::max(worst, (*p)["gauss_bonnet"].value);
    for (unsigned seed = 1; seed <= 3; ++seed) {
      ConformalMetric m(oracle::random_smooth(chart(64, 1.7), seed, 0.3));
      worst = std::max(worst, std::abs(integrate(m, gauss_curvature(m))));
    }
    l.require(worst <= kGaussBonnet, "gauss-bonnet");
    std::vector<double> res;
    for (int n : {32, 64, 128}) {
      ConformalMetric m(oracle::random_smooth(chart(n), 2, 0.1));
      VectorField div = divergence_sym(m, ricci(m));
      VectorField half = 0.5 * gradient(m, scalar_curvature(m));
      res.push_back(std::max((div.x - half.x).max_abs(), (div.y - half.y).max_abs()));
    }
    double o = std::min(order(res[0], res[1]), order(res[1], res[2]));
    l.require(o >= kOrder, "bianchi order");
    l.detail << " max|int K dmu| " << g(worst) << " <= " << g(kGaussBonnet) << "; Bianchi order " << g(o) << " >= " << kOrder;
    emit("1 operator consistency", l);
  }

  {
    Line l;
    std::vector<double> res;
    for (int n : {32, 64, 128}) {
      GridChart c = chart(n);
      double T = 0.002;
      FlowTrajectory tr = evolve(kind(ModelKind::Ricci), ConformalMetric(bump(c, 0.05)), std::nullopt, T, DtPolicy{}, 1);
      ScalarField f = ScalarField::from_function(c, [&](double x, double y) {
        return std::sin(2 * kPi * x) * std::cos(2 * kPi * y) + 0.5 * std::cos(4 * kPi * x);
      });
      res.push_back(check_laplacian_evolution(tr, f, tr.times[tr.nearest_index(T / 2)]));
    }
    double o = std::min(order(res[0], res[1]), order(res[1], res[2]));
    double preset_order = rp["laplacian_evolution.order"].value;
    l.require(o >= kOrder, "order 32-64-128");
    expect(l, rp, "ricci-perturbed", "laplacian_evolution.order");
    l.detail << " residual order " << g(o) << " over 32/64/128, " << g(preset_order) << " over the preset's --refine 3";
    emit("2 Laplacian evolution", l);
  }

  {
    Line l;
    for (ModelKind mk : {ModelKind::Ricci, ModelKind::Static, ModelKind::ExtendedRicci}) {
      std::vector<double> res;
      for (int n : {16, 32, 64}) {
        GridChart c = chart(n);
        std::optional<ScalarField> phi;
        if (mk == ModelKind::ExtendedRicci)
          phi = ScalarField::from_function(c, [](double x, double y) {
            return 0.2 * std::sin(2 * kPi * x) + 0.1 * std::cos(2 * kPi * y);
          });
        double T = 0.004;
        FlowTrajectory tr = evolve(kind(mk), ConformalMetric(bump(c, 0.05)), phi, T, DtPolicy{}, 1);
        KernelSolution sol = solve_conjugate(tr, ScalarField::from_function(c, [](double x, double y) {
                                               return 1 + 0.3 * std::cos(2 * kPi * x) * std::sin(2 * kPi * (x + y));
                                             }));
        res.push_back(identity_residual(sol, tr.times[tr.nearest_index(T / 2)]).residual);
      }
      double o = std::min(order(res[0], res[1]), order(res[1], res[2]));
      l.require(o >= kOrder, Model{mk}.tag());
      l.detail << " " << Model{mk}.tag() << " " << g(o);
    }
    expect(l, rp, "ricci-perturbed", "identity.order");
    l.detail << "; ricci-perturbed --refine 3 " << g(rp["identity.order"].value) << " (threshold " << kOrder << ")";
    emit("3 identity orders", l);
  }

  {
    Line l;
    std::vector<double> dmax, tols;
    for (int n : {32, 64, 128}) {
      GridChart c = chart(n);
      FlowTrajectory tr = evolve(kind(ModelKind::Ricci), ConformalMetric(bump(c, 0.05)), std::nullopt, 0.002, DtPolicy{}, 1);
      double t = tr.times[tr.size() / 2];
      DalphaCertificate cert = dalpha_nonneg_certificate(tr, {t}, {}, 3, 7);
      double worst = 0;
      ConformalMetric m = tr.metric(tr.size() / 2);
      // tol_D is stated for unit-norm probes
      VectorField w = gradient(m, oracle::random_smooth(c, 7, 1.0));
      VectorField unit = map(norm_sq(m, w), [](double q) { return q > 1e-24 ? 1 / std::sqrt(q) : 0.0; }) * w;
      for (const VectorField& v : {VectorField(c), unit})
        worst = std::max(worst, eval_dalpha_generic(tr, t, v).value.max_abs());
      worst = std::max(worst, std::abs(cert.min_d));
      dmax.push_back(worst);
      tols.push_back(cert.tol_d);
    }
    l.require(dmax[0] <= tols[0] && dmax[1] <= tols[1] && dmax[2] <= tols[2], "ricci max|D| <= tol_D");
    l.require(dmax[1] < dmax[0] && dmax[2] < dmax[1], "ricci decreasing");
    l.detail << " Ricci max|D| " << g(dmax[0]) << "/" << g(dmax[1]) << "/" << g(dmax[2]) << " vs tol_D " << g(tols[0]) << "/"
             << g(tols[1]) << "/" << g(tols[2]) << ";";
    for (unsigned seed : {11u, 12u, 13u}) {
      std::vector<double> err;
      for (int n : {32, 64, 128}) {
        GridChart c = chart(n);
        ConformalMetric m(oracle::random_smooth(c, seed, 0.1));
        ScalarField phi = oracle::random_smooth(c, seed + 50, 0.5);
        Model e = kind(ModelKind::ExtendedRicci);
        e.coupling = 0.7;
        AlphaSnapshot a = make_alpha(e, m, &phi);
        VectorField v = gradient(m, oracle::random_smooth(c, seed + 90, 1.0));
        ScalarField generic = eval_dalpha(m, a.alpha, a.trace_s, *analytic_dsdt(e, m, a), v).value;
        ScalarField closed = dalpha_extended_closed_form(m, phi, e.coupling, v);
        err.push_back((generic - closed).max_abs() / closed.max_abs());
      }
      l.require(err[1] < err[0] && err[2] < err[1], "extended agreement vanishes");
      l.detail << " ext seed " << seed << " rel gap " << g(err[0]) << "->" << g(err[2]);
    }
    const CheckRecord& d = neg["dalpha"];
    l.require(d.value < 0 && d.verdict == "warn", "negative control min D < 0");
    l.require(neg.result.exit_code == 0, "negative control exit 0");
    l.detail << "; negative-control min D " << g(d.value) << " (" << d.verdict << ")";
    emit("4 D_alpha", l);
  }

  {
    Line l;
    for (auto& [n, p] : nonneg) {
      expect(l, *p, n, "harnack");
      l.detail << " " << n << " " << g((*p)["harnack"].value) << " <= " << g((*p)["harnack"].tolerance) << ";";
    }
    l.detail << " (flat-static uses max|LHS| <= 10(h^2 + image tail) in d^2 <= 8 tau)";
    emit("5 Harnack", l);
  }

  {
    Line l;
    GridChart c = chart(64, 2 * kPi);
    FlowTrajectory tr = evolve(kind(ModelKind::Static), ConformalMetric(ScalarField(c)), std::nullopt, 0.2, DtPolicy{}, 1);
    KernelSolution ker = solve_kernel(tr, 32, 32);
    double worst = 0, at = 0, at_half = -1;
    for (std::size_t k = 0; k < ker.size(); ++k) {
      double tau = ker.tau[k];
      if (tau < 25 * tr.dt_max * (1 - 1e-9) || tau > tr.T() / 2 * (1 + 1e-9)) continue;
      double err = 0, peak = 0;
      for (int j = 0; j < c.ny; ++j)
        for (int i = 0; i < c.nx; ++i) {
          double ref = oracle::image_sum_kernel(c, c.x(i), c.y(j), c.x(32), c.y(32), tau);
          err = std::max(err, std::abs(ker.u[k].at(i, j) - ref));
          peak = std::max(peak, ref);
        }
      if (err / peak > worst) {
        worst = err / peak;
        at = tau;
      }
      if (at_half < 0) at_half = err / peak;  // first slice in the window is the largest tau
    }
    double drift = 0;
    for (double m : ker.mass) drift = std::max(drift, std::abs(m - 1));
    std::size_t kp = tr.nearest_index(tr.T() - 100 * tr.dt_max);
    double diag = 4 * kPi * ker.tau[kp] * ker.u[kp].at(32, 32);
    l.require(worst <= kKernelRel, "image-sum rel sup <= 1e-3");
    l.require(drift <= kMassDrift, "mass");
    l.require(std::abs(diag - 1) <= kDiagonal, "diagonal");
    l.detail << " image-sum rel sup error max " << g(worst) << " at tau=" << g(at) << " (" << g(at / tr.dt_max)
             << " dt), " << g(at_half) << " at T/2, bound " << g(kKernelRel) << "; mass drift " << g(drift)
             << "; 4 pi tau H(y,y) = " << g(diag) << " at tau=100dt";
    emit("6 kernel oracle", l);
  }

  {
    Line l;
    for (auto& [n, p] : nonneg) {
      expect(l, *p, n, "gradient_estimate");
      expect(l, *p, n, "lemma33");
    }
    GridChart c = chart(32, 2 * kPi);
    auto cemp = [&](double safety) {
      FlowTrajectory tr = evolve(kind(ModelKind::Static), ConformalMetric(ScalarField(c)), std::nullopt, 0.5,
                                 DtPolicy{DtPolicy::Kind::Cfl, 0.0, safety}, 1);
      return linf_bound_check(solve_kernel(tr, 16, 16)).c_emp;
    };
    double a = cemp(0.2), b = cemp(0.1);
    double rel = std::abs(a / b - 1);
    l.require(rel <= kLinfStability, "C_emp stability");
    l.detail << " gradient estimate and int (h - n/2) H bound pass on all D >= 0 presets (ricci lemma33 "
             << g(rp["lemma33"].value) << " <= " << g(rp["lemma33"].tolerance) << "); C_emp " << g(a) << " vs "
             << g(b) << " under dt halving, change " << g(rel) << " <= " << kLinfStability;
    emit("7 bounds", l);
  }

  {
    Line l;
    for (auto& [n, p] : nonneg)
      for (auto r : {"rho_phi.one", "rho_phi.wavy"}) {
        expect(l, *p, n, r);
        l.detail << " " << n << ":" << (std::string(r) == "rho_phi.one" ? "one" : "wavy") << " |rho| "
                 << g((*p)[r].value);
      }
    l.detail << "; tol_limit " << g(rp["rho_phi.one"].tolerance);
    emit("8 rho_Phi", l);
  }

  {
    Line l;
    GridChart c = chart(32);
    ConformalMetric m{oracle::random_smooth(c, 3, 0.2)};
    double tau = 0.02;
    ScalarField dens = exp(oracle::random_smooth(c, 8, 0.5));
    dens = dens * (1.0 / integrate(m, dens));
    double w0 = w_of_density(m, scalar_curvature(m), tau, dens);
    double worst = 0;
    for (double k : {0.25, 3.0, 17.0}) {
      ConformalMetric mc{m.u + 0.5 * std::log(k)};
      double wc = w_of_density(mc, scalar_curvature(mc), k * tau, dens * (1.0 / k));
      worst = std::max(worst, std::abs(wc - w0) / std::abs(w0));
    }
    l.require(worst <= kScaling, "W scaling");
    for (auto& [n, p] : nonneg) {
      expect(l, *p, n, "w_monotone");
      expect(l, *p, n, "mu_monotone");
      expect(l, *p, n, "mu_euler_lagrange");
    }
    expect(l, flat, "flat-static", "mu_nonpositive");
    GridChart u = chart(64);
    ConformalMetric fm{ScalarField(u)};
    double prev = 1e300;
    bool dec = true, el = true;
    std::ostringstream seq;
    for (double t : {0.04, 0.02, 0.01, 0.005}) {
      MuResult r = mu_minimize(fm, ScalarField(u), t);
      dec = dec && std::abs(r.mu) < prev;
      el = el && r.el_residual <= r.tol_el;
      prev = std::abs(r.mu);
      seq << " " << g(r.mu);
    }
    l.require(dec, "|mu| decreasing");
    l.require(prev <= kMuFinal, "final |mu|");
    l.require(el, "dyadic EL");
    l.detail << " W scaling rel " << g(worst) << " <= " << kScaling << "; W, mu monotone and EL on D >= 0 presets; flat mu(tau)"
             << seq.str() << " final |mu| <= " << kMuFinal;
    emit("9 entropy", l);
  }

  {
    Line l;
    for (auto& [n, p] : nonneg) expect(l, *p, n, "reduced.sandwich");
    for (auto& [n, p] : nonneg) expect(l, *p, n, "reduced.h_le_ell");
    expect(l, flat, "flat-static", "reduced.flat_ell");
    expect(l, flat, "flat-static", "reduced.flat_volume");
    // independent flat spot checks against the nearest-lift distance
    GridChart c = chart(64, 2 * kPi);
    FlowTrajectory tr = evolve(kind(ModelKind::Static), ConformalMetric(ScalarField(c)), std::nullopt, 0.2, DtPolicy{}, 1);
    double tau = tr.T() - tr.times[tr.nearest_index(0.1)];
    double worst = 0;
    for (auto [i, j] : std::vector<std::pair<int, int>>{{40, 32}, {5, 60}, {63, 0}, {20, 45}}) {
      double d2 = oracle::torus_d2(c, c.x(i), c.y(j), c.x(32), c.y(32));
      double ell = reduced_distance(tr, {32, 32}, {i, j}, tau).ell;
      worst = std::max(worst, std::abs(ell / (d2 / (4 * tau)) - 1));
    }
    l.require(worst <= kEll, "flat ell spot checks");
    double vtail = 1 - std::pow(std::erf(c.lx / (4 * std::sqrt(tau))), 2);
    double V = reduced_volume(tr, reduced_distance_field(tr, {32, 32}, tau), tau);
    l.require(std::abs(V - 1) <= vtail + kVolumeSlack, "flat V");
    l.detail << " flat ell rel error " << g(flat["reduced.flat_ell"].value) << " (spot checks " << g(worst) << ") <= " << kEll
             << "; |V-1| " << g(std::abs(V - 1)) << " <= tail + " << kVolumeSlack << "; sandwich and h <= ell + tol_cmp on D >= 0 presets";
    emit("10 reduced geometry", l);
  }

  {
    Line l;
    RunOptions o;
    o.write = false;
    Scenario s = preset("negative-control");
    s.u0 = "random:0.02";
    std::string a = run_scenario(s, o).summary_json, b = run_scenario(s, o).summary_json;
    l.require(!a.empty() && a == b, "summary bit-identical");
    o.seed = s.seed + 1;
    l.require(run_scenario(s, o).summary_json != a, "seed changes the run");
    bool rt = true;
    for (auto& n : preset_names()) {
      Scenario p = preset(n);
      rt = rt && parse_scenario(serialize(p)) == p && serialize(parse_scenario(serialize(p))) == serialize(p);
    }
    l.require(rt, "scenario round-trip");
    fs::path dir = fs::temp_directory_path() / "flowharnack_acceptance";
    fs::create_directories(dir);
    GridChart c = chart(32);
    Model e = kind(ModelKind::ExtendedRicci);
    FlowTrajectory tr = evolve(e, ConformalMetric(oracle::random_smooth(c, 4, 0.1)), oracle::random_smooth(c, 5, 0.3), 0.002,
                               DtPolicy{}, 5);
    Checkpoint ck = trajectory_checkpoint(tr);
    write_checkpoint((dir / "t.ckpt").string(), ck);
    Checkpoint back = read_checkpoint((dir / "t.ckpt").string());
    l.require(back == ck, "checkpoint round-trip");
    FlowTrajectory tb = trajectory_from_checkpoint(back);
    bool same = tb.times == tr.times;
    for (std::size_t k = 0; same && k < tr.size(); ++k)
      for (std::size_t i = 0; i < tr.u[k].size(); ++i) same = same && std::bit_cast<std::uint64_t>(tr.u[k][i]) == std::bit_cast<std::uint64_t>(tb.u[k][i]);
    l.require(same, "trajectory bits");
    fs::remove_all(dir);
    l.detail << " summaries identical for a fixed seed (" << a.size() << " bytes); presets and checkpoints round-trip bit-exactly";
    emit("11 determinism and round-trip", l);
  }

  int failed = 0;
  for (auto& [t, l] : lines) failed += !l.pass;
  std::printf("%d/%zu criteria pass\n", int(lines.size()) - failed, lines.size());
  return failed ? 1 : 0;
}

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "flowharnack/cli_io.hpp"

namespace {

void print(const fh::RunResult& r) {
  for (const auto& c : r.records)
    std::printf("%-28s %-9s value=%.6e tol=%.3e  %s\n", c.name.c_str(), c.verdict.c_str(), c.value, c.tolerance,
                c.note.c_str());
  if (!r.hash.empty()) std::printf("config_hash %s\n", r.hash.c_str());
  if (!r.run_dir.empty()) std::printf("run_dir %s\n", r.run_dir.c_str());
  if (!r.message.empty()) std::fprintf(stderr, "%s\n", r.message.c_str());
}

// "x,y" grid indices
bool parse_point(const std::string& s, int& i, int& j) {
  auto comma = s.find(',');
  if (comma == std::string::npos) return false;
  try {
    std::size_t a = 0, b = 0;
    i = std::stoi(s.substr(0, comma), &a);
    j = std::stoi(s.substr(comma + 1), &b);
    return a == comma && b == s.size() - comma - 1;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::unique_ptr<tbb::global_control> cap;
  try {
    cap = fh::thread_cap_from_env();
  } catch (const fh::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  CLI::App app{"flowharnack: Harnack and entropy checks along conformal geometric flows on the 2-torus"};
  app.require_subcommand(1);
  fh::RunOptions opt;
  std::optional<int> grid;
  std::optional<unsigned> seed;
  std::optional<std::string> out;
  int refine = 1;

  std::string scenario;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("scenario", scenario, "preset name or scenario file")->required();
    sub->add_option("--grid", grid, "override nx = ny")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "seed for randomized probes and initial data");
    sub->add_option("--output,-o", out, "run directory");
  };
  auto* run = app.add_subcommand("run", "evolve, solve and run the scenario's checks");
  add_run_flags(run);
  run->add_option("--refine", refine, "refinement levels for observed orders")->check(CLI::Range(1, 6));
  auto* flow = app.add_subcommand("flow", "evolve only");
  add_run_flags(flow);

  std::string ckpt, at;
  auto* kernel = app.add_subcommand("kernel", "conjugate heat kernel on a stored flow");
  kernel->add_option("checkpoint", ckpt)->required();
  kernel->add_option("--at", at, "basepoint grid indices i,j")->required();

  std::string name, dir;
  auto* check = app.add_subcommand("check", "one check against a run directory");
  check->add_option("name", name)->required();
  check->add_option("run-dir", dir)->required();

  auto* report = app.add_subcommand("report", "print a stored summary");
  report->add_option("run-dir", dir)->required();

  app.add_subcommand("presets", "list preset scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  fh::RunResult r;
  if (run->parsed() || flow->parsed()) {
    fh::Scenario s;
    try {
      s = fh::resolve_scenario(scenario);
    } catch (const fh::ConfigError& e) {
      std::fprintf(stderr, "%s: %s\n", scenario.c_str(), e.what());
      return 2;
    } catch (const fh::Error& e) {
      std::fprintf(stderr, "%s\n", e.what());
      return 2;
    }
    opt.grid = grid;
    opt.seed = seed;
    opt.output = out;
    opt.refine = refine;
    r = run->parsed() ? fh::run_scenario(s, opt) : fh::run_flow(s, opt);
  } else if (kernel->parsed()) {
    int i = 0, j = 0;
    if (!parse_point(at, i, j)) {
      std::fprintf(stderr, "--at expects i,j\n");
      return 2;
    }
    r = fh::run_kernel(ckpt, i, j);
  } else if (check->parsed()) {
    r = fh::run_check(name, dir);
  } else if (report->parsed()) {
    r = fh::run_report(dir);
  } else {
    for (auto& p : fh::preset_names()) std::printf("%s\n", p.c_str());
    return 0;
  }
  print(r);
  return r.exit_code;
}

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <tbb/global_control.h>

#include "flowharnack/conjugate.hpp"

namespace fh {

// Scenario files are flat key = value text with [sections]; '#' starts a comment.
//
//   [scenario]  name, seed, output
//   [grid]      nx, ny, lx, ly
//   [model]     kind (ricci | static | extended-ricci | custom), coupling,
//               schedule (scaled-current | scaled-initial | file:<checkpoint>), lambda
//   [initial]   u, phi: zero | none | bump:<amp> | wave:<amp> | random:<amp> | file:<checkpoint>
//   [flow]      T, dt (cfl | <fixed step>), safety, stride, stencil (2 | 4)
//   [kernel]    base = i,j
//   [check.<name>] per-check parameters (tol, ...); the order of sections is the run order
struct CheckSpec {
  std::string name;
  std::map<std::string, double> params;
  bool operator==(const CheckSpec&) const = default;
};

struct Scenario {
  std::string name = "unnamed";
  unsigned seed = 1;
  std::string output = "runs/unnamed";
  GridChart grid;
  std::string model = "ricci";
  double coupling = 1.0;
  std::string schedule = "scaled-current";
  double lambda = 0.0;
  std::string u0 = "zero";
  std::string phi0 = "none";
  double T = 0.05;
  std::string dt = "cfl";
  double safety = 0.2;
  int stride = 1;
  int stencil = 2;
  std::pair<int, int> base{0, 0};
  std::vector<CheckSpec> checks;

  bool operator==(const Scenario&) const = default;
};

// Throws ConfigError carrying the offending line (0 when a whole-file rule fails).
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);
// Canonical text; doubles in round-trip form, so parse(serialize(s)) == s bit for bit.
std::string serialize(const Scenario& s);
// SHA-256 of the canonical text, lowercase hex.
std::string config_hash(const Scenario& s);

std::vector<std::string> preset_names();
// flat-static, ricci-perturbed, extended-ricci, negative-control
Scenario preset(const std::string& name);
// A preset name or a file path.
Scenario resolve_scenario(const std::string& arg);

Model model_of(const Scenario& s);
ScalarField initial_field(const std::string& spec, const GridChart& c, unsigned seed);

// Checkpoints: an ASCII header ending in a line "end", then per frame a little-endian f64 time followed
// by one nx*ny little-endian f64 array per field, row-major with x fastest.
//
//   FHCKPT 1
//   grid <nx> <ny> <lx> <ly>        (shortest round-trip decimals)
//   model <tag> <coupling>
//   dt_max <largest step>
//   stencil <2 | 4>
//   frames <count>
//   fields <name> ...
//   end
struct Checkpoint {
  int version = 1;
  GridChart grid;
  std::string model_tag = "static";
  double coupling = 0.0;
  double dt_max = 0.0;
  int stencil = 2;
  std::vector<std::string> field_names;
  std::vector<double> times;
  std::vector<std::vector<ScalarField>> frames;  // frames[k][f]

  bool operator==(const Checkpoint& o) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::string& path);

// Fields u, S and (extended Ricci) phi at every stored time.
Checkpoint trajectory_checkpoint(const FlowTrajectory& tr);
FlowTrajectory trajectory_from_checkpoint(const Checkpoint& c);
// Field U at every stored time, tau = T - time.
Checkpoint kernel_checkpoint(const KernelSolution& k);

struct CheckRecord {
  std::string name;
  double value = 0;
  double tolerance = 0;
  std::string verdict;  // pass | fail | warn | skipped | reported
  std::string note;
};

struct RunOptions {
  std::optional<int> grid;       // overrides nx = ny
  int refine = 1;                // levels for observed orders (coarsest grid = N / 2^(k-1))
  std::optional<unsigned> seed;
  std::optional<std::string> output;
  bool write = true;
};

struct RunResult {
  int exit_code = 0;  // 0 ok, 1 check failure, 2 config error, 3 numerical abort
  std::string hash;
  std::string run_dir;
  std::vector<CheckRecord> records;
  std::string message;
  std::string summary_json;
};

std::vector<std::string> check_names();

// evolve -> kernel and forward solutions -> requested checks. Writes scenario.cfg, flow.ckpt,
// summary.json, one CSV per series and two-column .dat files into the run directory.
RunResult run_scenario(const Scenario& s, const RunOptions& opt = {});
// Evolve only: scenario.cfg, flow.ckpt and flow.csv.
RunResult run_flow(const Scenario& s, const RunOptions& opt = {});
// Kernel at grid point (i, j) on a stored trajectory; writes kernel.ckpt next to the input.
RunResult run_kernel(const std::string& checkpoint, int i, int j);
// One check against a run directory written by run_scenario.
RunResult run_check(const std::string& name, const std::string& run_dir);
// Re-reads summary.json; exit 1 if any record failed.
RunResult run_report(const std::string& run_dir);

// Caps TBB workers at FLOWHARNACK_THREADS when set (null otherwise).
std::unique_ptr<tbb::global_control> thread_cap_from_env();

}  // namespace fh

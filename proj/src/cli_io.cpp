#include "flowharnack/cli_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace fh {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

template <class I>
bool parse_int(const std::string& s, I& out) {
  if (s.empty()) return false;
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

const std::set<std::string> kModels{"ricci", "static", "extended-ricci", "custom"};

// kind:amp or a bare keyword
bool valid_field_spec(const std::string& v) {
  if (v == "zero" || v == "none") return true;
  if (v.rfind("file:", 0) == 0) return v.size() > 5;
  auto c = v.find(':');
  if (c == std::string::npos) return false;
  std::string k = v.substr(0, c);
  double a;
  return (k == "bump" || k == "wave" || k == "random") && parse_double(v.substr(c + 1), a);
}

void put_le(std::ostream& os, double v) {
  std::uint64_t b = std::bit_cast<std::uint64_t>(v);
  unsigned char out[8];
  for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>(b >> (8 * i));
  os.write(reinterpret_cast<const char*>(out), 8);
}

double get_le(std::istream& is) {
  unsigned char in[8];
  if (!is.read(reinterpret_cast<char*>(in), 8)) throw Error("checkpoint is truncated");
  std::uint64_t b = 0;
  for (int i = 0; i < 8; ++i) b |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return std::bit_cast<double>(b);
}

}  // namespace

std::vector<std::string> check_names() {
  return {"gauss_bonnet", "dalpha",  "laplacian_evolution", "identity",     "harnack",
          "mass",         "asymptotics", "gradient_estimate", "linf",        "rho_phi",
          "lemma33",      "w_monotone",  "mu_monotone",       "upsilon",     "reduced"};
}

Scenario parse_scenario(const std::string& text) {
  Scenario s;
  s.checks.clear();
  std::istringstream in(text);
  std::string raw, section;
  int line = 0, grid_line = 0;
  std::set<std::string> seen;
  std::set<std::string> names;
  for (auto& n : check_names()) names.insert(n);
  CheckSpec* check = nullptr;
  int base_line = 0, model_line = 0, phi_line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto hash = raw.find('#');
    std::string t = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(line, "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      check = nullptr;
      if (section.rfind("check.", 0) == 0) {
        std::string name = section.substr(6);
        if (!names.count(name)) throw ConfigError(line, "unknown check '" + name + "'");
        for (auto& c : s.checks)
          if (c.name == name) throw ConfigError(line, "check '" + name + "' listed twice");
        s.checks.push_back({name, {}});
        check = &s.checks.back();
      } else if (section != "scenario" && section != "grid" && section != "model" && section != "initial" &&
                 section != "flow" && section != "kernel") {
        throw ConfigError(line, "unknown section [" + section + "]");
      }
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected key = value");
    std::string key = trim(t.substr(0, eq)), val = trim(t.substr(eq + 1));
    if (section.empty()) throw ConfigError(line, "key '" + key + "' outside any section");
    if (key.empty()) throw ConfigError(line, "empty key");
    if (!seen.insert(section + "." + key).second) throw ConfigError(line, "duplicate key '" + key + "'");
    auto num = [&](double& out) {
      if (!parse_double(val, out)) throw ConfigError(line, "'" + key + "' needs a finite number, got '" + val + "'");
    };
    auto integer = [&](auto& out) {
      if (!parse_int(val, out)) throw ConfigError(line, "'" + key + "' needs an integer, got '" + val + "'");
    };
    auto unknown = [&] { throw ConfigError(line, "unknown key '" + key + "' in [" + section + "]"); };
    if (check) {
      double v;
      num(v);
      check->params[key] = v;
    } else if (section == "scenario") {
      if (key == "name") s.name = val;
      else if (key == "seed") integer(s.seed);
      else if (key == "output") s.output = val;
      else unknown();
    } else if (section == "grid") {
      grid_line = grid_line ? grid_line : line;
      if (key == "nx") integer(s.grid.nx);
      else if (key == "ny") integer(s.grid.ny);
      else if (key == "lx") num(s.grid.lx);
      else if (key == "ly") num(s.grid.ly);
      else unknown();
    } else if (section == "model") {
      if (key == "kind") {
        if (!kModels.count(val)) throw ConfigError(line, "unknown model '" + val + "'");
        s.model = val;
        model_line = line;
      } else if (key == "coupling") num(s.coupling);
      else if (key == "schedule") {
        if (val != "scaled-current" && val != "scaled-initial" && !(val.rfind("file:", 0) == 0 && val.size() > 5))
          throw ConfigError(line, "unknown schedule '" + val + "'");
        s.schedule = val;
      } else if (key == "lambda") num(s.lambda);
      else unknown();
    } else if (section == "initial") {
      if (key != "u" && key != "phi") unknown();
      if (!valid_field_spec(val)) throw ConfigError(line, "bad field '" + val + "'");
      if (key == "u") {
        if (val == "none") throw ConfigError(line, "u cannot be none");
        s.u0 = val;
      } else {
        s.phi0 = val;
        phi_line = line;
      }
    } else if (section == "flow") {
      if (key == "T") {
        num(s.T);
        if (!(s.T > 0)) throw ConfigError(line, "T must be positive");
      } else if (key == "dt") {
        double d;
        if (val != "cfl" && !(parse_double(val, d) && d > 0)) throw ConfigError(line, "dt must be 'cfl' or a positive step");
        s.dt = val;
      } else if (key == "safety") {
        num(s.safety);
        if (!(s.safety > 0 && s.safety <= 1)) throw ConfigError(line, "safety must lie in (0, 1]");
      } else if (key == "stride") {
        integer(s.stride);
        if (s.stride < 1) throw ConfigError(line, "stride must be at least 1");
      } else if (key == "stencil") {
        integer(s.stencil);
        if (s.stencil != 2 && s.stencil != 4) throw ConfigError(line, "stencil must be 2 or 4");
      } else unknown();
    } else if (section == "kernel") {
      if (key != "base") unknown();
      auto c = val.find(',');
      if (c == std::string::npos || !parse_int(trim(val.substr(0, c)), s.base.first) ||
          !parse_int(trim(val.substr(c + 1)), s.base.second))
        throw ConfigError(line, "base needs i,j");
      base_line = line;
    }
  }
  try {
    s.grid.validate();
  } catch (const Error& e) {
    throw ConfigError(grid_line, e.what());
  }
  if (s.base.first < 0 || s.base.first >= s.grid.nx || s.base.second < 0 || s.base.second >= s.grid.ny)
    throw ConfigError(base_line, "base point outside the grid");
  if (s.model == "extended-ricci" && s.phi0 == "none")
    throw ConfigError(phi_line ? phi_line : model_line, "extended-ricci needs an initial phi");
  if (s.model != "extended-ricci" && s.phi0 != "none")
    throw ConfigError(phi_line, "phi is only used by extended-ricci");
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(0, "cannot read scenario file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str());
}

std::string serialize(const Scenario& s) {
  for (const std::string* v : {&s.name, &s.output, &s.model, &s.schedule, &s.u0, &s.phi0, &s.dt})
    if (v->empty() || v->find_first_of("#\n\r") != std::string::npos || trim(*v) != *v)
      throw ConfigError(0, "value '" + *v + "' cannot be written as key = value text");
  std::ostringstream o;
  o << "# flowharnack scenario v1\n";
  o << "[scenario]\nname = " << s.name << "\nseed = " << s.seed << "\noutput = " << s.output << "\n\n";
  o << "[grid]\nnx = " << s.grid.nx << "\nny = " << s.grid.ny << "\nlx = " << fmt(s.grid.lx) << "\nly = " << fmt(s.grid.ly)
    << "\n\n";
  o << "[model]\nkind = " << s.model << "\ncoupling = " << fmt(s.coupling) << "\nschedule = " << s.schedule
    << "\nlambda = " << fmt(s.lambda) << "\n\n";
  o << "[initial]\nu = " << s.u0 << "\nphi = " << s.phi0 << "\n\n";
  o << "[flow]\nT = " << fmt(s.T) << "\ndt = " << s.dt << "\nsafety = " << fmt(s.safety) << "\nstride = " << s.stride
    << "\nstencil = " << s.stencil << "\n\n";
  o << "[kernel]\nbase = " << s.base.first << "," << s.base.second << "\n";
  for (const auto& c : s.checks) {
    o << "\n[check." << c.name << "]\n";
    for (const auto& [k, v] : c.params) o << k << " = " << fmt(v) << "\n";
  }
  return o.str();
}

std::string config_hash(const Scenario& s) {
  std::string text = serialize(s);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr)) throw Error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::vector<std::string> preset_names() { return {"flat-static", "ricci-perturbed", "extended-ricci", "negative-control"}; }

Scenario preset(const std::string& name) {
  Scenario s;
  s.name = name;
  s.output = "runs/" + name;
  s.grid = GridChart{64, 64, 1.0, 1.0};
  auto add = [&](std::initializer_list<const char*> names) {
    for (auto n : names) s.checks.push_back({n, {}});
  };
  if (name == "flat-static") {
    s.grid.lx = s.grid.ly = 2 * kPi;
    s.model = "static";
    s.T = 0.2;
    s.base = {32, 32};
    add({"gauss_bonnet", "dalpha", "laplacian_evolution", "identity", "harnack", "mass", "asymptotics",
         "gradient_estimate", "linf", "rho_phi", "lemma33", "w_monotone", "mu_monotone", "reduced"});
    // keep tau >= 10 h^2 ~ 0.1, half the window; 40 h^2 would exceed T here
    for (auto& c : s.checks)
      if (c.name == "w_monotone") c.params["floor_h2"] = 10;
  } else if (name == "ricci-perturbed" || name == "extended-ricci") {
    s.model = name == "ricci-perturbed" ? "ricci" : "extended-ricci";
    s.u0 = "bump:0.05";
    if (name == "extended-ricci") s.phi0 = "wave:0.2";
    s.T = 0.05;
    s.stride = 4;
    s.base = {16, 16};
    add({"gauss_bonnet", "dalpha", "laplacian_evolution", "identity", "harnack", "mass", "gradient_estimate", "linf",
         "rho_phi", "lemma33", "w_monotone", "mu_monotone", "reduced"});
  } else if (name == "negative-control") {
    s.grid = GridChart{32, 32, 1.0, 1.0};
    s.model = "custom";
    s.schedule = "scaled-current";
    s.lambda = -0.5;
    s.T = 0.01;
    s.base = {16, 16};
    add({"gauss_bonnet", "dalpha", "harnack", "w_monotone", "rho_phi"});
  } else {
    throw ConfigError(0, "unknown preset '" + name + "'");
  }
  return s;
}

Scenario resolve_scenario(const std::string& arg) {
  for (auto& n : preset_names())
    if (n == arg && !std::filesystem::exists(arg)) return preset(n);
  return load_scenario(arg);
}

Model model_of(const Scenario& s) {
  Model m;
  if (s.model == "ricci") m.kind = ModelKind::Ricci;
  else if (s.model == "static") m.kind = ModelKind::Static;
  else if (s.model == "extended-ricci") m.kind = ModelKind::ExtendedRicci;
  else m.kind = ModelKind::Custom;
  m.coupling = s.coupling;
  if (m.kind == ModelKind::Custom) {
    m.custom.lambda = s.lambda;
    if (s.schedule == "scaled-current") {
      m.custom.kind = CustomSchedule::Kind::ScaledCurrent;
    } else if (s.schedule == "scaled-initial") {
      m.custom.kind = CustomSchedule::Kind::ScaledInitial;
    } else {
      Checkpoint c = read_checkpoint(s.schedule.substr(5));
      require_same(c.grid, s.grid);
      auto col = [&](const char* n) {
        auto it = std::find(c.field_names.begin(), c.field_names.end(), n);
        if (it == c.field_names.end()) throw ConfigError(0, std::string("schedule checkpoint lacks field ") + n);
        return static_cast<std::size_t>(it - c.field_names.begin());
      };
      std::size_t a = col("a11"), b = col("a12"), d = col("a22");
      m.custom.kind = CustomSchedule::Kind::Tabulated;
      m.custom.times = c.times;
      for (auto& f : c.frames) m.custom.tensors.push_back(SymTensor2Field(f[a], f[b], f[d]));
    }
  }
  return m;
}

ScalarField initial_field(const std::string& spec, const GridChart& c, unsigned seed) {
  if (spec == "zero") return ScalarField(c);
  if (spec.rfind("file:", 0) == 0) {
    Checkpoint k = read_checkpoint(spec.substr(5));
    require_same(k.grid, c);
    if (k.frames.empty() || k.field_names.empty()) throw Error("checkpoint has no fields");
    return k.frames.back().front();
  }
  auto colon = spec.find(':');
  double a = 0;
  if (colon == std::string::npos || !parse_double(spec.substr(colon + 1), a)) throw Error("bad field spec " + spec);
  std::string kind = spec.substr(0, colon);
  if (kind == "bump")
    return ScalarField::from_function(c, [&](double x, double y) {
      return a * std::sin(2 * kPi * x / c.lx) * std::sin(2 * kPi * y / c.ly);
    });
  if (kind == "wave")
    return ScalarField::from_function(c, [&](double x, double y) {
      return a * std::sin(2 * kPi * x / c.lx) + 0.5 * a * std::cos(2 * kPi * y / c.ly);
    });
  if (kind == "random") {
    // low modes with 1/(1 + |k|^2) amplitudes; uniform draws from the 64-bit engine's raw output
    std::mt19937_64 rng(seed);
    auto uni = [&] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53 * 2 - 1; };
    struct Mode {
      int m, n;
      double a, b;
    };
    std::vector<Mode> modes;
    for (int m = -2; m <= 2; ++m)
      for (int n = 0; n <= 2; ++n)
        if (n > 0 || m > 0) {
          double w = a / (1 + m * m + n * n);
          double p = uni() * w, q = uni() * w;
          modes.push_back({m, n, p, q});
        }
    return ScalarField::from_function(c, [&](double x, double y) {
      double s = 0;
      for (auto& md : modes) {
        double ph = 2 * kPi * (md.m * x / c.lx + md.n * y / c.ly);
        s += md.a * std::cos(ph) + md.b * std::sin(ph);
      }
      return s;
    });
  }
  throw Error("bad field spec " + spec);
}

bool Checkpoint::operator==(const Checkpoint& o) const {
  if (version != o.version || stencil != o.stencil || grid != o.grid || model_tag != o.model_tag || field_names != o.field_names)
    return false;
  auto same = [](double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); };
  if (!same(coupling, o.coupling) || !same(dt_max, o.dt_max) || times.size() != o.times.size() ||
      frames.size() != o.frames.size())
    return false;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!same(times[k], o.times[k]) || frames[k].size() != o.frames[k].size()) return false;
    for (std::size_t f = 0; f < frames[k].size(); ++f)
      if (std::memcmp(frames[k][f].v.data(), o.frames[k][f].v.data(), frames[k][f].v.size() * sizeof(double)))
        return false;
  }
  return true;
}

void write_checkpoint(const std::string& path, const Checkpoint& c) {
  if (c.frames.size() != c.times.size()) throw Error("checkpoint frames and times differ in number");
  for (auto& f : c.frames) {
    if (f.size() != c.field_names.size()) throw Error("checkpoint frame has the wrong number of fields");
    for (auto& s : f) require_same(s.chart, c.grid);
  }
  std::ofstream o(path, std::ios::binary);
  if (!o) throw Error("cannot write " + path);
  o << "FHCKPT " << c.version << "\n";
  o << "grid " << c.grid.nx << " " << c.grid.ny << " " << fmt(c.grid.lx) << " " << fmt(c.grid.ly) << "\n";
  o << "model " << c.model_tag << " " << fmt(c.coupling) << "\n";
  o << "dt_max " << fmt(c.dt_max) << "\n";
  o << "stencil " << c.stencil << "\n";
  o << "frames " << c.frames.size() << "\n";
  o << "fields";
  for (auto& n : c.field_names) o << " " << n;
  o << "\nend\n";
  for (std::size_t k = 0; k < c.frames.size(); ++k) {
    put_le(o, c.times[k]);
    for (auto& f : c.frames[k])
      for (double v : f.v) put_le(o, v);
  }
  if (!o) throw Error("write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path);
  Checkpoint c;
  std::string line;
  std::size_t nframes = 0;
  bool magic = false, ended = false;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (!magic) {
      if (key != "FHCKPT" || !(ls >> c.version) || c.version != 1) throw Error("not a version 1 checkpoint: " + path);
      magic = true;
      continue;
    }
    std::string a, b;
    if (key == "end") {
      ended = true;
      break;
    } else if (key == "grid") {
      ls >> c.grid.nx >> c.grid.ny >> a >> b;
      if (!ls || !parse_double(a, c.grid.lx) || !parse_double(b, c.grid.ly)) throw Error("bad checkpoint grid line");
      c.grid.validate();
    } else if (key == "model") {
      ls >> c.model_tag >> a;
      if (!parse_double(a, c.coupling)) throw Error("bad checkpoint model line");
    } else if (key == "dt_max") {
      ls >> a;
      if (!parse_double(a, c.dt_max)) throw Error("bad checkpoint dt_max line");
    } else if (key == "stencil") {
      if (!(ls >> c.stencil) || (c.stencil != 2 && c.stencil != 4)) throw Error("bad checkpoint stencil line");
    } else if (key == "frames") {
      if (!(ls >> nframes)) throw Error("bad checkpoint frames line");
    } else if (key == "fields") {
      while (ls >> a) c.field_names.push_back(a);
    } else {
      throw Error("unknown checkpoint header line " + std::to_string(ln));
    }
  }
  if (!ended) throw Error("checkpoint header has no end line");
  for (std::size_t k = 0; k < nframes; ++k) {
    c.times.push_back(get_le(in));
    std::vector<ScalarField> fr;
    for (std::size_t f = 0; f < c.field_names.size(); ++f) {
      ScalarField s(c.grid);
      for (double& v : s.v) v = get_le(in);
      fr.push_back(std::move(s));
    }
    c.frames.push_back(std::move(fr));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error("checkpoint has trailing bytes");
  return c;
}

Checkpoint trajectory_checkpoint(const FlowTrajectory& tr) {
  Checkpoint c;
  c.grid = tr.chart;
  c.model_tag = tr.model.tag();
  c.coupling = tr.model.coupling;
  c.dt_max = tr.dt_max;
  c.stencil = static_cast<int>(tr.stencil);
  c.field_names = {"u", "S"};
  if (!tr.aux.empty()) c.field_names.push_back("phi");
  c.times = tr.times;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    std::vector<ScalarField> f{tr.u[k], tr.s[k]};
    if (!tr.aux.empty()) f.push_back(tr.aux[k]);
    c.frames.push_back(std::move(f));
  }
  return c;
}

FlowTrajectory trajectory_from_checkpoint(const Checkpoint& c) {
  if (c.field_names.size() < 2 || c.field_names[0] != "u" || c.field_names[1] != "S")
    throw Error("checkpoint does not hold a trajectory");
  if (c.times.size() < 2) throw Error("trajectory checkpoint needs at least two frames");
  FlowTrajectory tr;
  tr.chart = c.grid;
  if (c.model_tag == "ricci") tr.model.kind = ModelKind::Ricci;
  else if (c.model_tag == "static") tr.model.kind = ModelKind::Static;
  else if (c.model_tag == "extended-ricci") tr.model.kind = ModelKind::ExtendedRicci;
  else tr.model.kind = ModelKind::Custom;
  tr.model.coupling = c.coupling;
  tr.dt_max = c.dt_max;
  tr.stencil = c.stencil == 4 ? Stencil::Fourth : Stencil::Second;
  tr.times = c.times;
  bool aux = c.field_names.size() > 2 && c.field_names[2] == "phi";
  for (auto& f : c.frames) {
    tr.u.push_back(f[0]);
    tr.s.push_back(f[1]);
    if (aux) tr.aux.push_back(f[2]);
  }
  return tr;
}

Checkpoint kernel_checkpoint(const KernelSolution& k) {
  Checkpoint c;
  c.grid = k.traj->chart;
  c.model_tag = k.traj->model.tag();
  c.coupling = k.traj->model.coupling;
  c.dt_max = k.traj->dt_max;
  c.stencil = static_cast<int>(k.traj->stencil);
  c.field_names = {"U"};
  c.times = k.times;
  for (auto& u : k.u) c.frames.push_back({u});
  return c;
}

std::unique_ptr<tbb::global_control> thread_cap_from_env() {
  const char* v = std::getenv("FLOWHARNACK_THREADS");
  if (!v || !*v) return nullptr;
  int n = 0;
  if (!parse_int(std::string(v), n) || n < 1) throw ConfigError(0, "FLOWHARNACK_THREADS must be a positive integer");
  return std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, n);
}

}  // namespace fh

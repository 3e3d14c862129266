#include "run_config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace spikemap::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& line) {
  for (std::size_t i = 0; i < line.size(); ++i)
    if ((line[i] == '#' || line[i] == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t'))
      return line.substr(0, i);
  return line;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s;
}

std::string vec(const Vec3& v) { return list({v[0], v[1], v[2]}); }

std::string ivec(const std::array<int, 3>& v) {
  return std::to_string(v[0]) + ", " + std::to_string(v[1]) + ", " + std::to_string(v[2]);
}

struct Entry {
  std::string value;
  int line;
};
using Sections = std::map<std::string, std::map<std::string, Entry>>;

class Reader {
 public:
  Reader(const Sections& s, std::string section) : s_(s), section_(std::move(section)) {}

  bool has(const std::string& key) const {
    auto it = s_.find(section_);
    return it != s_.end() && it->second.count(key);
  }
  const std::string& raw(const std::string& key) const { return s_.at(section_).at(key).value; }

  std::string where(const std::string& key) const {
    return "[" + section_ + "] " + key + " (line " + std::to_string(s_.at(section_).at(key).line) + ")";
  }

  double number(const std::string& key) const {
    const std::string& v = raw(key);
    char* end = nullptr;
    errno = 0;
    double d = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(d))
      throw ConfigError(where(key) + ": expected a finite number, got '" + v + "'");
    return d;
  }

  long long integer(const std::string& key) const {
    const std::string& v = raw(key);
    char* end = nullptr;
    errno = 0;
    long long d = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0' || errno == ERANGE)
      throw ConfigError(where(key) + ": expected an integer, got '" + v + "'");
    return d;
  }

  bool boolean(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw ConfigError(where(key) + ": expected true or false, got '" + v + "'");
  }

  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(raw(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      char* end = nullptr;
      double d = std::strtod(item.c_str(), &end);
      if (item.empty() || *end != '\0' || !std::isfinite(d))
        throw ConfigError(where(key) + ": malformed list entry '" + item + "'");
      out.push_back(d);
    }
    return out;
  }

  Vec3 vec3(const std::string& key) const {
    auto v = numbers(key);
    if (v.size() != 3) throw ConfigError(where(key) + ": expected three comma-separated numbers");
    return {v[0], v[1], v[2]};
  }

  std::array<int, 3> ivec3(const std::string& key) const {
    auto v = numbers(key);
    if (v.size() != 3) throw ConfigError(where(key) + ": expected three comma-separated integers");
    std::array<int, 3> out{};
    for (int a = 0; a < 3; ++a) {
      if (v[a] != std::floor(v[a]) || v[a] < 1 || v[a] > 1e6)
        throw ConfigError(where(key) + ": entries must be positive integers");
      out[a] = static_cast<int>(v[a]);
    }
    return out;
  }

 private:
  const Sections& s_;
  std::string section_;
};

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"model", {"V", "K", "A1", "A2", "A3", "nonlinearity", "lambda", "p", "table", "theta", "V0", "K0"}},
      {"solver",
       {"n", "radius", "center", "eps", "max_iters", "tol", "seed", "seed_center", "random_seed", "random_amplitude",
        "seed_file", "boundary_mass_limit"}},
      {"frozen", {"z"}},
      {"landscape", {"lo", "hi", "resolution", "seeds", "p_list", "force_shooting", "sstar", "sstar_provider"}},
      {"diagnostics", {"enabled", "target", "rho"}},
      {"output", {"dir"}},
  };
  return s;
}

Sections tokenize(const std::string& text) {
  Sections out;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    const std::string at = "line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(at + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!schema().count(section)) throw ConfigError(at + ": unknown section [" + section + "]");
      out[section];
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(at + ": expected 'key = value'");
    if (section.empty()) throw ConfigError(at + ": key outside of any section");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!schema().at(section).count(key)) throw ConfigError(at + ": unknown key '" + key + "' in [" + section + "]");
    if (out[section].count(key)) throw ConfigError(at + ": duplicate key '" + key + "' in [" + section + "]");
    out[section][key] = {value, lineno};
  }
  return out;
}

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  Sections s = tokenize(text);
  RunConfig c;

  Reader m(s, "model");
  check(s.count("model"), "missing section [model]");
  check(m.has("V"), "[model] missing required key 'V'");
  check(m.has("K"), "[model] missing required key 'K'");
  c.model.V = m.raw("V");
  c.model.K = m.raw("K");
  check(!c.model.V.empty(), m.where("V") + ": empty expression");
  check(!c.model.K.empty(), m.where("K") + ": empty expression");
  if (m.has("A1")) c.model.A1 = m.raw("A1");
  if (m.has("A2")) c.model.A2 = m.raw("A2");
  if (m.has("A3")) c.model.A3 = m.raw("A3");
  if (m.has("nonlinearity")) c.model.nonlinearity = m.raw("nonlinearity");
  check(c.model.nonlinearity == "power" || c.model.nonlinearity == "table",
        "[model] nonlinearity must be 'power' or 'table'");
  if (m.has("lambda")) c.model.lambda = m.number("lambda");
  if (m.has("p")) c.model.p = m.number("p");
  if (m.has("table")) c.model.table = m.raw("table");
  if (m.has("theta")) c.model.theta = m.number("theta");
  if (m.has("V0")) c.model.V0 = m.number("V0");
  if (m.has("K0")) c.model.K0 = m.number("K0");
  if (c.model.nonlinearity == "power") {
    check(c.model.p > 1.0 && c.model.p < 5.0, "[model] p must lie in the open interval (1, 5)");
    check(c.model.lambda > 0.0, "[model] lambda must be positive");
    check(c.model.table.empty(), "[model] table is only valid with nonlinearity = table");
  } else {
    check(!c.model.table.empty(), "[model] nonlinearity = table needs key 'table'");
    check(c.model.theta.has_value(), "[model] nonlinearity = table needs key 'theta'");
  }

  Reader r(s, "solver");
  if (r.has("n")) c.solver.n = static_cast<int>(r.integer("n"));
  if (r.has("radius")) c.solver.radius = r.number("radius");
  if (r.has("center")) c.solver.center = r.vec3("center");
  if (r.has("eps")) c.solver.eps = r.numbers("eps");
  if (r.has("max_iters")) c.solver.max_iters = static_cast<int>(r.integer("max_iters"));
  if (r.has("tol")) c.solver.tol = r.number("tol");
  if (r.has("seed")) c.solver.seed = r.raw("seed");
  if (r.has("seed_center")) c.solver.seed_center = r.vec3("seed_center");
  if (r.has("random_seed")) {
    long long v = r.integer("random_seed");
    check(v >= 0, r.where("random_seed") + ": must be non-negative");
    c.solver.random_seed = static_cast<unsigned long long>(v);
  }
  if (r.has("random_amplitude")) c.solver.random_amplitude = r.number("random_amplitude");
  if (r.has("seed_file")) c.solver.seed_file = r.raw("seed_file");
  if (r.has("boundary_mass_limit")) c.solver.boundary_mass_limit = r.number("boundary_mass_limit");
  check(c.solver.n >= 8, "[solver] n must be at least 8");
  check(c.solver.radius > 0.0, "[solver] radius must be positive");
  check(!c.solver.eps.empty(), "[solver] eps list is empty");
  for (double e : c.solver.eps) check(e > 0.0, "[solver] eps values must be positive");
  check(c.solver.max_iters >= 1, "[solver] max_iters must be positive");
  check(c.solver.tol > 0.0, "[solver] tol must be positive");
  check(c.solver.seed == "frozen" || c.solver.seed == "random" || c.solver.seed == "file",
        "[solver] seed must be frozen, random or file");
  check(c.solver.seed != "file" || !c.solver.seed_file.empty(), "[solver] seed = file needs key 'seed_file'");

  Reader f(s, "frozen");
  if (f.has("z")) c.frozen.z = f.vec3("z");

  Reader l(s, "landscape");
  if (l.has("lo")) c.landscape.lo = l.vec3("lo");
  if (l.has("hi")) c.landscape.hi = l.vec3("hi");
  if (l.has("resolution")) c.landscape.resolution = l.ivec3("resolution");
  if (l.has("seeds")) c.landscape.seeds = l.ivec3("seeds");
  if (l.has("p_list")) c.landscape.p_list = l.numbers("p_list");
  if (l.has("force_shooting")) c.landscape.force_shooting = l.boolean("force_shooting");
  if (l.has("sstar")) c.landscape.sstar = l.boolean("sstar");
  if (l.has("sstar_provider")) c.landscape.sstar_provider = l.raw("sstar_provider");
  for (int a = 0; a < 3; ++a)
    check(c.landscape.lo[a] < c.landscape.hi[a], "[landscape] empty region: lo must be below hi on every axis");
  for (double p : c.landscape.p_list) check(p > 1.0 && p < 5.0, "[landscape] p_list entries must lie in (1, 5)");
  for (std::size_t i = 1; i < c.landscape.p_list.size(); ++i)
    check(c.landscape.p_list[i] > c.landscape.p_list[i - 1], "[landscape] p_list must increase");
  check(c.landscape.sstar_provider == "radial" || c.landscape.sstar_provider == "frozen-magnetic",
        "[landscape] sstar_provider must be radial or frozen-magnetic");

  Reader d(s, "diagnostics");
  if (d.has("enabled")) c.diagnostics.enabled = d.boolean("enabled");
  if (d.has("target")) c.diagnostics.target = d.vec3("target");
  if (d.has("rho")) c.diagnostics.rho = d.numbers("rho");
  check(!c.diagnostics.rho.empty(), "[diagnostics] rho list is empty");
  for (double v : c.diagnostics.rho) check(v > 0.0, "[diagnostics] rho values must be positive");

  Reader o(s, "output");
  if (o.has("dir")) c.output.dir = o.raw("dir");
  check(!c.output.dir.empty(), "[output] dir is empty");
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream o;
  o << "[model]\n";
  o << "V = " << model.V << "\nK = " << model.K << "\n";
  o << "A1 = " << model.A1 << "\nA2 = " << model.A2 << "\nA3 = " << model.A3 << "\n";
  o << "nonlinearity = " << model.nonlinearity << "\n";
  o << "lambda = " << num(model.lambda) << "\np = " << num(model.p) << "\n";
  if (!model.table.empty()) o << "table = " << model.table << "\n";
  if (model.theta) o << "theta = " << num(*model.theta) << "\n";
  if (model.V0) o << "V0 = " << num(*model.V0) << "\n";
  if (model.K0) o << "K0 = " << num(*model.K0) << "\n";

  o << "\n[solver]\n";
  o << "n = " << solver.n << "\nradius = " << num(solver.radius) << "\ncenter = " << vec(solver.center) << "\n";
  o << "eps = " << list(solver.eps) << "\nmax_iters = " << solver.max_iters << "\ntol = " << num(solver.tol) << "\n";
  o << "seed = " << solver.seed << "\n";
  if (solver.seed_center) o << "seed_center = " << vec(*solver.seed_center) << "\n";
  o << "random_seed = " << solver.random_seed << "\nrandom_amplitude = " << num(solver.random_amplitude) << "\n";
  if (!solver.seed_file.empty()) o << "seed_file = " << solver.seed_file << "\n";
  o << "boundary_mass_limit = " << num(solver.boundary_mass_limit) << "\n";

  o << "\n[frozen]\nz = " << vec(frozen.z) << "\n";

  o << "\n[landscape]\n";
  o << "lo = " << vec(landscape.lo) << "\nhi = " << vec(landscape.hi) << "\n";
  o << "resolution = " << ivec(landscape.resolution) << "\nseeds = " << ivec(landscape.seeds) << "\n";
  if (!landscape.p_list.empty()) o << "p_list = " << list(landscape.p_list) << "\n";
  o << "force_shooting = " << (landscape.force_shooting ? "true" : "false") << "\n";
  o << "sstar = " << (landscape.sstar ? "true" : "false") << "\nsstar_provider = " << landscape.sstar_provider << "\n";

  o << "\n[diagnostics]\nenabled = " << (diagnostics.enabled ? "true" : "false") << "\n";
  if (diagnostics.target) o << "target = " << vec(*diagnostics.target) << "\n";
  o << "rho = " << list(diagnostics.rho) << "\n";

  o << "\n[output]\ndir = " << output.dir << "\n";
  return o.str();
}

std::string RunConfig::model_json() const {
  nlohmann::json j = {{"V", model.V}, {"K", model.K}, {"A1", model.A1}, {"A2", model.A2}, {"A3", model.A3}};
  if (model.nonlinearity == "power")
    j["nonlinearity"] = {{"kind", "power"}, {"lambda", model.lambda}, {"p", model.p}};
  else
    j["nonlinearity"] = {{"kind", "table"}, {"path", model.table}};
  if (model.theta) j["theta"] = *model.theta;
  if (model.V0) j["V0"] = *model.V0;
  if (model.K0) j["K0"] = *model.K0;
  return j.dump();
}

std::string RunConfig::solver_json(double eps) const {
  nlohmann::json j = {{"eps", eps},
                      {"n", solver.n},
                      {"radius", solver.radius},
                      {"center", solver.center},
                      {"max_iters", solver.max_iters},
                      {"tol", solver.tol},
                      {"seed", solver.seed},
                      {"random_seed", solver.random_seed},
                      {"random_amplitude", solver.random_amplitude},
                      {"boundary_mass_limit", solver.boundary_mass_limit}};
  if (solver.seed_center) j["seed_center"] = *solver.seed_center;
  if (!solver.seed_file.empty()) j["seed_file"] = solver.seed_file;
  return j.dump();
}

unsigned long long fnv1a(const std::string& bytes) {
  unsigned long long h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(unsigned long long h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", h);
  return buf;
}

}  // namespace spikemap::cli

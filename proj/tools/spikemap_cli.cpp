#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "spikemap/spikemap.h"

namespace fs = std::filesystem;
using nlohmann::json;
using spikemap::cli::ConfigError;
using spikemap::cli::RunConfig;

namespace {

enum Exit { kOk = 0, kConfig = 2, kSolver = 3, kNonConvergence = 4, kInvariant = 5 };

struct Failure {
  int code;
  std::string message;
};

int exit_for(sm_status s) {
  switch (s) {
    case SM_OK: return kOk;
    case SM_ERR_INVALID_ARGUMENT:
    case SM_ERR_PARSE:
    case SM_ERR_GRID_MISMATCH:
    case SM_ERR_ASSUMPTION: return kConfig;
    case SM_ERR_NONCONVERGENCE: return kNonConvergence;
    default: return kSolver;
  }
}

/// Throws a Failure for a non-ok status.
void check(sm_status s, const std::string& what, int override_code = -1) {
  if (s == SM_OK) return;
  throw Failure{override_code >= 0 ? override_code : exit_for(s),
                what + ": " + sm_status_name(s) + ": " + sm_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  sm_free_string(s);
  return out;
}

struct ModelDeleter {
  void operator()(sm_model* m) const { sm_model_destroy(m); }
};
struct FieldDeleter {
  void operator()(sm_field* f) const { sm_field_destroy(f); }
};
struct SolutionDeleter {
  void operator()(sm_solution* s) const { sm_solution_destroy(s); }
};
using ModelPtr = std::unique_ptr<sm_model, ModelDeleter>;
using FieldPtr = std::unique_ptr<sm_field, FieldDeleter>;
using SolutionPtr = std::unique_ptr<sm_solution, SolutionDeleter>;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Failure{kConfig, "cannot read " + p.string()};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct FileRecord {
  std::string path;
  std::string fnv1a;
  std::uintmax_t bytes = 0;
};

FileRecord record(const fs::path& p, const std::string& name) {
  std::string data = read_file(p);
  return {name, spikemap::cli::hex64(spikemap::cli::fnv1a(data)), data.size()};
}

/// Output directory plus the inventory that ends up in the manifest.
class Run {
 public:
  Run(std::string command, RunConfig cfg, fs::path dir) : command_(std::move(command)), cfg_(std::move(cfg)), dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Failure{kConfig, "cannot create output directory " + dir_.string() + ": " + ec.message()};
    start_ = std::chrono::steady_clock::now();
  }

  const RunConfig& cfg() const { return cfg_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& data) {
    std::ofstream out(path(name), std::ios::binary);
    if (!out || !out.write(data.data(), static_cast<std::streamsize>(data.size())))
      throw Failure{kSolver, "cannot write " + path(name).string()};
    out.close();
    outputs_.push_back(name);
  }
  /// Registers a file written by someone else.
  void wrote(const std::string& name) { outputs_.push_back(name); }
  void input(const std::string& path) {
    if (!path.empty()) inputs_.push_back(path);
  }
  void arg(const std::string& key, const json& value) { args_[key] = value; }

  void finish(int exit_code) {
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::string text = cfg_.serialize();
    json m;
    m["toolkit"] = "spikemap";
    m["version"] = sm_version();
    m["command"] = command_;
    m["config_hash"] = spikemap::cli::hex64(spikemap::cli::fnv1a(text));
    m["config"] = text;
    m["args"] = args_;
    m["workers"] = sm_get_workers();
    m["seeds"] = {{"random_seed", cfg_.solver.random_seed}, {"seed_policy", cfg_.solver.seed}};
    m["wall_time_s"] = wall;
    m["exit_code"] = exit_code;
    json ins = json::array(), outs = json::array();
    for (const auto& p : inputs_) {
      auto r = fs::exists(p) ? record(p, fs::absolute(p).string()) : FileRecord{fs::absolute(p).string(), "", 0};
      ins.push_back({{"path", r.path}, {"fnv1a", r.fnv1a}, {"bytes", r.bytes}});
    }
    std::sort(outputs_.begin(), outputs_.end());
    outputs_.erase(std::unique(outputs_.begin(), outputs_.end()), outputs_.end());
    for (const auto& name : outputs_) {
      auto r = record(path(name), name);
      outs.push_back({{"path", r.path}, {"fnv1a", r.fnv1a}, {"bytes", r.bytes}});
    }
    m["inputs"] = ins;
    m["outputs"] = outs;
    std::ofstream out(path("manifest.json"), std::ios::binary);
    out << m.dump(2) << "\n";
  }

 private:
  std::string command_;
  RunConfig cfg_;
  fs::path dir_;
  std::vector<std::string> outputs_, inputs_;
  json args_ = json::object();
  std::chrono::steady_clock::time_point start_;
};

ModelPtr make_model(const RunConfig& cfg) {
  sm_model* m = nullptr;
  check(sm_model_create(cfg.model_json().c_str(), &m), "model", kConfig);
  return ModelPtr(m);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

int cmd_solve_frozen(Run& run) {
  auto model = make_model(run.cfg());
  run.input(run.cfg().model.table);
  const auto& z = run.cfg().frozen.z;
  char *csv = nullptr, *js = nullptr;
  check(sm_solve_frozen(model.get(), z.data(), &csv, &js), "solve-frozen");
  std::string profile = take(csv);
  json report = json::parse(take(js));
  run.write("profile.csv", profile);
  run.write("ground_energy.json", report["sample"].dump(2) + "\n");
  run.write("frozen_report.json", report.dump(2) + "\n");
  std::printf("sigma(z) = %.12g  decay %.6g (expected %.6g)\n", report["sample"]["sigma"].get<double>(),
              report["diagnostics"]["decay"]["corrected_rate"].get<double>(),
              report["diagnostics"]["decay_expected"].get<double>());
  return kOk;
}

struct Family {
  std::vector<SolutionPtr> members;
  std::vector<json> summaries;
  bool all_converged = true;
};

Family solve_family(Run& run, const sm_model* model) {
  const RunConfig& cfg = run.cfg();
  run.input(cfg.model.table);
  run.input(cfg.solver.seed_file);
  std::vector<double> eps = cfg.solver.eps;
  std::sort(eps.begin(), eps.end(), std::greater<>());
  if (std::adjacent_find(eps.begin(), eps.end()) != eps.end())
    throw Failure{kConfig, "[solver] eps values must be distinct"};
  Family fam;
  for (double e : eps) {
    sm_solution* s = nullptr;
    check(sm_solve_magnetic(model, cfg.solver_json(e).c_str(), &s), "solve-magnetic eps=" + fmt(e));
    SolutionPtr sol(s);
    const std::string tag = "eps_" + fmt(e);
    char* out = nullptr;
    check(sm_solution_summary(sol.get(), &out), "summary");
    json summary = json::parse(take(out));
    run.write("solution_" + tag + ".json", summary.dump(2) + "\n");
    check(sm_solution_trace_csv(sol.get(), &out), "trace");
    run.write("trace_" + tag + ".csv", take(out));
    sm_field* f = nullptr;
    check(sm_solution_field(sol.get(), &f), "field");
    FieldPtr field(f);
    check(sm_field_write(field.get(), run.path("u_" + tag + ".spkf").c_str()), "snapshot");
    run.wrote("u_" + tag + ".spkf");
    if (cfg.diagnostics.enabled) {
      check(sm_diagnose(field.get(), model, e, &out), "diagnostics eps=" + fmt(e));
      std::string report = take(out);
      run.write("diagnostics_" + tag + ".json", report + "\n");
      json r = json::parse(report);
      if (!r["failures"].empty()) std::printf("eps=%s: checks outside thresholds: %s\n", fmt(e).c_str(), r["failures"].dump().c_str());
    }
    std::printf("eps=%s  J=%.12g  eps^-3 J=%.12g  iterations=%d  converged=%s\n", fmt(e).c_str(),
                summary["energy_J"].get<double>(), summary["scaled_energy"].get<double>(),
                summary["iterations"].get<int>(), summary["converged"].get<bool>() ? "yes" : "no");
    fam.all_converged = fam.all_converged && summary["converged"].get<bool>();
    fam.summaries.push_back(summary);
    fam.members.push_back(std::move(sol));
  }
  return fam;
}

void concentration(Run& run, const sm_model* model, const Family& fam, bool with_json) {
  const RunConfig& cfg = run.cfg();
  std::array<double, 3> z0{};
  if (cfg.diagnostics.target) {
    z0 = *cfg.diagnostics.target;
  } else {
    const json& c = fam.summaries.back()["seed_center"];
    z0 = {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()};
  }
  std::vector<const sm_solution*> ptrs;
  for (const auto& m : fam.members) ptrs.push_back(m.get());
  char *csv = nullptr, *js = nullptr;
  check(sm_concentration_study(model, ptrs.data(), ptrs.size(), z0.data(), cfg.diagnostics.rho.data(),
                               cfg.diagnostics.rho.size(), &csv, with_json ? &js : nullptr),
        "concentration study");
  run.write("concentration.csv", take(csv));
  if (with_json) {
    json j = json::parse(take(js));
    run.write("concentration.json", j.dump(2) + "\n");
    std::printf("pointwise concentration: %s  energetic concentration: %s\n",
                j["pointwise_concentrates"].get<bool>() ? "yes" : "no",
                j["energy_concentrates"].get<bool>() ? "yes" : "no");
  }
}

int cmd_solve_magnetic(Run& run) {
  auto model = make_model(run.cfg());
  Family fam = solve_family(run, model.get());
  concentration(run, model.get(), fam, false);
  return fam.all_converged ? kOk : kNonConvergence;
}

int cmd_concentration_study(Run& run) {
  if (run.cfg().solver.eps.size() < 2) throw Failure{kConfig, "[solver] eps needs at least two values for a study"};
  auto model = make_model(run.cfg());
  Family fam = solve_family(run, model.get());
  concentration(run, model.get(), fam, true);
  return fam.all_converged ? kOk : kNonConvergence;
}

/// Gnuplot-ready slice of the sweep through the middle z3 layer (blank line between rows).
std::string slice_data(const std::string& csv, const std::array<int, 3>& res) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::string out = "# z1 z2 sigma\n";
  const int k_mid = res[2] / 2;
  std::size_t idx = 0;
  while (std::getline(in, line)) {
    const int i = static_cast<int>(idx % res[0]);
    const int k = static_cast<int>(idx / (static_cast<std::size_t>(res[0]) * res[1]));
    ++idx;
    if (k != k_mid) continue;
    std::stringstream ss(line);
    std::string a, b, c, s;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    std::getline(ss, s, ',');
    out += a + " " + b + " " + s + "\n";
    if (i == res[0] - 1) out += "\n";
  }
  return out;
}

int cmd_landscape(Run& run) {
  const RunConfig& cfg = run.cfg();
  const auto& L = cfg.landscape;
  auto model = make_model(cfg);
  run.input(cfg.model.table);
  char *csv = nullptr, *js = nullptr;
  check(sm_sweep_sigma(model.get(), L.lo.data(), L.hi.data(), L.resolution.data(), L.force_shooting ? 1 : 0, &csv,
                       &js),
        "sweep");
  std::string sweep = take(csv);
  json S = json::parse(take(js));
  run.write("sweep.csv", sweep);
  run.write("sigma_slice.dat", slice_data(sweep, L.resolution));
  run.write("S.json", S.dump(2) + "\n");
  std::printf("S: %zu point(s)%s\n", S["points"].size(), S["degenerate"].get<bool>() ? " (degenerate map)" : "");

  check(sm_crit_K(model.get(), L.lo.data(), L.hi.data(), L.seeds.data(), &js), "crit K");
  json ck = json::parse(take(js));
  run.write("critK.json", ck.dump(2) + "\n");

  const bool power = cfg.model.nonlinearity == "power";
  if (power) {
    std::vector<double> ps = L.p_list;
    if (std::find(ps.begin(), ps.end(), cfg.model.p) == ps.end()) ps.push_back(cfg.model.p);
    std::sort(ps.begin(), ps.end());
    for (double p : ps) {
      check(sm_find_Sp(model.get(), p, L.lo.data(), L.hi.data(), L.seeds.data(), &js), "S_p");
      json sp = json::parse(take(js));
      run.write("Sp_p" + fmt(p) + ".json", sp.dump(2) + "\n");
      if (p == cfg.model.p) std::printf("S_p (p=%s): %zu point(s)\n", fmt(p).c_str(), sp["points"].size());
    }
    if (!L.p_list.empty()) {
      int dec = 0;
      check(sm_p_to_5(model.get(), L.p_list.data(), L.p_list.size(), L.lo.data(), L.hi.data(), L.seeds.data(), &csv,
                      &dec),
            "p to 5 study");
      std::string drift = take(csv);
      run.write("drift.csv", drift);
      std::printf("dist(S_p, Crit K) strictly decreasing: %s\n", dec ? "yes" : "no");
    }
  } else if (!L.p_list.empty()) {
    std::printf("p_list ignored: the algebraic set is only defined for power nonlinearities\n");
  }

  if (L.sstar) {
    std::vector<double> cands;
    for (const auto& p : S["points"])
      for (int a = 0; a < 3; ++a) cands.push_back(p["z"][a].get<double>());
    json opts = {{"provider", L.sstar_provider}};
    if (L.sstar_provider == "frozen-magnetic") opts["n"] = cfg.solver.n, opts["radius"] = cfg.solver.radius;
    check(sm_find_Sstar(model.get(), cands.data(), cands.size() / 3, opts.dump().c_str(), &js), "S*");
    run.write("Sstar.json", json::parse(take(js)).dump(2) + "\n");
  }
  return kOk;
}

int cmd_verify(Run& run, const std::string& snapshot, double eps) {
  const RunConfig& cfg = run.cfg();
  auto model = make_model(cfg);
  run.input(snapshot);
  run.arg("snapshot", fs::absolute(snapshot).string());
  run.arg("eps", eps);
  sm_field* f = nullptr;
  check(sm_field_read(snapshot.c_str(), &f), "snapshot", kConfig);
  FieldPtr field(f);
  check(sm_field_check_grid(field.get(), cfg.solver.n, cfg.solver.radius, cfg.solver.center.data()), "grid", kConfig);
  char* js = nullptr;
  check(sm_diagnose(field.get(), model.get(), eps, &js), "diagnostics");
  std::string report = take(js);
  run.write("verify_report.json", report + "\n");
  char* names = nullptr;
  check(sm_diagnose_failures(report.c_str(), &names), "diagnostics");
  std::string failed = take(names);
  if (!failed.empty()) {
    std::fprintf(stderr, "invariant failure: %s\n", failed.c_str());
    return kInvariant;
  }
  std::printf("all checks passed\n");
  return kOk;
}

struct Options {
  std::string config;
  std::string out;
  int workers = -1;
  std::string snapshot;
  double eps = 0.0;
  std::string manifest;
};

int dispatch(const std::string& command, const RunConfig& cfg, const Options& o) {
  fs::path dir = o.out.empty() ? fs::path(cfg.output.dir) : fs::path(o.out);
  Run run(command, cfg, dir);
  if (!o.config.empty()) run.input(o.config);
  int code = kOk;
  try {
    if (command == "solve-frozen") code = cmd_solve_frozen(run);
    else if (command == "solve-magnetic") code = cmd_solve_magnetic(run);
    else if (command == "concentration-study") code = cmd_concentration_study(run);
    else if (command == "landscape") code = cmd_landscape(run);
    else if (command == "verify") code = cmd_verify(run, o.snapshot, o.eps > 0.0 ? o.eps : cfg.solver.eps.front());
    else throw Failure{kConfig, "unknown command " + command};
  } catch (const Failure& f) {
    run.finish(f.code);
    throw;
  }
  run.finish(code);
  return code;
}

int cmd_rerun(const Options& o) {
  json m = json::parse(read_file(o.manifest));
  const std::string command = m.at("command").get<std::string>();
  RunConfig cfg = RunConfig::parse(m.at("config").get<std::string>());
  Options r;
  r.out = o.out.empty() ? (fs::path(o.manifest).parent_path() / "rerun").string() : o.out;
  const json& args = m.value("args", json::object());
  r.snapshot = args.value("snapshot", std::string());
  r.eps = args.value("eps", 0.0);
  int code = dispatch(command, cfg, r);
  json fresh = json::parse(read_file(fs::path(r.out) / "manifest.json"));
  std::map<std::string, std::string> before, after;
  for (const auto& e : m["outputs"]) before[e["path"].get<std::string>()] = e["fnv1a"].get<std::string>();
  for (const auto& e : fresh["outputs"]) after[e["path"].get<std::string>()] = e["fnv1a"].get<std::string>();
  std::vector<std::string> diff;
  for (const auto& [k, v] : before)
    if (!after.count(k) || after[k] != v) diff.push_back(k);
  for (const auto& [k, v] : after)
    if (!before.count(k)) diff.push_back(k);
  if (code != m.value("exit_code", 0)) diff.push_back("exit code");
  if (!diff.empty()) {
    std::string s;
    for (const auto& d : diff) s += (s.empty() ? "" : ", ") + d;
    std::fprintf(stderr, "invariant failure: reproducibility (%s)\n", s.c_str());
    return kInvariant;
  }
  std::printf("rerun reproduced %zu output file(s) bit for bit\n", before.size());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ground-energy landscape and spike diagnostics for magnetic nonlinear Schrodinger equations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sm_version()));
  Options o;
  app.add_option("--workers", o.workers, "Worker threads (default: SPIKEMAP_WORKERS, then all cores)")
      ->check(CLI::NonNegativeNumber);

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "Run configuration (INI)")->required();
    sub->add_option("-o,--out", o.out, "Output directory (overrides [output] dir)");
    sub->fallthrough();
  };
  auto* frozen = app.add_subcommand("solve-frozen", "Radial ground state of the frozen problem at [frozen] z");
  with_config(frozen);
  auto* magnetic = app.add_subcommand("solve-magnetic", "Least-energy states for every eps in [solver] eps");
  with_config(magnetic);
  auto* land = app.add_subcommand("landscape", "Ground-energy sweep and candidate spike sets");
  with_config(land);
  auto* verify = app.add_subcommand("verify", "Diagnostics of a field snapshot");
  with_config(verify);
  verify->add_option("-s,--snapshot", o.snapshot, "SPKF snapshot")->required();
  verify->add_option("--eps", o.eps, "eps of the snapshot (default: first [solver] eps)")->check(CLI::PositiveNumber);
  auto* conc = app.add_subcommand("concentration-study", "Eps family with concentration verdicts");
  with_config(conc);
  auto* rerun = app.add_subcommand("rerun", "Repeat a run from its manifest and compare outputs");
  rerun->add_option("manifest", o.manifest, "manifest.json of an earlier run")->required();
  rerun->add_option("-o,--out", o.out, "Output directory (default: <manifest dir>/rerun)");
  rerun->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }

  try {
    if (o.workers >= 0) check(sm_set_workers(o.workers), "workers", kConfig);
    if (rerun->parsed()) return cmd_rerun(o);
    RunConfig cfg = RunConfig::load(o.config);
    for (auto* sub : app.get_subcommands()) return dispatch(sub->get_name(), cfg, o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: malformed JSON: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolver;
  }
  return kOk;
}

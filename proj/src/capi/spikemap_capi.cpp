#include "spikemap/spikemap.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "core/landscape.hpp"
#include "core/parallel.hpp"
#include "json.hpp"

#ifndef SPIKEMAP_VERSION
#define SPIKEMAP_VERSION "0.0.0"
#endif

using nlohmann::json;
using namespace spikemap;

struct sm_model {
  ModelSpec spec;
};
struct sm_field {
  ComplexField3 u;
};
struct sm_solution {
  MagneticSolution sol;
};

namespace {

thread_local std::string g_last_error;

sm_status set_error(sm_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

/// Runs body, translating exceptions into status codes.
template <class F>
sm_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return SM_OK;
  } catch (const Error& e) {
    return set_error(static_cast<sm_status>(static_cast<int>(e.code())), e.what());
  } catch (const json::exception& e) {
    return set_error(SM_ERR_PARSE, std::string("json: ") + e.what());
  } catch (const std::bad_alloc&) {
    return set_error(SM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(SM_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

template <class T>
void need(const T* p, const char* what) {
  if (!p) fail(Error::Code::InvalidArgument, std::string(what) + " is null");
}

Vec3 vec(const double* v) { return {v[0], v[1], v[2]}; }
json jvec(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec_from(const json& j, const char* key) {
  require(j.is_array() && j.size() == 3, std::string(key) + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  require(j.is_object(), std::string(where) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) fail(Error::Code::InvalidArgument, std::string("unknown key '") + it.key() + "' in " + where);
  }
}

json parse_json(const char* text, const char* where) {
  if (!text || !*text) return json::object();
  json j = json::parse(text);
  require(j.is_object(), std::string(where) + " must be a JSON object");
  return j;
}

Region region_of(const double* lo, const double* hi) {
  need(lo, "lo");
  need(hi, "hi");
  Region r{vec(lo), vec(hi)};
  r.validate();
  return r;
}

Resolution res_of(const int* r) {
  need(r, "resolution");
  return {r[0], r[1], r[2]};
}

json sample_json(const GroundEnergySample& s) {
  return {{"z", jvec(s.z)}, {"sigma", s.sigma}, {"grad", jvec(s.grad_sigma)}, {"method", to_string(s.method)},
          {"note", s.note}};
}

json decay_json(const DecayFit& d) {
  return {{"raw_rate", d.raw_rate}, {"corrected_rate", d.corrected_rate}, {"r1", d.r1}, {"r2", d.r2},
          {"samples", d.samples}};
}

json identity_json(const IdentityResidual& r) {
  return {{"residual", jvec(r.residual)}, {"scale", jvec(r.scale)}, {"relative", r.relative},
          {"boundary_mass", r.boundary_mass}, {"notes", r.notes}};
}

json solution_json(const MagneticSolution& s) {
  const Grid3& g = s.u.grid();
  return {{"eps", s.eps},
          {"energy_J", s.energy_J},
          {"scaled_energy", s.scaled_energy},
          {"scaled_mass", s.scaled_mass},
          {"residual_rms", s.residual_rms},
          {"nehari_slack", s.nehari_slack},
          {"spike", jvec(s.spike)},
          {"seed_center", jvec(s.seed_center)},
          {"boundary_mass", s.boundary_mass},
          {"iterations", s.iterations},
          {"converged", s.converged},
          {"grid", {{"dims", g.dims}, {"spacing", g.spacing}, {"origin", jvec(g.origin)}}}};
}

}  // namespace

extern "C" {

const char* sm_version(void) { return SPIKEMAP_VERSION; }

const char* sm_status_name(sm_status s) {
  switch (s) {
    case SM_OK: return "ok";
    case SM_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SM_ERR_PARSE: return "parse";
    case SM_ERR_DOMAIN: return "domain";
    case SM_ERR_ASSUMPTION: return "assumption";
    case SM_ERR_BRACKET: return "bracket";
    case SM_ERR_NONCONVERGENCE: return "nonconvergence";
    case SM_ERR_BOUNDARY_MASS: return "boundary_mass";
    case SM_ERR_IO: return "io";
    case SM_ERR_GRID_MISMATCH: return "grid_mismatch";
    case SM_ERR_UNSUPPORTED: return "unsupported";
    case SM_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* sm_last_error(void) { return g_last_error.c_str(); }

void sm_free_string(char* s) { std::free(s); }

sm_status sm_set_workers(int workers) {
  return guarded([&] {
    require(workers >= 0, "worker count must be non-negative");
    set_worker_count(workers);
  });
}

int sm_get_workers(void) { return worker_count(); }

sm_status sm_eval_expression(const char* text, const double x[3], double* value, double grad[3]) {
  return guarded([&] {
    need(text, "expression");
    need(x, "x");
    Dual3 d = PotentialExpr::parse(text).eval_with_gradient(vec(x));
    if (value) *value = d.value;
    if (grad)
      for (int a = 0; a < 3; ++a) grad[a] = d.grad[a];
  });
}

sm_status sm_model_create(const char* text, sm_model** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    json j = parse_json(text, "model");
    reject_unknown(j, {"V", "K", "A1", "A2", "A3", "nonlinearity", "theta", "V0", "K0"}, "model");
    auto m = std::make_unique<sm_model>();
    auto expr = [&](const char* key, const char* dflt) {
      std::string s = j.contains(key) ? j[key].get<std::string>() : std::string(dflt);
      try {
        return PotentialExpr::parse(s);
      } catch (const ParseError& e) {
        throw Error(Error::Code::Parse, std::string("model.") + key + ": " + e.what());
      }
    };
    m->spec.V = expr("V", "1");
    m->spec.K = expr("K", "1");
    m->spec.A = {expr("A1", "0"), expr("A2", "0"), expr("A3", "0")};
    double theta = j.value("theta", 0.0);
    if (j.contains("nonlinearity")) {
      const json& n = j["nonlinearity"];
      reject_unknown(n, {"kind", "lambda", "p", "path"}, "model.nonlinearity");
      std::string kind = n.value("kind", std::string("power"));
      if (kind == "power") {
        m->spec.nonlinearity = Nonlinearity::power(n.value("lambda", 1.0), n.value("p", 3.0), theta);
      } else if (kind == "table") {
        require(n.contains("path"), "model.nonlinearity: table needs a path");
        require(theta > 2.0, "model.theta: a table nonlinearity needs theta > 2");
        m->spec.nonlinearity = Nonlinearity::from_table_file(n["path"].get<std::string>(), theta);
      } else {
        fail(Error::Code::InvalidArgument, "model.nonlinearity: unknown kind '" + kind + "'");
      }
    }
    m->spec.V0 = j.value("V0", 0.0);
    m->spec.K0 = j.value("K0", 0.0);
    *out = m.release();
  });
}

sm_status sm_model_set_callback_nonlinearity(sm_model* model, double (*f)(double, void*), double (*F)(double, void*),
                                             void* user, double theta) {
  return guarded([&] {
    need(model, "model");
    require(f && F, "callbacks must be non-null");
    model->spec.nonlinearity = Nonlinearity::custom([f, user](double s) { return f(s, user); },
                                                    [F, user](double s) { return F(s, user); }, theta, "callback");
  });
}

void sm_model_destroy(sm_model* model) { delete model; }

sm_status sm_model_describe(const sm_model* model, char** out) {
  return guarded([&] {
    need(model, "model");
    const ModelSpec& m = model->spec;
    json j = {{"V", m.V.to_string()},
              {"K", m.K.to_string()},
              {"A1", m.A[0].to_string()},
              {"A2", m.A[1].to_string()},
              {"A3", m.A[2].to_string()},
              {"nonlinearity", m.nonlinearity.describe()},
              {"theta", m.nonlinearity.theta()},
              {"V0", m.V0},
              {"K0", m.K0}};
    put(out, j.dump(2));
  });
}

sm_status sm_model_validate(const sm_model* model, double radius, char** out) {
  return guarded([&] {
    need(model, "model");
    require(radius > 0.0, "validation radius must be positive");
    ValidationLattice lat;
    lat.box = Grid3::cube(9, radius);
    ValidationReport r = validate_assumptions(model->spec, lat);
    json j = {{"min_V", r.min_V},
              {"argmin_V", jvec(r.argmin_V)},
              {"max_K", r.max_K},
              {"argmax_K", jvec(r.argmax_K)},
              {"min_K", r.min_K},
              {"V0", r.V0},
              {"K0", r.K0},
              {"f_monotonic_violations", r.f_monotonic_violations},
              {"theta_violations", r.theta_violations},
              {"gamma_dA", r.gamma_dA},
              {"gamma_gradV", r.gamma_gradV},
              {"gamma_gradK", r.gamma_gradK},
              {"ok", r.ok()},
              {"notes", r.notes}};
    put(out, j.dump(2));
  });
}

sm_status sm_canonical_energy(double p, double lambda, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = canonical_energy(p, lambda);
  });
}

sm_status sm_sigma(const sm_model* model, const double z[3], int force_shooting, double* sigma, double grad[3]) {
  return guarded([&] {
    need(model, "model");
    need(z, "z");
    const ModelSpec& m = model->spec;
    GroundEnergySample s = (m.nonlinearity.is_power() && !force_shooting)
                               ? sigma_r_explicit(vec(z), m)
                               : sigma_r(FrozenPoint::at(m, vec(z)), m.nonlinearity);
    if (sigma) *sigma = s.sigma;
    if (grad)
      for (int a = 0; a < 3; ++a) grad[a] = s.grad_sigma[a];
  });
}

sm_status sm_solve_frozen(const sm_model* model, const double z[3], char** profile_csv, char** out) {
  return guarded([&] {
    need(model, "model");
    need(z, "z");
    const ModelSpec& m = model->spec;
    FrozenPoint pt = FrozenPoint::at(m, vec(z));
    RadialProfile w = shoot_radial(pt, m.nonlinearity);
    GroundEnergySample s = sigma_r(pt, m.nonlinearity);
    if (profile_csv) {
      std::string csv = "r,u\n";
      char buf[64];
      for (std::size_t i = 0; i < w.n(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", w.r(i), w.u[i]);
        csv += buf;
      }
      *profile_csv = dup_string(csv);
    }
    if (out) {
      auto win = default_decay_window(w);
      DecayFit d = decay_fit(w, win.first, win.second);
      json j = {{"sample", sample_json(s)},
                {"profile",
                 {{"V", w.V},
                  {"K", w.K},
                  {"alpha", w.alpha},
                  {"bracket_width", w.bracket_width},
                  {"residual_rms", w.residual_rms},
                  {"energy", w.energy},
                  {"kinetic", w.kinetic},
                  {"mass", w.mass},
                  {"potential_term", w.potential_term},
                  {"nehari_term", w.nehari_term},
                  {"dr", w.dr},
                  {"r_max", w.r_max()}}},
                {"diagnostics",
                 {{"decay", decay_json(d)},
                  {"decay_expected", std::sqrt(pt.Vz)},
                  {"nehari_slack", (w.kinetic + w.V * w.mass - w.nehari_term) /
                                       std::max(w.nehari_term, std::numeric_limits<double>::min())},
                  {"limit_identity", identity_json(limit_identity_residual(w, vec(z), m))}}}};
      *out = dup_string(j.dump(2));
    }
  });
}

sm_status sm_field_create(const int dims[3], double spacing, const double origin[3], const double* data,
                          sm_field** out) {
  return guarded([&] {
    need(dims, "dims");
    need(origin, "origin");
    need(out, "out");
    Grid3 g;
    g.dims = {dims[0], dims[1], dims[2]};
    g.spacing = spacing;
    g.origin = vec(origin);
    g.validate();
    auto f = std::make_unique<sm_field>();
    f->u = ComplexField3(g);
    if (data)
      for (std::size_t n = 0; n < g.size(); ++n) f->u[n] = cplx(data[2 * n], data[2 * n + 1]);
    *out = f.release();
  });
}

sm_status sm_field_read(const char* path, sm_field** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto f = std::make_unique<sm_field>();
    f->u = read_complex_snapshot(path);
    *out = f.release();
  });
}

sm_status sm_field_write(const sm_field* field, const char* path) {
  return guarded([&] {
    need(field, "field");
    need(path, "path");
    write_snapshot(path, field->u);
  });
}

sm_status sm_field_grid(const sm_field* field, int dims[3], double* spacing, double origin[3]) {
  return guarded([&] {
    need(field, "field");
    const Grid3& g = field->u.grid();
    for (int a = 0; a < 3; ++a) {
      if (dims) dims[a] = g.dims[a];
      if (origin) origin[a] = g.origin[a];
    }
    if (spacing) *spacing = g.spacing;
  });
}

sm_status sm_field_copy_data(const sm_field* field, double* data, size_t capacity) {
  return guarded([&] {
    need(field, "field");
    need(data, "data");
    const std::size_t n = field->u.grid().size();
    require(capacity >= 2 * n, "buffer too small: need " + std::to_string(2 * n) + " doubles");
    for (std::size_t i = 0; i < n; ++i) {
      data[2 * i] = field->u[i].real();
      data[2 * i + 1] = field->u[i].imag();
    }
  });
}

sm_status sm_field_add_noise(const sm_field* field, double level, uint64_t seed, sm_field** out) {
  return guarded([&] {
    need(field, "field");
    need(out, "out");
    require(level >= 0.0, "noise level must be non-negative");
    auto f = std::make_unique<sm_field>();
    f->u = add_noise(field->u, level, seed);
    *out = f.release();
  });
}

void sm_field_destroy(sm_field* field) { delete field; }

sm_status sm_field_check_grid(const sm_field* field, int n, double radius, const double center[3]) {
  return guarded([&] {
    need(field, "field");
    need(center, "center");
    Grid3 want = Grid3::cube(n, radius, vec(center));
    const Grid3& have = field->u.grid();
    if (have != want) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "snapshot grid %dx%dx%d h=%.17g does not match the configured %dx%dx%d h=%.17g",
                    have.dims[0], have.dims[1], have.dims[2], have.spacing, want.dims[0], want.dims[1], want.dims[2],
                    want.spacing);
      throw GridMismatchError(buf);
    }
  });
}

sm_status sm_solve_magnetic(const sm_model* model, const char* config_json, sm_solution** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = nullptr;
    json j = parse_json(config_json, "solver config");
    reject_unknown(j,
                   {"eps", "n", "radius", "center", "max_iters", "tol", "seed", "seed_center", "random_seed",
                    "random_amplitude", "seed_file", "boundary_mass_limit"},
                   "solver config");
    MagneticSolveConfig cfg;
    cfg.eps = j.value("eps", cfg.eps);
    Vec3 center = j.contains("center") ? vec_from(j["center"], "center") : Vec3{0.0, 0.0, 0.0};
    cfg.grid = Grid3::cube(j.value("n", 48), j.value("radius", 10.0), center);
    cfg.max_iters = j.value("max_iters", cfg.max_iters);
    cfg.tol = j.value("tol", cfg.tol);
    cfg.seed = seed_policy_from_string(j.value("seed", std::string("frozen")));
    if (j.contains("seed_center")) cfg.seed_center = vec_from(j["seed_center"], "seed_center");
    cfg.random_seed = j.value("random_seed", cfg.random_seed);
    cfg.random_amplitude = j.value("random_amplitude", cfg.random_amplitude);
    cfg.seed_file = j.value("seed_file", std::string());
    cfg.boundary_mass_limit = j.value("boundary_mass_limit", cfg.boundary_mass_limit);
    auto s = std::make_unique<sm_solution>();
    s->sol = solve_magnetic(model->spec, cfg);
    *out = s.release();
  });
}

sm_status sm_solve_frozen_magnetic(const sm_model* model, const double z[3], int n, double radius,
                                   sm_solution** out) {
  return guarded([&] {
    need(model, "model");
    need(z, "z");
    need(out, "out");
    auto s = std::make_unique<sm_solution>();
    s->sol = solve_frozen_magnetic(vec(z), model->spec, Grid3::cube(n, radius));
    *out = s.release();
  });
}

sm_status sm_solution_summary(const sm_solution* sol, char** out) {
  return guarded([&] {
    need(sol, "solution");
    put(out, solution_json(sol->sol).dump(2));
  });
}

sm_status sm_solution_trace_csv(const sm_solution* sol, char** out) {
  return guarded([&] {
    need(sol, "solution");
    std::string csv = "iter,energy,residual,nehari_slack\n";
    char buf[128];
    for (const auto& r : sol->sol.trace) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.iter, r.energy, r.residual, r.nehari_slack);
      csv += buf;
    }
    put(out, csv);
  });
}

sm_status sm_solution_field(const sm_solution* sol, sm_field** out) {
  return guarded([&] {
    need(sol, "solution");
    need(out, "out");
    auto f = std::make_unique<sm_field>();
    f->u = sol->sol.u;
    *out = f.release();
  });
}

int sm_solution_converged(const sm_solution* sol) { return sol && sol->sol.converged ? 1 : 0; }

void sm_solution_destroy(sm_solution* sol) { delete sol; }

sm_status sm_energy(const sm_field* field, const sm_model* model, double eps, double* energy) {
  return guarded([&] {
    need(field, "field");
    need(model, "model");
    need(energy, "energy");
    require(eps > 0.0, "eps must be positive");
    *energy = energy_J(field->u, model->spec, eps);
  });
}

sm_status sm_diagnose(const sm_field* field, const sm_model* model, double eps, char** out) {
  return guarded([&] {
    need(field, "field");
    need(model, "model");
    require(eps > 0.0, "eps must be positive");
    DiagnosticsReport r = diagnose(field->u, model->spec, eps);
    json j = json::parse(r.to_json());
    j["failures"] = r.failures();
    put(out, j.dump(2));
  });
}

sm_status sm_diagnose_failures(const char* report_json, char** out) {
  return guarded([&] {
    need(report_json, "report");
    json j = json::parse(report_json);
    require(j.contains("failures"), "report has no failures list");
    std::string s;
    for (const auto& f : j["failures"]) s += (s.empty() ? "" : ",") + f.get<std::string>();
    put(out, s);
  });
}

sm_status sm_concentration_study(const sm_model* model, const sm_solution* const* family, size_t count,
                                 const double z0[3], const double* rho, size_t rho_count, char** csv, char** out) {
  return guarded([&] {
    need(model, "model");
    need(z0, "z0");
    require(count > 0 && family, "family is empty");
    std::vector<MagneticSolution> fam;
    for (size_t i = 0; i < count; ++i) {
      need(family[i], "family member");
      fam.push_back(family[i]->sol);
    }
    std::vector<double> ladder = {2.0, 4.0, 8.0};
    if (rho && rho_count) ladder.assign(rho, rho + rho_count);
    ConcentrationStudy st = concentration_metrics(fam, vec(z0), model->spec, ladder);
    put(csv, st.to_csv());
    if (out) {
      json rows = json::array();
      for (const auto& r : st.rows)
        rows.push_back({{"eps", r.eps},
                        {"spike", jvec(r.spike)},
                        {"scaled_energy", r.scaled_energy},
                        {"value_at_target", r.value_at_target},
                        {"tail", r.tail},
                        {"energy_gap", r.energy_gap}});
      json j = {{"target", jvec(st.target_z)},
                {"sigma_at_target", st.sigma_at_target},
                {"rho", st.rho_ladder},
                {"rows", rows},
                {"energy_gap_decreasing", st.energy_gap_decreasing},
                {"tail_decreasing", st.tail_decreasing},
                {"pointwise_concentrates", st.pointwise_concentrates},
                {"energy_concentrates", st.energy_concentrates}};
      *out = dup_string(j.dump(2));
    }
  });
}

sm_status sm_clarke_test(const sm_model* model, const double z[3], const char* options_json, char** out) {
  return guarded([&] {
    need(model, "model");
    need(z, "z");
    json j = parse_json(options_json, "clarke options");
    reject_unknown(j, {"rho", "lambdas", "random_directions", "seed", "sample_ball_with_net"}, "clarke options");
    ClarkeOptions o;
    o.rho = j.value("rho", o.rho);
    if (j.contains("lambdas")) o.lambdas = j["lambdas"].get<std::vector<double>>();
    o.random_directions = j.value("random_directions", o.random_directions);
    o.seed = j.value("seed", o.seed);
    o.sample_ball_with_net = j.value("sample_ball_with_net", o.sample_ball_with_net);
    ClarkeVerdict v = clarke_critical_test(vec(z), model->spec, o);
    json r = {{"z", jvec(vec(z))},
              {"member", v.member},
              {"margin", v.margin},
              {"grad_norm", v.grad_norm},
              {"directions", v.directions},
              {"evaluations", v.evaluations},
              {"confidence", v.confidence}};
    r["smooth_member"] = v.smooth_member ? json(*v.smooth_member) : json(nullptr);
    put(out, r.dump(2));
  });
}

sm_status sm_directional_derivative(const sm_model* model, const double z[3], const double w[3], double* left,
                                    double* right) {
  return guarded([&] {
    need(model, "model");
    need(z, "z");
    need(w, "w");
    DirectionalDerivative d = directional_derivative_sigma(vec(z), vec(w), model->spec);
    if (left) *left = d.left;
    if (right) *right = d.right;
  });
}

sm_status sm_sweep_sigma(const sm_model* model, const double lo[3], const double hi[3], const int res[3],
                         int force_shooting, char** csv, char** critical_json) {
  return guarded([&] {
    need(model, "model");
    GroundEnergyMap map = sweep_sigma(region_of(lo, hi), res_of(res), model->spec, force_shooting != 0);
    put(csv, map.to_csv());
    if (critical_json) {
      CriticalSetResult r = find_S(map, model->spec);
      json j = json::parse(r.to_json());
      j["sweep_failures"] = map.failures;
      *critical_json = dup_string(j.dump(2));
    }
  });
}

sm_status sm_find_Sp(const sm_model* model, double p, const double lo[3], const double hi[3], const int seeds[3],
                     char** out) {
  return guarded([&] {
    need(model, "model");
    put(out, find_Sp(model->spec, p, region_of(lo, hi), res_of(seeds)).to_json());
  });
}

sm_status sm_crit_K(const sm_model* model, const double lo[3], const double hi[3], const int seeds[3], char** out) {
  return guarded([&] {
    need(model, "model");
    put(out, crit_K(model->spec, region_of(lo, hi), res_of(seeds)).to_json());
  });
}

sm_status sm_find_Sstar(const sm_model* model, const double* candidates, size_t count, const char* options_json,
                        char** out) {
  return guarded([&] {
    need(model, "model");
    require(count == 0 || candidates, "candidates is null");
    json j = parse_json(options_json, "Sstar options");
    reject_unknown(j, {"tolerance", "random_directions", "seed", "phase_samples", "provider", "n", "radius"},
                   "Sstar options");
    SstarOptions o;
    o.tolerance = j.value("tolerance", o.tolerance);
    o.random_directions = j.value("random_directions", o.random_directions);
    o.seed = j.value("seed", o.seed);
    o.phase_samples = j.value("phase_samples", o.phase_samples);
    std::string provider = j.value("provider", std::string("radial"));
    SolutionsProvider sp;
    if (provider == "radial") {
      sp = radial_solutions(model->spec, j.value("n", 96));
    } else if (provider == "frozen-magnetic") {
      sp = frozen_magnetic_solutions(model->spec, Grid3::cube(j.value("n", 48), j.value("radius", 10.0)));
    } else {
      fail(Error::Code::InvalidArgument, "unknown solutions provider '" + provider + "'");
    }
    std::vector<Vec3> cands;
    for (size_t i = 0; i < count; ++i) cands.push_back(vec(candidates + 3 * i));
    put(out, find_Sstar(model->spec, cands, sp, o).to_json());
  });
}

sm_status sm_p_to_5(const sm_model* model, const double* p_list, size_t count, const double lo[3],
                    const double hi[3], const int seeds[3], char** csv, int* strictly_decreasing) {
  return guarded([&] {
    need(model, "model");
    require(count > 0 && p_list, "p list is empty");
    std::vector<double> ps(p_list, p_list + count);
    DriftStudy st = p_to_5_study(model->spec, ps, region_of(lo, hi), res_of(seeds));
    put(csv, st.to_csv());
    if (strictly_decreasing) *strictly_decreasing = st.strictly_decreasing ? 1 : 0;
  });
}

}  // extern "C"

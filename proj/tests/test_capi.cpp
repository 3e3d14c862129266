// Exercises the shared library through the C header only.
#include <spikemap/spikemap.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"

namespace {

struct Owned {
  char* s = nullptr;
  ~Owned() { sm_free_string(s); }
  std::string str() const { return s ? s : ""; }
};

sm_model* make_model(const char* json) {
  sm_model* m = nullptr;
  REQUIRE(sm_model_create(json, &m) == SM_OK);
  return m;
}

const char* kTrap = R"j({"V": "1 + 0.5*r2", "K": "1 + 0.5*exp(-dist2(1, 0, 0))",
  "A1": "-0.5*x2", "A2": "0.5*x1", "nonlinearity": {"kind": "power", "p": 2}})j";

}  // namespace

TEST_CASE("library basics") {
  CHECK(std::string(sm_version()).size() > 0);
  CHECK(std::string(sm_status_name(SM_ERR_PARSE)) != std::string(sm_status_name(SM_OK)));

  double value = 0.0, grad[3] = {0, 0, 0};
  const double x[3] = {1.0, 2.0, 3.0};
  REQUIRE(sm_eval_expression("r2", x, &value, grad) == SM_OK);
  CHECK(value == 14.0);
  CHECK(grad[2] == 6.0);
  CHECK(sm_eval_expression("1 + * 2", x, &value, grad) == SM_ERR_PARSE);
  CHECK(std::string(sm_last_error()).find("4") != std::string::npos);

  const int saved = sm_get_workers();
  CHECK(sm_set_workers(2) == SM_OK);
  CHECK(sm_get_workers() == 2);
  CHECK(sm_set_workers(saved) == SM_OK);
  CHECK(sm_set_workers(-1) == SM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("model handles") {
  sm_model* m = nullptr;
  CHECK(sm_model_create(R"j({"V": "1 +", "K": "1"})j", &m) == SM_ERR_PARSE);
  CHECK(m == nullptr);
  CHECK(std::string(sm_last_error()).find("model.V") != std::string::npos);
  CHECK(sm_model_create(R"j({"V": "1", "K": "1", "W": "2"})j", &m) == SM_ERR_INVALID_ARGUMENT);
  CHECK(sm_model_create("not json", &m) == SM_ERR_PARSE);

  sm_model* dip = make_model(R"j({"V": "1 - 2*exp(-r2)", "K": "1"})j");
  Owned report;
  CHECK(sm_model_validate(dip, 5.0, &report.s) == SM_ERR_ASSUMPTION);
  sm_model_destroy(dip);

  sm_model* trap = make_model(kTrap);
  Owned desc;
  REQUIRE(sm_model_describe(trap, &desc.s) == SM_OK);
  CHECK(desc.str().find("0.5*x1") != std::string::npos);
  sm_model_destroy(trap);
  sm_model_destroy(nullptr);
}

TEST_CASE("frozen quantities") {
  double E = 0.0;
  REQUIRE(sm_canonical_energy(3.0, 1.0, &E) == SM_OK);
  CHECK(E > 0.0);
  CHECK(sm_canonical_energy(5.0, 1.0, &E) != SM_OK);

  sm_model* unit = make_model(R"j({"V": "1", "K": "1"})j");
  const double z[3] = {0.2, 0.0, 0.0};
  double sigma = 0.0, grad[3];
  REQUIRE(sm_sigma(unit, z, 0, &sigma, grad) == SM_OK);
  CHECK(sigma == doctest::Approx(E).epsilon(1e-14));
  double shot = 0.0;
  REQUIRE(sm_sigma(unit, z, 1, &shot, grad) == SM_OK);
  CHECK(shot == doctest::Approx(E).epsilon(1e-6));

  Owned csv, json;
  REQUIRE(sm_solve_frozen(unit, z, &csv.s, &json.s) == SM_OK);
  CHECK(csv.str().rfind("r,u\n", 0) == 0);
  CHECK(json.str().find("decay") != std::string::npos);
  sm_model_destroy(unit);
}

TEST_CASE("custom nonlinearity through a callback") {
  sm_model* m = make_model(R"j({"V": "1 + 0.2*r2", "K": "1", "nonlinearity": {"kind": "power", "p": 2}})j");
  double power = 0.0, grad[3];
  const double z[3] = {0.3, -0.1, 0.2};
  REQUIRE(sm_sigma(m, z, 1, &power, grad) == SM_OK);
  auto f = [](double s, void*) { return std::sqrt(s); };
  auto F = [](double s, void*) { return s * std::sqrt(s) / 3.0; };
  REQUIRE(sm_model_set_callback_nonlinearity(m, f, F, nullptr, 3.0) == SM_OK);
  double custom = 0.0;
  REQUIRE(sm_sigma(m, z, 0, &custom, grad) == SM_OK);
  CHECK(custom == doctest::Approx(power).epsilon(1e-6));
  sm_model_destroy(m);
}

TEST_CASE("fields, solve and diagnose") {
  const int dims[3] = {8, 8, 8};
  const double origin[3] = {0, 0, 0};
  std::vector<double> data(2 * 512, 0.5);
  sm_field* f = nullptr;
  REQUIRE(sm_field_create(dims, 0.5, origin, data.data(), &f) == SM_OK);
  const auto path = (std::filesystem::temp_directory_path() / "spikemap_capi_field.spkf").string();
  REQUIRE(sm_field_write(f, path.c_str()) == SM_OK);
  sm_field* back = nullptr;
  REQUIRE(sm_field_read(path.c_str(), &back) == SM_OK);
  std::vector<double> copy(2 * 512);
  REQUIRE(sm_field_copy_data(back, copy.data(), copy.size()) == SM_OK);
  CHECK(copy == data);
  CHECK(sm_field_copy_data(back, copy.data(), 3) == SM_ERR_INVALID_ARGUMENT);
  std::filesystem::remove(path);
  sm_field_destroy(back);
  sm_field_destroy(f);
  CHECK(sm_field_read("/nonexistent.spkf", &back) == SM_ERR_IO);

  sm_model* trap = make_model(kTrap);
  sm_solution* sol = nullptr;
  REQUIRE(sm_solve_magnetic(trap, R"j({"n": 32, "radius": 6})j", &sol) == SM_OK);
  CHECK(sm_solution_converged(sol) == 1);
  Owned summary, trace;
  REQUIRE(sm_solution_summary(sol, &summary.s) == SM_OK);
  CHECK(summary.str().find("\"converged\": true") != std::string::npos);
  REQUIRE(sm_solution_trace_csv(sol, &trace.s) == SM_OK);
  CHECK(trace.str().rfind("iter,energy,residual,nehari_slack", 0) == 0);

  sm_field* u = nullptr;
  REQUIRE(sm_solution_field(sol, &u) == SM_OK);
  const double center[3] = {0, 0, 0};
  CHECK(sm_field_check_grid(u, 32, 6.0, center) == SM_OK);
  CHECK(sm_field_check_grid(u, 40, 6.0, center) == SM_ERR_GRID_MISMATCH);
  double J = 0.0;
  REQUIRE(sm_energy(u, trap, 1.0, &J) == SM_OK);
  CHECK(J > 0.0);

  Owned report, names;
  REQUIRE(sm_diagnose(u, trap, 1.0, &report.s) == SM_OK);
  REQUIRE(sm_diagnose_failures(report.str().c_str(), &names.s) == SM_OK);
  CHECK(names.str() == "");

  sm_field* noisy = nullptr;
  REQUIRE(sm_field_add_noise(u, 0.25, 5, &noisy) == SM_OK);
  Owned noisy_report, noisy_names;
  REQUIRE(sm_diagnose(noisy, trap, 1.0, &noisy_report.s) == SM_OK);
  REQUIRE(sm_diagnose_failures(noisy_report.str().c_str(), &noisy_names.s) == SM_OK);
  CHECK(noisy_names.str().find("residual") != std::string::npos);

  CHECK(sm_solve_magnetic(trap, R"j({"n": 32, "radius": 6, "eps": -1})j", &sol) == SM_ERR_INVALID_ARGUMENT);
  sm_field_destroy(noisy);
  sm_field_destroy(u);
  sm_solution_destroy(sol);
  sm_model_destroy(trap);
}

TEST_CASE("landscape entry points") {
  sm_model* m = make_model(R"j({"V": "1 + r2", "K": "1 + 0.5*exp(-dist2(1, 0, 0))"})j");
  const double lo[3] = {-2, -2, -2}, hi[3] = {2, 2, 2};
  const int res[3] = {9, 9, 9}, seeds[3] = {5, 5, 5};

  Owned csv, S;
  REQUIRE(sm_sweep_sigma(m, lo, hi, res, 0, &csv.s, &S.s) == SM_OK);
  CHECK(csv.str().rfind("z1,z2,z3,sigma", 0) == 0);
  CHECK(S.str().find("0.3603567") != std::string::npos);

  Owned sp, ck;
  REQUIRE(sm_find_Sp(m, 3.0, lo, hi, seeds, &sp.s) == SM_OK);
  CHECK(sp.str().find("0.3603567") != std::string::npos);
  REQUIRE(sm_crit_K(m, lo, hi, seeds, &ck.s) == SM_OK);
  CHECK(ck.str().find("\"points\"") != std::string::npos);

  const double cand[6] = {0.360356720155, 0, 0, 0.5, 0.3, 0};
  Owned st;
  REQUIRE(sm_find_Sstar(m, cand, 2, R"j({"random_directions": 10})j", &st.s) == SM_OK);
  CHECK(st.str().find("\"rejected\"") != std::string::npos);

  const double ps[4] = {3.0, 4.0, 4.5, 4.9};
  Owned drift;
  int decreasing = 0;
  REQUIRE(sm_p_to_5(m, ps, 4, lo, hi, seeds, &drift.s, &decreasing) == SM_OK);
  CHECK(decreasing == 1);

  double left = 0.0, right = 0.0;
  const double z[3] = {0.5, 0.2, 0.0}, w[3] = {1.0, 0.0, 0.0};
  REQUIRE(sm_directional_derivative(m, z, w, &left, &right) == SM_OK);
  CHECK(left == right);

  Owned clarke;
  REQUIRE(sm_clarke_test(m, z, "{}", &clarke.s) == SM_OK);
  CHECK(clarke.str().find("\"member\": false") != std::string::npos);
  CHECK(sm_clarke_test(m, z, R"j({"bogus": 1})j", &clarke.s) == SM_ERR_INVALID_ARGUMENT);
  sm_model_destroy(m);
}

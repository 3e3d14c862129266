#ifndef SPIKEMAP_SPIKEMAP_H
#define SPIKEMAP_SPIKEMAP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SM_API __declspec(dllexport)
#else
#define SM_API __attribute__((visibility("default")))
#endif

/* Status codes. Values 1..10 mirror the error codes of the core library. */
typedef enum sm_status {
  SM_OK = 0,
  SM_ERR_INVALID_ARGUMENT = 1,
  SM_ERR_PARSE = 2,
  SM_ERR_DOMAIN = 3,
  SM_ERR_ASSUMPTION = 4,
  SM_ERR_BRACKET = 5,
  SM_ERR_NONCONVERGENCE = 6,
  SM_ERR_BOUNDARY_MASS = 7,
  SM_ERR_IO = 8,
  SM_ERR_GRID_MISMATCH = 9,
  SM_ERR_UNSUPPORTED = 10,
  SM_ERR_INTERNAL = 99
} sm_status;

typedef struct sm_model sm_model;
typedef struct sm_field sm_field;
typedef struct sm_solution sm_solution;

/* Library */
SM_API const char* sm_version(void);
SM_API const char* sm_status_name(sm_status status);
/* Message of the last failing call on this thread; "" if none. */
SM_API const char* sm_last_error(void);
/* Every char* returned through an out parameter is owned by the caller. */
SM_API void sm_free_string(char* s);
/* Caps the worker threads of all internal loops; 0 restores the default. */
SM_API sm_status sm_set_workers(int workers);
SM_API int sm_get_workers(void);

/* Expressions */
SM_API sm_status sm_eval_expression(const char* text, const double x[3], double* value, double grad[3]);

/* Models
 * JSON keys: "V", "K", "A1", "A2", "A3" (expression strings, default "1", "1", "0", "0", "0"),
 * "nonlinearity": {"kind": "power", "lambda": 1, "p": 3} or {"kind": "table", "path": "..."},
 * "theta" (required for tables), "V0", "K0". Unknown keys are rejected. */
SM_API sm_status sm_model_create(const char* json, sm_model** out);
/* Replaces the nonlinearity by user callbacks; F must be the primitive (1/2) int_0^s f. */
SM_API sm_status sm_model_set_callback_nonlinearity(sm_model* model, double (*f)(double s, void* user),
                                                    double (*F)(double s, void* user), void* user, double theta);
SM_API void sm_model_destroy(sm_model* model);
SM_API sm_status sm_model_describe(const sm_model* model, char** json);
/* Samples V, K, f on the box of half width `radius`; writes the validation report as JSON. */
SM_API sm_status sm_model_validate(const sm_model* model, double radius, char** json);

/* Frozen problem */
SM_API sm_status sm_canonical_energy(double p, double lambda, double* out);
/* Ground energy and its gradient at z. force_shooting != 0 bypasses the explicit power formula. */
SM_API sm_status sm_sigma(const sm_model* model, const double z[3], int force_shooting, double* sigma,
                          double grad[3]);
/* Radial ground state at z: profile CSV (r,u) and a JSON summary with the ground-energy sample,
 * decay fit and limit-identity residual. Either output may be NULL. */
SM_API sm_status sm_solve_frozen(const sm_model* model, const double z[3], char** profile_csv, char** json);

/* Fields: complex, interleaved (re, im) doubles, x-fastest. */
SM_API sm_status sm_field_create(const int dims[3], double spacing, const double origin[3], const double* data,
                                 sm_field** out);
SM_API sm_status sm_field_read(const char* path, sm_field** out);
SM_API sm_status sm_field_write(const sm_field* field, const char* path);
SM_API sm_status sm_field_grid(const sm_field* field, int dims[3], double* spacing, double origin[3]);
/* Copies 2 * node count doubles into `data`; `capacity` is the buffer length in doubles. */
SM_API sm_status sm_field_copy_data(const sm_field* field, double* data, size_t capacity);
/* u (1 + level xi), xi complex Gaussian with E|xi|^2 = 1. */
SM_API sm_status sm_field_add_noise(const sm_field* field, double level, uint64_t seed, sm_field** out);
SM_API void sm_field_destroy(sm_field* field);
/* SM_ERR_GRID_MISMATCH unless the field lives on the cube with n nodes per axis, the given
 * radius and centre (the solver grid of the same parameters). */
SM_API sm_status sm_field_check_grid(const sm_field* field, int n, double radius, const double center[3]);

/* Full problem
 * Config JSON keys: "eps", "n", "radius", "center" [3], "max_iters", "tol",
 * "seed": "frozen" | "random" | "file", "seed_center" [3], "random_seed", "random_amplitude",
 * "seed_file", "boundary_mass_limit". A run that stops at max_iters returns SM_OK with
 * "converged": false in the summary. */
SM_API sm_status sm_solve_magnetic(const sm_model* model, const char* config_json, sm_solution** out);
/* Limiting problem frozen at z (eps = 1) on the cube with n nodes and the given radius about 0. */
SM_API sm_status sm_solve_frozen_magnetic(const sm_model* model, const double z[3], int n, double radius,
                                          sm_solution** out);
SM_API sm_status sm_solution_summary(const sm_solution* sol, char** json);
/* Header iter,energy,residual,nehari_slack. */
SM_API sm_status sm_solution_trace_csv(const sm_solution* sol, char** csv);
SM_API sm_status sm_solution_field(const sm_solution* sol, sm_field** out);
SM_API int sm_solution_converged(const sm_solution* sol);
SM_API void sm_solution_destroy(sm_solution* sol);
SM_API sm_status sm_energy(const sm_field* field, const sm_model* model, double eps, double* energy);

/* Diagnostics */
SM_API sm_status sm_diagnose(const sm_field* field, const sm_model* model, double eps, char** json);
/* Names of the failing hard checks, comma separated ("" when all pass). */
SM_API sm_status sm_diagnose_failures(const char* report_json, char** names);
/* Family of solutions with strictly decreasing eps; z0 is the target point. */
SM_API sm_status sm_concentration_study(const sm_model* model, const sm_solution* const* family, size_t count,
                                        const double z0[3], const double* rho, size_t rho_count, char** csv,
                                        char** json);
/* Options JSON keys: "rho", "lambdas", "random_directions", "seed", "sample_ball_with_net". */
SM_API sm_status sm_clarke_test(const sm_model* model, const double z[3], const char* options_json, char** json);
SM_API sm_status sm_directional_derivative(const sm_model* model, const double z[3], const double w[3],
                                           double* left, double* right);

/* Landscape; boxes are given by lo[3], hi[3]. */
SM_API sm_status sm_sweep_sigma(const sm_model* model, const double lo[3], const double hi[3], const int res[3],
                                int force_shooting, char** csv, char** critical_json);
SM_API sm_status sm_find_Sp(const sm_model* model, double p, const double lo[3], const double hi[3],
                            const int seeds[3], char** json);
SM_API sm_status sm_crit_K(const sm_model* model, const double lo[3], const double hi[3], const int seeds[3],
                           char** json);
/* candidates: 3 * count doubles. Options JSON keys: "tolerance", "random_directions", "seed",
 * "phase_samples", "provider": "radial" | "frozen-magnetic", "n", "radius". */
SM_API sm_status sm_find_Sstar(const sm_model* model, const double* candidates, size_t count,
                               const char* options_json, char** json);
SM_API sm_status sm_p_to_5(const sm_model* model, const double* p_list, size_t count, const double lo[3],
                           const double hi[3], const int seeds[3], char** csv, int* strictly_decreasing);

#ifdef __cplusplus
}
#endif

#endif

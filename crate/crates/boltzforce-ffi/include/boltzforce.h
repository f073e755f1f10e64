#ifndef BOLTZFORCE_H
#define BOLTZFORCE_H

/* Generated by cbindgen from boltzforce-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum BfStatus {
  BF_STATUS_OK = 0,
  BF_STATUS_NULL_POINTER = 1,
  BF_STATUS_INVALID_ARGUMENT = 2,
  BF_STATUS_CONFIG = 3,
  BF_STATUS_IO = 4,
  BF_STATUS_UNDER_RESOLVED = 5,
  BF_STATUS_NUMERICAL = 6,
  BF_STATUS_PANIC = 7,
} BfStatus;

/**
 * A parsed and validated run configuration.
 */
typedef struct BfConfig BfConfig;

/**
 * Limit fluid solver together with its current state.
 */
typedef struct BfFluid BfFluid;

/**
 * Kinetic solver together with its current state.
 */
typedef struct BfKinetic BfKinetic;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into the library from the same thread.
 */
const char *bf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bf_version(void);

/**
 * Loads a TOML config file; relative paths inside it resolve against
 * its directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BfStatus bf_config_load(const char *path, struct BfConfig **out);

/**
 * Parses a config from TOML text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BfStatus bf_config_parse(const char *text, struct BfConfig **out);

/**
 * # Safety
 * `cfg` must come from `bf_config_*` and not be used afterwards.
 */
void bf_config_free(struct BfConfig *cfg);

/**
 * Runs the operator checks; `all_pass` receives 1 when every check
 * passed. A failed check is not an error of the call.
 *
 * # Safety
 * `cfg` must be a live config and `all_pass` a valid pointer.
 */
enum BfStatus bf_check_operators(const struct BfConfig *cfg, int32_t *all_pass);

/**
 * Builds the kinetic solver at Knudsen number `eps` and sets its state
 * to the configured initial data.
 *
 * # Safety
 * `cfg` must be a live config and `out` a valid pointer.
 */
enum BfStatus bf_kinetic_new(const struct BfConfig *cfg, double eps, struct BfKinetic **out);

/**
 * # Safety
 * `k` must come from `bf_kinetic_new` and not be used afterwards.
 */
void bf_kinetic_free(struct BfKinetic *k);

/**
 * Number of values in the state, N_v^{d_v} · N_x^{d_x}, velocity-major.
 *
 * # Safety
 * `k` must be a live handle or NULL (which yields 0).
 */
size_t bf_kinetic_len(const struct BfKinetic *k);

/**
 * # Safety
 * `k` must be a live handle and `t` a valid pointer.
 */
enum BfStatus bf_kinetic_time(const struct BfKinetic *k, double *t);

/**
 * Copies the perturbation f (around M(t)) into `buf` of length `len`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum BfStatus bf_kinetic_get_state(const struct BfKinetic *k, double *buf, size_t len);

/**
 * Replaces the state by `buf` at time `t`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum BfStatus bf_kinetic_set_state(struct BfKinetic *k, double t, const double *buf, size_t len);

/**
 * Advances the state by one step of size `dt`. On failure the state is
 * left unchanged.
 *
 * # Safety
 * `k` must be a live handle.
 */
enum BfStatus bf_kinetic_step(struct BfKinetic *k, double dt);

/**
 * Mass and energy of the reconstructed distribution F.
 *
 * # Safety
 * `mass` and `energy` must be valid pointers.
 */
enum BfStatus bf_kinetic_moments(const struct BfKinetic *k, double *mass, double *energy);

/**
 * Builds the limit fluid solver with transport coefficients taken from
 * the config or computed from the collision operator, starting from the
 * configured well-prepared data.
 *
 * # Safety
 * `cfg` must be a live config and `out` a valid pointer.
 */
enum BfStatus bf_fluid_new(const struct BfConfig *cfg, struct BfFluid **out);

/**
 * # Safety
 * `f` must come from `bf_fluid_new` and not be used afterwards.
 */
void bf_fluid_free(struct BfFluid *f);

/**
 * Number of spatial points N_x^{d_x}.
 *
 * # Safety
 * `f` must be a live handle or NULL (which yields 0).
 */
size_t bf_fluid_len(const struct BfFluid *f);

/**
 * Viscosity and heat conductivity in use.
 *
 * # Safety
 * `nu` and `kappa` must be valid pointers.
 */
enum BfStatus bf_fluid_coefficients(const struct BfFluid *f, double *nu, double *kappa);

/**
 * # Safety
 * `f` must be a live handle.
 */
enum BfStatus bf_fluid_step(struct BfFluid *f, double dt);

/**
 * # Safety
 * `t` must be a valid pointer.
 */
enum BfStatus bf_fluid_time(const struct BfFluid *f, double *t);

/**
 * Copies velocity component `component` (0-based) into `buf`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum BfStatus bf_fluid_get_velocity(const struct BfFluid *f,
                                    size_t component,
                                    double *buf,
                                    size_t len);

/**
 * Copies the temperature θ into `buf`; the density is −θ.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum BfStatus bf_fluid_get_theta(const struct BfFluid *f, double *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOLTZFORCE_H */

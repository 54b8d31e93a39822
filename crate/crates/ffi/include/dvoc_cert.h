#ifndef DVOC_CERT_H
#define DVOC_CERT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call. `NOT_CERTIFIED` still produces a report.
 */
typedef enum DvocStatus {
  DVOC_STATUS_OK = 0,
  DVOC_STATUS_NOT_CERTIFIED = 1,
  DVOC_STATUS_INVALID_INPUT = 2,
  DVOC_STATUS_NUMERICAL = 3,
  DVOC_STATUS_NULL_POINTER = 4,
} DvocStatus;

typedef struct DvocReport DvocReport;

typedef struct DvocScenario DvocScenario;

typedef struct DvocTrajectory DvocTrajectory;

/**
 * Per-converter controller parameters in per-unit.
 */
typedef struct DvocParams {
  double eta;
  double alpha;
  double phi;
  double p_star;
  double q_star;
  double v_star;
  double omega0;
  double i_max;
  double kv;
  double theta_v;
} DvocParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error of this thread into `buf` as a NUL-terminated string,
 * truncating to `len - 1` bytes. Returns the full message length without the NUL.
 */
size_t dvoc_last_error_message(char *buf, size_t len);

/**
 * Fills `out_params` with the library defaults.
 */
enum DvocStatus dvoc_params_default(struct DvocParams *out_params);

/**
 * Node passivity index δ. A positive `v_s_mag` gives the equilibrium-aware
 * value; zero, negative or NaN gives the conservative bound.
 */
enum DvocStatus dvoc_node_passivity_index(const struct DvocParams *params,
                                          double v_s_mag,
                                          double *out_delta);

/**
 * Loads a scenario file.
 */
enum DvocStatus dvoc_scenario_load(const char *path, struct DvocScenario **out_scenario);

/**
 * Parses a scenario from JSON text.
 */
enum DvocStatus dvoc_scenario_from_json(const char *json, struct DvocScenario **out_scenario);

enum DvocStatus dvoc_scenario_converter_count(const struct DvocScenario *scenario,
                                              size_t *out_count);

/**
 * Reads the parameters of converter `index`.
 */
enum DvocStatus dvoc_scenario_get_params(const struct DvocScenario *scenario,
                                         size_t index,
                                         struct DvocParams *out_params);

/**
 * Replaces the parameters of converter `index`.
 */
enum DvocStatus dvoc_scenario_set_params(struct DvocScenario *scenario,
                                         size_t index,
                                         const struct DvocParams *params);

void dvoc_scenario_free(struct DvocScenario *scenario);

/**
 * Certifies the pre-event plant. Returns `OK` or `NOT_CERTIFIED`; in both
 * cases `*out_report` receives a report.
 */
enum DvocStatus dvoc_certify(const struct DvocScenario *scenario,
                             bool conservative,
                             struct DvocReport **out_report);

enum DvocStatus dvoc_report_certified(const struct DvocReport *report, bool *out_certified);

/**
 * Network passivity index ε_net. Fails with `INVALID_INPUT` for an empty plant.
 */
enum DvocStatus dvoc_report_epsilon_net(const struct DvocReport *report, double *out_epsilon);

enum DvocStatus dvoc_report_converter_count(const struct DvocReport *report, size_t *out_count);

/**
 * Copies δ_k for every converter into `buf`.
 */
enum DvocStatus dvoc_report_delta(const struct DvocReport *report, double *buf, size_t len);

/**
 * Copies δ_k + ε_net for every converter into `buf`.
 */
enum DvocStatus dvoc_report_margins(const struct DvocReport *report, double *buf, size_t len);

/**
 * Writes the JSON form of the report into `buf` (NUL-terminated) and its
 * length without the NUL into `*out_len`. With a null or short buffer only
 * the length is written and `INVALID_INPUT` is returned.
 */
enum DvocStatus dvoc_report_to_json(const struct DvocReport *report,
                                    char *buf,
                                    size_t len,
                                    size_t *out_len);

void dvoc_report_free(struct DvocReport *report);

/**
 * Runs the scenario. On divergence `*out_trajectory` receives the part
 * computed so far and `NUMERICAL` is returned.
 */
enum DvocStatus dvoc_simulate(const struct DvocScenario *scenario,
                              bool unrotated,
                              struct DvocTrajectory **out_trajectory);

/**
 * Number of recorded samples.
 */
enum DvocStatus dvoc_trajectory_len(const struct DvocTrajectory *trajectory, size_t *out_len);

enum DvocStatus dvoc_trajectory_times(const struct DvocTrajectory *trajectory,
                                      double *buf,
                                      size_t len);

/**
 * Storage function ν at every sample.
 */
enum DvocStatus dvoc_trajectory_nu(const struct DvocTrajectory *trajectory,
                                   double *buf,
                                   size_t len);

/**
 * Terminal voltage of converter `index` at every sample, split into real and
 * imaginary parts.
 */
enum DvocStatus dvoc_trajectory_voltage(const struct DvocTrajectory *trajectory,
                                        size_t index,
                                        double *re,
                                        double *im,
                                        size_t len);

enum DvocStatus dvoc_trajectory_write_csv(const struct DvocTrajectory *trajectory,
                                          const char *path);

void dvoc_trajectory_free(struct DvocTrajectory *trajectory);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DVOC_CERT_H */

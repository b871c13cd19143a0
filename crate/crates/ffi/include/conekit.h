#ifndef CONEKIT_H
#define CONEKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of one check in a report.
typedef enum ConekitCheckStatus {
  CONEKIT_CHECK_STATUS_PASS = 0,
  CONEKIT_CHECK_STATUS_FAIL = 1,
  CONEKIT_CHECK_STATUS_ERROR = 2,
  CONEKIT_CHECK_STATUS_EXPECTED_FAIL = 3,
  CONEKIT_CHECK_STATUS_UNEXPECTED_PASS = 4,
} ConekitCheckStatus;

// Result codes.
typedef enum ConekitStatus {
  CONEKIT_STATUS_OK = 0,
  CONEKIT_STATUS_NULL_POINTER = 1,
  CONEKIT_STATUS_INVALID_UTF8 = 2,
  CONEKIT_STATUS_CONFIG = 3,
  CONEKIT_STATUS_DOMAIN = 4,
  CONEKIT_STATUS_NUMERICAL = 5,
  CONEKIT_STATUS_IO = 6,
  CONEKIT_STATUS_OUT_OF_RANGE = 7,
  CONEKIT_STATUS_PANIC = 8,
} ConekitStatus;

// Opaque experiment configuration.
typedef struct ConekitConfig ConekitConfig;

// Opaque run report together with its timings.
typedef struct ConekitReport ConekitReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *conekit_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void conekit_string_free(char *s);

// Default configuration (all checks, built-in parameters).
//
// # Safety
// `out` must be a valid pointer.
enum ConekitStatus conekit_config_default(struct ConekitConfig **out);

// Parse and validate a TOML configuration.
//
// # Safety
// `toml` must be a nul-terminated string and `out` a valid pointer.
enum ConekitStatus conekit_config_from_toml(const char *toml, struct ConekitConfig **out);

// Restrict the run to a comma-separated list of check names ("" selects all).
//
// # Safety
// `cfg` must be a live config handle and `names` a nul-terminated string.
enum ConekitStatus conekit_config_select_checks(struct ConekitConfig *cfg, const char *names);

// Serialize a config to TOML; free the result with [`conekit_string_free`].
//
// # Safety
// `cfg` must be a live config handle and `out` a valid pointer.
enum ConekitStatus conekit_config_to_toml(const struct ConekitConfig *cfg, char **out);

// Release a config handle. Null is ignored.
//
// # Safety
// `cfg` must come from this library and not have been freed already.
void conekit_config_free(struct ConekitConfig *cfg);

// Run the suite. A report is produced even when checks fail; the status
// reflects only whether the run itself could be carried out.
//
// # Safety
// `cfg` must be a live config handle and `out` a valid pointer.
enum ConekitStatus conekit_run(const struct ConekitConfig *cfg, struct ConekitReport **out);

// 1 when every non-expected-fail check passed, 0 otherwise (or on null).
//
// # Safety
// `rep` must be null or a live report handle.
int32_t conekit_report_all_pass(const struct ConekitReport *rep);

// Number of checks in the report (0 on null).
//
// # Safety
// `rep` must be null or a live report handle.
size_t conekit_report_check_count(const struct ConekitReport *rep);

// Status and criterion number of check `index`.
//
// # Safety
// `rep` must be a live report handle; `status` and `criterion` valid pointers.
enum ConekitStatus conekit_report_check(const struct ConekitReport *rep,
                                        size_t index,
                                        enum ConekitCheckStatus *status,
                                        uint32_t *criterion);

// Name of check `index`; free the result with [`conekit_string_free`].
//
// # Safety
// `rep` must be a live report handle and `out` a valid pointer.
enum ConekitStatus conekit_report_check_name(const struct ConekitReport *rep,
                                             size_t index,
                                             char **out);

// Report as pretty JSON; free the result with [`conekit_string_free`].
//
// # Safety
// `rep` must be a live report handle and `out` a valid pointer.
enum ConekitStatus conekit_report_to_json(const struct ConekitReport *rep, char **out);

// Write report.json, timings.json and plots/ into `dir`.
//
// # Safety
// `rep` must be a live report handle and `dir` a nul-terminated string.
enum ConekitStatus conekit_report_write(const struct ConekitReport *rep, const char *dir);

// Release a report handle. Null is ignored.
//
// # Safety
// `rep` must come from this library and not have been freed already.
void conekit_report_free(struct ConekitReport *rep);

// Transverse chart map z = ψ_k(w) for cone angle 2πβ.
//
// # Safety
// `z_re` and `z_im` must be valid pointers.
enum ConekitStatus conekit_chart_psi(double beta,
                                     uint32_t k,
                                     double w_re,
                                     double w_im,
                                     double *z_re,
                                     double *z_im);

// φ(r, t) for Hölder exponent `alpha`.
//
// # Safety
// `out` must be a valid pointer.
enum ConekitStatus conekit_phi(double r, double t, double alpha, double *out);

// Regularized maximum M_η(t1, t2) with the default mollifier.
//
// # Safety
// `out` must be a valid pointer.
enum ConekitStatus conekit_m_eta(double t1, double t2, double eta, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONEKIT_H */

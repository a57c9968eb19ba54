#ifndef PPSIM_H
#define PPSIM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PPSIM_API __declspec(dllexport)
#else
#define PPSIM_API __attribute__((visibility("default")))
#endif

typedef enum ppsim_status {
  PPSIM_OK = 0,
  PPSIM_ERR_INVALID_ARGUMENT = 1,
  PPSIM_ERR_CONFIG = 2,
  PPSIM_ERR_IO = 3,
  PPSIM_ERR_UNSUPPORTED = 4,
  PPSIM_ERR_NOT_FOUND = 5,
  PPSIM_ERR_STAGE = 6,
  PPSIM_ERR_INTERNAL = 7
} ppsim_status;

typedef struct ppsim_experiment ppsim_experiment;
typedef struct ppsim_timer ppsim_timer;

/* Message of the last failed call on this thread; never NULL. */
PPSIM_API const char* ppsim_last_error(void);
PPSIM_API const char* ppsim_version(void);

/* Strings returned through char** parameters are owned by the caller. */
PPSIM_API void ppsim_string_free(char* s);

/* config_json may be NULL for the defaults. */
PPSIM_API ppsim_status ppsim_experiment_create(const char* config_json, ppsim_experiment** out);
PPSIM_API ppsim_status ppsim_experiment_load(const char* path, ppsim_experiment** out);
PPSIM_API void ppsim_experiment_destroy(ppsim_experiment* exp);

PPSIM_API ppsim_status ppsim_experiment_config(const ppsim_experiment* exp, char** config_json);
PPSIM_API ppsim_status ppsim_experiment_digest(const ppsim_experiment* exp, char** digest_hex);
PPSIM_API ppsim_status ppsim_experiment_set_traces(ppsim_experiment* exp, unsigned n_traces);
/* Replaces the noise section with a JSON object as produced by calibration. */
PPSIM_API ppsim_status ppsim_experiment_set_noise(ppsim_experiment* exp, const char* noise_json);
PPSIM_API ppsim_status ppsim_experiment_set_noise_file(ppsim_experiment* exp, const char* path);

/* out_dir may be NULL or empty to skip writing files. Any of the result
   pointers may be NULL. */
PPSIM_API ppsim_status ppsim_run_e2e(ppsim_experiment* exp, uint64_t seed, const char* out_dir, int write_traces,
                                     char** report_json, char** timing_json);
PPSIM_API ppsim_status ppsim_run_scan(ppsim_experiment* exp, uint64_t seed, const char* out_dir, char** scan_json);
PPSIM_API ppsim_status ppsim_run_monitor(ppsim_experiment* exp, uint64_t seed, unsigned n_traces, const char* out_dir,
                                         char** summary_json);
/* reference_hex may be NULL when the key is unknown. */
PPSIM_API ppsim_status ppsim_recover(ppsim_experiment* exp, const char* const* trace_paths, size_t n_paths,
                                     const char* reference_hex, char** recovery_json);
/* param: "n_traces", "lookahead" or "noise_scale". threads 0 uses all cores. */
PPSIM_API ppsim_status ppsim_sweep(ppsim_experiment* exp, uint64_t seed, const char* param, const double* values,
                                   size_t n_values, unsigned runs, unsigned threads, char** table_csv,
                                   char** table_json);
PPSIM_API ppsim_status ppsim_calibrate_noise(ppsim_experiment* exp, uint64_t seed, double target, unsigned budget,
                                             char** result_json);

/* variant: "memory_inc" or "shadow_register". */
PPSIM_API ppsim_status ppsim_timer_create(const char* variant, int force, ppsim_timer** out);
PPSIM_API void ppsim_timer_destroy(ppsim_timer* t);
PPSIM_API ppsim_status ppsim_timer_read(const ppsim_timer* t, uint64_t* value);
PPSIM_API ppsim_status ppsim_timer_stop(ppsim_timer* t);
PPSIM_API ppsim_status ppsim_timer_calibrate(const ppsim_timer* t, double seconds, unsigned samples,
                                             char** calibration_json);
PPSIM_API unsigned ppsim_hardware_threads(void);

#ifdef __cplusplus
}
#endif

#endif

#ifndef TWINSYNC_TWINSYNC_H
#define TWINSYNC_TWINSYNC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(TWINSYNC_BUILDING_LIBRARY)
#    define TWINSYNC_API __declspec(dllexport)
#  else
#    define TWINSYNC_API __declspec(dllimport)
#  endif
#else
#  define TWINSYNC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as the command-line exit codes. */
typedef enum ts_status {
    TS_OK = 0,
    TS_ERR_INTERNAL = 1,
    TS_ERR_CONFIG = 2,
    TS_ERR_DATASET = 3,
    TS_ERR_NUMERIC = 4,
    TS_ERR_IO = 5,
    TS_ERR_INVALID_ARGUMENT = 6,
    TS_ERR_STATE = 7
} ts_status;

typedef struct ts_config ts_config;
typedef struct ts_run ts_run;

TWINSYNC_API const char* ts_version(void);
TWINSYNC_API const char* ts_status_name(ts_status status);

/* Message for the most recent failure on the calling thread. The pointer
 * stays valid until the next failing call on the same thread. */
TWINSYNC_API const char* ts_last_error(void);

/* Strings handed out by the library are released with ts_string_free. */
TWINSYNC_API void ts_string_free(char* s);

/* Configuration. "paper" and "desk" are the built-in presets. A JSON
 * document may be a bare config or a summary.json from an earlier run. */
TWINSYNC_API ts_status ts_config_from_preset(const char* name, ts_config** out);
TWINSYNC_API ts_status ts_config_from_file(const char* path, ts_config** out);
TWINSYNC_API ts_status ts_config_from_json(const char* text, ts_config** out);
TWINSYNC_API ts_status ts_config_clone(const ts_config* cfg, ts_config** out);
/* Dotted-path override, e.g. ("reg.lambda", "20"). Unknown keys fail. */
TWINSYNC_API ts_status ts_config_set(ts_config* cfg, const char* key, const char* value);
TWINSYNC_API ts_status ts_config_to_json(const ts_config* cfg, char** out);
TWINSYNC_API void ts_config_free(ts_config* cfg);

/* Experiments. Dataset problems report TS_ERR_DATASET, diverging training
 * TS_ERR_NUMERIC. */
TWINSYNC_API ts_status ts_run_experiment(const ts_config* cfg, ts_run** out);
TWINSYNC_API ts_status ts_run_write_outputs(const ts_run* run, const char* dir);
TWINSYNC_API ts_status ts_run_summary_json(const ts_run* run, char** out);
TWINSYNC_API size_t ts_run_strategy_count(const ts_run* run);
TWINSYNC_API size_t ts_run_episode_count(const ts_run* run);
TWINSYNC_API ts_status ts_run_final_accuracy(const ts_run* run, const char* strategy, double* combined,
                                             double* first_episode);
TWINSYNC_API ts_status ts_run_episode(const ts_run* run, const char* strategy, size_t episode,
                                      size_t* chosen_iterations, double* delta_t_s);
TWINSYNC_API void ts_run_free(ts_run* run);

/* Single-episode alpha sweep; writes alpha_sweep.csv, fig4_tradeoff.csv and
 * summary.json into out_dir when it is not NULL. */
TWINSYNC_API ts_status ts_sweep_alpha(const ts_config* cfg, const double* alphas, size_t count, const char* out_dir,
                                      char** summary_json);
/* Full runs of the EWC variants in cfg for each lambda. */
TWINSYNC_API ts_status ts_sweep_lambda(const ts_config* cfg, const double* lambdas, size_t count, char** report_json);

/* Finite-difference checks; report lists each suite's max relative error. */
TWINSYNC_API ts_status ts_gradcheck(uint64_t seed, size_t networks, char** report_json);

/* Header, payload size and CRC-32 of one IDX file (plain or .gz). */
TWINSYNC_API ts_status ts_inspect_idx(const char* path, char** report_json);
/* Resolves the config's IDX paths, inspects and loads both splits. */
TWINSYNC_API ts_status ts_inspect_dataset(const ts_config* cfg, char** report_json);

TWINSYNC_API ts_status ts_desync_time(size_t training_size, double cycles_per_sample, double frequency_hz,
                                      size_t iterations, double* out_seconds);

#ifdef __cplusplus
}
#endif

#endif

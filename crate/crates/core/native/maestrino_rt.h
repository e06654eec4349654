/* Support runtime linked into every generated maestrino simulator. */
#ifndef MAESTRINO_RT_H
#define MAESTRINO_RT_H

#include <stddef.h>

#define MRT_MAX_VARS 32
#define MRT_MAX_PARAMS 256
#define MRT_MAX_WRITERS 8
#define MRT_KEY_LEN 256
#define MRT_PATH_LEN 4096

#define MRT_EXIT_OK 0
#define MRT_EXIT_CONFIG 1
#define MRT_EXIT_RUNTIME 2

enum mrt_kind { MRT_PARAMETER, MRT_INPUT, MRT_OUTPUT, MRT_LOCAL };

enum mrt_state {
    MRT_INSTANTIATED,
    MRT_INITIALIZED,
    MRT_STEPPING,
    MRT_TERMINATED
};

/* FMI-lite model table. Values are indexed by value reference. */
typedef struct mrt_model {
    const char *model_name;
    int n_vars;
    const int *kinds;
    const int *is_boolean;
    void (*initialize)(double *values);
    void (*step)(double *values, double h);
} mrt_model;

typedef struct mrt_instance {
    const mrt_model *model;
    const char *name;
    double values[MRT_MAX_VARS];
    int state;
    double time;
} mrt_instance;

extern const mrt_model MRT_MODEL_WATERTANK;
extern const mrt_model MRT_MODEL_CONTROLLER;

/* All functions below return 0 on success; on failure the message is
 * available from mrt_last_error(). */
int mrt_instantiate(mrt_instance *inst, const mrt_model *model,
                    const char *name, const double *defaults);
int mrt_set_real(mrt_instance *inst, int vr, double v);
int mrt_get_real(const mrt_instance *inst, int vr, double *out);
int mrt_initialize(mrt_instance *inst, double start_time);
int mrt_do_step(mrt_instance *inst, double t, double h);
int mrt_terminate(mrt_instance *inst);

typedef struct mrt_param {
    char key[MRT_KEY_LEN];
    double value;
    int used;
} mrt_param;

/* C-side mirror of the runtime file. */
typedef struct mrt_config {
    mrt_param params[MRT_MAX_PARAMS];
    int n_params;
    char outputs[MRT_MAX_WRITERS][MRT_PATH_LEN];
    int n_outputs;
    int has_end_time;
    double end_time;
} mrt_config;

int mrt_parse_config(const char *text, mrt_config *cfg);
int mrt_load_config(const char *path, mrt_config *cfg);
/* Returns the index of `key` in cfg->params, or -1. */
int mrt_config_find(const mrt_config *cfg, const char *key);

/* Shortest round-trip decimal of a finite double, always with a '.' or an
 * exponent. Returns the length written, or -1 for non-finite input.
 * `buf` must hold at least 32 bytes. */
int mrt_format_real(double v, char *buf);

unsigned long long mrt_step_count(double start, double end, double h);

const char *mrt_last_error(void);
void mrt_set_error(const char *fmt, ...);

/* CSV sinks for every DataWriter in the configuration. */
typedef struct mrt_writer {
    void *files[MRT_MAX_WRITERS];
    int n_files;
} mrt_writer;

int mrt_writer_open(mrt_writer *w, const mrt_config *cfg, const char *header);
int mrt_writer_row(mrt_writer *w, const double *row, int n);
int mrt_writer_close(mrt_writer *w);

#endif

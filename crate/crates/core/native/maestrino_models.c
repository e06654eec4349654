/* FMI-lite water tank and controller. Arithmetic mirrors the Rust models
 * operation for operation; build with -ffp-contract=off. */
#include "maestrino_rt.h"

enum { WT_LEVEL, WT_VALVE, WT_INFLOW, WT_OUTFLOW, WT_INITIAL, WT_NVARS };
enum { CT_LEVEL, CT_VALVE, CT_MIN, CT_MAX, CT_NVARS };

static const int wt_kinds[WT_NVARS] = {
    MRT_OUTPUT, MRT_INPUT, MRT_PARAMETER, MRT_PARAMETER, MRT_PARAMETER
};
static const int wt_boolean[WT_NVARS] = { 0, 1, 0, 0, 0 };

static void watertank_initialize(double *v)
{
    v[WT_LEVEL] = v[WT_INITIAL];
}

static void watertank_step(double *v, double h)
{
    double open = v[WT_VALVE] != 0.0 ? 1.0 : 0.0;
    double next = v[WT_LEVEL] + h * (v[WT_INFLOW] - open * v[WT_OUTFLOW]);
    v[WT_LEVEL] = next < 0.0 ? 0.0 : next;
}

const mrt_model MRT_MODEL_WATERTANK = {
    "singlewatertank-20sim", WT_NVARS, wt_kinds, wt_boolean,
    watertank_initialize, watertank_step
};

static const int ct_kinds[CT_NVARS] = {
    MRT_INPUT, MRT_OUTPUT, MRT_PARAMETER, MRT_PARAMETER
};
static const int ct_boolean[CT_NVARS] = { 0, 1, 0, 0 };

static void controller_step(double *v, double h)
{
    double prev = v[CT_VALVE] != 0.0 ? 1.0 : 0.0;
    (void)h;
    if (v[CT_LEVEL] >= v[CT_MAX])
        v[CT_VALVE] = 1.0;
    else if (v[CT_LEVEL] <= v[CT_MIN])
        v[CT_VALVE] = 0.0;
    else
        v[CT_VALVE] = prev;
}

const mrt_model MRT_MODEL_CONTROLLER = {
    "watertankcontroller-c", CT_NVARS, ct_kinds, ct_boolean,
    0, controller_step
};

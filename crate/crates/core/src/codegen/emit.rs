//! Emits `co-sim.c` for a plan.

use std::fmt::Write;

use crate::fmu::VariableKind;
use crate::master::{format_real, SimulationPlan};

fn lit(v: f64) -> String {
    format_real(v)
}

/// Generates the simulator main program. Instance count, wiring, column
/// order and parameter slots are fixed in the code; parameter values, end
/// time and output files come from the runtime file.
pub fn emit_cosim_c(plan: &SimulationPlan) -> String {
    let mut out = String::new();
    let w = &mut out;
    let n_inst = plan.instances.len();
    let n_params = plan.parameters.len();
    let n_cols = plan.columns.len();

    writeln!(w, "/* Generated by maestrino. Do not edit.").unwrap();
    writeln!(w, " * plan fingerprint: {} */", plan.fingerprint()).unwrap();
    writeln!(w, "#include <stdio.h>").unwrap();
    writeln!(w, "#include <string.h>").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "#include \"maestrino_rt.h\"").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "#define N_INSTANCES {n_inst}").unwrap();
    writeln!(w, "#define N_PARAMS {n_params}").unwrap();
    writeln!(w, "#define N_COLUMNS {n_cols}").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "static const double START_TIME = {};", lit(plan.start_time)).unwrap();
    writeln!(w, "static const double STEP_SIZE = {};", lit(plan.step_size)).unwrap();
    writeln!(w, "static const double END_TIME = {};", lit(plan.end_time)).unwrap();
    writeln!(w).unwrap();

    for (i, inst) in plan.instances.iter().enumerate() {
        let desc = plan.description_of(i);
        let mut defaults = vec![0.0; desc.variables.len()];
        for var in &desc.variables {
            defaults[var.value_ref.index()] = var.start_value();
        }
        let list: Vec<String> = defaults.into_iter().map(lit).collect();
        writeln!(
            w,
            "/* {} : {} */\nstatic const double DEFAULTS_{i}[{}] = {{ {} }};",
            inst.name,
            desc.model_name,
            list.len(),
            list.join(", ")
        )
        .unwrap();
    }
    writeln!(w).unwrap();

    writeln!(w, "typedef struct param_slot {{").unwrap();
    writeln!(w, "    const char *key;").unwrap();
    writeln!(w, "    int instance;").unwrap();
    writeln!(w, "    int vr;").unwrap();
    writeln!(w, "    int has_default;").unwrap();
    writeln!(w, "    double value;").unwrap();
    writeln!(w, "}} param_slot;").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "static const param_slot PARAMS[{}] = {{", n_params.max(1)).unwrap();
    if plan.parameters.is_empty() {
        writeln!(w, "    {{ 0, 0, 0, 0, 0.0 }}").unwrap();
    }
    for slot in &plan.parameters {
        writeln!(
            w,
            "    {{ \"{}\", {}, {}, {}, {} }},",
            slot.key,
            slot.instance,
            slot.value_ref.0,
            u8::from(slot.default.is_some()),
            lit(slot.default.unwrap_or(0.0))
        )
        .unwrap();
    }
    writeln!(w, "}};").unwrap();
    writeln!(w).unwrap();

    let header: Vec<&str> = std::iter::once("time")
        .chain(plan.columns.iter().map(|c| c.name.as_str()))
        .collect();
    writeln!(w, "static const char HEADER[] = \"{}\";", header.join(",")).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "static mrt_instance inst[N_INSTANCES];").unwrap();
    writeln!(w).unwrap();

    // outputs are all sampled before any input is set
    writeln!(w, "static int exchange(void)\n{{").unwrap();
    if !plan.wiring.is_empty() {
        let names: Vec<String> = (0..plan.wiring.len()).map(|i| format!("s{i}")).collect();
        writeln!(w, "    double {};", names.join(", ")).unwrap();
        for (i, wire) in plan.wiring.iter().enumerate() {
            writeln!(
                w,
                "    if (mrt_get_real(&inst[{}], {}, &s{i})) return -1;",
                wire.source.instance, wire.source.value_ref.0
            )
            .unwrap();
        }
        for (i, wire) in plan.wiring.iter().enumerate() {
            writeln!(
                w,
                "    if (mrt_set_real(&inst[{}], {}, s{i})) return -1;",
                wire.target.instance, wire.target.value_ref.0
            )
            .unwrap();
        }
    }
    writeln!(w, "    return 0;\n}}\n").unwrap();

    writeln!(w, "static int record(mrt_writer *w, double t)\n{{").unwrap();
    writeln!(w, "    double row[N_COLUMNS + 1];").unwrap();
    writeln!(w, "    row[0] = t;").unwrap();
    for (i, col) in plan.columns.iter().enumerate() {
        writeln!(
            w,
            "    if (mrt_get_real(&inst[{}], {}, &row[{}])) return -1;",
            col.instance,
            col.value_ref.0,
            i + 1
        )
        .unwrap();
    }
    writeln!(w, "    return mrt_writer_row(w, row, N_COLUMNS + 1);\n}}\n").unwrap();

    writeln!(w, "int main(int argc, char **argv)\n{{").unwrap();
    writeln!(w, "    static mrt_config cfg;").unwrap();
    writeln!(w, "    const char *runtime = NULL;").unwrap();
    writeln!(w, "    unsigned long long k, steps;").unwrap();
    writeln!(w, "    double end;").unwrap();
    writeln!(w, "    mrt_writer w;").unwrap();
    writeln!(w, "    int i;").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "    for (i = 1; i < argc; i++) {{").unwrap();
    writeln!(w, "        if (strcmp(argv[i], \"-runtime\") == 0 && i + 1 < argc) {{").unwrap();
    writeln!(w, "            runtime = argv[++i];").unwrap();
    writeln!(w, "        }} else {{").unwrap();
    writeln!(w, "            runtime = NULL;").unwrap();
    writeln!(w, "            break;").unwrap();
    writeln!(w, "        }}").unwrap();
    writeln!(w, "    }}").unwrap();
    writeln!(w, "    if (!runtime) {{").unwrap();
    writeln!(w, "        fprintf(stderr, \"usage: sim -runtime <file>\\n\");").unwrap();
    writeln!(w, "        return MRT_EXIT_CONFIG;").unwrap();
    writeln!(w, "    }}").unwrap();
    writeln!(w, "    if (mrt_load_config(runtime, &cfg)) {{").unwrap();
    writeln!(w, "        fprintf(stderr, \"sim: configuration error: %s\\n\", mrt_last_error());").unwrap();
    writeln!(w, "        return MRT_EXIT_CONFIG;").unwrap();
    writeln!(w, "    }}").unwrap();
    writeln!(w).unwrap();

    for (i, inst) in plan.instances.iter().enumerate() {
        writeln!(
            w,
            "    if (mrt_instantiate(&inst[{i}], &{}, \"{}\", DEFAULTS_{i})) goto runtime_error;",
            plan.builtin_of(i).c_symbol(),
            inst.name
        )
        .unwrap();
    }
    writeln!(w).unwrap();
    writeln!(w, "    for (i = 0; i < N_PARAMS; i++) {{").unwrap();
    writeln!(w, "        int idx = mrt_config_find(&cfg, PARAMS[i].key);").unwrap();
    writeln!(w, "        double v;").unwrap();
    writeln!(w, "        if (idx >= 0) {{").unwrap();
    writeln!(w, "            v = cfg.params[idx].value;").unwrap();
    writeln!(w, "            cfg.params[idx].used = 1;").unwrap();
    writeln!(w, "        }} else if (PARAMS[i].has_default) {{").unwrap();
    writeln!(w, "            v = PARAMS[i].value;").unwrap();
    writeln!(w, "        }} else {{").unwrap();
    writeln!(w, "            fprintf(stderr, \"sim: configuration error: no value for parameter `%s`\\n\", PARAMS[i].key);").unwrap();
    writeln!(w, "            return MRT_EXIT_CONFIG;").unwrap();
    writeln!(w, "        }}").unwrap();
    writeln!(w, "        if (mrt_set_real(&inst[PARAMS[i].instance], PARAMS[i].vr, v)) goto runtime_error;").unwrap();
    writeln!(w, "    }}").unwrap();
    writeln!(w, "    for (i = 0; i < cfg.n_params; i++) {{").unwrap();
    writeln!(w, "        if (!cfg.params[i].used) {{").unwrap();
    writeln!(w, "            fprintf(stderr, \"sim: configuration error: environment variable `%s` does not name a plan parameter\\n\", cfg.params[i].key);").unwrap();
    writeln!(w, "            return MRT_EXIT_CONFIG;").unwrap();
    writeln!(w, "        }}").unwrap();
    writeln!(w, "    }}").unwrap();
    writeln!(w, "    end = cfg.has_end_time ? cfg.end_time : END_TIME;").unwrap();
    writeln!(w, "    if (end < START_TIME) {{").unwrap();
    writeln!(w, "        fprintf(stderr, \"sim: configuration error: end time is before start time\\n\");").unwrap();
    writeln!(w, "        return MRT_EXIT_CONFIG;").unwrap();
    writeln!(w, "    }}").unwrap();
    writeln!(w).unwrap();
    for i in 0..n_inst {
        writeln!(w, "    if (mrt_initialize(&inst[{i}], START_TIME)) goto runtime_error;").unwrap();
    }
    writeln!(w, "    steps = mrt_step_count(START_TIME, end, STEP_SIZE);").unwrap();
    writeln!(w, "    if (mrt_writer_open(&w, &cfg, HEADER)) goto runtime_error;").unwrap();
    writeln!(w, "    if (exchange() || record(&w, START_TIME)) goto close_error;").unwrap();
    writeln!(w, "    for (k = 1; k <= steps; k++) {{").unwrap();
    writeln!(w, "        double t = START_TIME + (double)(k - 1) * STEP_SIZE;").unwrap();
    writeln!(w, "        if (exchange()) goto close_error;").unwrap();
    for i in 0..n_inst {
        writeln!(w, "        if (mrt_do_step(&inst[{i}], t, STEP_SIZE)) goto close_error;").unwrap();
    }
    writeln!(w, "        if (record(&w, START_TIME + (double)k * STEP_SIZE)) goto close_error;").unwrap();
    writeln!(w, "    }}").unwrap();
    for i in 0..n_inst {
        writeln!(w, "    if (mrt_terminate(&inst[{i}])) goto close_error;").unwrap();
    }
    writeln!(w, "    if (mrt_writer_close(&w)) goto runtime_error;").unwrap();
    writeln!(w, "    return MRT_EXIT_OK;").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "close_error:").unwrap();
    writeln!(w, "    mrt_writer_close(&w);").unwrap();
    writeln!(w, "runtime_error:").unwrap();
    writeln!(w, "    fprintf(stderr, \"sim: %s\\n\", mrt_last_error());").unwrap();
    writeln!(w, "    return MRT_EXIT_RUNTIME;").unwrap();
    writeln!(w, "}}").unwrap();

    debug_assert!(plan
        .columns
        .iter()
        .all(|c| matches!(
            plan.description_of(c.instance).by_ref(c.value_ref).map(|v| v.kind),
            Some(VariableKind::Output | VariableKind::Local)
        )));
    out
}

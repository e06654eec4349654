use std::collections::HashSet;
use std::fs::File;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use super::plan::{PlanError, SimulationPlan};
use super::results::{csv_write, ResultsTable};
use super::runtime::RuntimeConfig;
use super::step_count;
use crate::fmu::{FmuError, Instance};
use crate::multimodel::Wire;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("co-simulation failed: {0}")]
    Model(#[from] FmuError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("native simulator failed ({}): {stderr}", exit_label(*.code))]
    Native { code: Option<i32>, stderr: String },
}

impl RunError {
    /// Whether the failure is a configuration problem rather than a failure
    /// while running.
    pub fn is_config(&self) -> bool {
        match self {
            RunError::Config(_) => true,
            RunError::Plan(PlanError::Io { .. }) => false,
            RunError::Plan(_) => true,
            RunError::Native { code, .. } => *code == Some(1),
            _ => false,
        }
    }
}

fn exit_label(code: Option<i32>) -> String {
    match code {
        Some(c) => format!("exit status {c}"),
        None => "killed by signal".into(),
    }
}

/// Runs the plan in-process and writes the result table to every data writer.
pub fn interpret_plan(plan: &SimulationPlan, rt: &RuntimeConfig) -> Result<ResultsTable, RunError> {
    let table = simulate(plan, rt)?;
    for writer in &rt.data_writers {
        let io_err = |source| RunError::Io {
            path: writer.filename.clone(),
            source,
        };
        let file = File::create(&writer.filename).map_err(io_err)?;
        csv_write(&table, file).map_err(io_err)?;
    }
    Ok(table)
}

/// Resolves every parameter slot to a value: runtime value first, then the
/// slot default.
pub(crate) fn resolve_parameters(
    plan: &SimulationPlan,
    rt: &RuntimeConfig,
) -> Result<Vec<f64>, RunError> {
    let known: HashSet<&str> = plan.parameters.iter().map(|p| p.key.as_str()).collect();
    if let Some(unknown) = rt
        .environment_variables
        .keys()
        .find(|k| !known.contains(k.as_str()))
    {
        return Err(RunError::Config(format!(
            "environment variable `{unknown}` does not name a plan parameter"
        )));
    }
    plan.parameters
        .iter()
        .map(|slot| {
            rt.environment_variables
                .get(&slot.key)
                .copied()
                .or(slot.default)
                .ok_or_else(|| {
                    RunError::Config(format!("no value for parameter `{}`", slot.key))
                })
        })
        .collect()
}

/// Samples every wired output, then sets every wired input.
fn exchange(instances: &mut [Instance], wiring: &[Wire], buf: &mut Vec<f64>) -> Result<(), FmuError> {
    buf.clear();
    for w in wiring {
        buf.push(instances[w.source.instance].get_real(w.source.value_ref)?);
    }
    for (w, v) in wiring.iter().zip(buf.iter()) {
        instances[w.target.instance].set_real(w.target.value_ref, *v)?;
    }
    Ok(())
}

/// Runs the plan in-process without writing anything.
///
/// Instantiate, apply parameters, initialize at `start`, exchange once and
/// record the first row; then for each step exchange, step every instance
/// from `start + (k-1)h` and record the row at `start + kh`.
pub fn simulate(plan: &SimulationPlan, rt: &RuntimeConfig) -> Result<ResultsTable, RunError> {
    plan.validate()?;
    rt.validate()?;
    let values = resolve_parameters(plan, rt)?;
    let start = plan.start_time;
    let end = rt.end_time.unwrap_or(plan.end_time);
    if end < start {
        return Err(RunError::Config(format!(
            "end time {end} is before start time {start}"
        )));
    }
    let h = plan.step_size;

    let mut instances = plan
        .instances
        .iter()
        .enumerate()
        .map(|(i, pi)| {
            let desc = Arc::new(plan.models[&pi.model].clone());
            plan.builtin_of(i).instantiate(desc, &pi.name)
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (slot, v) in plan.parameters.iter().zip(values) {
        instances[slot.instance].set_real(slot.value_ref, v)?;
    }
    for inst in &mut instances {
        inst.initialize(start)?;
    }

    let steps = step_count(start, end, h);
    let columns = plan.columns.iter().map(|c| c.name.clone()).collect();
    let mut table = ResultsTable::with_capacity(columns, steps as usize + 1);
    let mut buf = Vec::with_capacity(plan.wiring.len());
    let record = |table: &mut ResultsTable, instances: &[Instance], t: f64| -> Result<(), FmuError> {
        let mut row = Vec::with_capacity(plan.columns.len());
        for c in &plan.columns {
            row.push(instances[c.instance].get_real(c.value_ref)?);
        }
        table.push_row(t, row);
        Ok(())
    };

    exchange(&mut instances, &plan.wiring, &mut buf)?;
    record(&mut table, &instances, start)?;
    for k in 1..=steps {
        let t = start + (k - 1) as f64 * h;
        exchange(&mut instances, &plan.wiring, &mut buf)?;
        for inst in &mut instances {
            inst.do_step(t, h)?;
        }
        record(&mut table, &instances, start + k as f64 * h)?;
    }
    for inst in &mut instances {
        inst.terminate()?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::build_plan;
    use crate::models::{analytic_trace, ControllerParams, WaterTankParams};
    use crate::multimodel::{validate_multimodel, watertank_demo, Algorithm, CoSimConfig, ModelResolver};

    fn plan(h: f64, end: f64) -> SimulationPlan {
        let mm = validate_multimodel(watertank_demo(), &ModelResolver::builtin_only()).unwrap();
        build_plan(
            &mm,
            &CoSimConfig {
                algorithm: Algorithm::FixedStep { size: h },
                start_time: 0.0,
                end_time: end,
            },
        )
    }

    fn rt() -> RuntimeConfig {
        RuntimeConfig::new("unused.csv")
    }

    #[test]
    fn demo_rows_and_columns() {
        let table = simulate(&plan(0.1, 60.0), &rt()).unwrap();
        assert_eq!(table.len(), 601);
        assert_eq!(table.header(), ["time", "wtInstance.level", "crtlInstance.valve"]);
        assert_eq!(table.rows()[0], [0.0, 1.0, 0.0]);
        assert_eq!(table.rows()[1], [0.1, 1.1, 0.0]);
    }

    #[test]
    fn matches_oracle() {
        let table = simulate(&plan(0.1, 60.0), &rt()).unwrap();
        let trace = analytic_trace(&WaterTankParams::default(), &ControllerParams::default(), 0.1, 60.0);
        assert_eq!(table.len(), trace.len());
        for (row, t) in table.rows().iter().zip(&trace) {
            assert_eq!(row[0].to_bits(), t.time.to_bits());
            assert_eq!(row[1].to_bits(), t.level.to_bits());
            assert_eq!(row[2], t.valve.as_real());
        }
    }

    #[test]
    fn end_equals_start() {
        let table = simulate(&plan(0.1, 0.0), &rt()).unwrap();
        assert_eq!(table.rows(), &[vec![0.0, 1.0, 0.0]]);
    }

    #[test]
    fn end_time_override() {
        let mut rt = rt();
        rt.end_time = Some(5.0);
        assert_eq!(simulate(&plan(0.1, 60.0), &rt).unwrap().len(), 51);
        rt.end_time = Some(-1.0);
        assert!(simulate(&plan(0.1, 60.0), &rt).unwrap_err().is_config());
    }

    #[test]
    fn environment_changes_trace() {
        let p = plan(0.1, 20.0);
        let base = simulate(&p, &rt()).unwrap();
        let mut alt = rt();
        alt.environment_variables.insert("crtlInstance.maxLevel".into(), 3.0);
        alt.environment_variables.insert("crtlInstance.minLevel".into(), 0.5);
        let changed = simulate(&p, &alt).unwrap();
        assert_ne!(base, changed);
        let max = changed.column("wtInstance.level").unwrap().into_iter().fold(0.0, f64::max);
        assert!(max > 2.9);
    }

    #[test]
    fn missing_parameter_named() {
        let mut p = plan(0.1, 1.0);
        p.parameters[0].default = None;
        let err = simulate(&p, &rt()).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("crtlInstance.minLevel"), "{err}");
    }

    #[test]
    fn unknown_environment_key() {
        let mut rt = rt();
        rt.environment_variables.insert("crtlInstance.typo".into(), 1.0);
        let err = simulate(&plan(0.1, 1.0), &rt).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("crtlInstance.typo"));
    }

    #[test]
    fn writes_every_writer_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut rt = RuntimeConfig::new(dir.path().join("a.csv"));
        rt.data_writers.push(super::super::DataWriter::csv(dir.path().join("b.csv")));
        interpret_plan(&plan(0.1, 3.0), &rt).unwrap();
        let a = std::fs::read(dir.path().join("a.csv")).unwrap();
        let b = std::fs::read(dir.path().join("b.csv")).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(b"time,wtInstance.level,crtlInstance.valve\n0.0,1.0,0.0\n"));
    }

    #[test]
    fn writer_failure_is_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let rt = RuntimeConfig::new(dir.path().join("missing-dir").join("a.csv"));
        let err = interpret_plan(&plan(0.1, 1.0), &rt).unwrap_err();
        assert!(matches!(err, RunError::Io { .. }));
        assert!(!err.is_config());
    }

    #[test]
    fn deterministic_bytes() {
        let p = plan(0.1, 30.0);
        let a = simulate(&p, &rt()).unwrap().to_csv().unwrap();
        let b = simulate(&p, &rt()).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_run_stays_synchronized() {
        let table = simulate(&plan(0.1, 10_000.0), &rt()).unwrap();
        assert_eq!(table.len(), 100_001);
    }
}

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use indexmap::IndexMap;

use super::objective::{score, ObjectiveSpec, ScoreContext};
use super::space::{enumerate_designs, DesignPoint, DesignSpace, Engine};
use super::DseError;
use crate::codegen::{compile_project, export_c_project, run_native, ToolchainReport};
use crate::master::resolve_parameters;
use crate::master::{format_real, interpret_plan, DataWriter, ResultsTable, RuntimeConfig, SimulationPlan};

/// How each design is co-simulated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Executor {
    Interpreted,
    /// A simulator already built from the same plan.
    Native { executable: PathBuf },
}

/// One-time code generation and build done for a native DSE.
#[derive(Debug, Clone)]
pub struct BuildInfo {
    pub project: PathBuf,
    pub executable: PathBuf,
    pub generate: Duration,
    pub toolchain: ToolchainReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DesignStatus {
    Ok,
    Failed(String),
}

impl DesignStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, DesignStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub index: usize,
    pub assignment: IndexMap<String, f64>,
    /// One score per objective, in declaration order. Empty on failure.
    pub scores: Vec<f64>,
    pub csv: PathBuf,
    /// Seconds spent simulating and scoring this design.
    pub wall_time: f64,
    pub status: DesignStatus,
}

#[derive(Debug, Clone)]
pub struct DseReport {
    pub keys: Vec<String>,
    pub objectives: Vec<String>,
    /// Sorted by design index.
    pub entries: Vec<DesignResult>,
    /// Design indices, best first.
    pub ranking: Vec<usize>,
    pub total_wall_time: f64,
    pub build: Option<BuildInfo>,
}

impl DseReport {
    pub fn entry(&self, index: usize) -> Option<&DesignResult> {
        self.entries.iter().find(|e| e.index == index)
    }

    pub fn best(&self) -> Option<&DesignResult> {
        self.ranking.first().and_then(|&i| self.entry(i))
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| !e.status.is_ok()).count()
    }

    /// One row per design: index, parameter values, scores, rank (1 is best),
    /// wall time and status.
    pub fn write_csv(&self, path: &Path) -> Result<(), DseError> {
        let io_err = |e: csv::Error| DseError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io_err)?;
        let mut header = vec!["index".to_string()];
        header.extend(self.keys.iter().cloned());
        header.extend(self.objectives.iter().cloned());
        header.extend(["rank", "wall_time_s", "status"].map(String::from));
        w.write_record(&header).map_err(io_err)?;
        let rank: BTreeMap<usize, usize> = self.ranking.iter().enumerate().map(|(r, &i)| (i, r + 1)).collect();
        for e in &self.entries {
            let mut row = vec![e.index.to_string()];
            row.extend(self.keys.iter().map(|k| e.assignment.get(k).map_or(String::new(), |v| format_real(*v))));
            if e.status.is_ok() {
                row.extend(e.scores.iter().map(|s| format_real(*s)));
            } else {
                row.extend(self.objectives.iter().map(|_| String::new()));
            }
            row.push(rank[&e.index].to_string());
            row.push(format!("{:.6}", e.wall_time));
            row.push(match &e.status {
                DesignStatus::Ok => "ok".to_string(),
                DesignStatus::Failed(m) => format!("failed: {m}"),
            });
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|source| DseError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Best first: successful designs before failed ones, then each objective
/// in declaration order per its direction, then ascending design index.
pub fn compare_designs(a: &DesignResult, b: &DesignResult, objectives: &[ObjectiveSpec]) -> Ordering {
    match (a.status.is_ok(), b.status.is_ok()) {
        (true, false) => return Ordering::Less,
        (false, true) => return Ordering::Greater,
        (false, false) => return a.index.cmp(&b.index),
        (true, true) => {}
    }
    for (i, o) in objectives.iter().enumerate() {
        let ord = o.direction.compare(a.scores[i], b.scores[i]);
        if ord != Ordering::Equal {
            return ord;
        }
    }
    a.index.cmp(&b.index)
}

pub fn rank_designs(entries: &[DesignResult], objectives: &[ObjectiveSpec]) -> Vec<usize> {
    let mut order: Vec<&DesignResult> = entries.iter().collect();
    order.sort_by(|a, b| compare_designs(a, b, objectives));
    order.into_iter().map(|e| e.index).collect()
}

/// Everything needed to evaluate designs of one DSE.
pub(crate) struct Evaluator<'a> {
    pub plan: &'a SimulationPlan,
    pub base_rt: &'a RuntimeConfig,
    pub out_dir: PathBuf,
    pub executor: &'a Executor,
    pub objectives: &'a [ObjectiveSpec],
    pool: rayon::ThreadPool,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        space: &'a DesignSpace,
        plan: &'a SimulationPlan,
        base_rt: &'a RuntimeConfig,
        out_dir: &Path,
        executor: &'a Executor,
    ) -> Result<Self, DseError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(space.parallelism)
            .build()
            .map_err(|e| DseError::Runtime(e.to_string()))?;
        Ok(Evaluator {
            plan,
            base_rt,
            out_dir: out_dir.to_path_buf(),
            executor,
            objectives: &space.objectives,
            pool,
        })
    }

    pub fn evaluate_all(&self, points: &[DesignPoint]) -> Vec<DesignResult> {
        use rayon::prelude::*;
        self.pool.install(|| points.par_iter().map(|p| self.evaluate(p)).collect())
    }

    fn evaluate(&self, point: &DesignPoint) -> DesignResult {
        let started = Instant::now();
        let dir = self.out_dir.join(format!("design_{}", point.index));
        let csv = dir.join("results.csv");
        let outcome = self.simulate_and_score(point, &dir, &csv);
        let wall_time = started.elapsed().as_secs_f64();
        let (scores, status) = match outcome {
            Ok(s) => (s, DesignStatus::Ok),
            Err(msg) => {
                log::warn!("design {} failed: {msg}", point.index);
                (Vec::new(), DesignStatus::Failed(msg))
            }
        };
        DesignResult {
            index: point.index,
            assignment: point.assignment.clone(),
            scores,
            csv,
            wall_time,
            status,
        }
    }

    fn simulate_and_score(&self, point: &DesignPoint, dir: &Path, csv: &Path) -> Result<Vec<f64>, String> {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        // Leftovers from an earlier run in the same directory are removed
        // rather than truncated: a failed design must not keep old results,
        // and on ext4 truncating a written file forces a flush on close.
        let rt_path = dir.join("runtime.json");
        for stale in [csv, rt_path.as_path()] {
            match fs::remove_file(stale) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(format!("{}: {e}", stale.display())),
            }
        }
        let mut rt = self.base_rt.clone();
        rt.data_writers = vec![DataWriter::csv(csv)];
        for (k, v) in &point.assignment {
            rt.environment_variables.insert(k.clone(), *v);
        }
        rt.save(&rt_path).map_err(|e| e.to_string())?;
        let table = match self.executor {
            Executor::Interpreted => interpret_plan(self.plan, &rt).map_err(|e| e.to_string())?,
            Executor::Native { executable } => {
                run_native(executable, &rt_path).map_err(|e| e.to_string())?;
                if self.objectives.is_empty() {
                    return Ok(Vec::new());
                }
                ResultsTable::read(csv)?
            }
        };
        let values = resolve_parameters(self.plan, &rt).map_err(|e| e.to_string())?;
        let parameters: BTreeMap<String, f64> = self
            .plan
            .parameters
            .iter()
            .zip(values)
            .map(|(s, v)| (s.key.clone(), v))
            .collect();
        let ctx = ScoreContext {
            csv_path: csv,
            runtime_path: &rt_path,
            parameters: &parameters,
        };
        self.objectives
            .iter()
            .map(|o| score(o, &table, &ctx).map_err(|e| format!("objective `{}`: {e}", o.name)))
            .collect()
    }
}

pub(crate) fn check_keys(space: &DesignSpace, plan: &SimulationPlan) -> Result<(), DseError> {
    for key in space.keys() {
        if !plan.parameters.iter().any(|p| p.key == key) {
            return Err(DseError::Config(format!("`{key}` is not a parameter of the plan")));
        }
    }
    Ok(())
}

pub(crate) fn prepare_dir(out_dir: &Path) -> Result<PathBuf, DseError> {
    fs::create_dir_all(out_dir)
        .and_then(|_| out_dir.canonicalize())
        .map_err(|source| DseError::Io {
            path: out_dir.to_path_buf(),
            source,
        })
}

/// Exports and builds the plan once under `out_dir/native`.
pub fn build_native(plan: &SimulationPlan, out_dir: &Path) -> Result<BuildInfo, DseError> {
    let started = Instant::now();
    let project = export_c_project(plan, &out_dir.join("native"))?;
    let generate = started.elapsed();
    let (executable, toolchain) = compile_project(&project)?;
    Ok(BuildInfo {
        project: project.root,
        executable,
        generate,
        toolchain,
    })
}

pub(crate) fn executor_for(
    engine: Engine,
    plan: &SimulationPlan,
    out_dir: &Path,
) -> Result<(Executor, Option<BuildInfo>), DseError> {
    match engine {
        Engine::Interpreted => Ok((Executor::Interpreted, None)),
        Engine::Native => {
            let build = build_native(plan, out_dir)?;
            Ok((
                Executor::Native {
                    executable: build.executable.clone(),
                },
                Some(build),
            ))
        }
    }
}

pub(crate) fn assemble(
    space: &DesignSpace,
    mut entries: Vec<DesignResult>,
    started: Instant,
    build: Option<BuildInfo>,
) -> DseReport {
    entries.sort_by_key(|e| e.index);
    let ranking = rank_designs(&entries, &space.objectives);
    DseReport {
        keys: space.keys().map(str::to_string).collect(),
        objectives: space.objectives.iter().map(|o| o.name.clone()).collect(),
        entries,
        ranking,
        total_wall_time: started.elapsed().as_secs_f64(),
        build,
    }
}

/// Exhaustive exploration with the engine named in `space`. For the native
/// engine the plan is exported and compiled once under `out_dir/native`.
pub fn run_dse(
    space: &DesignSpace,
    plan: &SimulationPlan,
    base_rt: &RuntimeConfig,
    out_dir: &Path,
) -> Result<DseReport, DseError> {
    let started = Instant::now();
    space.validate()?;
    check_keys(space, plan)?;
    let designs = enumerate_designs(space)?;
    let out_dir = prepare_dir(out_dir)?;
    let (executor, build) = executor_for(space.engine, plan, &out_dir)?;
    let mut report = run_designs(space, &designs, plan, base_rt, &out_dir, &executor)?;
    report.build = build;
    report.total_wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Evaluates the given designs with an explicit executor.
pub fn run_designs(
    space: &DesignSpace,
    designs: &[DesignPoint],
    plan: &SimulationPlan,
    base_rt: &RuntimeConfig,
    out_dir: &Path,
    executor: &Executor,
) -> Result<DseReport, DseError> {
    let started = Instant::now();
    check_keys(space, plan)?;
    let out_dir = prepare_dir(out_dir)?;
    let eval = Evaluator::new(space, plan, base_rt, &out_dir, executor)?;
    let entries = eval.evaluate_all(designs);
    Ok(assemble(space, entries, started, None))
}

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Deserialize;

use crate::master::ResultsTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// Orders `a` before `b` when `a` is the better score.
    pub fn compare(self, a: f64, b: f64) -> Ordering {
        match self {
            Direction::Minimize => a.total_cmp(&b),
            Direction::Maximize => b.total_cmp(&a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Mean absolute distance of the tank level from the middle of the
    /// controller band.
    BandDeviation,
    /// Number of times the valve changes state.
    ValveSwitchCount,
    /// Program called as `path <results.csv> <runtime.json>` that prints one
    /// number on stdout.
    External(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub name: String,
    pub kind: ObjectiveKind,
    pub direction: Direction,
}

/// What an objective may look at besides the result table.
#[derive(Debug, Clone)]
pub struct ScoreContext<'a> {
    pub csv_path: &'a Path,
    pub runtime_path: &'a Path,
    /// Effective value of every plan parameter for this design.
    pub parameters: &'a BTreeMap<String, f64>,
}

fn parameter_by_variable(params: &BTreeMap<String, f64>, variable: &str) -> Result<f64, String> {
    params
        .iter()
        .find(|(k, _)| k.rsplit_once('.').map(|(_, v)| v) == Some(variable))
        .map(|(_, v)| *v)
        .ok_or_else(|| format!("no `{variable}` parameter in the plan"))
}

fn signal(table: &ResultsTable, variable: &str) -> Result<Vec<f64>, String> {
    table
        .column_by_variable(variable)
        .map(|(_, v)| v)
        .ok_or_else(|| format!("no `{variable}` column in the results"))
}

pub fn band_deviation(table: &ResultsTable, l_min: f64, l_max: f64) -> Result<f64, String> {
    let level = signal(table, "level")?;
    let mid = (l_min + l_max) / 2.0;
    Ok(level.iter().map(|l| (l - mid).abs()).sum::<f64>() / level.len() as f64)
}

pub fn valve_switch_count(table: &ResultsTable) -> Result<f64, String> {
    let valve = signal(table, "valve")?;
    Ok(valve.windows(2).filter(|w| w[0] != w[1]).count() as f64)
}

pub fn run_external(program: &Path, csv: &Path, runtime: &Path) -> Result<f64, String> {
    let out = Command::new(program)
        .arg(csv)
        .arg(runtime)
        .output()
        .map_err(|e| format!("cannot run {}: {e}", program.display()))?;
    if !out.status.success() {
        let stderr = String::from_utf8_lossy(&out.stderr);
        return Err(format!("{} failed ({}): {}", program.display(), out.status, stderr.trim()));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    match text.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{} printed `{}`, expected one number", program.display(), text.trim())),
    }
}

/// Scores one design's results.
pub fn score(objective: &ObjectiveSpec, table: &ResultsTable, ctx: &ScoreContext) -> Result<f64, String> {
    if table.is_empty() {
        return Err("empty result table".into());
    }
    match &objective.kind {
        ObjectiveKind::BandDeviation => {
            let lo = parameter_by_variable(ctx.parameters, "minLevel")?;
            let hi = parameter_by_variable(ctx.parameters, "maxLevel")?;
            band_deviation(table, lo, hi)
        }
        ObjectiveKind::ValveSwitchCount => valve_switch_count(table),
        ObjectiveKind::External(p) => run_external(p, ctx.csv_path, ctx.runtime_path),
    }
}

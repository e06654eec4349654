//! Acceptance run: one PASS/FAIL line per criterion, each held to its time
//! budget. Fails if any criterion fails.

use std::fmt::Write as _;
use std::fs;
use std::time::{Duration, Instant};

use maestrino::dse::{
    genetic_search, run_dse, DesignSpace, Direction, DseReport, GeneticOptions, ObjectiveKind, ObjectiveSpec,
    ParameterSweep,
};
use maestrino::master::{build_plan, format_real, interpret_plan, RuntimeConfig, SimulationPlan};
use maestrino::models::{analytic_trace, ControllerParams, WaterTankParams};
use maestrino::multimodel::{validate_multimodel, watertank_demo, Algorithm, CoSimConfig, ModelResolver};

const MIN: &str = "crtlInstance.minLevel";
const MAX: &str = "crtlInstance.maxLevel";

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

fn run_demo(dir: &std::path::Path, h: f64, end: f64) -> Result<String, String> {
    let out = dir.join("results.csv");
    let mut rt = RuntimeConfig::new(&out);
    rt.environment_variables.insert(MIN.into(), 1.0);
    rt.environment_variables.insert(MAX.into(), 2.0);
    interpret_plan(&plan(h, end), &rt).map_err(|e| e.to_string())?;
    fs::read_to_string(&out).map_err(|e| e.to_string())
}

fn columns(csv: &str, col: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

fn oracle_equivalence() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = run_demo(dir.path(), 0.1, 60.0)?;
    let ctrl = ControllerParams {
        min_level: 1.0,
        max_level: 2.0,
    };
    let trace = analytic_trace(&WaterTankParams::default(), &ctrl, 0.1, 60.0);
    let mut expected = String::from("time,wtInstance.level,crtlInstance.valve\n");
    for r in &trace {
        writeln!(expected, "{},{},{}", format_real(r.time), format_real(r.level), format_real(r.valve.as_real())).unwrap();
    }
    if csv != expected {
        return Err("interpreter CSV differs from the analytic trace".into());
    }
    let level = columns(&csv, 1);
    let first = level.iter().position(|l| *l >= 2.0).ok_or("level never reaches l_max")?;
    if let Some(bad) = level[first..].iter().find(|l| !(0.8..=2.1).contains(*l)) {
        return Err(format!("level {bad} outside [0.8, 2.1] after the first l_max crossing"));
    }
    Ok(())
}

fn oscillation() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = run_demo(dir.path(), 0.1, 60.0)?;
    let level = columns(&csv, 1);
    let valve = columns(&csv, 2);
    let (mut above, mut below) = (0, 0);
    for w in level.windows(2) {
        if w[0] < 2.0 && w[1] >= 2.0 {
            above += 1;
        }
        if w[0] > 1.0 && w[1] <= 1.0 {
            below += 1;
        }
    }
    if above < 5 || below < 5 {
        return Err(format!("{above} crossings of l_max and {below} of l_min, need 5 each"));
    }
    if valve.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err("valve column is not 0/1".into());
    }
    let switches = valve.windows(2).filter(|w| w[0] != w[1]).count();
    if switches < 10 {
        return Err(format!("valve switched only {switches} times"));
    }
    // between switches the level moves monotonically
    for (seg_valve, seg) in segments(&valve, &level) {
        let rising = seg.windows(2).all(|w| w[1] >= w[0]);
        let falling = seg.windows(2).all(|w| w[1] <= w[0]);
        if (seg_valve == 0.0 && !rising) || (seg_valve == 1.0 && !falling) {
            return Err("level is not monotone between valve switches".into());
        }
    }
    Ok(())
}

/// Level samples grouped by the valve state that drove them. The tank sees
/// the valve one step late, so row k+1 reflects the valve at row k.
fn segments(valve: &[f64], level: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for k in 0..level.len() - 1 {
        match out.last_mut() {
            Some((v, seg)) if *v == valve[k] => seg.push(level[k + 1]),
            _ => out.push((valve[k], vec![level[k], level[k + 1]])),
        }
    }
    out
}

fn fixture() -> DesignSpace {
    let mut s = DesignSpace::new(vec![
        ParameterSweep::list(MIN, vec![0.5, 1.0, 1.5]),
        ParameterSweep::list(MAX, vec![1.0, 2.0]),
    ]);
    s.constraints.push(format!("{MIN} < {MAX}").parse().unwrap());
    s.objectives = vec![
        ObjectiveSpec {
            name: "band_deviation".into(),
            kind: ObjectiveKind::BandDeviation,
            direction: Direction::Minimize,
        },
        ObjectiveSpec {
            name: "switches".into(),
            kind: ObjectiveKind::ValveSwitchCount,
            direction: Direction::Maximize,
        },
    ];
    s.seed = 11;
    s
}

fn exhaustive(parallelism: usize) -> Result<DseReport, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut s = fixture();
    s.parallelism = parallelism;
    let report = run_dse(&s, &plan(0.1, 60.0), &RuntimeConfig::new("r.csv"), dir.path()).map_err(|e| e.to_string())?;
    let csvs = report.entries.iter().filter(|e| e.csv.is_file()).count();
    if report.entries.len() != 4 || csvs != 4 || report.failures() != 0 {
        return Err(format!(
            "{} designs, {csvs} result CSVs, {} failures",
            report.entries.len(),
            report.failures()
        ));
    }
    Ok(report)
}

fn dse_fixture() -> Result<(), String> {
    let reference = exhaustive(1)?;
    for p in [4, 1, 4, 1, 4] {
        let r = exhaustive(p)?;
        if r.ranking != reference.ranking {
            return Err(format!("ranking {:?} with parallelism {p}, expected {:?}", r.ranking, reference.ranking));
        }
    }
    Ok(())
}

fn genetic_matches_exhaustive() -> Result<(), String> {
    let best = exhaustive(1)?.ranking[0];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = GeneticOptions {
        population: 4,
        generations: 3,
    };
    let report = genetic_search(&fixture(), &plan(0.1, 60.0), &RuntimeConfig::new("r.csv"), dir.path(), opts)
        .map_err(|e| e.to_string())?;
    match report.ranking.first() {
        Some(&g) if g == best => Ok(()),
        other => Err(format!("genetic best {other:?}, exhaustive best {best}")),
    }
}

fn step_count_law() -> Result<(), String> {
    let mut checks = 0;
    for h in [0.01, 0.1, 0.5] {
        for end in [1.0, 10.0, 100.0, 1000.0] {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let csv = run_demo(dir.path(), h, end)?;
            let rows = csv.lines().count() - 1;
            let expected = (end / h).round() as usize + 1;
            if rows != expected {
                return Err(format!("h={h} end={end}: {rows} rows, expected {expected}"));
            }
            checks += 1;
        }
    }
    if checks != 12 {
        return Err(format!("ran {checks} checks"));
    }
    Ok(())
}

type Check = fn() -> Result<(), String>;

#[test]
fn acceptance() {
    let criteria: [(&str, Duration, Check); 5] = [
        ("oracle equivalence", Duration::from_secs(1), oracle_equivalence),
        ("level and valve oscillation", Duration::from_secs(1), oscillation),
        ("exhaustive DSE fixture", Duration::from_secs(5), dse_fixture),
        ("genetic equals exhaustive", Duration::from_secs(5), genetic_matches_exhaustive),
        ("step-count law", Duration::from_secs(10), step_count_law),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let started = Instant::now();
        let result = check();
        let took = started.elapsed();
        let verdict = match result {
            Ok(()) if took <= budget => "PASS".to_string(),
            Ok(()) => format!("FAIL (over the {budget:?} budget)"),
            Err(e) => format!("FAIL ({e})"),
        };
        if !verdict.starts_with("PASS") {
            failed += 1;
        }
        println!("{verdict}: {name} [{:.3}s]", took.as_secs_f64());
    }
    assert_eq!(failed, 0, "{failed} criteria failed");
}

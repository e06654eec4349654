use std::fs;
use std::path::Path;

use maestrino::codegen::Toolchain;
use maestrino::dse::{
    enumerate_designs, run_dse, DesignSpace, DesignStatus, Direction, DseReport, Engine, ObjectiveKind, ObjectiveSpec,
    ParameterSweep,
};
use maestrino::master::{build_plan, RuntimeConfig, SimulationPlan};
use maestrino::multimodel::{validate_multimodel, watertank_demo, Algorithm, CoSimConfig, ModelResolver};

const MIN: &str = "crtlInstance.minLevel";
const MAX: &str = "crtlInstance.maxLevel";

fn plan(end: f64) -> SimulationPlan {
    let mm = validate_multimodel(watertank_demo(), &ModelResolver::builtin_only()).unwrap();
    build_plan(
        &mm,
        &CoSimConfig {
            algorithm: Algorithm::FixedStep { size: 0.1 },
            start_time: 0.0,
            end_time: end,
        },
    )
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
    s
}

fn csvs(report: &DseReport) -> Vec<Vec<u8>> {
    report.entries.iter().map(|e| fs::read(&e.csv).unwrap()).collect()
}

#[test]
fn fixture_runs_four_designs() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_dse(&fixture(), &plan(60.0), &RuntimeConfig::new("x.csv"), dir.path()).unwrap();
    assert_eq!(report.entries.len(), 4);
    assert_eq!(report.ranking.len(), 4);
    assert_eq!(report.failures(), 0);
    for e in &report.entries {
        let d = dir.path().join(format!("design_{}", e.index));
        assert!(d.join("results.csv").is_file());
        let rt = RuntimeConfig::load(&d.join("runtime.json")).unwrap();
        assert_eq!(rt.environment_variables[MIN], e.assignment[MIN]);
        assert_eq!(rt.environment_variables[MAX], e.assignment[MAX]);
    }
    report.write_csv(&dir.path().join("report.csv")).unwrap();
    let text = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        format!("index,{MIN},{MAX},band_deviation,switches,rank,wall_time_s,status")
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn parallelism_does_not_change_results() {
    let base = RuntimeConfig::new("x.csv");
    let mut reports = Vec::new();
    let dirs: Vec<_> = (0..4).map(|_| tempfile::tempdir().unwrap()).collect();
    for (i, p) in [1, 4, 4, 1].into_iter().enumerate() {
        let mut s = fixture();
        s.parallelism = p;
        reports.push(run_dse(&s, &plan(60.0), &base, dirs[i].path()).unwrap());
    }
    for r in &reports[1..] {
        assert_eq!(r.ranking, reports[0].ranking);
        assert_eq!(csvs(r), csvs(&reports[0]));
    }
}

#[test]
fn base_runtime_values_are_kept() {
    let mut base = RuntimeConfig::new("x.csv");
    base.environment_variables.insert("wtInstance.inflowRate".into(), 1.5);
    base.end_time = Some(10.0);
    let dir = tempfile::tempdir().unwrap();
    let report = run_dse(&fixture(), &plan(60.0), &base, dir.path()).unwrap();
    let e = &report.entries[0];
    let text = fs::read_to_string(&e.csv).unwrap();
    assert_eq!(text.lines().count(), 102);
    let rt = RuntimeConfig::load(&e.csv.with_file_name("runtime.json")).unwrap();
    assert_eq!(rt.environment_variables["wtInstance.inflowRate"], 1.5);
}

#[test]
fn failed_design_does_not_abort() {
    // an unknown key in the base runtime makes every co-simulation fail
    let mut s = DesignSpace::new(vec![ParameterSweep::list("wtInstance.outflowRate", vec![2.0, 3.0])]);
    s.objectives.push(ObjectiveSpec {
        name: "switches".into(),
        kind: ObjectiveKind::ValveSwitchCount,
        direction: Direction::Minimize,
    });
    let mut base = RuntimeConfig::new("x.csv");
    base.environment_variables.insert("bogus.key".into(), 1.0);
    let dir = tempfile::tempdir().unwrap();
    let report = run_dse(&s, &plan(5.0), &base, dir.path()).unwrap();
    assert_eq!(report.entries.len(), 2);
    assert_eq!(report.failures(), 2);
    assert!(matches!(&report.entries[0].status, DesignStatus::Failed(m) if m.contains("bogus.key")));
}

#[cfg(unix)]
#[test]
fn one_failing_objective_is_recorded() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("score.sh");
    fs::write(
        &script,
        "#!/bin/sh\ncase \"$1\" in *design_3/*) echo broken >&2; exit 1;; esac\nwc -l < \"$1\"\n",
    )
    .unwrap();
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    let mut s = fixture();
    s.objectives = vec![ObjectiveSpec {
        name: "lines".into(),
        kind: ObjectiveKind::External(script),
        direction: Direction::Minimize,
    }];
    let report = run_dse(&s, &plan(6.0), &RuntimeConfig::new("x.csv"), &dir.path().join("out")).unwrap();
    assert_eq!(report.failures(), 1);
    assert_eq!(*report.ranking.last().unwrap(), 3);
    let ok = report.entry(0).unwrap();
    assert_eq!(ok.scores, [62.0]);
    report.write_csv(&dir.path().join("report.csv")).unwrap();
    let text = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(text.contains("failed: objective `lines`"), "{text}");
}

#[test]
fn sweep_keys_must_be_plan_parameters() {
    let s = DesignSpace::new(vec![ParameterSweep::list("crtlInstance.level", vec![1.0])]);
    let dir = tempfile::tempdir().unwrap();
    let err = run_dse(&s, &plan(1.0), &RuntimeConfig::new("x.csv"), dir.path()).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains("crtlInstance.level"));
}

#[test]
fn empty_space_is_an_error() {
    let mut s = fixture();
    s.constraints.push("1 < 0".parse().unwrap());
    assert!(enumerate_designs(&s).is_err());
    let dir = tempfile::tempdir().unwrap();
    let err = run_dse(&s, &plan(1.0), &RuntimeConfig::new("x.csv"), dir.path()).unwrap_err();
    assert!(err.is_config(), "{err}");
}

fn have_toolchain() -> bool {
    Toolchain::discover().map_err(|e| eprintln!("skipping: {e}")).is_ok()
}

#[test]
fn native_engine_matches_interpreted() {
    if !have_toolchain() {
        return;
    }
    let base = RuntimeConfig::new("x.csv");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let interp = run_dse(&fixture(), &plan(60.0), &base, a.path()).unwrap();
    let mut s = fixture();
    s.engine = Engine::Native;
    s.parallelism = 2;
    let native = run_dse(&s, &plan(60.0), &base, b.path()).unwrap();
    assert!(interp.build.is_none());
    let build = native.build.as_ref().unwrap();
    assert!(build.toolchain.compile.is_some());
    assert!(Path::new(&build.executable).is_file());
    assert_eq!(native.ranking, interp.ranking);
    assert_eq!(csvs(&native), csvs(&interp));
}

#[test]
fn rerun_clears_stale_results() {
    let dir = tempfile::tempdir().unwrap();
    let s = DesignSpace::new(vec![ParameterSweep::list("wtInstance.outflowRate", vec![2.0])]);
    let ok = run_dse(&s, &plan(1.0), &RuntimeConfig::new("x.csv"), dir.path()).unwrap();
    assert!(ok.entries[0].csv.is_file());
    let mut base = RuntimeConfig::new("x.csv");
    base.environment_variables.insert("bogus.key".into(), 1.0);
    let failed = run_dse(&s, &plan(1.0), &base, dir.path()).unwrap();
    assert_eq!(failed.failures(), 1);
    assert!(!failed.entries[0].csv.exists());
}

//! Shared setup for the engine benchmarks.

use maestrino::dse::{DesignSpace, Direction, ObjectiveKind, ObjectiveSpec, ParameterSweep};
use maestrino::master::{build_plan, SimulationPlan};
use maestrino::multimodel::{validate_multimodel, watertank_demo, Algorithm, CoSimConfig, ModelResolver};

pub fn demo_plan(h: f64, end: f64) -> SimulationPlan {
    let mm = validate_multimodel(watertank_demo(), &ModelResolver::builtin_only()).expect("demo validates");
    build_plan(
        &mm,
        &CoSimConfig {
            algorithm: Algorithm::FixedStep { size: h },
            start_time: 0.0,
            end_time: end,
        },
    )
}

/// The 3x2 level-threshold sweep, four designs after the ordering constraint.
pub fn threshold_space() -> DesignSpace {
    let min = "crtlInstance.minLevel";
    let max = "crtlInstance.maxLevel";
    let mut s = DesignSpace::new(vec![
        ParameterSweep::list(min, vec![0.5, 1.0, 1.5]),
        ParameterSweep::list(max, vec![1.0, 2.0]),
    ]);
    s.constraints.push(format!("{min} < {max}").parse().expect("constraint parses"));
    s.objectives.push(ObjectiveSpec {
        name: "band_deviation".into(),
        kind: ObjectiveKind::BandDeviation,
        direction: Direction::Minimize,
    });
    s
}

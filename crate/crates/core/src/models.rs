//! Single-tank water tank and its two-level controller.
//!
//! Tank dynamics are `d(level)/dt = inflow - open * outflow`, integrated with
//! explicit Euler at the co-simulation step and clamped at an empty tank. The
//! controller is a hysteresis switch: open at or above `max_level`, closed at
//! or below `min_level`, otherwise unchanged.
//!
//! The arithmetic here is mirrored operation-for-operation by the C models in
//! `native/maestrino_models.c`; keep both in sync.

use std::fmt;
use std::sync::Arc;

use crate::fmu::{
    FmuError, Instance, ModelBehavior, ModelDescription, ScalarVariable, Value, ValueReference,
    ValueType, VariableKind,
};
use crate::master::step_count;

pub const WATERTANK_MODEL: &str = "singlewatertank-20sim";
pub const CONTROLLER_MODEL: &str = "watertankcontroller-c";

/// Value references of the water tank description.
pub mod tank_vr {
    use crate::fmu::ValueReference;
    pub const LEVEL: ValueReference = ValueReference(0);
    pub const VALVE: ValueReference = ValueReference(1);
    pub const INFLOW_RATE: ValueReference = ValueReference(2);
    pub const OUTFLOW_RATE: ValueReference = ValueReference(3);
    pub const INITIAL_LEVEL: ValueReference = ValueReference(4);
}

/// Value references of the controller description.
pub mod controller_vr {
    use crate::fmu::ValueReference;
    pub const LEVEL: ValueReference = ValueReference(0);
    pub const VALVE: ValueReference = ValueReference(1);
    pub const MIN_LEVEL: ValueReference = ValueReference(2);
    pub const MAX_LEVEL: ValueReference = ValueReference(3);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValveState {
    Closed,
    Open,
}

impl ValveState {
    pub fn from_real(v: f64) -> Self {
        if v != 0.0 {
            ValveState::Open
        } else {
            ValveState::Closed
        }
    }

    pub fn as_real(self) -> f64 {
        match self {
            ValveState::Closed => 0.0,
            ValveState::Open => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterTankParams {
    pub inflow_rate: f64,
    pub outflow_rate: f64,
    pub initial_level: f64,
}

impl Default for WaterTankParams {
    fn default() -> Self {
        WaterTankParams {
            inflow_rate: 1.0,
            outflow_rate: 2.0,
            initial_level: 1.0,
        }
    }
}

impl WaterTankParams {
    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(inflow_rate: f64, outflow_rate: f64, initial_level: f64) -> Result<Self, ParamError> {
        if !(inflow_rate > 0.0) {
            return Err(ParamError(format!("inflow rate must be positive, got {inflow_rate}")));
        }
        if !(outflow_rate > inflow_rate) {
            return Err(ParamError(format!(
                "outflow rate {outflow_rate} must exceed inflow rate {inflow_rate}"
            )));
        }
        if !(initial_level >= 0.0) {
            return Err(ParamError(format!("initial level must be >= 0, got {initial_level}")));
        }
        Ok(WaterTankParams {
            inflow_rate,
            outflow_rate,
            initial_level,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub min_level: f64,
    pub max_level: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            min_level: 1.0,
            max_level: 2.0,
        }
    }
}

impl ControllerParams {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(min_level: f64, max_level: f64) -> Result<Self, ParamError> {
        if !(min_level < max_level) {
            return Err(ParamError(format!(
                "minimum level {min_level} must be strictly below maximum {max_level}"
            )));
        }
        Ok(ControllerParams {
            min_level,
            max_level,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ParamError(pub String);

/// One explicit-Euler step of the tank level.
pub fn watertank_step(level: f64, valve: ValveState, params: &WaterTankParams, h: f64) -> f64 {
    debug_assert!(h > 0.0);
    let open = valve.as_real();
    let next = level + h * (params.inflow_rate - open * params.outflow_rate);
    if next < 0.0 {
        0.0
    } else {
        next
    }
}

pub fn controller_step(level: f64, prev_valve: ValveState, params: &ControllerParams) -> ValveState {
    if level >= params.max_level {
        ValveState::Open
    } else if level <= params.min_level {
        ValveState::Closed
    } else {
        prev_valve
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub level: f64,
    pub valve: ValveState,
}

/// Replays the coupled tank/controller recurrence starting at `t = 0` with
/// the valve closed.
///
/// Each step uses the values from the previous row for both models (Jacobi
/// exchange), so the controller reacts to the level one step late and the
/// tank reacts to the valve one step late.
pub fn analytic_trace(
    tank: &WaterTankParams,
    ctrl: &ControllerParams,
    h: f64,
    end: f64,
) -> Vec<TraceRow> {
    let steps = step_count(0.0, end, h);
    let mut rows = Vec::with_capacity(steps as usize + 1);
    let mut level = tank.initial_level;
    let mut valve = ValveState::Closed;
    rows.push(TraceRow {
        time: 0.0,
        level,
        valve,
    });
    for k in 1..=steps {
        let next_level = watertank_step(level, valve, tank, h);
        let next_valve = controller_step(level, valve, ctrl);
        level = next_level;
        valve = next_valve;
        rows.push(TraceRow {
            time: 0.0 + k as f64 * h,
            level,
            valve,
        });
    }
    rows
}

fn var(
    name: &str,
    kind: VariableKind,
    value_type: ValueType,
    vr: ValueReference,
    default: Option<Value>,
) -> ScalarVariable {
    ScalarVariable {
        name: name.to_string(),
        kind,
        value_type,
        value_ref: vr,
        default,
    }
}

pub fn build_watertank_description() -> ModelDescription {
    use ValueType::*;
    use VariableKind::*;
    let d = WaterTankParams::default();
    ModelDescription {
        model_name: WATERTANK_MODEL.to_string(),
        variables: vec![
            var("level", Output, Real, tank_vr::LEVEL, Some(Value::Real(d.initial_level))),
            var("valve", Input, Boolean, tank_vr::VALVE, Some(Value::Boolean(false))),
            var("inflowRate", Parameter, Real, tank_vr::INFLOW_RATE, Some(Value::Real(d.inflow_rate))),
            var("outflowRate", Parameter, Real, tank_vr::OUTFLOW_RATE, Some(Value::Real(d.outflow_rate))),
            var("initialLevel", Parameter, Real, tank_vr::INITIAL_LEVEL, Some(Value::Real(d.initial_level))),
        ],
    }
}

pub fn build_controller_description() -> ModelDescription {
    use ValueType::*;
    use VariableKind::*;
    let d = ControllerParams::default();
    ModelDescription {
        model_name: CONTROLLER_MODEL.to_string(),
        variables: vec![
            var("level", Input, Real, controller_vr::LEVEL, Some(Value::Real(0.0))),
            var("valve", Output, Boolean, controller_vr::VALVE, Some(Value::Boolean(false))),
            var("minLevel", Parameter, Real, controller_vr::MIN_LEVEL, Some(Value::Real(d.min_level))),
            var("maxLevel", Parameter, Real, controller_vr::MAX_LEVEL, Some(Value::Real(d.max_level))),
        ],
    }
}

struct WaterTank;

impl ModelBehavior for WaterTank {
    fn initialize(&mut self, values: &mut [f64]) {
        values[tank_vr::LEVEL.index()] = values[tank_vr::INITIAL_LEVEL.index()];
    }

    fn step(&mut self, values: &mut [f64], h: f64) {
        let params = WaterTankParams {
            inflow_rate: values[tank_vr::INFLOW_RATE.index()],
            outflow_rate: values[tank_vr::OUTFLOW_RATE.index()],
            initial_level: values[tank_vr::INITIAL_LEVEL.index()],
        };
        let valve = ValveState::from_real(values[tank_vr::VALVE.index()]);
        let level = values[tank_vr::LEVEL.index()];
        values[tank_vr::LEVEL.index()] = watertank_step(level, valve, &params, h);
    }
}

struct Controller;

impl ModelBehavior for Controller {
    fn step(&mut self, values: &mut [f64], _h: f64) {
        let params = ControllerParams {
            min_level: values[controller_vr::MIN_LEVEL.index()],
            max_level: values[controller_vr::MAX_LEVEL.index()],
        };
        let prev = ValveState::from_real(values[controller_vr::VALVE.index()]);
        let level = values[controller_vr::LEVEL.index()];
        values[controller_vr::VALVE.index()] = controller_step(level, prev, &params).as_real();
    }
}

/// Models with a built-in implementation, in Rust and in the C runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    WaterTank,
    Controller,
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.model_name())
    }
}

impl Builtin {
    pub const ALL: [Builtin; 2] = [Builtin::WaterTank, Builtin::Controller];

    pub fn from_model_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.model_name() == name)
    }

    pub fn model_name(self) -> &'static str {
        match self {
            Builtin::WaterTank => WATERTANK_MODEL,
            Builtin::Controller => CONTROLLER_MODEL,
        }
    }

    pub fn description(self) -> ModelDescription {
        match self {
            Builtin::WaterTank => build_watertank_description(),
            Builtin::Controller => build_controller_description(),
        }
    }

    /// Name of the model table exported by the C runtime.
    pub fn c_symbol(self) -> &'static str {
        match self {
            Builtin::WaterTank => "MRT_MODEL_WATERTANK",
            Builtin::Controller => "MRT_MODEL_CONTROLLER",
        }
    }

    /// Checks that `desc` can be driven by this implementation: same variable
    /// layout as the built-in description. Defaults may differ.
    pub fn check_compatible(self, desc: &ModelDescription) -> Result<(), String> {
        let reference = self.description();
        let layout = |d: &ModelDescription| {
            d.by_ref_order()
                .into_iter()
                .map(|v| (v.name.clone(), v.kind, v.value_type, v.value_ref))
                .collect::<Vec<_>>()
        };
        if layout(&reference) != layout(desc) {
            return Err(format!(
                "description `{}` does not match the variable layout of the built-in implementation",
                desc.model_name
            ));
        }
        Ok(())
    }

    pub fn behavior(self) -> Box<dyn ModelBehavior> {
        match self {
            Builtin::WaterTank => Box::new(WaterTank),
            Builtin::Controller => Box::new(Controller),
        }
    }

    pub fn instantiate(
        self,
        desc: Arc<ModelDescription>,
        instance_name: &str,
    ) -> Result<Instance, FmuError> {
        Instance::instantiate(desc, instance_name, self.behavior())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT_TANK: WaterTankParams = WaterTankParams {
        inflow_rate: 1.0,
        outflow_rate: 2.0,
        initial_level: 1.0,
    };

    #[test]
    fn tank_step_examples() {
        assert_eq!(watertank_step(1.0, ValveState::Closed, &DEFAULT_TANK, 0.1), 1.1);
        assert_eq!(watertank_step(2.0, ValveState::Open, &DEFAULT_TANK, 0.1), 1.9);
        assert_eq!(watertank_step(0.0, ValveState::Open, &DEFAULT_TANK, 0.1), 0.0);
    }

    #[test]
    fn controller_examples() {
        let p = ControllerParams::new(1.0, 2.0).unwrap();
        assert_eq!(controller_step(2.5, ValveState::Closed, &p), ValveState::Open);
        assert_eq!(controller_step(0.5, ValveState::Open, &p), ValveState::Closed);
        assert_eq!(controller_step(1.5, ValveState::Open, &p), ValveState::Open);
        assert_eq!(controller_step(1.5, ValveState::Closed, &p), ValveState::Closed);
        // thresholds are inclusive
        assert_eq!(controller_step(2.0, ValveState::Closed, &p), ValveState::Open);
        assert_eq!(controller_step(1.0, ValveState::Open, &p), ValveState::Closed);
    }

    #[test]
    fn param_invariants() {
        assert!(ControllerParams::new(2.0, 1.0).is_err());
        assert!(ControllerParams::new(1.0, 1.0).is_err());
        assert!(WaterTankParams::new(2.0, 1.0, 0.0).is_err());
        assert!(WaterTankParams::new(1.0, 2.0, -1.0).is_err());
        assert_eq!(WaterTankParams::new(1.0, 2.0, 1.0).unwrap(), DEFAULT_TANK);
    }

    #[test]
    fn empty_trace() {
        let rows = analytic_trace(&DEFAULT_TANK, &ControllerParams::default(), 0.1, 0.0);
        assert_eq!(
            rows,
            vec![TraceRow {
                time: 0.0,
                level: 1.0,
                valve: ValveState::Closed
            }]
        );
    }

    #[test]
    fn default_trace_band() {
        let rows = analytic_trace(&DEFAULT_TANK, &ControllerParams::default(), 0.1, 60.0);
        assert_eq!(rows.len(), 601);
        let min = rows.iter().map(|r| r.level).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|r| r.level).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min, 0.9);
        // 2.1 plus accumulated rounding from repeated +0.1
        assert_eq!(max, 2.100000000000001);
    }

    #[test]
    fn default_trace_switches() {
        // Independent replay: a plain state machine over the same recurrence,
        // written without the shared step functions.
        let (mut level, mut open) = (1.0f64, false);
        let mut switches = 0;
        for _ in 0..600 {
            let next = level + 0.1 * (1.0 - if open { 2.0 } else { 0.0 });
            let next_open = if level >= 2.0 {
                true
            } else if level <= 1.0 {
                false
            } else {
                open
            };
            switches += usize::from(next_open != open);
            level = next.max(0.0);
            open = next_open;
        }
        let rows = analytic_trace(&DEFAULT_TANK, &ControllerParams::default(), 0.1, 60.0);
        let counted = rows.windows(2).filter(|w| w[0].valve != w[1].valve).count();
        assert_eq!(counted, switches);
        assert_eq!(counted, 50);
    }

    #[test]
    fn descriptions_validate() {
        let tank = build_watertank_description();
        let ctrl = build_controller_description();
        tank.validate().unwrap();
        ctrl.validate().unwrap();
        assert_eq!(tank.variable("level").unwrap().kind, VariableKind::Output);
        assert_eq!(tank.variable("valve").unwrap().kind, VariableKind::Input);
        for p in ["inflowRate", "outflowRate", "initialLevel"] {
            assert_eq!(tank.variable(p).unwrap().kind, VariableKind::Parameter);
        }
        assert_eq!(ctrl.variable("level").unwrap().kind, VariableKind::Input);
        assert_eq!(ctrl.variable("valve").unwrap().kind, VariableKind::Output);
        assert_eq!(ctrl.variable("minLevel").unwrap().default, Some(Value::Real(1.0)));
        assert_eq!(ctrl.variable("maxLevel").unwrap().default, Some(Value::Real(2.0)));
        assert_eq!(tank.variable("inflowRate").unwrap().default, Some(Value::Real(1.0)));
        assert_eq!(tank.variable("outflowRate").unwrap().default, Some(Value::Real(2.0)));
        assert_eq!(tank.variable("initialLevel").unwrap().default, Some(Value::Real(1.0)));

        let mut broken = ctrl.clone();
        broken.variables[3].name = "minLevel".into();
        assert!(broken.validate().is_err());
        assert!(Builtin::Controller.check_compatible(&broken).is_err());
        assert!(Builtin::Controller.check_compatible(&ctrl).is_ok());
    }

    #[test]
    fn instantiate_with_defaults() {
        let tank = Builtin::WaterTank
            .instantiate(Arc::new(build_watertank_description()), "wtInstance")
            .unwrap();
        assert_eq!(tank.get_value(tank_vr::LEVEL).unwrap(), Value::Real(1.0));
        let ctrl = Builtin::Controller
            .instantiate(Arc::new(build_controller_description()), "crtlInstance")
            .unwrap();
        assert_eq!(ctrl.get_real(controller_vr::VALVE).unwrap(), 0.0);
    }

    #[test]
    fn tank_instance_step() {
        let mut tank = Builtin::WaterTank
            .instantiate(Arc::new(build_watertank_description()), "wtInstance")
            .unwrap();
        tank.initialize(0.0).unwrap();
        tank.do_step(0.0, 0.1).unwrap();
        assert_eq!(tank.get_real(tank_vr::LEVEL).unwrap(), 1.1);
    }

    #[test]
    fn initial_level_parameter_applies_on_initialize() {
        let mut tank = Builtin::WaterTank
            .instantiate(Arc::new(build_watertank_description()), "wt")
            .unwrap();
        tank.set_real(tank_vr::INITIAL_LEVEL, 0.25).unwrap();
        tank.initialize(0.0).unwrap();
        assert_eq!(tank.get_real(tank_vr::LEVEL).unwrap(), 0.25);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = (WaterTankParams, ControllerParams)> {
            (0.1f64..2.0, 0.1f64..3.0, 0.0f64..3.0, 0.0f64..2.0, 0.1f64..2.0).prop_map(
                |(inflow, extra, init, lo, width)| {
                    (
                        WaterTankParams::new(inflow, inflow + extra, init).unwrap(),
                        ControllerParams::new(lo, lo + width).unwrap(),
                    )
                },
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            // Under Jacobi exchange the controller sees the level one step late
            // and the tank sees the valve one step late, so the overshoot past
            // either threshold is at most two steps of the respective slope.
            #[test]
            fn band_after_first_crossing(
                (tank, ctrl) in params(),
                h in prop::sample::select(vec![0.01, 0.1, 0.5]),
                end in 0.0f64..100.0,
            ) {
                let rows = analytic_trace(&tank, &ctrl, h, end);
                let crossing = rows
                    .windows(2)
                    .position(|w| w[0].level < ctrl.max_level && w[1].level >= ctrl.max_level);
                let Some(first) = crossing.map(|i| i + 1) else {
                    return Ok(());
                };
                let slack = 1e-9;
                let lo = (ctrl.min_level - 2.0 * h * (tank.outflow_rate - tank.inflow_rate)).max(0.0);
                let hi = ctrl.max_level + 2.0 * h * tank.inflow_rate;
                for r in &rows[first..] {
                    prop_assert!(r.level >= lo - slack && r.level <= hi + slack,
                        "level {} outside [{lo}, {hi}] at t={}", r.level, r.time);
                }
            }

            #[test]
            fn valve_switches_need_threshold(
                (tank, ctrl) in params(),
                h in prop::sample::select(vec![0.01, 0.1, 0.5]),
                end in 0.0f64..100.0,
            ) {
                let rows = analytic_trace(&tank, &ctrl, h, end);
                let mut last_switch: Option<ValveState> = None;
                for w in rows.windows(2) {
                    if w[0].valve != w[1].valve {
                        if let Some(prev) = last_switch {
                            prop_assert_ne!(prev, w[1].valve);
                        }
                        last_switch = Some(w[1].valve);
                        // the controller decided on the previous row's level
                        match w[1].valve {
                            ValveState::Open => prop_assert!(w[0].level >= ctrl.max_level),
                            ValveState::Closed => prop_assert!(w[0].level <= ctrl.min_level),
                        }
                    }
                }
            }
        }
    }
}

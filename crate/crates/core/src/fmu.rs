//! FMI-lite component contract.
//!
//! A deliberately small subset of FMI co-simulation: real and boolean scalar
//! variables addressed by dense value references, a four-state lifecycle and
//! a fixed-step `do_step`. Booleans are stored as `0.0`/`1.0` so that they can
//! travel across connections as reals.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used when checking that a `do_step` call starts at the
/// instance's current time.
pub const SYNC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FmuError {
    #[error("invalid model description `{model}`: {reason}")]
    InvalidDescription { model: String, reason: String },
    #[error("invalid instance name `{0}`")]
    InvalidInstanceName(String),
    #[error("{instance}: unknown value reference {vr}")]
    UnknownReference { instance: String, vr: ValueReference },
    #[error("{instance}: variable `{variable}` of kind {kind} cannot be set")]
    KindViolation {
        instance: String,
        variable: String,
        kind: VariableKind,
    },
    #[error("{instance}: `{operation}` not allowed in state {state}")]
    Lifecycle {
        instance: String,
        operation: &'static str,
        state: LifecycleState,
    },
    #[error("{instance}: variable `{variable}` is {expected}, got {got}")]
    TypeMismatch {
        instance: String,
        variable: String,
        expected: ValueType,
        got: String,
    },
    #[error("{instance}: step starts at t={requested} but instance is at t={current}")]
    Synchronization {
        instance: String,
        current: f64,
        requested: f64,
    },
    #[error("{instance}: step size must be positive and finite, got {h}")]
    InvalidStepSize { instance: String, h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueReference(pub u32);

impl ValueReference {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ValueReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Parameter,
    Input,
    Output,
    Local,
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariableKind::Parameter => "parameter",
            VariableKind::Input => "input",
            VariableKind::Output => "output",
            VariableKind::Local => "local",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Real,
    Boolean,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Real => "real",
            ValueType::Boolean => "boolean",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Boolean(bool),
    Real(f64),
}

impl Value {
    /// Real encoding used on connections: booleans become 0.0 / 1.0.
    pub fn as_real(self) -> f64 {
        match self {
            Value::Real(v) => v,
            Value::Boolean(b) => bool_to_real(b),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Boolean(b)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v:?}"),
            Value::Boolean(b) => write!(f, "{b}"),
        }
    }
}

fn bool_to_real(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarVariable {
    pub name: String,
    pub kind: VariableKind,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    #[serde(rename = "valueReference")]
    pub value_ref: ValueReference,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

impl ScalarVariable {
    /// Declared default in the real encoding, or zero when absent.
    pub fn start_value(&self) -> f64 {
        self.default.map(Value::as_real).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescription {
    #[serde(rename = "modelName")]
    pub model_name: String,
    pub variables: Vec<ScalarVariable>,
}

impl ModelDescription {
    pub fn from_json(text: &str) -> Result<Self, FmuError> {
        let desc: ModelDescription =
            serde_json::from_str(text).map_err(|e| FmuError::InvalidDescription {
                model: "<unparsed>".into(),
                reason: e.to_string(),
            })?;
        desc.validate()?;
        Ok(desc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("description serializes")
    }

    pub fn validate(&self) -> Result<(), FmuError> {
        let invalid = |reason: String| FmuError::InvalidDescription {
            model: self.model_name.clone(),
            reason,
        };
        if self.model_name.is_empty() {
            return Err(invalid("empty model name".into()));
        }
        if self.variables.is_empty() {
            return Err(invalid("no variables".into()));
        }
        let mut names = HashSet::new();
        let mut refs = HashSet::new();
        for var in &self.variables {
            if !is_identifier(&var.name) {
                return Err(invalid(format!("`{}` is not a valid identifier", var.name)));
            }
            if !names.insert(var.name.as_str()) {
                return Err(invalid(format!("duplicate variable name `{}`", var.name)));
            }
            if !refs.insert(var.value_ref) {
                return Err(invalid(format!("duplicate value reference {}", var.value_ref)));
            }
            if var.kind == VariableKind::Parameter && var.default.is_none() {
                return Err(invalid(format!("parameter `{}` has no default", var.name)));
            }
            match (var.value_type, var.default) {
                (ValueType::Real, Some(Value::Boolean(_))) => {
                    return Err(invalid(format!("real `{}` has boolean default", var.name)))
                }
                (ValueType::Boolean, Some(Value::Real(v))) if v != 0.0 && v != 1.0 => {
                    return Err(invalid(format!("boolean `{}` has default {v}", var.name)))
                }
                _ => {}
            }
        }
        if refs.iter().any(|vr| vr.index() >= self.variables.len()) {
            return Err(invalid("value references are not dense from 0".into()));
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Option<&ScalarVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn by_ref(&self, vr: ValueReference) -> Option<&ScalarVariable> {
        self.variables.iter().find(|v| v.value_ref == vr)
    }

    /// Variables ordered by value reference.
    pub fn by_ref_order(&self) -> Vec<&ScalarVariable> {
        let mut vars: Vec<_> = self.variables.iter().collect();
        vars.sort_by_key(|v| v.value_ref);
        vars
    }
}

/// `[A-Za-z_][A-Za-z0-9_]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifecycleState {
    Instantiated,
    Initialized,
    Stepping,
    Terminated,
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LifecycleState::Instantiated => "instantiated",
            LifecycleState::Initialized => "initialized",
            LifecycleState::Stepping => "stepping",
            LifecycleState::Terminated => "terminated",
        })
    }
}

/// Behaviour of a model. `values` is indexed by value reference.
pub trait ModelBehavior: Send {
    fn initialize(&mut self, _values: &mut [f64]) {}

    fn step(&mut self, values: &mut [f64], h: f64);
}

pub struct Instance {
    name: String,
    desc: Arc<ModelDescription>,
    behavior: Box<dyn ModelBehavior>,
    values: Vec<f64>,
    state: LifecycleState,
    time: f64,
}

impl fmt::Debug for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Instance")
            .field("name", &self.name)
            .field("model", &self.desc.model_name)
            .field("state", &self.state)
            .field("time", &self.time)
            .finish()
    }
}

impl Instance {
    /// Creates an instance with every variable at its declared default.
    pub fn instantiate(
        desc: Arc<ModelDescription>,
        instance_name: &str,
        behavior: Box<dyn ModelBehavior>,
    ) -> Result<Self, FmuError> {
        if !is_identifier(instance_name) {
            return Err(FmuError::InvalidInstanceName(instance_name.to_string()));
        }
        desc.validate()?;
        let mut values = vec![0.0; desc.variables.len()];
        for var in &desc.variables {
            values[var.value_ref.index()] = var.start_value();
        }
        Ok(Instance {
            name: instance_name.to_string(),
            desc,
            behavior,
            values,
            state: LifecycleState::Instantiated,
            time: 0.0,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &ModelDescription {
        &self.desc
    }

    pub fn state(&self) -> LifecycleState {
        self.state
    }

    pub fn current_time(&self) -> f64 {
        self.time
    }

    fn lifecycle(&self, operation: &'static str) -> FmuError {
        FmuError::Lifecycle {
            instance: self.name.clone(),
            operation,
            state: self.state,
        }
    }

    fn lookup(&self, vr: ValueReference) -> Result<&ScalarVariable, FmuError> {
        self.desc
            .variables
            .get(vr.index())
            .filter(|v| v.value_ref == vr)
            .or_else(|| self.desc.by_ref(vr))
            .ok_or_else(|| FmuError::UnknownReference {
                instance: self.name.clone(),
                vr,
            })
    }

    pub fn initialize(&mut self, start_time: f64) -> Result<(), FmuError> {
        if self.state != LifecycleState::Instantiated {
            return Err(self.lifecycle("initialize"));
        }
        self.behavior.initialize(&mut self.values);
        self.time = start_time;
        self.state = LifecycleState::Initialized;
        Ok(())
    }

    fn check_settable(&self, var: &ScalarVariable) -> Result<(), FmuError> {
        match (var.kind, self.state) {
            (_, LifecycleState::Terminated) => Err(self.lifecycle("set")),
            (VariableKind::Output | VariableKind::Local, _) => Err(FmuError::KindViolation {
                instance: self.name.clone(),
                variable: var.name.clone(),
                kind: var.kind,
            }),
            (VariableKind::Parameter, LifecycleState::Stepping) => {
                Err(self.lifecycle("set parameter"))
            }
            _ => Ok(()),
        }
    }

    pub fn set_value(&mut self, vr: ValueReference, value: Value) -> Result<(), FmuError> {
        let var = self.lookup(vr)?;
        self.check_settable(var)?;
        let encoded = match (var.value_type, value) {
            (ValueType::Real, Value::Real(v)) => v,
            (ValueType::Boolean, Value::Boolean(b)) => bool_to_real(b),
            (ValueType::Boolean, Value::Real(v)) if v == 0.0 || v == 1.0 => v,
            (expected, got) => {
                return Err(FmuError::TypeMismatch {
                    instance: self.name.clone(),
                    variable: var.name.clone(),
                    expected,
                    got: got.to_string(),
                })
            }
        };
        self.values[vr.index()] = encoded;
        Ok(())
    }

    pub fn get_value(&self, vr: ValueReference) -> Result<Value, FmuError> {
        if self.state == LifecycleState::Terminated {
            return Err(self.lifecycle("get"));
        }
        let var = self.lookup(vr)?;
        let raw = self.values[vr.index()];
        Ok(match var.value_type {
            ValueType::Real => Value::Real(raw),
            ValueType::Boolean => Value::Boolean(raw != 0.0),
        })
    }

    /// Sets a variable through the real encoding used on connections. A
    /// boolean target stores `1.0` for any non-zero value.
    pub fn set_real(&mut self, vr: ValueReference, v: f64) -> Result<(), FmuError> {
        let var = self.lookup(vr)?;
        self.check_settable(var)?;
        self.values[vr.index()] = match var.value_type {
            ValueType::Real => v,
            ValueType::Boolean => bool_to_real(v != 0.0),
        };
        Ok(())
    }

    pub fn get_real(&self, vr: ValueReference) -> Result<f64, FmuError> {
        if self.state == LifecycleState::Terminated {
            return Err(self.lifecycle("get"));
        }
        self.lookup(vr)?;
        Ok(self.values[vr.index()])
    }

    pub fn do_step(&mut self, t: f64, h: f64) -> Result<(), FmuError> {
        match self.state {
            LifecycleState::Initialized | LifecycleState::Stepping => {}
            _ => return Err(self.lifecycle("do_step")),
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FmuError::InvalidStepSize {
                instance: self.name.clone(),
                h,
            });
        }
        // Fixed-step time accumulation may differ from `start + k*h` by a few
        // ulps once |t| exceeds a few thousand seconds.
        let tolerance = SYNC_TOLERANCE.max(4.0 * f64::EPSILON * t.abs());
        if (t - self.time).abs() > tolerance {
            return Err(FmuError::Synchronization {
                instance: self.name.clone(),
                current: self.time,
                requested: t,
            });
        }
        self.behavior.step(&mut self.values, h);
        self.time = t + h;
        self.state = LifecycleState::Stepping;
        Ok(())
    }

    pub fn terminate(&mut self) -> Result<(), FmuError> {
        if self.state == LifecycleState::Terminated {
            return Err(self.lifecycle("terminate"));
        }
        self.state = LifecycleState::Terminated;
        Ok(())
    }
}

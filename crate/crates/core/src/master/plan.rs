use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fmu::{ModelDescription, ValueReference, VariableKind};
use crate::models::Builtin;
use crate::multimodel::{resolve_connections, CoSimConfig, MultiModel, Wire};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("malformed plan: {0}")]
    Syntax(String),
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanInstance {
    pub name: String,
    /// Key into [`SimulationPlan::models`].
    pub model: String,
}

/// A model parameter lifted out of the plan; its value is supplied at run
/// time under `key`, falling back to `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSlot {
    pub key: String,
    pub instance: usize,
    #[serde(rename = "valueReference")]
    pub value_ref: ValueReference,
    pub default: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub name: String,
    pub instance: usize,
    #[serde(rename = "valueReference")]
    pub value_ref: ValueReference,
}

/// Master-algorithm intermediate representation: everything needed to run a
/// co-simulation with all names already resolved to indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationPlan {
    pub models: BTreeMap<String, ModelDescription>,
    pub instances: Vec<PlanInstance>,
    pub parameters: Vec<ParameterSlot>,
    pub wiring: Vec<Wire>,
    #[serde(rename = "stepSize")]
    pub step_size: f64,
    #[serde(rename = "startTime")]
    pub start_time: f64,
    #[serde(rename = "endTime")]
    pub end_time: f64,
    pub columns: Vec<Column>,
}

pub fn build_plan(mm: &MultiModel, coe: &CoSimConfig) -> SimulationPlan {
    let order = mm.instance_order();
    let index_of = |name: &str| order.iter().position(|n| *n == name).expect("known instance");

    let models = mm
        .models
        .iter()
        .map(|(key, m)| (key.clone(), (*m.description).clone()))
        .collect();
    let instances = order
        .iter()
        .map(|name| PlanInstance {
            name: name.to_string(),
            model: mm.config.instances[*name].clone(),
        })
        .collect();

    let mut parameters = Vec::new();
    for (i, name) in order.iter().enumerate() {
        let desc = &mm.model_of(name).expect("validated").description;
        for var in desc.by_ref_order() {
            if var.kind != VariableKind::Parameter {
                continue;
            }
            let key = format!("{name}.{}", var.name);
            let configured = mm
                .config
                .parameters
                .iter()
                .find(|(k, _)| k.0.to_string() == key)
                .map(|(_, v)| v.as_real());
            parameters.push(ParameterSlot {
                key,
                instance: i,
                value_ref: var.value_ref,
                default: configured.or(var.default.map(|d| d.as_real())),
            });
        }
    }

    let columns = mm
        .logged_ports()
        .into_iter()
        .map(|port| {
            let desc = &mm.model_of(&port.instance).expect("validated").description;
            let var = desc.variable(&port.variable).expect("validated");
            Column {
                name: port.to_string(),
                instance: index_of(&port.instance),
                value_ref: var.value_ref,
            }
        })
        .collect();

    SimulationPlan {
        models,
        instances,
        parameters,
        wiring: resolve_connections(mm),
        step_size: coe.step_size(),
        start_time: coe.start_time,
        end_time: coe.end_time,
        columns,
    }
}

impl SimulationPlan {
    pub fn description_of(&self, instance: usize) -> &ModelDescription {
        &self.models[&self.instances[instance].model]
    }

    pub fn builtin_of(&self, instance: usize) -> Builtin {
        Builtin::from_model_name(&self.description_of(instance).model_name)
            .expect("validated plan")
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let invalid = |msg: String| Err(PlanError::Invalid(msg));
        for (key, desc) in &self.models {
            desc.validate().map_err(|e| PlanError::Invalid(e.to_string()))?;
            let Some(builtin) = Builtin::from_model_name(&desc.model_name) else {
                return invalid(format!("model `{key}`: no implementation for `{}`", desc.model_name));
            };
            builtin
                .check_compatible(desc)
                .map_err(|e| PlanError::Invalid(format!("model `{key}`: {e}")))?;
        }
        let mut names = HashSet::new();
        for inst in &self.instances {
            if !self.models.contains_key(&inst.model) {
                return invalid(format!("instance `{}` uses unknown model `{}`", inst.name, inst.model));
            }
            if !names.insert(inst.name.as_str()) {
                return invalid(format!("duplicate instance `{}`", inst.name));
            }
        }
        let kind_of = |instance: usize, vr: ValueReference| -> Result<VariableKind, PlanError> {
            let inst = self.instances.get(instance).ok_or_else(|| {
                PlanError::Invalid(format!("instance index {instance} out of range"))
            })?;
            self.models[&inst.model]
                .by_ref(vr)
                .map(|v| v.kind)
                .ok_or_else(|| PlanError::Invalid(format!("{}: no value reference {vr}", inst.name)))
        };
        let mut keys = HashSet::new();
        for slot in &self.parameters {
            if !keys.insert(slot.key.as_str()) {
                return invalid(format!("duplicate parameter key `{}`", slot.key));
            }
            if kind_of(slot.instance, slot.value_ref)? != VariableKind::Parameter {
                return invalid(format!("slot `{}` does not refer to a parameter", slot.key));
            }
        }
        let mut targets = HashSet::new();
        for wire in &self.wiring {
            if kind_of(wire.source.instance, wire.source.value_ref)? != VariableKind::Output {
                return invalid(format!("wire source {:?} is not an output", wire.source));
            }
            if kind_of(wire.target.instance, wire.target.value_ref)? != VariableKind::Input {
                return invalid(format!("wire target {:?} is not an input", wire.target));
            }
            if !targets.insert(wire.target) {
                return invalid(format!("wire target {:?} driven twice", wire.target));
            }
        }
        for col in &self.columns {
            match kind_of(col.instance, col.value_ref)? {
                VariableKind::Output | VariableKind::Local => {}
                other => return invalid(format!("column `{}` refers to {other} variable", col.name)),
            }
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return invalid(format!("step size must be positive, got {}", self.step_size));
        }
        if !(self.start_time.is_finite() && self.end_time >= self.start_time) {
            return invalid(format!(
                "end time {} before start time {}",
                self.end_time, self.start_time
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn with_step_size(&self, h: f64) -> SimulationPlan {
        SimulationPlan {
            step_size: h,
            ..self.clone()
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PlanError> {
        std::fs::write(path, serialize_plan(self)).map_err(|source| PlanError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<SimulationPlan, PlanError> {
        let text = std::fs::read_to_string(path).map_err(|source| PlanError::Io {
            path: path.display().to_string(),
            source,
        })?;
        parse_plan(&text)
    }
}

pub fn serialize_plan(plan: &SimulationPlan) -> String {
    let mut s = serde_json::to_string_pretty(plan).expect("plan serializes");
    s.push('\n');
    s
}

pub fn parse_plan(text: &str) -> Result<SimulationPlan, PlanError> {
    let plan: SimulationPlan =
        serde_json::from_str(text).map_err(|e| PlanError::Syntax(e.to_string()))?;
    plan.validate()?;
    Ok(plan)
}

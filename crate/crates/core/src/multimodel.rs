//! Multi-model (`mm`) and co-simulation (`coe`) configuration.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::fmu::{is_identifier, ModelDescription, Value, ValueReference, VariableKind};
use crate::models::Builtin;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{}", format_issues(.0))]
    Invalid(Vec<Issue>),
}

fn format_issues(issues: &[Issue]) -> String {
    let lines: Vec<String> = issues.iter().map(ToString::to_string).collect();
    lines.join("; ")
}

/// One validation problem found in a multi-model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Issue {
    #[error("model `{key}`: {reason}")]
    Model { key: String, reason: String },
    #[error("instance `{instance}` refers to unknown model `{model}`")]
    UnknownModel { instance: String, model: String },
    #[error("{context}: unknown instance `{instance}`")]
    UnknownInstance { context: String, instance: String },
    #[error("{context}: instance `{instance}` has no variable `{variable}`")]
    UnknownVariable {
        context: String,
        instance: String,
        variable: String,
    },
    #[error("connection {connection}: {end} `{port}` is {found}, expected {expected}")]
    KindMismatch {
        connection: String,
        end: &'static str,
        port: String,
        found: VariableKind,
        expected: VariableKind,
    },
    #[error("connection {connection}: target already driven by {previous}")]
    DuplicateTarget { connection: String, previous: String },
    #[error("parameter `{key}` refers to {kind} variable, expected parameter")]
    NotAParameter { key: String, kind: VariableKind },
    #[error("log variable `{port}` is {kind}, expected output or local")]
    NotLoggable { port: String, kind: VariableKind },
    #[error("invalid instance name `{0}`")]
    BadInstanceName(String),
}

/// `instance.variable`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub instance: String,
    pub variable: String,
}

impl PortRef {
    pub fn new(instance: impl Into<String>, variable: impl Into<String>) -> Self {
        PortRef {
            instance: instance.into(),
            variable: variable.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.instance, self.variable)
    }
}

impl FromStr for PortRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((inst, var)) if is_identifier(inst) && is_identifier(var) => {
                Ok(PortRef::new(inst, var))
            }
            _ => Err(format!("`{s}` is not of the form instance.variable")),
        }
    }
}

impl Serialize for PortRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PortRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connection {
    pub source: PortRef,
    pub target: PortRef,
}

impl fmt::Display for Connection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiModelConfig {
    /// Model key to source: a built-in model name or a path to a JSON model
    /// description (relative to the `mm` file).
    pub fmus: IndexMap<String, String>,
    /// Instance name to model key.
    pub instances: IndexMap<String, String>,
    #[serde(default)]
    pub connections: Vec<Connection>,
    #[serde(default)]
    pub parameters: IndexMap<PortKey, Value>,
    /// Columns recorded in the results. Defaults to every output, instances in
    /// declaration order.
    #[serde(rename = "logVariables", default, skip_serializing_if = "Vec::is_empty")]
    pub log_variables: Vec<PortRef>,
}

/// Map key wrapper so parameter keys parse as [`PortRef`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortKey(pub PortRef);

impl Serialize for PortKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PortKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        PortRef::deserialize(d).map(PortKey)
    }
}

impl MultiModelConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("multi-model serializes")
    }
}

/// Resolves model sources to descriptions and implementations.
#[derive(Debug, Clone, Default)]
pub struct ModelResolver {
    base_dir: Option<PathBuf>,
}

impl ModelResolver {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        ModelResolver {
            base_dir: Some(base_dir.into()),
        }
    }

    pub fn builtin_only() -> Self {
        ModelResolver { base_dir: None }
    }

    pub fn resolve(&self, source: &str) -> Result<ResolvedModel, String> {
        if let Some(builtin) = Builtin::from_model_name(source) {
            return Ok(ResolvedModel {
                builtin,
                description: Arc::new(builtin.description()),
            });
        }
        let Some(base) = &self.base_dir else {
            return Err(format!("`{source}` is not a built-in model"));
        };
        let path = base.join(source);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read description {}: {e}", path.display()))?;
        let desc = ModelDescription::from_json(&text).map_err(|e| e.to_string())?;
        let builtin = Builtin::from_model_name(&desc.model_name).ok_or_else(|| {
            format!("no implementation available for model `{}`", desc.model_name)
        })?;
        builtin.check_compatible(&desc)?;
        Ok(ResolvedModel {
            builtin,
            description: Arc::new(desc),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub builtin: Builtin,
    pub description: Arc<ModelDescription>,
}

/// A multi-model whose references have all been checked against the model
/// descriptions.
#[derive(Debug, Clone)]
pub struct MultiModel {
    pub config: MultiModelConfig,
    pub models: IndexMap<String, ResolvedModel>,
}

impl MultiModel {
    /// Instance names in lexicographic order; this is the instance order used
    /// by plans and wiring.
    pub fn instance_order(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.config.instances.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }

    pub fn model_of(&self, instance: &str) -> Option<&ResolvedModel> {
        self.config
            .instances
            .get(instance)
            .and_then(|key| self.models.get(key))
    }

    fn lookup(&self, port: &PortRef) -> Option<(VariableKind, ValueReference)> {
        let model = self.model_of(&port.instance)?;
        let var = model.description.variable(&port.variable)?;
        Some((var.kind, var.value_ref))
    }

    /// Columns recorded during a run.
    pub fn logged_ports(&self) -> Vec<PortRef> {
        if !self.config.log_variables.is_empty() {
            return self.config.log_variables.clone();
        }
        let mut ports = Vec::new();
        for (instance, key) in &self.config.instances {
            let desc = &self.models[key].description;
            for var in desc.by_ref_order() {
                if var.kind == VariableKind::Output {
                    ports.push(PortRef::new(instance.clone(), var.name.clone()));
                }
            }
        }
        ports
    }
}

pub fn parse_multimodel(text: &str, resolver: &ModelResolver) -> Result<MultiModel, ConfigError> {
    let config: MultiModelConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    validate_multimodel(config, resolver)
}

pub fn load_multimodel(path: &Path) -> Result<MultiModel, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Syntax(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_multimodel(&text, &ModelResolver::new(base))
}

pub fn validate_multimodel(
    config: MultiModelConfig,
    resolver: &ModelResolver,
) -> Result<MultiModel, ConfigError> {
    let mut issues = Vec::new();
    let mut models = IndexMap::new();
    for (key, source) in &config.fmus {
        match resolver.resolve(source) {
            Ok(m) => {
                models.insert(key.clone(), m);
            }
            Err(reason) => issues.push(Issue::Model {
                key: key.clone(),
                reason,
            }),
        }
    }
    for (instance, model) in &config.instances {
        if !is_identifier(instance) {
            issues.push(Issue::BadInstanceName(instance.clone()));
        }
        if !config.fmus.contains_key(model) {
            issues.push(Issue::UnknownModel {
                instance: instance.clone(),
                model: model.clone(),
            });
        }
    }
    let mm = MultiModel { config, models };

    let check_port = |port: &PortRef, context: String, issues: &mut Vec<Issue>| {
        if !mm.config.instances.contains_key(&port.instance) {
            issues.push(Issue::UnknownInstance {
                context,
                instance: port.instance.clone(),
            });
            return None;
        }
        // an unresolvable model was reported above
        mm.model_of(&port.instance)?;
        let found = mm.lookup(port);
        if found.is_none() {
            issues.push(Issue::UnknownVariable {
                context,
                instance: port.instance.clone(),
                variable: port.variable.clone(),
            });
        }
        found
    };

    let mut driven: HashMap<&PortRef, &Connection> = HashMap::new();
    for conn in &mm.config.connections {
        let context = format!("connection {conn}");
        let src = check_port(&conn.source, context.clone(), &mut issues);
        let dst = check_port(&conn.target, context, &mut issues);
        if let Some((kind, _)) = src {
            if kind != VariableKind::Output {
                issues.push(Issue::KindMismatch {
                    connection: conn.to_string(),
                    end: "source",
                    port: conn.source.to_string(),
                    found: kind,
                    expected: VariableKind::Output,
                });
            }
        }
        if let Some((kind, _)) = dst {
            if kind != VariableKind::Input {
                issues.push(Issue::KindMismatch {
                    connection: conn.to_string(),
                    end: "target",
                    port: conn.target.to_string(),
                    found: kind,
                    expected: VariableKind::Input,
                });
            }
        }
        if let Some(previous) = driven.insert(&conn.target, conn) {
            issues.push(Issue::DuplicateTarget {
                connection: conn.to_string(),
                previous: previous.to_string(),
            });
        }
    }
    for PortKey(port) in mm.config.parameters.keys() {
        let context = format!("parameter `{port}`");
        if let Some((kind, _)) = check_port(port, context, &mut issues) {
            if kind != VariableKind::Parameter {
                issues.push(Issue::NotAParameter {
                    key: port.to_string(),
                    kind,
                });
            }
        }
    }
    for port in &mm.config.log_variables {
        let context = format!("log variable `{port}`");
        if let Some((kind, _)) = check_port(port, context, &mut issues) {
            if !matches!(kind, VariableKind::Output | VariableKind::Local) {
                issues.push(Issue::NotLoggable {
                    port: port.to_string(),
                    kind,
                });
            }
        }
    }
    if !issues.is_empty() {
        return Err(ConfigError::Invalid(issues));
    }

    for (instance, key) in &mm.config.instances {
        for var in &mm.models[key].description.variables {
            let port = PortRef::new(instance.clone(), var.name.clone());
            if var.kind == VariableKind::Input && !driven.contains_key(&port) {
                log::warn!("input `{port}` is not connected and keeps its default");
            }
        }
    }
    Ok(mm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Port {
    pub instance: usize,
    #[serde(rename = "valueReference")]
    pub value_ref: ValueReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wire {
    pub source: Port,
    pub target: Port,
}

/// Index-based wiring, sorted by target. Instance indices follow
/// [`MultiModel::instance_order`].
pub fn resolve_connections(mm: &MultiModel) -> Vec<Wire> {
    let order: BTreeMap<&str, usize> = mm
        .instance_order()
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n, i))
        .collect();
    let port = |p: &PortRef| {
        let (_, vr) = mm.lookup(p).expect("validated multi-model");
        Port {
            instance: order[p.instance.as_str()],
            value_ref: vr,
        }
    };
    let mut wiring: Vec<Wire> = mm
        .config
        .connections
        .iter()
        .map(|c| Wire {
            source: port(&c.source),
            target: port(&c.target),
        })
        .collect();
    wiring.sort_by_key(|w| (w.target, w.source));
    wiring
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum Algorithm {
    #[serde(rename = "fixed-step")]
    FixedStep { size: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoSimConfig {
    pub algorithm: Algorithm,
    #[serde(rename = "startTime", default)]
    pub start_time: f64,
    #[serde(rename = "endTime")]
    pub end_time: f64,
}

impl CoSimConfig {
    pub fn step_size(&self) -> f64 {
        match self.algorithm {
            Algorithm::FixedStep { size } => size,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let h = self.step_size();
        let mut issues = Vec::new();
        if !(h > 0.0 && h.is_finite()) {
            issues.push(format!("step size must be positive, got {h}"));
        }
        if !(self.start_time.is_finite() && self.end_time.is_finite()) {
            issues.push("start and end time must be finite".to_string());
        } else if self.end_time < self.start_time {
            issues.push(format!(
                "end time {} is before start time {}",
                self.end_time, self.start_time
            ));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Syntax(issues.join("; ")))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coe serializes")
    }
}

pub fn parse_cosim_config(text: &str) -> Result<CoSimConfig, ConfigError> {
    let coe: CoSimConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    coe.validate()?;
    Ok(coe)
}

pub fn load_cosim_config(path: &Path) -> Result<CoSimConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Syntax(format!("cannot read {}: {e}", path.display())))?;
    parse_cosim_config(&text)
}

/// The water-tank multi-model used by the demo, tests and benchmarks.
pub fn watertank_demo() -> MultiModelConfig {
    use crate::models::{CONTROLLER_MODEL, WATERTANK_MODEL};
    let mut fmus = IndexMap::new();
    fmus.insert("{wt}".to_string(), WATERTANK_MODEL.to_string());
    fmus.insert("{crtl}".to_string(), CONTROLLER_MODEL.to_string());
    let mut instances = IndexMap::new();
    instances.insert("wtInstance".to_string(), "{wt}".to_string());
    instances.insert("crtlInstance".to_string(), "{crtl}".to_string());
    let mut parameters = IndexMap::new();
    parameters.insert(PortKey(PortRef::new("crtlInstance", "minLevel")), Value::Real(1.0));
    parameters.insert(PortKey(PortRef::new("crtlInstance", "maxLevel")), Value::Real(2.0));
    MultiModelConfig {
        fmus,
        instances,
        connections: vec![
            Connection {
                source: PortRef::new("wtInstance", "level"),
                target: PortRef::new("crtlInstance", "level"),
            },
            Connection {
                source: PortRef::new("crtlInstance", "valve"),
                target: PortRef::new("wtInstance", "valve"),
            },
        ],
        parameters,
        log_variables: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_text() -> String {
        watertank_demo().to_json()
    }

    fn parse(text: &str) -> Result<MultiModel, ConfigError> {
        parse_multimodel(text, &ModelResolver::builtin_only())
    }

    fn issues(text: &str) -> Vec<Issue> {
        match parse(text) {
            Err(ConfigError::Invalid(issues)) => issues,
            other => panic!("expected validation issues, got {other:?}"),
        }
    }

    #[test]
    fn demo_parses() {
        let mm = parse(&demo_text()).unwrap();
        assert_eq!(mm.config.instances.len(), 2);
        assert_eq!(mm.config.connections.len(), 2);
        assert_eq!(mm.instance_order(), vec!["crtlInstance", "wtInstance"]);
        assert_eq!(
            mm.logged_ports(),
            vec![
                PortRef::new("wtInstance", "level"),
                PortRef::new("crtlInstance", "valve")
            ]
        );
    }

    #[test]
    fn config_round_trip() {
        let cfg = watertank_demo();
        let back: MultiModelConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn connection_into_output_rejected() {
        let text = demo_text().replace(
            "\"target\": \"crtlInstance.level\"",
            "\"target\": \"crtlInstance.valve\"",
        );
        let found = issues(&text);
        assert!(found.iter().any(|i| matches!(
            i,
            Issue::KindMismatch { end: "target", found: VariableKind::Output, .. }
        )));
        let msg = ConfigError::Invalid(found).to_string();
        assert!(msg.contains("wtInstance.level -> crtlInstance.valve"), "{msg}");
    }

    #[test]
    fn duplicate_target_rejected() {
        let mut cfg = watertank_demo();
        cfg.connections.push(Connection {
            source: PortRef::new("crtlInstance", "valve"),
            target: PortRef::new("wtInstance", "valve"),
        });
        let found = issues(&cfg.to_json());
        assert!(matches!(found.as_slice(), [Issue::DuplicateTarget { .. }]));
    }

    #[test]
    fn unknown_instance_and_variable() {
        let mut cfg = watertank_demo();
        cfg.connections[0].target = PortRef::new("ghost", "level");
        cfg.connections[1].source = PortRef::new("crtlInstance", "nope");
        let found = issues(&cfg.to_json());
        assert_eq!(found.len(), 2);
        assert!(matches!(found[0], Issue::UnknownInstance { .. }));
        assert!(matches!(found[1], Issue::UnknownVariable { .. }));
    }

    #[test]
    fn parameter_must_be_parameter() {
        let mut cfg = watertank_demo();
        cfg.parameters
            .insert(PortKey(PortRef::new("wtInstance", "level")), Value::Real(3.0));
        let found = issues(&cfg.to_json());
        assert!(matches!(found.as_slice(), [Issue::NotAParameter { .. }]));
    }

    #[test]
    fn unknown_model_source() {
        let mut cfg = watertank_demo();
        cfg.fmus.insert("{wt}".into(), "nonexistent.json".into());
        assert!(matches!(issues(&cfg.to_json())[0], Issue::Model { .. }));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse("{"), Err(ConfigError::Syntax(_))));
        assert!(matches!(
            parse(&demo_text().replace("\"crtlInstance.level\"", "\"noDot\"")),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn description_file_source() {
        let dir = tempfile::tempdir().unwrap();
        let mut desc = Builtin::Controller.description();
        desc.variables[2].default = Some(Value::Real(0.5));
        std::fs::write(dir.path().join("ctrl.json"), desc.to_json()).unwrap();
        let mut cfg = watertank_demo();
        cfg.fmus.insert("{crtl}".into(), "ctrl.json".into());
        let mm = parse_multimodel(&cfg.to_json(), &ModelResolver::new(dir.path())).unwrap();
        assert_eq!(mm.models["{crtl}"].builtin, Builtin::Controller);
        assert_eq!(*mm.models["{crtl}"].description, desc);
    }

    #[test]
    fn demo_wiring() {
        let mm = parse(&demo_text()).unwrap();
        let wiring = resolve_connections(&mm);
        // crtlInstance = 0, wtInstance = 1
        assert_eq!(
            wiring,
            vec![
                Wire {
                    source: Port { instance: 1, value_ref: ValueReference(0) },
                    target: Port { instance: 0, value_ref: ValueReference(0) },
                },
                Wire {
                    source: Port { instance: 0, value_ref: ValueReference(1) },
                    target: Port { instance: 1, value_ref: ValueReference(1) },
                },
            ]
        );
    }

    #[test]
    fn empty_wiring_and_order_independence() {
        let mut cfg = watertank_demo();
        cfg.connections.reverse();
        let reversed = resolve_connections(&parse(&cfg.to_json()).unwrap());
        let forward = resolve_connections(&parse(&demo_text()).unwrap());
        assert_eq!(reversed, forward);
        cfg.connections.clear();
        assert!(resolve_connections(&parse(&cfg.to_json()).unwrap()).is_empty());
    }

    #[test]
    fn cosim_config() {
        let coe = parse_cosim_config(
            r#"{"algorithm":{"type":"fixed-step","size":0.1},"startTime":0.0,"endTime":60.0}"#,
        )
        .unwrap();
        assert_eq!(coe.step_size(), 0.1);
        assert_eq!(coe.end_time, 60.0);
        assert!(parse_cosim_config(
            r#"{"algorithm":{"type":"fixed-step","size":0},"startTime":0.0,"endTime":60.0}"#
        )
        .is_err());
        assert!(parse_cosim_config(
            r#"{"algorithm":{"type":"fixed-step","size":0.1},"startTime":5.0,"endTime":1.0}"#
        )
        .is_err());
        assert!(parse_cosim_config(
            r#"{"algorithm":{"type":"variable-step","size":0.1},"endTime":1.0}"#
        )
        .is_err());
        let back = parse_cosim_config(&coe.to_json()).unwrap();
        assert_eq!(back, coe);
    }
}

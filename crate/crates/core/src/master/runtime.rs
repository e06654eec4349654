use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::interpret::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WriterKind {
    #[serde(rename = "CSV")]
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataWriter {
    pub filename: PathBuf,
    #[serde(rename = "type")]
    pub kind: WriterKind,
}

impl DataWriter {
    pub fn csv(filename: impl Into<PathBuf>) -> Self {
        DataWriter {
            filename: filename.into(),
            kind: WriterKind::Csv,
        }
    }
}

/// Values kept outside the plan: parameter values, output sinks and an
/// optional end time override.
///
/// Fields are declared in sorted key order so the serialized file matches a
/// `sort_keys` JSON dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeConfig {
    #[serde(rename = "DataWriter")]
    pub data_writers: Vec<DataWriter>,
    #[serde(rename = "endTime", default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<f64>,
    #[serde(default)]
    pub environment_variables: BTreeMap<String, f64>,
}

impl RuntimeConfig {
    pub fn new(output: impl Into<PathBuf>) -> Self {
        RuntimeConfig {
            data_writers: vec![DataWriter::csv(output)],
            end_time: None,
            environment_variables: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, RunError> {
        let rt: RuntimeConfig =
            serde_json::from_str(text).map_err(|e| RunError::Config(format!("runtime file: {e}")))?;
        rt.validate()?;
        Ok(rt)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            RunError::Config(format!("cannot read runtime file {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.data_writers.is_empty() {
            return Err(RunError::Config("runtime file declares no DataWriter".into()));
        }
        if let Some((key, v)) = self.environment_variables.iter().find(|(_, v)| !v.is_finite()) {
            return Err(RunError::Config(format!("environment variable `{key}` = {v} is not finite")));
        }
        if let Some(end) = self.end_time {
            if !end.is_finite() {
                return Err(RunError::Config(format!("endTime {end} is not finite")));
            }
        }
        Ok(())
    }

    /// Four-space indented JSON with sorted keys.
    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
        self.serialize(&mut ser).expect("runtime config serializes");
        buf.push(b'\n');
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        std::fs::write(path, self.to_json()).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_field_names() {
        let mut rt = RuntimeConfig::new("out/results.csv");
        rt.environment_variables.insert("crtlInstance.minLevel".into(), 1.0);
        rt.end_time = Some(10.0);
        let json = rt.to_json();
        assert!(json.contains("\"environment_variables\""));
        assert!(json.contains("\"DataWriter\""));
        assert!(json.contains("\"type\": \"CSV\""));
        assert!(json.contains("\"endTime\": 10.0"));
        assert!(json.find("DataWriter") < json.find("endTime"));
        assert!(json.find("endTime") < json.find("environment_variables"));
        assert_eq!(RuntimeConfig::parse(&json).unwrap(), rt);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(RuntimeConfig::parse("").is_err());
        assert!(RuntimeConfig::parse(r#"{"DataWriter":[]}"#).is_err());
        assert!(RuntimeConfig::parse(
            r#"{"DataWriter":[{"filename":"a.csv","type":"HTML"}]}"#
        )
        .is_err());
        let err = RuntimeConfig::parse(
            r#"{"DataWriter":[{"filename":"a.csv","type":"CSV"}],"extra":1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("extra"));
        let ok =
            RuntimeConfig::parse(r#"{"DataWriter":[{"filename":"a.csv","type":"CSV"}]}"#).unwrap();
        assert!(ok.environment_variables.is_empty());
        assert_eq!(ok.end_time, None);
    }
}

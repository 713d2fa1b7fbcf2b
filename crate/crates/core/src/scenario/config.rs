use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ScenarioError;
use crate::components::DeviceCondition;
use crate::network::{EveMode, ReferenceSchedule};
use crate::protocols::{ControllerConfig, DecoyConfig};

/// A complete scenario: network, protocol and run settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub run: RunSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSettings>,
    #[serde(default)]
    pub modules: BTreeMap<String, ModuleSpec>,
    #[serde(default)]
    pub connections: Vec<ConnectionSpec>,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    /// Number of slots to run, references included. Exclusive with
    /// `duration_s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulses: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Write the per-event `trace.csv`.
    #[serde(default)]
    pub trace: bool,
}

fn default_sample_fraction() -> f64 {
    0.1
}

fn default_abort_threshold() -> f64 {
    0.11
}

fn default_announce_batch() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QberSettings {
    #[serde(default = "default_sample_fraction")]
    pub sample_fraction: f64,
    #[serde(default = "default_abort_threshold")]
    pub abort_threshold: f64,
    /// Window length of `qber_timeseries.csv`; no series when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_s: Option<f64>,
}

impl Default for QberSettings {
    fn default() -> Self {
        QberSettings {
            sample_fraction: default_sample_fraction(),
            abort_threshold: default_abort_threshold(),
            window_s: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EveSettings {
    #[serde(default)]
    pub mode: EveMode,
}

/// Channel model used by the decoy test when the analytic calibration is not
/// wanted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    pub eta_sys: f64,
    pub y0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSettings {
    pub slot_period_s: f64,
    pub signal_mpn: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoy: Option<DecoyConfig>,
    #[serde(default)]
    pub qber: QberSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default)]
    pub eve: EveSettings,
    #[serde(default = "default_announce_batch")]
    pub announce_batch: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSettings>,
}

/// One module instance. Kind-specific properties stay as raw JSON until
/// validation so every problem can be reported with its path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "is_working")]
    pub condition: DeviceCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degradation_factor: Option<f64>,
    #[serde(flatten)]
    pub props: Map<String, Value>,
}

fn is_working(c: &DeviceCondition) -> bool {
    *c == DeviceCondition::Working
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub from: String,
    pub to: String,
    /// `{"type": "fiber" | "free_space" | "classical", ...}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Map<String, Value>>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Parses `text`, applying `key=value` overrides before the typed parse.
    pub fn from_json_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self, ScenarioError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut value, k, v)?;
        }
        serde_json::from_value(value).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Slots to simulate.
    pub fn pulses(&self) -> u64 {
        match (self.run.pulses, self.run.duration_s, &self.protocol) {
            (Some(n), _, _) => n,
            (None, Some(d), Some(p)) if p.slot_period_s > 0.0 => (d / p.slot_period_s).floor() as u64,
            _ => 0,
        }
    }
}

/// Reads a config file and applies overrides.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::from_json_with_overrides(&text, overrides)
}

/// Splits `key=value`.
pub fn parse_override(text: &str) -> Result<(String, String), ScenarioError> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_owned(), v.to_owned())),
        _ => Err(ScenarioError::Override {
            key: text.to_owned(),
            message: "expected key=value".into(),
        }),
    }
}

/// Sets a dotted key in a JSON tree. Object keys may themselves contain dots
/// (module paths do), so at each level the longest matching key wins. Array
/// elements are addressed by index. The value is read as JSON when it parses,
/// else taken as a string.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<(), ScenarioError> {
    let err = |message: String| ScenarioError::Override {
        key: key.to_owned(),
        message,
    };
    let new_value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let segs: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    let mut i = 0;
    while i < segs.len() {
        match cur {
            Value::Object(map) => {
                let found = (i + 1..=segs.len()).rev().find(|&j| map.contains_key(&segs[i..j].join(".")));
                match found {
                    Some(j) => {
                        let k = segs[i..j].join(".");
                        if j == segs.len() {
                            map.insert(k, new_value);
                            return Ok(());
                        }
                        cur = map.get_mut(&k).expect("found");
                        i = j;
                    }
                    None if i + 1 == segs.len() => {
                        map.insert(segs[i].to_owned(), new_value);
                        return Ok(());
                    }
                    None => return Err(err(format!("no key `{}`", segs[i..].join(".")))),
                }
            }
            Value::Array(items) => {
                let idx: usize = segs[i].parse().map_err(|_| err(format!("`{}` is not an array index", segs[i])))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| err(format!("index {idx} out of range (length {len})")))?;
                if i + 1 == segs.len() {
                    *slot = new_value;
                    return Ok(());
                }
                cur = slot;
                i += 1;
            }
            _ => return Err(err(format!("`{}` is not an object", segs[..i].join(".")))),
        }
    }
    Err(err("empty key".into()))
}

//! Pipeline configuration: one TOML file with a table per stage, overlaid on
//! the library defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{io_error, CliError, Result};

/// Parsed config file. Unknown top-level tables are rejected so a typo in a
/// section name does not silently fall back to defaults.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    tables: serde_json::Map<String, Value>,
}

const SECTIONS: [&str; 8] = ["synth", "ingest", "mine", "model", "attribute", "align", "eval", "report"];

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(ConfigFile::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let Value::Object(tables) = serde_json::to_value(table).expect("toml converts to json") else {
            unreachable!("a toml table is an object")
        };
        for (k, v) in &tables {
            if !SECTIONS.contains(&k.as_str()) {
                return Err(CliError::validation(format!(
                    "{}: unknown section [{k}] (expected one of {})",
                    path.display(),
                    SECTIONS.join(", ")
                )));
            }
            if !v.is_object() {
                return Err(CliError::validation(format!("{}: `{k}` must be a table", path.display())));
            }
        }
        Ok(ConfigFile { tables })
    }

    /// Overlays section `name` onto `base`. Keys must already exist in the
    /// serialized defaults; nested tables merge key by key.
    pub fn section<T: Serialize + DeserializeOwned>(&self, name: &str, base: T) -> Result<T> {
        let Some(table) = self.tables.get(name) else { return Ok(base) };
        let mut value = serde_json::to_value(&base).expect("config serializes");
        merge(&mut value, table, name)?;
        serde_json::from_value(value).map_err(|e| CliError::validation(format!("[{name}]: {e}")))
    }
}

fn merge(dst: &mut Value, src: &Value, path: &str) -> Result<()> {
    let (Value::Object(d), Value::Object(s)) = (&mut *dst, src) else {
        *dst = src.clone();
        return Ok(());
    };
    for (k, v) in s {
        let key = format!("{path}.{k}");
        match d.get_mut(k) {
            Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &key)?,
            Some(slot) => *slot = v.clone(),
            None => return Err(CliError::validation(format!("unknown config key `{key}`"))),
        }
    }
    Ok(())
}

/// Settings of the `ingest` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// File with one article id per line; the built-in registry when absent.
    pub articles: Option<String>,
    /// JSONL overlay of gold rationales.
    pub rationales: Option<String>,
    pub train_frac: f64,
    pub dev_frac: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { articles: None, rationales: None, train_frac: 0.6, dev_frac: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeConfig {
    pub ig_steps: usize,
    pub split: SplitName,
    /// Article index to attribute for multi-label tasks; the top-scoring
    /// output when absent.
    pub output: Option<usize>,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        AttributeConfig { ig_steps: deconf::attribution::DEFAULT_IG_STEPS, split: SplitName::Test, output: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    /// Monte-Carlo trials per document for the random-ranking row.
    pub random_trials: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig { random_trials: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub split: SplitName,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { split: SplitName::Test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Variant the others are tested against.
    pub reference: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { reference: "baseline".into() }
    }
}

/// Hash of the effective (defaults + overlay) settings of a stage.
pub fn config_hash<T: Serialize>(effective: &T) -> String {
    deconf::hashing::sha256_hex(serde_json::to_string(effective).expect("config serializes").as_bytes())
}

//! Output plumbing: every JSON artifact carries a `meta` object with the
//! tool version, the resolved configuration and the seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use tinygroups::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Meta {
    pub command: &'static str,
    pub config: Value,
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(command: &'static str, config: Value, seed: Option<u64>) -> Self {
        Meta { command, config, seed }
    }

    pub fn to_value(&self) -> Value {
        json!({
            "tool": "tinygroups",
            "version": VERSION,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
        })
    }
}

/// Adds `meta` to an object result, or wraps any other value as
/// `{"meta": ..., "result": ...}`. Readers ignore the extra key, so an
/// emitted instance or model file can be read back as input.
pub fn with_meta(result: &impl Serialize, meta: &Meta) -> Result<Value> {
    let value = serde_json::to_value(result)?;
    Ok(match value {
        Value::Object(mut map) => {
            map.insert("meta".into(), meta.to_value());
            Value::Object(map)
        }
        other => {
            let mut map = Map::new();
            map.insert("meta".into(), meta.to_value());
            map.insert("result".into(), other);
            Value::Object(map)
        }
    })
}

pub fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn emit_json(out: Option<&Path>, result: &impl Serialize, meta: &Meta) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&with_meta(result, meta)?)?;
    text.push('\n');
    write_text(out, &text)
}

/// CSV goes to `out` (or stdout); its metadata goes next to it in
/// `<out>.meta.json` since CSV has no place for it.
pub fn emit_csv(out: Option<&Path>, csv: &str, meta: &Meta) -> Result<()> {
    write_text(out, csv)?;
    if let Some(path) = out {
        let mut text = serde_json::to_string_pretty(&json!({ "meta": meta.to_value() }))?;
        text.push('\n');
        fs::write(with_suffix(path, ".meta.json"), text)?;
    }
    Ok(())
}

/// `path` with `suffix` appended to the full file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn read_json(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))
}

//! JSON report envelope. Everything except `timestamp` is a function of the
//! inputs, the seed and the thread count.

use conekahler::error::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a data file referenced by the configuration.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Where the report and its sidecars go. Without an output path the report
/// is printed and no sidecars are written.
pub struct Output {
    pub path: Option<PathBuf>,
    pub sidecars: Vec<String>,
}

impl Output {
    pub fn new(path: Option<PathBuf>) -> Output {
        Output { path, sidecars: vec![] }
    }

    /// Writes `<stem>.<name>.csv` next to the report using `write`.
    pub fn sidecar(&mut self, name: &str, write: impl FnOnce(std::fs::File) -> Result<()>) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let file_name = format!("{stem}.{name}.csv");
        let target = path.with_file_name(&file_name);
        let file = std::fs::File::create(&target).map_err(|e| Error::InvalidConfig(format!("{}: {e}", target.display())))?;
        write(file)?;
        self.sidecars.push(file_name);
        Ok(())
    }
}

pub struct Envelope<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Value,
}

impl Envelope<'_> {
    pub fn render(&self, outcome: &std::result::Result<Value, Error>, sidecars: &[String]) -> String {
        let inputs_text = serde_json::to_string(&self.inputs).unwrap_or_default();
        let (status, error, result) = match outcome {
            Ok(v) => ("ok", Value::Null, v.clone()),
            Err(e) => (if e.exit_code() == 3 { "invalid_config" } else { "numerical_failure" }, json!(e.to_string()), Value::Null),
        };
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let report = json!({
            "tool": "conekahler",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "timestamp": timestamp,
            "config_hash": sha256_hex(inputs_text.as_bytes()),
            "seed": self.seed,
            "threads": self.threads,
            "inputs": self.inputs,
            "status": status,
            "error": error,
            "result": result,
            "sidecars": sidecars,
        });
        let mut text = serde_json::to_string_pretty(&report).unwrap_or_default();
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn renders_failures_with_status() {
        let env = Envelope { command: "solve", seed: 1, threads: 2, inputs: json!({"a": 1}) };
        let text = env.render(&Err(Error::NumericalFailure("boom".into())), &[]);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["status"], "numerical_failure");
        assert_eq!(v["result"], Value::Null);
        let again: Value = serde_json::from_str(&env.render(&Err(Error::InvalidConfig("x".into())), &[])).unwrap();
        assert_eq!(again["status"], "invalid_config");
        assert_eq!(v["config_hash"], again["config_hash"]);
    }
}

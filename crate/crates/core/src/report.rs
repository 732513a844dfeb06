//! Machine-readable run reports: one canonical JSON document per CLI
//! invocation, with verdicts, certificates and fixture hashes. Timing data
//! is carried in a separate field and is the only non-deterministic part.

use crate::fixtures::to_canonical_string;
use serde_json::{Map, Value};

pub const REPORT_SCHEMA: &str = "profinitek-report/1";

#[derive(Debug, Clone)]
pub struct RunReport {
    command: String,
    parameters: Map<String, Value>,
    verdicts: Map<String, Value>,
    certificates: Map<String, Value>,
    fixture_hashes: Map<String, Value>,
    timings_ms: Map<String, Value>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            command: command.to_string(),
            parameters: Map::new(),
            verdicts: Map::new(),
            certificates: Map::new(),
            fixture_hashes: Map::new(),
            timings_ms: Map::new(),
        }
    }

    pub fn parameter(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.parameters.insert(key.into(), value.into());
        self
    }

    pub fn verdict(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.verdicts.insert(key.into(), value.into());
        self
    }

    pub fn certificate(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.certificates.insert(key.into(), value.into());
        self
    }

    pub fn fixture_hash(&mut self, key: &str, sha256_hex: String) -> &mut Self {
        self.fixture_hashes.insert(key.into(), Value::from(sha256_hex));
        self
    }

    pub fn timing(&mut self, key: &str, millis: f64) -> &mut Self {
        // keep a stable decimal rendering
        self.timings_ms
            .insert(key.into(), Value::from(format!("{millis:.3}")));
        self
    }

    pub fn verdicts(&self) -> &Map<String, Value> {
        &self.verdicts
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("schema".into(), Value::from(REPORT_SCHEMA));
        obj.insert("command".into(), Value::from(self.command.clone()));
        obj.insert("parameters".into(), Value::Object(self.parameters.clone()));
        obj.insert("verdicts".into(), Value::Object(self.verdicts.clone()));
        obj.insert("certificates".into(), Value::Object(self.certificates.clone()));
        obj.insert("fixture_hashes".into(), Value::Object(self.fixture_hashes.clone()));
        obj.insert("timings_ms".into(), Value::Object(self.timings_ms.clone()));
        Value::Object(obj)
    }

    pub fn write(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, to_canonical_string(&self.to_value()))
    }

    /// Tab-separated verdict summary, one line per verdict key.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.verdicts {
            let rendered = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{}\t{}\t{}\n", self.command, k, rendered));
        }
        out
    }
}

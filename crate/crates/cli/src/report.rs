//! Report envelope shared by all commands.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use coordlab::probability::{ConditionalPmf, JointPmf, ProbabilityTable};

use crate::instance::InstanceFile;

pub const TOOL: &str = "coordlab";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the compact JSON form of `instance`.
    pub instance_digest: String,
    /// The instance as run, after any seed override.
    pub instance: InstanceFile,
    pub seed: u64,
    pub options: Value,
    pub result: Value,
}

pub fn digest(instance: &InstanceFile) -> String {
    let canonical = serde_json::to_string(instance).expect("instance serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

impl Report {
    pub fn new(command: &str, instance: &InstanceFile, options: Value, result: Value) -> Self {
        Report {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            instance_digest: digest(instance),
            instance: instance.clone(),
            seed: instance.seed,
            options,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

pub fn joint_json(j: &JointPmf) -> Value {
    json!({
        "axes": j.axes().iter().map(|a| a.symbols().to_vec()).collect::<Vec<_>>(),
        "probs": j.probs(),
    })
}

/// A conditional `P(a, b | x)` as a nested `[x][a][b]` table.
pub fn conditional_json(c: &ConditionalPmf) -> Value {
    let width = c.to_axes().last().map_or(1, |a| a.size());
    let nested: Vec<Vec<Vec<f64>>> = c
        .rows()
        .iter()
        .map(|row| row.chunks(width).map(<[f64]>::to_vec).collect())
        .collect();
    json!(nested)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

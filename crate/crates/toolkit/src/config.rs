use std::path::{Path, PathBuf};

use plane2depth::objectives::{LossWeights, SuperviseLayers};
use plane2depth::planenet::NetConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ToolError};

/// Seed fallback when neither the config nor the command line sets one.
pub const SEED_ENV: &str = "PLANE2DEPTH_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Decay the rate linearly to zero over the iteration budget.
    pub linear_decay: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            linear_decay: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    pub width: usize,
    pub height: usize,
    pub model: NetConfig,
    pub supervise_layers: SuperviseLayers,
    pub loss: LossWeights,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: Option<u64>,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: u64,
    /// Randomly mirror training samples left to right.
    pub flip_augment: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data/train"),
            output_dir: PathBuf::from("runs/default"),
            width: 64,
            height: 64,
            model: NetConfig::default(),
            supervise_layers: SuperviseLayers::All,
            loss: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: 8,
            iterations: 5000,
            seed: None,
            checkpoint_every: 1000,
            flip_augment: true,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(ToolError::usage(format!("config field `{name}` must be positive and finite, got {v}")));
    }
    Ok(())
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(ToolError::usage(format!("config field `{name}` must be non-negative and finite, got {v}")));
    }
    Ok(())
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v < 1.0) {
        return Err(ToolError::usage(format!("config field `{name}` must lie in [0, 1), got {v}")));
    }
    Ok(())
}

impl RunConfig {
    /// Reads TOML or JSON by file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
            _ => {
                return Err(ToolError::usage(format!(
                    "{}: config must end in .toml or .json",
                    path.display()
                )))
            }
        };
        parsed.map_err(|e| ToolError::usage(format!("{}: {}", path.display(), e.replace('\n', " "))))
    }

    /// The configured seed, else `PLANE2DEPTH_SEED`, else 0.
    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        seed_from_env()
    }

    pub fn validate(&self) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| ToolError::usage(format!("config field `model`: {e}")))?;
        if self.width == 0 || self.height == 0 {
            return Err(ToolError::usage("config fields `width` and `height` must be positive"));
        }
        self.model
            .check_input(self.width, self.height)
            .map_err(|e| ToolError::usage(format!("config fields `width`/`height`: {e}")))?;
        non_negative("loss.lambda", self.loss.lambda)?;
        if self.loss.lambda > 1.0 {
            return Err(ToolError::usage(format!(
                "config field `loss.lambda` must lie in [0, 1], got {}",
                self.loss.lambda
            )));
        }
        non_negative("loss.alpha", self.loss.alpha)?;
        non_negative("loss.beta", self.loss.beta)?;
        non_negative("loss.gamma", self.loss.gamma)?;
        if self.loss.alpha + self.loss.beta + self.loss.gamma == 0.0 {
            return Err(ToolError::usage("config fields `loss.alpha`, `loss.beta`, `loss.gamma` cannot all be zero"));
        }
        positive("optimizer.learning_rate", self.optimizer.learning_rate)?;
        unit_open("optimizer.beta1", self.optimizer.beta1)?;
        unit_open("optimizer.beta2", self.optimizer.beta2)?;
        if self.batch_size == 0 {
            return Err(ToolError::usage("config field `batch_size` must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(ToolError::usage("config field `iterations` must be at least 1"));
        }
        Ok(())
    }
}

pub fn seed_from_env() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| ToolError::usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

/// Field-by-field differences between two serializable values, as
/// `path: left != right` lines.
pub fn diff_fields<T: Serialize>(left: &T, right: &T) -> Vec<String> {
    fn walk(prefix: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
        match (a, b) {
            (serde_json::Value::Object(x), serde_json::Value::Object(y)) => {
                let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
                keys.sort();
                keys.dedup();
                for k in keys {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    let null = serde_json::Value::Null;
                    walk(&p, x.get(k).unwrap_or(&null), y.get(k).unwrap_or(&null), out);
                }
            }
            _ if a != b => out.push(format!("{prefix}: {a} != {b}")),
            _ => {}
        }
    }
    let a = serde_json::to_value(left).unwrap_or_default();
    let b = serde_json::to_value(right).unwrap_or_default();
    let mut out = Vec::new();
    walk("", &a, &b, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut c = RunConfig::default();
        c.optimizer.learning_rate = -1.0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("optimizer.learning_rate"), "{msg}");

        let mut c = RunConfig::default();
        c.width = 48;
        let e = c.validate().unwrap_err();
        assert!(e.is_usage() && e.to_string().contains("width"));

        let mut c = RunConfig::default();
        c.model.num_queries = 0;
        assert!(c.validate().unwrap_err().to_string().contains("num_queries"));
    }

    #[test]
    fn toml_and_json_parse_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "iterations = 10\n[model]\nnum_queries = 8\n").unwrap();
        let c = RunConfig::load(&t).unwrap();
        assert_eq!((c.iterations, c.model.num_queries, c.batch_size), (10, 8, 8));
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"batch_size": 2, "loss": {"lambda": 0.15, "alpha": 10, "beta": 0, "gamma": 0}}"#).unwrap();
        let c = RunConfig::load(&j).unwrap();
        assert_eq!((c.batch_size, c.loss.beta), (2, 0.0));
        std::fs::write(&t, "bogus_field = 1\n").unwrap();
        assert!(RunConfig::load(&t).unwrap_err().is_usage());
    }

    #[test]
    fn diff_lists_changed_fields() {
        let a = NetConfig::default();
        let b = NetConfig {
            num_queries: 32,
            af_modulators: false,
            ..a.clone()
        };
        let d = diff_fields(&a, &b);
        assert_eq!(d, vec!["af_modulators: true != false", "num_queries: 64 != 32"]);
        assert!(diff_fields(&a, &a).is_empty());
    }
}

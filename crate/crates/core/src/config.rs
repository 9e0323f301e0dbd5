//! Run configuration. On disk it is a flat JSON object whose keys are dotted
//! paths (`"loss.lambda_tv": 0.001`); nested objects are accepted too.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dataio::SynthConfig;
use crate::encoding::EncodingConfig;
use crate::field_mlp::MlpConfig;
use crate::losses::LossConfig;
use crate::occupancy::GridConfig;
use crate::plane_field::PlaneConfig;
use crate::renderer::RenderConfig;
use crate::sampler::SamplerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Parse(serde_json::Error),
    #[error("config root must be a JSON object")]
    NotAnObject,
    #[error("key `{0}` conflicts with another key")]
    Conflict(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_rays: usize,
    pub lr_planes: f64,
    pub lr_mlp: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning rates decay along a cosine to this fraction of their start value.
    pub final_lr_fraction: f64,
    pub seed: u64,
    pub log_every: usize,
    /// Held-out PSNR is measured at log rows that are multiples of this (0 = never).
    pub eval_every: usize,
    /// Extra checkpoints every this many iterations (0 = final only).
    pub checkpoint_every: usize,
    /// Train on even frames and hold out odd ones; otherwise use all frames.
    pub alternate_split: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_rays: 1024,
            lr_planes: 1e-2,
            lr_mlp: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            final_lr_fraction: 0.1,
            seed: 0,
            log_every: 100,
            eval_every: 100,
            checkpoint_every: 0,
            alternate_split: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub planes: PlaneConfig,
    pub encoding: EncodingConfig,
    pub mlp: MlpConfig,
    pub render: RenderConfig,
    pub grid: GridConfig,
    pub sampler: SamplerConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

fn insert_path(root: &mut Map<String, Value>, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut parts = key.split('.').peekable();
    let mut node = root;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            match (node.get_mut(part), value) {
                (Some(Value::Object(existing)), Value::Object(incoming)) => {
                    for (k, v) in incoming {
                        insert_path(existing, &k, v)?;
                    }
                }
                (Some(_), _) => return Err(ConfigError::Conflict(key.to_string())),
                (None, v) => {
                    node.insert(part.to_string(), v);
                }
            }
            return Ok(());
        }
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        node = match entry {
            Value::Object(m) => m,
            _ => return Err(ConfigError::Conflict(key.to_string())),
        };
    }
    Ok(())
}

/// Expands dotted keys into nested objects.
pub fn unflatten(flat: &Map<String, Value>) -> Result<Value, ConfigError> {
    let mut root = Map::new();
    for (k, v) in flat {
        let v = match v {
            Value::Object(m) => unflatten(m)?,
            other => other.clone(),
        };
        insert_path(&mut root, k, v)?;
    }
    Ok(Value::Object(root))
}

/// Collapses nested objects into dotted keys; arrays and scalars are leaves.
pub fn flatten(v: &Value) -> Map<String, Value> {
    fn walk(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, child) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, child, out);
                }
            }
            other => {
                out.insert(prefix.to_string(), other.clone());
            }
        }
    }
    let mut out = Map::new();
    walk("", v, &mut out);
    out
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let v: Value = serde_json::from_str(text).map_err(ConfigError::Parse)?;
        let Value::Object(m) = v else {
            return Err(ConfigError::NotAnObject);
        };
        let nested = unflatten(&m)?;
        let cfg: Config = serde_json::from_value(nested).map_err(ConfigError::Parse)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully resolved flat key/value dump, sorted by key.
    pub fn to_flat_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string_pretty(&Value::Object(flatten(&v))).expect("json")
    }

    /// Overrides one dotted key with a JSON value.
    pub fn set(&mut self, key: &str, value: Value) -> Result<(), ConfigError> {
        let v = serde_json::to_value(&*self).expect("config serializes");
        let mut flat = flatten(&v);
        if !flat.contains_key(key) && !flat.keys().any(|k| k.starts_with(&format!("{key}."))) {
            return Err(ConfigError::Invalid(format!("unknown key `{key}`")));
        }
        flat.retain(|k, _| k != key && !k.starts_with(&format!("{key}.")));
        flat.insert(key.to_string(), value);
        let nested = unflatten(&flat)?;
        let cfg: Config = serde_json::from_value(nested).map_err(ConfigError::Parse)?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.train.iterations < 1 {
            return bad("train.iterations must be >= 1".into());
        }
        if self.train.batch_rays < 1 {
            return bad("train.batch_rays must be >= 1".into());
        }
        if self.render.steps < 1 || self.render.eval_steps < 1 {
            return bad("render steps must be >= 1".into());
        }
        if !(self.loss.huber_delta > 0.0) {
            return bad("loss.huber_delta must be positive".into());
        }
        let l = &self.loss;
        if [l.lambda_d, l.lambda_tv, l.lambda_ts, l.lambda_de].iter().any(|v| !(*v >= 0.0)) {
            return bad("loss weights must be non-negative".into());
        }
        if !(self.grid.ema > 0.0 && self.grid.ema <= 1.0) {
            return bad("grid.ema must lie in (0, 1]".into());
        }
        if self.grid.dims.iter().any(|d| *d == 0) {
            return bad("grid.dims must be positive".into());
        }
        self.encoding.validate().map_err(ConfigError::Invalid)?;
        self.sampler
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.planes.resolutions.is_empty() || self.planes.resolutions.iter().any(|r| *r < 2) {
            return bad("planes.resolutions must be non-empty with entries >= 2".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::DepthMode;

    #[test]
    fn defaults_round_trip_through_flat_json() {
        let c = Config::default();
        let text = c.to_flat_json();
        assert!(text.contains("\"loss.lambda_ts\": 0.05"));
        assert_eq!(Config::from_json_str(&text).unwrap(), c);
    }

    #[test]
    fn dotted_and_nested_keys_mix() {
        let c = Config::from_json_str(
            r#"{"loss.depth_mode": "monocular", "train": {"iterations": 7}, "planes.resolutions": [4, 8]}"#,
        )
        .unwrap();
        assert_eq!(c.loss.depth_mode, DepthMode::Monocular);
        assert_eq!(c.train.iterations, 7);
        assert_eq!(c.planes.resolutions, vec![4, 8]);
        assert_eq!(c.loss.lambda_tv, 0.001);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_json_str(r#"{"loss.lambda_xx": 1}"#).is_err());
        assert!(Config::from_json_str(r#"{"train.iterations": 0}"#).is_err());
    }

    #[test]
    fn set_overrides_a_single_key() {
        let mut c = Config::default();
        c.set("loss.lambda_tv", serde_json::json!(0.01)).unwrap();
        assert_eq!(c.loss.lambda_tv, 0.01);
        assert!(c.set("loss.nope", serde_json::json!(1)).is_err());
    }
}

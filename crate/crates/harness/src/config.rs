//! JSON run configurations. Every field has a default, so an absent config
//! file means "defaults"; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use quadenhance_core::models::{Activation, BaselineTag, MlpConfig};
use quadenhance_core::ShiftSet;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

pub fn load<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
}

fn shifts(values: &[i64], allow_square_terms: bool) -> Result<ShiftSet> {
    let set = if allow_square_terms {
        ShiftSet::with_square_terms(values.iter().copied())
    } else {
        ShiftSet::new(values.iter().copied())
    };
    set.map_err(|e| HarnessError::config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub precision: Precision,
    /// Random instances per check.
    pub instances: usize,
    /// Defaults to 1e-6 in double and 1e-2 in single precision.
    pub step: Option<f64>,
    /// Defaults to 1e-4 in double and 1e-2 in single precision.
    pub tol: Option<f64>,
    /// Test fixture: deliberately break this primitive's backward rule.
    pub corrupt_rule: Option<String>,
    pub out: Option<PathBuf>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F64,
            instances: 100,
            step: None,
            tol: None,
            corrupt_rule: None,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub seed: u64,
    pub precision: Precision,
    pub instances: u64,
    /// `n` and `d` are drawn from `[1, max_dim]` unless pinned.
    pub max_dim: usize,
    /// Shifts each random instance may draw from.
    pub shift_pool: Vec<i64>,
    /// Shift sets forced onto every tenth instance, in rotation.
    pub include_shifts: Vec<Vec<i64>>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    /// Pins `K` for every instance.
    pub shifts: Option<Vec<i64>>,
    /// Defaults to 1e-12 in double and 1e-6 in single precision.
    pub tol: Option<f64>,
    /// Run only the instance with this seed.
    pub replay: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F64,
            instances: 1000,
            max_dim: 32,
            shift_pool: vec![-3, -2, -1, 1, 2, 3],
            include_shifts: vec![vec![-2, -1, 1, 2]],
            n: None,
            d: None,
            shifts: None,
            tol: None,
            replay: None,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MontecarloConfig {
    pub seed: u64,
    pub samples: u64,
    pub thresholds: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl Default for MontecarloConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 10_000_000,
            thresholds: vec![4.0, 8.0, 16.0],
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnhancerMask {
    /// `"all"`, `"none"` or `"exempt-final"`.
    Named(String),
    PerLayer(Vec<bool>),
}

impl Default for EnhancerMask {
    fn default() -> Self {
        EnhancerMask::Named("all".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub activation: String,
    pub enhancer: EnhancerMask,
    pub shifts: Vec<i64>,
    pub allow_square_terms: bool,
    /// `"quadranet"` or `"swiglu"` replaces every layer.
    pub baseline: Option<String>,
    pub init_gain: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            activation: "gelu".into(),
            enhancer: EnhancerMask::default(),
            shifts: vec![1],
            allow_square_terms: false,
            baseline: None,
            init_gain: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn to_mlp(&self, n_in: usize, n_out: usize, seed: u64) -> Result<MlpConfig> {
        let mut dims = vec![n_in];
        dims.extend(&self.hidden);
        dims.push(n_out);
        let activation = Activation::parse(&self.activation).ok_or_else(|| {
            HarnessError::config(format!("unknown activation {:?}", self.activation))
        })?;
        let mut cfg = MlpConfig::new(dims)
            .with_activation(activation)
            .with_shifts(shifts(&self.shifts, self.allow_square_terms)?)
            .with_seed(seed);
        cfg.init_gain = self.init_gain;
        match &self.enhancer {
            EnhancerMask::Named(name) => match name.as_str() {
                "all" => {}
                "none" => cfg.enhancer.iter_mut().for_each(|e| *e = false),
                "exempt-final" => cfg = cfg.exempt_final(),
                other => return Err(HarnessError::config(format!(
                    "enhancer must be \"all\", \"none\", \"exempt-final\" or a list, got {other:?}"
                ))),
            },
            EnhancerMask::PerLayer(mask) => cfg.enhancer = mask.clone(),
        }
        if let Some(tag) = &self.baseline {
            let tag = BaselineTag::parse(tag)
                .ok_or_else(|| HarnessError::config(format!("unknown baseline {tag:?}")))?;
            cfg = cfg.with_baseline(tag);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    /// `"dim192"` (the default when neither a preset nor dims are given) or
    /// `"vit-m-like"`.
    pub preset: Option<String>,
    /// Shift count for presets.
    pub k: u64,
    /// Full layer widths `[n_0, ..., n_L]` of a model to count instead.
    pub dims: Option<Vec<usize>>,
    pub model: ModelConfig,
    pub out: Option<PathBuf>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            preset: None,
            k: 1,
            dims: None,
            model: ModelConfig::default(),
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Xor {},
    Quadratic {
        n: usize,
        d: usize,
        #[serde(default = "default_shifts")]
        shifts: Vec<i64>,
        samples: usize,
        /// Defaults to the run seed.
        seed: Option<u64>,
    },
    Blobs {
        classes: usize,
        samples: usize,
        noise: f64,
        seed: Option<u64>,
    },
    Circles {
        classes: usize,
        samples: usize,
        noise: f64,
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        /// Column index, column name, or absent for the last column.
        label: Option<serde_json::Value>,
        #[serde(default = "default_true")]
        header: bool,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

fn default_shifts() -> Vec<i64> {
    vec![1]
}

fn default_true() -> bool {
    true
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Xor {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// `"sgd"` or `"adam"`.
    pub kind: String,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: "adam".into(),
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Thresholds that turn a training run into a pass/fail check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Expectation {
    pub min_train_accuracy: Option<f64>,
    pub max_train_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub precision: Precision,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    /// `None` trains on the full training split at once.
    pub batch_size: Option<usize>,
    pub valid_fraction: f64,
    pub shuffle: bool,
    /// Start from a checkpoint instead of the seeded initialization.
    pub init_from: Option<PathBuf>,
    /// Zero-fill enhancer coefficients missing from `init_from`.
    pub allow_missing_lambda: bool,
    pub expect: Option<Expectation>,
    pub out: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F64,
            dataset: DatasetConfig::Xor {},
            model: ModelConfig {
                activation: "identity".into(),
                ..ModelConfig::default()
            },
            optimizer: OptimizerConfig {
                kind: "sgd".into(),
                lr: 0.5,
                ..OptimizerConfig::default()
            },
            epochs: 2000,
            batch_size: None,
            valid_fraction: 0.0,
            shuffle: true,
            init_from: None,
            allow_missing_lambda: false,
            expect: None,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub seed: u64,
    /// Training seeds per cell; the median is reported.
    pub seeds: u64,
    pub shift_sets: Vec<Vec<i64>>,
    /// Widths `n = d` of the target and of the trained layer.
    pub dims: Vec<usize>,
    /// Shifts of the hidden layer that generates the targets.
    pub target_shifts: Vec<i64>,
    pub samples: usize,
    pub valid_fraction: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub out: Option<PathBuf>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 3,
            shift_sets: vec![vec![], vec![1], vec![-1, 1], vec![-2, -1, 1, 2]],
            dims: vec![8, 16],
            target_shifts: vec![1],
            samples: 256,
            valid_fraction: 0.25,
            epochs: 1500,
            batch_size: None,
            optimizer: OptimizerConfig {
                lr: 1e-2,
                ..OptimizerConfig::default()
            },
            out: None,
        }
    }
}

pub(crate) fn shift_set(values: &[i64]) -> Result<ShiftSet> {
    shifts(values, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"epochs": 3, "epoch": 4}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
        let err = serde_json::from_str::<TrainConfig>(r#"{"dataset": {"kind": "xor", "n": 2}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
        let err = serde_json::from_str::<TrainConfig>(r#"{"model": {"hiden": [3]}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn partial_configs_fill_defaults() {
        let cfg: OracleConfig = serde_json::from_str(r#"{"instances": 5}"#).unwrap();
        assert_eq!(cfg.instances, 5);
        assert_eq!(cfg.max_dim, 32);
        let cfg: TrainConfig = serde_json::from_str(
            r#"{"dataset": {"kind": "quadratic", "n": 4, "d": 4, "samples": 32}}"#,
        )
        .unwrap();
        assert!(
            matches!(cfg.dataset, DatasetConfig::Quadratic { ref shifts, .. } if shifts == &[1])
        );
    }

    #[test]
    fn model_config_builds_masks() {
        let mut m = ModelConfig {
            hidden: vec![4],
            ..ModelConfig::default()
        };
        assert_eq!(m.to_mlp(2, 3, 0).unwrap().enhancer, vec![true, true]);
        m.enhancer = EnhancerMask::Named("exempt-final".into());
        assert_eq!(m.to_mlp(2, 3, 0).unwrap().enhancer, vec![true, false]);
        m.enhancer = EnhancerMask::PerLayer(vec![false]);
        assert!(m.to_mlp(2, 3, 0).is_err());
        m.enhancer = EnhancerMask::Named("some".into());
        assert!(m.to_mlp(2, 3, 0).is_err());
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureConfig;
use crate::error::{Error, Result};
use crate::nn::model::{Activation, ModelSpec};
use crate::nn::train::TrainConfig;
use crate::pruning::{check_fractions, default_fractions, AblationKind, Method, SynflowConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mlp,
    Lenet,
}

impl std::str::FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mlp" => Ok(Arch::Mlp),
            "lenet" | "lenet-lite" => Ok(Arch::Lenet),
            _ => Err(format!("unknown architecture '{s}'")),
        }
    }
}

/// Training objective: plain cross-entropy or cross-entropy with L2 decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ce,
    Wd,
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ce" => Ok(Scheme::Ce),
            "wd" => Ok(Scheme::Wd),
            _ => Err(format!("unknown scheme '{s}'")),
        }
    }
}

/// Which curvature orders a sweep evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderChoice {
    PositiveFirst,
    NegativeFirst,
    Both,
}

impl std::str::FromStr for OrderChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "positive-first" => Ok(OrderChoice::PositiveFirst),
            "negative-first" => Ok(OrderChoice::NegativeFirst),
            "both" => Ok(OrderChoice::Both),
            _ => Err(format!("unknown order '{s}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    /// Directory holding the four IDX files (optionally gzipped).
    pub path: PathBuf,
    /// Examples moved from the tail of the training split into validation.
    pub validation_size: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            name: "mnist".into(),
            path: PathBuf::from("data/mnist-subset"),
            validation_size: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub activation: Activation,
    /// Hidden widths of the MLP.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Mlp,
            activation: Activation::Relu,
            hidden: vec![128, 64],
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub kind: Option<AblationKind>,
    /// Total calibration sizes for the calibration-size ablation.
    pub calib_sizes: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            kind: None,
            calib_sizes: crate::pruning::ablation::DEFAULT_CALIB_SIZES.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub scheme: Scheme,
    /// Decay used by the `wd` scheme.
    pub weight_decay: f64,
    pub train: TrainConfig,
    pub curvature: CurvatureConfig,
    /// Calibration examples per class (first k of each class).
    pub calibration_per_class: usize,
    pub fractions: Option<Vec<f64>>,
    pub methods: Vec<Method>,
    pub order: OrderChoice,
    pub synflow: SynflowConfig,
    pub ablation: AblationConfig,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/model.bin`.
    pub model_path: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            scheme: Scheme::Ce,
            weight_decay: 1e-4,
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            curvature: CurvatureConfig::default(),
            calibration_per_class: 10,
            fractions: None,
            methods: vec![Method::Curvature, Method::Magnitude, Method::Snip, Method::Synflow],
            order: OrderChoice::Both,
            synflow: SynflowConfig::default(),
            ablation: AblationConfig::default(),
            output_dir: PathBuf::from("out"),
            model_path: None,
            jobs: None,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.curvature.alpha;
        if !(a > 0.0 && a < 1.0) {
            return config_err(format!("alpha must lie in (0, 1), got {a}"));
        }
        if self.calibration_per_class == 0 {
            return config_err("calibration_per_class must be at least 1");
        }
        if let Some(f) = &self.fractions {
            check_fractions(f).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.methods.is_empty() {
            return config_err("no pruning methods selected");
        }
        if self.train.batch_size == 0 {
            return config_err("batch_size must be at least 1");
        }
        if self.jobs == Some(0) {
            return config_err("jobs must be at least 1");
        }
        if self.ablation.calib_sizes.contains(&0) {
            return config_err("calibration sizes must be at least 1");
        }
        Ok(())
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.fractions.clone().unwrap_or_else(default_fractions)
    }

    pub fn model_path(&self) -> PathBuf {
        self.model_path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("model.bin"))
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        if self.scheme == Scheme::Wd {
            t.weight_decay = self.weight_decay;
        }
        t
    }

    pub fn build_model(&self, input_dims: usize, classes: usize) -> Result<ModelSpec> {
        match self.model.arch {
            Arch::Mlp => {
                let mut widths = vec![input_dims];
                widths.extend(&self.model.hidden);
                widths.push(classes);
                ModelSpec::mlp(&widths, self.model.activation, self.model.seed)
            }
            Arch::Lenet => ModelSpec::lenet_lite(self.model.activation, self.model.seed),
        }
    }
}

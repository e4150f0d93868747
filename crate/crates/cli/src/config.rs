//! Run configuration: TOML file with sections, overridden by flags.

use std::path::{Path, PathBuf};

use fuelguard::analysis::ForestConfig;
use fuelguard::assist::{AssistTargets, Hyperparams, SearchSpace};
use fuelguard::dataset::{default_feature_selection, GeneratorProfile, DEFAULT_LITRES_PER_KVA_HOUR};
use fuelguard::detector::ScoreMode;
use fuelguard::neuralnet::TrainConfig;
use fuelguard::preprocess::SplitSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Feature columns fed to the model, in order.
    pub features: Vec<String>,
    pub paths: Paths,
    pub split: SplitSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub detect: DetectSection,
    pub assist: AssistSection,
    pub search: SearchSection,
    pub generator: GeneratorSection,
    pub analysis: AnalysisSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            features: default_feature_selection(),
            paths: Paths::default(),
            split: SplitSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            detect: DetectSection::default(),
            assist: AssistSection::default(),
            search: SearchSection::default(),
            generator: GeneratorSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scaler: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub validation_fraction_of_train: f64,
    pub shuffle: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train_fraction: s.train_fraction,
            validation_fraction_of_train: s.validation_fraction_of_train,
            shuffle: s.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_width: usize,
    pub latent_width: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden_width: 8,
            latent_width: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            lambda: t.lambda,
            batch_size: t.batch_size,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub score_mode: ScoreMode,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssistSection {
    pub min_accuracy: f64,
    pub min_recall: f64,
    pub max_rounds: usize,
}

impl Default for AssistSection {
    fn default() -> Self {
        let t = AssistTargets::default();
        Self {
            min_accuracy: t.min_accuracy,
            min_recall: t.min_recall,
            max_rounds: t.max_rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub learning_rate: [f64; 2],
    pub lambda: [f64; 2],
    pub latent_widths: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SearchSpace::default();
        Self {
            learning_rate: [s.learning_rate.0, s.learning_rate.1],
            lambda: [s.lambda.0, s.lambda.1],
            latent_widths: s.latent_widths,
            epochs: s.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub n: usize,
    pub anomaly_rate: f64,
    /// Capacities (kVA) of the generator models in the synthetic fleet.
    pub capacities_kva: Vec<f64>,
    /// Full-load draw per kVA, used for every capacity.
    pub litres_per_kva_hour: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self {
            n: 6000,
            anomaly_rate: 0.351,
            capacities_kva: vec![15.0, 20.0, 30.0, 45.0],
            litres_per_kva_hour: DEFAULT_LITRES_PER_KVA_HOUR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub trees: usize,
    pub max_depth: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let f = ForestConfig::default();
        Self {
            trees: f.trees,
            max_depth: f.max_depth,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Core(fuelguard::Error::FileNotFound(path.to_path_buf())),
            _ => CliError::Core(e.into()),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            validation_fraction_of_train: self.split.validation_fraction_of_train,
            seed: self.seed,
            shuffle: self.split.shuffle,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.train.lambda,
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams::from_config(&self.train_config(), self.model.hidden_width, self.model.latent_width)
    }

    pub fn targets(&self) -> AssistTargets {
        AssistTargets {
            min_accuracy: self.assist.min_accuracy,
            min_recall: self.assist.min_recall,
            max_rounds: self.assist.max_rounds,
        }
    }

    pub fn search_space(&self) -> SearchSpace {
        SearchSpace {
            learning_rate: (self.search.learning_rate[0], self.search.learning_rate[1]),
            lambda: (self.search.lambda[0], self.search.lambda[1]),
            latent_widths: self.search.latent_widths.clone(),
            epochs: self.search.epochs.clone(),
        }
    }

    pub fn profiles(&self) -> Result<Vec<GeneratorProfile>, CliError> {
        self.generator
            .capacities_kva
            .iter()
            .map(|&kva| GeneratorProfile::new(kva, kva * self.generator.litres_per_kva_hour).map_err(CliError::from))
            .collect()
    }

    pub fn forest(&self) -> ForestConfig {
        ForestConfig {
            trees: self.analysis.trees,
            max_depth: self.analysis.max_depth,
            seed: self.seed,
            features_per_split: None,
        }
    }
}

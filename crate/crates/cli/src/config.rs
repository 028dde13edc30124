use std::path::{Path, PathBuf};

use dphd::tuner::{DEFAULT_EPSILON_GRID, DEFAULT_SIGMA_B_GRID};
use dphd::PhaseMode;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable that overrides `run.out_dir`.
pub const OUT_DIR_ENV: &str = "DPHD_OUT_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub data: DataSection,
    pub encoder: EncoderSection,
    pub train: TrainSection,
    pub privacy: PrivacySection,
    pub tune: TuneSection,
    pub snr: SnrSection,
    pub attack: AttackSection,
    pub drop_dims: DropDimsSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Csv,
    Images,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// CSV file or image root; unused for synthetic data.
    pub path: Option<PathBuf>,
    pub normalize: bool,
    pub split: [f64; 3],
    pub synthetic: SyntheticSection,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            path: None,
            normalize: true,
            split: [0.6, 0.2, 0.2],
            synthetic: SyntheticSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub classes: usize,
    pub feature_dim: usize,
    pub delta_c: f64,
    pub sigma_sample: f64,
    pub per_class: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            classes: 4,
            feature_dim: 5,
            delta_c: 5.0,
            sigma_sample: 1.5,
            per_class: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub dim: usize,
    pub sigma_b: f64,
    pub phase_mode: PhaseMode,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            dim: 10_000,
            sigma_b: 0.23,
            phase_mode: PhaseMode::Uniform,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub retrain_epochs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySection {
    pub enabled: bool,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub passes: u32,
    pub noise_seed: u64,
}

impl Default for PrivacySection {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon: None,
            delta: 1e-4,
            passes: 1,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub sigma_b_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub threshold: f64,
    pub seeds: usize,
    pub dim: usize,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            sigma_b_grid: DEFAULT_SIGMA_B_GRID.to_vec(),
            epsilon_grid: DEFAULT_EPSILON_GRID.to_vec(),
            threshold: 0.9,
            seeds: 5,
            dim: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrSection {
    pub epsilon_grid: Vec<f64>,
    pub trials: usize,
    pub probe_epsilons: Vec<f64>,
}

impl Default for SnrSection {
    fn default() -> Self {
        Self {
            epsilon_grid: vec![0.5, 1.0, 2.0, 5.0],
            trials: 1000,
            probe_epsilons: vec![0.1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// Decoder groups; 0 uses every full group, `floor(D / J)`.
    pub groups: usize,
    /// Index (in the training split) of the sample the attacker targets.
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    Low,
    High,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropDimsSection {
    pub fractions: Vec<f64>,
    pub mode: ModeChoice,
    pub calibration_split: SplitName,
    pub groups: usize,
}

impl Default for DropDimsSection {
    fn default() -> Self {
        Self {
            fractions: vec![0.0, 0.2, 0.4, 0.6],
            mode: ModeChoice::Both,
            calibration_split: SplitName::Val,
            groups: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub queries: usize,
    pub classes: usize,
    pub dims: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            queries: 1610,
            classes: 8,
            dims: vec![1000, 10_000],
            repetitions: 30,
            warmup: 3,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::parse("[encoder]\ndimension = 5\n").unwrap_err();
        assert!(err.to_string().contains("dimension"), "{err}");
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = Config::parse("[encoder]\ndim = 500\n").unwrap();
        assert_eq!(c.encoder.dim, 500);
        assert_eq!(c.encoder.sigma_b, 0.23);
    }
}

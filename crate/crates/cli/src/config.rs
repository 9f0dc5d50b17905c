use std::path::{Path, PathBuf};

use oscguard_core::dataset::DatasetConfig;
use oscguard_core::mitigation::MitigationConfig;
use oscguard_core::nn::{ArchFamily, Hyperparams};
use oscguard_core::tuner::SearchSpace;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub synth: SynthSection,
    pub train: TrainSection,
    pub tune: TuneSection,
    pub eval: EvalSection,
    pub probe: ProbeSection,
    pub mitigate: MitigateSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    #[serde(flatten)]
    pub dataset: DatasetConfig,
    pub csv: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub data: Option<PathBuf>,
    pub family: ArchFamily,
    pub preset: String,
    /// Full hyperparameter set; overrides the preset.
    pub hyper: Option<Hyperparams>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
    pub train_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            data: None,
            family: ArchFamily::ConvLstm,
            preset: "desk".into(),
            hyper: None,
            epochs: None,
            learning_rate: None,
            batch_size: None,
            dropout: None,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub data: Option<PathBuf>,
    pub family: ArchFamily,
    pub space: String,
    /// Explicit ranges; override `space`.
    pub search_space: Option<SearchSpace>,
    pub trials: usize,
    pub refine: usize,
    pub radius: f64,
    pub train_fraction: f64,
    /// Share of the training part held out for ranking.
    pub validation_fraction: f64,
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection {
            data: None,
            family: ArchFamily::ConvLstm,
            space: "desk".into(),
            search_space: None,
            trials: 40,
            refine: 10,
            radius: 0.1,
            train_fraction: 0.8,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub data: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    /// `[TP, FP, TN, FN]`
    pub confusion: Option<[u64; 4]>,
    pub family: Option<ArchFamily>,
    pub regime: Option<String>,
    pub threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            data: None,
            models: Vec::new(),
            confusion: None,
            family: None,
            regime: None,
            threshold: oscguard_core::nn::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub model: Option<PathBuf>,
    pub normal: usize,
    pub attack: usize,
    pub grid: String,
    /// Seconds of attack visible at the end of each attack window.
    pub tail_s: f64,
    pub threshold: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            model: None,
            normal: 500,
            attack: 500,
            grid: "wscc9".into(),
            tail_s: 1.0,
            threshold: oscguard_core::nn::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigateSection {
    pub m1: Option<PathBuf>,
    pub m2: Option<PathBuf>,
    pub worst_case_detection: bool,
    pub grid: String,
    /// Scenario and measurement settings; absent means defaults, with
    /// 360 kW stations when models drive detection.
    pub scenario: Option<MitigationConfig>,
}

impl Default for MitigateSection {
    fn default() -> Self {
        MitigateSection { m1: None, m2: None, worst_case_detection: false, grid: "wscc9".into(), scenario: None }
    }
}

/// Station rate of the model-driven demo: few fast chargers keep the
/// per-request inference affordable.
pub const MODEL_DEMO_RATE_KW: f64 = 360.0;

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn parse_family(s: &str) -> Result<ArchFamily, CliError> {
    ArchFamily::parse(s).ok_or_else(|| CliError::Usage(format!("unknown model family {s:?} (lstm, convlstm)")))
}

pub fn parse_regime(s: &str) -> Result<oscguard_core::dataset::Regime, CliError> {
    oscguard_core::dataset::Regime::parse(s)
        .ok_or_else(|| CliError::Usage(format!("unknown regime {s:?} (attack5, attack10)")))
}

pub fn parse_space(s: &str) -> Result<SearchSpace, CliError> {
    match s {
        "desk" => Ok(SearchSpace::desk()),
        "paper" => Ok(SearchSpace::paper()),
        _ => Err(CliError::Usage(format!("unknown search space {s:?} (desk, paper)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse() {
        let c: FileConfig = toml::from_str(
            r#"
            seed = 3
            [synth]
            normal = 10
            regime = "attack10"
            [train]
            family = "lstm"
            [mitigate.scenario]
            charge_rate_kw = 40.0
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.synth.dataset.normal, 10);
        assert_eq!(c.synth.dataset.attack, 1000);
        assert_eq!(c.train.family, ArchFamily::Lstm);
        assert_eq!(c.mitigate.scenario.unwrap().charge_rate_kw, 40.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("[train]\nepoch = 3").is_err());
        assert!(toml::from_str::<FileConfig>("sede = 3").is_err());
    }
}

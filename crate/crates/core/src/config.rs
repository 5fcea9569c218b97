//! JSON run configuration. Every field has a default, unknown keys are
//! rejected, and the resolved config is echoed into each run's manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SynthConfig;
use crate::dsp::StftParams;
use crate::nn::TrainConfig;
use crate::transfer::TransferConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioConfig {
    pub sample_rate: u32,
    pub seconds: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        AudioConfig {
            sample_rate: crate::audio::CANONICAL_RATE,
            seconds: crate::audio::CANONICAL_SECONDS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub window: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window: 1024,
            hop: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixConfig {
    pub gain_db: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig { gain_db: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub classifier: TrainConfig,
    pub autoencoder: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            classifier: TrainConfig::default(),
            autoencoder: TrainConfig {
                epochs: 15,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub pair_count: usize,
    pub pair_seed: u64,
    pub alpha_grid: Vec<f64>,
    pub width_grid: Vec<usize>,
    /// Use the literal channel-softmax decoder head instead of sigmoid.
    pub literal_softmax_decoder: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            pair_count: 50,
            pair_seed: 99,
            alpha_grid: vec![0.0, 0.1, 0.2, 0.5, 0.9],
            width_grid: vec![2, 4, 8, 16],
            literal_softmax_decoder: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub synth: SynthConfig,
    /// UrbanSound8K metadata CSV path, when using the real dataset.
    pub metadata_csv: Option<String>,
    /// UrbanSound8K audio root (fold directories).
    pub audio_root: Option<String>,
}

/// The whole run configuration.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub audio: AudioConfig,
    pub stft: StftConfig,
    pub transfer: TransferConfig,
    pub mix: MixConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub corpus: CorpusSection,
}

impl RunConfig {
    /// Parse a JSON config file; unknown keys are errors.
    pub fn load(path: impl AsRef<Path>) -> crate::Result<RunConfig> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| crate::Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.audio.sample_rate == 0 || self.audio.seconds <= 0.0 {
            return Err(crate::Error::Config(
                "audio.sample_rate and audio.seconds must be positive".into(),
            ));
        }
        self.stft_params()?;
        self.transfer
            .validate()
            .map_err(|e| crate::Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn stft_params(&self) -> crate::Result<StftParams> {
        StftParams::new(self.stft.window, self.stft.hop).map_err(crate::Error::Dsp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.audio, cfg.audio);
        assert_eq!(back.eval, cfg.eval);
        assert_eq!(back.transfer, cfg.transfer);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"transfer": {"alpha": 0.5, "n_filters": 128}}"#).unwrap();
        assert_eq!(cfg.transfer.alpha, 0.5);
        assert_eq!(cfg.transfer.n_filters, 128);
        assert_eq!(cfg.transfer.filter_width, 11);
        assert_eq!(cfg.audio.sample_rate, 22050);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"transfr": {}}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<RunConfig>(r#"{"transfer": {"alhpa": 1.0}}"#);
        assert!(err.is_err());
    }

    #[test]
    fn default_alpha_grid_matches_the_sweep_plan() {
        assert_eq!(
            EvalSection::default().alpha_grid,
            vec![0.0, 0.1, 0.2, 0.5, 0.9]
        );
        assert_eq!(EvalSection::default().width_grid, vec![2, 4, 8, 16]);
    }
}

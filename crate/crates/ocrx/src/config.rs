//! Experiment configuration: a TOML file with one `[section]` per model plus
//! shared pipeline settings. Every field has a default, so a minimal config
//! can be empty; every run writes the fully resolved config next to its
//! outputs so it can be replayed exactly.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoencoderConfig;
use crate::cgan::CganConfig;
use crate::convlstm::ConvLstmConfig;
use crate::detector::DetectorConfig;
use crate::siamese::SiameseConfig;
use crate::synth::{OccluderConfig, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// video tracks: Conv-LSTM coarse reconstruction
    Sequential,
    /// independent stills: autoencoder coarse reconstruction
    NonSequential,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "sequential",
            Mode::NonSequential => "non_sequential",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub detector: TrainParams,
    pub convlstm: TrainParams,
    pub autoencoder: TrainParams,
    pub cgan: TrainParams,
    pub siamese: TrainParams,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            detector: TrainParams::default(),
            convlstm: TrainParams::default(),
            autoencoder: TrainParams::default(),
            // image-translation settings: batch 1, lr 2e-4 (β1 0.5 is wired
            // into the cGAN trainer itself)
            cgan: TrainParams {
                epochs: 20,
                batch_size: 1,
                learning_rate: 2e-4,
            },
            // the contrastive stage favors pair coverage over epochs: many
            // sampled pairs, few passes, a gentle step size
            siamese: TrainParams {
                epochs: 12,
                batch_size: 8,
                learning_rate: 3e-4,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            manifest: None,
            checkpoint_dir: PathBuf::from("checkpoints"),
            report_dir: PathBuf::from("runs"),
        }
    }
}

/// Benchmark dataset shape. Fractions are of frames per track.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSection {
    pub identity_count: usize,
    pub tracks_per_identity: usize,
    pub track_len: usize,
    pub occluded_fraction: f64,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection {
            identity_count: 10,
            tracks_per_identity: 2,
            track_len: 10,
            occluded_fraction: 0.4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub frame_size: usize,
    pub mode: Mode,
    pub seed: u64,
    pub detector: DetectorConfig,
    pub convlstm: ConvLstmConfig,
    pub autoencoder: AutoencoderConfig,
    pub cgan: CganConfig,
    pub siamese: SiameseConfig,
    pub train: TrainSection,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub occluder: OccluderConfig,
    pub benchmark: BenchmarkSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let frame_size = 32;
        let mut cfg = PipelineConfig {
            frame_size,
            mode: Mode::Sequential,
            seed: 0,
            detector: DetectorConfig::default(),
            convlstm: ConvLstmConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            cgan: CganConfig::default(),
            siamese: SiameseConfig::default(),
            train: TrainSection::default(),
            paths: Paths::default(),
            synth: SynthConfig::default(),
            occluder: OccluderConfig::default(),
            benchmark: BenchmarkSection::default(),
        };
        cfg.set_frame_size(frame_size);
        cfg
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl PipelineConfig {
    /// Propagate the shared frame size into every per-model config.
    pub fn set_frame_size(&mut self, size: usize) {
        self.frame_size = size;
        self.detector.input_size = size;
        self.convlstm.frame_size = size;
        self.autoencoder.input_size = size;
        self.cgan.input_size = size;
        self.siamese.input_size = size;
        self.synth.frame_size = size;
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: PipelineConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |msg: String| Err(ConfigError::Invalid(msg));
        if self.frame_size < 8 || self.frame_size % 8 != 0 {
            return err(format!(
                "frame_size {} must be a multiple of 8 (three stride-2 stages)",
                self.frame_size
            ));
        }
        for (name, size) in [
            ("detector.input_size", self.detector.input_size),
            ("convlstm.frame_size", self.convlstm.frame_size),
            ("autoencoder.input_size", self.autoencoder.input_size),
            ("cgan.input_size", self.cgan.input_size),
            ("siamese.input_size", self.siamese.input_size),
            ("synth.frame_size", self.synth.frame_size),
        ] {
            if size != self.frame_size {
                return err(format!(
                    "{name} = {size} disagrees with frame_size = {}",
                    self.frame_size
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.detector.threshold) {
            return err(format!(
                "detector.threshold {} outside [0,1]",
                self.detector.threshold
            ));
        }
        if self.convlstm.widths.is_empty()
            || self.detector.widths.is_empty()
            || self.autoencoder.widths.is_empty()
            || self.siamese.widths.is_empty()
            || self.cgan.disc_widths.is_empty()
        {
            return err("every model needs at least one layer width".into());
        }
        if *self.convlstm.widths.last().unwrap() != 3 {
            return err("convlstm.widths must end in 3 output channels".into());
        }
        if self.cgan.lambda_l1 <= 0.0 {
            return err(format!("cgan.lambda_l1 {} must be positive", self.cgan.lambda_l1));
        }
        if self.siamese.margin <= 0.0 {
            return err(format!("siamese.margin {} must be positive", self.siamese.margin));
        }
        for (name, t) in [
            ("train.detector", &self.train.detector),
            ("train.convlstm", &self.train.convlstm),
            ("train.autoencoder", &self.train.autoencoder),
            ("train.cgan", &self.train.cgan),
            ("train.siamese", &self.train.siamese),
        ] {
            if t.epochs == 0 || t.batch_size == 0 {
                return err(format!("{name}: epochs and batch_size must be positive"));
            }
            if !(t.learning_rate > 0.0) {
                return err(format!("{name}: learning_rate must be positive"));
            }
        }
        if self.benchmark.identity_count < 2 {
            return err("benchmark.identity_count must be at least 2".into());
        }
        if self.benchmark.tracks_per_identity == 0 || self.benchmark.track_len == 0 {
            return err("benchmark track counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.benchmark.occluded_fraction) {
            return err(format!(
                "benchmark.occluded_fraction {} outside [0,1]",
                self.benchmark.occluded_fraction
            ));
        }
        if !(self.occluder.min_fraction <= self.occluder.max_fraction
            && self.occluder.min_fraction >= 0.0
            && self.occluder.max_fraction <= 1.0)
        {
            return err("occluder fractions must satisfy 0 <= min <= max <= 1".into());
        }
        Ok(())
    }
}

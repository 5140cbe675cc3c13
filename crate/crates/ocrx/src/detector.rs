//! Per-frame occlusion detector: residual encoder with a 1-unit sigmoid head.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{Checkpoint, IoError};
use crate::nn::ResidualEncoder;
use crate::tensor::{Activation, Adam, Real, Result, Tensor};
use crate::train::{epoch_batches, TrainConfig, TrainReport, TrainState};

pub const MODEL_KIND: &str = "detector";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub input_size: usize,
    pub widths: Vec<usize>,
    /// p >= threshold classifies as occluded
    pub threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            input_size: 64,
            widths: vec![16, 32, 64, 128],
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameClass {
    Occluded,
    Unoccluded,
}

pub struct DetectorModel<T: Real = f32> {
    pub encoder: ResidualEncoder<T>,
    pub config: DetectorConfig,
}

/// A training sample: frame in [0,1] plus the occlusion label.
pub struct LabeledFrame {
    pub frame: Tensor<f32>,
    pub occluded: bool,
}

impl<T: Real> DetectorModel<T> {
    pub fn new(rng: &mut ChaCha8Rng, config: DetectorConfig) -> Self {
        let encoder = ResidualEncoder::new(
            rng,
            config.input_size,
            &config.widths,
            1,
            Some(Activation::Sigmoid),
        );
        DetectorModel { encoder, config }
    }

    /// Occlusion probabilities for a [B,3,H,W] batch -> [B,1].
    pub fn forward(&self, frames: &Tensor<T>) -> Result<Tensor<T>> {
        self.encoder.forward(frames)
    }

    /// p(occluded) for one [3,H,W] frame.
    pub fn detect(&self, frame: &Tensor<T>) -> Result<T> {
        Ok(self.forward(&frame.unsqueeze0())?.item())
    }

    /// Ties break toward Occluded: routing a clean frame through
    /// reconstruction is cheaper than skipping an occluded one.
    pub fn classify(&self, frame: &Tensor<T>) -> Result<FrameClass> {
        let p = self.detect(frame)?.to_f64();
        Ok(if p >= self.config.threshold {
            FrameClass::Occluded
        } else {
            FrameClass::Unoccluded
        })
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.collect_params("encoder", &mut out);
        out
    }
}

/// Minimize the binary cross-entropy of p(occluded) against the labels.
/// Returns the per-epoch mean loss trace and the final checkpoint.
pub fn train_detector(
    model: &DetectorModel<f32>,
    data: &[LabeledFrame],
    cfg: &TrainConfig,
    resume: Option<&Checkpoint>,
) -> std::result::Result<(TrainReport, Checkpoint), IoError> {
    let params = model.named_params();
    let mut opt = Adam::new(params.iter().map(|(_, t)| t.clone()).collect(), cfg.adam);
    let mut state = TrainState::init(MODEL_KIND, cfg, &params, &mut opt, resume)?;
    let mut report = TrainReport::default();
    let positives = data.iter().filter(|d| d.occluded).count();
    if positives == 0 || positives == data.len() {
        report
            .warnings
            .push("training set contains a single class; proceeding".into());
    }
    for _epoch in state.start_epoch..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0.0;
        for batch in epoch_batches(&mut state.rng, data.len(), cfg.batch_size) {
            let frames: Vec<&Tensor<f32>> = batch.iter().map(|&i| &data[i].frame).collect();
            let x = Tensor::batch_of(&frames)?;
            let y = Tensor::from_vec(
                batch
                    .iter()
                    .map(|&i| if data[i].occluded { 1.0 } else { 0.0 })
                    .collect(),
                &[batch.len(), 1],
            )?;
            let loss = model.forward(&x)?.bce_loss(&y)?;
            loss.backward()?;
            opt.step()?;
            opt.zero_grads();
            loss_sum += loss.item() as f64;
            batches += 1.0;
        }
        report.epoch_losses.push(vec![loss_sum / batches]);
    }
    let ck = state.snapshot(MODEL_KIND, cfg.epochs, &params, &opt);
    Ok((report, ck))
}

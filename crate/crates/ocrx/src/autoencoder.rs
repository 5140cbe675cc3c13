//! Convolutional autoencoder for non-sequential occlusion reconstruction:
//! three stride-2 encoder convolutions, a mirrored nearest-neighbor-upsample
//! decoder, and a 3-channel sigmoid output.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{Checkpoint, IoError};
use crate::nn::Conv2dLayer;
use crate::tensor::{Activation, Adam, Real, Result, Tensor, TensorError};
use crate::train::{epoch_batches, TrainConfig, TrainReport, TrainState};

pub const MODEL_KIND: &str = "autoencoder";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub input_size: usize,
    pub widths: Vec<usize>,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            input_size: 64,
            widths: vec![16, 32, 64],
        }
    }
}

pub struct AutoencoderModel<T: Real = f32> {
    pub encoder: Vec<Conv2dLayer<T>>,
    pub decoder: Vec<Conv2dLayer<T>>,
    pub final_conv: Conv2dLayer<T>,
    pub config: AutoencoderConfig,
}

impl<T: Real> AutoencoderModel<T> {
    pub fn new(rng: &mut ChaCha8Rng, config: AutoencoderConfig) -> Self {
        let mut encoder = Vec::new();
        let mut cin = 3;
        for &w in &config.widths {
            encoder.push(Conv2dLayer::new(rng, cin, w, 3, 2, 1, Some(Activation::Relu)));
            cin = w;
        }
        let mut decoder = Vec::new();
        for i in (0..config.widths.len()).rev() {
            let out = if i == 0 {
                config.widths[0]
            } else {
                config.widths[i - 1]
            };
            decoder.push(Conv2dLayer::same(rng, cin, out, 3, Some(Activation::Relu)));
            cin = out;
        }
        let final_conv = Conv2dLayer::same(rng, cin, 3, 3, None);
        AutoencoderModel {
            encoder,
            decoder,
            final_conv,
            config,
        }
    }

    /// [B,3,H,W] -> [B,3,H,W] in (0,1).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        let n = self.config.input_size;
        if s.len() != 4 || s[1] != 3 || s[2] != n || s[3] != n {
            return Err(TensorError::InvalidArg {
                op: "autoencoder_forward",
                msg: format!("expected [B,3,{n},{n}], got {s:?}"),
            });
        }
        let mut y = x.clone();
        for e in &self.encoder {
            y = e.forward(&y)?;
        }
        for d in &self.decoder {
            y = d.forward(&y.upsample_nearest2()?)?;
        }
        self.final_conv.forward(&y)?.sigmoid()
    }

    /// Reconstruct one [3,H,W] occluded frame.
    pub fn reconstruct(&self, frame: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(&frame.unsqueeze0())?.squeeze0()
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, e) in self.encoder.iter().enumerate() {
            e.collect_params(&format!("enc{i}"), &mut out);
        }
        for (i, d) in self.decoder.iter().enumerate() {
            d.collect_params(&format!("dec{i}"), &mut out);
        }
        self.final_conv.collect_params("final", &mut out);
        out
    }
}

/// Pixel-wise BCE against the clean frames.
pub fn train_autoencoder(
    model: &AutoencoderModel<f32>,
    pairs: &[(Tensor<f32>, Tensor<f32>)],
    cfg: &TrainConfig,
    resume: Option<&Checkpoint>,
) -> std::result::Result<(TrainReport, Checkpoint), IoError> {
    let params = model.named_params();
    let mut opt = Adam::new(params.iter().map(|(_, t)| t.clone()).collect(), cfg.adam);
    let mut state = TrainState::init(MODEL_KIND, cfg, &params, &mut opt, resume)?;
    let mut report = TrainReport::default();
    for _epoch in state.start_epoch..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0.0;
        for batch in epoch_batches(&mut state.rng, pairs.len(), cfg.batch_size) {
            let xs: Vec<&Tensor<f32>> = batch.iter().map(|&i| &pairs[i].0).collect();
            let ys: Vec<&Tensor<f32>> = batch.iter().map(|&i| &pairs[i].1).collect();
            let x = Tensor::batch_of(&xs)?;
            let y = Tensor::batch_of(&ys)?;
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

//! Siamese identity matcher.
//!
//! Two weight-shared residual branches embed frames; a small head maps the
//! absolute embedding difference to a two-way softmax whose second entry is
//! the learned match score D_w in [0,1]. Training uses a contrastive hinge:
//! matched pairs are pushed toward the margin, mismatched pairs toward zero.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{Checkpoint, IoError};
use crate::nn::{Dense, ResidualEncoder};
use crate::synth::PairSample;
use crate::tensor::{Activation, Adam, Real, Result, Tensor};
use crate::train::{epoch_batches, TrainConfig, TrainReport, TrainState};

pub const MODEL_KIND: &str = "siamese";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiameseConfig {
    pub input_size: usize,
    pub widths: Vec<usize>,
    pub embed_dim: usize,
    pub margin: f64,
}

impl Default for SiameseConfig {
    fn default() -> Self {
        SiameseConfig {
            input_size: 64,
            widths: vec![16, 32, 64, 128],
            embed_dim: 64,
            margin: 1.0,
        }
    }
}

pub struct SiameseModel<T: Real = f32> {
    pub encoder: ResidualEncoder<T>,
    pub head_hidden: Dense<T>,
    pub head_out: Dense<T>,
    pub config: SiameseConfig,
}

impl<T: Real> SiameseModel<T> {
    pub fn new(rng: &mut ChaCha8Rng, config: SiameseConfig) -> Self {
        let encoder = ResidualEncoder::new(
            rng,
            config.input_size,
            &config.widths,
            config.embed_dim,
            None,
        );
        let head_hidden = Dense::new(rng, config.embed_dim, 32, Some(Activation::Relu));
        let head_out = Dense::new(rng, 32, 2, None);
        SiameseModel {
            encoder,
            head_hidden,
            head_out,
            config,
        }
    }

    /// [B,3,H,W] -> [B,embed_dim]. Both branches share these weights.
    pub fn embed(&self, frames: &Tensor<T>) -> Result<Tensor<T>> {
        self.encoder.forward(frames)
    }

    /// Match score D_w in [0,1] for pre-computed embeddings, shape [B].
    pub fn score_embeddings(&self, ea: &Tensor<T>, eb: &Tensor<T>) -> Result<Tensor<T>> {
        let diff = ea.sub(eb)?.abs_()?;
        let h = self.head_hidden.forward(&diff)?;
        self.head_out.forward(&h)?.softmax()?.select_last(1)
    }

    /// Match score for a single pair of [3,H,W] frames.
    pub fn score_pair(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
        let ea = self.embed(&a.unsqueeze0())?;
        let eb = self.embed(&b.unsqueeze0())?;
        Ok(self.score_embeddings(&ea, &eb)?.data()[0])
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.collect_params("encoder", &mut out);
        self.head_hidden.collect_params("head.hidden", &mut out);
        self.head_out.collect_params("head.out", &mut out);
        out
    }
}

/// Contrastive hinge on a batch of scores. `labels[i]` is 1.0 for a matched
/// pair, 0.0 for a mismatched one:
///
///   L = mean_i (1-y)·D²/2 + y·max(0, m-D)²/2
pub fn contrastive_loss<T: Real>(scores: &Tensor<T>, labels: &[f64], margin: f64) -> Result<Tensor<T>> {
    let n = scores.numel();
    assert_eq!(labels.len(), n, "one label per score");
    let y: Vec<T> = labels.iter().map(|&v| T::from_f64(v)).collect();
    let y_not: Vec<T> = labels.iter().map(|&v| T::from_f64(1.0 - v)).collect();
    let y = Tensor::from_vec(y, scores.shape())?;
    let y_not = Tensor::from_vec(y_not, scores.shape())?;
    let pull = scores.hadamard(scores)?.hadamard(&y_not)?;
    let hinge = scores
        .neg()
        .add_scalar(T::from_f64(margin))
        .relu()?;
    let push = hinge.hadamard(&hinge)?.hadamard(&y)?;
    pull.add(&push)?.scale(T::from_f64(0.5)).mean()
}

/// Gallery indices ordered best-match-first for one probe. The sort is stable
/// and ties keep the lower gallery index first.
pub fn rank_gallery<T: Real>(
    model: &SiameseModel<T>,
    probe: &Tensor<T>,
    gallery: &[Tensor<T>],
) -> Result<Vec<usize>> {
    let ep = model.embed(&probe.unsqueeze0())?;
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(gallery.len());
    for (i, g) in gallery.iter().enumerate() {
        let eg = model.embed(&g.unsqueeze0())?;
        let s = model.score_embeddings(&ep, &eg)?.data()[0].to_f64();
        scored.push((i, s));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}

/// Contrastive training over index pairs into `frames`. Resumable.
pub fn train_siamese(
    model: &SiameseModel<f32>,
    frames: &[Tensor<f32>],
    pairs: &[PairSample],
    cfg: &TrainConfig,
    resume: Option<&Checkpoint>,
) -> std::result::Result<(TrainReport, Checkpoint), IoError> {
    let params = model.named_params();
    let mut opt = Adam::new(params.iter().map(|(_, t)| t.clone()).collect(), cfg.adam);
    let mut state = TrainState::init(MODEL_KIND, cfg, &params, &mut opt, resume)?;
    let mut report = TrainReport::default();
    for _epoch in state.start_epoch..cfg.epochs {
        let mut epoch_loss = 0.0f64;
        let batches = epoch_batches(&mut state.rng, pairs.len(), cfg.batch_size);
        for batch in &batches {
            let a: Vec<&Tensor<f32>> = batch.iter().map(|&i| &frames[pairs[i].a]).collect();
            let b: Vec<&Tensor<f32>> = batch.iter().map(|&i| &frames[pairs[i].b]).collect();
            let labels: Vec<f64> = batch
                .iter()
                .map(|&i| if pairs[i].same { 1.0 } else { 0.0 })
                .collect();
            let ea = model.embed(&Tensor::batch_of(&a)?)?;
            let eb = model.embed(&Tensor::batch_of(&b)?)?;
            let scores = model.score_embeddings(&ea, &eb)?;
            let loss = contrastive_loss(&scores, &labels, model.config.margin)?;
            loss.backward()?;
            opt.step()?;
            opt.zero_grads();
            epoch_loss += loss.item() as f64 * batch.len() as f64;
        }
        report
            .epoch_losses
            .push(vec![epoch_loss / pairs.len() as f64]);
    }
    Ok((report, state.snapshot(MODEL_KIND, cfg.epochs, &params, &opt)))
}

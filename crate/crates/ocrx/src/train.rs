//! Shared training-loop plumbing: configs, loss traces, deterministic
//! shuffling, and the checkpoint/resume contract.
//!
//! Every trainer follows the same pattern: a fresh run derives its RNG from
//! `substream(seed, "train/<model>")`; a resumed run restores parameters,
//! optimizer moments, the RNG state, and the epoch counter from a checkpoint,
//! which makes a resumed loss trace equal the uninterrupted one.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{Checkpoint, IoError};
use crate::rng::{substream, RngState};
use crate::tensor::{Adam, AdamConfig, Tensor};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            adam: AdamConfig::with_lr(lr),
            seed,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// one entry per epoch; multi-loss models use the column layout they document
    pub epoch_losses: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl TrainReport {
    pub fn scalar_trace(&self) -> Vec<f64> {
        self.epoch_losses.iter().map(|r| r[0]).collect()
    }
}

/// Carried state of an in-progress run.
pub struct TrainState {
    pub rng: ChaCha8Rng,
    pub start_epoch: usize,
}

impl TrainState {
    /// Fresh state, or state recovered from a checkpoint of `model_kind`.
    pub fn init(
        model_kind: &str,
        cfg: &TrainConfig,
        params: &[(String, Tensor<f32>)],
        opt: &mut Adam<f32>,
        resume: Option<&Checkpoint>,
    ) -> Result<Self, IoError> {
        match resume {
            None => Ok(TrainState {
                rng: substream(cfg.seed, &format!("train/{model_kind}")),
                start_epoch: 0,
            }),
            Some(ck) => {
                ck.expect_kind(model_kind)?;
                ck.restore_params(params)?;
                let states = ck.restore_opt(params)?;
                opt.states_mut().clone_from_slice(&states);
                let rng = ck
                    .rng
                    .as_ref()
                    .map(RngState::restore)
                    .unwrap_or_else(|| substream(cfg.seed, &format!("train/{model_kind}")));
                Ok(TrainState {
                    rng,
                    start_epoch: ck.epoch as usize,
                })
            }
        }
    }

    pub fn snapshot(
        &self,
        model_kind: &str,
        epoch: usize,
        params: &[(String, Tensor<f32>)],
        opt: &Adam<f32>,
    ) -> Checkpoint {
        let mut ck = Checkpoint::from_params(model_kind, params).with_opt(params, opt.states());
        ck.epoch = epoch as u64;
        ck.rng = Some(RngState::capture(&self.rng));
        ck
    }
}

/// Shuffled index order for one epoch, chunked into batches.
pub fn epoch_batches(rng: &mut ChaCha8Rng, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

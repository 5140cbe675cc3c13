//! Conditional-GAN refinement of coarse reconstructions.
//!
//! The UNet generator sees the coarse frame (which is also the condition);
//! the PatchGAN discriminator judges (candidate ⊕ condition) pairs. Losses
//! use the standard non-saturating BCE form plus λ·L1 toward the clean frame.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{Checkpoint, IoError};
use crate::nn::{PatchGanDiscriminator, UNetGenerator};
use crate::rng::RngState;
use crate::tensor::{Adam, AdamConfig, Real, Result, Tensor};
use crate::train::{epoch_batches, TrainConfig, TrainReport};

pub const MODEL_KIND: &str = "cgan";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CganConfig {
    pub input_size: usize,
    pub unet_depth: usize,
    pub unet_base_width: usize,
    pub disc_widths: Vec<usize>,
    pub lambda_l1: f64,
}

impl Default for CganConfig {
    fn default() -> Self {
        CganConfig {
            input_size: 64,
            unet_depth: 3,
            unet_base_width: 16,
            disc_widths: vec![16, 32, 64],
            lambda_l1: 100.0,
        }
    }
}

pub struct CganModel<T: Real = f32> {
    pub generator: UNetGenerator<T>,
    pub discriminator: PatchGanDiscriminator<T>,
    pub config: CganConfig,
}

/// (coarse reconstruction, clean ground truth), both [3,H,W] in [0,1].
pub struct RefinePair {
    pub coarse: Tensor<f32>,
    pub target: Tensor<f32>,
}

/// Scalar loss values of one pair, before any update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanLosses {
    pub gen_total: f64,
    pub gen_adv: f64,
    pub gen_l1: f64,
    pub disc: f64,
}

impl<T: Real> CganModel<T> {
    pub fn new(rng: &mut ChaCha8Rng, config: CganConfig) -> Self {
        assert!(config.lambda_l1 > 0.0, "lambda_l1 must be positive");
        let generator = UNetGenerator::new(rng, config.unet_depth, config.unet_base_width);
        let discriminator = PatchGanDiscriminator::new(rng, 6, &config.disc_widths);
        CganModel {
            generator,
            discriminator,
            config,
        }
    }

    /// G(coarse) for one [3,H,W] frame.
    pub fn refine(&self, coarse: &Tensor<T>) -> Result<Tensor<T>> {
        self.generator.forward(&coarse.unsqueeze0())?.squeeze0()
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.generator.collect_params("gen", &mut out);
        self.discriminator.collect_params("disc", &mut out);
        out
    }

    pub fn gen_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.generator.collect_params("gen", &mut out);
        out
    }

    pub fn disc_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.discriminator.collect_params("disc", &mut out);
        out
    }
}

fn ones_like<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    Tensor::full(t.shape(), T::one())
}

fn zeros_like<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    Tensor::zeros(t.shape())
}

/// Both losses for one pair, without stepping either network.
///
/// disc = BCE(D(target|coarse), 1) + BCE(D(G(coarse)|coarse), 0)
/// gen  = BCE(D(G(coarse)|coarse), 1) + λ·L1(G(coarse), target)
pub fn gan_losses<T: Real>(model: &CganModel<T>, pair_coarse: &Tensor<T>, pair_target: &Tensor<T>) -> Result<GanLosses> {
    let coarse = pair_coarse.unsqueeze0();
    let target = pair_target.unsqueeze0();
    let fake = model.generator.forward(&coarse)?;
    let d_real = model.discriminator.forward_pair(&target, &coarse)?;
    let d_fake = model.discriminator.forward_pair(&fake.detach(), &coarse)?;
    let disc = d_real
        .bce_loss(&ones_like(&d_real))?
        .add(&d_fake.bce_loss(&zeros_like(&d_fake))?)?;
    let d_fake_g = model.discriminator.forward_pair(&fake, &coarse)?;
    let adv = d_fake_g.bce_loss(&ones_like(&d_fake_g))?;
    let l1 = fake.l1_loss(&target)?;
    let lambda = model.config.lambda_l1;
    Ok(GanLosses {
        gen_total: adv.item().to_f64() + lambda * l1.item().to_f64(),
        gen_adv: adv.item().to_f64(),
        gen_l1: l1.item().to_f64(),
        disc: disc.item().to_f64(),
    })
}

/// Standard image-translation optimizer settings; the source protocol fixes
/// only batch size 1 and λ.
pub fn cgan_adam() -> AdamConfig {
    AdamConfig {
        learning_rate: 2e-4,
        beta1: 0.5,
        beta2: 0.999,
        epsilon: 1e-8,
    }
}

/// Alternating per-sample updates, one discriminator step then one generator
/// step, batch size 1. Supports session training: the returned checkpoint
/// resumes bit-exactly.
pub fn train_cgan(
    model: &CganModel<f32>,
    pairs: &[RefinePair],
    cfg: &TrainConfig,
    resume: Option<&Checkpoint>,
) -> std::result::Result<(TrainReport, Checkpoint), IoError> {
    let gen_params = model.gen_params();
    let disc_params = model.disc_params();
    let all_params = model.named_params();
    let mut gen_opt = Adam::new(gen_params.iter().map(|(_, t)| t.clone()).collect(), cfg.adam);
    let mut disc_opt = Adam::new(
        disc_params.iter().map(|(_, t)| t.clone()).collect(),
        cfg.adam,
    );
    let (mut rng, start_epoch) = match resume {
        None => (
            crate::rng::substream(cfg.seed, "train/cgan"),
            0usize,
        ),
        Some(ck) => {
            ck.expect_kind(MODEL_KIND)?;
            ck.restore_params(&all_params)?;
            gen_opt
                .states_mut()
                .clone_from_slice(&ck.restore_opt(&gen_params)?);
            disc_opt
                .states_mut()
                .clone_from_slice(&ck.restore_opt(&disc_params)?);
            let rng = ck
                .rng
                .as_ref()
                .map(RngState::restore)
                .unwrap_or_else(|| crate::rng::substream(cfg.seed, "train/cgan"));
            (rng, ck.epoch as usize)
        }
    };
    let mut report = TrainReport::default();
    for _epoch in start_epoch..cfg.epochs {
        let (mut adv_sum, mut l1_sum, mut disc_sum) = (0.0f64, 0.0f64, 0.0f64);
        // batch size 1: every batch is a single sample
        let order = epoch_batches(&mut rng, pairs.len(), 1);
        for batch in &order {
            let pair = &pairs[batch[0]];
            let coarse = pair.coarse.unsqueeze0();
            let target = pair.target.unsqueeze0();

            // discriminator step on a detached fake
            let fake = model.generator.forward(&coarse)?.detach();
            let d_real = model.discriminator.forward_pair(&target, &coarse)?;
            let d_fake = model.discriminator.forward_pair(&fake, &coarse)?;
            let d_loss = d_real
                .bce_loss(&ones_like(&d_real))?
                .add(&d_fake.bce_loss(&zeros_like(&d_fake))?)?;
            d_loss.backward()?;
            disc_opt.step()?;
            disc_opt.zero_grads();
            gen_opt.zero_grads();

            // generator step
            let fake = model.generator.forward(&coarse)?;
            let d_fake = model.discriminator.forward_pair(&fake, &coarse)?;
            let adv = d_fake.bce_loss(&ones_like(&d_fake))?;
            let l1 = fake.l1_loss(&target)?;
            let g_loss = adv.add(&l1.scale(model.config.lambda_l1 as f32))?;
            g_loss.backward()?;
            gen_opt.step()?;
            gen_opt.zero_grads();
            disc_opt.zero_grads();

            adv_sum += adv.item() as f64;
            l1_sum += l1.item() as f64;
            disc_sum += d_loss.item() as f64;
        }
        let n = order.len() as f64;
        report
            .epoch_losses
            .push(vec![adv_sum / n, l1_sum / n, disc_sum / n]);
    }
    let mut ck = Checkpoint::from_params(MODEL_KIND, &all_params)
        .with_opt(&gen_params, gen_opt.states())
        .with_opt(&disc_params, disc_opt.states());
    ck.epoch = cfg.epochs as u64;
    ck.rng = Some(RngState::capture(&rng));
    Ok((report, ck))
}

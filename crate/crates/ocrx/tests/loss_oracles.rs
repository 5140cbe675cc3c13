//! Closed-form oracles for the contrastive loss and the adversarial
//! refinement losses.

mod common;

use common::{rand_vec, rng};
use ocrx::cgan::{gan_losses, CganConfig, CganModel};
use ocrx::siamese::contrastive_loss;
use ocrx::tensor::Tensor;

fn contrastive_case(label: f64, score: f64) -> f64 {
    let scores = Tensor::<f64>::from_vec(vec![score], &[1]).unwrap();
    contrastive_loss(&scores, &[label], 1.0).unwrap().item()
}

#[test]
fn contrastive_closed_forms() {
    // L = mean((1-y)·D²/2 + y·max(0, m-D)²/2), m = 1.
    let cases = [
        (0.0, 0.0, 0.0),  // different pair, zero similarity: already separated
        (1.0, 0.0, 0.5),  // same pair at zero similarity: full margin penalty
        (1.0, 1.5, 0.0),  // same pair beyond the margin: no penalty
        (0.0, 0.6, 0.18), // different pair at 0.6: 0.6²/2
    ];
    for (y, d, want) in cases {
        let got = contrastive_case(y, d);
        assert!(
            (got - want).abs() < 1e-9,
            "contrastive(y={y}, D={d}) = {got}, want {want}"
        );
    }
    // The batched loss is the mean of the per-pair terms.
    let scores = Tensor::<f64>::from_vec(vec![0.0, 0.0, 1.5, 0.6], &[4]).unwrap();
    let got = contrastive_loss(&scores, &[0.0, 1.0, 1.0, 0.0], 1.0)
        .unwrap()
        .item();
    assert!((got - 0.17).abs() < 1e-9, "batched mean {got}, want 0.17");
}

#[test]
fn contrastive_margin_scaling() {
    // Doubling the margin quadruples the same-pair penalty at D = 0.
    let scores = Tensor::<f64>::from_vec(vec![0.0], &[1]).unwrap();
    let m1 = contrastive_loss(&scores, &[1.0], 1.0).unwrap().item();
    let m2 = contrastive_loss(&scores, &[1.0], 2.0).unwrap().item();
    assert!((m2 - 4.0 * m1).abs() < 1e-9, "m1={m1} m2={m2}");
}

fn small_cfg(lambda: f64) -> CganConfig {
    CganConfig {
        input_size: 8,
        unet_depth: 2,
        unet_base_width: 2,
        disc_widths: vec![2, 3],
        lambda_l1: lambda,
    }
}

fn frame(r: &mut rand_chacha::ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_vec(rand_vec(r, 3 * 8 * 8, 0.05, 0.95), &[3, 8, 8]).unwrap()
}

#[test]
fn gan_loss_decomposition() {
    for seed in 0..5 {
        let model = CganModel::<f64>::new(&mut rng(seed), small_cfg(100.0));
        let mut r = rng(40 + seed);
        let coarse = frame(&mut r);
        let target = frame(&mut r);
        let l = gan_losses(&model, &coarse, &target).unwrap();
        assert!(
            (l.gen_total - (l.gen_adv + 100.0 * l.gen_l1)).abs() < 1e-6,
            "seed {seed}: total {} vs adv {} + 100·L1 {}",
            l.gen_total,
            l.gen_adv,
            l.gen_l1
        );
        assert!(l.gen_adv > 0.0 && l.gen_l1 > 0.0 && l.disc > 0.0);
    }
}

#[test]
fn gan_loss_is_linear_in_lambda() {
    // Same weights (same seed), only the L1 weight changes: the adversarial
    // and L1 components are untouched and the total shifts by λ·L1.
    let m1 = CganModel::<f64>::new(&mut rng(7), small_cfg(100.0));
    let m2 = CganModel::<f64>::new(&mut rng(7), small_cfg(250.0));
    let mut r = rng(77);
    let coarse = frame(&mut r);
    let target = frame(&mut r);
    let a = gan_losses(&m1, &coarse, &target).unwrap();
    let b = gan_losses(&m2, &coarse, &target).unwrap();
    assert!((a.gen_adv - b.gen_adv).abs() < 1e-12);
    assert!((a.gen_l1 - b.gen_l1).abs() < 1e-12);
    assert!((a.disc - b.disc).abs() < 1e-12);
    assert!((b.gen_total - (b.gen_adv + 250.0 * b.gen_l1)).abs() < 1e-6);
    assert!(((b.gen_total - b.gen_adv) - 2.5 * (a.gen_total - a.gen_adv)).abs() < 1e-6);
}

#[test]
fn zero_weight_discriminator_gives_ln2_adversarial_loss() {
    // With every discriminator weight at zero the patch outputs sit at
    // sigmoid(0) = 0.5, so BCE against ones (or zeros) is ln 2 exactly.
    let model = CganModel::<f64>::new(&mut rng(3), small_cfg(100.0));
    for (_, p) in model.disc_params() {
        p.set_data(&vec![0.0; p.numel()]).unwrap();
    }
    let mut r = rng(33);
    let coarse = frame(&mut r);
    let target = frame(&mut r);
    let l = gan_losses(&model, &coarse, &target).unwrap();
    let ln2 = std::f64::consts::LN_2;
    assert!((l.gen_adv - ln2).abs() < 1e-9, "adv {} vs ln2", l.gen_adv);
    assert!((l.disc - 2.0 * ln2).abs() < 1e-9, "disc {} vs 2·ln2", l.disc);
}

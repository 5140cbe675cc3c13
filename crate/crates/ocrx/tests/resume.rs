//! Determinism and resumability: for every trainer, a run interrupted at the
//! halfway checkpoint and resumed must reproduce the uninterrupted run's loss
//! trace and final checkpoint byte for byte.

mod common;

use ocrx::autoencoder::{train_autoencoder, AutoencoderConfig, AutoencoderModel};
use ocrx::cgan::{train_cgan, CganConfig, CganModel, RefinePair};
use ocrx::convlstm::{train_conv_lstm, ConvLstmConfig, ConvLstmSample, ConvLstmStack};
use ocrx::detector::{train_detector, DetectorConfig, DetectorModel, LabeledFrame};
use ocrx::io::checkpoint::{save_checkpoint, Checkpoint};
use ocrx::rng::substream;
use ocrx::siamese::{train_siamese, SiameseConfig, SiameseModel};
use ocrx::synth::PairSample;
use ocrx::tensor::Tensor;
use ocrx::train::{TrainConfig, TrainReport};
use rand::Rng;
use std::fs;

const SIZE: usize = 8;
const N: usize = 6;

fn frame(r: &mut rand_chacha::ChaCha8Rng) -> Tensor<f32> {
    let v: Vec<f32> = (0..3 * SIZE * SIZE).map(|_| r.gen_range(0.05..0.95)).collect();
    Tensor::from_vec(v, &[3, SIZE, SIZE]).unwrap()
}

fn cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig::new(epochs, 2, 1e-3, seed)
}

fn bytes_of(ck: &Checkpoint) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ck.ocrx");
    save_checkpoint(ck, &p).unwrap();
    fs::read(&p).unwrap()
}

fn flat(report: &TrainReport) -> Vec<Vec<f64>> {
    report.epoch_losses.clone()
}

/// Run `train` for 4 epochs straight, then 2 + resume(2), and demand equal
/// traces and byte-identical final checkpoints. `train(cfg, resume)` must
/// build a fresh model internally per call.
fn check_resume<F>(label: &str, train: F)
where
    F: Fn(&TrainConfig, Option<&Checkpoint>) -> (TrainReport, Checkpoint),
{
    let (full_report, full_ck) = train(&cfg(4, 9), None);
    assert_eq!(full_report.epoch_losses.len(), 4, "{label}: 4 epochs");

    let (head_report, head_ck) = train(&cfg(2, 9), None);
    let (tail_report, tail_ck) = train(&cfg(4, 9), Some(&head_ck));
    assert_eq!(tail_report.epoch_losses.len(), 2, "{label}: resumed half");

    let mut joined = flat(&head_report);
    joined.extend(flat(&tail_report));
    assert_eq!(
        flat(&full_report),
        joined,
        "{label}: loss trace must not notice the interruption"
    );
    assert_eq!(
        bytes_of(&full_ck),
        bytes_of(&tail_ck),
        "{label}: final checkpoints must match byte for byte"
    );

    // Same seed from scratch reproduces; a different seed does not.
    let (again, again_ck) = train(&cfg(4, 9), None);
    assert_eq!(flat(&full_report), flat(&again), "{label}: rerun must match");
    assert_eq!(bytes_of(&full_ck), bytes_of(&again_ck));
    let (other, _) = train(&cfg(4, 10), None);
    assert_ne!(flat(&full_report), flat(&other), "{label}: seed must matter");
}

#[test]
fn detector_training_resumes_bit_exactly() {
    let data: Vec<LabeledFrame> = {
        let mut r = substream(3, "test/detector-data");
        (0..N)
            .map(|i| LabeledFrame {
                frame: frame(&mut r),
                occluded: i % 2 == 0,
            })
            .collect()
    };
    check_resume("detector", |cfg, resume| {
        let model = DetectorModel::<f32>::new(
            &mut substream(1, "init/detector"),
            DetectorConfig {
                input_size: SIZE,
                widths: vec![2, 3],
                threshold: 0.5,
            },
        );
        train_detector(&model, &data, cfg, resume).unwrap()
    });
}

#[test]
fn convlstm_training_resumes_bit_exactly() {
    let samples: Vec<ConvLstmSample> = {
        let mut r = substream(3, "test/convlstm-data");
        (0..N)
            .map(|_| ConvLstmSample {
                inputs: (0..3).map(|_| frame(&mut r)).collect(),
                target: frame(&mut r),
            })
            .collect()
    };
    check_resume("convlstm", |cfg, resume| {
        let stack = ConvLstmStack::<f32>::new(
            &mut substream(1, "init/convlstm"),
            ConvLstmConfig {
                frame_size: SIZE,
                widths: vec![2, 3],
                sequence_len: 3,
            },
        );
        train_conv_lstm(&stack, &samples, cfg, resume).unwrap()
    });
}

#[test]
fn autoencoder_training_resumes_bit_exactly() {
    let pairs: Vec<(Tensor<f32>, Tensor<f32>)> = {
        let mut r = substream(3, "test/ae-data");
        (0..N).map(|_| (frame(&mut r), frame(&mut r))).collect()
    };
    check_resume("autoencoder", |cfg, resume| {
        let model = AutoencoderModel::<f32>::new(
            &mut substream(1, "init/autoencoder"),
            AutoencoderConfig {
                input_size: SIZE,
                widths: vec![2, 3],
            },
        );
        train_autoencoder(&model, &pairs, cfg, resume).unwrap()
    });
}

#[test]
fn cgan_training_resumes_bit_exactly() {
    let pairs: Vec<RefinePair> = {
        let mut r = substream(3, "test/cgan-data");
        (0..4)
            .map(|_| RefinePair {
                coarse: frame(&mut r),
                target: frame(&mut r),
            })
            .collect()
    };
    check_resume("cgan", |cfg, resume| {
        let model = CganModel::<f32>::new(
            &mut substream(1, "init/cgan"),
            CganConfig {
                input_size: SIZE,
                unet_depth: 2,
                unet_base_width: 2,
                disc_widths: vec![2, 3],
                lambda_l1: 100.0,
            },
        );
        train_cgan(&model, &pairs, cfg, resume).unwrap()
    });
}

#[test]
fn siamese_training_resumes_bit_exactly() {
    let (frames, pairs) = {
        let mut r = substream(3, "test/siamese-data");
        let frames: Vec<Tensor<f32>> = (0..N).map(|_| frame(&mut r)).collect();
        let pairs = vec![
            PairSample { a: 0, b: 1, same: true },
            PairSample { a: 2, b: 3, same: false },
            PairSample { a: 4, b: 5, same: true },
            PairSample { a: 0, b: 5, same: false },
        ];
        (frames, pairs)
    };
    check_resume("siamese", |cfg, resume| {
        let model = SiameseModel::<f32>::new(
            &mut substream(1, "init/siamese"),
            SiameseConfig {
                input_size: SIZE,
                widths: vec![2, 3],
                embed_dim: 4,
                margin: 1.0,
            },
        );
        train_siamese(&model, &frames, &pairs, cfg, resume).unwrap()
    });
}

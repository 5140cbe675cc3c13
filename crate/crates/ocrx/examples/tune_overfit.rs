use ocrx::autoencoder::{train_autoencoder, AutoencoderConfig, AutoencoderModel};
use ocrx::cgan::{train_cgan, CganConfig, CganModel, RefinePair};
use ocrx::convlstm::{train_conv_lstm, ConvLstmConfig, ConvLstmSample, ConvLstmStack};
use ocrx::detector::{train_detector, DetectorConfig, DetectorModel, LabeledFrame};
use ocrx::metrics::{masked_psnr, psnr};
use ocrx::rng::substream;
use ocrx::siamese::{train_siamese, SiameseConfig, SiameseModel};
use ocrx::synth::{
    sample_pairs, synth_occlude, synth_sequence, OccluderConfig, SynthConfig,
};
use ocrx::tensor::Tensor;
use ocrx::train::TrainConfig;
use std::time::Instant;

const SIZE: usize = 64;
const SEED: u64 = 17;

fn synth_cfg() -> SynthConfig {
    SynthConfig {
        frame_size: SIZE,
        track_len: 8,
        identity_count: 8,
        velocity: 1.5,
        jitter: 0.5,
    }
}

/// 32 clean frames drawn across identities/tracks.
fn clean_frames() -> (Vec<Tensor<f32>>, Vec<usize>) {
    let c = synth_cfg();
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for id in 0..8 {
        let seq = synth_sequence(SEED, id, 0, &c);
        for f in seq.clean_frames.iter().take(4) {
            frames.push(f.clone());
            labels.push(id);
        }
    }
    (frames, labels)
}

fn occluded_set() -> Vec<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    // (occluded, clean, mask)
    let (frames, _) = clean_frames();
    let mut r = substream(SEED, "tune/occ");
    let occ = OccluderConfig::default();
    frames
        .into_iter()
        .map(|f| {
            let (o, m) = synth_occlude(&f, &mut r, &occ).unwrap();
            (o, f, m)
        })
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("detector");
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(50);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let batch: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(4);
    let widths: Vec<usize> = args
        .get(5)
        .map(|s| s.split(',').map(|w| w.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![8, 8, 3]);
    let seq_len: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(3);
    let t0 = Instant::now();
    match which {
        "detector" => {
            let set = occluded_set();
            let mut data = Vec::new();
            for (i, (o, c, _)) in set.into_iter().enumerate() {
                if i % 2 == 0 {
                    data.push(LabeledFrame { frame: o, occluded: true });
                } else {
                    data.push(LabeledFrame { frame: c, occluded: false });
                }
            }
            let model = DetectorModel::<f32>::new(
                &mut substream(SEED, "init/detector"),
                DetectorConfig { input_size: SIZE, widths: vec![16, 32, 64, 128], threshold: 0.5 },
            );
            let (rep, _) =
                train_detector(&model, &data, &TrainConfig::new(epochs, 8, lr, SEED), None).unwrap();
            let tr = rep.scalar_trace();
            println!("detector: first {:.4} last {:.4} ({} epochs)", tr[0], tr[tr.len() - 1], epochs);
        }
        "convlstm" => {
            let c = synth_cfg();
            let mut r = substream(SEED, "tune/occ");
            let occ = OccluderConfig::default();
            let mut samples = Vec::new();
            let mut eval = Vec::new();
            for id in 0..8 {
                let seq = synth_sequence(SEED, id, 0, &c);
                for t in 2..6 {
                    let (o, m) = synth_occlude(&seq.clean_frames[t], &mut r, &occ).unwrap();
                    let mut inputs: Vec<_> =
                        (0..seq_len - 1).rev().map(|k| seq.clean_frames[t - 1 - k].clone()).collect();
                    inputs.push(o.clone());
                    samples.push(ConvLstmSample { inputs: inputs.clone(), target: seq.clean_frames[t].clone() });
                    eval.push((inputs, seq.clean_frames[t].clone(), m));
                }
            }
            let stack = ConvLstmStack::<f32>::new(
                &mut substream(SEED, "init/convlstm"),
                ConvLstmConfig { frame_size: SIZE, widths: widths.clone(), sequence_len: seq_len },
            );
            let (rep, _) =
                train_conv_lstm(&stack, &samples, &TrainConfig::new(epochs, batch, lr, SEED), None).unwrap();
            let tr = rep.scalar_trace();
            let mut db_sum = 0.0;
            let mut un_sum = 0.0;
            let mut worst = f64::INFINITY;
            for (inputs, clean, mask) in &eval {
                let rec = stack.reconstruct(inputs).unwrap();
                let mv = mask.to_vec();
                let m: Vec<u8> = mv.iter().map(|&v| if v > 0.5 { 1 } else { 0 }).collect();
                let inv: Vec<u8> = mv.iter().map(|&v| if v > 0.5 { 0 } else { 1 }).collect();
                let db = masked_psnr(&rec, clean, &m).unwrap();
                worst = worst.min(db);
                db_sum += db;
                un_sum += masked_psnr(&rec, clean, &inv).unwrap();
            }
            println!(
                "convlstm: loss first {:.4} last {:.4}, masked psnr {:.2} dB (worst {:.2}), unmasked {:.2} dB",
                tr[0], tr[tr.len() - 1], db_sum / eval.len() as f64, worst, un_sum / eval.len() as f64
            );
        }
        "floor" => {
            let c = synth_cfg();
            let mut r = substream(SEED, "tune/occ");
            let occ = OccluderConfig::default();
            let mut ent = 0.0f64;
            let mut n = 0usize;
            let mut copy_db = 0.0;
            let mut occ_db = 0.0;
            let mut cnt = 0usize;
            for id in 0..8 {
                let seq = synth_sequence(SEED, id, 0, &c);
                for t in 2..6 {
                    let (o, m) = synth_occlude(&seq.clean_frames[t], &mut r, &occ).unwrap();
                    let y = seq.clean_frames[t].to_vec();
                    for &v in &y {
                        let v = (v as f64).clamp(1e-7, 1.0 - 1e-7);
                        ent += -(v * v.ln() + (1.0 - v) * (1.0 - v).ln());
                        n += 1;
                    }
                    let mk: Vec<u8> = m.to_vec().iter().map(|&v| if v > 0.5 { 1 } else { 0 }).collect();
                    copy_db += masked_psnr(&seq.clean_frames[t - 1], &seq.clean_frames[t], &mk).unwrap();
                    occ_db += masked_psnr(&o, &seq.clean_frames[t], &mk).unwrap();
                    cnt += 1;
                }
            }
            println!(
                "bce entropy floor {:.4}, copy-prev masked psnr {:.2} dB, occluded-input {:.2} dB",
                ent / n as f64,
                copy_db / cnt as f64,
                occ_db / cnt as f64
            );
        }
        "autoencoder" => {
            let set = occluded_set();
            let pairs: Vec<(Tensor<f32>, Tensor<f32>)> =
                set.iter().map(|(o, c, _)| (o.clone(), c.clone())).collect();
            let model = AutoencoderModel::<f32>::new(
                &mut substream(SEED, "init/autoencoder"),
                AutoencoderConfig { input_size: SIZE, widths: widths.clone() },
            );
            let (rep, _) =
                train_autoencoder(&model, &pairs, &TrainConfig::new(epochs, 8, lr, SEED), None).unwrap();
            let tr = rep.scalar_trace();
            let mut db = 0.0;
            let mut mdb = 0.0;
            let mut udb = 0.0;
            for (o, c, mk) in &set {
                let rec = model.reconstruct(o).unwrap();
                db += psnr(&rec, c).unwrap();
                let mv = mk.to_vec();
                let m: Vec<u8> = mv.iter().map(|&v| if v > 0.5 { 1 } else { 0 }).collect();
                let inv: Vec<u8> = mv.iter().map(|&v| if v > 0.5 { 0 } else { 1 }).collect();
                mdb += masked_psnr(&rec, c, &m).unwrap();
                udb += masked_psnr(&rec, c, &inv).unwrap();
            }
            let n = set.len() as f64;
            println!(
                "autoencoder: loss first {:.4} last {:.4}, psnr {:.2} dB (masked {:.2}, unmasked {:.2})",
                tr[0], tr[tr.len() - 1], db / n, mdb / n, udb / n
            );
        }
        "cgan" => {
            let set = occluded_set();
            let pairs: Vec<RefinePair> = set
                .iter()
                .map(|(o, c, _)| RefinePair { coarse: o.clone(), target: c.clone() })
                .collect();
            let model = CganModel::<f32>::new(
                &mut substream(SEED, "init/cgan"),
                CganConfig {
                    input_size: SIZE,
                    unet_depth: 3,
                    unet_base_width: 16,
                    disc_widths: vec![16, 32, 64],
                    lambda_l1: 100.0,
                },
            );
            let (rep, _) =
                train_cgan(&model, &pairs, &TrainConfig::new(epochs, 1, lr, SEED), None).unwrap();
            let first = rep.epoch_losses[0][1];
            let last = rep.epoch_losses[rep.epoch_losses.len() - 1][1];
            println!("cgan: L1 first {first:.5} last {last:.5} (ratio {:.2})", last / first);
        }
        "siamese" => {
            let (frames, labels) = clean_frames();
            let mut r = substream(SEED, "tune/pairs");
            let pairs = sample_pairs(&labels, &mut r, 32, 0.5).unwrap();
            let model = SiameseModel::<f32>::new(
                &mut substream(SEED, "init/siamese"),
                SiameseConfig { input_size: SIZE, widths: vec![16, 32, 64, 128], embed_dim: 64, margin: 1.0 },
            );
            let (rep, _) =
                train_siamese(&model, &frames, &pairs, &TrainConfig::new(epochs, 8, lr, SEED), None)
                    .unwrap();
            let tr = rep.scalar_trace();
            println!("siamese: loss first {:.6} last {:.6}", tr[0], tr[tr.len() - 1]);
        }
        other => eprintln!("unknown model {other}"),
    }
    println!("took {:.0}s", t0.elapsed().as_secs_f64());
}

//! End-to-end orchestration: detection-gated routing, re-id evaluation, and
//! the synthetic four-condition benchmark, plus the run-directory layout that
//! makes every run replayable (resolved config, seed, checkpoint hashes,
//! metric CSVs).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::autoencoder::{self, AutoencoderModel};
use crate::cgan::{self, CganModel, RefinePair};
use crate::config::{ConfigError, Mode, PipelineConfig, TrainParams};
use crate::convlstm::{self, ConvLstmSample, ConvLstmStack};
use crate::detector::{self, DetectorModel, FrameClass, LabeledFrame};
use crate::io::{load_checkpoint, save_checkpoint, Checkpoint, IoError};
use crate::metrics::{
    cmc, masked_psnr, mean_average_precision, metric_rows, write_metrics_csv,
    write_metrics_jsonl, MetricRow, RankingResult,
};
use crate::rng::substream;
use crate::siamese::{self, rank_gallery, SiameseModel};
use crate::synth::{occlude_sequence, sample_pairs, synth_sequence, FrameSequence, SynthError};
use crate::tensor::{Tensor, TensorError};
use crate::train::{TrainConfig, TrainReport};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("file: {0}")]
    File(#[from] std::io::Error),
    #[error("{0}")]
    Setup(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

// ---------------------------------------------------------------------------
// model construction and checkpoint wiring

/// Build an untrained model of each kind with its own init substream, so the
/// parameter draw of one model never shifts another's.
pub fn init_detector(cfg: &PipelineConfig) -> DetectorModel<f32> {
    let mut rng = substream(cfg.seed, "init/detector");
    DetectorModel::new(&mut rng, cfg.detector.clone())
}

pub fn init_convlstm(cfg: &PipelineConfig) -> ConvLstmStack<f32> {
    let mut rng = substream(cfg.seed, "init/convlstm");
    ConvLstmStack::new(&mut rng, cfg.convlstm.clone())
}

pub fn init_autoencoder(cfg: &PipelineConfig) -> AutoencoderModel<f32> {
    let mut rng = substream(cfg.seed, "init/autoencoder");
    AutoencoderModel::new(&mut rng, cfg.autoencoder.clone())
}

pub fn init_cgan(cfg: &PipelineConfig) -> CganModel<f32> {
    let mut rng = substream(cfg.seed, "init/cgan");
    CganModel::new(&mut rng, cfg.cgan.clone())
}

pub fn init_siamese(cfg: &PipelineConfig) -> SiameseModel<f32> {
    let mut rng = substream(cfg.seed, "init/siamese");
    SiameseModel::new(&mut rng, cfg.siamese.clone())
}

/// Load a checkpoint of the expected kind into freshly built parameters.
pub fn restore_from(
    path: &Path,
    kind: &str,
    params: &[(String, Tensor<f32>)],
) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    ck.expect_kind(kind)?;
    ck.restore_params(params)?;
    Ok(ck)
}

pub fn train_config(p: &TrainParams, seed: u64) -> TrainConfig {
    TrainConfig::new(p.epochs, p.batch_size, p.learning_rate, seed)
}

// ---------------------------------------------------------------------------
// detection-gated routing

/// What happened to one frame on its way through the pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct RoutingRecord {
    pub frame_index: usize,
    pub score: f64,
    pub occluded: bool,
    /// stage names in execution order, e.g. ["detector","convlstm","cgan"]
    pub stages: Vec<String>,
}

/// The models the router may need; only the coarse path matching the mode
/// must be present.
pub struct RoutingModels<'a> {
    pub detector: &'a DetectorModel<f32>,
    pub convlstm: Option<&'a ConvLstmStack<f32>>,
    pub autoencoder: Option<&'a AutoencoderModel<f32>>,
    pub cgan: Option<&'a CganModel<f32>>,
}

impl RoutingModels<'_> {
    /// Missing stage for the chosen mode is a startup error, raised before
    /// any frame is touched.
    fn check(&self, mode: Mode) -> Result<()> {
        match mode {
            Mode::Sequential if self.convlstm.is_none() => Err(PipelineError::Setup(
                "sequential mode needs a Conv-LSTM checkpoint".into(),
            )),
            Mode::NonSequential if self.autoencoder.is_none() => Err(PipelineError::Setup(
                "non-sequential mode needs an autoencoder checkpoint".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Route frames through detect -> coarse-reconstruct -> refine. Frames the
/// detector calls unoccluded pass through bit-exactly. In sequential mode an
/// occluded frame n is reconstructed from the context window ending at n
/// (frames n-2, n-1, n for the default window of 3).
pub fn route_and_reconstruct(
    models: &RoutingModels<'_>,
    frames: &[Tensor<f32>],
    mode: Mode,
) -> Result<(Vec<Tensor<f32>>, Vec<RoutingRecord>)> {
    models.check(mode)?;
    let mut out = Vec::with_capacity(frames.len());
    let mut log = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let score = models.detector.detect(frame)? as f64;
        let occluded = models.detector.classify(frame)? == FrameClass::Occluded;
        let mut stages = vec!["detector".to_string()];
        let processed = if !occluded {
            frame.clone()
        } else {
            let coarse = match mode {
                Mode::Sequential => {
                    stages.push("convlstm".into());
                    let stack = models.convlstm.expect("checked");
                    let start = i.saturating_sub(stack.config.sequence_len - 1);
                    stack.reconstruct(&frames[start..=i])?
                }
                Mode::NonSequential => {
                    stages.push("autoencoder".into());
                    models.autoencoder.expect("checked").reconstruct(frame)?
                }
            };
            match models.cgan {
                Some(g) => {
                    stages.push("cgan".into());
                    g.refine(&coarse)?
                }
                None => coarse,
            }
        };
        out.push(processed);
        log.push(RoutingRecord {
            frame_index: i,
            score,
            occluded,
            stages,
        });
    }
    Ok((out, log))
}

// ---------------------------------------------------------------------------
// re-id evaluation

/// Rank the gallery for every probe. `gallery`/`probes` pair frames with
/// identity labels; relevance means identity equality.
pub fn evaluate_reid(
    model: &SiameseModel<f32>,
    gallery: &[(Tensor<f32>, usize)],
    probes: &[(Tensor<f32>, usize)],
) -> Result<Vec<RankingResult>> {
    let g_frames: Vec<Tensor<f32>> = gallery.iter().map(|(f, _)| f.clone()).collect();
    let mut results = Vec::with_capacity(probes.len());
    for (frame, id) in probes {
        let ranking = rank_gallery(model, frame, &g_frames)?;
        let relevant = gallery.iter().map(|(_, gid)| gid == id).collect();
        results.push(RankingResult { ranking, relevant });
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// synthetic benchmark

/// The generated corpus: one clean gallery track plus occluded probe tracks
/// per identity.
pub struct BenchmarkData {
    pub gallery_tracks: Vec<FrameSequence>,
    pub probe_tracks: Vec<FrameSequence>,
}

pub fn generate_benchmark_data(cfg: &PipelineConfig) -> Result<BenchmarkData> {
    let b = &cfg.benchmark;
    let mut synth = cfg.synth;
    synth.identity_count = b.identity_count;
    synth.track_len = b.track_len;
    let mut occ_rng = substream(cfg.seed, "bench/occlude");
    let clean_prefix = cfg.convlstm.sequence_len.saturating_sub(1);
    let mut gallery_tracks = Vec::new();
    let mut probe_tracks = Vec::new();
    for identity in 0..b.identity_count {
        for t in 0..b.tracks_per_identity {
            let track = identity * b.tracks_per_identity + t;
            let mut seq = synth_sequence(cfg.seed, identity, track, &synth);
            if t == 0 {
                gallery_tracks.push(seq);
            } else {
                occlude_sequence(
                    &mut seq,
                    &mut occ_rng,
                    &cfg.occluder,
                    b.occluded_fraction,
                    clean_prefix,
                )?;
                probe_tracks.push(seq);
            }
        }
    }
    Ok(BenchmarkData {
        gallery_tracks,
        probe_tracks,
    })
}

/// Everything the benchmark trains, reusable for ad-hoc inference afterwards.
pub struct TrainedModels {
    pub detector: DetectorModel<f32>,
    pub convlstm: ConvLstmStack<f32>,
    pub autoencoder: AutoencoderModel<f32>,
    pub cgan: CganModel<f32>,
    pub siamese: SiameseModel<f32>,
    pub checkpoints: Vec<(String, Checkpoint)>,
    pub reports: Vec<(String, TrainReport)>,
}

pub fn detector_training_set(data: &BenchmarkData) -> Vec<LabeledFrame> {
    let mut out = Vec::new();
    for seq in data.gallery_tracks.iter().chain(&data.probe_tracks) {
        for (i, frame) in seq.frames.iter().enumerate() {
            out.push(LabeledFrame {
                frame: frame.clone(),
                occluded: seq.occlusion_flags[i],
            });
        }
    }
    out
}

pub fn convlstm_training_set(data: &BenchmarkData, seq_len: usize) -> Vec<ConvLstmSample> {
    let mut out = Vec::new();
    for seq in &data.probe_tracks {
        for (i, &occ) in seq.occlusion_flags.iter().enumerate() {
            if !occ {
                continue;
            }
            let start = i.saturating_sub(seq_len - 1);
            let mut inputs: Vec<Tensor<f32>> = seq.frames[start..=i].to_vec();
            while inputs.len() < seq_len {
                inputs.insert(0, inputs[0].clone());
            }
            out.push(ConvLstmSample {
                inputs,
                target: seq.clean_frames[i].clone(),
            });
        }
    }
    out
}

pub fn autoencoder_training_set(data: &BenchmarkData) -> Vec<(Tensor<f32>, Tensor<f32>)> {
    let mut out = Vec::new();
    for seq in &data.probe_tracks {
        for (i, &occ) in seq.occlusion_flags.iter().enumerate() {
            if occ {
                out.push((seq.frames[i].clone(), seq.clean_frames[i].clone()));
            }
        }
    }
    out
}

/// Coarse outputs (per the chosen mode) paired with clean targets, the cGAN's
/// training set: the refiner learns on what the coarse stage actually emits.
pub fn cgan_training_set(
    data: &BenchmarkData,
    mode: Mode,
    convlstm: &ConvLstmStack<f32>,
    ae: &AutoencoderModel<f32>,
) -> Result<Vec<RefinePair>> {
    let mut out = Vec::new();
    for seq in &data.probe_tracks {
        for (i, &occ) in seq.occlusion_flags.iter().enumerate() {
            if !occ {
                continue;
            }
            let coarse = match mode {
                Mode::Sequential => {
                    let start = i.saturating_sub(convlstm.config.sequence_len - 1);
                    convlstm.reconstruct(&seq.frames[start..=i])?
                }
                Mode::NonSequential => ae.reconstruct(&seq.frames[i])?,
            };
            out.push(RefinePair {
                coarse: coarse.detach(),
                target: seq.clean_frames[i].clone(),
            });
        }
    }
    Ok(out)
}

/// Clean frames with identity labels, the matcher's training pool.
pub fn siamese_training_set(data: &BenchmarkData) -> (Vec<Tensor<f32>>, Vec<usize>) {
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for seq in data.gallery_tracks.iter().chain(&data.probe_tracks) {
        for f in &seq.clean_frames {
            frames.push(f.clone());
            labels.push(seq.identity_id);
        }
    }
    (frames, labels)
}

/// Train all five models on the generated corpus.
pub fn train_all(cfg: &PipelineConfig, data: &BenchmarkData) -> Result<TrainedModels> {
    let mut checkpoints = Vec::new();
    let mut reports = Vec::new();

    let det = init_detector(cfg);
    let (rep, ck) = crate::detector::train_detector(
        &det,
        &detector_training_set(data),
        &train_config(&cfg.train.detector, cfg.seed),
        None,
    )?;
    checkpoints.push((detector::MODEL_KIND.to_string(), ck));
    reports.push((detector::MODEL_KIND.to_string(), rep));

    let lstm = init_convlstm(cfg);
    let lstm_set = convlstm_training_set(data, cfg.convlstm.sequence_len);
    let (rep, ck) = crate::convlstm::train_conv_lstm(
        &lstm,
        &lstm_set,
        &train_config(&cfg.train.convlstm, cfg.seed),
        None,
    )?;
    checkpoints.push((convlstm::MODEL_KIND.to_string(), ck));
    reports.push((convlstm::MODEL_KIND.to_string(), rep));

    let ae = init_autoencoder(cfg);
    let ae_set = autoencoder_training_set(data);
    let (rep, ck) = crate::autoencoder::train_autoencoder(
        &ae,
        &ae_set,
        &train_config(&cfg.train.autoencoder, cfg.seed),
        None,
    )?;
    checkpoints.push((autoencoder::MODEL_KIND.to_string(), ck));
    reports.push((autoencoder::MODEL_KIND.to_string(), rep));

    let gan = init_cgan(cfg);
    let gan_set = cgan_training_set(data, cfg.mode, &lstm, &ae)?;
    let (rep, ck) = crate::cgan::train_cgan(
        &gan,
        &gan_set,
        &train_config(&cfg.train.cgan, cfg.seed),
        None,
    )?;
    checkpoints.push((cgan::MODEL_KIND.to_string(), ck));
    reports.push((cgan::MODEL_KIND.to_string(), rep));

    let siam = init_siamese(cfg);
    let (frames, labels) = siamese_training_set(data);
    let mut pair_rng = substream(cfg.seed, "bench/pairs");
    // pair coverage drives retrieval quality far more than extra epochs do
    let pairs = sample_pairs(&labels, &mut pair_rng, (frames.len() * 15).max(32), 0.5)?;
    let (rep, ck) = crate::siamese::train_siamese(
        &siam,
        &frames,
        &pairs,
        &train_config(&cfg.train.siamese, cfg.seed),
        None,
    )?;
    checkpoints.push((siamese::MODEL_KIND.to_string(), ck));
    reports.push((siamese::MODEL_KIND.to_string(), rep));

    Ok(TrainedModels {
        detector: det,
        convlstm: lstm,
        autoencoder: ae,
        cgan: gan,
        siamese: siam,
        checkpoints,
        reports,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub condition: String,
    pub rank1: f64,
    pub map: f64,
    /// mean PSNR over occluded regions, where the condition reconstructs
    pub psnr_occluded: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub mode: Mode,
    pub seed: u64,
    pub rows: Vec<BenchmarkRow>,
}

pub const CONDITIONS: [&str; 4] = ["occluded_raw", "coarse", "coarse_cgan", "clean_oracle"];

fn condition_frames(
    models: &TrainedModels,
    mode: Mode,
    seq: &FrameSequence,
    condition: &str,
) -> Result<(Vec<Tensor<f32>>, Vec<Option<f64>>)> {
    if condition == "clean_oracle" {
        return Ok((seq.clean_frames.clone(), vec![None; seq.frames.len()]));
    }
    if condition == "occluded_raw" {
        return Ok((seq.frames.clone(), vec![None; seq.frames.len()]));
    }
    let routing = RoutingModels {
        detector: &models.detector,
        convlstm: Some(&models.convlstm),
        autoencoder: Some(&models.autoencoder),
        cgan: (condition == "coarse_cgan").then_some(&models.cgan),
    };
    let (frames, _log) = route_and_reconstruct(&routing, &seq.frames, mode)?;
    // reconstruction fidelity on truly occluded pixels
    let mut psnrs = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        psnrs.push(match &seq.masks[i] {
            Some(mask) => {
                let m: Vec<u8> = mask.data().iter().map(|&v| (v > 0.0) as u8).collect();
                Some(masked_psnr(f, &seq.clean_frames[i], &m)?)
            }
            None => None,
        });
    }
    Ok((frames, psnrs))
}

/// The four-condition ablation over a shared probe/gallery split.
pub fn run_benchmark(cfg: &PipelineConfig) -> Result<(BenchmarkReport, TrainedModels)> {
    cfg.validate()?;
    let data = generate_benchmark_data(cfg)?;
    let models = train_all(cfg, &data)?;
    let report = evaluate_benchmark(cfg, &data, &models)?;
    Ok((report, models))
}

/// Evaluate already-trained models; split out so callers can reuse training.
pub fn evaluate_benchmark(
    cfg: &PipelineConfig,
    data: &BenchmarkData,
    models: &TrainedModels,
) -> Result<BenchmarkReport> {
    let gallery: Vec<(Tensor<f32>, usize)> = data
        .gallery_tracks
        .iter()
        .flat_map(|seq| {
            seq.clean_frames
                .iter()
                .map(|f| (f.clone(), seq.identity_id))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut rows = Vec::new();
    for &condition in &CONDITIONS {
        let mut probes = Vec::new();
        let mut psnr_sum = 0.0f64;
        let mut psnr_n = 0usize;
        for seq in &data.probe_tracks {
            let (frames, psnrs) = condition_frames(models, cfg.mode, seq, condition)?;
            for (f, p) in frames.into_iter().zip(psnrs) {
                probes.push((f, seq.identity_id));
                if let Some(db) = p {
                    if db.is_finite() {
                        psnr_sum += db;
                        psnr_n += 1;
                    }
                }
            }
        }
        let results = evaluate_reid(&models.siamese, &gallery, &probes)?;
        let curve = cmc(&results, gallery.len().min(10))?;
        let map = mean_average_precision(&results)?;
        rows.push(BenchmarkRow {
            condition: condition.to_string(),
            rank1: curve[0],
            map,
            psnr_occluded: (psnr_n > 0).then(|| psnr_sum / psnr_n as f64),
        });
    }
    Ok(BenchmarkReport {
        mode: cfg.mode,
        seed: cfg.seed,
        rows,
    })
}

// ---------------------------------------------------------------------------
// run directories

/// `runs/<timestamp>-<seed>/` holding everything needed to replay the run.
pub fn create_run_dir(report_dir: &Path, seed: u64) -> Result<PathBuf> {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut dir = report_dir.join(format!("{stamp}-{seed}"));
    // a second run within the same second gets a suffixed directory
    let mut bump = 0;
    while dir.exists() {
        bump += 1;
        dir = report_dir.join(format!("{stamp}-{seed}.{bump}"));
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// Write the resolved config, checkpoint hashes, and training traces into a
/// run directory. Checkpoints land in `<dir>/checkpoints/`.
pub fn save_run_artifacts(
    dir: &Path,
    cfg: &PipelineConfig,
    models: Option<&TrainedModels>,
) -> Result<()> {
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    fs::write(dir.join("seed"), format!("{}\n", cfg.seed))?;
    if let Some(models) = models {
        let ck_dir = dir.join("checkpoints");
        fs::create_dir_all(&ck_dir)?;
        let mut hashes = BTreeMap::new();
        for (kind, ck) in &models.checkpoints {
            let path = ck_dir.join(format!("{kind}.ocrx"));
            save_checkpoint(ck, &path)?;
            hashes.insert(kind.clone(), sha256_file(&path)?);
        }
        fs::write(
            dir.join("checkpoint_hashes.json"),
            serde_json::to_string_pretty(&hashes).expect("hash map serializes"),
        )?;
        let mut traces = String::new();
        for (kind, rep) in &models.reports {
            for (epoch, losses) in rep.epoch_losses.iter().enumerate() {
                let cols: Vec<String> = losses.iter().map(f64::to_string).collect();
                let _ = writeln!(traces, "{kind},{epoch},{}", cols.join(","));
            }
        }
        fs::write(dir.join("loss_traces.csv"), traces)?;
    }
    Ok(())
}

/// Metric CSV plus a JSON-lines summary for each benchmark condition.
pub fn save_benchmark_report(dir: &Path, report: &BenchmarkReport) -> Result<()> {
    let mut table = String::from("condition,rank1,map,psnr_occluded\n");
    for r in &report.rows {
        let _ = writeln!(
            table,
            "{},{},{},{}",
            r.condition,
            r.rank1,
            r.map,
            r.psnr_occluded.map(|v| v.to_string()).unwrap_or_default()
        );
    }
    fs::write(dir.join("benchmark.csv"), table)?;
    let mut jsonl = Vec::new();
    for r in &report.rows {
        let rows: Vec<MetricRow> = metric_rows(&[r.rank1], r.map, r.psnr_occluded);
        write_metrics_jsonl(&mut jsonl, &r.condition, &rows)?;
    }
    fs::write(dir.join("benchmark.jsonl"), jsonl)?;
    Ok(())
}

/// CMC/mAP CSV for a standalone evaluation.
pub fn save_eval_report(dir: &Path, results: &[RankingResult], k_max: usize) -> Result<()> {
    let curve = cmc(results, k_max)?;
    let map = mean_average_precision(results)?;
    let rows = metric_rows(&curve, map, None);
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &rows)?;
    fs::write(dir.join("metrics.csv"), csv)?;
    let mut jsonl = Vec::new();
    write_metrics_jsonl(&mut jsonl, "evaluate", &rows)?;
    fs::write(dir.join("metrics.jsonl"), jsonl)?;
    Ok(())
}

//! Pipeline command line: dataset synthesis, the five trainers, routing-based
//! reconstruction, re-id evaluation, and the four-condition benchmark.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ocrx::config::{ConfigError, Mode, PipelineConfig};
use ocrx::io::{load_checkpoint, save_checkpoint, Checkpoint, DatasetManifest, ManifestEntry, Split};
use ocrx::pipeline::{
    self, create_run_dir, evaluate_reid, route_and_reconstruct, save_benchmark_report,
    save_eval_report, save_run_artifacts, PipelineError, RoutingModels,
};
use ocrx::synth::sample_pairs;
use ocrx::tensor::Tensor;
use ocrx::train::TrainReport;

#[derive(Parser)]
#[command(name = "ocrx", version, about = "occlusion-aware re-identification pipeline")]
struct Cli {
    /// TOML pipeline configuration; defaults apply for missing keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured run seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic corpus as PPM/PGM files plus a manifest
    SynthData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the occlusion detector
    TrainDetector(TrainArgs),
    /// Train the sequential (Conv-LSTM) reconstructor
    TrainConvlstm(TrainArgs),
    /// Train the non-sequential (autoencoder) reconstructor
    TrainAutoencoder(TrainArgs),
    /// Train the conditional-GAN refiner
    TrainCgan(TrainArgs),
    /// Train the Siamese matcher
    TrainSiamese(TrainArgs),
    /// Route a track through detect/reconstruct/refine
    Reconstruct {
        /// sequential (video) or non_sequential (stills)
        #[arg(long)]
        mode: Option<String>,
        /// directory of PPM frames, processed in name order
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        convlstm: Option<PathBuf>,
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        #[arg(long)]
        cgan: Option<PathBuf>,
    },
    /// Rank gallery manifests against probe manifests with a trained matcher
    Evaluate {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train everything and run the four-condition ablation
    Benchmark {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    /// checkpoint to write
    #[arg(long)]
    out: PathBuf,
    /// checkpoint to resume from
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with success; everything
            // else is a usage error on stderr
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (PipelineError::Config(_) | PipelineError::Setup(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = load_config(&cli)?;
    eprintln!(
        "ocrx {} seed={} mode={}",
        env!("CARGO_PKG_VERSION"),
        cfg.seed,
        cfg.mode
    );
    match cli.cmd {
        Cmd::SynthData { out } => synth_data(&cfg, &out),
        Cmd::TrainDetector(args) => train_one(&cfg, "detector", &args),
        Cmd::TrainConvlstm(args) => train_one(&cfg, "convlstm", &args),
        Cmd::TrainAutoencoder(args) => train_one(&cfg, "autoencoder", &args),
        Cmd::TrainCgan(args) => train_one(&cfg, "cgan", &args),
        Cmd::TrainSiamese(args) => train_one(&cfg, "siamese", &args),
        Cmd::Reconstruct {
            mode,
            input,
            out,
            detector,
            convlstm,
            autoencoder,
            cgan,
        } => reconstruct(
            &cfg, mode.as_deref(), &input, &out, &detector,
            convlstm.as_deref(), autoencoder.as_deref(), cgan.as_deref(),
        ),
        Cmd::Evaluate {
            gallery,
            probe,
            ckpt,
            out,
        } => evaluate(&cfg, &gallery, &probe, &ckpt, out.as_deref()),
        Cmd::Benchmark { out } => benchmark(&cfg, out.as_deref()),
    }
}

/// Write the benchmark corpus to disk: `id_t/frame_i.ppm` (+ `.mask.pgm`
/// beside occluded frames) and a `dataset.manifest` binding them to splits.
fn synth_data(cfg: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let data = pipeline::generate_benchmark_data(cfg)?;
    std::fs::create_dir_all(out)?;
    let mut entries = Vec::new();
    for (split, tracks) in [
        (Split::Gallery, &data.gallery_tracks),
        (Split::Probe, &data.probe_tracks),
    ] {
        for seq in tracks {
            let track_dir = format!("id{}_t{}", seq.identity_id, seq.track_id);
            std::fs::create_dir_all(out.join(&track_dir))?;
            for (i, frame) in seq.frames.iter().enumerate() {
                let rel = PathBuf::from(&track_dir).join(format!("frame_{i:03}.ppm"));
                ocrx::io::write_frame(frame, &out.join(&rel))?;
                let mask_path = match &seq.masks[i] {
                    Some(mask) => {
                        let rel_mask =
                            PathBuf::from(&track_dir).join(format!("frame_{i:03}.mask.pgm"));
                        ocrx::io::write_mask(mask, &out.join(&rel_mask))?;
                        Some(rel_mask)
                    }
                    None => None,
                };
                entries.push(ManifestEntry {
                    identity_id: seq.identity_id,
                    track_id: seq.track_id,
                    split,
                    frame_path: rel,
                    occluded: seq.occlusion_flags[i],
                    mask_path,
                });
            }
        }
    }
    let manifest = DatasetManifest {
        root: out.to_path_buf(),
        entries,
    };
    manifest.save(&out.join("dataset.manifest"))?;
    manifest.validate()?;
    eprintln!("wrote {} frames under {}", manifest.entries.len(), out.display());
    Ok(())
}

/// All trainers draw their data from the deterministic synthetic corpus the
/// config describes, so a fixed seed reproduces every trace.
fn train_one(cfg: &PipelineConfig, kind: &str, args: &TrainArgs) -> Result<(), PipelineError> {
    let resume: Option<Checkpoint> = match &args.resume {
        Some(p) => Some(load_checkpoint(p)?),
        None => None,
    };
    let resume = resume.as_ref();
    let data = pipeline::generate_benchmark_data(cfg)?;
    let (report, ck): (TrainReport, Checkpoint) = match kind {
        "detector" => {
            let model = pipeline::init_detector(cfg);
            ocrx::detector::train_detector(
                &model,
                &pipeline::detector_training_set(&data),
                &pipeline::train_config(&cfg.train.detector, cfg.seed),
                resume,
            )?
        }
        "convlstm" => {
            let model = pipeline::init_convlstm(cfg);
            ocrx::convlstm::train_conv_lstm(
                &model,
                &pipeline::convlstm_training_set(&data, cfg.convlstm.sequence_len),
                &pipeline::train_config(&cfg.train.convlstm, cfg.seed),
                resume,
            )?
        }
        "autoencoder" => {
            let model = pipeline::init_autoencoder(cfg);
            ocrx::autoencoder::train_autoencoder(
                &model,
                &pipeline::autoencoder_training_set(&data),
                &pipeline::train_config(&cfg.train.autoencoder, cfg.seed),
                resume,
            )?
        }
        "cgan" => {
            // the refiner trains on what the coarse stage actually emits, so
            // both coarse models are trained (deterministically) first
            let lstm = pipeline::init_convlstm(cfg);
            let (_r, _c) = ocrx::convlstm::train_conv_lstm(
                &lstm,
                &pipeline::convlstm_training_set(&data, cfg.convlstm.sequence_len),
                &pipeline::train_config(&cfg.train.convlstm, cfg.seed),
                None,
            )?;
            let ae = pipeline::init_autoencoder(cfg);
            let (_r, _c) = ocrx::autoencoder::train_autoencoder(
                &ae,
                &pipeline::autoencoder_training_set(&data),
                &pipeline::train_config(&cfg.train.autoencoder, cfg.seed),
                None,
            )?;
            let model = pipeline::init_cgan(cfg);
            ocrx::cgan::train_cgan(
                &model,
                &pipeline::cgan_training_set(&data, cfg.mode, &lstm, &ae)?,
                &pipeline::train_config(&cfg.train.cgan, cfg.seed),
                resume,
            )?
        }
        "siamese" => {
            let model = pipeline::init_siamese(cfg);
            let (frames, labels) = pipeline::siamese_training_set(&data);
            let mut rng = ocrx::rng::substream(cfg.seed, "bench/pairs");
            let pairs = sample_pairs(&labels, &mut rng, frames.len().max(32), 0.5)?;
            ocrx::siamese::train_siamese(
                &model,
                &frames,
                &pairs,
                &pipeline::train_config(&cfg.train.siamese, cfg.seed),
                resume,
            )?
        }
        _ => unreachable!("subcommands cover all kinds"),
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_checkpoint(&ck, &args.out)?;
    for (epoch, losses) in report.epoch_losses.iter().enumerate() {
        let cols: Vec<String> = losses.iter().map(f64::to_string).collect();
        println!("{kind},{epoch},{}", cols.join(","));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("saved {} checkpoint to {}", kind, args.out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn reconstruct(
    cfg: &PipelineConfig,
    mode: Option<&str>,
    input: &Path,
    out: &Path,
    detector_ck: &Path,
    convlstm_ck: Option<&Path>,
    autoencoder_ck: Option<&Path>,
    cgan_ck: Option<&Path>,
) -> Result<(), PipelineError> {
    let mode = match mode {
        None => cfg.mode,
        Some("sequential") => Mode::Sequential,
        Some("non_sequential" | "non-sequential") => Mode::NonSequential,
        Some(other) => {
            return Err(ConfigError::Invalid(format!("unknown mode {other:?}")).into());
        }
    };
    let detector = pipeline::init_detector(cfg);
    pipeline::restore_from(detector_ck, "detector", &detector.named_params())?;
    let convlstm = match convlstm_ck {
        Some(p) => {
            let m = pipeline::init_convlstm(cfg);
            pipeline::restore_from(p, "convlstm", &m.named_params())?;
            Some(m)
        }
        None => None,
    };
    let autoencoder = match autoencoder_ck {
        Some(p) => {
            let m = pipeline::init_autoencoder(cfg);
            pipeline::restore_from(p, "autoencoder", &m.named_params())?;
            Some(m)
        }
        None => None,
    };
    let cgan = match cgan_ck {
        Some(p) => {
            let m = pipeline::init_cgan(cfg);
            pipeline::restore_from(p, "cgan", &m.named_params())?;
            Some(m)
        }
        None => None,
    };
    let models = RoutingModels {
        detector: &detector,
        convlstm: convlstm.as_ref(),
        autoencoder: autoencoder.as_ref(),
        cgan: cgan.as_ref(),
    };

    let mut frame_files: Vec<PathBuf> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "ppm").unwrap_or(false))
        .collect();
    frame_files.sort();
    if frame_files.is_empty() {
        return Err(PipelineError::Setup(format!(
            "no .ppm frames under {}",
            input.display()
        )));
    }
    let frames: Vec<Tensor<f32>> = frame_files
        .iter()
        .map(|p| ocrx::io::read_frame(p))
        .collect::<Result<_, _>>()?;

    let (processed, log) = route_and_reconstruct(&models, &frames, mode)?;
    std::fs::create_dir_all(out)?;
    let mut written = 0;
    for (i, record) in log.iter().enumerate() {
        if record.occluded {
            let name = frame_files[i]
                .file_name()
                .expect("frame path has a file name");
            ocrx::io::write_frame(&processed[i], &out.join(name))?;
            written += 1;
        }
    }
    let mut jsonl = String::new();
    for record in &log {
        jsonl.push_str(&serde_json::to_string(record).expect("record serializes"));
        jsonl.push('\n');
    }
    std::fs::write(out.join("routing.jsonl"), jsonl)?;
    eprintln!(
        "reconstructed {written} of {} frames into {}",
        frames.len(),
        out.display()
    );
    Ok(())
}

fn load_split(manifest: &DatasetManifest, split: Split) -> Result<Vec<(Tensor<f32>, usize)>, PipelineError> {
    let mut out = Vec::new();
    for e in manifest.split(split) {
        out.push((
            ocrx::io::read_frame(&manifest.resolve(&e.frame_path))?,
            e.identity_id,
        ));
    }
    Ok(out)
}

fn evaluate(
    cfg: &PipelineConfig,
    gallery: &Path,
    probe: &Path,
    ckpt: &Path,
    out: Option<&Path>,
) -> Result<(), PipelineError> {
    let model = pipeline::init_siamese(cfg);
    pipeline::restore_from(ckpt, "siamese", &model.named_params())?;
    let g_manifest = DatasetManifest::load(gallery)?;
    let p_manifest = DatasetManifest::load(probe)?;
    let gallery = load_split(&g_manifest, Split::Gallery)?;
    let probes = load_split(&p_manifest, Split::Probe)?;
    if gallery.is_empty() || probes.is_empty() {
        return Err(PipelineError::Setup(
            "need a non-empty gallery split and probe split".into(),
        ));
    }
    let results = evaluate_reid(&model, &gallery, &probes)?;
    let dir = match out {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            d.to_path_buf()
        }
        None => create_run_dir(&cfg.paths.report_dir, cfg.seed)?,
    };
    save_run_artifacts(&dir, cfg, None)?;
    save_eval_report(&dir, &results, gallery.len().min(10))?;
    println!("{}", std::fs::read_to_string(dir.join("metrics.csv"))?);
    eprintln!("report in {}", dir.display());
    Ok(())
}

fn benchmark(cfg: &PipelineConfig, out: Option<&Path>) -> Result<(), PipelineError> {
    let (report, models) = pipeline::run_benchmark(cfg)?;
    let dir = match out {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            d.to_path_buf()
        }
        None => create_run_dir(&cfg.paths.report_dir, cfg.seed)?,
    };
    save_run_artifacts(&dir, cfg, Some(&models))?;
    save_benchmark_report(&dir, &report)?;
    println!("{}", std::fs::read_to_string(dir.join("benchmark.csv"))?);
    eprintln!("report in {}", dir.display());
    Ok(())
}

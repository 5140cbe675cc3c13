use ocrx::config::PipelineConfig;
use ocrx::metrics::{cmc, mean_average_precision};
use ocrx::pipeline::{evaluate_reid, generate_benchmark_data, init_siamese, siamese_training_set};
use ocrx::rng::substream;
use ocrx::siamese::train_siamese;
use ocrx::synth::sample_pairs;
use ocrx::tensor::Tensor;
use ocrx::train::TrainConfig;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let pairs_n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(40);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(5e-4);
    let batch: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(8);

    let cfg = PipelineConfig::default();
    let data = generate_benchmark_data(&cfg).unwrap();
    let (frames, labels) = siamese_training_set(&data);
    let mut pair_rng = substream(cfg.seed, "bench/pairs");
    let pairs = sample_pairs(&labels, &mut pair_rng, pairs_n, 0.5).unwrap();
    let model = init_siamese(&cfg);
    let t0 = Instant::now();
    let (rep, _) = train_siamese(
        &model,
        &frames,
        &pairs,
        &TrainConfig::new(epochs, batch, lr, cfg.seed),
        None,
    )
    .unwrap();
    let train_time = t0.elapsed().as_secs_f64();
    let trace = rep.scalar_trace();
    println!(
        "pairs={pairs_n} epochs={epochs} lr={lr} batch={batch}: train {train_time:.0}s, loss first {:.4} last {:.4}",
        trace[0],
        trace[trace.len() - 1]
    );

    let gallery: Vec<(Tensor<f32>, usize)> = data
        .gallery_tracks
        .iter()
        .flat_map(|s| s.clean_frames.iter().map(|f| (f.clone(), s.identity_id)).collect::<Vec<_>>())
        .collect();
    let probes: Vec<(Tensor<f32>, usize)> = data
        .probe_tracks
        .iter()
        .flat_map(|s| s.clean_frames.iter().map(|f| (f.clone(), s.identity_id)).collect::<Vec<_>>())
        .collect();
    let results = evaluate_reid(&model, &gallery, &probes).unwrap();
    let curve = cmc(&results, 10).unwrap();
    let map = mean_average_precision(&results).unwrap();
    println!("clean rank1={:.3} map={:.3}", curve[0], map);
}

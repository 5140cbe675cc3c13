//! Synthetic benchmark data: colored patterned sprites translating over a
//! textured background, plus the synthetic occluder.
//!
//! Appearance is drawn once per identity, motion once per track, and every
//! draw comes from a named sub-stream of the run seed, so sequences are
//! bit-reproducible per (seed, identity, track).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::substream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SynthConfig {
    pub frame_size: usize,
    pub track_len: usize,
    pub identity_count: usize,
    /// sprite displacement per frame, pixels
    pub velocity: f64,
    /// bound on per-frame positional jitter, pixels
    pub jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            frame_size: 64,
            track_len: 8,
            identity_count: 10,
            velocity: 2.0,
            jitter: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Solid,
    Checker,
    Stripes,
}

#[derive(Debug, Clone)]
pub struct IdentityAppearance {
    pub primary: [f32; 3],
    pub secondary: [f32; 3],
    pub pattern: Pattern,
    /// sprite edge length in pixels
    pub size: usize,
}

/// One track of one identity, with per-frame occlusion labels and masks.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub track_id: usize,
    pub identity_id: usize,
    pub frames: Vec<Tensor<f32>>,
    pub occlusion_flags: Vec<bool>,
    pub masks: Vec<Option<Tensor<f32>>>,
    /// original un-occluded frames, kept as training targets
    pub clean_frames: Vec<Tensor<f32>>,
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f32; 3] {
    let h = (h.fract() + 1.0).fract() * 6.0;
    let i = h.floor() as i64 % 6;
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r as f32, g as f32, b as f32]
}

/// Golden-ratio spaced hues keep identities far apart in color space; the
/// remaining appearance parameters are random per identity.
pub fn identity_appearance(run_seed: u64, identity: usize, cfg: &SynthConfig) -> IdentityAppearance {
    let mut rng = substream(run_seed, &format!("synth/identity/{identity}"));
    let hue = identity as f64 * 0.618_033_988_749_895 + rng.gen_range(0.0..0.05);
    let primary = hsv_to_rgb(hue, 1.0, 1.0);
    let secondary = hsv_to_rgb(hue + 0.5, 0.9, rng.gen_range(0.85..1.0));
    let pattern = match identity % 3 {
        0 => Pattern::Solid,
        1 => Pattern::Checker,
        _ => Pattern::Stripes,
    };
    let lo = cfg.frame_size / 4;
    let hi = cfg.frame_size * 2 / 5;
    let size = rng.gen_range(lo..=hi.max(lo + 1));
    IdentityAppearance {
        primary,
        secondary,
        pattern,
        size,
    }
}

fn render_background(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    let fx = rng.gen_range(0.05..0.2);
    let fy = rng.gen_range(0.05..0.2);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    // Keep the background dark: pixel-wise cross-entropy against frames full
    // of mid-gray values bottoms out well above zero, which starves the
    // reconstruction networks of trainable signal late in optimization.
    let base: [f64; 3] = [
        rng.gen_range(0.02..0.10),
        rng.gen_range(0.02..0.10),
        rng.gen_range(0.02..0.10),
    ];
    let mut data = vec![0.0f32; 3 * n * n];
    for y in 0..n {
        for x in 0..n {
            let tex = 0.02 * ((fx * x as f64 + fy * y as f64) * std::f64::consts::TAU + phase).sin();
            for c in 0..3 {
                data[c * n * n + y * n + x] = (base[c] + tex) as f32;
            }
        }
    }
    data
}

fn sprite_pixel(app: &IdentityAppearance, sx: usize, sy: usize) -> [f32; 3] {
    let cell = (app.size / 4).max(1);
    let use_secondary = match app.pattern {
        Pattern::Solid => false,
        Pattern::Checker => ((sx / cell) + (sy / cell)) % 2 == 1,
        Pattern::Stripes => (sy / cell) % 2 == 1,
    };
    if use_secondary {
        app.secondary
    } else {
        app.primary
    }
}

/// Generate the clean frames of one track. The sprite translates with
/// constant velocity plus bounded jitter, bouncing off frame edges.
pub fn synth_sequence(
    run_seed: u64,
    identity: usize,
    track: usize,
    cfg: &SynthConfig,
) -> FrameSequence {
    let app = identity_appearance(run_seed, identity, cfg);
    let mut rng = substream(run_seed, &format!("synth/track/{identity}/{track}"));
    let n = cfg.frame_size;
    let background = render_background(&mut rng, n);
    let max_pos = (n - app.size) as f64;
    let mut px = rng.gen_range(0.0..max_pos);
    let mut py = rng.gen_range(0.0..max_pos);
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut vx = cfg.velocity * theta.cos();
    let mut vy = cfg.velocity * theta.sin();
    let mut frames = Vec::with_capacity(cfg.track_len);
    for _ in 0..cfg.track_len {
        let jx = rng.gen_range(-cfg.jitter..=cfg.jitter);
        let jy = rng.gen_range(-cfg.jitter..=cfg.jitter);
        let (dx, dy) = (
            (px + jx).clamp(0.0, max_pos) as usize,
            (py + jy).clamp(0.0, max_pos) as usize,
        );
        let mut data = background.clone();
        for sy in 0..app.size {
            for sx in 0..app.size {
                let rgb = sprite_pixel(&app, sx, sy);
                for c in 0..3 {
                    data[c * n * n + (dy + sy) * n + (dx + sx)] = rgb[c];
                }
            }
        }
        frames.push(Tensor::from_vec(data, &[3, n, n]).unwrap());
        px += vx;
        py += vy;
        if px < 0.0 || px > max_pos {
            vx = -vx;
            px = px.clamp(0.0, max_pos);
        }
        if py < 0.0 || py > max_pos {
            vy = -vy;
            py = py.clamp(0.0, max_pos);
        }
    }
    let len = frames.len();
    FrameSequence {
        track_id: track,
        identity_id: identity,
        clean_frames: frames.clone(),
        frames,
        occlusion_flags: vec![false; len],
        masks: vec![None; len],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderFamily {
    Rectangle,
    VerticalBar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderFill {
    SolidColor,
    Noise,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OccluderConfig {
    pub family: OccluderFamily,
    /// occluder area as a fraction of the frame area
    pub min_fraction: f64,
    pub max_fraction: f64,
    pub fill: OccluderFill,
}

impl Default for OccluderConfig {
    fn default() -> Self {
        OccluderConfig {
            family: OccluderFamily::Rectangle,
            min_fraction: 0.15,
            max_fraction: 0.35,
            fill: OccluderFill::SolidColor,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("occluder size fraction range [{0}, {1}] must sit inside [0, 1)")]
    BadFraction(f64, f64),
    #[error("pair sampling needs at least 2 identities for negative pairs")]
    TooFewIdentities,
    #[error("pair sampling needs an identity with at least 2 frames for positive pairs")]
    TooFewFrames,
}

/// Paint a synthetic occluder over a [3,H,W] frame. Unmasked pixels are
/// bit-identical to the input; the mask is 1 exactly on overwritten pixels.
pub fn synth_occlude(
    frame: &Tensor<f32>,
    rng: &mut ChaCha8Rng,
    cfg: &OccluderConfig,
) -> Result<(Tensor<f32>, Tensor<f32>), SynthError> {
    if cfg.min_fraction < 0.0 || cfg.max_fraction >= 1.0 || cfg.min_fraction > cfg.max_fraction {
        return Err(SynthError::BadFraction(cfg.min_fraction, cfg.max_fraction));
    }
    let s = frame.shape();
    let (h, w) = (s[1], s[2]);
    let mut data = frame.to_vec();
    let mut mask = vec![0.0f32; h * w];
    if cfg.max_fraction == 0.0 {
        return Ok((
            Tensor::from_vec(data, s).unwrap(),
            Tensor::from_vec(mask, &[1, h, w]).unwrap(),
        ));
    }
    let frac = rng.gen_range(cfg.min_fraction..=cfg.max_fraction);
    let area = frac * (h * w) as f64;
    let (ow, oh, ox, oy) = match cfg.family {
        OccluderFamily::Rectangle => {
            let aspect = rng.gen_range(0.5..2.0);
            let ow = ((area * aspect).sqrt().round() as usize).clamp(1, w);
            let oh = ((area / ow as f64).round() as usize).clamp(1, h);
            let ox = rng.gen_range(0..=w - ow);
            let oy = rng.gen_range(0..=h - oh);
            (ow, oh, ox, oy)
        }
        OccluderFamily::VerticalBar => {
            let ow = ((area / h as f64).round() as usize).clamp(1, w);
            let ox = rng.gen_range(0..=w - ow);
            (ow, h, ox, 0)
        }
    };
    // A desaturated mid-gray obstacle: clearly separable from both the dark
    // background and the saturated sprites, like a pillar or bag in front of
    // a person, rather than an adversarial color-matched patch.
    let gray = rng.gen_range(0.35..0.65);
    let solid: [f32; 3] = [gray, gray, gray];
    for y in oy..oy + oh {
        for x in ox..ox + ow {
            mask[y * w + x] = 1.0;
            for c in 0..3 {
                data[c * h * w + y * w + x] = match cfg.fill {
                    OccluderFill::SolidColor => solid[c],
                    OccluderFill::Noise => rng.gen_range(0.0..1.0),
                };
            }
        }
    }
    Ok((
        Tensor::from_vec(data, s).unwrap(),
        Tensor::from_vec(mask, &[1, h, w]).unwrap(),
    ))
}

/// Occlude frames of a sequence chosen by `occlusion_rate`, recording flags,
/// masks, and keeping the clean frames as targets. The first context frames
/// stay clean so a reconstruction window always exists.
pub fn occlude_sequence(
    seq: &mut FrameSequence,
    rng: &mut ChaCha8Rng,
    cfg: &OccluderConfig,
    occlusion_rate: f64,
    keep_clean_prefix: usize,
) -> Result<(), SynthError> {
    for i in 0..seq.frames.len() {
        if i >= keep_clean_prefix && rng.gen_range(0.0..1.0) < occlusion_rate {
            let (occ, mask) = synth_occlude(&seq.clean_frames[i], rng, cfg)?;
            seq.frames[i] = occ;
            seq.occlusion_flags[i] = true;
            seq.masks[i] = Some(mask);
        }
    }
    Ok(())
}

/// A sampled contrastive pair: indices into the caller's frame list plus the
/// same-identity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSample {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

/// Draw `count` pairs with an exact positive count of
/// round_half_up(count * positive_fraction). A frame is never paired with
/// itself.
pub fn sample_pairs(
    labels: &[usize],
    rng: &mut ChaCha8Rng,
    count: usize,
    positive_fraction: f64,
) -> Result<Vec<PairSample>, SynthError> {
    let n_pos = ((count as f64 * positive_fraction) + 0.5).floor() as usize;
    let n_pos = n_pos.min(count);
    let n_neg = count - n_pos;
    let mut by_identity: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &id) in labels.iter().enumerate() {
        by_identity.entry(id).or_default().push(i);
    }
    if n_neg > 0 && by_identity.len() < 2 {
        return Err(SynthError::TooFewIdentities);
    }
    let multi: Vec<&Vec<usize>> = by_identity.values().filter(|v| v.len() >= 2).collect();
    if n_pos > 0 && multi.is_empty() {
        return Err(SynthError::TooFewFrames);
    }
    let ids: Vec<&Vec<usize>> = by_identity.values().collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..n_pos {
        let group = multi[rng.gen_range(0..multi.len())];
        let a = group[rng.gen_range(0..group.len())];
        let mut b = group[rng.gen_range(0..group.len())];
        while b == a {
            b = group[rng.gen_range(0..group.len())];
        }
        out.push(PairSample { a, b, same: true });
    }
    for _ in 0..n_neg {
        let ga = rng.gen_range(0..ids.len());
        let mut gb = rng.gen_range(0..ids.len());
        while gb == ga {
            gb = rng.gen_range(0..ids.len());
        }
        let a = ids[ga][rng.gen_range(0..ids[ga].len())];
        let b = ids[gb][rng.gen_range(0..ids[gb].len())];
        out.push(PairSample { a, b, same: false });
    }
    Ok(out)
}

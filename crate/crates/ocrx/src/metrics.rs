//! Retrieval and reconstruction metrics: CMC curves, mean average precision,
//! and (masked) PSNR, plus the CSV/JSON-lines emitters the CLI writes.

use std::io::Write;

use serde::Serialize;

use crate::tensor::{Tensor, TensorError};

/// One probe's ranked gallery: `ranking[0]` is the best-matched gallery index,
/// `relevant[g]` says whether gallery item `g` shares the probe's identity.
#[derive(Debug, Clone)]
pub struct RankingResult {
    pub ranking: Vec<usize>,
    pub relevant: Vec<bool>,
}

impl RankingResult {
    fn check(&self) -> Result<(), TensorError> {
        let n = self.ranking.len();
        let mut seen = vec![false; n];
        if self.relevant.len() != n {
            return Err(TensorError::InvalidArg {
                op: "ranking",
                msg: format!(
                    "ranking lists {n} items but relevance lists {}",
                    self.relevant.len()
                ),
            });
        }
        for &g in &self.ranking {
            if g >= n || seen[g] {
                return Err(TensorError::InvalidArg {
                    op: "ranking",
                    msg: format!("ranking is not a permutation of 0..{n}"),
                });
            }
            seen[g] = true;
        }
        Ok(())
    }

    fn has_relevant(&self) -> bool {
        self.relevant.iter().any(|&r| r)
    }
}

/// CMC(k) for k in 1..=k_max: the fraction of probes whose first correct
/// match appears within the top k. Probes with no relevant gallery items are
/// skipped.
pub fn cmc(results: &[RankingResult], k_max: usize) -> Result<Vec<f64>, TensorError> {
    let mut hits = vec![0usize; k_max];
    let mut probes = 0usize;
    for r in results {
        r.check()?;
        if !r.has_relevant() {
            continue;
        }
        probes += 1;
        let first = r
            .ranking
            .iter()
            .position(|&g| r.relevant[g])
            .expect("has_relevant checked");
        for k in first..k_max {
            hits[k] += 1;
        }
    }
    if probes == 0 {
        return Err(TensorError::InvalidArg {
            op: "cmc",
            msg: "no probe has a relevant gallery item".into(),
        });
    }
    Ok(hits.iter().map(|&h| h as f64 / probes as f64).collect())
}

/// Average precision of one ranked list: mean of precision@rank over the
/// ranks that hold relevant items.
pub fn average_precision(r: &RankingResult) -> Result<f64, TensorError> {
    r.check()?;
    let mut found = 0usize;
    let mut ap = 0.0f64;
    for (rank, &g) in r.ranking.iter().enumerate() {
        if r.relevant[g] {
            found += 1;
            ap += found as f64 / (rank + 1) as f64;
        }
    }
    if found == 0 {
        return Err(TensorError::InvalidArg {
            op: "average_precision",
            msg: "no relevant gallery item".into(),
        });
    }
    Ok(ap / found as f64)
}

pub fn mean_average_precision(results: &[RankingResult]) -> Result<f64, TensorError> {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for r in results {
        r.check()?;
        if r.has_relevant() {
            sum += average_precision(r)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(TensorError::InvalidArg {
            op: "mean_average_precision",
            msg: "no probe has a relevant gallery item".into(),
        });
    }
    Ok(sum / n as f64)
}

/// PSNR in dB between two same-shape images with values in [0,1].
/// Identical inputs give +inf.
pub fn psnr(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64, TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::IncompatibleShapes {
            op: "psnr",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let da = a.data();
    let db = b.data();
    let mse: f64 = da
        .iter()
        .zip(db.iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / da.len() as f64;
    Ok(mse_to_psnr(mse))
}

/// PSNR restricted to pixels where `mask` is nonzero. The mask is [H,W] and
/// the images [3,H,W]; all three channels of a masked pixel count. Errors if
/// the mask selects nothing.
pub fn masked_psnr(a: &Tensor<f32>, b: &Tensor<f32>, mask: &[u8]) -> Result<f64, TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::IncompatibleShapes {
            op: "masked_psnr",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let s = a.shape();
    if s.len() != 3 || s[1] * s[2] != mask.len() {
        return Err(TensorError::InvalidArg {
            op: "masked_psnr",
            msg: format!("mask of {} pixels does not fit image {s:?}", mask.len()),
        });
    }
    let plane = mask.len();
    let da = a.data();
    let db = b.data();
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (p, &m) in mask.iter().enumerate() {
        if m == 0 {
            continue;
        }
        for c in 0..s[0] {
            let i = c * plane + p;
            let d = da[i] as f64 - db[i] as f64;
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(TensorError::InvalidArg {
            op: "masked_psnr",
            msg: "mask selects no pixels".into(),
        });
    }
    Ok(mse_to_psnr(sum / count as f64))
}

fn mse_to_psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Rows of a `metric,k,value` CSV. `k` is empty for scalar metrics.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub k: Option<usize>,
    pub value: f64,
}

pub fn metric_rows(cmc_curve: &[f64], map: f64, psnr_db: Option<f64>) -> Vec<MetricRow> {
    let mut rows: Vec<MetricRow> = cmc_curve
        .iter()
        .enumerate()
        .map(|(i, &v)| MetricRow {
            metric: "cmc".into(),
            k: Some(i + 1),
            value: v,
        })
        .collect();
    rows.push(MetricRow {
        metric: "map".into(),
        k: None,
        value: map,
    });
    if let Some(p) = psnr_db {
        rows.push(MetricRow {
            metric: "psnr".into(),
            k: None,
            value: p,
        });
    }
    rows
}

pub fn write_metrics_csv<W: Write>(w: &mut W, rows: &[MetricRow]) -> std::io::Result<()> {
    writeln!(w, "metric,k,value")?;
    for r in rows {
        match r.k {
            Some(k) => writeln!(w, "{},{},{}", r.metric, k, r.value)?,
            None => writeln!(w, "{},,{}", r.metric, r.value)?,
        }
    }
    Ok(())
}

/// One JSON object per line; `value` keeps infinities readable as strings.
pub fn write_metrics_jsonl<W: Write>(
    w: &mut W,
    condition: &str,
    rows: &[MetricRow],
) -> std::io::Result<()> {
    for r in rows {
        let value = if r.value.is_finite() {
            serde_json::json!(r.value)
        } else {
            serde_json::json!(r.value.to_string())
        };
        let obj = serde_json::json!({
            "condition": condition,
            "metric": r.metric,
            "k": r.k,
            "value": value,
        });
        writeln!(w, "{obj}")?;
    }
    Ok(())
}

//! The three losses shared across the pipeline: binary cross-entropy,
//! mean absolute error, and (by composition elsewhere) the contrastive loss.

use super::{check_finite, check_same_shape, Real, Result, Tensor};

/// Predictions are clamped to [EPS, 1-EPS] before the logs; sigmoid outputs
/// can saturate in single precision.
pub const BCE_CLAMP: f64 = 1e-7;

impl<T: Real> Tensor<T> {
    /// Mean binary cross-entropy: -(1/N) sum[y log p + (1-y) log(1-p)].
    /// Differentiable w.r.t. `self` (the predictions); targets are treated
    /// as constants.
    pub fn bce_loss(&self, target: &Tensor<T>) -> Result<Tensor<T>> {
        check_same_shape("bce_loss", self, target)?;
        let eps = T::from_f64(BCE_CLAMP);
        let lo = eps;
        let hi = T::one() - eps;
        let n = T::from_f64(self.numel() as f64);
        let mut acc = T::zero();
        {
            let p = self.data();
            let y = target.data();
            for (&p, &y) in p.iter().zip(y.iter()) {
                let p = p.max(lo).min(hi);
                acc = acc - (y * p.ln() + (T::one() - y) * (T::one() - p).ln());
            }
        }
        let loss = acc / n;
        check_finite("bce_loss", &[loss])?;
        let pred = self.clone();
        let targ = target.clone();
        Ok(Tensor::from_op(
            vec![loss],
            vec![],
            vec![self.clone(), target.clone()],
            Box::new(move |g| {
                if !pred.requires_grad() {
                    return;
                }
                let p = pred.data();
                let y = targ.data();
                let gp: Vec<T> = p
                    .iter()
                    .zip(y.iter())
                    .map(|(&p, &y)| {
                        let p = p.max(lo).min(hi);
                        g[0] * (p - y) / (p * (T::one() - p)) / n
                    })
                    .collect();
                drop(p);
                pred.accum_grad_owned(gp);
            }),
        ))
    }

    /// Mean absolute difference, subgradient 0 at ties.
    pub fn l1_loss(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same_shape("l1_loss", self, other)?;
        let n = T::from_f64(self.numel() as f64);
        let mut acc = T::zero();
        {
            let a = self.data();
            let b = other.data();
            for (&a, &b) in a.iter().zip(b.iter()) {
                acc = acc + (a - b).abs();
            }
        }
        let loss = acc / n;
        check_finite("l1_loss", &[loss])?;
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            vec![loss],
            vec![],
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let ad = a.data();
                let bd = b.data();
                let sign = |x: T, y: T| {
                    if x > y {
                        T::one()
                    } else if x < y {
                        -T::one()
                    } else {
                        T::zero()
                    }
                };
                if a.requires_grad() {
                    let ga: Vec<T> = ad
                        .iter()
                        .zip(bd.iter())
                        .map(|(&x, &y)| g[0] * sign(x, y) / n)
                        .collect();
                    a.accum_grad_owned(ga);
                }
                if b.requires_grad() {
                    let gb: Vec<T> = ad
                        .iter()
                        .zip(bd.iter())
                        .map(|(&x, &y)| -g[0] * sign(x, y) / n)
                        .collect();
                    b.accum_grad_owned(gb);
                }
            }),
        ))
    }
}

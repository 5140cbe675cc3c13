//! Elementwise, reduction, and structural operations.

use super::{check_finite, check_same_shape, numel, Activation, Real, Result, Tensor, TensorError};

impl<T: Real> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same_shape("add", self, other)?;
        let out: Vec<T> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        check_finite("add", &out)?;
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                a.accum_grad(g);
                b.accum_grad(g);
            }),
        ))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same_shape("sub", self, other)?;
        let out: Vec<T> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a - b)
            .collect();
        check_finite("sub", &out)?;
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                a.accum_grad(g);
                b.accum_grad_owned(g.iter().map(|&x| -x).collect());
            }),
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same_shape("hadamard", self, other)?;
        let out: Vec<T> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a * b)
            .collect();
        check_finite("hadamard", &out)?;
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                if a.requires_grad() {
                    let bd = b.data();
                    a.accum_grad_owned(g.iter().zip(bd.iter()).map(|(&g, &b)| g * b).collect());
                }
                if b.requires_grad() {
                    let ad = a.data();
                    b.accum_grad_owned(g.iter().zip(ad.iter()).map(|(&g, &a)| g * a).collect());
                }
            }),
        ))
    }

    /// Hadamard product where `map` has shape `self.shape()[1..]` and is
    /// applied to every batch element. Used by the Conv-LSTM peepholes.
    pub fn hadamard_bcast(&self, map: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape().len() != map.shape().len() + 1 || &self.shape()[1..] != map.shape() {
            return Err(TensorError::IncompatibleShapes {
                op: "hadamard_bcast",
                lhs: self.shape().to_vec(),
                rhs: map.shape().to_vec(),
            });
        }
        let n = map.numel();
        let batch = self.shape()[0];
        let mut out = self.to_vec();
        {
            let m = map.data();
            for b in 0..batch {
                for (o, &w) in out[b * n..(b + 1) * n].iter_mut().zip(m.iter()) {
                    *o = *o * w;
                }
            }
        }
        check_finite("hadamard_bcast", &out)?;
        let (a, w) = (self.clone(), map.clone());
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), map.clone()],
            Box::new(move |g| {
                if a.requires_grad() {
                    let m = w.data();
                    let mut ga = vec![T::zero(); g.len()];
                    for b in 0..batch {
                        for i in 0..n {
                            ga[b * n + i] = g[b * n + i] * m[i];
                        }
                    }
                    a.accum_grad_owned(ga);
                }
                if w.requires_grad() {
                    let ad = a.data();
                    let mut gw = vec![T::zero(); n];
                    for b in 0..batch {
                        for i in 0..n {
                            gw[i] += g[b * n + i] * ad[b * n + i];
                        }
                    }
                    w.accum_grad_owned(gw);
                }
            }),
        ))
    }

    pub fn neg(&self) -> Tensor<T> {
        self.scale(-T::one())
    }

    pub fn scale(&self, k: T) -> Tensor<T> {
        let out: Vec<T> = self.data().iter().map(|&a| a * k).collect();
        let a = self.clone();
        Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| a.accum_grad_owned(g.iter().map(|&x| x * k).collect())),
        )
    }

    pub fn add_scalar(&self, k: T) -> Tensor<T> {
        let out: Vec<T> = self.data().iter().map(|&a| a + k).collect();
        let a = self.clone();
        Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| a.accum_grad(g)),
        )
    }

    pub fn activation(&self, kind: Activation) -> Result<Tensor<T>> {
        match kind {
            Activation::Sigmoid => self.sigmoid(),
            Activation::Tanh => self.tanh_(),
            Activation::Relu => self.relu(),
        }
    }

    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        let out: Vec<T> = self
            .data()
            .iter()
            .map(|&x| T::one() / (T::one() + (-x).exp()))
            .collect();
        check_finite("sigmoid", &out)?;
        let a = self.clone();
        let saved = out.clone();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                a.accum_grad_owned(
                    g.iter()
                        .zip(saved.iter())
                        .map(|(&g, &y)| g * y * (T::one() - y))
                        .collect(),
                )
            }),
        ))
    }

    pub fn tanh_(&self) -> Result<Tensor<T>> {
        let out: Vec<T> = self.data().iter().map(|&x| x.tanh()).collect();
        check_finite("tanh", &out)?;
        let a = self.clone();
        let saved = out.clone();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                a.accum_grad_owned(
                    g.iter()
                        .zip(saved.iter())
                        .map(|(&g, &y)| g * (T::one() - y * y))
                        .collect(),
                )
            }),
        ))
    }

    pub fn relu(&self) -> Result<Tensor<T>> {
        let out: Vec<T> = self
            .data()
            .iter()
            .map(|&x| if x > T::zero() { x } else { T::zero() })
            .collect();
        check_finite("relu", &out)?;
        let a = self.clone();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let ad = a.data();
                let ga: Vec<T> = g
                    .iter()
                    .zip(ad.iter())
                    .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                drop(ad);
                a.accum_grad_owned(ga);
            }),
        ))
    }

    /// |x| with subgradient 0 at 0.
    pub fn abs_(&self) -> Result<Tensor<T>> {
        let out: Vec<T> = self.data().iter().map(|&x| x.abs()).collect();
        check_finite("abs", &out)?;
        let a = self.clone();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let ad = a.data();
                let ga: Vec<T> = g
                    .iter()
                    .zip(ad.iter())
                    .map(|(&g, &x)| {
                        if x > T::zero() {
                            g
                        } else if x < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                drop(ad);
                a.accum_grad_owned(ga);
            }),
        ))
    }

    pub fn sum(&self) -> Result<Tensor<T>> {
        let s = self.data().iter().fold(T::zero(), |acc, &x| acc + x);
        check_finite("sum", &[s])?;
        let a = self.clone();
        let n = self.numel();
        Ok(Tensor::from_op(
            vec![s],
            vec![],
            vec![self.clone()],
            Box::new(move |g| a.accum_grad_owned(vec![g[0]; n])),
        ))
    }

    pub fn mean(&self) -> Result<Tensor<T>> {
        let n = self.numel();
        let inv = T::one() / T::from_f64(n as f64);
        let s = self.data().iter().fold(T::zero(), |acc, &x| acc + x) * inv;
        check_finite("mean", &[s])?;
        let a = self.clone();
        Ok(Tensor::from_op(
            vec![s],
            vec![],
            vec![self.clone()],
            Box::new(move |g| a.accum_grad_owned(vec![g[0] * inv; n])),
        ))
    }

    /// Concatenate along the channel axis (axis 1 of BCHW).
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        assert!(!parts.is_empty());
        let first = parts[0].shape();
        if first.len() != 4 {
            return Err(TensorError::InvalidArg {
                op: "concat_channels",
                msg: format!("expected 4-d tensors, got {:?}", first),
            });
        }
        let (b, h, w) = (first[0], first[2], first[3]);
        let mut c_total = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != 4 || s[0] != b || s[2] != h || s[3] != w {
                return Err(TensorError::IncompatibleShapes {
                    op: "concat_channels",
                    lhs: first.to_vec(),
                    rhs: s.to_vec(),
                });
            }
            c_total += s[1];
        }
        let plane = h * w;
        let mut out = vec![T::zero(); b * c_total * plane];
        for bi in 0..b {
            let mut c_off = 0;
            for p in parts {
                let c = p.shape()[1];
                let src = p.data();
                out[(bi * c_total + c_off) * plane..(bi * c_total + c_off + c) * plane]
                    .copy_from_slice(&src[bi * c * plane..(bi + 1) * c * plane]);
                c_off += c;
            }
        }
        let owned: Vec<Tensor<T>> = parts.iter().map(|p| (*p).clone()).collect();
        let owned2 = owned.clone();
        Ok(Tensor::from_op(
            out,
            vec![b, c_total, h, w],
            owned,
            Box::new(move |g| {
                for bi in 0..b {
                    let mut c_off = 0;
                    for p in &owned2 {
                        let c = p.shape()[1];
                        if p.requires_grad() {
                            p.accum_grad_at(
                                bi * c * plane,
                                &g[(bi * c_total + c_off) * plane
                                    ..(bi * c_total + c_off + c) * plane],
                            );
                        }
                        c_off += c;
                    }
                }
            }),
        ))
    }

    /// Concatenate along axis 0. Used for batching and for fusing gate
    /// kernels into one convolution.
    pub fn concat_axis0(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        assert!(!parts.is_empty());
        let tail = &parts[0].shape()[1..];
        let mut dim0 = 0;
        for p in parts {
            if &p.shape()[1..] != tail {
                return Err(TensorError::IncompatibleShapes {
                    op: "concat_axis0",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            dim0 += p.shape()[0];
        }
        let mut out = Vec::with_capacity(dim0 * numel(tail));
        for p in parts {
            out.extend_from_slice(&p.data());
        }
        let mut shape = vec![dim0];
        shape.extend_from_slice(tail);
        let owned: Vec<Tensor<T>> = parts.iter().map(|p| (*p).clone()).collect();
        let owned2 = owned.clone();
        Ok(Tensor::from_op(
            out,
            shape,
            owned,
            Box::new(move |g| {
                let mut off = 0;
                for p in &owned2 {
                    let n = p.numel();
                    if p.requires_grad() {
                        p.accum_grad(&g[off..off + n]);
                    }
                    off += n;
                }
            }),
        ))
    }

    /// Slice a contiguous channel range out of a BCHW tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 || start + len > s[1] {
            return Err(TensorError::InvalidArg {
                op: "slice_channels",
                msg: format!("range {}..{} out of shape {:?}", start, start + len, s),
            });
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let plane = h * w;
        let mut out = vec![T::zero(); b * len * plane];
        {
            let src = self.data();
            for bi in 0..b {
                out[bi * len * plane..(bi + 1) * len * plane].copy_from_slice(
                    &src[(bi * c + start) * plane..(bi * c + start + len) * plane],
                );
            }
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            out,
            vec![b, len, h, w],
            vec![self.clone()],
            Box::new(move |g| {
                if !a.requires_grad() {
                    return;
                }
                for bi in 0..b {
                    a.accum_grad_at(
                        (bi * c + start) * plane,
                        &g[bi * len * plane..(bi + 1) * len * plane],
                    );
                }
            }),
        ))
    }

    /// Softmax along the last axis.
    pub fn softmax(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.is_empty() {
            return Err(TensorError::InvalidArg {
                op: "softmax",
                msg: "scalar input".into(),
            });
        }
        let cols = s[s.len() - 1];
        let rows = self.numel() / cols;
        let mut out = self.to_vec();
        for r in 0..rows {
            let row = &mut out[r * cols..(r + 1) * cols];
            let mx = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        check_finite("softmax", &out)?;
        let a = self.clone();
        let saved = out.clone();
        Ok(Tensor::from_op(
            out,
            s.to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let mut ga = vec![T::zero(); g.len()];
                for r in 0..rows {
                    let y = &saved[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot = y
                        .iter()
                        .zip(gr.iter())
                        .fold(T::zero(), |acc, (&y, &g)| acc + y * g);
                    for c in 0..cols {
                        ga[r * cols + c] = y[c] * (gr[c] - dot);
                    }
                }
                a.accum_grad_owned(ga);
            }),
        ))
    }

    /// Select one index of the last axis, dropping it: [.., C] -> [..].
    pub fn select_last(&self, index: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        let cols = *s.last().ok_or(TensorError::InvalidArg {
            op: "select_last",
            msg: "scalar input".into(),
        })?;
        if index >= cols {
            return Err(TensorError::InvalidArg {
                op: "select_last",
                msg: format!("index {index} out of {cols}"),
            });
        }
        let rows = self.numel() / cols;
        let out: Vec<T> = (0..rows).map(|r| self.data()[r * cols + index]).collect();
        let a = self.clone();
        Ok(Tensor::from_op(
            out,
            s[..s.len() - 1].to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let mut ga = vec![T::zero(); rows * cols];
                for r in 0..rows {
                    ga[r * cols + index] = g[r];
                }
                a.accum_grad_owned(ga);
            }),
        ))
    }

    /// Nearest-neighbor 2x spatial upsampling of a BCHW tensor.
    pub fn upsample_nearest2(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(TensorError::InvalidArg {
                op: "upsample_nearest2",
                msg: format!("expected 4-d input, got {:?}", s),
            });
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); b * c * h2 * w2];
        {
            let src = self.data();
            for bc in 0..b * c {
                for y in 0..h2 {
                    let sy = y / 2;
                    for x in 0..w2 {
                        out[(bc * h2 + y) * w2 + x] = src[(bc * h + sy) * w + x / 2];
                    }
                }
            }
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            out,
            vec![b, c, h2, w2],
            vec![self.clone()],
            Box::new(move |g| {
                let mut ga = vec![T::zero(); b * c * h * w];
                for bc in 0..b * c {
                    for y in 0..h2 {
                        for x in 0..w2 {
                            ga[(bc * h + y / 2) * w + x / 2] += g[(bc * h2 + y) * w2 + x];
                        }
                    }
                }
                a.accum_grad_owned(ga);
            }),
        ))
    }

    /// Spatial mean of a BCHW tensor: [B,C,H,W] -> [B,C].
    pub fn global_avg_pool(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(TensorError::InvalidArg {
                op: "global_avg_pool",
                msg: format!("expected 4-d input, got {:?}", s),
            });
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let plane = h * w;
        let inv = T::one() / T::from_f64(plane as f64);
        let mut out = vec![T::zero(); b * c];
        {
            let src = self.data();
            for (bc, o) in out.iter_mut().enumerate() {
                *o = src[bc * plane..(bc + 1) * plane]
                    .iter()
                    .fold(T::zero(), |acc, &x| acc + x)
                    * inv;
            }
        }
        check_finite("global_avg_pool", &out)?;
        let a = self.clone();
        Ok(Tensor::from_op(
            out,
            vec![b, c],
            vec![self.clone()],
            Box::new(move |g| {
                let mut ga = vec![T::zero(); b * c * plane];
                for bc in 0..b * c {
                    let gv = g[bc] * inv;
                    for v in ga[bc * plane..(bc + 1) * plane].iter_mut() {
                        *v = gv;
                    }
                }
                a.accum_grad_owned(ga);
            }),
        ))
    }

    pub(crate) fn accum_grad_at(&self, offset: usize, g: &[T]) {
        if !self.requires_grad() {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        let buf = slot.get_or_insert_with(|| vec![T::zero(); self.numel()]);
        for (b, &x) in buf[offset..offset + g.len()].iter_mut().zip(g) {
            *b += x;
        }
    }
}

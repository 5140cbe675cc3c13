//! GEMM-backed 2-d convolution and dense layers.
//!
//! conv2d lowers to im2col + matrix multiply. The column buffer is rebuilt in
//! the backward closure instead of being cached on the graph; with stacked
//! recurrent layers the cached buffers would dominate memory.

use super::{check_finite, numel, Real, Result, Tensor, TensorError};

struct ConvGeom {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn check<T: Real>(
        input: &Tensor<T>,
        kernel: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        padding: usize,
    ) -> Result<ConvGeom> {
        let is = input.shape();
        let ks = kernel.shape();
        if is.len() != 4 {
            return Err(TensorError::InvalidArg {
                op: "conv2d",
                msg: format!("input must be [B,C,H,W], got {:?}", is),
            });
        }
        if ks.len() != 4 {
            return Err(TensorError::InvalidArg {
                op: "conv2d",
                msg: format!("kernel must be [Cout,Cin,kh,kw], got {:?}", ks),
            });
        }
        if is[1] != ks[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                axis: 1,
                expected: vec![is[0], ks[1], is[2], is[3]],
                actual: is.to_vec(),
            });
        }
        if let Some(b) = bias {
            if b.shape() != [ks[0]] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d",
                    axis: 0,
                    expected: vec![ks[0]],
                    actual: b.shape().to_vec(),
                });
            }
        }
        if stride == 0 {
            return Err(TensorError::InvalidArg {
                op: "conv2d",
                msg: "stride must be positive".into(),
            });
        }
        let (h, w) = (is[2], is[3]);
        let (kh, kw) = (ks[2], ks[3]);
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(TensorError::InvalidArg {
                op: "conv2d",
                msg: format!(
                    "kernel {}x{} exceeds padded input {}x{}",
                    kh,
                    kw,
                    h + 2 * padding,
                    w + 2 * padding
                ),
            });
        }
        Ok(ConvGeom {
            batch: is[0],
            cin: is[1],
            h,
            w,
            cout: ks[0],
            kh,
            kw,
            stride,
            padding,
            ho: (h + 2 * padding - kh) / stride + 1,
            wo: (w + 2 * padding - kw) / stride + 1,
        })
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }
}

/// cols is [cin*kh*kw, ho*wo] row-major for one batch element.
fn im2col<T: Real>(g: &ConvGeom, input: &[T], cols: &mut [T]) {
    let (h, w, stride, pad) = (g.h, g.w, g.stride, g.padding);
    for c in 0..g.cin {
        let src = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((c * g.kh + ky) * g.kw + kx) * g.out_plane();
                for oy in 0..g.ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let dst = &mut cols[row + oy * g.wo..row + (oy + 1) * g.wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add transpose of im2col.
fn col2im<T: Real>(g: &ConvGeom, cols: &[T], input_grad: &mut [T]) {
    let (h, w, stride, pad) = (g.h, g.w, g.stride, g.padding);
    for c in 0..g.cin {
        let dst = &mut input_grad[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((c * g.kh + ky) * g.kw + kx) * g.out_plane();
                for oy in 0..g.ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..g.wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dst[iy as usize * w + ix as usize] += cols[row + oy * g.wo + ox];
                    }
                }
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// 2-d convolution of a [B,Cin,H,W] input with a [Cout,Cin,kh,kw] kernel.
    /// Output is [B,Cout,H',W'] with H' = (H + 2*padding - kh)/stride + 1.
    pub fn conv2d(
        &self,
        kernel: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<T>> {
        let g = ConvGeom::check(self, kernel, bias, stride, padding)?;
        let k = g.k();
        let op = g.out_plane();
        let mut cols = vec![T::zero(); k * op];
        let mut out = vec![T::zero(); g.batch * g.cout * op];
        {
            let input = self.data();
            let kd = kernel.data();
            for b in 0..g.batch {
                im2col(&g, &input[b * g.cin * g.h * g.w..], &mut cols);
                unsafe {
                    T::gemm(
                        g.cout,
                        k,
                        op,
                        T::one(),
                        kd.as_ptr(),
                        k as isize,
                        1,
                        cols.as_ptr(),
                        op as isize,
                        1,
                        T::zero(),
                        out[b * g.cout * op..].as_mut_ptr(),
                        op as isize,
                        1,
                    );
                }
            }
            if let Some(bias) = bias {
                let bd = bias.data();
                for b in 0..g.batch {
                    for c in 0..g.cout {
                        let bv = bd[c];
                        for v in out[(b * g.cout + c) * op..(b * g.cout + c + 1) * op].iter_mut() {
                            *v = *v + bv;
                        }
                    }
                }
            }
        }
        check_finite("conv2d", &out)?;
        let input = self.clone();
        let kern = kernel.clone();
        let bias_t = bias.cloned();
        let mut parents = vec![self.clone(), kernel.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(
            out,
            vec![g.batch, g.cout, g.ho, g.wo],
            parents,
            Box::new(move |gout| {
                let k = g.k();
                let op = g.out_plane();
                let mut cols = vec![T::zero(); k * op];
                let need_input = input.requires_grad();
                let need_kernel = kern.requires_grad();
                let mut gi = if need_input {
                    vec![T::zero(); input.numel()]
                } else {
                    Vec::new()
                };
                let mut gk = if need_kernel {
                    vec![T::zero(); kern.numel()]
                } else {
                    Vec::new()
                };
                {
                    let idata = input.data();
                    let kd = kern.data();
                    for b in 0..g.batch {
                        let gob = &gout[b * g.cout * op..(b + 1) * g.cout * op];
                        if need_kernel {
                            im2col(&g, &idata[b * g.cin * g.h * g.w..], &mut cols);
                            // dK += dOut . colsᵀ
                            unsafe {
                                T::gemm(
                                    g.cout,
                                    op,
                                    k,
                                    T::one(),
                                    gob.as_ptr(),
                                    op as isize,
                                    1,
                                    cols.as_ptr(),
                                    1,
                                    op as isize,
                                    T::one(),
                                    gk.as_mut_ptr(),
                                    k as isize,
                                    1,
                                );
                            }
                        }
                        if need_input {
                            // dCols = Kᵀ . dOut, then scatter back.
                            unsafe {
                                T::gemm(
                                    k,
                                    g.cout,
                                    op,
                                    T::one(),
                                    kd.as_ptr(),
                                    1,
                                    k as isize,
                                    gob.as_ptr(),
                                    op as isize,
                                    1,
                                    T::zero(),
                                    cols.as_mut_ptr(),
                                    op as isize,
                                    1,
                                );
                            }
                            col2im(&g, &cols, &mut gi[b * g.cin * g.h * g.w..]);
                        }
                    }
                }
                if need_input {
                    input.accum_grad_owned(gi);
                }
                if need_kernel {
                    kern.accum_grad_owned(gk);
                }
                if let Some(bias) = &bias_t {
                    if bias.requires_grad() {
                        let mut gb = vec![T::zero(); g.cout];
                        for b in 0..g.batch {
                            for c in 0..g.cout {
                                gb[c] += gout[(b * g.cout + c) * op..(b * g.cout + c + 1) * op]
                                    .iter()
                                    .fold(T::zero(), |acc, &x| acc + x);
                            }
                        }
                        bias.accum_grad_owned(gb);
                    }
                }
            }),
        ))
    }

    /// Dense layer: x[B,I] . w[O,I]ᵀ + b -> [B,O].
    pub fn linear(&self, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(TensorError::IncompatibleShapes {
                op: "linear",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        if bias.shape() != [ws[0]] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                axis: 0,
                expected: vec![ws[0]],
                actual: bias.shape().to_vec(),
            });
        }
        let (bsz, i, o) = (xs[0], xs[1], ws[0]);
        let mut out = vec![T::zero(); bsz * o];
        {
            let xd = self.data();
            let wd = weight.data();
            unsafe {
                T::gemm(
                    bsz,
                    i,
                    o,
                    T::one(),
                    xd.as_ptr(),
                    i as isize,
                    1,
                    wd.as_ptr(),
                    1,
                    i as isize,
                    T::zero(),
                    out.as_mut_ptr(),
                    o as isize,
                    1,
                );
            }
            let bd = bias.data();
            for r in 0..bsz {
                for c in 0..o {
                    out[r * o + c] = out[r * o + c] + bd[c];
                }
            }
        }
        check_finite("linear", &out)?;
        let (x, w, b) = (self.clone(), weight.clone(), bias.clone());
        Ok(Tensor::from_op(
            out,
            vec![bsz, o],
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |g| {
                if x.requires_grad() {
                    let wd = w.data();
                    let mut gx = vec![T::zero(); bsz * i];
                    unsafe {
                        T::gemm(
                            bsz,
                            o,
                            i,
                            T::one(),
                            g.as_ptr(),
                            o as isize,
                            1,
                            wd.as_ptr(),
                            i as isize,
                            1,
                            T::zero(),
                            gx.as_mut_ptr(),
                            i as isize,
                            1,
                        );
                    }
                    drop(wd);
                    x.accum_grad_owned(gx);
                }
                if w.requires_grad() {
                    let xd = x.data();
                    let mut gw = vec![T::zero(); o * i];
                    unsafe {
                        T::gemm(
                            o,
                            bsz,
                            i,
                            T::one(),
                            g.as_ptr(),
                            1,
                            o as isize,
                            xd.as_ptr(),
                            i as isize,
                            1,
                            T::zero(),
                            gw.as_mut_ptr(),
                            i as isize,
                            1,
                        );
                    }
                    drop(xd);
                    w.accum_grad_owned(gw);
                }
                if b.requires_grad() {
                    let mut gb = vec![T::zero(); o];
                    for r in 0..bsz {
                        for c in 0..o {
                            gb[c] += g[r * o + c];
                        }
                    }
                    b.accum_grad_owned(gb);
                }
            }),
        ))
    }

    /// Stack [C,H,W] frames or [d] vectors into a batch leaf (no gradient
    /// flows into raw inputs).
    pub fn batch_of(items: &[&Tensor<T>]) -> Result<Tensor<T>> {
        assert!(!items.is_empty());
        let tail = items[0].shape().to_vec();
        let mut data = Vec::with_capacity(items.len() * numel(&tail));
        for it in items {
            if it.shape() != tail.as_slice() {
                return Err(TensorError::IncompatibleShapes {
                    op: "batch_of",
                    lhs: tail.clone(),
                    rhs: it.shape().to_vec(),
                });
            }
            data.extend_from_slice(&it.data());
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&tail);
        Ok(Tensor::leaf(data, shape, false))
    }

    /// View a [C,H,W] frame as a [1,C,H,W] batch (shares no graph history).
    pub fn unsqueeze0(&self) -> Tensor<T> {
        let mut shape = vec![1];
        shape.extend_from_slice(self.shape());
        let a = self.clone();
        Tensor::from_op(
            self.to_vec(),
            shape,
            vec![self.clone()],
            Box::new(move |g| a.accum_grad(g)),
        )
    }

    /// Drop a leading batch axis of size 1.
    pub fn squeeze0(&self) -> Result<Tensor<T>> {
        if self.shape().first() != Some(&1) {
            return Err(TensorError::InvalidArg {
                op: "squeeze0",
                msg: format!("leading axis is not 1: {:?}", self.shape()),
            });
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            self.to_vec(),
            self.shape()[1..].to_vec(),
            vec![self.clone()],
            Box::new(move |g| a.accum_grad(g)),
        ))
    }
}

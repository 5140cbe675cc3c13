//! Shared oracles for the integration tests. Everything here is independent
//! of the engine's backward path: finite differences, naive convolution, and
//! scalar recurrence references.

#![allow(dead_code)]

use ocrx::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Central finite-difference check in double precision.
///
/// `loss` rebuilds the graph from the given leaf parameters on every call so
/// that perturbed evaluations see fresh data. Gradients from one backward
/// sweep are compared element by element against (f(x+h) - f(x-h)) / 2h.
pub fn finite_diff_check(
    params: &[Tensor<f64>],
    loss: &dyn Fn() -> Tensor<f64>,
    h: f64,
    tol: f64,
    ctx: &str,
) {
    let l = loss();
    l.backward().unwrap();
    let grads: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    for p in params {
        p.zero_grad();
    }
    for (pi, p) in params.iter().enumerate() {
        let base = p.to_vec();
        for i in 0..base.len() {
            let mut up = base.clone();
            up[i] += h;
            p.set_data(&up).unwrap();
            let f_up = loss().item();
            up[i] = base[i] - h;
            p.set_data(&up).unwrap();
            let f_dn = loss().item();
            p.set_data(&base).unwrap();
            let fd = (f_up - f_dn) / (2.0 * h);
            let ad = grads[pi][i];
            let denom = ad.abs().max(fd.abs()).max(1.0);
            assert!(
                (fd - ad).abs() / denom <= tol,
                "{ctx}: param {pi} elem {i}: analytic {ad} vs fd {fd} (rel {})",
                (fd - ad).abs() / denom
            );
        }
    }
}

/// Quadruple-loop sliding-window convolution, written directly from the
/// output formula. No shared code with the engine's im2col path.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    input: &[f64],
    ishape: (usize, usize, usize, usize),
    kernel: &[f64],
    kshape: (usize, usize, usize, usize),
    bias: &[f64],
    stride: usize,
    padding: usize,
) -> (Vec<f64>, (usize, usize, usize, usize)) {
    let (b, cin, h, w) = ishape;
    let (cout, _, kh, kw) = kshape;
    let ho = (h + 2 * padding - kh) / stride + 1;
    let wo = (w + 2 * padding - kw) / stride + 1;
    let mut out = vec![0.0; b * cout * ho * wo];
    for bi in 0..b {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += input
                                    [((bi * cin + ci) * h + iy as usize) * w + ix as usize]
                                    * kernel[((co * cin + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((bi * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    (out, (b, cout, ho, wo))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar peephole Conv-LSTM reference: every map is 1x1x1 so convolutions
/// degenerate to multiplies. Weight order follows the gate equations.
pub struct ScalarLstmWeights {
    pub w_xi: f64,
    pub w_hi: f64,
    pub w_ci: f64,
    pub b_i: f64,
    pub w_xf: f64,
    pub w_hf: f64,
    pub w_cf: f64,
    pub b_f: f64,
    pub w_xc: f64,
    pub w_hc: f64,
    pub b_c: f64,
    pub w_xo: f64,
    pub w_ho: f64,
    pub w_co: f64,
    pub b_o: f64,
}

/// One recurrence step; the output-gate peephole reads the freshly updated
/// cell state.
pub fn scalar_lstm_step(w: &ScalarLstmWeights, x: f64, h: f64, c: f64) -> (f64, f64) {
    let i = sigmoid(w.w_xi * x + w.w_hi * h + w.w_ci * c + w.b_i);
    let f = sigmoid(w.w_xf * x + w.w_hf * h + w.w_cf * c + w.b_f);
    let c_new = f * c + i * (w.w_xc * x + w.w_hc * h + w.b_c).tanh();
    let o = sigmoid(w.w_xo * x + w.w_ho * h + w.w_co * c_new + w.b_o);
    let h_new = o * c_new.tanh();
    (h_new, c_new)
}

/// Scalar Adam reference, bias-corrected.
pub struct ScalarAdam {
    pub m: f64,
    pub v: f64,
    pub t: u32,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        ScalarAdam {
            m: 0.0,
            v: 0.0,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, param: f64, grad: f64) -> f64 {
        self.t += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad;
        let m_hat = self.m / (1.0 - self.beta1.powi(self.t as i32));
        let v_hat = self.v / (1.0 - self.beta2.powi(self.t as i32));
        param - self.lr * m_hat / (v_hat.sqrt() + self.eps)
    }
}

pub fn assert_close(a: f64, b: f64, tol: f64, ctx: &str) {
    assert!(
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0),
        "{ctx}: {a} vs {b}"
    );
}

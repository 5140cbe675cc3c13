//! Peephole convolutional LSTM for sequential occlusion reconstruction.
//!
//! Gate math per cell step, with * convolution and ∘ elementwise product:
//!
//! ```text
//! i_t = σ(W_xi * X_t + W_hi * H_{t-1} + W_ci ∘ C_{t-1} + b_i)
//! f_t = σ(W_xf * X_t + W_hf * H_{t-1} + W_cf ∘ C_{t-1} + b_f)
//! C_t = f_t ∘ C_{t-1} + i_t ∘ tanh(W_xc * X_t + W_hc * H_{t-1} + b_c)
//! o_t = σ(W_xo * X_t + W_ho * H_{t-1} + W_co ∘ C_t + b_o)     (new C_t)
//! H_t = o_t ∘ tanh(C_t)
//! ```
//!
//! The four input and four hidden kernels are fused into two convolutions per
//! step; the fusion is invisible to the parameter registry.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{he_normal, Conv2dLayer};
use crate::tensor::{Activation, Real, Result, Tensor, TensorError};

pub struct ConvLstmCellParams<T: Real = f32> {
    pub w_xi: Tensor<T>,
    pub w_xf: Tensor<T>,
    pub w_xc: Tensor<T>,
    pub w_xo: Tensor<T>,
    pub w_hi: Tensor<T>,
    pub w_hf: Tensor<T>,
    pub w_hc: Tensor<T>,
    pub w_ho: Tensor<T>,
    /// peephole maps, shaped like one batch element of the cell state
    pub w_ci: Tensor<T>,
    pub w_cf: Tensor<T>,
    pub w_co: Tensor<T>,
    pub b_i: Tensor<T>,
    pub b_f: Tensor<T>,
    pub b_c: Tensor<T>,
    pub b_o: Tensor<T>,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct ConvLstmState<T: Real = f32> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Real> ConvLstmState<T> {
    pub fn zeros(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        ConvLstmState {
            h: Tensor::zeros(&[batch, channels, height, width]),
            c: Tensor::zeros(&[batch, channels, height, width]),
        }
    }
}

impl<T: Real> ConvLstmCellParams<T> {
    /// Convolution kernels get He init; peephole maps start at zero. The
    /// forget-gate bias starts at +1 so a fresh cell retains its state by
    /// default, the usual LSTM trick for making long memories learnable.
    /// `spatial` fixes the peephole map size (state height and width).
    pub fn new(
        rng: &mut ChaCha8Rng,
        cin: usize,
        channels: usize,
        ksize: usize,
        spatial: usize,
    ) -> Self {
        let pad = (ksize - 1) / 2;
        let xk = |rng: &mut ChaCha8Rng| {
            he_normal(rng, &[channels, cin, ksize, ksize], cin * ksize * ksize)
        };
        let hk = |rng: &mut ChaCha8Rng| {
            he_normal(
                rng,
                &[channels, channels, ksize, ksize],
                channels * ksize * ksize,
            )
        };
        let peep = || Tensor::param(vec![T::zero(); channels * spatial * spatial], &[channels, spatial, spatial]).unwrap();
        let bias = || Tensor::param(vec![T::zero(); channels], &[channels]).unwrap();
        ConvLstmCellParams {
            w_xi: xk(rng),
            w_xf: xk(rng),
            w_xc: xk(rng),
            w_xo: xk(rng),
            w_hi: hk(rng),
            w_hf: hk(rng),
            w_hc: hk(rng),
            w_ho: hk(rng),
            w_ci: peep(),
            w_cf: peep(),
            w_co: peep(),
            b_i: bias(),
            b_f: Tensor::param(vec![T::one(); channels], &[channels]).unwrap(),
            b_c: bias(),
            b_o: bias(),
            padding: pad,
        }
    }

    pub fn channels(&self) -> usize {
        self.w_xi.shape()[0]
    }

    /// One recurrence step: (X_t, state_{t-1}) -> state_t.
    pub fn step(&self, x: &Tensor<T>, state: &ConvLstmState<T>) -> Result<ConvLstmState<T>> {
        let ch = self.channels();
        if x.shape().len() != 4 {
            return Err(TensorError::InvalidArg {
                op: "conv_lstm_step",
                msg: format!("input must be [B,C,H,W], got {:?}", x.shape()),
            });
        }
        // gate order i, f, c, o in the fused kernels
        let xk = Tensor::concat_axis0(&[&self.w_xi, &self.w_xf, &self.w_xc, &self.w_xo])?;
        let xb = Tensor::concat_axis0(&[&self.b_i, &self.b_f, &self.b_c, &self.b_o])?;
        let hk = Tensor::concat_axis0(&[&self.w_hi, &self.w_hf, &self.w_hc, &self.w_ho])?;
        let pre = x
            .conv2d(&xk, Some(&xb), 1, self.padding)?
            .add(&state.h.conv2d(&hk, None, 1, self.padding)?)?;
        let pre_i = pre.slice_channels(0, ch)?;
        let pre_f = pre.slice_channels(ch, ch)?;
        let pre_c = pre.slice_channels(2 * ch, ch)?;
        let pre_o = pre.slice_channels(3 * ch, ch)?;
        let gate_i = pre_i.add(&state.c.hadamard_bcast(&self.w_ci)?)?.sigmoid()?;
        let gate_f = pre_f.add(&state.c.hadamard_bcast(&self.w_cf)?)?.sigmoid()?;
        let c_new = gate_f
            .hadamard(&state.c)?
            .add(&gate_i.hadamard(&pre_c.tanh_()?)?)?;
        let gate_o = pre_o.add(&c_new.hadamard_bcast(&self.w_co)?)?.sigmoid()?;
        let h_new = gate_o.hadamard(&c_new.tanh_()?)?;
        Ok(ConvLstmState { h: h_new, c: c_new })
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (n, t) in [
            ("w_xi", &self.w_xi),
            ("w_xf", &self.w_xf),
            ("w_xc", &self.w_xc),
            ("w_xo", &self.w_xo),
            ("w_hi", &self.w_hi),
            ("w_hf", &self.w_hf),
            ("w_hc", &self.w_hc),
            ("w_ho", &self.w_ho),
            ("w_ci", &self.w_ci),
            ("w_cf", &self.w_cf),
            ("w_co", &self.w_co),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_c", &self.b_c),
            ("b_o", &self.b_o),
        ] {
            out.push((format!("{prefix}.{n}"), t.clone()));
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvLstmConfig {
    pub frame_size: usize,
    /// per-layer channel widths; the last entry is the 1x1 layer's 3 channels
    pub widths: Vec<usize>,
    /// context length fed to the stack, final step being the occluded frame
    pub sequence_len: usize,
}

impl Default for ConvLstmConfig {
    fn default() -> Self {
        ConvLstmConfig {
            frame_size: 64,
            widths: vec![16, 16, 8, 8, 4, 4, 4, 4, 3],
            sequence_len: 3,
        }
    }
}

impl ConvLstmConfig {
    /// Widths of the layer schedule in the source table: 5x5 first, 3x3
    /// middle, 1x1 ninth, plain 3x3 conv last.
    pub fn paper_scale() -> Self {
        ConvLstmConfig {
            frame_size: 64,
            widths: vec![128, 128, 64, 64, 32, 32, 32, 16, 3],
            sequence_len: 3,
        }
    }

    pub fn kernel_size(&self, layer: usize) -> usize {
        if layer == 0 {
            5
        } else if layer + 1 == self.widths.len() {
            1
        } else {
            3
        }
    }
}

/// Stacked Conv-LSTM layers plus a final plain convolution with sigmoid
/// output. Every layer forwards the full (ReLU'd) hidden sequence except the
/// last recurrent layer, which emits only its final timestep.
pub struct ConvLstmStack<T: Real = f32> {
    pub cells: Vec<ConvLstmCellParams<T>>,
    pub final_conv: Conv2dLayer<T>,
    pub config: ConvLstmConfig,
}

impl<T: Real> ConvLstmStack<T> {
    pub fn new(rng: &mut ChaCha8Rng, config: ConvLstmConfig) -> Self {
        let mut cells = Vec::new();
        let mut cin = 3;
        for (li, &w) in config.widths.iter().enumerate() {
            cells.push(ConvLstmCellParams::new(
                rng,
                cin,
                w,
                config.kernel_size(li),
                config.frame_size,
            ));
            cin = w;
        }
        let final_conv = Conv2dLayer::same(rng, cin, 3, 3, None);
        ConvLstmStack {
            cells,
            final_conv,
            config,
        }
    }

    /// Batched forward: `seq` holds one [B,3,H,W] tensor per timestep.
    /// Returns the reconstructed [B,3,H,W] frame in (0,1).
    pub fn forward(&self, seq: &[Tensor<T>]) -> Result<Tensor<T>> {
        if seq.is_empty() {
            return Err(TensorError::InvalidArg {
                op: "conv_lstm_forward",
                msg: "empty sequence".into(),
            });
        }
        let (batch, hgt, wid) = {
            let s = seq[0].shape();
            if s.len() != 4 || s[2] != self.config.frame_size || s[3] != self.config.frame_size {
                return Err(TensorError::InvalidArg {
                    op: "conv_lstm_forward",
                    msg: format!(
                        "expected [B,3,{0},{0}] steps, got {1:?}",
                        self.config.frame_size,
                        s
                    ),
                });
            }
            (s[0], s[2], s[3])
        };
        let mut current: Vec<Tensor<T>> = seq.to_vec();
        let last = self.cells.len() - 1;
        for (li, cell) in self.cells.iter().enumerate() {
            let mut state = ConvLstmState::zeros(batch, cell.channels(), hgt, wid);
            let mut outs = Vec::with_capacity(current.len());
            for x in &current {
                state = cell.step(x, &state)?;
                if li != last {
                    outs.push(state.h.activation(Activation::Relu)?);
                }
            }
            current = if li == last {
                vec![state.h.activation(Activation::Relu)?]
            } else {
                outs
            };
        }
        self.final_conv.forward(&current[0])?.sigmoid()
    }

    /// Single-track reconstruction from [3,H,W] frames, last one occluded.
    /// Short inputs are padded by repeating the earliest frame.
    pub fn reconstruct(&self, frames: &[Tensor<T>]) -> Result<Tensor<T>> {
        if frames.is_empty() {
            return Err(TensorError::InvalidArg {
                op: "conv_lstm_reconstruct",
                msg: "need at least one frame".into(),
            });
        }
        let mut window: Vec<Tensor<T>> = frames.to_vec();
        while window.len() < self.config.sequence_len {
            window.insert(0, window[0].clone());
        }
        let start = window.len() - self.config.sequence_len;
        let seq: Vec<Tensor<T>> = window[start..].iter().map(|f| f.unsqueeze0()).collect();
        self.forward(&seq)?.squeeze0()
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            c.collect_params(&format!("cell{i}"), &mut out);
        }
        self.final_conv.collect_params("final", &mut out);
        out
    }
}

/// One training tuple: context frames (last one occluded) plus the clean
/// target for the final frame.
pub struct ConvLstmSample {
    pub inputs: Vec<Tensor<f32>>,
    pub target: Tensor<f32>,
}

pub const MODEL_KIND: &str = "convlstm";

/// Pixel-wise BCE between the reconstructed and clean final frames.
pub fn train_conv_lstm(
    stack: &ConvLstmStack<f32>,
    samples: &[ConvLstmSample],
    cfg: &crate::train::TrainConfig,
    resume: Option<&crate::io::Checkpoint>,
) -> std::result::Result<(crate::train::TrainReport, crate::io::Checkpoint), crate::io::IoError> {
    use crate::train::{epoch_batches, TrainReport, TrainState};
    let params = stack.named_params();
    let mut opt = crate::tensor::Adam::new(params.iter().map(|(_, t)| t.clone()).collect(), cfg.adam);
    let mut state = TrainState::init(MODEL_KIND, cfg, &params, &mut opt, resume)?;
    let mut report = TrainReport::default();
    let seq_len = stack.config.sequence_len;
    for _epoch in state.start_epoch..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0.0;
        for batch in epoch_batches(&mut state.rng, samples.len(), cfg.batch_size) {
            let mut seq = Vec::with_capacity(seq_len);
            for t in 0..seq_len {
                let step: Vec<&Tensor<f32>> =
                    batch.iter().map(|&i| &samples[i].inputs[t]).collect();
                seq.push(Tensor::batch_of(&step)?);
            }
            let targets: Vec<&Tensor<f32>> = batch.iter().map(|&i| &samples[i].target).collect();
            let y = Tensor::batch_of(&targets)?;
            let loss = stack.forward(&seq)?.bce_loss(&y)?;
            loss.backward()?;
            opt.step()?;
            opt.zero_grads();
            loss_sum += loss.item() as f64;
            batches += 1.0;
        }
        report.epoch_losses.push(vec![loss_sum / batches]);
    }
    let ck = state.snapshot(MODEL_KIND, cfg.epochs, &params, &opt);
    Ok((report, ck))
}

//! Value-level oracles for the tensor engine: convolution against a naive
//! sliding-window reference, Adam against a scalar recurrence, closed-form
//! loss values, and property checks.

mod common;

use common::{assert_close, naive_conv2d, rand_vec, rng, ScalarAdam};
use ocrx::tensor::{Adam, AdamConfig, Tensor};
use proptest::prelude::*;

fn conv_case(seed: u64, b: usize, cin: usize, cout: usize, hw: usize, k: usize, stride: usize, pad: usize) {
    let mut r = rng(seed);
    let x_data = rand_vec(&mut r, b * cin * hw * hw, -1.0, 1.0);
    let k_data = rand_vec(&mut r, cout * cin * k * k, -1.0, 1.0);
    let b_data = rand_vec(&mut r, cout, -1.0, 1.0);
    let x = Tensor::<f64>::from_vec(x_data.clone(), &[b, cin, hw, hw]).unwrap();
    let kernel = Tensor::<f64>::from_vec(k_data.clone(), &[cout, cin, k, k]).unwrap();
    let bias = Tensor::<f64>::from_vec(b_data.clone(), &[cout]).unwrap();
    let y = x.conv2d(&kernel, Some(&bias), stride, pad).unwrap();
    let (want, wshape) = naive_conv2d(
        &x_data,
        (b, cin, hw, hw),
        &k_data,
        (cout, cin, k, k),
        &b_data,
        stride,
        pad,
    );
    assert_eq!(
        y.shape(),
        &[wshape.0, wshape.1, wshape.2, wshape.3],
        "shape for seed {seed}"
    );
    let got = y.to_vec();
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        assert_close(*g, *w, 1e-12, &format!("conv seed {seed} elem {i}"));
    }
}

#[test]
fn conv2d_matches_naive_reference() {
    for seed in 0..10 {
        conv_case(seed, 2, 3, 4, 6, 3, 1, 1);
        conv_case(seed + 100, 1, 2, 3, 7, 3, 2, 1);
        conv_case(seed + 200, 2, 1, 2, 5, 5, 1, 2);
        conv_case(seed + 300, 1, 3, 1, 4, 1, 1, 0);
        conv_case(seed + 400, 1, 2, 2, 8, 3, 2, 0);
    }
}

#[test]
fn adam_matches_scalar_reference_three_steps() {
    let mut r = rng(9);
    let n = 6;
    let init = rand_vec(&mut r, n, -1.0, 1.0);
    let p = Tensor::<f64>::param(init.clone(), &[n]).unwrap();
    let mut opt = Adam::new(vec![p.clone()], AdamConfig::with_lr(0.01));
    let mut refs: Vec<(f64, ScalarAdam)> = init
        .iter()
        .map(|&v| (v, ScalarAdam::new(0.01)))
        .collect();
    for step in 0..3 {
        // loss = sum(c ∘ p) gives gradient exactly c
        let c_data = rand_vec(&mut r, n, -2.0, 2.0);
        let c = Tensor::from_vec(c_data.clone(), &[n]).unwrap();
        p.hadamard(&c).unwrap().sum().unwrap().backward().unwrap();
        opt.step().unwrap();
        opt.zero_grads();
        let got = p.to_vec();
        for i in 0..n {
            let (v, sa) = &mut refs[i];
            *v = sa.step(*v, c_data[i]);
            assert_close(got[i], *v, 1e-7, &format!("adam step {step} elem {i}"));
        }
    }
}

#[test]
fn bce_symmetry_and_closed_forms() {
    let ln2 = std::f64::consts::LN_2;
    for y in [0.0, 0.25, 0.5, 1.0] {
        let p = Tensor::<f64>::from_vec(vec![0.5], &[1]).unwrap();
        let t = Tensor::from_vec(vec![y], &[1]).unwrap();
        let l = p.bce_loss(&t).unwrap().item();
        assert!((l - ln2).abs() < 1e-6, "bce(0.5, {y}) = {l}, want ln 2");
    }
    // perfect confidence on the right class, and the 0.25 case
    let p = Tensor::<f64>::from_vec(vec![0.25], &[1]).unwrap();
    let t = Tensor::from_vec(vec![1.0], &[1]).unwrap();
    let l = p.bce_loss(&t).unwrap().item();
    assert!((l - (-(0.25f64).ln())).abs() < 1e-9);
    let p = Tensor::<f64>::from_vec(vec![0.25], &[1]).unwrap();
    let t = Tensor::from_vec(vec![0.0], &[1]).unwrap();
    let l = p.bce_loss(&t).unwrap().item();
    assert!((l - (-(0.75f64).ln())).abs() < 1e-9);
}

#[test]
fn sigmoid_and_tanh_reference_values() {
    let x = Tensor::<f64>::from_vec(vec![0.0, 1.0, -1.0], &[3]).unwrap();
    let s = x.sigmoid().unwrap().to_vec();
    assert!((s[0] - 0.5).abs() < 1e-12);
    assert!((s[1] - 0.7310585786300049).abs() < 1e-12);
    assert!((s[2] - 0.2689414213699951).abs() < 1e-12);
    let t = x.tanh_().unwrap().to_vec();
    assert!((t[1] - 1.0f64.tanh()).abs() < 1e-12);
}

#[test]
fn l1_closed_forms_and_tie_subgradient() {
    let a = Tensor::<f64>::from_vec(vec![1.0, -2.0, 0.5, 3.0], &[4]).unwrap();
    let a = Tensor::param(a.to_vec(), &[4]).unwrap();
    let b = Tensor::from_vec(vec![0.0, 0.0, 0.5, 1.0], &[4]).unwrap();
    let l = a.l1_loss(&b).unwrap();
    assert!((l.item() - (1.0 + 2.0 + 0.0 + 2.0) / 4.0).abs() < 1e-12);
    l.backward().unwrap();
    let g = a.grad().unwrap();
    assert_eq!(g[0], 0.25);
    assert_eq!(g[1], -0.25);
    assert_eq!(g[2], 0.0, "tied elements take subgradient 0");
    assert_eq!(g[3], 0.25);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// conv2d is linear in its input when the bias is zero.
    #[test]
    fn conv_linearity(seed in 0u64..1000, alpha in -2.0f64..2.0) {
        let mut r = rng(seed);
        let shape = [1usize, 2, 5, 5];
        let n: usize = shape.iter().product();
        let x1 = rand_vec(&mut r, n, -1.0, 1.0);
        let x2 = rand_vec(&mut r, n, -1.0, 1.0);
        let k = Tensor::<f64>::from_vec(rand_vec(&mut r, 3 * 2 * 9, -1.0, 1.0), &[3, 2, 3, 3]).unwrap();
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| alpha * a + b).collect();
        let c = |v: &[f64]| {
            Tensor::from_vec(v.to_vec(), &shape)
                .unwrap()
                .conv2d(&k, None, 1, 1)
                .unwrap()
                .to_vec()
        };
        let lhs = c(&mix);
        let y1 = c(&x1);
        let y2 = c(&x2);
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (alpha * y1[i] + y2[i])).abs() < 1e-9);
        }
    }

    /// Both losses are nonnegative and zero on equal inputs.
    #[test]
    fn losses_nonnegative(seed in 0u64..1000) {
        let mut r = rng(seed);
        let p = rand_vec(&mut r, 8, 0.01, 0.99);
        let y = rand_vec(&mut r, 8, 0.0, 1.0);
        let pt = Tensor::<f64>::from_vec(p.clone(), &[8]).unwrap();
        let yt = Tensor::from_vec(y.clone(), &[8]).unwrap();
        prop_assert!(pt.bce_loss(&yt).unwrap().item() >= 0.0);
        prop_assert!(pt.l1_loss(&yt).unwrap().item() >= 0.0);
        prop_assert!(pt.l1_loss(&pt).unwrap().item() == 0.0);
    }

    /// The same graph evaluated twice produces identical bits.
    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let mut r = rng(seed);
        let x = Tensor::<f64>::from_vec(rand_vec(&mut r, 2 * 3 * 16, -1.0, 1.0), &[2, 3, 4, 4]).unwrap();
        let k = Tensor::from_vec(rand_vec(&mut r, 2 * 3 * 9, -1.0, 1.0), &[2, 3, 3, 3]).unwrap();
        let run = || x.conv2d(&k, None, 1, 1).unwrap().relu().unwrap().mean().unwrap().item();
        prop_assert!(run().to_bits() == run().to_bits());
    }
}

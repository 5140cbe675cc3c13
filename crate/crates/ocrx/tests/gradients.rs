//! Finite-difference gradient checks for every differentiable operation.
//! Double-precision graphs, central differences, 10 seeds per op.

mod common;

use common::{finite_diff_check, rand_vec, rng};
use ocrx::tensor::{Activation, Tensor};

const H: f64 = 1e-4;
const TOL: f64 = 1e-5;

fn param(r: &mut rand_chacha::ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::param(rand_vec(r, n, -1.0, 1.0), shape).unwrap()
}

fn param_in(r: &mut rand_chacha::ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::param(rand_vec(r, n, lo, hi), shape).unwrap()
}

#[test]
fn add_sub_hadamard() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let a = param(&mut r, &[2, 3]);
        let b = param(&mut r, &[2, 3]);
        let (a2, b2) = (a.clone(), b.clone());
        finite_diff_check(
            &[a.clone(), b.clone()],
            &move || {
                a2.add(&b2)
                    .unwrap()
                    .hadamard(&a2.sub(&b2).unwrap())
                    .unwrap()
                    .sum()
                    .unwrap()
            },
            H,
            TOL,
            "add_sub_hadamard",
        );
    }
}

#[test]
fn hadamard_broadcast() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let a = param(&mut r, &[3, 2, 4, 4]);
        let m = param(&mut r, &[2, 4, 4]);
        let (a2, m2) = (a.clone(), m.clone());
        finite_diff_check(
            &[a.clone(), m.clone()],
            &move || a2.hadamard_bcast(&m2).unwrap().sum().unwrap(),
            H,
            TOL,
            "hadamard_bcast",
        );
    }
}

#[test]
fn activations() {
    for kind in [Activation::Sigmoid, Activation::Tanh, Activation::Relu] {
        for seed in 0..10 {
            let mut r = rng(200 + seed);
            // keep relu inputs away from the kink
            let x = Tensor::param(
                rand_vec(&mut r, 12, -2.0, 2.0)
                    .into_iter()
                    .map(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
                    .collect(),
                &[3, 4],
            )
            .unwrap();
            let x2 = x.clone();
            finite_diff_check(
                &[x.clone()],
                &move || x2.activation(kind).unwrap().mean().unwrap(),
                H,
                TOL,
                &format!("activation {kind:?}"),
            );
        }
    }
}

#[test]
fn abs_and_scale() {
    for seed in 0..10 {
        let mut r = rng(300 + seed);
        let x = Tensor::param(
            rand_vec(&mut r, 10, -2.0, 2.0)
                .into_iter()
                .map(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
                .collect(),
            &[10],
        )
        .unwrap();
        let x2 = x.clone();
        finite_diff_check(
            &[x.clone()],
            &move || x2.abs_().unwrap().scale(0.7).add_scalar(0.2).sum().unwrap(),
            H,
            TOL,
            "abs_scale",
        );
    }
}

#[test]
fn conv2d_grad() {
    for seed in 0..10 {
        let mut r = rng(400 + seed);
        let x = param(&mut r, &[2, 2, 5, 5]);
        let k = param(&mut r, &[3, 2, 3, 3]);
        let b = param(&mut r, &[3]);
        let (x2, k2, b2) = (x.clone(), k.clone(), b.clone());
        finite_diff_check(
            &[x.clone(), k.clone(), b.clone()],
            &move || {
                x2.conv2d(&k2, Some(&b2), 1, 1)
                    .unwrap()
                    .tanh_()
                    .unwrap()
                    .mean()
                    .unwrap()
            },
            H,
            TOL,
            "conv2d same-pad",
        );
    }
}

#[test]
fn conv2d_strided_grad() {
    for seed in 0..10 {
        let mut r = rng(500 + seed);
        let x = param(&mut r, &[1, 3, 6, 6]);
        let k = param(&mut r, &[2, 3, 3, 3]);
        let b = param(&mut r, &[2]);
        let (x2, k2, b2) = (x.clone(), k.clone(), b.clone());
        finite_diff_check(
            &[x.clone(), k.clone(), b.clone()],
            &move || x2.conv2d(&k2, Some(&b2), 2, 1).unwrap().sum().unwrap(),
            H,
            TOL,
            "conv2d stride-2",
        );
    }
}

#[test]
fn linear_softmax_select() {
    for seed in 0..10 {
        let mut r = rng(600 + seed);
        let x = param(&mut r, &[4, 5]);
        let w = param(&mut r, &[3, 5]);
        let b = param(&mut r, &[3]);
        let (x2, w2, b2) = (x.clone(), w.clone(), b.clone());
        finite_diff_check(
            &[x.clone(), w.clone(), b.clone()],
            &move || {
                x2.linear(&w2, &b2)
                    .unwrap()
                    .softmax()
                    .unwrap()
                    .select_last(1)
                    .unwrap()
                    .mean()
                    .unwrap()
            },
            H,
            TOL,
            "linear+softmax+select",
        );
    }
}

#[test]
fn pooling_upsample_concat_slice() {
    for seed in 0..10 {
        let mut r = rng(700 + seed);
        let a = param(&mut r, &[2, 2, 4, 4]);
        let b = param(&mut r, &[2, 3, 4, 4]);
        let (a2, b2) = (a.clone(), b.clone());
        finite_diff_check(
            &[a.clone(), b.clone()],
            &move || {
                let up = a2.upsample_nearest2().unwrap();
                let down = up.global_avg_pool().unwrap().sum().unwrap();
                let cat = Tensor::concat_channels(&[&a2, &b2]).unwrap();
                let sl = cat.slice_channels(1, 3).unwrap();
                down.add(&sl.mean().unwrap()).unwrap()
            },
            H,
            TOL,
            "pool/upsample/concat/slice",
        );
    }
}

#[test]
fn losses_grad() {
    for seed in 0..10 {
        let mut r = rng(800 + seed);
        let pred = param_in(&mut r, &[2, 3], 0.05, 0.95);
        let target = Tensor::from_vec(rand_vec(&mut r, 6, 0.0, 1.0), &[2, 3]).unwrap();
        let (p2, t2) = (pred.clone(), target.clone());
        finite_diff_check(
            &[pred.clone()],
            &move || p2.bce_loss(&t2).unwrap(),
            H,
            TOL,
            "bce_loss",
        );

        let a = param(&mut r, &[4]);
        let b = param(&mut r, &[4]);
        let (a2, b2) = (a.clone(), b.clone());
        finite_diff_check(
            &[a.clone(), b.clone()],
            &move || a2.l1_loss(&b2).unwrap(),
            H,
            TOL,
            "l1_loss",
        );
    }
}

#[test]
fn backward_accumulates_until_reset() {
    let x = Tensor::<f64>::param(vec![0.0], &[1]).unwrap();
    let l1 = x.sigmoid().unwrap().sum().unwrap();
    l1.backward().unwrap();
    assert!((x.grad().unwrap()[0] - 0.25).abs() < 1e-12);
    let l2 = x.sigmoid().unwrap().sum().unwrap();
    l2.backward().unwrap();
    assert!((x.grad().unwrap()[0] - 0.5).abs() < 1e-12);
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn disconnected_param_gets_no_grad() {
    let x = Tensor::<f64>::param(vec![1.0], &[1]).unwrap();
    let y = Tensor::<f64>::param(vec![2.0], &[1]).unwrap();
    let l = x.sigmoid().unwrap().sum().unwrap();
    l.backward().unwrap();
    assert!(x.grad().is_some());
    assert!(y.grad().is_none());
}

#[test]
fn backward_on_non_scalar_errors() {
    let x = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
    let y = x.relu().unwrap();
    assert!(y.backward().is_err());
}

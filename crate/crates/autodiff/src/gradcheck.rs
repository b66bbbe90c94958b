//! Finite-difference checks of every primitive's backward rule.
//!
//! Each case builds a scalar `Σ R ⊙ op(inputs)` with a fixed random `R`,
//! then compares `⟨∇L, V⟩` against the central difference
//! `(L(x + hV) − L(x − hV)) / 2h` along random directions `V`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops::BatchNormStats;
use crate::tensor::Tensor;

/// Names accepted by [`check_primitive`].
pub const PRIMITIVES: &[&str] = &[
    "add",
    "mul",
    "scale",
    "add_bias",
    "add_channel_bias",
    "relu",
    "sigmoid",
    "dropout",
    "sum",
    "sum_product",
    "conv2d",
    "batch_norm_train",
    "batch_norm_eval",
    "layer_norm",
    "softmax",
    "matmul",
    "matmul_batched",
    "reshape",
    "permute",
    "concat_channels",
    "upsample_bilinear",
    "composite_net",
];

/// Shape variants per primitive.
pub const VARIANTS: usize = 3;

type BuildFn = dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>;
type Builder = Box<BuildFn>;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], away_from_zero: bool) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-1.0..1.0);
            if away_from_zero && v.abs() < 0.05 {
                v.signum() * 0.05 + v
            } else {
                v
            }
        })
        .collect();
    Tensor::param(shape, data).expect("consistent")
}

/// Maximum relative error between analytic and finite-difference
/// directional derivatives over all inputs and `directions` random directions.
pub fn directional_check(
    inputs: &[Tensor<f64>],
    build: &BuildFn,
    rng: &mut ChaCha8Rng,
    h: f64,
    directions: usize,
) -> Result<f64> {
    let probe = build(inputs)?;
    let weights: Vec<f64> = (0..probe.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |xs: &[Tensor<f64>]| -> Result<f64> { build(xs)?.sum_product(&weights)?.item() };

    inputs.iter().for_each(|t| t.clear_grad());
    build(inputs)?.sum_product(&weights)?.backward()?;
    let grads: Vec<Vec<f64>> = inputs.iter().map(|t| t.grad_or_zeros()).collect();

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        if !input.requires_grad() {
            continue;
        }
        let base = input.to_vec();
        for _ in 0..directions {
            let dir: Vec<f64> = (0..base.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let shifted = |s: f64| base.iter().zip(&dir).map(|(b, d)| b + s * d).collect();
            input.set_data(shifted(h))?;
            let up = loss(inputs)?;
            input.set_data(shifted(-h))?;
            let down = loss(inputs)?;
            input.set_data(base.clone())?;
            let fd = (up - down) / (2.0 * h);
            let analytic: f64 = grads[i].iter().zip(&dir).map(|(g, d)| g * d).sum();
            let scale = fd.abs().max(analytic.abs()).max(1e-10);
            worst = worst.max((fd - analytic).abs() / scale);
        }
    }
    Ok(worst)
}

/// Inputs and forward builder for one (primitive, variant) pair.
fn case(name: &str, variant: usize, rng: &mut ChaCha8Rng) -> Option<(Vec<Tensor<f64>>, Builder)> {
    let v = variant % VARIANTS;
    let pick = |a: [usize; 3]| a[v];
    let shapes4 = [[1, 2, 3, 4], [2, 3, 5, 2], [3, 1, 4, 6]];
    let s4 = shapes4[v];
    let s2 = [[3, 4], [1, 7], [5, 2]][v];
    let mut t = |shape: &[usize]| random_tensor(rng, shape, false);
    let case: (Vec<Tensor<f64>>, Builder) = match name {
        "add" => (vec![t(&s4), t(&s4)], Box::new(|x| x[0].add(&x[1]))),
        "mul" => (vec![t(&s4), t(&s4)], Box::new(|x| x[0].mul(&x[1]))),
        "scale" => (vec![t(&s2)], Box::new(|x| Ok(x[0].scale(-1.7)))),
        "add_bias" => (vec![t(&s2), t(&[s2[1]])], Box::new(|x| x[0].add_bias(&x[1]))),
        "add_channel_bias" => (vec![t(&s4), t(&[s4[1]])], Box::new(|x| x[0].add_channel_bias(&x[1]))),
        "relu" => (vec![random_tensor(rng, &s4, true)], Box::new(|x| Ok(x[0].relu()))),
        "sigmoid" => (vec![t(&s4)], Box::new(|x| Ok(x[0].sigmoid()))),
        "dropout" => (
            vec![t(&s4)],
            Box::new(move |x| {
                let mut r = ChaCha8Rng::seed_from_u64(v as u64);
                x[0].dropout(0.3, Some(&mut r))
            }),
        ),
        "sum" => (vec![t(&s4)], Box::new(|x| Ok(x[0].sum()))),
        "sum_product" => {
            let w: Vec<f64> = (0..s2.iter().product()).map(|i| (i as f64).sin()).collect();
            (vec![t(&s2)], Box::new(move |x| x[0].sum_product(&w)))
        }
        "conv2d" => {
            let (k, stride, pad) = [(3, 1, 1), (3, 2, 1), (2, 2, 0)][v];
            let co = pick([2, 4, 3]);
            (
                vec![t(&s4), t(&[co, s4[1], k, k]), t(&[co])],
                Box::new(move |x| x[0].conv2d(&x[1], Some(&x[2]), stride, pad)),
            )
        }
        "batch_norm_train" | "batch_norm_eval" => {
            let train = name == "batch_norm_train";
            let c = s4[1];
            (
                vec![t(&s4), t(&[c]), t(&[c])],
                Box::new(move |x| {
                    let mut stats = BatchNormStats::new(c);
                    stats.mean = (0..c).map(|i| 0.1 * i as f64).collect();
                    stats.var = (0..c).map(|i| 0.5 + 0.2 * i as f64).collect();
                    x[0].batch_norm2d(&x[1], &x[2], &mut stats, train)
                }),
            )
        }
        "layer_norm" => {
            // Width 2 normalizes every row to ±1, leaving no x-gradient to check.
            let d = s2[1].max(3);
            (
                vec![t(&[s2[0], d]), t(&[d]), t(&[d])],
                Box::new(|x| x[0].layer_norm(&x[1], &x[2], 1e-5)),
            )
        }
        "softmax" => (vec![t(&s2)], Box::new(|x| x[0].softmax())),
        "matmul" => {
            let (m, k, n) = [(2, 3, 4), (1, 5, 2), (4, 4, 1)][v];
            (vec![t(&[m, k]), t(&[k, n])], Box::new(|x| x[0].matmul(&x[1])))
        }
        "matmul_batched" => {
            let (b, m, k, n) = [(2, 2, 3, 4), (3, 1, 5, 2), (1, 4, 4, 3)][v];
            (vec![t(&[b, m, k]), t(&[b, k, n])], Box::new(|x| x[0].matmul(&x[1])))
        }
        "reshape" => {
            let n: usize = s4.iter().product();
            (
                vec![t(&s4)],
                Box::new(move |x| x[0].reshape(&[n / s4[0], s4[0]])?.scale(1.5).reshape(&s4)),
            )
        }
        "permute" => {
            let perm = [[0, 2, 3, 1], [3, 1, 0, 2], [1, 0, 3, 2]][v];
            (vec![t(&s4)], Box::new(move |x| x[0].permute(&perm)))
        }
        "concat_channels" => {
            let other = [s4[0], pick([1, 2, 3]), s4[2], s4[3]];
            (
                vec![t(&s4), t(&other)],
                Box::new(|x| Tensor::concat_channels(&[x[0].clone(), x[1].clone()])),
            )
        }
        "upsample_bilinear" => {
            let (oh, ow) = [(6, 8), (7, 3), (8, 13)][v];
            (vec![t(&s4)], Box::new(move |x| x[0].upsample_bilinear(oh, ow)))
        }
        "composite_net" => {
            let c = s4[1];
            (
                vec![
                    t(&s4),
                    t(&[4, c, 3, 3]),
                    t(&[4]),
                    t(&[4]),
                    t(&[1, 4, 1, 1]),
                    t(&[1]),
                ],
                Box::new(move |x| {
                    // No bias before batch norm: the mean subtraction cancels it.
                    let mut stats = BatchNormStats::new(4);
                    let h = x[0].conv2d(&x[1], None, 1, 1)?;
                    let h = h.batch_norm2d(&x[2], &x[3], &mut stats, true)?.sigmoid();
                    let h = h.upsample_bilinear(s4[2] * 2, s4[3] * 2)?;
                    Ok(h.conv2d(&x[4], Some(&x[5]), 1, 0)?.sigmoid())
                }),
            )
        }
        _ => return None,
    };
    Some(case)
}

/// Worst relative error for one primitive and shape variant, or an error
/// for an unknown primitive name.
pub fn check_primitive(name: &str, variant: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((variant as u64) << 32));
    let (inputs, build) = case(name, variant, &mut rng)
        .ok_or_else(|| crate::Error::State(format!("unknown primitive {name:?}")))?;
    // The composite's third-derivative terms make h = 1e−3 truncation visible.
    let h = if name == "composite_net" { 1e-4 } else { 1e-3 };
    directional_check(&inputs, &*build, &mut rng, h, 3)
}

//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use incepse::autodiff::{Tape, Tensor};
use incepse::nn::conv1d;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Output length and left pad of a same-padded window op, from the TF rule.
pub fn same_geometry(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = (len + stride - 1) / stride;
    let needed = (out - 1) * stride + kernel;
    let total = if needed > len { needed - len } else { 0 };
    (out, total / 2)
}

/// Triple loop over (b, co, t) with an inner sum over (ci, k).
pub fn naive_conv1d(
    x: &[f64],
    (b, ci, l): (usize, usize, usize),
    w: &[f64],
    (co, k): (usize, usize),
    bias: Option<&[f64]>,
    stride: usize,
) -> Vec<f64> {
    let (out_len, pad) = same_geometry(l, k, stride);
    let mut y = vec![0.0; b * co * out_len];
    for bi in 0..b {
        for o in 0..co {
            for t in 0..out_len {
                let mut acc = bias.map_or(0.0, |bb| bb[o]);
                for c in 0..ci {
                    for kk in 0..k {
                        let pos = (t * stride + kk) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < l {
                            acc += w[(o * ci + c) * k + kk] * x[(bi * ci + c) * l + pos as usize];
                        }
                    }
                }
                y[(bi * co + o) * out_len + t] = acc;
            }
        }
    }
    y
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn pairwise_auroc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Forward plus the three gradients, the latter from the naive forward by
/// linearity: dL/dx etc. for L = sum(y * g).
pub fn conv_oracle_error(b: usize, ci: usize, co: usize, l: usize, k: usize, stride: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = uniform(&mut r, b * ci * l);
    let w = uniform(&mut r, co * ci * k);
    let bias = uniform(&mut r, co);
    let (out_len, _) = same_geometry(l, k, stride);
    let g = uniform(&mut r, b * co * out_len);

    let mut tape = Tape::new();
    let xv = tape.leaf(Tensor::new(&[b, ci, l], x.clone()).unwrap(), true);
    let wv = tape.leaf(Tensor::new(&[co, ci, k], w.clone()).unwrap(), true);
    let bv = tape.leaf(Tensor::new(&[co], bias.clone()).unwrap(), true);
    let y = conv1d(&mut tape, xv, wv, Some(bv), stride).unwrap();
    assert_eq!(tape.shape(y), &[b, co, out_len]);
    let want = naive_conv1d(&x, (b, ci, l), &w, (co, k), Some(&bias), stride);
    let mut err = max_abs_diff(tape.value(y).data(), &want);

    let gv = tape.constant(Tensor::new(&[b, co, out_len], g.clone()).unwrap());
    let prod = tape.mul(y, gv).unwrap();
    let loss = tape.sum_all(prod).unwrap();
    let grads = tape.backward(loss).unwrap();

    // dL/dx[i] = sum over outputs of g * d y / d x[i]; y is linear in x, so
    // probing with unit vectors through the naive conv gives the exact value.
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut dx = vec![0.0; x.len()];
    for i in 0..x.len() {
        let mut e = vec![0.0; x.len()];
        e[i] = 1.0;
        dx[i] = dot(&naive_conv1d(&e, (b, ci, l), &w, (co, k), None, stride), &g);
    }
    let mut dw = vec![0.0; w.len()];
    for i in 0..w.len() {
        let mut e = vec![0.0; w.len()];
        e[i] = 1.0;
        dw[i] = dot(&naive_conv1d(&x, (b, ci, l), &e, (co, k), None, stride), &g);
    }
    let db: Vec<f64> = (0..co)
        .map(|o| (0..b).map(|bi| g[(bi * co + o) * out_len..][..out_len].iter().sum::<f64>()).sum())
        .collect();
    err = err.max(max_abs_diff(grads.get(xv).unwrap().data(), &dx));
    err = err.max(max_abs_diff(grads.get(wv).unwrap().data(), &dw));
    err.max(max_abs_diff(grads.get(bv).unwrap().data(), &db))
}

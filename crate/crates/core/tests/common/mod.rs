//! Independent oracles shared by the integration test targets.
#![allow(dead_code)]

use acl::model::{Dense, Mlp};
use acl::numerics::{cross_entropy, softmax, Matrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub model: Mlp<f64>,
    pub x: Matrix<f64>,
    pub labels: Vec<usize>,
    pub mask: Vec<bool>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let input = rng.random_range(1..5);
    let depth = rng.random_range(0..3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..7)).collect();
    let mut model = Mlp::<f64>::new(input, &hidden, rng.random()).unwrap();
    // non-zero biases so the check also covers them
    let layers: Vec<Dense<f64>> = model
        .layers()
        .iter()
        .map(|l| Dense {
            weights: l.weights.clone(),
            bias: l.bias.iter().map(|_| rng.random_range(-0.5..0.5)).collect(),
        })
        .collect();
    model = Mlp::from_layers(layers).unwrap();
    let n = rng.random_range(1..6);
    let x = Matrix::from_vec(
        n,
        input,
        (0..n * input)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect(),
    )
    .unwrap();
    let labels = (0..n).map(|_| rng.random_range(0..2)).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    mask[0] = true;
    Instance {
        model,
        x,
        labels,
        mask,
    }
}

/// Independent loss evaluation: layer-by-layer loops, no shared forward code.
pub fn reference_loss(
    layers: &[Dense<f64>],
    x: &Matrix<f64>,
    labels: &[usize],
    mask: &[bool],
) -> f64 {
    let mut total = 0.0;
    for i in 0..x.rows() {
        if !mask[i] {
            continue;
        }
        let mut h: Vec<f64> = x.row(i).to_vec();
        for (li, layer) in layers.iter().enumerate() {
            let mut z = layer.bias.clone();
            for (k, &hk) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += hk * layer.weights[(k, j)];
                }
            }
            if li + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = z;
        }
        total += cross_entropy(&softmax(&h).unwrap(), labels[i]).unwrap();
    }
    total
}

pub fn close(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    // near-zero components are compared absolutely
    (analytic - numeric).abs() <= 1e-4 * scale || (analytic - numeric).abs() <= 1e-7
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counted half.
pub fn pairwise_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            den += 1.0;
            num += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    num / den
}

pub fn random_case(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> (Vec<f64>, Vec<usize>) {
    loop {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            continue;
        }
        // coarse scores force many ties
        let scores = labels
            .iter()
            .map(|&y| {
                let s: f64 = rng.random::<f64>() * 0.7 + 0.3 * y as f64;
                if coarse {
                    (s * 5.0).round() / 5.0
                } else {
                    s
                }
            })
            .collect();
        return (scores, labels);
    }
}

/// Expected queue after pushing `k` values into one holding `l`, following
/// the three-way case table for FIFO replacement.
pub fn replay_case_table(prev: &[u64], arrivals: &[u64], cap: usize) -> Vec<u64> {
    let (l, k) = (prev.len(), arrivals.len());
    let mut all: Vec<u64> = prev.to_vec();
    all.extend_from_slice(arrivals);
    if l + k <= cap {
        all
    } else if l < cap {
        all[l + k - cap..].to_vec()
    } else {
        all[k..].to_vec()
    }
}

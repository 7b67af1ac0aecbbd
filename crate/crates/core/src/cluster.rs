//! Two-way row clustering for sum nodes.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::attrs::AttrSet;
use crate::error::{Error, Result};
use crate::model::ClusterMethod;
use crate::rdc::{copula, sine_features};
use crate::rng::{derive_seed, seeded};
use crate::table::CodedTable;

const MAX_ITERATIONS: usize = 50;

/// Splits `rows` into two non-empty blocks using the attributes in `scope`.
pub fn cluster_rows(
    table: &CodedTable,
    rows: &[u32],
    scope: AttrSet,
    method: ClusterMethod,
    features: usize,
    scale: f64,
    seed: u64,
) -> Result<(Vec<u32>, Vec<u32>)> {
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: rows.len(),
        });
    }
    let attrs: Vec<usize> = scope.iter().collect();
    let labels = match method {
        ClusterMethod::HardEm => hard_em(table, rows, &attrs, seed),
        ClusterMethod::KMeans => kmeans(table, rows, &attrs, features, scale, seed),
    };
    let split = |labels: &[bool]| -> (Vec<u32>, Vec<u32>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (&r, &l) in rows.iter().zip(labels) {
            if l {
                b.push(r);
            } else {
                a.push(r);
            }
        }
        (a, b)
    };
    let (a, b) = split(&labels);
    if !a.is_empty() && !b.is_empty() {
        return Ok((a, b));
    }
    Ok(split(&median_split(table, rows, &attrs)))
}

/// Block sizes over the parent size.
pub fn block_weights(blocks: &[&[u32]]) -> Vec<f64> {
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    blocks.iter().map(|b| b.len() as f64 / total as f64).collect()
}

fn normalized(table: &CodedTable, row: u32, attr: usize) -> f64 {
    let col = table.column(attr);
    match col.codes[row as usize] {
        Some(c) => (c as f64 + 1.0) / (col.domain as f64 + 1.0),
        None => 0.0,
    }
}

/// Labels rows by the median of the attribute with the largest variance;
/// falls back to halving the row list when every attribute is constant.
fn median_split(table: &CodedTable, rows: &[u32], attrs: &[usize]) -> Vec<bool> {
    let n = rows.len() as f64;
    let mut best: Option<(f64, usize)> = None;
    for &a in attrs {
        let vals: Vec<f64> = rows.iter().map(|&r| normalized(table, r, a)).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var > 0.0 && best.is_none_or(|(bv, _)| var > bv) {
            best = Some((var, a));
        }
    }
    if let Some((_, a)) = best {
        let vals: Vec<f64> = rows.iter().map(|&r| normalized(table, r, a)).collect();
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[(sorted.len() - 1) / 2];
        let above: Vec<bool> = vals.iter().map(|&v| v > median).collect();
        if above.iter().any(|&x| x) {
            return above;
        }
        // Every value at or above the median is the maximum.
        return vals.iter().map(|&v| v >= median).collect();
    }
    let half = rows.len() / 2;
    (0..rows.len()).map(|i| i >= half).collect()
}

/// Naive-Bayes mixture of per-attribute categorical distributions, fitted by
/// alternating hard assignment and Laplace-smoothed maximum likelihood.
fn hard_em(table: &CodedTable, rows: &[u32], attrs: &[usize], seed: u64) -> Vec<bool> {
    let mut rng = seeded(derive_seed(seed, &[0x656d]));
    let mut labels: Vec<bool> = rows.iter().map(|_| rng.random::<bool>()).collect();
    // Null is the last category of each attribute.
    let sizes: Vec<usize> = attrs.iter().map(|&a| table.column(a).domain as usize + 1).collect();
    let category = |row: u32, i: usize| -> usize {
        table.column(attrs[i]).codes[row as usize].map_or(sizes[i] - 1, |c| c as usize)
    };
    for _ in 0..MAX_ITERATIONS {
        let mut counts: Vec<[Vec<u32>; 2]> = sizes.iter().map(|&m| [vec![0; m], vec![0; m]]).collect();
        let mut n = [0usize; 2];
        for (&r, &l) in rows.iter().zip(&labels) {
            let c = l as usize;
            n[c] += 1;
            for (i, slot) in counts.iter_mut().enumerate() {
                slot[c][category(r, i)] += 1;
            }
        }
        if n[0] == 0 || n[1] == 0 {
            break;
        }
        let prior = [
            libm::log(n[0] as f64 / rows.len() as f64),
            libm::log(n[1] as f64 / rows.len() as f64),
        ];
        let log_norm: Vec<[f64; 2]> = sizes
            .iter()
            .map(|&m| [libm::log((n[0] + m) as f64), libm::log((n[1] + m) as f64)])
            .collect();
        let mut changed = false;
        for (&r, l) in rows.iter().zip(labels.iter_mut()) {
            let mut score = prior;
            for (i, slot) in counts.iter().enumerate() {
                let v = category(r, i);
                for c in 0..2 {
                    score[c] += libm::log(slot[c][v] as f64 + 1.0) - log_norm[i][c];
                }
            }
            let next = if score[0] == score[1] { *l } else { score[1] > score[0] };
            changed |= next != *l;
            *l = next;
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Lloyd's algorithm with two centroids over the sine-feature embedding.
fn kmeans(table: &CodedTable, rows: &[u32], attrs: &[usize], features: usize, scale: f64, seed: u64) -> Vec<bool> {
    let n = rows.len();
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    for (i, &a) in attrs.iter().enumerate() {
        let col = table.column(a);
        let vals: Vec<f64> = rows
            .iter()
            .map(|&r| col.codes[r as usize].map_or(-1.0, |c| c as f64))
            .collect();
        if let Some(f) = sine_features(&vals, features, scale, derive_seed(seed, &[i as u64])) {
            blocks.push(f);
        } else if vals.windows(2).any(|w| w[0] != w[1]) {
            blocks.push(copula(&vals));
        }
    }
    let dims: Vec<usize> = blocks.iter().map(|b| b.len() / n).collect();
    let dim: usize = dims.iter().sum();
    if dim == 0 {
        return vec![false; n];
    }
    let mut points = vec![0.0; n * dim];
    let mut offset = 0;
    for (b, &d) in blocks.iter().zip(&dims) {
        for r in 0..n {
            points[r * dim + offset..r * dim + offset + d].copy_from_slice(&b[r * d..(r + 1) * d]);
        }
        offset += d;
    }
    let point = |r: usize| &points[r * dim..(r + 1) * dim];
    let dist = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

    let mut rng = seeded(derive_seed(seed, &[0x6b6d]));
    let first = rng.random_range(0..n);
    let second = (0..n)
        .max_by(|&a, &b| dist(point(a), point(first)).total_cmp(&dist(point(b), point(first))))
        .expect("n >= 2");
    let mut centroids = [point(first).to_vec(), point(second).to_vec()];
    let mut labels = vec![false; n];
    for iter in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (r, l) in labels.iter_mut().enumerate() {
            let next = dist(point(r), &centroids[1]) < dist(point(r), &centroids[0]);
            changed |= next != *l;
            *l = next;
        }
        if !changed && iter > 0 {
            break;
        }
        let mut sums = [vec![0.0; dim], vec![0.0; dim]];
        let mut counts = [0usize; 2];
        for (r, &l) in labels.iter().enumerate() {
            counts[l as usize] += 1;
            for (s, x) in sums[l as usize].iter_mut().zip(point(r)) {
                *s += x;
            }
        }
        if counts[0] == 0 || counts[1] == 0 {
            break;
        }
        for c in 0..2 {
            for s in &mut sums[c] {
                *s /= counts[c] as f64;
            }
        }
        centroids = sums;
    }
    labels
}

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Entropy tolerance the binary search aims for.
const TARGET_TOLERANCE: f64 = 1e-10;
/// A row whose entropy ends farther than this from the target is a failure.
const ACCEPT_TOLERANCE: f64 = 1e-5;
const MAX_STEPS: usize = 200;

/// Gaussian conditional probabilities over one point's squared distances
/// whose perplexity matches `target`, found by binary search on the
/// precision. Targets outside what the distances can reach (heavy ties at the
/// minimum) return the limiting row.
pub fn perplexity_calibration(distances: &[f64], target: f64) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::invalid("calibration needs at least one neighbor"));
    }
    if distances.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::invalid("squared distances must be finite and non-negative"));
    }
    if !(target > 0.0) || target > distances.len() as f64 {
        return Err(Error::config(format!(
            "perplexity {target} is not reachable with {} neighbors",
            distances.len()
        )));
    }
    let k = distances.len();
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = distances.iter().map(|d| d - min).collect();
    let mut row = vec![0.0; k];
    if shifted.iter().all(|&d| d == 0.0) {
        row.fill(1.0 / k as f64);
        return Ok(row);
    }
    let log_target = target.ln();
    let ties = shifted.iter().filter(|&&d| d == 0.0).count();
    if log_target <= (ties as f64).ln() {
        for (p, d) in row.iter_mut().zip(&shifted) {
            *p = if *d == 0.0 { 1.0 / ties as f64 } else { 0.0 };
        }
        return Ok(row);
    }

    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0 / (shifted.iter().sum::<f64>() / k as f64);
    let mut h = entropy(beta, &shifted, &mut row);
    for _ in 0..MAX_STEPS {
        let diff = h - log_target;
        if diff.abs() < TARGET_TOLERANCE {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        h = entropy(beta, &shifted, &mut row);
    }
    if (h - log_target).abs() > ACCEPT_TOLERANCE || row.iter().any(|p| !p.is_finite()) {
        return Err(Error::numerical(format!(
            "perplexity search did not bracket the target {target} (entropy {h})"
        )));
    }
    Ok(row)
}

fn entropy(beta: f64, shifted: &[f64], row: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for (p, d) in row.iter_mut().zip(shifted) {
        *p = (-beta * d).exp();
        sum += *p;
    }
    let mut weighted = 0.0;
    for (p, d) in row.iter_mut().zip(shifted) {
        *p /= sum;
        weighted += *p * d;
    }
    beta * weighted + sum.ln()
}

/// Symmetric joint affinities in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Affinities {
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn sum(&self) -> f64 {
        self.vals.iter().sum()
    }
}

pub fn neighbor_count(n: usize, perplexity: f64) -> usize {
    ((3.0 * perplexity).floor() as usize).min(n - 1)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Calibrates each point over its `floor(3·perplexity)` nearest neighbors
/// (squared Euclidean, ties by index), then symmetrizes `(P + Pᵀ) / sum`.
pub fn input_affinities(x: &Matrix, perplexity: f64) -> Result<Affinities> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid("need at least two points"));
    }
    if !x.is_finite() {
        return Err(Error::invalid("input contains non-finite values"));
    }
    let k = neighbor_count(n, perplexity);
    if k == 0 {
        return Err(Error::config(format!("perplexity {perplexity} is too small")));
    }
    // conditional rows, then the transpose sum built through a sorted triplet list
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (squared_distance(x.row(i), x.row(j)), j)));
        cand.select_nth_unstable_by(k - 1, |a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        let nearest = &mut cand[..k];
        nearest.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        let dists: Vec<f64> = nearest.iter().map(|c| c.0).collect();
        let row = perplexity_calibration(&dists, perplexity)
            .map_err(|e| Error::numerical(format!("point {i}: {e}")))?;
        for (&(_, j), p) in nearest.iter().zip(row) {
            triplets.push((i, j, p));
            triplets.push((j, i, p));
        }
    }
    triplets.sort_by_key(|t| (t.0, t.1));
    let mut row_ptr = vec![0; n + 1];
    let mut cols = Vec::with_capacity(triplets.len());
    let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
    for (i, j, v) in triplets {
        if cols.len() > row_ptr[i] && *cols.last().unwrap() == j {
            *vals.last_mut().unwrap() += v;
        } else {
            cols.push(j);
            vals.push(v);
        }
        row_ptr[i + 1] = cols.len();
    }
    for i in 1..=n {
        row_ptr[i] = row_ptr[i].max(row_ptr[i - 1]);
    }
    let total: f64 = vals.iter().sum();
    vals.iter_mut().for_each(|v| *v /= total);
    Ok(Affinities { n, row_ptr, cols, vals })
}

//! Barnes-Hut t-SNE projection to two dimensions.
//!
//! The optimizer follows the reference bhtsne schedule: early exaggeration,
//! momentum switch, per-coordinate adaptive gains and re-centering after each
//! step. Gradients omit the constant factor 4, as that implementation does.

mod affinity;
mod plot;
mod quadtree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::vectors::AssetVectors;

pub use affinity::{input_affinities, neighbor_count, perplexity_calibration, Affinities};
pub use plot::{emit_scatter, layout_color, read_layout_csv, render_svg, write_layout_csv};
pub use quadtree::QuadTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    BarnesHut,
    /// All O(n²) pairwise repulsions.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub theta: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    /// Iterations run with exaggerated affinities.
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub method: GradientMethod,
    /// Record the exact KL divergence every this many iterations (0 = never).
    pub kl_every: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            theta: 0.5,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            method: GradientMethod::BarnesHut,
            kl_every: 0,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 10 {
            return Err(Error::invalid(format!("t-SNE needs at least 10 points, got {n}")));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::config(format!("theta must be in [0, 1], got {}", self.theta)));
        }
        if !(self.perplexity > 0.0) || self.perplexity >= (n - 1) as f64 / 3.0 {
            return Err(Error::config(format!(
                "perplexity must be positive and below (n - 1) / 3 = {:.3}, got {}",
                (n - 1) as f64 / 3.0,
                self.perplexity
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.exaggeration > 0.0) {
            return Err(Error::config("learning_rate and exaggeration must be positive"));
        }
        Ok(())
    }
}

/// A 2-D layout aligned with its asset ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub asset_ids: Vec<String>,
    pub points: Matrix,
    pub kl_divergence: f64,
    /// `(iteration, KL)` samples when requested.
    pub kl_trace: Vec<(usize, f64)>,
}

/// Initial points drawn from N(0, (1e-4)²).
pub fn initial_layout(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    Matrix::from_vec(n, 2, (0..2 * n).map(|_| normal.sample(&mut rng)).collect()).expect("n x 2 layout")
}

fn attraction(p: &Affinities, y: &Matrix, exaggeration: f64, grad: &mut Matrix) {
    for i in 0..p.n {
        let yi = y.row(i);
        let (mut fx, mut fy) = (0.0, 0.0);
        for (j, pij) in p.row(i) {
            let yj = y.row(j);
            let (dx, dy) = (yi[0] - yj[0], yi[1] - yj[1]);
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            fx += exaggeration * pij * q * dx;
            fy += exaggeration * pij * q * dy;
        }
        let g = grad.row_mut(i);
        g[0] = fx;
        g[1] = fy;
    }
}

/// KL gradient with all pairwise repulsions.
pub fn exact_gradient(p: &Affinities, y: &Matrix, exaggeration: f64) -> Matrix {
    let n = y.rows();
    let mut grad = Matrix::zeros(n, 2);
    attraction(p, y, exaggeration, &mut grad);
    let mut rep = vec![[0.0; 2]; n];
    let mut z = 0.0;
    for i in 0..n {
        let yi = y.row(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let yj = y.row(j);
            let (dx, dy) = (yi[0] - yj[0], yi[1] - yj[1]);
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            z += q;
            rep[i][0] += q * q * dx;
            rep[i][1] += q * q * dy;
        }
    }
    for (i, r) in rep.iter().enumerate() {
        let g = grad.row_mut(i);
        g[0] -= r[0] / z;
        g[1] -= r[1] / z;
    }
    grad
}

/// KL gradient with repulsions approximated through a quadtree.
pub fn barnes_hut_gradient(p: &Affinities, y: &Matrix, theta: f64, exaggeration: f64) -> Matrix {
    let n = y.rows();
    let mut grad = Matrix::zeros(n, 2);
    attraction(p, y, exaggeration, &mut grad);
    let tree = QuadTree::build(y);
    let mut rep = Vec::with_capacity(n);
    let mut z = 0.0;
    for i in 0..n {
        let (f, zi) = tree.repulsion(i, theta);
        rep.push(f);
        z += zi;
    }
    for (i, r) in rep.iter().enumerate() {
        let g = grad.row_mut(i);
        g[0] -= r[0] / z;
        g[1] -= r[1] / z;
    }
    grad
}

/// `KL(P || Q)` with the exact normalization of Q.
pub fn kl_divergence(p: &Affinities, y: &Matrix) -> f64 {
    let n = y.rows();
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (a, b) = (y.row(i), y.row(j));
                z += 1.0 / (1.0 + (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for (j, pij) in p.row(i) {
            if pij > 0.0 {
                let (a, b) = (y.row(i), y.row(j));
                let q = 1.0 / (1.0 + (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)) / z;
                kl += pij * (pij / q.max(f64::MIN_POSITIVE)).ln();
            }
        }
    }
    kl
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Runs the optimizer from `y` for `config.iterations` steps.
pub fn optimize_layout(p: &Affinities, mut y: Matrix, config: &TsneConfig) -> Result<(Matrix, Vec<(usize, f64)>)> {
    let n = y.rows();
    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::from_vec(n, 2, vec![1.0; 2 * n])?;
    let mut trace = Vec::new();
    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iters { config.exaggeration } else { 1.0 };
        let momentum = if iter < config.momentum_switch { config.momentum } else { config.final_momentum };
        let grad = match config.method {
            GradientMethod::Exact => exact_gradient(p, &y, exaggeration),
            GradientMethod::BarnesHut => barnes_hut_gradient(p, &y, config.theta, exaggeration),
        };
        let (g, u, gn) = (grad.as_slice(), update.as_mut_slice(), gains.as_mut_slice());
        for k in 0..2 * n {
            gn[k] = if sign(g[k]) != sign(u[k]) { gn[k] + 0.2 } else { gn[k] * 0.8 };
            gn[k] = gn[k].max(0.01);
            u[k] = momentum * u[k] - config.learning_rate * gn[k] * g[k];
        }
        let ys = y.as_mut_slice();
        for (yk, uk) in ys.iter_mut().zip(update.as_slice()) {
            *yk += uk;
        }
        let mean = [
            ys.iter().step_by(2).sum::<f64>() / n as f64,
            ys.iter().skip(1).step_by(2).sum::<f64>() / n as f64,
        ];
        for (k, yk) in ys.iter_mut().enumerate() {
            *yk -= mean[k % 2];
        }
        if !y.is_finite() {
            return Err(Error::numerical(format!("t-SNE layout became non-finite at iteration {iter}")));
        }
        if config.kl_every > 0 && (iter + 1) % config.kl_every == 0 {
            trace.push((iter + 1, kl_divergence(p, &y)));
        }
    }
    Ok((y, trace))
}

pub fn run_tsne(vectors: &AssetVectors, config: &TsneConfig) -> Result<Embedding2D> {
    let x = vectors.matrix();
    config.validate(x.rows())?;
    let p = input_affinities(x, config.perplexity)?;
    let (points, kl_trace) = optimize_layout(&p, initial_layout(x.rows(), config.seed), config)?;
    Ok(Embedding2D {
        asset_ids: vectors.asset_ids().to_vec(),
        kl_divergence: kl_divergence(&p, &points),
        points,
        kl_trace,
    })
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::train::descend;
use super::{dloss_deta, TrainConfig, TrainingMeta, LOSS_CLAMP};

pub const DEFAULT_HIDDEN: usize = 8;

/// `ŷ = exp(w2 · tanh(W1ᵀx + b1) + b2)` with `W1` stored row-major as
/// `input_dim × hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

impl MlpModel {
    pub fn zeros(input_dim: usize, hidden: usize) -> Result<Self> {
        let m = Self {
            input_dim,
            hidden,
            w1: vec![0.0; input_dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            training: None,
        };
        m.check()?;
        Ok(m)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::invalid("MLP needs at least one hidden unit"));
        }
        if self.w1.len() != self.input_dim * self.hidden || self.b1.len() != self.hidden || self.w2.len() != self.hidden {
            return Err(Error::invalid("MLP parameter arrays do not match its dimensions"));
        }
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("MLP parameters must be finite"));
        }
        Ok(())
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.w1.len() + 2 * self.hidden + 1);
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    fn from_params(input_dim: usize, hidden: usize, p: &[f64]) -> Self {
        let (w1, rest) = p.split_at(input_dim * hidden);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, rest) = rest.split_at(hidden);
        Self {
            input_dim,
            hidden,
            w1: w1.to_vec(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: rest[0],
            training: None,
        }
    }
}

/// Hidden activations `tanh(W1ᵀx + b1)` into `z`, returning the log-rate.
fn forward(p: &[f64], dims: (usize, usize), x: &[f64], z: &mut [f64]) -> f64 {
    let (input_dim, hidden) = dims;
    let (w1, rest) = p.split_at(input_dim * hidden);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = (&rest[..hidden], rest[hidden]);
    z.copy_from_slice(b1);
    for (j, &xj) in x.iter().enumerate() {
        for (zk, w) in z.iter_mut().zip(&w1[j * hidden..(j + 1) * hidden]) {
            *zk += xj * w;
        }
    }
    let mut eta = b2;
    for (zk, w) in z.iter_mut().zip(w2) {
        *zk = zk.tanh();
        eta += *zk * w;
    }
    eta
}

pub fn mlp_predict(model: &MlpModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.input_dim {
        return Err(Error::invalid(format!(
            "MLP expects {} features, got {}",
            model.input_dim,
            x.len()
        )));
    }
    let mut z = vec![0.0; model.hidden];
    let eta = forward(&model.params(), (model.input_dim, model.hidden), x, &mut z);
    let yhat = eta.exp();
    if !yhat.is_finite() {
        return Err(Error::numerical(format!("MLP prediction overflowed (log-rate {eta})")));
    }
    Ok(yhat)
}

fn loss_with_grad(p: &[f64], dims: (usize, usize), x: &Matrix, y: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let (input_dim, hidden) = dims;
    let n = x.rows() as f64;
    let w2_at = input_dim * hidden + hidden;
    let mut z = vec![0.0; hidden];
    let mut total = 0.0;
    let mut grad = grad;
    for (row, &yi) in x.iter_rows().zip(y) {
        let yhat = forward(p, dims, row, &mut z).exp();
        total += yhat - yi * yhat.max(LOSS_CLAMP).ln();
        let Some(g) = grad.as_deref_mut() else {
            continue;
        };
        let d = dloss_deta(yhat, yi) / n;
        let (gw1, rest) = g.split_at_mut(input_dim * hidden);
        let (gb1, rest) = rest.split_at_mut(hidden);
        let (gw2, gb2) = rest.split_at_mut(hidden);
        gb2[0] += d;
        for k in 0..hidden {
            gw2[k] += d * z[k];
            // back through tanh: d(tanh a)/da = 1 - tanh²
            let da = d * p[w2_at + k] * (1.0 - z[k] * z[k]);
            gb1[k] += da;
            for (j, &xj) in row.iter().enumerate() {
                gw1[j * hidden + k] += da * xj;
            }
        }
    }
    total / n
}

/// Poisson loss of `model` on `(x, y)` and its gradient laid out as a model
/// of the same shape.
pub fn mlp_loss_gradient(model: &MlpModel, x: &Matrix, y: &[f64]) -> Result<(f64, MlpModel)> {
    model.check()?;
    if x.cols() != model.input_dim || x.rows() != y.len() {
        return Err(Error::invalid("MLP, features and labels disagree in shape"));
    }
    let params = model.params();
    let mut grad = vec![0.0; params.len()];
    let dims = (model.input_dim, model.hidden);
    let loss = loss_with_grad(&params, dims, x, y, Some(&mut grad));
    Ok((loss, MlpModel::from_params(dims.0, dims.1, &grad)))
}

pub fn train_mlp(x: &Matrix, y: &[f64], config: &TrainConfig, hidden: usize) -> Result<MlpModel> {
    if hidden == 0 {
        return Err(Error::config("hidden must be at least 1"));
    }
    let p = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let b_in = 1.0 / (p.max(1) as f64).sqrt();
    let b_out = 1.0 / (hidden as f64).sqrt();
    let mut init = MlpModel::zeros(p, hidden)?;
    init.w1.iter_mut().for_each(|w| *w = rng.random_range(-b_in..=b_in));
    init.w2.iter_mut().for_each(|w| *w = rng.random_range(-b_out..=b_out));
    let dims = (p, hidden);
    let loss = move |params: &[f64], x: &Matrix, y: &[f64], g: Option<&mut [f64]>| loss_with_grad(params, dims, x, y, g);
    let (params, meta) = descend(init.params(), x, y, config, &loss)?;
    let mut model = MlpModel::from_params(p, hidden, &params);
    model.training = Some(meta);
    Ok(model)
}

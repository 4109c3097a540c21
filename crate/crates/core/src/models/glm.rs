use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

use super::train::descend;
use super::{dloss_deta, poisson_loss, TrainConfig, TrainingMeta, LOSS_CLAMP};

/// `ŷ = exp(w·x + bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonGlm {
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

impl PoissonGlm {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("GLM parameters must be finite"));
        }
        Ok(Self { weights, bias, training: None })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    fn from_params(mut p: Vec<f64>) -> Self {
        let bias = p.pop().unwrap_or(0.0);
        Self { weights: p, bias, training: None }
    }
}

pub fn glm_predict(model: &PoissonGlm, x: &[f64]) -> Result<f64> {
    if x.len() != model.input_dim() {
        return Err(Error::invalid(format!(
            "GLM expects {} features, got {}",
            model.input_dim(),
            x.len()
        )));
    }
    let yhat = (dot(&model.weights, x) + model.bias).exp();
    if !yhat.is_finite() {
        return Err(Error::numerical(format!("GLM prediction overflowed (log-rate {})", yhat.ln())));
    }
    Ok(yhat)
}

fn loss_with_grad(params: &[f64], x: &Matrix, y: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let p = x.cols();
    let (w, b) = (&params[..p], params[p]);
    let n = x.rows() as f64;
    let mut total = 0.0;
    let mut grad = grad;
    for (row, &yi) in x.iter_rows().zip(y) {
        let yhat = (dot(w, row) + b).exp();
        total += yhat - yi * yhat.max(LOSS_CLAMP).ln();
        if let Some(g) = grad.as_deref_mut() {
            let d = dloss_deta(yhat, yi) / n;
            for (gj, xj) in g[..p].iter_mut().zip(row) {
                *gj += d * xj;
            }
            g[p] += d;
        }
    }
    total / n
}

/// Poisson loss of `model` on `(x, y)` and its gradient as a model of the same
/// shape (`weights` holds ∂/∂w, `bias` holds ∂/∂bias).
pub fn glm_loss_gradient(model: &PoissonGlm, x: &Matrix, y: &[f64]) -> Result<(f64, PoissonGlm)> {
    if x.cols() != model.input_dim() || x.rows() != y.len() {
        return Err(Error::invalid("GLM, features and labels disagree in shape"));
    }
    let mut grad = vec![0.0; model.input_dim() + 1];
    let loss = loss_with_grad(&model.params(), x, y, Some(&mut grad));
    Ok((loss, PoissonGlm::from_params(grad)))
}

pub fn train_glm(x: &Matrix, y: &[f64], config: &TrainConfig) -> Result<PoissonGlm> {
    let p = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 1.0 / (p.max(1) as f64).sqrt();
    let mut init: Vec<f64> = (0..p).map(|_| rng.random_range(-bound..=bound)).collect();
    init.push(0.0);
    let (params, meta) = descend(init, x, y, config, &loss_with_grad)?;
    let mut model = PoissonGlm::from_params(params);
    model.training = Some(meta);
    let preds: Vec<f64> = x.iter_rows().map(|r| glm_predict(&model, r)).collect::<Result<_>>()?;
    poisson_loss(&preds, y)?;
    Ok(model)
}

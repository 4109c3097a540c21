//! Poisson-loss popularity predictors: an exponential-link linear model, a
//! one-hidden-layer tanh network, and the training-mean baseline.

mod glm;
mod mlp;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use glm::{glm_loss_gradient, glm_predict, train_glm, PoissonGlm};
pub use mlp::{mlp_loss_gradient, mlp_predict, train_mlp, MlpModel, DEFAULT_HIDDEN};
pub use train::holdout_split;

/// Predictions are clamped at this value inside the loss only.
pub const LOSS_CLAMP: f64 = 1e-10;

/// `(1/N) Σ (ŷ - y log ŷ)` with ŷ clamped at [`LOSS_CLAMP`] before the log.
pub fn poisson_loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("poisson loss of an empty sample"));
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| p - y * p.max(LOSS_CLAMP).ln())
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Derivative of one sample's loss term with respect to the log-rate, given
/// the rate `yhat = exp(eta)`.
pub(crate) fn dloss_deta(yhat: f64, y: f64) -> f64 {
    if yhat >= LOSS_CLAMP {
        yhat - y
    } else {
        yhat
    }
}

/// Optimisation settings shared by both trainable models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Fraction of rows held out for early stopping, taken from the end of a
    /// seeded shuffle. Zero trains on every row and monitors training loss.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            max_epochs: 5000,
            patience: 50,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// What happened during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanBaseline {
    pub mean: f64,
}

impl MeanBaseline {
    pub fn predict(&self) -> f64 {
        self.mean
    }
}

pub fn baseline_fit(y_train: &[f64]) -> Result<MeanBaseline> {
    if y_train.is_empty() {
        return Err(Error::invalid("baseline needs at least one training label"));
    }
    Ok(MeanBaseline {
        mean: y_train.iter().sum::<f64>() / y_train.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Glm,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Baseline, ModelKind::Glm, ModelKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Glm => "glm",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model {s:?}")))
    }
}

/// Any trained predictor; serializes as a flat JSON object tagged by `variant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Model {
    Baseline(MeanBaseline),
    Glm(PoissonGlm),
    Mlp(MlpModel),
}

impl Model {
    pub fn fit(kind: ModelKind, x: &Matrix, y: &[f64], config: &TrainConfig, hidden: usize) -> Result<Model> {
        Ok(match kind {
            ModelKind::Baseline => Model::Baseline(baseline_fit(y)?),
            ModelKind::Glm => Model::Glm(train_glm(x, y, config)?),
            ModelKind::Mlp => Model::Mlp(train_mlp(x, y, config, hidden)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Baseline(_) => ModelKind::Baseline,
            Model::Glm(_) => ModelKind::Glm,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Baseline(m) => Ok(m.predict()),
            Model::Glm(m) => glm_predict(m, x),
            Model::Mlp(m) => mlp_predict(m, x),
        }
    }

    pub fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.iter_rows().map(|row| self.predict(row)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let model: Model = serde_json::from_str(text)?;
        match &model {
            Model::Baseline(b) if !b.mean.is_finite() => Err(Error::invalid("non-finite baseline mean")),
            Model::Glm(g) => PoissonGlm::new(g.weights.clone(), g.bias).map(|_| model),
            Model::Mlp(m) => m.check().map(|_| model),
            _ => Ok(model),
        }
    }
}

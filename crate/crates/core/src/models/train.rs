use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{TrainConfig, TrainingMeta};

/// Shuffles `0..n` with `seed` and returns `(train, validation)`, the
/// validation rows being the last `round(n * fraction)` of the permutation
/// (at least one and leaving at least one for training when `fraction > 0`).
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if fraction <= 0.0 || n < 2 {
        return (order, Vec::new());
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let val = order.split_off(n - n_val);
    (order, val)
}

pub(crate) fn check_data(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::invalid(format!("{} feature rows for {} labels", x.rows(), y.len())));
    }
    if x.rows() < 2 {
        return Err(Error::invalid("training needs at least two rows"));
    }
    if !x.is_finite() {
        return Err(Error::invalid("features contain non-finite values"));
    }
    if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("labels must be finite non-negative counts"));
    }
    Ok(())
}

/// Evaluates the mean loss of `params` on `(x, y)`, adding its gradient into
/// `grad` when given.
pub(crate) type LossFn<'a> = dyn Fn(&[f64], &Matrix, &[f64], Option<&mut [f64]>) -> f64 + 'a;

/// Full-batch gradient descent with early stopping on the held-out rows;
/// returns the parameters with the lowest monitored loss.
pub(crate) fn descend(
    mut params: Vec<f64>,
    x: &Matrix,
    y: &[f64],
    config: &TrainConfig,
    loss: &LossFn<'_>,
) -> Result<(Vec<f64>, TrainingMeta)> {
    config.validate()?;
    check_data(x, y)?;
    let (train_idx, val_idx) = holdout_split(x.rows(), config.validation_fraction, config.seed);
    let xt = x.select_rows(&train_idx);
    let yt: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
    let validation = (!val_idx.is_empty()).then(|| {
        (x.select_rows(&val_idx), val_idx.iter().map(|&i| y[i]).collect::<Vec<f64>>())
    });

    let mut grad = vec![0.0; params.len()];
    let mut best = (f64::INFINITY, params.clone(), 0usize, f64::NAN);
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 0..=config.max_epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let train_loss = loss(&params, &xt, &yt, Some(&mut grad));
        if !train_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical(format!(
                "training loss diverged at epoch {epoch}; try a smaller learning_rate (currently {})",
                config.learning_rate
            )));
        }
        let monitored = match &validation {
            Some((xv, yv)) => loss(&params, xv, yv, None),
            None => train_loss,
        };
        if monitored < best.0 {
            best = (monitored, params.clone(), epoch, train_loss);
            since_best = 0;
        } else {
            since_best += 1;
        }
        epochs_run = epoch;
        if since_best >= config.patience || epoch == config.max_epochs {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.learning_rate * g;
        }
    }
    let (monitored, params, best_epoch, train_loss) = best;
    if !monitored.is_finite() {
        return Err(Error::numerical("validation loss was never finite; try a smaller learning_rate"));
    }
    let meta = TrainingMeta {
        seed: config.seed,
        epochs_run,
        best_epoch,
        train_loss,
        validation_loss: validation.map(|_| monitored),
    };
    Ok((params, meta))
}

//! Cross-validated comparison of representations and models.

mod kde;
mod special;
mod stats;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{zscore_apply, zscore_fit, Representation, RepresentationSet};
use crate::models::{Model, ModelKind, TrainConfig, DEFAULT_HIDDEN};

pub use kde::{abs_error_kde, silverman_bandwidth, Kde, DEFAULT_GRID_POINTS, MIN_BANDWIDTH};
pub use special::{betainc, ln_gamma, student_t_two_sided};
pub use stats::{average_ranks, paired_ttest, rmse, spearman_rho, TTest};

/// Assignment of every row to exactly one test fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Row indices of each fold's test set, in shuffled order.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn fold_of(&self, row: usize) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(&row))
    }

    /// Rows not in fold `f`, ascending.
    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }
}

/// Seeded shuffle of `0..n` cut into `k` contiguous chunks; the first `n % k`
/// folds hold one extra row.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("cannot split {n} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(FoldPlan { k, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub hidden: usize,
    /// Model training settings; each fold trains with `seed + fold`.
    pub train: TrainConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            train: TrainConfig::default(),
        }
    }
}

/// Cross-validation outcome for one representation and model. Per-asset
/// vectors follow the representation's row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub representation: Representation,
    pub model: ModelKind,
    pub fold_rmse: Vec<f64>,
    pub overall_rmse: f64,
    pub asset_ids: Vec<String>,
    pub fold: Vec<usize>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    pub abs_errors: Vec<f64>,
    pub config: CvConfig,
}

impl EvalReport {
    pub fn squared_errors(&self) -> Vec<f64> {
        self.abs_errors.iter().map(|e| e * e).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Paired t-test on per-asset squared errors of two reports over the same assets.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<TTest> {
    if a.asset_ids != b.asset_ids {
        return Err(Error::invalid("reports cover different assets"));
    }
    paired_ttest(&a.squared_errors(), &b.squared_errors())
}

struct FoldResult {
    test_rows: Vec<usize>,
    predictions: Vec<f64>,
}

fn run_fold(rep: &RepresentationSet, y: &[f64], plan: &FoldPlan, f: usize, model: ModelKind, config: &CvConfig) -> Result<FoldResult> {
    let train_rows = plan.train_rows(f);
    let mut test_rows = plan.folds[f].clone();
    test_rows.sort_unstable();
    let mut x_train = rep.matrix.select_rows(&train_rows);
    let mut x_test = rep.matrix.select_rows(&test_rows);
    if rep.needs_zscore() {
        let z = zscore_fit(&x_train)?;
        x_train = zscore_apply(&x_train, &z)?;
        x_test = zscore_apply(&x_test, &z)?;
    }
    let y_train: Vec<f64> = train_rows.iter().map(|&i| y[i]).collect();
    let train = TrainConfig {
        seed: config.seed.wrapping_add(f as u64),
        ..config.train.clone()
    };
    let fitted = Model::fit(model, &x_train, &y_train, &train, config.hidden)?;
    let predictions = fitted.predict_rows(&x_test)?;
    Ok(FoldResult { test_rows, predictions })
}

/// k-fold cross-validation. Folds run concurrently; results are merged in
/// fold order so the report is independent of scheduling.
pub fn cross_validate(rep: &RepresentationSet, model: ModelKind, config: &CvConfig) -> Result<EvalReport> {
    if rep.matrix.rows() != rep.len() || rep.labels.len() != rep.len() {
        return Err(Error::invalid("representation rows, ids and labels disagree"));
    }
    config.train.validate()?;
    let plan = kfold_split(rep.len(), config.folds, config.seed)?;
    let y = rep.labels_f64();
    let results: Vec<Result<FoldResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..plan.k)
            .map(|f| {
                let (plan, y) = (&plan, &y);
                s.spawn(move || run_fold(rep, y, plan, f, model, config))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::numerical("fold worker panicked"))))
            .collect()
    });

    let n = rep.len();
    let mut predicted = vec![f64::NAN; n];
    let mut fold = vec![0; n];
    let mut fold_rmse = Vec::with_capacity(plan.k);
    for (f, result) in results.into_iter().enumerate() {
        let r = result.map_err(|e| Error::Fold { fold: f, source: Box::new(e) })?;
        let actual: Vec<f64> = r.test_rows.iter().map(|&i| y[i]).collect();
        fold_rmse.push(rmse(&r.predictions, &actual)?);
        for (&i, &p) in r.test_rows.iter().zip(&r.predictions) {
            predicted[i] = p;
            fold[i] = f;
        }
    }
    let abs_errors = predicted.iter().zip(&y).map(|(p, a)| (p - a).abs()).collect();
    Ok(EvalReport {
        representation: rep.name,
        model,
        overall_rmse: rmse(&predicted, &y)?,
        fold_rmse,
        asset_ids: rep.asset_ids.clone(),
        fold,
        actual: y,
        predicted,
        abs_errors,
        config: config.clone(),
    })
}

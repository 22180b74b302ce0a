//! Downstream uses of a trained model: anomaly detection by latent
//! log-likelihood ranking, missing-data imputation by gradient ascent, and
//! the regression-MAE protocol built on imputation.

use crate::density::DensityParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::NetworkParams;
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct AnomalyResult {
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ImputeInit {
    /// Initialize missing cells with training-set column means.
    TrainMean(Vec<f64>),
    /// Initialize missing cells with the mean of the row's observed cells.
    ObservedCopy,
    Zeros,
}

#[derive(Clone, Debug)]
pub struct ImputeConfig {
    pub steps: usize,
    pub step_size: f64,
    pub init: ImputeInit,
    /// true = observed.
    pub mask: Vec<bool>,
}

impl ImputeConfig {
    pub fn new(mask: Vec<bool>, init: ImputeInit) -> Self {
        ImputeConfig {
            steps: 500,
            step_size: 1e-2,
            init,
            mask,
        }
    }
}

/// Latent log-likelihood of each row: log(max(density(h(x)), eps_floor)).
pub fn score_rows(
    net: &NetworkParams,
    dens: &DensityParams,
    x: &Matrix,
    eps_floor: f64,
) -> Result<Vec<f64>> {
    if x.rows == 0 {
        return Err(Error::Empty("score on empty set".into()));
    }
    let (z, _, _) = net.forward(x)?;
    (0..z.rows)
        .into_par_iter()
        .map(|r| Ok(dens.density_eval(z.row(r))?.max(eps_floor).ln()))
        .collect()
}

/// Precision, recall and F1 with the zero-denominator convention P = R = 0.
pub fn prf1(flags: &[bool], labels: &[i64]) -> (f64, f64, f64) {
    assert_eq!(flags.len(), labels.len());
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fne = 0.0;
    for (&f, &l) in flags.iter().zip(labels) {
        match (f, l != 0) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fne += 1.0,
            _ => {}
        }
    }
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fne > 0.0 { tp / (tp + fne) } else { 0.0 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// Flags the round(ratio * M) lowest-scoring rows as anomalies and evaluates
/// against the labels (1 = anomaly). Ties at the threshold break by stable
/// input order.
pub fn anomaly_detect(
    net: &NetworkParams,
    dens: &DensityParams,
    x_test: &Matrix,
    labels: &[i64],
    ratio: f64,
    eps_floor: f64,
) -> Result<AnomalyResult> {
    if !(0.0..1.0).contains(&ratio) || ratio == 0.0 {
        return Err(Error::InvalidArgument("ratio must be in (0, 1)".into()));
    }
    if labels.len() != x_test.rows {
        return Err(Error::DimMismatch("labels length != test rows".into()));
    }
    let scores = score_rows(net, dens, x_test, eps_floor)?;
    let n_flag = (ratio * x_test.rows as f64).round() as usize;
    if n_flag == 0 {
        return Err(Error::InvalidArgument(
            "ratio yields zero flagged samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut flags = vec![false; scores.len()];
    for &i in &order[..n_flag] {
        flags[i] = true;
    }
    let threshold = scores[order[n_flag - 1]];
    let (precision, recall, f1) = prf1(&flags, labels);
    Ok(AnomalyResult {
        scores,
        flags,
        precision,
        recall,
        f1,
        threshold,
    })
}

/// Completes a partially observed row by fixed-step gradient ascent on
/// log density(h(x)) over the missing coordinates only. Observed coordinates
/// are returned unchanged.
pub fn impute_missing(
    net: &NetworkParams,
    dens: &DensityParams,
    x_observed: &[f64],
    cfg: &ImputeConfig,
    eps_floor: f64,
) -> Result<Vec<f64>> {
    let n = x_observed.len();
    if cfg.mask.len() != n {
        return Err(Error::DimMismatch("mask length != row width".into()));
    }
    if cfg.mask.iter().all(|&m| m) {
        return Err(Error::InvalidArgument("no missing coordinates".into()));
    }
    if cfg.step_size <= 0.0 {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }

    let mut x = x_observed.to_vec();
    let init_value = |c: usize| -> f64 {
        match &cfg.init {
            ImputeInit::TrainMean(means) => means[c],
            ImputeInit::ObservedCopy => {
                let obs: Vec<f64> = x_observed
                    .iter()
                    .zip(&cfg.mask)
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| v)
                    .collect();
                if obs.is_empty() {
                    0.5
                } else {
                    obs.iter().sum::<f64>() / obs.len() as f64
                }
            }
            ImputeInit::Zeros => 0.0,
        }
    };
    for c in 0..n {
        if !cfg.mask[c] {
            x[c] = init_value(c);
        }
    }

    for _ in 0..cfg.steps {
        let xm = Matrix::from_vec(1, n, x.clone());
        let (z, _, tape) = net.forward(&xm)?;
        let p = dens.density_eval(z.row(0))?;
        if !p.is_finite() {
            break; // abort with last finite iterate
        }
        // ascent direction on log p; nll_gradients returns the gradient of
        // -log p for a one-row batch, so negate
        let g = dens.nll_gradients(&z, eps_floor)?;
        let mut d_z = g.grad_z;
        for v in &mut d_z.data {
            *v = -*v;
        }
        let d_xhat = Matrix::zeros(1, net.decoder.last().unwrap().w.cols);
        let (_, dx) = net.backward(&tape, &d_xhat, &d_z)?;
        for c in 0..n {
            if !cfg.mask[c] {
                x[c] = (x[c] + cfg.step_size * dx.get(0, c)).clamp(0.0, 1.0);
            }
        }
    }
    // observed coordinates pass through bitwise
    for c in 0..n {
        if cfg.mask[c] {
            x[c] = x_observed[c];
        }
    }
    Ok(x)
}

/// Masks `target_column` in every test row, imputes it, and returns the mean
/// absolute error against the true values, in normalized units.
pub fn regression_mae(
    net: &NetworkParams,
    dens: &DensityParams,
    x_test: &Matrix,
    target_column: usize,
    steps: usize,
    step_size: f64,
    train_means: &[f64],
    eps_floor: f64,
) -> Result<f64> {
    if target_column >= x_test.cols {
        return Err(Error::InvalidArgument(format!(
            "target column {target_column} out of range"
        )));
    }
    if x_test.rows == 0 {
        return Err(Error::Empty("regression on empty test set".into()));
    }
    let mut mask = vec![true; x_test.cols];
    mask[target_column] = false;
    let cfg = ImputeConfig {
        steps,
        step_size,
        init: ImputeInit::TrainMean(train_means.to_vec()),
        mask,
    };
    let errs: Result<Vec<f64>> = (0..x_test.rows)
        .into_par_iter()
        .map(|r| {
            let row = x_test.row(r);
            let filled = impute_missing(net, dens, row, &cfg, eps_floor)?;
            Ok((filled[target_column] - row[target_column]).abs())
        })
        .collect();
    let errs = errs?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

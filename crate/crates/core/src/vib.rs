//! Variational bottleneck loss: reparameterized codes, cross-entropy
//! prediction term and closed-form Gaussian KL compression term.

use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{chacha, stream};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Diagonal Gaussian over node codes, recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GaussianPosterior {
    /// N×H
    pub mu: Var,
    /// N×H, clamped to `[LOG_VAR_MIN, LOG_VAR_MAX]`
    pub log_var: Var,
}

impl GaussianPosterior {
    /// Clamps a raw log-variance and pairs it with `mu`.
    pub fn new(tape: &mut Tape, mu: Var, raw_log_var: Var) -> Result<Self> {
        if tape.shape(mu) != tape.shape(raw_log_var) {
            return Err(Error::Shape {
                op: "posterior",
                lhs: tape.shape(mu),
                rhs: tape.shape(raw_log_var),
            });
        }
        let log_var = tape.clamp(raw_log_var, LOG_VAR_MIN, LOG_VAR_MAX)?;
        Ok(GaussianPosterior { mu, log_var })
    }
}

/// Standard-normal noise from the seeded stream.
pub fn standard_normal(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = chacha(seed, &[stream::REPARAM]);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("rows * cols entries")
}

/// `z = mu + exp(log_var / 2) ⊙ ε`.
pub fn reparameterize(tape: &mut Tape, post: &GaussianPosterior, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(post.mu);
    let eps = tape.constant(standard_normal(seed, r, c))?;
    let half = tape.scale(post.log_var, 0.5)?;
    let std = tape.exp(half)?;
    let noise = tape.mul(std, eps)?;
    tape.add(post.mu, noise)
}

fn masked_rows(mask: &[bool], n: usize, op: &'static str) -> Result<Vec<usize>> {
    if mask.len() != n {
        return Err(Error::Shape {
            op,
            lhs: (mask.len(), 1),
            rhs: (n, 1),
        });
    }
    let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::invalid(format!("{op}: empty mask")));
    }
    Ok(rows)
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)` over
/// masked rows.
pub fn prediction_loss(tape: &mut Tape, logits: Var, labels: &[usize], mask: &[bool]) -> Result<Var> {
    let (n, c) = tape.shape(logits);
    if labels.len() != n {
        return Err(Error::Shape {
            op: "prediction_loss",
            lhs: (labels.len(), 1),
            rhs: (n, c),
        });
    }
    let rows = masked_rows(mask, n, "prediction_loss")?;
    let mut pick = Matrix::zeros(rows.len(), c);
    for (k, &i) in rows.iter().enumerate() {
        if labels[i] >= c {
            return Err(Error::invalid(format!(
                "label {} of node {i} outside {c} classes",
                labels[i]
            )));
        }
        pick.set(k, labels[i], 1.0);
    }
    let count = rows.len() as f64;
    let lsm = tape.row_log_softmax(logits)?;
    let sel = tape.gather_rows(lsm, rows)?;
    let pick = tape.constant(pick)?;
    let ll = tape.mul(sel, pick)?;
    let ll = tape.sum_all(ll)?;
    tape.scale(ll, -1.0 / count)
}

/// Mean over masked rows of `Σ_h ½(μ² + σ² − 1 − log σ²)`, the KL divergence
/// to a standard-normal prior.
pub fn compression_loss(tape: &mut Tape, post: &GaussianPosterior, mask: &[bool]) -> Result<Var> {
    let n = tape.shape(post.mu).0;
    let rows = masked_rows(mask, n, "compression_loss")?;
    let count = rows.len() as f64;
    let mu = tape.gather_rows(post.mu, rows.clone())?;
    let lv = tape.gather_rows(post.log_var, rows)?;
    let mu2 = tape.square(mu)?;
    let var = tape.exp(lv)?;
    let t = tape.add(mu2, var)?;
    let t = tape.sub(t, lv)?;
    let t = tape.add_scalar(t, -1.0)?;
    let s = tape.sum_all(t)?;
    tape.scale(s, 0.5 / count)
}

#[derive(Debug, Clone, Copy)]
pub struct VibLossParts {
    pub prediction: Var,
    pub compression: Var,
    pub beta: f64,
    pub total: Var,
}

/// `total = prediction + beta · compression`.
pub fn vib_loss(tape: &mut Tape, prediction: Var, compression: Var, beta: f64) -> Result<VibLossParts> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be finite and >= 0, got {beta}")));
    }
    let weighted = tape.scale(compression, beta)?;
    let total = tape.add(prediction, weighted)?;
    Ok(VibLossParts {
        prediction,
        compression,
        beta,
        total,
    })
}

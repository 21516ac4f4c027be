//! Asymmetric pruning of a boosted stump set.
//!
//! The stumps' +/-1 outputs are treated as a feature vector. Class statistics
//! over that vector feed the Fisher-type objective `b^T S_w^{-1} b` with
//! `b = mu1 - mu2` and `S_w = gamma * Sigma1 + (1 - gamma) * Sigma2`.
//! `gamma = 1` is the linear asymmetric classifier, `gamma = 0.5` plain LDA.
//! Backward elimination drops one stump at a time, keeping `S_w^{-1}` current
//! through rank-1 downdates.

use crate::boost::ResponseMatrix;
use crate::error::{Error, Result};
use crate::linalg::{
    invert_spd, sparse_lda_objective, InverseState, SymMatrix, DEFAULT_TIKHONOV,
};
use crate::par;

/// Per-class mean and biased covariance of the stump outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassStats {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub sigma1: SymMatrix,
    pub sigma2: SymMatrix,
    pub n1: usize,
    pub n2: usize,
}

impl ClassStats {
    pub fn dim(&self) -> usize {
        self.mu1.len()
    }

    /// `mu1 - mu2`.
    pub fn gap(&self) -> Vec<f64> {
        self.mu1.iter().zip(&self.mu2).map(|(a, b)| a - b).collect()
    }

    /// Statistics restricted to the listed stump indices.
    pub fn select(&self, indices: &[usize]) -> ClassStats {
        ClassStats {
            mu1: indices.iter().map(|&i| self.mu1[i]).collect(),
            mu2: indices.iter().map(|&i| self.mu2[i]).collect(),
            sigma1: self.sigma1.submatrix(indices),
            sigma2: self.sigma2.submatrix(indices),
            n1: self.n1,
            n2: self.n2,
        }
    }
}

pub fn class_stats(responses: &ResponseMatrix, labels: &[i8]) -> Result<ClassStats> {
    if labels.len() != responses.n_samples() {
        return Err(Error::DimensionError {
            expected: responses.n_samples(),
            got: labels.len(),
        });
    }
    let t = responses.n_stumps();
    if t == 0 {
        return Err(Error::DimensionError {
            expected: 1,
            got: 0,
        });
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] > 0).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] <= 0).collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "class statistics need two samples per class, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    let (mu1, sigma1) = moments(responses, &pos);
    let (mu2, sigma2) = moments(responses, &neg);
    Ok(ClassStats {
        mu1,
        mu2,
        sigma1,
        sigma2,
        n1: pos.len(),
        n2: neg.len(),
    })
}

fn moments(responses: &ResponseMatrix, rows: &[usize]) -> (Vec<f64>, SymMatrix) {
    let t = responses.n_stumps();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..t)
        .map(|j| {
            let col = responses.column(j);
            rows.iter().map(|&i| col[i] as f64).sum::<f64>() / n
        })
        .collect();
    // Outputs are +/-1, so E[h_i h_j] is an exact integer count over n.
    let entries = par::map_range(t, |a| {
        let ca = responses.column(a);
        (0..=a)
            .map(|b| {
                let cb = responses.column(b);
                let agree: i64 = rows.iter().map(|&i| (ca[i] * cb[i]) as i64).sum();
                agree as f64 / n - mean[a] * mean[b]
            })
            .collect::<Vec<f64>>()
    });
    let mut cov = SymMatrix::zeros(t);
    for (a, row) in entries.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            cov.set(a, b, v);
        }
    }
    (mean, cov)
}

/// `gamma * Sigma1 + (1 - gamma) * Sigma2`.
pub fn mixed_within_cov(stats: &ClassStats, gamma: f64) -> Result<SymMatrix> {
    check_gamma(gamma)?;
    if gamma == 1.0 {
        return Ok(stats.sigma1.clone());
    }
    if gamma == 0.0 {
        return Ok(stats.sigma2.clone());
    }
    stats.sigma1.combine(gamma, &stats.sigma2, 1.0 - gamma)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config(format!("gamma {gamma} outside [0, 1]")));
    }
    Ok(())
}

/// Inverse of `S_w + lambda I`. A zero `lambda` lets [`invert_spd`] regularize
/// on demand; an all-zero `S_w` falls back to a unit-scale ridge.
fn regularized_inverse(sw: &SymMatrix, lambda: f64) -> Result<(SymMatrix, f64)> {
    match invert_spd(sw, lambda) {
        Ok(inv) => Ok((inv.inverse, inv.lambda)),
        Err(Error::SingularMatrix) if lambda == 0.0 && sw.trace() == 0.0 => {
            let inv = invert_spd(sw, DEFAULT_TIKHONOV)?;
            Ok((inv.inverse, inv.lambda))
        }
        Err(e) => Err(e),
    }
}

/// `w = (S_w(gamma) + lambda I)^{-1} (mu1 - mu2)`.
pub fn closed_form_weights(stats: &ClassStats, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    let sw = mixed_within_cov(stats, gamma)?;
    let (inv, _) = regularized_inverse(&sw, lambda)?;
    inv.mul_vec(&stats.gap())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneResult {
    /// Surviving stump indices in their original (boosting) order.
    pub kept: Vec<usize>,
    /// Coefficients aligned with `kept`.
    pub weights: Vec<f64>,
    pub gamma: f64,
    /// Ridge held fixed through every elimination.
    pub lambda: f64,
    /// Objective of the full model before any elimination.
    pub initial_objective: f64,
    /// Objective after each elimination.
    pub objective_trace: Vec<f64>,
    /// Stump indices in the order they were removed.
    pub removed: Vec<usize>,
    /// Candidates whose trial downdate was degenerate at some step.
    pub skipped: Vec<usize>,
    /// Set when elimination stopped before reaching the target.
    pub stopped_early: bool,
}

/// Greedy backward elimination down to `target` stumps.
pub fn backward_eliminate(stats: &ClassStats, gamma: f64, target: usize) -> Result<PruneResult> {
    backward_eliminate_until(stats, gamma, target, |_, _| true)
}

/// Like [`backward_eliminate`], but before committing each elimination the
/// candidate model (kept indices and coefficients) is passed to `accept`;
/// returning `false` stops elimination with the current model.
pub fn backward_eliminate_until<F>(
    stats: &ClassStats,
    gamma: f64,
    target: usize,
    mut accept: F,
) -> Result<PruneResult>
where
    F: FnMut(&[usize], &[f64]) -> bool,
{
    check_gamma(gamma)?;
    let dim = stats.dim();
    if target < 1 {
        return Err(Error::config("pruning target must be at least 1"));
    }
    if target > dim {
        return Err(Error::config(format!(
            "pruning target {target} exceeds the {dim} available stumps"
        )));
    }
    let b = stats.gap();
    let sw = mixed_within_cov(stats, gamma)?;
    let (inverse, lambda) = regularized_inverse(&sw, 0.0)?;
    let mut state = InverseState::new(inverse, (0..dim).collect())?;
    let initial_objective = sparse_lda_objective(state.inverse(), &b)?;

    let mut trace = Vec::with_capacity(dim - target);
    let mut removed = Vec::with_capacity(dim - target);
    let mut skipped = Vec::new();
    let mut stopped_early = false;

    while state.order() > target {
        let current = &state;
        let best = par::best_of(
            current.order(),
            |pos| {
                // Degenerate pivots are reported below and never win.
                let trial = current.downdate(pos).ok()?;
                let sub_b: Vec<f64> = trial.active().iter().map(|&i| b[i]).collect();
                let obj = sparse_lda_objective(trial.inverse(), &sub_b).ok()?;
                Some((obj, current.active()[pos], trial))
            },
            // Keep the larger objective; on ties drop the later stump.
            |a: &(f64, usize, InverseState), b: &(f64, usize, InverseState)| {
                a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
            },
        );
        for (pos, &idx) in state.active().iter().enumerate() {
            if state.inverse().get(pos, pos).abs() <= crate::linalg::DOWNDATE_PIVOT
                && !skipped.contains(&idx)
            {
                log::warn!("degenerate downdate for stump {idx}; skipped");
                skipped.push(idx);
            }
        }
        let Some((obj, idx, next)) = best else {
            stopped_early = true;
            break;
        };
        let sub_b: Vec<f64> = next.active().iter().map(|&i| b[i]).collect();
        let weights = next.inverse().mul_vec(&sub_b)?;
        if !accept(next.active(), &weights) {
            stopped_early = true;
            break;
        }
        trace.push(obj);
        removed.push(idx);
        state = next;
    }

    let kept = state.active().to_vec();
    let sub_b: Vec<f64> = kept.iter().map(|&i| b[i]).collect();
    let weights = state.inverse().mul_vec(&sub_b)?;
    Ok(PruneResult {
        kept,
        weights,
        gamma,
        lambda,
        initial_objective,
        objective_trace: trace,
        removed,
        skipped,
        stopped_early,
    })
}

use std::fmt;
use std::str::FromStr;

use crate::boost::{adaboost_train, weighted_vote, BoostConfig, BoostOutput, FeatureColumns, ResponseMatrix};
use crate::error::{Error, Result};
use crate::prune::{backward_eliminate_until, class_stats, closed_form_weights, PruneResult};
use crate::weak::Stump;

/// How a node's weak classifiers and coefficients are obtained.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Trainer {
    /// AdaBoost to `T1` stumps, then backward elimination down to `T`.
    Pruning,
    /// AdaBoost to `T` stumps with boosting coefficients.
    AdaBoost,
    /// AdaBoost to `T` stumps, coefficients re-fit with `gamma = 0.5`.
    AdaBoostLda,
    /// AdaBoost to `T` stumps, coefficients re-fit with `gamma = 1`.
    AdaBoostLac,
}

impl Trainer {
    pub const ALL: [Trainer; 4] = [
        Trainer::Pruning,
        Trainer::AdaBoost,
        Trainer::AdaBoostLda,
        Trainer::AdaBoostLac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Trainer::Pruning => "pruning",
            Trainer::AdaBoost => "adaboost",
            Trainer::AdaBoostLda => "adaboost+lda",
            Trainer::AdaBoostLac => "adaboost+lac",
        }
    }
}

impl fmt::Display for Trainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trainer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Trainer::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config(format!("unknown trainer {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct NodeConfig {
    /// Size of the boosted candidate set.
    pub t1: usize,
    /// Stumps kept in the node.
    pub t: usize,
    pub gamma: f64,
    pub trainer: Trainer,
    /// False-positive rate the node threshold is placed at on training negatives.
    pub target_fp: f64,
    /// Fraction of the feature pool searched per boosting round.
    pub sample_fraction: f64,
    pub seed: u64,
    /// When set, pruning stops as soon as a further elimination would drop
    /// the training detection rate (at `target_fp`) below this goal.
    pub early_exit_dr: Option<f64>,
}

impl NodeConfig {
    pub fn new(t1: usize, t: usize) -> Self {
        NodeConfig {
            t1,
            t,
            gamma: 0.5,
            trainer: Trainer::Pruning,
            target_fp: 0.5,
            sample_fraction: 1.0,
            seed: 0,
            early_exit_dr: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.t1 == 0 {
            return Err(Error::config("node sizes must be positive"));
        }
        if self.t > self.t1 {
            return Err(Error::config(format!(
                "node keeps {} stumps but only boosts {}",
                self.t, self.t1
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.target_fp > 0.0 && self.target_fp < 1.0) {
            return Err(Error::config(format!(
                "target false-positive rate {} outside (0, 1)",
                self.target_fp
            )));
        }
        Ok(())
    }
}

/// Node trained on abstract feature columns. Stump feature ids index the
/// columns it was trained on.
#[derive(Clone, Debug)]
pub struct NodeModel {
    pub stumps: Vec<Stump>,
    pub coefs: Vec<f64>,
    pub threshold: f64,
    pub train_dr: f64,
    pub train_fp: f64,
    pub prune: Option<PruneResult>,
    pub short_pool: bool,
}

impl NodeModel {
    /// `sum_j c_j h_j(x) - b` given the raw feature values of one sample.
    pub fn margin(&self, feature_value: impl Fn(usize) -> f64) -> f64 {
        self.stumps
            .iter()
            .zip(&self.coefs)
            .map(|(s, c)| c * s.predict(feature_value(s.feature_id)) as f64)
            .sum::<f64>()
            - self.threshold
    }
}

/// Threshold `b` such that the fraction of `margins >= b` is as large as
/// possible without exceeding `target_fp`. `b` sits midway between the two
/// bracketing order statistics.
pub fn place_threshold(margins: &[f64], target_fp: f64) -> Result<f64> {
    if !(target_fp > 0.0 && target_fp < 1.0) {
        return Err(Error::config(format!(
            "target false-positive rate {target_fp} outside (0, 1)"
        )));
    }
    if margins.is_empty() {
        return Err(Error::InsufficientData("no negative margins".into()));
    }
    if margins.iter().any(|m| !m.is_finite()) {
        return Err(Error::config("non-finite margin"));
    }
    let mut sorted = margins.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut pass = ((target_fp * n as f64) + 1e-9).floor() as usize;
    pass = pass.min(n - 1);
    // Ties cannot be split by a threshold: back off to the largest attainable count.
    while pass > 0 && sorted[n - pass - 1] == sorted[n - pass] {
        pass -= 1;
    }
    if pass == 0 {
        let top = sorted[n - 1];
        let b = top + 1e-9;
        return Ok(if b > top { b } else { top.next_up() });
    }
    let lo = sorted[n - pass - 1];
    let hi = sorted[n - pass];
    let mid = lo + 0.5 * (hi - lo);
    Ok(if mid > lo { mid } else { hi })
}

/// Detection and false-positive rates of `margins` (already offset by `b`).
fn rates(margins: &[f64], labels: &[i8]) -> (f64, f64) {
    let (mut tp, mut np, mut fp, mut nn) = (0usize, 0usize, 0usize, 0usize);
    for (&m, &l) in margins.iter().zip(labels) {
        if l > 0 {
            np += 1;
            tp += (m >= 0.0) as usize;
        } else {
            nn += 1;
            fp += (m >= 0.0) as usize;
        }
    }
    (tp as f64 / np.max(1) as f64, fp as f64 / nn.max(1) as f64)
}

fn vote_margins(responses: &ResponseMatrix, cols: &[usize], coefs: &[f64]) -> Vec<f64> {
    (0..responses.n_samples())
        .map(|i| {
            cols.iter()
                .zip(coefs)
                .map(|(&c, w)| w * responses.column(c)[i] as f64)
                .sum()
        })
        .collect()
}

/// Threshold at `target_fp` on the negatives, plus the resulting training rates.
fn threshold_and_rates(margins: &[f64], labels: &[i8], target_fp: f64) -> Result<(f64, f64, f64)> {
    let neg: Vec<f64> = margins
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l <= 0)
        .map(|(&m, _)| m)
        .collect();
    let b = place_threshold(&neg, target_fp)?;
    let shifted: Vec<f64> = margins.iter().map(|m| m - b).collect();
    let (dr, fp) = rates(&shifted, labels);
    Ok((b, dr, fp))
}

/// Turns a boosting run into a node for `trainer`. `boost` must hold at
/// least `t` rounds for the non-pruning trainers; extra rounds are ignored.
pub fn fit_node(boost: &BoostOutput, labels: &[i8], cfg: &NodeConfig) -> Result<NodeModel> {
    cfg.validate()?;
    let available = boost.ensemble.len();
    if available == 0 {
        return Err(Error::InsufficientData("boosting produced no stumps".into()));
    }
    let t = cfg.t.min(available);
    let (cols, coefs, prune) = match cfg.trainer {
        Trainer::AdaBoost => ((0..t).collect(), boost.ensemble.alphas[..t].to_vec(), None),
        Trainer::AdaBoostLda | Trainer::AdaBoostLac => {
            let gamma = if cfg.trainer == Trainer::AdaBoostLda { 0.5 } else { 1.0 };
            let cols: Vec<usize> = (0..t).collect();
            let stats = class_stats(&boost.responses.select(&cols), labels)?;
            let w = closed_form_weights(&stats, gamma, 0.0)?;
            (cols, w, None)
        }
        Trainer::Pruning => {
            let pool: Vec<usize> = (0..cfg.t1.min(available)).collect();
            let responses = boost.responses.select(&pool);
            let stats = class_stats(&responses, labels)?;
            let result = match cfg.early_exit_dr {
                None => backward_eliminate_until(&stats, cfg.gamma, t, |_, _| true)?,
                Some(goal) => backward_eliminate_until(&stats, cfg.gamma, t, |kept, w| {
                    let m = vote_margins(&responses, kept, w);
                    threshold_and_rates(&m, labels, cfg.target_fp)
                        .map(|(_, dr, _)| dr >= goal)
                        .unwrap_or(false)
                })?,
            };
            (result.kept.clone(), result.weights.clone(), Some(result))
        }
    };
    let margins = vote_margins(&boost.responses, &cols, &coefs);
    let (threshold, train_dr, train_fp) = threshold_and_rates(&margins, labels, cfg.target_fp)?;
    Ok(NodeModel {
        stumps: cols.iter().map(|&c| boost.ensemble.stumps[c]).collect(),
        coefs,
        threshold,
        train_dr,
        train_fp,
        prune,
        short_pool: boost.short_pool,
    })
}

/// Full node pipeline on precomputed feature columns: boosting, coefficient
/// assignment for the chosen trainer, and threshold placement.
pub fn train_node_columns(columns: &FeatureColumns, labels: &[i8], cfg: &NodeConfig) -> Result<NodeModel> {
    cfg.validate()?;
    let rounds = match cfg.trainer {
        Trainer::Pruning => cfg.t1,
        _ => cfg.t,
    };
    let boost = adaboost_train(
        columns,
        labels,
        &BoostConfig {
            rounds,
            sample_fraction: cfg.sample_fraction,
            seed: cfg.seed,
        },
    )?;
    if boost.short_pool {
        log::warn!(
            "boosting stopped at {} of {rounds} rounds; node keeps at most that many stumps",
            boost.ensemble.len()
        );
    }
    fit_node(&boost, labels, cfg)
}

/// Detection rate at the threshold that passes `target_fp` of the given
/// negative margins.
pub fn detection_rate_at_fp(pos_margins: &[f64], neg_margins: &[f64], target_fp: f64) -> Result<f64> {
    let b = place_threshold(neg_margins, target_fp)?;
    Ok(pos_margins.iter().filter(|&&m| m >= b).count() as f64 / pos_margins.len().max(1) as f64)
}

/// Raw vote `sum c_j h_j` over a stump subset (threshold not applied).
pub fn vote(stumps: &[Stump], coefs: &[f64], feature_value: impl Fn(usize) -> f64) -> f64 {
    let outputs: Vec<i8> = stumps.iter().map(|s| s.predict(feature_value(s.feature_id))).collect();
    weighted_vote(coefs, &outputs)
}

//! Discrete AdaBoost over a cached pool of feature columns.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::weak::{sort_order, train_stump_sorted, Stump};

const EPS_CLAMP: f64 = 1e-10;
const STOP_ERROR: f64 = 0.5 - 1e-12;

/// Feature responses for every sample, one column per pool entry, with the
/// ascending sort order cached so boosting rounds never re-sort.
#[derive(Clone, Debug)]
pub struct FeatureColumns {
    n_samples: usize,
    values: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl FeatureColumns {
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_samples = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != n_samples) {
            return Err(Error::DimensionError {
                expected: n_samples,
                got: bad.len(),
            });
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite feature value"));
        }
        let order = par::map_slice(&columns, |c| sort_order(c));
        Ok(FeatureColumns {
            n_samples,
            values: columns,
            order,
        })
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn column(&self, f: usize) -> &[f64] {
        &self.values[f]
    }

    /// Best stump for feature `f` under `weights`.
    pub fn train(&self, f: usize, labels: &[i8], weights: &[f64]) -> Stump {
        train_stump_sorted(&self.values[f], &self.order[f], labels, weights, f)
    }
}

/// +/-1 outputs of the selected stumps on the training samples, column per stump.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMatrix {
    n_samples: usize,
    columns: Vec<Vec<i8>>,
}

impl ResponseMatrix {
    pub fn new(n_samples: usize, columns: Vec<Vec<i8>>) -> Result<Self> {
        if let Some(bad) = columns.iter().find(|c| c.len() != n_samples) {
            return Err(Error::DimensionError {
                expected: n_samples,
                got: bad.len(),
            });
        }
        Ok(ResponseMatrix { n_samples, columns })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_stumps(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, t: usize) -> &[i8] {
        &self.columns[t]
    }

    pub fn row(&self, i: usize) -> Vec<i8> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Keeps the listed stump columns, in the listed order.
    pub fn select(&self, stumps: &[usize]) -> ResponseMatrix {
        ResponseMatrix {
            n_samples: self.n_samples,
            columns: stumps.iter().map(|&t| self.columns[t].clone()).collect(),
        }
    }
}

/// Weighted vote of stumps with rejection threshold `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub stumps: Vec<Stump>,
    pub alphas: Vec<f64>,
    pub threshold: f64,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.stumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stumps.is_empty()
    }
}

/// `sum_t alpha_t h_t - b`.
pub fn ensemble_margin(e: &Ensemble, outputs: &[i8]) -> Result<f64> {
    if outputs.len() != e.alphas.len() {
        return Err(Error::DimensionError {
            expected: e.alphas.len(),
            got: outputs.len(),
        });
    }
    Ok(weighted_vote(&e.alphas, outputs) - e.threshold)
}

pub(crate) fn weighted_vote(coefs: &[f64], outputs: &[i8]) -> f64 {
    coefs.iter().zip(outputs).map(|(a, &h)| a * h as f64).sum()
}

/// `0.5 * ln((1 - eps) / eps)` with `eps` clamped away from 0 and 1.
pub fn adaboost_alpha(eps: f64) -> f64 {
    let e = eps.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
    0.5 * ((1.0 - e) / e).ln()
}

#[derive(Clone, Debug)]
pub struct BoostConfig {
    pub rounds: usize,
    /// Fraction of the pool searched each round; 1.0 searches everything.
    pub sample_fraction: f64,
    pub seed: u64,
}

impl BoostConfig {
    pub fn rounds(rounds: usize) -> Self {
        BoostConfig {
            rounds,
            sample_fraction: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoostOutput {
    pub ensemble: Ensemble,
    pub responses: ResponseMatrix,
    /// Set when boosting ran out of useful stumps before the requested rounds.
    pub short_pool: bool,
}

/// Class-balanced starting weights: each class carries half of the mass.
pub fn balanced_weights(labels: &[i8]) -> Result<Vec<f64>> {
    let n_pos = labels.iter().filter(|&&l| l > 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InsufficientData(format!(
            "both classes required, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let (wp, wn) = (0.5 / n_pos as f64, 0.5 / n_neg as f64);
    Ok(labels.iter().map(|&l| if l > 0 { wp } else { wn }).collect())
}

/// Runs up to `config.rounds` rounds of discrete AdaBoost and returns the
/// ensemble together with the cached stump outputs on the training set.
pub fn adaboost_train(
    columns: &FeatureColumns,
    labels: &[i8],
    config: &BoostConfig,
) -> Result<BoostOutput> {
    if columns.n_features() == 0 {
        return Err(Error::config("empty feature pool"));
    }
    if config.rounds == 0 {
        return Err(Error::config("boosting needs at least one round"));
    }
    if !(config.sample_fraction > 0.0 && config.sample_fraction <= 1.0) {
        return Err(Error::config(format!(
            "sample fraction {} outside (0, 1]",
            config.sample_fraction
        )));
    }
    if labels.len() != columns.n_samples() {
        return Err(Error::DimensionError {
            expected: columns.n_samples(),
            got: labels.len(),
        });
    }
    if labels.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::config("labels must be +1 or -1"));
    }
    let mut weights = balanced_weights(labels)?;
    let m = columns.n_features();
    let per_round = ((m as f64 * config.sample_fraction).ceil() as usize).clamp(1, m);

    let mut stumps = Vec::with_capacity(config.rounds);
    let mut alphas = Vec::with_capacity(config.rounds);
    let mut outputs = Vec::with_capacity(config.rounds);
    let mut short_pool = false;

    for round in 0..config.rounds {
        let candidates: Vec<usize> = if per_round == m {
            (0..m).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(round as u64);
            let mut picks = rand::seq::index::sample(&mut rng, m, per_round).into_vec();
            picks.sort_unstable();
            picks
        };
        let best = par::best_of(
            candidates.len(),
            |k| Some(columns.train(candidates[k], labels, &weights)),
            |a: &Stump, b: &Stump| {
                a.weighted_error < b.weighted_error
                    || (a.weighted_error == b.weighted_error && a.feature_id < b.feature_id)
            },
        )
        .expect("non-empty candidate set");
        if best.weighted_error >= STOP_ERROR {
            log::debug!(
                "boosting stopped after {round} rounds: best error {}",
                best.weighted_error
            );
            short_pool = true;
            break;
        }
        let alpha = adaboost_alpha(best.weighted_error);
        let h: Vec<i8> = columns
            .column(best.feature_id)
            .iter()
            .map(|&v| best.predict(v))
            .collect();
        let mut total = 0.0;
        for ((w, &y), &hi) in weights.iter_mut().zip(labels).zip(&h) {
            *w *= (-alpha * (y * hi) as f64).exp();
            total += *w;
        }
        weights.iter_mut().for_each(|w| *w /= total);
        stumps.push(best);
        alphas.push(alpha);
        outputs.push(h);
    }
    if stumps.len() < config.rounds {
        short_pool = true;
    }
    Ok(BoostOutput {
        ensemble: Ensemble {
            stumps,
            alphas,
            threshold: 0.0,
        },
        responses: ResponseMatrix::new(columns.n_samples(), outputs)?,
        short_pool,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_closed_forms() {
        assert!((adaboost_alpha(0.25) - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!((adaboost_alpha(0.0) - 0.5 * ((1.0 - 1e-10) / 1e-10f64).ln()).abs() < 1e-12);
        assert!((adaboost_alpha(0.0) - 11.5129).abs() < 1e-3);
    }

    #[test]
    fn perfect_feature_wins_first_round() {
        let labels = [1, 1, 1, -1, -1, -1];
        let good = vec![5.0, 6.0, 7.0, 1.0, 2.0, 3.0];
        let noise = vec![1.0, 3.0, 2.0, 3.0, 1.0, 2.0];
        let cols = FeatureColumns::new(vec![noise, good]).unwrap();
        let out = adaboost_train(&cols, &labels, &BoostConfig::rounds(1)).unwrap();
        assert_eq!(out.ensemble.stumps[0].feature_id, 1);
        assert_eq!(out.ensemble.stumps[0].weighted_error, 0.0);
        assert!((out.ensemble.alphas[0] - adaboost_alpha(0.0)).abs() < 1e-12);
        assert_eq!(out.responses.column(0), &[1, 1, 1, -1, -1, -1]);
    }

    #[test]
    fn margin_and_dimension_check() {
        let s = Stump {
            feature_id: 0,
            theta: 0.0,
            polarity: 1,
            weighted_error: 0.1,
        };
        let mut e = Ensemble {
            stumps: vec![s, s],
            alphas: vec![0.5, 1.5],
            threshold: 0.0,
        };
        assert_eq!(ensemble_margin(&e, &[1, 1]).unwrap(), 2.0);
        e.threshold = 2.0;
        assert_eq!(ensemble_margin(&e, &[1, 1]).unwrap(), 0.0);
        assert!(ensemble_margin(&e, &[1]).is_err());
    }

    #[test]
    fn errors() {
        let cols = FeatureColumns::new(vec![]).unwrap();
        assert!(matches!(
            adaboost_train(&cols, &[], &BoostConfig::rounds(1)),
            Err(Error::ConfigError(_))
        ));
        let cols = FeatureColumns::new(vec![vec![1.0, 2.0]]).unwrap();
        assert!(adaboost_train(&cols, &[1, 1], &BoostConfig::rounds(1)).is_err());
    }

    #[test]
    fn balanced_init() {
        let w = balanced_weights(&[1, -1, -1, -1]).unwrap();
        assert_eq!(w, vec![0.5, 0.5 / 3.0, 0.5 / 3.0, 0.5 / 3.0]);
    }
}

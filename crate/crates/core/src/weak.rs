//! Decision stumps trained by sorting feature values and scanning thresholds.

use crate::error::{Error, Result};

/// One-feature threshold classifier `h(x) = sign(p (x - theta))`, with
/// `sign(0) = +1`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Stump {
    pub feature_id: usize,
    pub theta: f64,
    /// Either `+1` or `-1`.
    pub polarity: i8,
    pub weighted_error: f64,
}

impl Stump {
    #[inline]
    pub fn predict(&self, value: f64) -> i8 {
        stump_predict(self, value)
    }
}

#[inline]
pub fn stump_predict(s: &Stump, value: f64) -> i8 {
    if s.polarity as f64 * (value - s.theta) >= 0.0 {
        1
    } else {
        -1
    }
}

/// Offset used when the best threshold sits outside the observed range.
fn outer_margin(min: f64, max: f64) -> f64 {
    1e-9 + 1e-6 * (max - min)
}

/// Sorting permutation of `values`, ties kept in index order.
pub fn sort_order(values: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..values.len() as u32).collect();
    order.sort_by(|&a, &b| values[a as usize].total_cmp(&values[b as usize]));
    order
}

/// Optimal stump for one feature under the given sample weights.
///
/// Ties in weighted error go to the smaller threshold, then to polarity `+1`.
pub fn train_stump(values: &[f64], labels: &[i8], weights: &[f64]) -> Result<Stump> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "stump training needs at least two samples, got {}",
            values.len()
        )));
    }
    if labels.len() != values.len() || weights.len() != values.len() {
        return Err(Error::DimensionError {
            expected: values.len(),
            got: labels.len().min(weights.len()),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("non-finite feature value"));
    }
    if labels.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::config("labels must be +1 or -1"));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::config("weights must be non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("weights sum to {total}, expected 1")));
    }
    let order = sort_order(values);
    Ok(train_stump_sorted(values, &order, labels, weights, 0))
}

/// Sort-and-scan core. `order` must sort `values` ascending; inputs are
/// trusted.
pub(crate) fn train_stump_sorted(
    values: &[f64],
    order: &[u32],
    labels: &[i8],
    weights: &[f64],
    feature_id: usize,
) -> Stump {
    let (mut pos_total, mut neg_total) = (0.0, 0.0);
    for (&l, &w) in labels.iter().zip(weights) {
        if l > 0 {
            pos_total += w;
        } else {
            neg_total += w;
        }
    }
    let min = values[order[0] as usize];
    let max = values[order[order.len() - 1] as usize];
    let delta = outer_margin(min, max);

    // Slot below every value: p = +1 labels everything positive.
    let mut theta = min - delta;
    if theta >= min {
        theta = min.next_down();
    }
    let mut best = Stump {
        feature_id,
        theta,
        polarity: 1,
        weighted_error: neg_total,
    };
    if pos_total < best.weighted_error {
        best.polarity = -1;
        best.weighted_error = pos_total;
    }

    let (mut pos_below, mut neg_below) = (0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let v = values[order[k] as usize];
        while k < order.len() && values[order[k] as usize] == v {
            let i = order[k] as usize;
            if labels[i] > 0 {
                pos_below += weights[i];
            } else {
                neg_below += weights[i];
            }
            k += 1;
        }
        let theta = if k < order.len() {
            let next = values[order[k] as usize];
            let mid = v + 0.5 * (next - v);
            // Adjacent floats: put the threshold on the upper value, which
            // sign(0) = +1 already assigns to the upper side.
            if mid <= v {
                next
            } else {
                mid
            }
        } else {
            let t = max + delta;
            if t <= max {
                max.next_up()
            } else {
                t
            }
        };
        let err_plus = pos_below + (neg_total - neg_below);
        let err_minus = neg_below + (pos_total - pos_below);
        if err_plus < best.weighted_error {
            best = Stump {
                feature_id,
                theta,
                polarity: 1,
                weighted_error: err_plus,
            };
        }
        if err_minus < best.weighted_error {
            best = Stump {
                feature_id,
                theta,
                polarity: -1,
                weighted_error: err_minus,
            };
        }
    }
    best
}

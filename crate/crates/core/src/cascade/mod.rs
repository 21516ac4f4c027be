//! Cascade structure, node evaluation and cascade training.

mod bootstrap;
mod model;
mod node;
mod train;

pub use self::bootstrap::{bootstrap, BootstrapPool, PyramidCursor};
pub(crate) use self::bootstrap::{grid_positions, pyramid_level};
pub use self::model::{parse_model, read_model, serialize_model, write_model, MODEL_VERSION};
pub use self::node::{
    detection_rate_at_fp, fit_node, place_threshold, train_node_columns, vote, NodeConfig,
    NodeModel, Trainer,
};
pub use self::train::{
    train_cascade, train_node, CascadeConfig, CascadeTraining, NodeReport, NodeSpec,
};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureFamily, GrayImage, WindowTables};

/// One stump over a concrete image feature, with its node coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakClassifier {
    pub feature: Feature,
    pub theta: f64,
    pub polarity: i8,
    pub coef: f64,
}

impl WeakClassifier {
    #[inline]
    pub fn output(&self, tables: &WindowTables, ox: usize, oy: usize) -> i8 {
        let v = self.feature.evaluate(tables, ox, oy);
        if self.polarity as f64 * (v - self.theta) >= 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Rates a node reached on its own training data.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct NodeStats {
    pub detection_rate: f64,
    pub false_positive_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeClassifier {
    pub weak: Vec<WeakClassifier>,
    pub threshold: f64,
    /// Present on freshly trained nodes; not part of the model file.
    pub train_stats: Option<NodeStats>,
}

impl NodeClassifier {
    /// `sum_j c_j h_j - b` for the window at `(ox, oy)`.
    pub fn margin(&self, tables: &WindowTables, ox: usize, oy: usize) -> f64 {
        self.weak
            .iter()
            .map(|w| w.coef * w.output(tables, ox, oy) as f64)
            .sum::<f64>()
            - self.threshold
    }
}

/// Ordered list of nodes a window must pass in turn.
#[derive(Clone, Debug, PartialEq)]
pub struct Cascade {
    pub window: (usize, usize),
    pub gamma: f64,
    pub nodes: Vec<NodeClassifier>,
}

/// Outcome of running a window through a cascade.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowVerdict {
    pub accepted: bool,
    /// Margin of the last node evaluated (0 for an empty cascade).
    pub confidence: f64,
    /// Nodes passed before rejection (all of them when accepted).
    pub depth: usize,
    /// Weak classifiers evaluated along the way.
    pub features_evaluated: usize,
}

impl Cascade {
    pub fn new(window: (usize, usize), gamma: f64) -> Self {
        Cascade {
            window,
            gamma,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Copy holding only the first `k` nodes.
    pub fn prefix(&self, k: usize) -> Cascade {
        Cascade {
            window: self.window,
            gamma: self.gamma,
            nodes: self.nodes[..k.min(self.nodes.len())].to_vec(),
        }
    }

    /// Feature family needed to evaluate this cascade.
    pub fn family(&self) -> FeatureFamily {
        let hog = self
            .nodes
            .iter()
            .flat_map(|n| &n.weak)
            .any(|w| matches!(w.feature, Feature::Hog(_)));
        if hog {
            FeatureFamily::Hog
        } else {
            FeatureFamily::Haar
        }
    }

    /// Evaluates the window anchored at `(ox, oy)`; the caller guarantees it fits.
    pub fn evaluate(&self, tables: &WindowTables, ox: usize, oy: usize) -> WindowVerdict {
        let mut confidence = 0.0;
        let mut features = 0;
        for (k, node) in self.nodes.iter().enumerate() {
            confidence = node.margin(tables, ox, oy);
            features += node.weak.len();
            if confidence < 0.0 {
                return WindowVerdict {
                    accepted: false,
                    confidence,
                    depth: k,
                    features_evaluated: features,
                };
            }
        }
        WindowVerdict {
            accepted: true,
            confidence,
            depth: self.nodes.len(),
            features_evaluated: features,
        }
    }

    /// Margins of every node the window reaches, stopping after the first
    /// rejection.
    pub(crate) fn margins(&self, tables: &WindowTables, ox: usize, oy: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for node in &self.nodes {
            let m = node.margin(tables, ox, oy);
            out.push(m);
            if m < 0.0 {
                break;
            }
        }
        out
    }
}

/// Runs a window-sized patch through the cascade: `(accepted, confidence)`.
pub fn cascade_classify(cascade: &Cascade, patch: &GrayImage) -> Result<(bool, f64)> {
    let v = classify_patch(cascade, patch)?;
    Ok((v.accepted, v.confidence))
}

/// Like [`cascade_classify`] with the full verdict.
pub fn classify_patch(cascade: &Cascade, patch: &GrayImage) -> Result<WindowVerdict> {
    if (patch.width(), patch.height()) != cascade.window {
        return Err(Error::DimensionError {
            expected: cascade.window.0 * cascade.window.1,
            got: patch.width() * patch.height(),
        });
    }
    let tables = WindowTables::new(patch, cascade.family());
    Ok(cascade.evaluate(&tables, 0, 0))
}

/// Overall detection and false-positive rates as products of per-node rates.
pub fn overall_rates(node_rates: &[(f64, f64)]) -> Result<(f64, f64)> {
    if node_rates
        .iter()
        .any(|&(d, f)| !(0.0..=1.0).contains(&d) || !(0.0..=1.0).contains(&f))
    {
        return Err(Error::config("node rates must lie in [0, 1]"));
    }
    Ok(node_rates
        .iter()
        .fold((1.0, 1.0), |(d, f), &(nd, nf)| (d * nd, f * nf)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{HaarFeature, HaarKind};

    #[test]
    fn worked_example_rates() {
        let (dr, fp) = overall_rates(&vec![(0.995, 0.5); 22]).unwrap();
        assert!((dr - 0.995f64.powi(22)).abs() < 1e-15);
        assert!((0.8950..=0.8960).contains(&dr));
        assert!((2.3e-7..=2.5e-7).contains(&fp));
    }

    #[test]
    fn rate_edge_cases() {
        assert_eq!(overall_rates(&[(0.9, 0.3)]).unwrap(), (0.9, 0.3));
        assert_eq!(overall_rates(&[(0.9, 0.3), (0.0, 0.5)]).unwrap().0, 0.0);
        assert!(overall_rates(&[(1.1, 0.5)]).is_err());
    }

    fn left_bright_node(threshold: f64) -> NodeClassifier {
        NodeClassifier {
            weak: vec![WeakClassifier {
                feature: Feature::Haar(HaarFeature::new(HaarKind::TwoRectHorizontal, 0, 0, 4, 4).unwrap()),
                theta: 1.0,
                polarity: 1,
                coef: 1.0,
            }],
            threshold,
            train_stats: None,
        }
    }

    #[test]
    fn classify_rejects_and_accepts() {
        let bright_left = GrayImage::from_fn(4, 4, |x, _| if x < 2 { 1.0 } else { 0.0 });
        let flat = GrayImage::filled(4, 4, 0.5);
        let mut c = Cascade::new((4, 4), 0.5);
        assert_eq!(cascade_classify(&c, &flat).unwrap(), (true, 0.0));
        c.nodes.push(left_bright_node(0.0));
        c.nodes.push(left_bright_node(0.5));
        assert_eq!(cascade_classify(&c, &bright_left).unwrap(), (true, 0.5));
        let v = classify_patch(&c, &flat).unwrap();
        assert!(!v.accepted);
        assert_eq!(v.confidence, -1.0);
        assert_eq!(v.depth, 0);
        assert!(cascade_classify(&c, &GrayImage::filled(5, 4, 0.0)).is_err());
    }
}

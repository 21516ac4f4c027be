use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bootstrap::{bootstrap, BootstrapPool};
use super::node::{train_node_columns, NodeConfig, Trainer};
use super::{Cascade, NodeClassifier, NodeStats, WeakClassifier};
use crate::boost::FeatureColumns;
use crate::error::{Error, Result};
use crate::features::{
    enumerate_haar, enumerate_hog_blocks, fit_projection, Feature, FeatureFamily, GrayImage,
    HogFeature, WindowTables, HOG_DIM,
};
use crate::par;

/// Boosted candidate count and kept stump count for one node.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct NodeSpec {
    pub t1: usize,
    pub t: usize,
}

#[derive(Clone, Debug)]
pub struct CascadeConfig {
    pub window: (usize, usize),
    pub schedule: Vec<NodeSpec>,
    pub gamma: f64,
    pub trainer: Trainer,
    pub target_fp: f64,
    /// Negative training set size each node is refilled to.
    pub negatives_per_node: usize,
    pub family: FeatureFamily,
    /// Haar features (or HOG blocks) sampled into each node's pool.
    pub feature_budget: usize,
    /// Fraction of the pool searched per boosting round.
    pub sample_fraction: f64,
    /// Detection rate below which a node logs a warning.
    pub dr_goal: f64,
    /// Stop pruning early once the training detection rate would drop below `dr_goal`.
    pub early_exit: bool,
    pub seed: u64,
}

impl CascadeConfig {
    pub fn new(window: (usize, usize), schedule: Vec<NodeSpec>) -> Self {
        CascadeConfig {
            window,
            schedule,
            gamma: 0.5,
            trainer: Trainer::Pruning,
            target_fp: 0.5,
            negatives_per_node: 5000,
            family: FeatureFamily::Haar,
            feature_budget: 2000,
            sample_fraction: 1.0,
            dr_goal: 0.995,
            early_exit: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::config("empty node schedule"));
        }
        if self.window.0 < 2 || self.window.1 < 2 {
            return Err(Error::config(format!("window {:?} too small", self.window)));
        }
        if self.negatives_per_node < 2 {
            return Err(Error::config("need at least two negatives per node"));
        }
        if self.feature_budget == 0 {
            return Err(Error::config("feature budget must be positive"));
        }
        for (k, _) in self.schedule.iter().enumerate() {
            self.node_config(k).validate()?;
        }
        Ok(())
    }

    fn node_seed(&self, k: usize) -> u64 {
        self.seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    fn node_config(&self, k: usize) -> NodeConfig {
        let spec = self.schedule[k];
        NodeConfig {
            t1: spec.t1,
            t: spec.t,
            gamma: self.gamma,
            trainer: self.trainer,
            target_fp: self.target_fp,
            sample_fraction: self.sample_fraction,
            seed: self.node_seed(k),
            early_exit_dr: self.early_exit.then_some(self.dr_goal),
        }
    }
}

/// Per-node training summary.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeReport {
    pub index: usize,
    pub t1: usize,
    pub kept: usize,
    pub threshold: f64,
    pub detection_rate: f64,
    pub false_positive_rate: f64,
    pub positives: usize,
    pub negatives: usize,
    pub short_pool: bool,
    pub pruning_stopped_early: bool,
}

#[derive(Clone, Debug)]
pub struct CascadeTraining {
    pub cascade: Cascade,
    pub reports: Vec<NodeReport>,
    /// Training ended because the background pool ran dry.
    pub depleted: bool,
}

/// Builds the candidate features for a node and their values on every sample.
fn feature_pool(
    config: &CascadeConfig,
    seed: u64,
    positives: &[WindowTables],
    negatives: &[WindowTables],
) -> Result<(Vec<Feature>, FeatureColumns)> {
    match config.family {
        FeatureFamily::Haar => {
            let features: Vec<Feature> = enumerate_haar(config.window, config.feature_budget, seed)?
                .into_iter()
                .map(Feature::Haar)
                .collect();
            let columns = par::map_slice(&features, |f| {
                positives
                    .iter()
                    .chain(negatives)
                    .map(|t| f.evaluate(t, 0, 0))
                    .collect()
            });
            Ok((features, FeatureColumns::new(columns)?))
        }
        FeatureFamily::Hog => {
            let mut blocks = enumerate_hog_blocks(config.window, 8, 4);
            if blocks.is_empty() {
                return Err(Error::config(format!("window {:?} holds no HOG block", config.window)));
            }
            if blocks.len() > config.feature_budget {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picks =
                    rand::seq::index::sample(&mut rng, blocks.len(), config.feature_budget).into_vec();
                picks.sort_unstable();
                blocks = picks.into_iter().map(|i| blocks[i]).collect();
            }
            let fitted = par::map_slice(&blocks, |block| -> Result<(Feature, Vec<f64>)> {
                let describe = |t: &WindowTables| -> Vec<f64> {
                    block
                        .descriptor_at(t.histogram.as_ref().expect("HOG tables"), 0, 0)
                        .to_vec()
                };
                let pos: Vec<Vec<f64>> = positives.iter().map(describe).collect();
                let neg: Vec<Vec<f64>> = negatives.iter().map(describe).collect();
                let projection = fit_projection(&pos, &neg)?.direction;
                debug_assert_eq!(projection.len(), HOG_DIM);
                let column = pos
                    .iter()
                    .chain(&neg)
                    .map(|d| crate::linalg::dot(d, &projection))
                    .collect();
                Ok((
                    Feature::Hog(HogFeature {
                        block: *block,
                        projection,
                    }),
                    column,
                ))
            });
            let mut features = Vec::with_capacity(fitted.len());
            let mut columns = Vec::with_capacity(fitted.len());
            for item in fitted {
                let (f, c) = item?;
                features.push(f);
                columns.push(c);
            }
            Ok((features, FeatureColumns::new(columns)?))
        }
    }
}

fn train_node_tables(
    config: &CascadeConfig,
    k: usize,
    positives: &[WindowTables],
    negatives: &[WindowTables],
) -> Result<(NodeClassifier, NodeReport)> {
    let node_cfg = config.node_config(k);
    let (features, columns) = feature_pool(config, node_cfg.seed, positives, negatives)?;
    let labels: Vec<i8> = std::iter::repeat_n(1, positives.len())
        .chain(std::iter::repeat_n(-1, negatives.len()))
        .collect();
    let model = train_node_columns(&columns, &labels, &node_cfg)?;
    let weak = model
        .stumps
        .iter()
        .zip(&model.coefs)
        .map(|(s, &coef)| WeakClassifier {
            feature: features[s.feature_id].clone(),
            theta: s.theta,
            polarity: s.polarity,
            coef,
        })
        .collect::<Vec<_>>();
    let report = NodeReport {
        index: k,
        t1: node_cfg.t1,
        kept: weak.len(),
        threshold: model.threshold,
        detection_rate: model.train_dr,
        false_positive_rate: model.train_fp,
        positives: positives.len(),
        negatives: negatives.len(),
        short_pool: model.short_pool,
        pruning_stopped_early: model.prune.as_ref().is_some_and(|p| p.stopped_early),
    };
    Ok((
        NodeClassifier {
            weak,
            threshold: model.threshold,
            train_stats: Some(NodeStats {
                detection_rate: model.train_dr,
                false_positive_rate: model.train_fp,
            }),
        },
        report,
    ))
}

/// Trains node `k` of `config`'s schedule on window-sized patches.
pub fn train_node(
    config: &CascadeConfig,
    k: usize,
    positives: &[GrayImage],
    negatives: &[GrayImage],
) -> Result<(NodeClassifier, NodeReport)> {
    config.validate()?;
    if k >= config.schedule.len() {
        return Err(Error::config(format!("node {k} is not in the schedule")));
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InsufficientData("both classes must be non-empty".into()));
    }
    let pos = tables_for(config, positives)?;
    let neg = tables_for(config, negatives)?;
    train_node_tables(config, k, &pos, &neg)
}

fn tables_for(config: &CascadeConfig, patches: &[GrayImage]) -> Result<Vec<WindowTables>> {
    if let Some(p) = patches.iter().find(|p| (p.width(), p.height()) != config.window) {
        return Err(Error::DimensionError {
            expected: config.window.0 * config.window.1,
            got: p.width() * p.height(),
        });
    }
    Ok(par::map_slice(patches, |p| WindowTables::new(p, config.family)))
}

/// Trains nodes in schedule order. The first node sees a seeded uniform
/// sample of pool windows. After each node the negatives it rejects are
/// dropped and the set is topped up with fresh false positives of the cascade
/// so far; training ends early when the pool can no longer refill.
pub fn train_cascade(
    config: &CascadeConfig,
    positives: &[GrayImage],
    pool: &mut BootstrapPool,
) -> Result<CascadeTraining> {
    config.validate()?;
    if positives.len() < 2 {
        return Err(Error::InsufficientData("need at least two positives".into()));
    }
    let pos = tables_for(config, positives)?;
    let mut cascade = Cascade::new(config.window, config.gamma);
    let mut reports = Vec::new();
    let mut depleted = false;

    let initial = pool.sample(config.negatives_per_node, config.seed);
    if initial.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "background pool yielded only {} negatives",
            initial.len()
        )));
    }
    if initial.len() < config.negatives_per_node {
        log::warn!(
            "background pool yielded {} of {} initial negatives",
            initial.len(),
            config.negatives_per_node
        );
    }
    let mut neg = tables_for(config, &initial)?;

    for k in 0..config.schedule.len() {
        let (node, report) = train_node_tables(config, k, &pos, &neg)?;
        if report.detection_rate == 0.0 {
            return Err(Error::TrainingCollapse { node: k });
        }
        if report.detection_rate < config.dr_goal {
            log::warn!(
                "node {k}: training detection rate {:.4} below goal {}",
                report.detection_rate,
                config.dr_goal
            );
        }
        log::info!(
            "node {k}: {} stumps (from {}), dr {:.4}, fp {:.4}, {} negatives",
            report.kept,
            report.t1,
            report.detection_rate,
            report.false_positive_rate,
            report.negatives
        );
        let keep = par::map_slice(&neg, |t| node.margin(t, 0, 0) >= 0.0);
        cascade.nodes.push(node);
        reports.push(report);
        if k + 1 == config.schedule.len() {
            break;
        }
        let mut survivors: Vec<WindowTables> = neg
            .into_iter()
            .zip(keep)
            .filter_map(|(t, ok)| ok.then_some(t))
            .collect();
        let need = config.negatives_per_node.saturating_sub(survivors.len());
        let fresh = bootstrap(pool, &cascade, need);
        let got = fresh.len();
        survivors.extend(tables_for(config, &fresh)?);
        neg = survivors;
        if got < need {
            log::info!("background pool depleted after node {k}");
            depleted = true;
            break;
        }
    }
    Ok(CascadeTraining {
        cascade,
        reports,
        depleted,
    })
}

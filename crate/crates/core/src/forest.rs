//! Bagged ensembles of regression trees.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{fit_tree_on_rows, RegressionTree, TreeConfig};
use crate::data::{CountVector, Encoding, FeatureMatrix};
use crate::error::{Error, Result};
use crate::metrics::PredictionMatrix;
use crate::seed::{derive_seed, rng_from_seed, Rng};
use crate::OUTPUTS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Features drawn per split; `None` picks [`default_subset_size`].
    pub feature_subset_size: Option<usize>,
    pub seed: u64,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            feature_subset_size: None,
            seed: 0,
            tree: TreeConfig::default(),
        }
    }
}

/// All features for the single-column encoding, `ceil(k / 3)` otherwise.
pub fn default_subset_size(encoding: Encoding, n_features: usize) -> usize {
    match encoding {
        Encoding::Original => n_features,
        Encoding::Modified => n_features.div_ceil(3).max(1),
    }
}

impl ForestConfig {
    fn resolved_tree_config(&self, x: &FeatureMatrix) -> Result<TreeConfig> {
        if self.n_trees == 0 {
            return Err(Error::Config("a forest needs at least one tree".into()));
        }
        let subset = self
            .feature_subset_size
            .unwrap_or_else(|| default_subset_size(x.encoding(), x.cols()));
        let tree = TreeConfig {
            feature_subset_size: Some(subset),
            ..self.tree.clone()
        };
        tree.validate(x.cols())?;
        Ok(tree)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
    tree_seeds: Vec<u64>,
    config: ForestConfig,
}

/// `n` row indices drawn uniformly with replacement.
pub fn bootstrap_sample(n: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn member_seeds(config: &ForestConfig) -> Vec<u64> {
    (0..config.n_trees)
        .map(|i| derive_seed(config.seed, &[i as u64]))
        .collect()
}

fn fit_member(x: &FeatureMatrix, y: &[CountVector], config: &ForestConfig, seed: u64) -> Result<RegressionTree> {
    let tree_config = config.resolved_tree_config(x)?;
    let mut rng = rng_from_seed(seed);
    let rows: Vec<usize> = if config.bootstrap {
        bootstrap_sample(x.rows(), &mut rng)
    } else {
        (0..x.rows()).collect()
    };
    fit_tree_on_rows(x, y, &rows, &tree_config, &mut rng)
}

fn check_fit_inputs(x: &FeatureMatrix, y: &[CountVector], config: &ForestConfig) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::shape("forest inputs (rows of X vs Y)", x.rows(), y.len()));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("cannot fit a forest on zero rows".into()));
    }
    config.resolved_tree_config(x).map(|_| ())
}

/// Fits the same forest as [`fit_forest`] but only keeps its predictions on
/// `eval`, dropping each member once it has voted. Output is bitwise equal to
/// `fit_forest(..)?.predict_matrix(eval)`.
pub fn fit_predict_forest(
    x: &FeatureMatrix,
    y: &[CountVector],
    config: &ForestConfig,
    eval: &FeatureMatrix,
) -> Result<PredictionMatrix> {
    check_fit_inputs(x, y, config)?;
    if eval.cols() != x.cols() {
        return Err(Error::shape("forest evaluation columns", x.cols(), eval.cols()));
    }
    let votes = member_seeds(config)
        .par_iter()
        .map(|&seed| {
            let tree = fit_member(x, y, config, seed)?;
            Ok((0..eval.rows())
                .flat_map(|i| *tree.leaf_for(eval.row(i)))
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = vec![0.0; eval.rows() * OUTPUTS];
    for vote in &votes {
        for (a, v) in acc.iter_mut().zip(vote) {
            *a += v;
        }
    }
    let n = config.n_trees as f64;
    PredictionMatrix::new(eval.rows(), acc.into_iter().map(|a| a / n).collect())
}

/// Fits every member on its own stream `derive_seed(seed, [tree index])`, so
/// the result does not depend on which tree finishes first.
pub fn fit_forest(x: &FeatureMatrix, y: &[CountVector], config: &ForestConfig) -> Result<RandomForest> {
    check_fit_inputs(x, y, config)?;
    let tree_seeds = member_seeds(config);
    let trees = tree_seeds
        .par_iter()
        .map(|&seed| fit_member(x, y, config, seed))
        .collect::<Result<Vec<_>>>()?;

    Ok(RandomForest {
        trees,
        tree_seeds,
        config: config.clone(),
    })
}

impl RandomForest {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn tree_seeds(&self) -> &[u64] {
        &self.tree_seeds
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn digits(&self) -> usize {
        self.trees[0].digits()
    }

    pub fn encoding(&self) -> Encoding {
        self.trees[0].encoding()
    }

    pub fn n_features(&self) -> usize {
        self.trees[0].n_features()
    }

    /// Arithmetic mean of the member trees' predictions.
    pub fn predict(&self, row: &[f64]) -> Result<[f64; OUTPUTS]> {
        if row.len() != self.n_features() {
            return Err(Error::shape("forest input row", self.n_features(), row.len()));
        }
        Ok(self.mean_prediction(row))
    }

    fn mean_prediction(&self, row: &[f64]) -> [f64; OUTPUTS] {
        let mut acc = [0.0; OUTPUTS];
        for tree in &self.trees {
            for (a, v) in acc.iter_mut().zip(tree.leaf_for(row)) {
                *a += v;
            }
        }
        let n = self.trees.len() as f64;
        acc.map(|a| a / n)
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<PredictionMatrix> {
        if x.cols() != self.n_features() {
            return Err(Error::shape("forest input matrix columns", self.n_features(), x.cols()));
        }
        let values: Vec<f64> = (0..x.rows())
            .into_par_iter()
            .flat_map_iter(|i| self.mean_prediction(x.row(i)))
            .collect();
        PredictionMatrix::new(x.rows(), values)
    }
}

pub fn predict_forest(forest: &RandomForest, row: &[f64]) -> Result<[f64; OUTPUTS]> {
    forest.predict(row)
}

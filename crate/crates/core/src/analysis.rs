//! Feature importance and correlation.
//!
//! Importance comes from a bagged forest of CART trees with Gini splits:
//! each split credits its feature with the weighted impurity decrease
//! `n_node / n * (gini_node - weighted child gini)`, per-tree totals are
//! averaged over the forest, and the result is rescaled so the top feature
//! scores 100.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    /// Candidate features per split; `None` means `max(1, floor(sqrt(N)))`.
    pub features_per_split: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 8,
            seed: 0,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub feature_names: Vec<String>,
    /// Mean per-tree impurity decrease, before rescaling.
    pub raw: Vec<f64>,
    /// `raw` rescaled so the maximum is 100; all zeros if no tree split.
    pub importance: Vec<f64>,
    /// Feature indices by descending importance, ties by index.
    pub ranking: Vec<usize>,
}

impl ImportanceReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rank", "feature", "importance"])?;
        for (rank, &i) in self.ranking.iter().enumerate() {
            w.write_record([(rank + 1).to_string(), self.feature_names[i].clone(), self.importance[i].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Importance totals of one tree plus the impurity bookkeeping needed to
/// check that the totals add up.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TreeStats {
    pub importance: Vec<f64>,
    pub root_impurity: f64,
    /// Sum over leaves of `n_leaf / n * gini_leaf`.
    pub leaf_impurity: f64,
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [bool],
    max_depth: usize,
    mtry: usize,
    n_total: f64,
    rng: ChaCha8Rng,
    stats: TreeStats,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn best_split(&mut self, node: &[usize], node_gini: f64) -> Option<Split> {
        let n_features = self.x.n_features();
        let mut features = sample(&mut self.rng, n_features, self.mtry).into_vec();
        features.sort_unstable();
        let n = node.len();
        let pos_total = node.iter().filter(|&&i| self.y[i]).count();
        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(n);
        for f in features {
            pairs.clear();
            pairs.extend(node.iter().map(|&i| (self.x.get(f, i), self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for k in 1..n {
                left_pos += usize::from(pairs[k - 1].1);
                if pairs[k - 1].0 == pairs[k].0 {
                    continue;
                }
                let (nl, nr) = (k, n - k);
                let child = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(pos_total - left_pos, nr)) / n as f64;
                let gain = node_gini - child;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Split {
                        feature: f,
                        threshold: pairs[k - 1].0 + (pairs[k].0 - pairs[k - 1].0) / 2.0,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, node: Vec<usize>, depth: usize) {
        let n = node.len();
        let pos = node.iter().filter(|&&i| self.y[i]).count();
        let g = gini(pos, n);
        let weight = n as f64 / self.n_total;
        let split = if depth < self.max_depth && g > 0.0 && n >= 2 {
            self.best_split(&node, g)
        } else {
            None
        };
        match split {
            None => self.stats.leaf_impurity += weight * g,
            Some(s) => {
                self.stats.importance[s.feature] += weight * s.gain;
                let (left, right): (Vec<usize>, Vec<usize>) =
                    node.into_iter().partition(|&i| self.x.get(s.feature, i) <= s.threshold);
                self.grow(left, depth + 1);
                self.grow(right, depth + 1);
            }
        }
    }
}

/// Grow one tree on a bootstrap sample of size n drawn from `rng`.
pub(crate) fn grow_tree(x: &FeatureMatrix, y: &[bool], max_depth: usize, mtry: usize, mut rng: ChaCha8Rng) -> TreeStats {
    let n = x.n_obs();
    let bag: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let root_pos = bag.iter().filter(|&&i| y[i]).count();
    let mut b = TreeBuilder {
        x,
        y,
        max_depth,
        mtry,
        n_total: n as f64,
        rng,
        stats: TreeStats {
            importance: vec![0.0; x.n_features()],
            root_impurity: gini(root_pos, n),
            leaf_impurity: 0.0,
        },
    };
    b.grow(bag, 0);
    b.stats
}

fn check_labels(x: &FeatureMatrix, labels: &[Label]) -> Result<Vec<bool>> {
    if labels.len() != x.n_obs() {
        return Err(Error::DimensionMismatch {
            expected: x.n_obs(),
            actual: labels.len(),
        });
    }
    let pos = labels.iter().filter(|l| l.is_anomaly()).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass("feature importance needs both classes"));
    }
    if pos < 2 || labels.len() - pos < 2 {
        return Err(Error::InvalidArgument(
            "feature importance needs at least two observations of each class".into(),
        ));
    }
    Ok(labels.iter().map(|l| l.is_anomaly()).collect())
}

pub fn feature_importance(x: &FeatureMatrix, labels: &[Label], cfg: &ForestConfig) -> Result<ImportanceReport> {
    let y = check_labels(x, labels)?;
    if cfg.trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let n_features = x.n_features();
    let mtry = match cfg.features_per_split {
        Some(m) if m == 0 || m > n_features => {
            return Err(Error::InvalidArgument(format!(
                "features per split must lie in 1..={n_features}, got {m}"
            )))
        }
        Some(m) => m,
        None => ((n_features as f64).sqrt().floor() as usize).max(1),
    };

    let per_tree: Vec<TreeStats> = (0..cfg.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64 + 1);
            grow_tree(x, &y, cfg.max_depth, mtry, rng)
        })
        .collect();

    let mut raw = vec![0.0; n_features];
    for s in &per_tree {
        for (r, v) in raw.iter_mut().zip(&s.importance) {
            *r += v;
        }
    }
    raw.iter_mut().for_each(|r| *r /= cfg.trees as f64);

    let max = raw.iter().copied().fold(0.0, f64::max);
    let importance: Vec<f64> = if max > 0.0 {
        raw.iter().map(|r| if *r == max { 100.0 } else { r / max * 100.0 }).collect()
    } else {
        vec![0.0; n_features]
    };
    let mut ranking: Vec<usize> = (0..n_features).collect();
    ranking.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));

    Ok(ImportanceReport {
        feature_names: x.feature_names().to_vec(),
        raw,
        importance,
        ranking,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub feature_names: Vec<String>,
    /// Row-major `n x n`.
    pub values: Vec<f64>,
    /// Features whose variance is zero; their off-diagonal entries are 0.
    pub zero_variance: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.feature_names.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["feature".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in self.feature_names.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend((0..self.n()).map(|j| self.get(i, j).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pearson correlation between every pair of features.
pub fn correlation_matrix(x: &FeatureMatrix) -> Result<CorrelationMatrix> {
    let m = x.n_obs();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("correlation needs at least 2 observations, got {m}")));
    }
    let n = x.n_features();
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|f| {
            let col = x.feature_values(f);
            let mean = col.iter().sum::<f64>() / m as f64;
            col.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let ss: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let zero_variance: Vec<bool> = ss.iter().map(|s| *s == 0.0).collect();
    if zero_variance.iter().any(|z| *z) {
        log::warn!("zero-variance features get correlation 0 with every other feature");
    }

    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let r = if zero_variance[i] || zero_variance[j] {
                0.0
            } else {
                let cov: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (cov / (ss[i] * ss[j]).sqrt()).clamp(-1.0, 1.0)
            };
            values[i * n + j] = r;
            values[j * n + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        feature_names: x.feature_names().to_vec(),
        values,
        zero_variance,
    })
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric table of `n_features` rows by `n_obs` columns.
///
/// Storage is column-major, so each observation is a contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    feature_names: Vec<String>,
    n_obs: usize,
    values: Vec<f64>,
    priority_feature: usize,
}

impl FeatureMatrix {
    /// Build from column-major values. The priority feature defaults to 0.
    pub fn new(feature_names: Vec<String>, n_obs: usize, values: Vec<f64>) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::InvalidArgument("feature matrix needs at least one feature".into()));
        }
        let n = feature_names.len();
        if values.len() != n * n_obs {
            return Err(Error::DimensionMismatch {
                expected: n * n_obs,
                actual: values.len(),
            });
        }
        for (i, name) in feature_names.iter().enumerate() {
            if feature_names[..i].contains(name) {
                return Err(Error::InvalidArgument(format!("duplicate feature name `{name}`")));
            }
        }
        Ok(Self {
            feature_names,
            n_obs,
            values,
            priority_feature: 0,
        })
    }

    /// Build from a list of observation vectors.
    pub fn from_observations<I, V>(feature_names: Vec<String>, observations: I) -> Result<Self>
    where
        I: IntoIterator<Item = V>,
        V: AsRef<[f64]>,
    {
        let n = feature_names.len();
        let mut values = Vec::new();
        let mut n_obs = 0;
        for obs in observations {
            let obs = obs.as_ref();
            if obs.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: obs.len(),
                });
            }
            values.extend_from_slice(obs);
            n_obs += 1;
        }
        Self::new(feature_names, n_obs, values)
    }

    pub fn with_priority_feature(mut self, index: usize) -> Result<Self> {
        if index >= self.n_features() {
            return Err(Error::InvalidArgument(format!(
                "priority feature index {index} out of range for {} features",
                self.n_features()
            )));
        }
        self.priority_feature = index;
        Ok(self)
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn is_empty(&self) -> bool {
        self.n_obs == 0
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn priority_feature(&self) -> usize {
        self.priority_feature
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        let n = self.n_features();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn observation_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n_features();
        &mut self.values[i * n..(i + 1) * n]
    }

    pub fn observations(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_features())
    }

    pub fn get(&self, feature: usize, obs: usize) -> f64 {
        self.values[obs * self.n_features() + feature]
    }

    /// All values of one feature, in observation order.
    pub fn feature_values(&self, feature: usize) -> Vec<f64> {
        self.observations().map(|o| o[feature]).collect()
    }

    /// New matrix holding the given observations, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            values.extend_from_slice(self.observation(i));
        }
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            n_obs: indices.len(),
            values,
            priority_feature: self.priority_feature,
        }
    }

    /// New matrix holding the given features, in the given order. The
    /// priority feature follows its column, or falls back to 0 if dropped.
    pub fn select_features(&self, features: &[usize]) -> Result<FeatureMatrix> {
        if let Some(&bad) = features.iter().find(|&&f| f >= self.n_features()) {
            return Err(Error::InvalidArgument(format!("feature index {bad} out of range")));
        }
        let names = features.iter().map(|&f| self.feature_names[f].clone()).collect();
        let priority = features.iter().position(|&f| f == self.priority_feature).unwrap_or(0);
        FeatureMatrix::from_observations(names, self.observations().map(|o| features.iter().map(|&f| o[f]).collect::<Vec<_>>()))?
            .with_priority_feature(priority)
    }

    /// Same shape and names, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> FeatureMatrix {
        debug_assert_eq!(values.len(), self.values.len());
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            n_obs: self.n_obs,
            values,
            priority_feature: self.priority_feature,
        }
    }
}

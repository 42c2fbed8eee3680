use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Object index → cluster label in `[0, k)`.
///
/// Serializes as `{"k": int, "labels": [int, ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "AssignmentRepr")]
pub struct ClusterAssignment {
    k: usize,
    labels: Vec<usize>,
}

#[derive(Deserialize)]
struct AssignmentRepr {
    k: usize,
    labels: Vec<usize>,
}

impl TryFrom<AssignmentRepr> for ClusterAssignment {
    type Error = Error;

    fn try_from(r: AssignmentRepr) -> Result<Self> {
        ClusterAssignment::new(r.labels, r.k)
    }
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if labels.len() < k {
            return Err(Error::InvalidConfig(format!(
                "{} objects cannot form {k} clusters",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} out of range for k = {k}"
            )));
        }
        Ok(ClusterAssignment { k, labels })
    }

    /// Takes `k = max(label) + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(1, |m| m + 1);
        Self::new(labels, k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

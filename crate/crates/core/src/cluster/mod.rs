//! Partitioning companies by their latent trajectories.

mod dba;
mod hierarchical;
mod kmeans;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtw::DtwError;
use crate::table::{Table, TableError};

pub use dba::{dba_barycenter, medoid};
pub use hierarchical::{cut_dendrogram, hierarchical_complete, leaf_ordering, Dendrogram, Merge};
pub use kmeans::{kmeans_dtw, KMeansConfig, KMeansResult};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cluster count {m} outside [{min}, {n}]")]
    InvalidCount { m: usize, min: usize, n: usize },
    #[error("barycenter of an empty member set")]
    NoMembers,
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("malformed clustering artifact: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    KmeansDtw,
    HierarchicalComplete,
}

impl ClusterMethod {
    pub fn name(self) -> &'static str {
        match self {
            ClusterMethod::KmeansDtw => "kmeans_dtw",
            ClusterMethod::HierarchicalComplete => "hierarchical_complete",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "kmeans_dtw" | "kmeans" => Some(ClusterMethod::KmeansDtw),
            "hierarchical_complete" | "hierarchical" => Some(ClusterMethod::HierarchicalComplete),
            _ => None,
        }
    }
}

/// Cluster label per company.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub m: usize,
    pub labels: Vec<usize>,
    pub method: ClusterMethod,
    pub seed: Option<u64>,
    /// Total DTW distance to own barycenter after each K-Means iteration.
    pub inertia_history: Vec<f64>,
}

impl ClusterAssignment {
    /// Every id in `0..m` must be used.
    pub fn validate(&self) -> Result<(), ClusterError> {
        let mut used = vec![false; self.m];
        for &l in &self.labels {
            if l >= self.m {
                return Err(ClusterError::Malformed(format!("label {l} >= m = {}", self.m)));
            }
            used[l] = true;
        }
        match used.iter().position(|u| !u) {
            Some(k) => Err(ClusterError::Malformed(format!("cluster {k} is empty"))),
            None => Ok(()),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.m];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == cluster).map(|(i, _)| i).collect()
    }
}

/// Table of `(company, method, m, label)` rows for one or more assignments.
pub fn assignments_table(companies: &[String], assignments: &[&ClusterAssignment]) -> Table {
    let mut t = Table::new(["company", "method", "m", "label"]);
    for a in assignments {
        for (name, &label) in companies.iter().zip(&a.labels) {
            t.push(vec![name.as_str().into(), a.method.name().into(), a.m.into(), label.into()]);
        }
    }
    t
}

/// `(cluster, period_index, value)` rows for barycenter series.
pub fn centers_table(periods: &[String], centers: &[Vec<f64>]) -> Table {
    let mut t = Table::new(["cluster", "period", "value"]);
    for (k, c) in centers.iter().enumerate() {
        for (p, &v) in c.iter().enumerate() {
            t.push(vec![k.into(), periods[p].as_str().into(), v.into()]);
        }
    }
    t
}

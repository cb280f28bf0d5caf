//! Dynamic time warping between 1-D series and the pairwise distance matrix.
//!
//! The cumulative cost table uses the unconstrained step pattern
//! `Γ(k, l) = D(k, l) + min(Γ(k-1, l-1), Γ(k-1, l), Γ(k, l-1))` with squared
//! differences as the local cost. The reported distance is the cost of the
//! backtracked optimal path divided by its length, unless [`Normalization::Raw`]
//! is requested.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{Table, TableError, Value};

#[derive(Debug, Error)]
pub enum DtwError {
    #[error("cannot align an empty series")]
    EmptySeries,
    #[error("series of unequal length in pairwise matrix ({0} vs {1})")]
    UnequalLength(usize, usize),
    #[error("distance matrix needs at least {0} series")]
    TooFew(usize),
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Path cost divided by path length.
    #[default]
    PathLength,
    /// Un-normalized cumulative cost.
    Raw,
}

pub fn local_cost(a: f64, b: f64) -> f64 {
    (a - b) * (a - b)
}

/// An alignment path of 0-based index pairs from `(0, 0)` to `(len_a - 1, len_b - 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WarpingPath(pub Vec<(usize, usize)>);

impl WarpingPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.0.iter()
    }

    /// Checks the boundary, continuity and monotonicity conditions.
    pub fn is_valid(&self, len_a: usize, len_b: usize) -> bool {
        let Some((&first, &last)) = self.0.first().zip(self.0.last()) else {
            return false;
        };
        first == (0, 0)
            && last == (len_a - 1, len_b - 1)
            && self.0.windows(2).all(|w| {
                let dk = w[1].0 as isize - w[0].0 as isize;
                let dl = w[1].1 as isize - w[0].1 as isize;
                (0..=1).contains(&dk) && (0..=1).contains(&dl) && dk + dl >= 1
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwAlignment {
    /// Γ at the terminal cell: the minimum un-normalized cumulative cost.
    pub raw_cost: f64,
    /// `raw_cost / path.len()`.
    pub normalized_cost: f64,
    pub path: WarpingPath,
}

impl DtwAlignment {
    pub fn cost(&self, normalization: Normalization) -> f64 {
        match normalization {
            Normalization::PathLength => self.normalized_cost,
            Normalization::Raw => self.raw_cost,
        }
    }
}

/// Fills the cumulative cost table (row-major, `a.len() × b.len()`).
pub fn cumulative_cost(a: &[f64], b: &[f64]) -> Result<Vec<f64>, DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySeries);
    }
    let (n, m) = (a.len(), b.len());
    let mut gamma = vec![0.0f64; n * m];
    for k in 0..n {
        for l in 0..m {
            let d = local_cost(a[k], b[l]);
            let best = match (k, l) {
                (0, 0) => 0.0,
                (0, _) => gamma[l - 1],
                (_, 0) => gamma[(k - 1) * m],
                _ => gamma[(k - 1) * m + l - 1]
                    .min(gamma[(k - 1) * m + l])
                    .min(gamma[k * m + l - 1]),
            };
            gamma[k * m + l] = d + best;
        }
    }
    Ok(gamma)
}

/// Aligns two series. Backtracking prefers the diagonal step, then the step
/// that decrements `k`, then the one that decrements `l`.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<DtwAlignment, DtwError> {
    let gamma = cumulative_cost(a, b)?;
    let (n, m) = (a.len(), b.len());
    let mut path = Vec::with_capacity(n + m);
    let (mut k, mut l) = (n - 1, m - 1);
    path.push((k, l));
    while (k, l) != (0, 0) {
        (k, l) = if k == 0 {
            (0, l - 1)
        } else if l == 0 {
            (k - 1, 0)
        } else {
            let diag = gamma[(k - 1) * m + l - 1];
            let up = gamma[(k - 1) * m + l];
            let left = gamma[k * m + l - 1];
            if diag <= up && diag <= left {
                (k - 1, l - 1)
            } else if up <= left {
                (k - 1, l)
            } else {
                (k, l - 1)
            }
        };
        path.push((k, l));
    }
    path.reverse();
    let raw_cost = gamma[n * m - 1];
    Ok(DtwAlignment { raw_cost, normalized_cost: raw_cost / path.len() as f64, path: WarpingPath(path) })
}

/// Shorthand for the scalar distance under a normalization.
pub fn distance(a: &[f64], b: &[f64], normalization: Normalization) -> Result<f64, DtwError> {
    Ok(dtw_distance(a, b)?.cost(normalization))
}

/// Symmetric N × N matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    data: Vec<f64>,
    /// Optional display permutation (leaf order); entry `i` is the original index shown at position `i`.
    pub ordering: Option<Vec<usize>>,
}

impl DistanceMatrix {
    /// Wraps a row-major matrix after checking symmetry, zero diagonal, finiteness and sign.
    pub fn new(labels: Vec<String>, data: Vec<f64>) -> Result<Self, DtwError> {
        let m = Self { labels, data, ordering: None };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, DtwError> {
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(DtwError::InvalidMatrix("matrix is not square".into()));
        }
        Self::new(labels, rows.concat())
    }

    pub fn validate(&self) -> Result<(), DtwError> {
        let n = self.labels.len();
        if self.data.len() != n * n {
            return Err(DtwError::InvalidMatrix(format!("{} labels but {} entries", n, self.data.len())));
        }
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(DtwError::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(DtwError::InvalidMatrix(format!("entry ({i}, {j}) = {v}")));
                }
                if v != self.get(j, i) {
                    return Err(DtwError::InvalidMatrix(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        if let Some(order) = &self.ordering {
            let mut seen = vec![false; n];
            if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
                return Err(DtwError::InvalidMatrix("ordering is not a permutation".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows and columns permuted by `order`.
    pub fn reordered(&self, order: &[usize]) -> DistanceMatrix {
        let n = self.len();
        let mut data = Vec::with_capacity(n * n);
        for &i in order {
            data.extend(order.iter().map(|&j| self.get(i, j)));
        }
        DistanceMatrix { labels: order.iter().map(|&i| self.labels[i].clone()).collect(), data, ordering: None }
    }

    /// Square table with a `company` label column followed by one column per company.
    pub fn to_table(&self) -> Table {
        let mut cols = vec!["company".to_owned()];
        cols.extend(self.labels.iter().cloned());
        let mut t = Table::new(cols);
        for (i, label) in self.labels.iter().enumerate() {
            let mut row: Vec<Value> = vec![label.as_str().into()];
            row.extend(self.row(i).iter().map(|&v| Value::Float(v)));
            t.push(row);
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self, DtwError> {
        if t.columns.first().map(String::as_str) != Some("company") {
            return Err(DtwError::InvalidMatrix("first column must be `company`".into()));
        }
        let labels: Vec<String> = t.columns[1..].to_vec();
        if t.len() != labels.len() {
            return Err(DtwError::InvalidMatrix("row count differs from column count".into()));
        }
        let mut data = Vec::with_capacity(labels.len() * labels.len());
        for r in 0..t.len() {
            if t.text(r, 0) != labels[r] {
                return Err(DtwError::InvalidMatrix(format!("row {} label differs from column label", r + 1)));
            }
            for c in 1..t.columns.len() {
                data.push(t.float(r, c)?);
            }
        }
        Self::new(labels, data)
    }
}

/// Computes every unordered pair once (in parallel) and mirrors it.
pub fn pairwise_matrix(
    labels: &[String],
    series: &[Vec<f64>],
    normalization: Normalization,
) -> Result<DistanceMatrix, DtwError> {
    let n = series.len();
    if n < 2 {
        return Err(DtwError::TooFew(2));
    }
    if let Some(s) = series.iter().find(|s| s.len() != series[0].len()) {
        return Err(DtwError::UnequalLength(series[0].len(), s.len()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let costs = pairs
        .par_iter()
        .map(|&(i, j)| distance(&series[i], &series[j], normalization))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut data = vec![0.0; n * n];
    for (&(i, j), &c) in pairs.iter().zip(&costs) {
        data[i * n + j] = c;
        data[j * n + i] = c;
    }
    DistanceMatrix::new(labels.to_vec(), data)
}

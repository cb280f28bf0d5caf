//! Cluster validation: silhouette, elbow distortion, sweeps over `m`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    cut_dendrogram, dba_barycenter, hierarchical_complete, kmeans_dtw, medoid, ClusterAssignment, ClusterError,
    ClusterMethod, KMeansConfig,
};
use crate::dtw::{DistanceMatrix, Normalization};
use crate::lstm::LatentSeries;
use crate::table::{Table, TableError, Value};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("silhouette is undefined for a single cluster")]
    SingleCluster,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Per-company silhouette over a precomputed distance matrix.
/// Companies in singleton clusters score 0.
pub fn silhouette_samples(matrix: &DistanceMatrix, labels: &[usize]) -> Result<Vec<f64>, EvalError> {
    let n = matrix.len();
    if labels.len() != n {
        return Err(EvalError::Shape(format!("{} labels for {n} companies", labels.len())));
    }
    let m = labels.iter().max().map_or(0, |&l| l + 1);
    let mut sizes = vec![0usize; m];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(EvalError::SingleCluster);
    }
    let scores = (0..n)
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; m];
            for (j, &l) in labels.iter().enumerate() {
                if j != i {
                    sums[l] += matrix.get(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..m)
                .filter(|&k| k != own && sizes[k] > 0)
                .map(|k| sums[k] / sizes[k] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores)
}

pub fn silhouette_mean(matrix: &DistanceMatrix, assignment: &ClusterAssignment) -> Result<f64, EvalError> {
    let s = silhouette_samples(matrix, &assignment.labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Sum over companies and periods of the squared gap between a company's
/// value and its cluster center at the same period.
pub fn elbow_distortion(series: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>]) -> Result<f64, EvalError> {
    if series.len() != labels.len() {
        return Err(EvalError::Shape(format!("{} series for {} labels", series.len(), labels.len())));
    }
    let mut total = 0.0;
    for (s, &l) in series.iter().zip(labels) {
        let c = centers
            .get(l)
            .ok_or_else(|| EvalError::Shape(format!("label {l} without a center ({} centers)", centers.len())))?;
        if c.len() != s.len() {
            return Err(EvalError::Shape(format!("center length {} vs series length {}", c.len(), s.len())));
        }
        total += s.iter().zip(c).map(|(z, mu)| (z - mu) * (z - mu)).sum::<f64>();
    }
    Ok(total)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&x| x + 1);
    let kb = b.iter().max().map_or(0, |&x| x + 1);
    let mut table = vec![0u64; ka * kb];
    let mut ra = vec![0u64; ka];
    let mut rb = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        ra[x] += 1;
        rb[y] += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().map(|&c| pairs(c)).sum();
    let sa: f64 = ra.iter().map(|&c| pairs(c)).sum();
    let sb: f64 = rb.iter().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Per-cluster DBA barycenters started from each cluster's medoid.
pub fn cluster_barycenters(
    series: &[Vec<f64>],
    matrix: &DistanceMatrix,
    assignment: &ClusterAssignment,
    iters: usize,
) -> Result<Vec<Vec<f64>>, EvalError> {
    (0..assignment.m)
        .into_par_iter()
        .map(|k| {
            let members = assignment.members(k);
            let start = medoid(&members, matrix).ok_or(ClusterError::NoMembers)?;
            let refs: Vec<&[f64]> = members.iter().map(|&i| series[i].as_slice()).collect();
            Ok(dba_barycenter(&refs, &series[start], iters)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub seed: u64,
    pub normalization: Normalization,
    pub max_iter: usize,
    pub barycenter_iters: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let k = KMeansConfig::default();
        Self { seed: 0, normalization: k.normalization, max_iter: k.max_iter, barycenter_iters: k.barycenter_iters }
    }
}

impl SweepConfig {
    pub fn kmeans(&self, m: usize) -> KMeansConfig {
        KMeansConfig {
            m,
            seed: self.seed,
            max_iter: self.max_iter,
            barycenter_iters: self.barycenter_iters,
            normalization: self.normalization,
        }
    }
}

/// Partition plus the centers used for its distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignment: ClusterAssignment,
    pub centers: Vec<Vec<f64>>,
}

/// Runs one clustering method at a single `m`.
pub fn cluster_at(
    series: &[Vec<f64>],
    matrix: &DistanceMatrix,
    method: ClusterMethod,
    m: usize,
    config: &SweepConfig,
) -> Result<Clustering, EvalError> {
    match method {
        ClusterMethod::KmeansDtw => {
            let r = kmeans_dtw(series, &config.kmeans(m))?;
            Ok(Clustering { assignment: r.assignment, centers: r.barycenters })
        }
        ClusterMethod::HierarchicalComplete => {
            let d = hierarchical_complete(matrix)?;
            let assignment = cut_dendrogram(&d, m)?;
            let centers = cluster_barycenters(series, matrix, &assignment, config.barycenter_iters)?;
            Ok(Clustering { assignment, centers })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCurve {
    pub method: ClusterMethod,
    pub ms: Vec<usize>,
    pub silhouettes: Vec<f64>,
    pub distortions: Vec<f64>,
}

impl ValidationCurve {
    pub fn len(&self) -> usize {
        self.ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ms.is_empty()
    }

    /// `m` with the highest mean silhouette; ties go to the smaller `m`.
    pub fn argmax_silhouette(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (&m, &s) in self.ms.iter().zip(&self.silhouettes) {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((m, s));
            }
        }
        best.map(|(m, _)| m)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["method", "m", "silhouette", "distortion"]);
        for i in 0..self.ms.len() {
            t.push(vec![
                self.method.name().into(),
                self.ms[i].into(),
                Value::Float(self.silhouettes[i]),
                Value::Float(self.distortions[i]),
            ]);
        }
        t
    }

    /// Reads back every curve contained in a table written by [`ValidationCurve::to_table`].
    pub fn from_table(t: &Table) -> Result<Vec<Self>, EvalError> {
        let (mc, kc, sc, dc) = (t.column("method")?, t.column("m")?, t.column("silhouette")?, t.column("distortion")?);
        let mut curves: Vec<ValidationCurve> = Vec::new();
        for r in 0..t.len() {
            let name = t.text(r, mc);
            let method = ClusterMethod::from_name(&name)
                .ok_or_else(|| EvalError::Shape(format!("unknown clustering method {name:?}")))?;
            let idx = match curves.iter().position(|c| c.method == method) {
                Some(i) => i,
                None => {
                    curves.push(ValidationCurve { method, ms: vec![], silhouettes: vec![], distortions: vec![] });
                    curves.len() - 1
                }
            };
            let c = &mut curves[idx];
            c.ms.push(t.int(r, kc)? as usize);
            c.silhouettes.push(t.float(r, sc)?);
            c.distortions.push(t.float(r, dc)?);
        }
        Ok(curves)
    }
}

/// Clusters at every `m` in `ms` and records mean silhouette and distortion.
pub fn validation_sweep(
    latent: &LatentSeries,
    matrix: &DistanceMatrix,
    ms: &[usize],
    method: ClusterMethod,
    config: &SweepConfig,
) -> Result<ValidationCurve, EvalError> {
    sweep_series(&latent.to_series(), matrix, ms, method, config)
}

pub fn sweep_series(
    series: &[Vec<f64>],
    matrix: &DistanceMatrix,
    ms: &[usize],
    method: ClusterMethod,
    config: &SweepConfig,
) -> Result<ValidationCurve, EvalError> {
    let n = series.len();
    if matrix.len() != n {
        return Err(EvalError::Shape(format!("{n} series for a {}-company matrix", matrix.len())));
    }
    for &m in ms {
        if m < 2 || m > n {
            return Err(ClusterError::InvalidCount { m, min: 2, n }.into());
        }
    }
    let points: Vec<(f64, f64)> = ms
        .par_iter()
        .map(|&m| {
            let c = cluster_at(series, matrix, method, m, config)?;
            let s = silhouette_mean(matrix, &c.assignment)?;
            let v = elbow_distortion(series, &c.assignment.labels, &c.centers)?;
            Ok((s, v))
        })
        .collect::<Result<_, EvalError>>()?;
    let (silhouettes, distortions) = points.into_iter().unzip();
    Ok(ValidationCurve { method, ms: ms.to_vec(), silhouettes, distortions })
}

/// Thresholds for choosing `m` from a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionRule {
    /// A point is an elbow candidate once the next decrease in distortion is
    /// below this fraction of the first decrease.
    pub elbow_fraction: f64,
    /// Minimum silhouette, as a fraction of the curve maximum.
    pub silhouette_fraction: f64,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self { elbow_fraction: 0.1, silhouette_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: ClusterMethod,
    pub chosen_m: usize,
    pub elbow_candidates: Vec<usize>,
    pub silhouette_candidates: Vec<usize>,
    pub max_silhouette: f64,
    /// True when no `m` satisfied both criteria and the silhouette argmax was taken.
    pub fallback: bool,
    pub rule: SelectionRule,
}

/// Smallest `m` that is both an elbow candidate and within the silhouette
/// band, else the silhouette argmax.
pub fn select_m(curve: &ValidationCurve, rule: &SelectionRule) -> Option<Selection> {
    let best = curve.argmax_silhouette()?;
    let max_s = curve.silhouettes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let band: Vec<usize> = curve
        .ms
        .iter()
        .zip(&curve.silhouettes)
        .filter(|(_, &s)| s >= rule.silhouette_fraction * max_s)
        .map(|(&m, _)| m)
        .collect();
    let drops: Vec<f64> = curve.distortions.windows(2).map(|w| w[0] - w[1]).collect();
    let elbow: Vec<usize> = match drops.first() {
        Some(&first) if first > 0.0 => {
            (1..drops.len()).filter(|&k| drops[k] < rule.elbow_fraction * first).map(|k| curve.ms[k]).collect()
        }
        _ => Vec::new(),
    };
    let both = elbow.iter().copied().find(|m| band.contains(m));
    Some(Selection {
        method: curve.method,
        chosen_m: both.unwrap_or(best),
        elbow_candidates: elbow,
        silhouette_candidates: band,
        max_silhouette: max_s,
        fallback: both.is_none(),
        rule: *rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn pairs_matrix() -> DistanceMatrix {
        let mut d = vec![10.0; 16];
        for i in 0..4 {
            d[i * 4 + i] = 0.0;
        }
        d[1] = 0.0;
        d[4] = 0.0;
        d[2 * 4 + 3] = 0.0;
        d[3 * 4 + 2] = 0.0;
        DistanceMatrix::new(labels(4), d).unwrap()
    }

    #[test]
    fn separated_duplicate_pairs_score_one() {
        let s = silhouette_samples(&pairs_matrix(), &[0, 0, 1, 1]).unwrap();
        assert_eq!(s, vec![1.0; 4]);
    }

    #[test]
    fn singletons_score_zero() {
        let s = silhouette_samples(&pairs_matrix(), &[0, 1, 2, 3]).unwrap();
        assert_eq!(s, vec![0.0; 4]);
    }

    #[test]
    fn single_cluster_rejected() {
        assert!(matches!(silhouette_samples(&pairs_matrix(), &[0, 0, 0, 0]), Err(EvalError::SingleCluster)));
    }

    #[test]
    fn hand_silhouette() {
        // a(0) = 1, b(0) = 4.5 -> 3.5 / 4.5
        let m = DistanceMatrix::new(labels(3), vec![0.0, 1.0, 4.5, 1.0, 0.0, 4.0, 4.5, 4.0, 0.0]).unwrap();
        let s = silhouette_samples(&m, &[0, 0, 1]).unwrap();
        assert_eq!(s[0], 3.5 / 4.5);
        assert_eq!(s[1], 3.0 / 4.0);
        assert_eq!(s[2], 0.0);
    }

    #[test]
    fn distortion_examples() {
        let z = vec![vec![1.0, 2.0, 3.0, 4.0]];
        assert_eq!(elbow_distortion(&z, &[0], &z).unwrap(), 0.0);
        let c = vec![vec![2.0, 3.0, 4.0, 5.0]];
        assert_eq!(elbow_distortion(&z, &[0], &c).unwrap(), 4.0);
        assert!(elbow_distortion(&z, &[1], &c).is_err());
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 0, 0]), 1.0);
        // every cell of the contingency table holds one item
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn sweep_at_n_is_all_singletons() {
        let series: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 1.0, -(i as f64)]).collect();
        let matrix = crate::dtw::pairwise_matrix(&labels(4), &series, Normalization::PathLength).unwrap();
        for method in [ClusterMethod::KmeansDtw, ClusterMethod::HierarchicalComplete] {
            let c = sweep_series(&series, &matrix, &[4], method, &SweepConfig::default()).unwrap();
            assert_eq!(c.silhouettes, vec![0.0]);
            assert_eq!(c.distortions, vec![0.0]);
        }
    }

    #[test]
    fn sweep_rejects_out_of_range() {
        let series: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64; 2]).collect();
        let matrix = crate::dtw::pairwise_matrix(&labels(3), &series, Normalization::PathLength).unwrap();
        assert!(sweep_series(&series, &matrix, &[1], ClusterMethod::KmeansDtw, &SweepConfig::default()).is_err());
        assert!(sweep_series(&series, &matrix, &[4], ClusterMethod::KmeansDtw, &SweepConfig::default()).is_err());
    }

    #[test]
    fn selection_rule() {
        let curve = ValidationCurve {
            method: ClusterMethod::KmeansDtw,
            ms: vec![2, 3, 4, 5, 6],
            silhouettes: vec![0.30, 0.32, 0.40, 0.41, 0.20],
            distortions: vec![100.0, 60.0, 20.0, 18.0, 17.5],
        };
        let s = select_m(&curve, &SelectionRule::default()).unwrap();
        assert_eq!(s.elbow_candidates, vec![4, 5]);
        assert_eq!(s.silhouette_candidates, vec![4, 5]);
        assert_eq!(s.chosen_m, 4);
        assert!(!s.fallback);

        let flat = ValidationCurve { distortions: vec![5.0; 5], ..curve };
        let s = select_m(&flat, &SelectionRule::default()).unwrap();
        assert!(s.fallback);
        assert_eq!(s.chosen_m, 5);
    }

    #[test]
    fn curve_table_round_trip() {
        let curve = ValidationCurve {
            method: ClusterMethod::HierarchicalComplete,
            ms: vec![2, 3],
            silhouettes: vec![0.1, -0.2],
            distortions: vec![3.0, 1.0],
        };
        assert_eq!(ValidationCurve::from_table(&curve.to_table()).unwrap(), vec![curve]);
    }
}

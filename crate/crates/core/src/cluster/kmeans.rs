use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dba::{dba_barycenter, medoid};
use super::{ClusterAssignment, ClusterError, ClusterMethod};
use crate::dtw::{distance, pairwise_matrix, DistanceMatrix, Normalization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub m: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub barycenter_iters: usize,
    pub normalization: Normalization,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { m: 4, seed: 0, max_iter: 50, barycenter_iters: 10, normalization: Normalization::PathLength }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    pub barycenters: Vec<Vec<f64>>,
    pub inertia: f64,
}

/// Centers picked by seeded distance-weighted sampling: the first uniformly,
/// each further one with probability proportional to its distance from the
/// nearest center already chosen.
fn initial_centers(matrix: &DistanceMatrix, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = matrix.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = matrix.row(chosen[0]).to_vec();
    while chosen.len() < m {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("m <= n")
        };
        chosen.push(pick);
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(matrix.get(pick, i));
        }
        nearest[pick] = 0.0;
    }
    chosen
}

struct Assignment {
    labels: Vec<usize>,
    dists: Vec<f64>,
}

fn assign(series: &[Vec<f64>], centers: &[Vec<f64>], norm: Normalization) -> Result<Assignment, ClusterError> {
    let best: Vec<(usize, f64)> = series
        .par_iter()
        .map(|s| {
            let mut best = (0, f64::INFINITY);
            for (k, c) in centers.iter().enumerate() {
                let d = distance(s, c, norm)?;
                if d < best.1 {
                    best = (k, d);
                }
            }
            Ok(best)
        })
        .collect::<Result<_, ClusterError>>()?;
    let (labels, dists) = best.into_iter().unzip();
    Ok(Assignment { labels, dists })
}

/// Re-seeds every empty cluster with the company farthest from its center,
/// taken from a cluster that has more than one member.
fn repair_empty(a: &mut Assignment, centers: &mut [Vec<f64>], series: &[Vec<f64>]) {
    let m = centers.len();
    loop {
        let mut sizes = vec![0usize; m];
        for &l in &a.labels {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far: Option<usize> = None;
        for i in 0..series.len() {
            if sizes[a.labels[i]] > 1 && far.is_none_or(|f| a.dists[i] > a.dists[f]) {
                far = Some(i);
            }
        }
        let i = far.expect("m <= n leaves a cluster with several members");
        centers[empty] = series[i].clone();
        a.labels[i] = empty;
        a.dists[i] = 0.0;
    }
}

/// K-Means over DTW with DBA barycenters.
///
/// Inertia (the summed DTW distance of each company to its own barycenter) is
/// recorded after every assignment step. A recomputed barycenter replaces the
/// previous one only if it lowers its cluster's cost, which keeps the history
/// non-increasing.
pub fn kmeans_dtw(series: &[Vec<f64>], config: &KMeansConfig) -> Result<KMeansResult, ClusterError> {
    let n = series.len();
    let m = config.m;
    if m < 2 || m > n {
        return Err(ClusterError::InvalidCount { m, min: 2, n });
    }
    let labels_tmp: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let matrix = pairwise_matrix(&labels_tmp, series, config.normalization)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centers: Vec<Vec<f64>> =
        initial_centers(&matrix, m, &mut rng).into_iter().map(|i| series[i].clone()).collect();

    let mut current = assign(series, &centers, config.normalization)?;
    repair_empty(&mut current, &mut centers, series);
    let mut history = vec![current.dists.iter().sum::<f64>()];

    for _ in 0..config.max_iter {
        let total = *history.last().expect("nonempty");
        let margin = 1e-12 * total;
        let updated: Vec<Option<Vec<f64>>> = (0..m)
            .into_par_iter()
            .map(|k| {
                let members: Vec<usize> = (0..n).filter(|&i| current.labels[i] == k).collect();
                let start = medoid(&members, &matrix).expect("clusters are nonempty");
                let refs: Vec<&[f64]> = members.iter().map(|&i| series[i].as_slice()).collect();
                let candidate = dba_barycenter(&refs, &series[start], config.barycenter_iters)?;
                let mut old_cost = 0.0;
                let mut new_cost = 0.0;
                for &i in &members {
                    old_cost += current.dists[i];
                    new_cost += distance(&series[i], &candidate, config.normalization)?;
                }
                Ok((new_cost < old_cost - margin).then_some(candidate))
            })
            .collect::<Result<_, ClusterError>>()?;
        for (k, c) in updated.into_iter().enumerate() {
            if let Some(c) = c {
                centers[k] = c;
            }
        }
        let mut next = assign(series, &centers, config.normalization)?;
        repair_empty(&mut next, &mut centers, series);
        history.push(next.dists.iter().sum());
        let stable = next.labels == current.labels;
        current = next;
        if stable {
            break;
        }
    }

    let inertia = *history.last().expect("nonempty");
    let assignment = ClusterAssignment {
        m,
        labels: current.labels,
        method: ClusterMethod::KmeansDtw,
        seed: Some(config.seed),
        inertia_history: history,
    };
    Ok(KMeansResult { assignment, barycenters: centers, inertia })
}

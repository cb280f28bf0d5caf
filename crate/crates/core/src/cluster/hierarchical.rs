use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, ClusterError, ClusterMethod};
use crate::dtw::DistanceMatrix;
use crate::table::{Table, Value};

/// One agglomeration step. Leaves are nodes `0..n`; the node created by merge
/// `s` (0-based) is `n + s`. `left < right` always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<usize>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn merge_table(&self) -> Table {
        let mut t = Table::new(["step", "left", "right", "height", "size"]);
        for (s, mg) in self.merges.iter().enumerate() {
            t.push(vec![s.into(), mg.left.into(), mg.right.into(), Value::Float(mg.height), mg.size.into()]);
        }
        t
    }

    pub fn leaf_order_table(&self) -> Table {
        let mut t = Table::new(["position", "index", "company"]);
        for (pos, &i) in self.leaf_order.iter().enumerate() {
            t.push(vec![pos.into(), i.into(), self.labels[i].as_str().into()]);
        }
        t
    }

    /// Rebuilds a dendrogram from its merge table and leaf labels.
    pub fn from_tables(labels: Vec<String>, merges: &Table) -> Result<Self, ClusterError> {
        let (li, ri, hi, si) = (
            merges.column("left")?,
            merges.column("right")?,
            merges.column("height")?,
            merges.column("size")?,
        );
        let n = labels.len();
        if merges.len() + 1 != n {
            return Err(ClusterError::Malformed(format!("{} merges for {n} leaves", merges.len())));
        }
        let mut rows = Vec::with_capacity(merges.len());
        for r in 0..merges.len() {
            let node = |c| -> Result<usize, ClusterError> {
                let v = merges.int(r, c)?;
                if v < 0 || v as usize >= n + r {
                    return Err(ClusterError::Malformed(format!("merge {r} references node {v}")));
                }
                Ok(v as usize)
            };
            rows.push(Merge {
                left: node(li)?,
                right: node(ri)?,
                height: merges.float(r, hi)?,
                size: merges.int(r, si)? as usize,
            });
        }
        let mut d = Dendrogram { labels, merges: rows, leaf_order: Vec::new() };
        d.leaf_order = leaf_ordering(&d);
        Ok(d)
    }
}

/// Complete-linkage agglomerative clustering.
///
/// At each step the pair of active clusters with the smallest maximum member
/// distance merges; ties go to the lexicographically smallest `(left, right)`
/// node-id pair.
pub fn hierarchical_complete(matrix: &DistanceMatrix) -> Result<Dendrogram, ClusterError> {
    matrix.validate()?;
    let n = matrix.len();
    if n == 0 {
        return Err(ClusterError::InvalidCount { m: 0, min: 1, n: 0 });
    }
    let total = 2 * n - 1;
    let mut dist = vec![f64::INFINITY; total * total];
    for i in 0..n {
        for j in 0..n {
            dist[i * total + j] = matrix.get(i, j);
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; total];
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                let d = dist[a * total + b];
                if d < best.2 {
                    best = (a, b, d);
                }
            }
        }
        let (a, b, height) = best;
        let new = n + step;
        active.retain(|&c| c != a && c != b);
        for &c in &active {
            let d = dist[a * total + c].max(dist[b * total + c]);
            dist[new * total + c] = d;
            dist[c * total + new] = d;
        }
        size[new] = size[a] + size[b];
        active.push(new);
        merges.push(Merge { left: a, right: b, height, size: size[new] });
    }
    let mut d = Dendrogram { labels: matrix.labels.clone(), merges, leaf_order: Vec::new() };
    d.leaf_order = leaf_ordering(&d);
    Ok(d)
}

/// In-order leaf sequence; at every merge the child holding the smaller
/// original leaf index is visited first.
pub fn leaf_ordering(dend: &Dendrogram) -> Vec<usize> {
    let n = dend.n_leaves();
    if n == 0 {
        return Vec::new();
    }
    let mut min_leaf: Vec<usize> = (0..n).collect();
    for mg in &dend.merges {
        min_leaf.push(min_leaf[mg.left].min(min_leaf[mg.right]));
    }
    let root = n + dend.merges.len() - 1;
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if node < n {
            order.push(node);
            continue;
        }
        let mg = dend.merges[node - n];
        let (first, second) = if min_leaf[mg.left] <= min_leaf[mg.right] {
            (mg.left, mg.right)
        } else {
            (mg.right, mg.left)
        };
        stack.push(second);
        stack.push(first);
    }
    order
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Flat partition into `m` clusters: keep the first `n - m` merges.
/// Cluster ids follow first appearance along the leaf order.
pub fn cut_dendrogram(dend: &Dendrogram, m: usize) -> Result<ClusterAssignment, ClusterError> {
    let n = dend.n_leaves();
    if m < 1 || m > n {
        return Err(ClusterError::InvalidCount { m, min: 1, n });
    }
    let mut parent: Vec<usize> = (0..n + dend.merges.len()).collect();
    for (s, mg) in dend.merges.iter().take(n - m).enumerate() {
        let node = n + s;
        let (ra, rb) = (find(&mut parent, mg.left), find(&mut parent, mg.right));
        parent[ra] = node;
        parent[rb] = node;
    }
    let mut label_of_root = std::collections::HashMap::new();
    let mut labels = vec![0; n];
    for &leaf in &dend.leaf_order {
        let root = find(&mut parent, leaf);
        let next = label_of_root.len();
        labels[leaf] = *label_of_root.entry(root).or_insert(next);
    }
    Ok(ClusterAssignment {
        m,
        labels,
        method: ClusterMethod::HierarchicalComplete,
        seed: None,
        inertia_history: Vec::new(),
    })
}

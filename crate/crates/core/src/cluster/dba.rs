use super::ClusterError;
use crate::dtw::{dtw_distance, DistanceMatrix};

/// DTW barycenter averaging.
///
/// Each iteration aligns every member to the current barycenter and replaces
/// each barycenter coordinate with the mean of the member values aligned to it.
pub fn dba_barycenter(members: &[&[f64]], init: &[f64], iters: usize) -> Result<Vec<f64>, ClusterError> {
    if members.is_empty() {
        return Err(ClusterError::NoMembers);
    }
    let mut center = init.to_vec();
    for _ in 0..iters {
        let mut sums = vec![0.0; center.len()];
        let mut counts = vec![0usize; center.len()];
        for m in members {
            let alignment = dtw_distance(&center, m)?;
            for &(k, l) in alignment.path.iter() {
                sums[k] += m[l];
                counts[k] += 1;
            }
        }
        center = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    }
    Ok(center)
}

/// Member with the smallest summed distance to the other members; ties go to the lowest index.
pub fn medoid(members: &[usize], matrix: &DistanceMatrix) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &i in members {
        let total: f64 = members.iter().map(|&j| matrix.get(i, j)).sum();
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((i, total));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_member_from_itself() {
        let s = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(dba_barycenter(&[&s], &s, 1).unwrap(), s.to_vec());
    }

    #[test]
    fn single_member_from_constant_init() {
        // against a constant barycenter the diagonal path is optimal
        let s = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(dba_barycenter(&[&s], &[7.0; 4], 1).unwrap(), s.to_vec());
    }

    #[test]
    fn identical_members() {
        let s = [1.0, 2.0, 3.0];
        assert_eq!(dba_barycenter(&[&s, &s, &s], &[0.0; 3], 3).unwrap(), s.to_vec());
    }

    #[test]
    fn symmetric_pair_fixed_point() {
        let a = [0.0, 0.0];
        let b = [2.0, 2.0];
        assert_eq!(dba_barycenter(&[&a, &b], &[1.0, 1.0], 5).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn empty_members_rejected() {
        assert!(matches!(dba_barycenter(&[], &[1.0], 1), Err(ClusterError::NoMembers)));
    }

    #[test]
    fn medoid_picks_central_member() {
        let l: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let m = DistanceMatrix::new(l, vec![0.0, 1.0, 5.0, 1.0, 0.0, 4.0, 5.0, 4.0, 0.0]).unwrap();
        assert_eq!(medoid(&[0, 1, 2], &m), Some(1));
        assert_eq!(medoid(&[0, 2], &m), Some(0));
        assert_eq!(medoid(&[], &m), None);
    }
}

use proptest::prelude::*;

use fincluster::cluster::{cut_dendrogram, hierarchical_complete};
use fincluster::dtw::{distance, dtw_distance, pairwise_matrix, Normalization};
use fincluster::eval::{adjusted_rand_index, silhouette_samples};
use fincluster::ingest::{CompanyPanel, Metric, QuarterId};
use fincluster::ratios::{apply_scaling, compute_ratios, fit_scaling, invert_scaling, ScalingMode};
use fincluster::table::{Table, Value};

fn series(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 1..=max_len)
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

proptest! {
    #[test]
    fn dtw_is_symmetric_and_nonnegative(a in series(12), b in series(12)) {
        let ab = dtw_distance(&a, &b).unwrap();
        let ba = dtw_distance(&b, &a).unwrap();
        prop_assert!(ab.raw_cost >= 0.0);
        prop_assert_eq!(ab.raw_cost, ba.raw_cost);
        prop_assert!(ab.path.is_valid(a.len(), b.len()));
        prop_assert!(ab.path.len() >= a.len().max(b.len()));
        prop_assert!(ab.path.len() < a.len() + b.len());
        prop_assert!(ab.normalized_cost <= ab.raw_cost);
    }

    #[test]
    fn dtw_of_a_series_with_itself_is_zero(a in series(15)) {
        prop_assert_eq!(distance(&a, &a, Normalization::Raw).unwrap(), 0.0);
        let al = dtw_distance(&a, &a).unwrap();
        prop_assert!(al.path.iter().all(|&(k, l)| k == l));
    }

    #[test]
    fn dtw_never_exceeds_the_diagonal_path(a in prop::collection::vec(-5.0..5.0f64, 1..10), shift in -3.0..3.0f64) {
        let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let diagonal: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        prop_assert!(distance(&a, &b, Normalization::Raw).unwrap() <= diagonal + 1e-12);
    }

    #[test]
    fn silhouettes_stay_in_bounds(
        rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 4), 3..10),
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let m = pairwise_matrix(&labels(n), &rows, Normalization::PathLength).unwrap();
        let lab: Vec<usize> = (0..n).map(|i| if i < 2 { i } else { ((seed >> (i % 60)) % 3) as usize }).collect();
        for s in silhouette_samples(&m, &lab).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn dendrogram_cuts_are_nested(rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 3), 2..9)) {
        let n = rows.len();
        let m = pairwise_matrix(&labels(n), &rows, Normalization::PathLength).unwrap();
        let d = hierarchical_complete(&m).unwrap();
        prop_assert_eq!(d.merges.len(), n - 1);
        prop_assert_eq!(d.merges.last().unwrap().size, n);
        let mut order = d.leaf_order.clone();
        order.sort_unstable();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
        for w in d.merges.windows(2) {
            prop_assert!(w[0].height <= w[1].height);
        }
        for k in 1..n {
            let coarse = cut_dendrogram(&d, k).unwrap();
            let fine = cut_dendrogram(&d, k + 1).unwrap();
            prop_assert_eq!(coarse.sizes().len(), k);
            prop_assert!(coarse.sizes().iter().all(|&s| s > 0));
            for i in 0..n {
                for j in 0..n {
                    if fine.labels[i] == fine.labels[j] {
                        prop_assert_eq!(coarse.labels[i], coarse.labels[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn ari_is_one_under_relabeling(lab in prop::collection::vec(0usize..4, 2..30), perm in Just([2usize, 0, 3, 1])) {
        let relabeled: Vec<usize> = lab.iter().map(|&l| perm[l]).collect();
        prop_assert!((adjusted_rand_index(&lab, &relabeled) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_is_symmetric(a in prop::collection::vec(0usize..4, 5..30), b_seed in any::<u64>()) {
        let b: Vec<usize> = (0..a.len()).map(|i| ((b_seed >> (i % 61)) & 3) as usize).collect();
        let (x, y) = (adjusted_rand_index(&a, &b), adjusted_rand_index(&b, &a));
        prop_assert!((x - y).abs() < 1e-12);
    }

    #[test]
    fn csv_floats_round_trip_exactly(xs in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..20)) {
        let mut t = Table::new(["i", "x"]);
        for (i, &x) in xs.iter().enumerate() {
            t.push(vec![i.into(), Value::Float(x)]);
        }
        let back = Table::from_csv_str(std::str::from_utf8(&t.to_csv_bytes().unwrap()).unwrap(), b',').unwrap();
        let jback = Table::from_json_str(std::str::from_utf8(&t.to_json_bytes().unwrap()).unwrap()).unwrap();
        for (r, &x) in xs.iter().enumerate() {
            prop_assert_eq!(back.float(r, 1).unwrap().to_bits(), x.to_bits());
            prop_assert_eq!(jback.float(r, 1).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn quarter_offsets_invert(year in 1990i32..2100, q in 1u8..=4, k in -200i64..200) {
        let a = QuarterId::new(year, q).unwrap();
        let b = a.offset(k);
        prop_assert_eq!(a.quarters_until(b), k);
        prop_assert_eq!(b.to_string().parse::<QuarterId>().unwrap(), b);
    }

    #[test]
    fn scaling_inverts(
        cells in prop::collection::vec(prop::collection::vec(0.0..500.0f64, 4), 6..24),
        global in any::<bool>(),
    ) {
        let j = 3;
        let n = cells.len() / j;
        let cells = &cells[..n * j];
        let periods: Vec<QuarterId> = (0..j).map(|t| QuarterId::new(2020, 1).unwrap().offset(t as i64)).collect();
        let mut values = Vec::new();
        for c in cells {
            let mut cell = [0.0; Metric::COUNT];
            cell[..4].copy_from_slice(c);
            values.extend(cell);
        }
        let panel = CompanyPanel::from_parts(labels(n), periods, values, vec![true; n * j]).unwrap();
        let raw = compute_ratios(&panel);
        let mode = if global { ScalingMode::Global } else { ScalingMode::WithinCompany };
        let spec = fit_scaling(&raw, mode);
        let back = invert_scaling(&apply_scaling(&raw, &spec).unwrap(), &spec).unwrap();
        for (x, y) in raw.values.iter().zip(&back.values) {
            let scale = x.abs().max(1.0);
            // constant features collapse to zero and cannot be recovered
            prop_assert!((x - y).abs() <= 1e-9 * scale || *y == 0.0 || spec.stds.iter().any(|&s| s == 0.0));
        }
    }
}

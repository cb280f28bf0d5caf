//! Seeded synthetic data: raw panels, ratio-shaped sinusoids, planted latent clusters.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{Metric, QuarterId};
use crate::ratios::Feature;

pub const DEFAULT_START: QuarterId = QuarterId { year: 2013, quarter: 1 };

fn noise(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    rng.gen_range(-half_width..=half_width)
}

/// Quarterly raw panel as delimited text with the default column names.
///
/// Companies fall into four behavioural groups that differ in loss-ratio
/// level, trend and seasonality. Company `3` (when present) starts reporting
/// four quarters late, and one mid-panel quarter of company `5` is left blank.
pub fn synthetic_panel_csv(n: usize, j: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("company,year,quarter");
    for m in Metric::ALL {
        out.push(',');
        out.push_str(m.name());
    }
    out.push('\n');
    for c in 0..n {
        let group = c % 4;
        let scale = 50.0 + 450.0 * rng.gen::<f64>();
        let growth = 0.005 + 0.02 * rng.gen::<f64>();
        let phase = 2.0 * PI * rng.gen::<f64>();
        let mut total_policies = 2_000.0 + 20_000.0 * rng.gen::<f64>();
        for t in 0..j {
            let period = DEFAULT_START.offset(t as i64);
            let name = format!("INS{:02}", c + 1);
            if (c == 3 && t < 4) || (c == 5 && t == j / 2) {
                if c == 5 {
                    let _ = writeln!(out, "{name},{},Q{},,,,,,,", period.year, period.quarter);
                }
                continue;
            }
            let tf = t as f64;
            let season = (2.0 * PI * tf / 4.0 + phase).sin();
            let gpi = scale * (1.0 + growth).powf(tf) * (1.0 + 0.1 * season + noise(&mut rng, 0.03));
            let loss = match group {
                0 => 0.55 + noise(&mut rng, 0.02),
                1 => 0.40 + 0.5 * tf / j.max(1) as f64 + noise(&mut rng, 0.02),
                2 => 0.65 + 0.15 * season + noise(&mut rng, 0.02),
                _ => 0.85 + 0.25 * (tf / 3.0).sin() + noise(&mut rng, 0.05),
            };
            let expense = match group {
                0 => 0.30,
                1 => 0.25,
                2 => 0.35,
                _ => 0.20,
            } + noise(&mut rng, 0.02);
            let incurred = gpi * loss;
            let paid = incurred * (0.7 + 0.25 * rng.gen::<f64>());
            let uwp = gpi - incurred - gpi * expense;
            let nep = gpi * (0.8 + 0.1 * rng.gen::<f64>());
            let new_policies = (total_policies * (0.03 + 0.05 * rng.gen::<f64>())).round();
            total_policies = (total_policies * (1.0 + growth) + noise(&mut rng, 50.0)).round().max(1.0);
            let _ = writeln!(
                out,
                "{name},{},Q{},{gpi:.2},{paid:.2},{incurred:.2},{uwp:.2},{nep:.2},{new_policies},{total_policies}",
                period.year, period.quarter
            );
        }
    }
    out
}

/// Smooth multivariate series: every feature is a scaled copy of one
/// per-company two-tone signal plus small noise, standardized per company
/// and feature. Each returned vector is `j * 7` values, period-major.
pub fn sinusoid_fixture(n: usize, j: usize, seed: u64) -> Vec<Vec<f64>> {
    let f = Feature::COUNT;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps: Vec<f64> = (0..f).map(|k| if k % 2 == 0 { 1.0 } else { -0.7 } + 0.1 * k as f64).collect();
    (0..n)
        .map(|_| {
            let (phi, psi) = (2.0 * PI * rng.gen::<f64>(), 2.0 * PI * rng.gen::<f64>());
            let mut x = vec![0.0; j * f];
            for t in 0..j {
                let tf = t as f64;
                let s = (0.5 * tf + phi).sin() + 0.5 * (1.3 * tf + psi).sin();
                for k in 0..f {
                    x[t * f + k] = amps[k] * s + noise(&mut rng, 0.05);
                }
            }
            for k in 0..f {
                let mean = (0..j).map(|t| x[t * f + k]).sum::<f64>() / j as f64;
                let var = (0..j).map(|t| (x[t * f + k] - mean).powi(2)).sum::<f64>() / j as f64;
                let sd = var.sqrt();
                for t in 0..j {
                    x[t * f + k] = if sd > 0.0 { (x[t * f + k] - mean) / sd } else { 0.0 };
                }
            }
            x
        })
        .collect()
}

/// Latent series drawn around `clusters` prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedClusters {
    pub series: Vec<Vec<f64>>,
    pub truth: Vec<usize>,
    /// Smallest pointwise gap between distinct prototypes.
    pub separation: f64,
    /// Largest pointwise deviation of a member from its prototype.
    pub spread: f64,
}

/// Prototypes are level-shifted (by `3.0` per cluster) copies of distinct
/// shapes; members add uniform noise in `±0.25`. Members are interleaved, so
/// the true label of series `i` is `i % clusters`.
pub fn planted_clusters(clusters: usize, per_cluster: usize, j: usize, seed: u64) -> PlantedClusters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_width = 0.25;
    let prototypes: Vec<Vec<f64>> = (0..clusters)
        .map(|k| {
            let freq = 0.3 + 0.2 * k as f64;
            (0..j).map(|t| 3.0 * k as f64 + 0.4 * (freq * t as f64).sin()).collect()
        })
        .collect();
    let mut separation = f64::INFINITY;
    for a in 0..clusters {
        for b in a + 1..clusters {
            for t in 0..j {
                separation = separation.min((prototypes[a][t] - prototypes[b][t]).abs());
            }
        }
    }
    let mut series = Vec::with_capacity(clusters * per_cluster);
    let mut truth = Vec::with_capacity(clusters * per_cluster);
    let mut spread: f64 = 0.0;
    for _ in 0..per_cluster {
        for (k, p) in prototypes.iter().enumerate() {
            let s: Vec<f64> = p.iter().map(|v| v + noise(&mut rng, half_width)).collect();
            for (x, y) in s.iter().zip(p) {
                spread = spread.max((x - y).abs());
            }
            series.push(s);
            truth.push(k);
        }
    }
    PlantedClusters { series, truth, separation, spread }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_panel, Schema};

    #[test]
    fn panel_parses_with_expected_shape() {
        let text = synthetic_panel_csv(8, 12, 1);
        let panel = parse_panel(&text, &Schema::default()).unwrap();
        assert_eq!(panel.n_companies(), 8);
        assert_eq!(panel.n_periods(), 12);
        assert!(!panel.is_observed(3, 0));
        assert!(!panel.is_observed(5, 6));
        assert!(panel.is_observed(0, 0));
    }

    #[test]
    fn panel_is_seeded() {
        assert_eq!(synthetic_panel_csv(5, 6, 7), synthetic_panel_csv(5, 6, 7));
        assert_ne!(synthetic_panel_csv(5, 6, 7), synthetic_panel_csv(5, 6, 8));
    }

    #[test]
    fn sinusoids_are_standardized() {
        let xs = sinusoid_fixture(3, 20, 0);
        for x in &xs {
            assert_eq!(x.len(), 140);
            for k in 0..7 {
                let mean: f64 = (0..20).map(|t| x[t * 7 + k]).sum::<f64>() / 20.0;
                assert!(mean.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn planted_separation_dominates_spread() {
        let p = planted_clusters(4, 5, 20, 0);
        assert_eq!(p.series.len(), 20);
        assert!(p.separation >= 5.0 * p.spread, "{} vs {}", p.separation, p.spread);
        assert_eq!(&p.truth[..5], &[0, 1, 2, 3, 0]);
    }
}

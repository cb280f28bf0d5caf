use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fincluster::ingest::{load_panel, Schema};
use fincluster::lstm::LatentSeries;
use fincluster::pipeline::{export_heatmap_tables, run_all, run_stage, Manifest, PipelineConfig, PipelineError, Stage};
use fincluster::ratios::{compute_ratios, Feature, RatioTensor};
use fincluster::table::Table;
use fincluster::DistanceMatrix;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("synthetic_panel.csv")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fincluster")).args(args).output().expect("binary runs")
}

/// Small, fast settings on a cut-down copy of the fixture.
fn quick_config(dir: &Path) -> PipelineConfig {
    let text = std::fs::read_to_string(fixture()).unwrap();
    let small: String = text.lines().filter(|l| !l.starts_with("INS1") && !l.starts_with("INS2")).map(|l| l.to_owned() + "\n").collect();
    let input = dir.join("panel.csv");
    std::fs::write(&input, small).unwrap();
    let mut cfg = PipelineConfig { seed: 5, workspace: dir.join("ws"), ..PipelineConfig::default() };
    cfg.ingest.input = Some(input);
    cfg.fuse.hidden = 8;
    cfg.fuse.epochs = 3;
    cfg.evaluate.m_max = 6;
    cfg.cluster.m = 3;
    cfg
}

#[test]
fn cli_full_run_produces_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let config_path = dir.path().join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).unwrap();
    let out = cli(&["--config", config_path.to_str().unwrap(), "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for stage in Stage::ALL {
        let m = Manifest::read(&cfg.workspace, stage).unwrap().expect("manifest");
        assert!(!m.outputs.is_empty());
        assert_eq!(m.seed, 5);
    }
    let out = cli(&["--config", config_path.to_str().unwrap(), "verify"]);
    assert!(out.status.success());
    let report = std::fs::read_to_string(cfg.workspace.join("report/report.json")).unwrap();
    assert!(report.contains("\"seed\": 5"));
    let latent = std::fs::read_to_string(cfg.workspace.join("fuse/latent.csv")).unwrap();
    assert!(latent.starts_with("# seed=5 stage=fuse tool_version="));
}

#[test]
fn cluster_before_fuse_names_fuse() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let out = cli(&["--workspace", ws.to_str().unwrap(), "cluster"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`fuse`"), "{err}");
}

#[test]
fn invalid_config_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let out = cli(&["--workspace", ws.to_str().unwrap(), "evaluate", "--m-min", "1"]);
    assert!(!out.status.success());
    assert!(!ws.exists());
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[fuse]\nbatch_size = 0\n").unwrap();
    let out = cli(&["--config", cfg.to_str().unwrap(), "--workspace", ws.to_str().unwrap(), "run", "--input", fixture().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!ws.exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 3\nformat = \"csv\"\n").unwrap();
    let out = cli(&["--config", cfg.to_str().unwrap(), "--seed", "9", "--format", "json", "config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = PipelineConfig::from_toml(&text).unwrap();
    assert_eq!(parsed.seed, 9);
    assert_eq!(parsed.format, fincluster::pipeline::ExportFormat::Json);
}

#[test]
fn tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    for s in [Stage::Ingest, Stage::Ratios, Stage::Fuse] {
        run_stage(s, &cfg).unwrap();
    }
    let latent = cfg.workspace.join("fuse/latent.csv");
    let mut text = std::fs::read_to_string(&latent).unwrap();
    text.push_str("\n");
    std::fs::write(&latent, text).unwrap();
    assert!(matches!(run_stage(Stage::Distances, &cfg), Err(PipelineError::Tampered { stage: Stage::Fuse, .. })));
    let out = cli(&["--workspace", cfg.workspace.to_str().unwrap(), "verify"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("fuse: FAILED"));
}

#[test]
fn upstream_reruns_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    run_all(&cfg).unwrap();
    let before = std::fs::read(cfg.workspace.join("ratios/ratios_scaled.csv")).unwrap();
    std::fs::remove_dir_all(cfg.workspace.join("report")).unwrap();
    std::fs::remove_dir_all(cfg.workspace.join("cluster")).unwrap();
    run_stage(Stage::Ingest, &cfg).unwrap();
    run_stage(Stage::Ratios, &cfg).unwrap();
    assert_eq!(std::fs::read(cfg.workspace.join("ratios/ratios_scaled.csv")).unwrap(), before);
}

#[test]
fn json_exports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    cfg.format = fincluster::pipeline::ExportFormat::Json;
    run_all(&cfg).unwrap();
    let t = Table::read(&cfg.workspace.join("distances/distances.json")).unwrap();
    let m = DistanceMatrix::from_table(&t).unwrap();
    assert_eq!(m.len(), 9);
    assert_eq!(t.meta.get("seed").map(String::as_str), Some("5"));
    let ordered = Table::read(&cfg.workspace.join("cluster/distances_ordered.json")).unwrap();
    let leaf = Table::read(&cfg.workspace.join("cluster/leaf_order.json")).unwrap();
    let names: Vec<String> = (0..leaf.len()).map(|r| leaf.text(r, 2)).collect();
    assert_eq!(ordered.columns[1..].to_vec(), names);
}

#[test]
fn heatmap_tables() {
    let panel = load_panel(&fixture(), &Schema::default()).unwrap();
    let ratios = compute_ratios(&panel);
    let z: Vec<Vec<f64>> = (0..panel.n_companies())
        .map(|c| (0..panel.n_periods()).map(|p| (c * 100 + p) as f64 * 0.01).collect())
        .collect();
    let latent = LatentSeries::new(panel.companies().to_vec(), panel.periods().to_vec(), &z);
    let tables = export_heatmap_tables(&panel, &ratios, &latent);
    let names: Vec<&str> = tables.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["market_share", "net_earned_premium", "underwriting_profit", "new_policies", "total_policies", "latent"]
    );
    let (n, j) = (panel.n_companies(), panel.n_periods());
    let share = &tables[0].1;
    for p in 0..j {
        let total: f64 = (0..n).map(|c| share.float(c * j + p, 3).unwrap()).sum();
        assert!((total - 100.0).abs() < 1e-9, "period {p}: {total}");
    }
    let lat = &tables[5].1;
    assert_eq!(lat.len(), n * j);
    for (c, p) in [(0, 0), (3, 7), (n - 1, j - 1), (11, 20)] {
        assert_eq!(lat.float(c * j + p, 3).unwrap(), z[c][p]);
        assert_eq!(share.float(c * j + p, 3).unwrap(), ratios.get(c, p, Feature::MarketShare));
        assert_eq!(tables[2].1.float(c * j + p, 3).unwrap(), panel.value(c, p, fincluster::Metric::UnderwritingProfit));
    }
}

#[test]
fn scaled_ratios_are_standardized_within_company() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    run_stage(Stage::Ingest, &cfg).unwrap();
    run_stage(Stage::Ratios, &cfg).unwrap();
    let t = RatioTensor::from_table(&Table::read(&cfg.workspace.join("ratios/ratios_scaled.csv")).unwrap()).unwrap();
    let j = t.n_periods();
    for c in 0..t.n_companies() {
        for f in Feature::ALL {
            let mean: f64 = (0..j).map(|p| t.get(c, p, f)).sum::<f64>() / j as f64;
            assert!(mean.abs() < 1e-9);
        }
    }
}

#[test]
fn synth_subcommand_writes_parseable_panel() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("p.csv");
    let out = cli(&["--seed", "1", "synth", "--out", out_path.to_str().unwrap(), "--companies", "6", "--periods", "9"]);
    assert!(out.status.success());
    let panel = load_panel(&out_path, &Schema::default()).unwrap();
    assert_eq!((panel.n_companies(), panel.n_periods()), (6, 9));
}

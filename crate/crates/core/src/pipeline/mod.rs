//! Staged, file-based pipeline driver.
//!
//! Every stage reads the artifacts of earlier stages from the workspace,
//! writes its own under `<workspace>/<stage>/`, and records a
//! `manifest.json` holding the SHA-256 of each input and output.

mod config;
mod manifest;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    ClusterSection, DistancesSection, EvaluateSection, ExportFormat, FuseSection, IngestSection, PipelineConfig,
    RatiosSection, ReportSection,
};
pub use manifest::{hash_file, sha256_hex, stream_seed, Artifact, Manifest, TOOL_VERSION};

use crate::cluster::{
    assignments_table, centers_table, hierarchical_complete, ClusterAssignment, ClusterError, ClusterMethod,
};
use crate::dtw::{pairwise_matrix, DistanceMatrix, DtwError};
use crate::eval::{cluster_at, elbow_distortion, select_m, silhouette_mean, sweep_series, EvalError, Selection, SweepConfig, ValidationCurve};
use crate::ingest::{load_panel, panel_summary, CompanyPanel, IngestError, Metric};
use crate::lstm::{encode, train, Checkpoint, LatentSeries, LstmError};
use crate::ratios::{apply_scaling, compute_ratios, fit_scaling, Feature, RatioError, RatioTensor};
use crate::table::{Format, Table, TableError, Value};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage `{requested}` needs the output of stage `{required}`; run `{required}` first")]
    MissingStage { requested: Stage, required: Stage },
    #[error("{role} {path} of stage `{stage}` no longer matches its manifest")]
    Tampered { stage: Stage, path: String, role: &'static str },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Ratio(#[from] RatioError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Ratios,
    Fuse,
    Distances,
    Cluster,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Ingest, Stage::Ratios, Stage::Fuse, Stage::Distances, Stage::Cluster, Stage::Evaluate, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Ratios => "ratios",
            Stage::Fuse => "fuse",
            Stage::Distances => "distances",
            Stage::Cluster => "cluster",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Stages whose outputs this stage reads.
    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Ratios => &[Stage::Ingest],
            Stage::Fuse => &[Stage::Ratios],
            Stage::Distances => &[Stage::Fuse],
            Stage::Cluster | Stage::Evaluate => &[Stage::Fuse, Stage::Distances],
            Stage::Report => &[Stage::Ingest, Stage::Ratios, Stage::Fuse, Stage::Cluster, Stage::Evaluate],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Bookkeeping for one stage execution.
struct StageRun<'a> {
    cfg: &'a PipelineConfig,
    stage: Stage,
    dir: PathBuf,
    upstream: Vec<Manifest>,
    inputs: Vec<Artifact>,
    outputs: Vec<Artifact>,
}

impl<'a> StageRun<'a> {
    fn begin(cfg: &'a PipelineConfig, stage: Stage) -> Result<Self, PipelineError> {
        let mut upstream = Vec::new();
        for &req in stage.requires() {
            let m = Manifest::read(&cfg.workspace, req)?
                .ok_or(PipelineError::MissingStage { requested: stage, required: req })?;
            m.verify(&cfg.workspace)?;
            upstream.push(m);
        }
        let dir = cfg.workspace.join(stage.name());
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        let stale = Manifest::path(&cfg.workspace, stage);
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| PipelineError::io(&stale, e))?;
        }
        Ok(Self { cfg, stage, dir, upstream, inputs: Vec::new(), outputs: Vec::new() })
    }

    fn locate(&mut self, stage: Stage, name: &str) -> Result<PathBuf, PipelineError> {
        let m = self
            .upstream
            .iter()
            .find(|m| m.stage == stage)
            .ok_or(PipelineError::MissingStage { requested: self.stage, required: stage })?;
        let a = m
            .output(name)
            .ok_or_else(|| PipelineError::Manifest(format!("stage `{stage}` lists no `{name}` output")))?;
        let path = manifest::resolve(&self.cfg.workspace, &a.path);
        self.inputs.push(Artifact { name: format!("{stage}.{name}"), path: a.path.clone(), sha256: a.sha256.clone() });
        Ok(path)
    }

    fn read_table(&mut self, stage: Stage, name: &str) -> Result<Table, PipelineError> {
        let path = self.locate(stage, name)?;
        Ok(Table::read(&path)?)
    }

    fn read_text(&mut self, stage: Stage, name: &str) -> Result<String, PipelineError> {
        let path = self.locate(stage, name)?;
        std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))
    }

    fn record(&mut self, name: &str, file: &str) -> Result<(), PipelineError> {
        let path = self.dir.join(file);
        let sha256 = hash_file(&path)?;
        self.outputs.push(Artifact { name: name.to_owned(), path: format!("ws:{}/{file}", self.stage), sha256 });
        Ok(())
    }

    fn write_table(&mut self, name: &str, table: Table) -> Result<(), PipelineError> {
        let format: Format = self.cfg.format.into();
        let file = format!("{name}.{}", format.extension());
        let table = table
            .with_meta("seed", self.cfg.seed)
            .with_meta("stage", self.stage)
            .with_meta("tool_version", TOOL_VERSION);
        table.write(&self.dir.join(&file), format)?;
        self.record(name, &file)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let file = format!("{name}.json");
        let text = serde_json::to_string_pretty(value)? + "\n";
        let path = self.dir.join(&file);
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))?;
        self.record(name, &file)
    }

    fn finish(self, section: serde_json::Value) -> Result<Manifest, PipelineError> {
        let m = Manifest {
            stage: self.stage,
            tool_version: TOOL_VERSION.to_owned(),
            seed: self.cfg.seed,
            created: chrono::Utc::now().to_rfc3339(),
            config: section,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        m.write(&self.cfg.workspace)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub method: ClusterMethod,
    pub m: usize,
    pub silhouette: f64,
    pub distortion: f64,
    pub sizes: Vec<usize>,
}

fn sweep_config(cfg: &PipelineConfig) -> SweepConfig {
    SweepConfig {
        seed: stream_seed(cfg.seed, "kmeans"),
        normalization: cfg.distances.normalization,
        max_iter: cfg.cluster.max_iter,
        barycenter_iters: cfg.cluster.barycenter_iters,
    }
}

fn section<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("config serializes")
}

fn check_matrix(latent: &LatentSeries, matrix: &DistanceMatrix) -> Result<(), PipelineError> {
    if latent.companies != matrix.labels {
        return Err(PipelineError::Manifest("latent series and distance matrix list different companies".into()));
    }
    Ok(())
}

fn run_ingest(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let input = cfg.input_path()?.to_path_buf();
    let mut run = StageRun::begin(cfg, Stage::Ingest)?;
    let panel = load_panel(&input, &cfg.ingest.schema)?;
    run.inputs.push(Artifact { name: "source".into(), path: input.display().to_string(), sha256: hash_file(&input)? });
    run.write_table("panel", panel.to_table())?;
    run.write_json("summary", &panel_summary(&panel))?;
    run.finish(section(&cfg.ingest))
}

fn run_ratios(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Ratios)?;
    let panel = CompanyPanel::from_table(&run.read_table(Stage::Ingest, "panel")?)?;
    let raw = compute_ratios(&panel);
    let spec = fit_scaling(&raw, cfg.ratios.scaling);
    let scaled = apply_scaling(&raw, &spec)?;
    run.write_table("ratios_raw", raw.to_table())?;
    run.write_table("ratios_scaled", scaled.to_table())?;
    run.write_json("scaling", &spec)?;
    run.finish(section(&cfg.ratios))
}

fn run_fuse(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Fuse)?;
    let scaled = RatioTensor::from_table(&run.read_table(Stage::Ratios, "ratios_scaled")?)?;
    let tc = cfg.fuse.train_config(stream_seed(cfg.seed, "fuse"));
    let outcome = train(&scaled, &tc)?;
    let latent = encode(&outcome.params, &scaled)?;
    let mut losses = Table::new(["epoch", "loss"]);
    for (e, &l) in outcome.loss_history.iter().enumerate() {
        losses.push(vec![(e + 1).into(), Value::Float(l)]);
    }
    run.write_table("latent", latent.to_table())?;
    run.write_table("loss_history", losses)?;
    let checkpoint = Checkpoint::new(&outcome.params, &tc, &outcome.loss_history);
    run.write_json("checkpoint", &checkpoint)?;
    run.finish(section(&cfg.fuse))
}

fn run_distances(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Distances)?;
    let latent = LatentSeries::from_table(&run.read_table(Stage::Fuse, "latent")?)?;
    let matrix = pairwise_matrix(&latent.companies, &latent.to_series(), cfg.distances.normalization)?;
    run.write_table("distances", matrix.to_table())?;
    run.finish(section(&cfg.distances))
}

fn load_latent_and_matrix(run: &mut StageRun) -> Result<(LatentSeries, DistanceMatrix), PipelineError> {
    let latent = LatentSeries::from_table(&run.read_table(Stage::Fuse, "latent")?)?;
    let matrix = DistanceMatrix::from_table(&run.read_table(Stage::Distances, "distances")?)?;
    check_matrix(&latent, &matrix)?;
    Ok((latent, matrix))
}

fn run_cluster(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Cluster)?;
    let (latent, matrix) = load_latent_and_matrix(&mut run)?;
    let n = latent.n_companies();
    let m = cfg.cluster.m;
    if m > n {
        return Err(PipelineError::Config(format!("cluster.m = {m} exceeds the {n} companies")));
    }
    let series = latent.to_series();
    let periods: Vec<String> = latent.periods.iter().map(ToString::to_string).collect();
    let sweep = sweep_config(cfg);
    let mut assignments: Vec<ClusterAssignment> = Vec::new();
    let mut summaries = Vec::new();
    for &method in &cfg.cluster.methods {
        let c = cluster_at(&series, &matrix, method, m, &sweep)?;
        summaries.push(ClusterSummary {
            method,
            m,
            silhouette: silhouette_mean(&matrix, &c.assignment)?,
            distortion: elbow_distortion(&series, &c.assignment.labels, &c.centers)?,
            sizes: c.assignment.sizes(),
        });
        run.write_table(&format!("centers_{}", method.name()), centers_table(&periods, &c.centers))?;
        match method {
            ClusterMethod::KmeansDtw => {
                let mut t = Table::new(["iteration", "inertia"]);
                for (i, &v) in c.assignment.inertia_history.iter().enumerate() {
                    t.push(vec![i.into(), Value::Float(v)]);
                }
                run.write_table("inertia_history", t)?;
            }
            ClusterMethod::HierarchicalComplete => {
                let d = hierarchical_complete(&matrix)?;
                let mut ordered = matrix.reordered(&d.leaf_order);
                ordered.ordering = Some(d.leaf_order.clone());
                run.write_table("dendrogram", d.merge_table())?;
                run.write_table("leaf_order", d.leaf_order_table())?;
                run.write_table("distances_ordered", ordered.to_table())?;
            }
        }
        assignments.push(c.assignment);
    }
    let refs: Vec<&ClusterAssignment> = assignments.iter().collect();
    run.write_table("assignments", assignments_table(&latent.companies, &refs))?;
    run.write_json("summary", &summaries)?;
    run.finish(section(&cfg.cluster))
}

fn run_evaluate(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Evaluate)?;
    let (latent, matrix) = load_latent_and_matrix(&mut run)?;
    let n = latent.n_companies();
    if cfg.evaluate.m_max > n {
        return Err(PipelineError::Config(format!(
            "evaluate.m_max = {} exceeds the {n} companies",
            cfg.evaluate.m_max
        )));
    }
    let series = latent.to_series();
    let sweep = sweep_config(cfg);
    let ms = cfg.evaluate.ms();
    let mut table: Option<Table> = None;
    let mut selections = Vec::new();
    for &method in &cfg.cluster.methods {
        let curve = sweep_series(&series, &matrix, &ms, method, &sweep)?;
        let t = curve.to_table();
        match table.as_mut() {
            Some(all) => all.rows.extend(t.rows),
            None => table = Some(t),
        }
        selections.extend(select_m(&curve, &cfg.evaluate.selection));
    }
    run.write_table("validation_curve", table.expect("at least one method"))?;
    run.write_json("selection", &selections)?;
    run.finish(section(&cfg.evaluate))
}

/// Long-format `(entity, period, metric, value)` tables behind the heatmaps,
/// keyed by family name.
pub fn export_heatmap_tables(
    panel: &CompanyPanel,
    ratios: &RatioTensor,
    latent: &LatentSeries,
) -> Vec<(String, Table)> {
    let header = ["entity", "period", "metric", "value"];
    let mut out = Vec::new();
    let mut share = Table::new(header);
    for (c, name) in ratios.companies.iter().enumerate() {
        for (p, period) in ratios.periods.iter().enumerate() {
            share.push(vec![
                name.as_str().into(),
                period.to_string().into(),
                Feature::MarketShare.name().into(),
                Value::Float(ratios.get(c, p, Feature::MarketShare)),
            ]);
        }
    }
    out.push(("market_share".to_owned(), share));
    for metric in [Metric::NetEarnedPremium, Metric::UnderwritingProfit, Metric::NewPolicies, Metric::TotalPolicies] {
        let mut t = Table::new(header);
        for (c, name) in panel.companies().iter().enumerate() {
            for (p, period) in panel.periods().iter().enumerate() {
                t.push(vec![
                    name.as_str().into(),
                    period.to_string().into(),
                    metric.name().into(),
                    Value::Float(panel.value(c, p, metric)),
                ]);
            }
        }
        out.push((metric.name().to_owned(), t));
    }
    let mut z = Table::new(header);
    for (c, name) in latent.companies.iter().enumerate() {
        for (p, period) in latent.periods.iter().enumerate() {
            z.push(vec![name.as_str().into(), period.to_string().into(), "z".into(), Value::Float(latent.series(c)[p])]);
        }
    }
    out.push(("latent".to_owned(), z));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub m: usize,
    pub reference_silhouette: Option<f64>,
    pub achieved: Vec<AchievedSilhouette>,
}

/// Silhouette at the reference `m` from the validation sweep; absent when `m` lies outside the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievedSilhouette {
    pub method: ClusterMethod,
    pub silhouette: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub tool_version: String,
    pub n_companies: usize,
    pub n_periods: usize,
    pub clusterings: Vec<ClusterSummary>,
    pub selection: Vec<Selection>,
    pub reference: ReferenceComparison,
}

fn run_report(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::begin(cfg, Stage::Report)?;
    let panel = CompanyPanel::from_table(&run.read_table(Stage::Ingest, "panel")?)?;
    let ratios = RatioTensor::from_table(&run.read_table(Stage::Ratios, "ratios_raw")?)?;
    let latent = LatentSeries::from_table(&run.read_table(Stage::Fuse, "latent")?)?;
    let assignments = run.read_table(Stage::Cluster, "assignments")?;
    let clusterings: Vec<ClusterSummary> = serde_json::from_str(&run.read_text(Stage::Cluster, "summary")?)?;
    let curves = ValidationCurve::from_table(&run.read_table(Stage::Evaluate, "validation_curve")?)?;
    let selection: Vec<Selection> = serde_json::from_str(&run.read_text(Stage::Evaluate, "selection")?)?;

    for (family, table) in export_heatmap_tables(&panel, &ratios, &latent) {
        run.write_table(&format!("heatmap_{family}"), table)?;
    }

    let (ci, mi, ki, li) =
        (assignments.column("company")?, assignments.column("method")?, assignments.column("m")?, assignments.column("label")?);
    let mut groups: Vec<(String, i64, i64, Vec<String>)> = Vec::new();
    for r in 0..assignments.len() {
        let key = (assignments.text(r, mi), assignments.int(r, ki)?, assignments.int(r, li)?);
        match groups.iter_mut().find(|g| (&g.0, g.1, g.2) == (&key.0, key.1, key.2)) {
            Some(g) => g.3.push(assignments.text(r, ci)),
            None => groups.push((key.0, key.1, key.2, vec![assignments.text(r, ci)])),
        }
    }
    groups.sort_by(|a, b| (&a.0, a.2).cmp(&(&b.0, b.2)));
    let mut members = Table::new(["method", "m", "cluster", "size", "companies"]);
    for (method, m, label, names) in &groups {
        members.push(vec![
            method.as_str().into(),
            Value::Int(*m),
            Value::Int(*label),
            names.len().into(),
            names.join(";").into(),
        ]);
    }
    run.write_table("cluster_members", members)?;

    let mut curve_table: Option<Table> = None;
    for c in &curves {
        let t = c.to_table();
        match curve_table.as_mut() {
            Some(all) => all.rows.extend(t.rows),
            None => curve_table = Some(t),
        }
    }
    if let Some(t) = curve_table {
        run.write_table("validation_curve", t)?;
    }

    let rm = cfg.report.reference_m;
    let achieved = curves
        .iter()
        .map(|c| AchievedSilhouette {
            method: c.method,
            silhouette: c.ms.iter().position(|&m| m == rm).map(|i| c.silhouettes[i]),
        })
        .collect();
    let report = Report {
        seed: cfg.seed,
        tool_version: TOOL_VERSION.to_owned(),
        n_companies: panel.n_companies(),
        n_periods: panel.n_periods(),
        clusterings,
        selection,
        reference: ReferenceComparison { m: rm, reference_silhouette: cfg.report.reference_silhouette, achieved },
    };
    run.write_json("report", &report)?;
    run.finish(section(&cfg.report))
}

/// Runs one stage. The configuration is validated before anything is written.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    match stage {
        Stage::Ingest => run_ingest(cfg),
        Stage::Ratios => run_ratios(cfg),
        Stage::Fuse => run_fuse(cfg),
        Stage::Distances => run_distances(cfg),
        Stage::Cluster => run_cluster(cfg),
        Stage::Evaluate => run_evaluate(cfg),
        Stage::Report => run_report(cfg),
    }
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<Manifest>, PipelineError> {
    cfg.validate()?;
    cfg.input_path()?;
    Stage::ALL.into_iter().map(|s| run_stage(s, cfg)).collect()
}

#[derive(Debug)]
pub enum VerifyStatus {
    Ok,
    Absent,
    Failed(PipelineError),
}

/// Re-hashes the inputs and outputs of every stage that has a manifest.
pub fn verify_workspace(workspace: &Path) -> Vec<(Stage, VerifyStatus)> {
    Stage::ALL
        .into_iter()
        .map(|s| {
            let status = match Manifest::read(workspace, s) {
                Ok(None) => VerifyStatus::Absent,
                Ok(Some(m)) => match m.verify(workspace) {
                    Ok(()) => VerifyStatus::Ok,
                    Err(e) => VerifyStatus::Failed(e),
                },
                Err(e) => VerifyStatus::Failed(e),
            };
            (s, status)
        })
        .collect()
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::cluster::ClusterMethod;
use crate::dtw::Normalization;
use crate::eval::SelectionRule;
use crate::ingest::Schema;
use crate::lstm::TrainConfig;
use crate::ratios::ScalingMode;
use crate::table::Format;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSection {
    pub input: Option<PathBuf>,
    pub schema: Schema,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self { input: None, schema: Schema::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatiosSection {
    pub scaling: ScalingMode,
}

/// LSTM settings; the seed comes from the top-level seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuseSection {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for FuseSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden: t.hidden,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
        }
    }
}

impl FuseSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistancesSection {
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSection {
    pub methods: Vec<ClusterMethod>,
    pub m: usize,
    pub max_iter: usize,
    pub barycenter_iters: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            methods: vec![ClusterMethod::KmeansDtw, ClusterMethod::HierarchicalComplete],
            m: 4,
            max_iter: 50,
            barycenter_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSection {
    pub m_min: usize,
    pub m_max: usize,
    pub selection: SelectionRule,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { m_min: 2, m_max: 12, selection: SelectionRule::default() }
    }
}

impl EvaluateSection {
    pub fn ms(&self) -> Vec<usize> {
        (self.m_min..=self.m_max).collect()
    }
}

/// Published silhouette to set the achieved score against; informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportSection {
    pub reference_m: usize,
    pub reference_silhouette: Option<f64>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { reference_m: 4, reference_silhouette: Some(0.26) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

impl From<ExportFormat> for Format {
    fn from(f: ExportFormat) -> Self {
        match f {
            ExportFormat::Csv => Format::Csv,
            ExportFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workspace: PathBuf,
    pub format: ExportFormat,
    pub ingest: IngestSection,
    pub ratios: RatiosSection,
    pub fuse: FuseSection,
    pub distances: DistancesSection,
    pub cluster: ClusterSection,
    pub evaluate: EvaluateSection,
    pub report: ReportSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workspace: PathBuf::from("workspace"),
            format: ExportFormat::Csv,
            ingest: IngestSection::default(),
            ratios: RatiosSection::default(),
            fuse: FuseSection::default(),
            distances: DistancesSection::default(),
            cluster: ClusterSection::default(),
            evaluate: EvaluateSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks settings that do not depend on data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.workspace.as_os_str().is_empty() {
            return bad("workspace path is empty".into());
        }
        if u8::try_from(self.ingest.schema.delimiter).is_err() {
            return bad(format!("delimiter `{}` is not a single byte", self.ingest.schema.delimiter));
        }
        self.fuse.train_config(self.seed).validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.cluster.methods.is_empty() {
            return bad("cluster.methods is empty".into());
        }
        if self.cluster.m < 2 {
            return bad(format!("cluster.m = {} must be at least 2", self.cluster.m));
        }
        if self.cluster.max_iter == 0 {
            return bad("cluster.max_iter must be at least 1".into());
        }
        if self.evaluate.m_min < 2 || self.evaluate.m_min > self.evaluate.m_max {
            return bad(format!(
                "evaluate range {}..={} must satisfy 2 <= m_min <= m_max",
                self.evaluate.m_min, self.evaluate.m_max
            ));
        }
        let rule = &self.evaluate.selection;
        if !(rule.elbow_fraction > 0.0 && rule.silhouette_fraction > 0.0 && rule.silhouette_fraction <= 1.0) {
            return bad("selection fractions must be positive, silhouette_fraction at most 1".into());
        }
        Ok(())
    }

    /// Input path for the ingest stage, which must exist.
    pub fn input_path(&self) -> Result<&Path, PipelineError> {
        let p = self
            .ingest
            .input
            .as_deref()
            .ok_or_else(|| PipelineError::Config("ingest.input is not set".into()))?;
        if !p.is_file() {
            return Err(PipelineError::Config(format!("input panel {} does not exist", p.display())));
        }
        Ok(p)
    }
}

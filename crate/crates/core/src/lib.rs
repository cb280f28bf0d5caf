//! Clustering of insurers by the temporal behaviour of their financial ratios.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`ingest`] loads a quarterly panel into a rectangular company × quarter grid,
//!    zero-filling unreported cells.
//! 2. [`ratios`] derives seven underwriting ratios per cell and standardizes them.
//! 3. [`lstm`] trains a peephole LSTM autoencoder with a one-unit bottleneck and
//!    encodes every company as a single latent trajectory.
//! 4. [`dtw`] aligns latent trajectories with dynamic time warping and builds the
//!    pairwise distance matrix.
//! 5. [`cluster`] partitions companies with DTW K-Means (DBA centres) and with
//!    complete-linkage agglomeration.
//! 6. [`eval`] scores partitions with the silhouette and the elbow distortion.
//!
//! [`pipeline`] wires the stages together with file-based hand-off and manifests,
//! and backs the `fincluster` command-line tool.

pub mod cluster;
pub mod dtw;
pub mod eval;
pub mod ingest;
pub mod lstm;
pub mod pipeline;
pub mod ratios;
pub mod synth;
pub mod table;

pub use cluster::{ClusterAssignment, ClusterMethod, Dendrogram, KMeansConfig, KMeansResult};
pub use dtw::{DistanceMatrix, DtwAlignment, Normalization, WarpingPath};
pub use eval::ValidationCurve;
pub use ingest::{CompanyPanel, Metric, QuarterId, Schema};
pub use lstm::{LatentSeries, LstmParams, TrainConfig};
pub use ratios::{Feature, RatioTensor, ScalingMode, ScalingSpec};

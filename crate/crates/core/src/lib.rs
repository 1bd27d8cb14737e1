//! Joint and individual clustering of multi-block data.
//!
//! Several data blocks measured on the same samples are decomposed into a
//! shared low-rank structure plus one block-specific low-rank structure per
//! block, by alternating truncated SVDs. Cluster assignments come from
//! k-means on the score rows; the number of joint and block-specific
//! clusters is chosen by sequential normality testing of the component
//! scores. A simulation harness generates the two benchmark settings and
//! scores recovery against the generating truth.
//!
//! Modules:
//! - [`matrix`]: block containers, scaling/centering, truncated SVD,
//!   principal component scores.
//! - [`kmeans`]: Lloyd's algorithm with k-means++ restarts and an exact
//!   small-instance oracle.
//! - [`decomposition`]: the alternating joint/individual fit and the final
//!   clustering step.
//! - [`selection`]: Anderson-Darling normality tests, component scanning,
//!   and the cluster-count arithmetic.
//! - [`simulation`]: benchmark generators, matched-precision scoring, and
//!   the Monte Carlo harness.
//! - [`io`]: delimited-text ingestion and all serialized output formats.

pub mod decomposition;
pub mod error;
pub mod io;
pub mod kmeans;
pub mod matrix;
pub mod selection;
pub mod simulation;
pub mod util;

pub use decomposition::{
    cluster_decomposition, jic_decompose, reconstruction_error, ClusterResult, DecomposeOptions,
    Decomposition, Ranks,
};
pub use error::{Error, Result};
pub use kmeans::{brute_force_kmeans, indicator_matrix, kmeans, KmeansFit};
pub use matrix::{
    concat_blocks, pc_scores, scale_block, split_blocks, truncated_svd, Block, BlockSet,
    Preprocess, ScaleNorm, TruncatedSvd,
};
pub use selection::{
    anderson_darling, cluster_counts, scan_components, select_cluster_numbers, RankSelection,
    ScanRule, SelectOptions,
};
pub use simulation::{
    adjusted_rand_index, generate, precision, run_monte_carlo, MonteCarloOptions, SimConfig,
    SimSetting, SimulationReport,
};

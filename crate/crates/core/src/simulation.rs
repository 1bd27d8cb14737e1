//! Synthetic benchmark generators, the matched-precision metric, and the
//! Monte Carlo harness.
//!
//! Two settings: joint cluster structure only, and joint structure plus one
//! two-group structure specific to each block. Each replicate is generated
//! from an independent, reproducible PRNG stream, run through the full
//! pipeline twice (known ranks for precision, unknown ranks for cluster-count
//! recovery), and scored against the generating truth.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{cluster_decomposition, jic_decompose, DecomposeOptions, Ranks};
use crate::error::{Error, Result};
use crate::matrix::{Block, BlockSet, Preprocess};
use crate::selection::{select_cluster_numbers, SelectOptions};
use crate::util::derive_seed;

/// Which generative model to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimSetting {
    /// Joint clusters only ("setting I").
    #[serde(rename = "I")]
    JointOnly,
    /// Joint clusters plus one block-specific two-group split per block
    /// ("setting II").
    #[serde(rename = "II")]
    JointAndIndividual,
}

impl std::str::FromStr for SimSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(SimSetting::JointOnly),
            "II" | "2" => Ok(SimSetting::JointAndIndividual),
            other => Err(Error::InvalidInput(format!(
                "unknown setting '{other}', expected I or II"
            ))),
        }
    }
}

impl std::fmt::Display for SimSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimSetting::JointOnly => write!(f, "I"),
            SimSetting::JointAndIndividual => write!(f, "II"),
        }
    }
}

/// Parameters of the generative model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub setting: SimSetting,
    /// Samples per replicate; must be divisible by `k_joint`.
    pub n: usize,
    /// Number of joint clusters (equal sized).
    pub k_joint: usize,
    /// Variables per block.
    pub block_dims: Vec<usize>,
    /// Joint signal strength c.
    pub joint_signal: f64,
    /// Per-block individual signal strengths c_m (used in setting II).
    pub individual_signal: Vec<f64>,
    pub seed: u64,
    pub replicates: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            setting: SimSetting::JointOnly,
            n: 150,
            k_joint: 5,
            block_dims: vec![200, 200, 200],
            joint_signal: 80.0,
            individual_signal: vec![30.0, 30.0, 30.0],
            seed: 0,
            replicates: 100,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_joint < 2 {
            return Err(Error::InvalidInput(
                "need at least two joint clusters".into(),
            ));
        }
        if self.n == 0 || !self.n.is_multiple_of(self.k_joint) {
            return Err(Error::InvalidInput(format!(
                "n = {} must be a positive multiple of k_joint = {}",
                self.n, self.k_joint
            )));
        }
        if self.block_dims.is_empty() || self.block_dims.contains(&0) {
            return Err(Error::InvalidInput("block dims must be positive".into()));
        }
        if self.individual_signal.len() != self.block_dims.len() {
            return Err(Error::InvalidInput(format!(
                "{} individual signal strengths for {} blocks",
                self.individual_signal.len(),
                self.block_dims.len()
            )));
        }
        if self.joint_signal <= 0.0 || self.individual_signal.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidInput(
                "signal strengths must be positive".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidInput("need at least one replicate".into()));
        }
        Ok(())
    }

    /// The ranks implied by the generative model (joint K-1; one per block in
    /// setting II).
    pub fn true_ranks(&self) -> Ranks {
        let individual = match self.setting {
            SimSetting::JointOnly => vec![0; self.block_dims.len()],
            SimSetting::JointAndIndividual => vec![1; self.block_dims.len()],
        };
        Ranks::new(self.k_joint - 1, individual)
    }

    /// The cluster counts implied by the generative model.
    pub fn true_counts(&self) -> (usize, Vec<usize>) {
        let k_m = match self.setting {
            SimSetting::JointOnly => vec![1; self.block_dims.len()],
            SimSetting::JointAndIndividual => vec![2; self.block_dims.len()],
        };
        (self.k_joint, k_m)
    }
}

/// The latent structure a replicate was generated from.
#[derive(Debug, Clone)]
pub struct SimTruth {
    /// n joint labels in 1..=K.
    pub joint_labels: Vec<usize>,
    /// Per-block two-group labels in 1..=2 (empty in setting I).
    pub individual_labels: Vec<Vec<usize>>,
    /// (K-1) x n joint indicator rows (last cluster all zero).
    pub joint_scores: DMatrix<f64>,
    /// Per-block p_m x (K-1) orthonormal joint loadings.
    pub joint_loadings: Vec<DMatrix<f64>>,
    /// Per-block 1 x n individual score rows after orthogonalization
    /// (empty in setting I).
    pub individual_scores: Vec<DMatrix<f64>>,
    /// Per-block p_m x 1 unit-norm individual loadings (empty in setting I).
    pub individual_loadings: Vec<DMatrix<f64>>,
}

/// Generate one replicate. Fully determined by `(cfg.seed, replicate)`.
pub fn generate(cfg: &SimConfig, replicate: usize) -> Result<(BlockSet, SimTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replicate as u64);

    let n = cfg.n;
    let k = cfg.k_joint;
    let per_cluster = n / k;
    let joint_labels: Vec<usize> = (0..n).map(|j| j / per_cluster + 1).collect();

    // 0/1 indicator rows for clusters 1..K-1; the last cluster is all zeros.
    let mut joint_scores = DMatrix::zeros(k - 1, n);
    for (j, &label) in joint_labels.iter().enumerate() {
        if label < k {
            joint_scores[(label - 1, j)] = 1.0;
        }
    }

    let individual = cfg.setting == SimSetting::JointAndIndividual;
    let mut blocks = Vec::with_capacity(cfg.block_dims.len());
    let mut joint_loadings = Vec::new();
    let mut individual_labels = Vec::new();
    let mut individual_scores = Vec::new();
    let mut individual_loadings = Vec::new();

    for (m, &p_m) in cfg.block_dims.iter().enumerate() {
        // Orthonormal joint loadings from a QR of a Gaussian matrix.
        let gauss = DMatrix::from_fn(p_m, k - 1, |_, _| standard_normal(&mut rng));
        let w_m = gauss.qr().q().columns(0, k - 1).into_owned();
        let mut x = cfg.joint_signal * &w_m * &joint_scores;

        if individual {
            // Random two-group split, kept as the truth labels; the
            // generating score row is the split's indicator projected onto
            // the orthogonal complement of the joint indicator rows.
            let assignment: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
            let mut z = DVector::from_fn(n, |j, _| if assignment[j] { 1.0 } else { 0.0 });
            project_out_clusters(&mut z, &joint_labels, k, per_cluster);
            let mut v = DVector::from_fn(p_m, |_, _| standard_normal(&mut rng));
            v /= v.norm();
            let zt = z.transpose();
            x += cfg.individual_signal[m] * &v * &zt;

            individual_labels.push(
                assignment
                    .iter()
                    .map(|&a| if a { 2 } else { 1 })
                    .collect::<Vec<usize>>(),
            );
            individual_scores.push(DMatrix::from_rows(&[zt.row(0).into_owned()]));
            individual_loadings.push(DMatrix::from_columns(&[v]));
        }

        for i in 0..p_m {
            for j in 0..n {
                x[(i, j)] += standard_normal(&mut rng);
            }
        }
        blocks.push(Block::new(x, format!("block_{}", m + 1))?);
        joint_loadings.push(w_m);
    }

    let sample_ids: Vec<String> = (1..=n).map(|j| format!("s{j}")).collect();
    let bs = BlockSet::new(blocks, Some(sample_ids))?;
    Ok((
        bs,
        SimTruth {
            joint_labels,
            individual_labels,
            joint_scores,
            joint_loadings,
            individual_scores,
            individual_loadings,
        },
    ))
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Subtract the per-cluster mean over clusters 1..K-1, which is exactly the
/// projection onto the orthogonal complement of the joint indicator rows.
fn project_out_clusters(z: &mut DVector<f64>, labels: &[usize], k: usize, per_cluster: usize) {
    for cluster in 1..k {
        let mut sum = 0.0;
        for (j, &l) in labels.iter().enumerate() {
            if l == cluster {
                sum += z[j];
            }
        }
        let mean = sum / per_cluster as f64;
        for (j, &l) in labels.iter().enumerate() {
            if l == cluster {
                z[j] -= mean;
            }
        }
    }
}

/// Matched precision: the largest fraction of samples on which the two
/// labelings agree, over all injective mappings from estimated clusters to
/// truth clusters (optimal assignment on the confusion matrix). Equals 1
/// exactly when the partitions coincide up to renaming.
pub fn precision(estimated: &[usize], truth: &[usize]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated labels vs {} truth labels",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.is_empty() {
        return Err(Error::InvalidInput("empty labelings".into()));
    }
    let confusion = confusion_matrix(estimated, truth);
    let matched = hungarian_max(&confusion);
    Ok(matched / estimated.len() as f64)
}

/// Adjusted Rand index between two labelings, emitted alongside precision
/// for reference. Two all-singleton or all-identical trivial partitions give
/// 1.0 by convention.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} labels",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty labelings".into()));
    }
    let confusion = confusion_matrix(a, b);
    let n = a.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut sum_cells = 0.0;
    for v in confusion.iter() {
        sum_cells += choose2(*v);
    }
    let row_sums: Vec<f64> = confusion.row_iter().map(|r| r.sum()).collect();
    let col_sums: Vec<f64> = confusion.column_iter().map(|c| c.sum()).collect();
    let sum_rows: f64 = row_sums.iter().map(|&v| choose2(v)).sum();
    let sum_cols: f64 = col_sums.iter().map(|&v| choose2(v)).sum();
    let expected = sum_rows * sum_cols / choose2(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

fn confusion_matrix(a: &[usize], b: &[usize]) -> DMatrix<f64> {
    let map_a = dense_label_map(a);
    let map_b = dense_label_map(b);
    let mut confusion = DMatrix::zeros(map_a.1, map_b.1);
    for (&la, &lb) in a.iter().zip(b) {
        confusion[(map_a.0[&la], map_b.0[&lb])] += 1.0;
    }
    confusion
}

fn dense_label_map(labels: &[usize]) -> (std::collections::BTreeMap<usize, usize>, usize) {
    let mut map = std::collections::BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    let len = map.len();
    (map, len)
}

/// Maximum total agreement over injective row-to-column assignments of a
/// nonnegative score matrix, by the Hungarian algorithm on the square
/// zero-padded cost matrix.
fn hungarian_max(scores: &DMatrix<f64>) -> f64 {
    let size = scores.nrows().max(scores.ncols());
    let big = scores.iter().cloned().fold(0.0f64, f64::max);
    // Convert to a min-cost problem on a square matrix.
    let cost = DMatrix::from_fn(size, size, |i, j| {
        if i < scores.nrows() && j < scores.ncols() {
            big - scores[(i, j)]
        } else {
            big
        }
    });
    let assignment = hungarian_min(&cost);
    assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < scores.nrows() && j < scores.ncols())
        .map(|(i, &j)| scores[(i, j)])
        .sum()
}

/// O(n^3) Hungarian algorithm (potentials + shortest augmenting paths) for
/// square min-cost assignment. Returns the column assigned to each row.
fn hungarian_min(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based arrays with a virtual 0 row/column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // row matched to column j

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut prev = vec![0usize; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let current = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if current < min_to[j] {
                    min_to[j] = current;
                    prev[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Augment along the path.
        while j0 != 0 {
            let j1 = prev[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Options threading the pipeline parameters into the Monte Carlo runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub preprocess: Preprocess,
    pub decompose: DecomposeOptions,
    /// Restarts for every final k-means.
    pub restarts: usize,
    pub select: SelectOptions,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            preprocess: Preprocess::default(),
            decompose: DecomposeOptions::default(),
            restarts: 30,
            select: SelectOptions::default(),
        }
    }
}

/// Everything recorded about one replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub joint_precision: Option<f64>,
    pub individual_precisions: Vec<Option<f64>>,
    pub joint_ari: Option<f64>,
    pub individual_ari: Vec<Option<f64>>,
    /// Estimated joint cluster count from the unknown-rank arm.
    pub k_estimated: Option<usize>,
    pub k_m_estimated: Vec<Option<usize>>,
    pub k_correct: bool,
    pub k_m_correct: Vec<bool>,
    /// First error hit while processing this replicate, if any.
    pub error: Option<String>,
}

/// Aggregates in the benchmark-table layout: mean precisions and
/// correct-count rates, joint first then one column per block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub mean_joint_precision: Option<f64>,
    pub mean_individual_precisions: Vec<Option<f64>>,
    pub mean_joint_ari: Option<f64>,
    pub k_correct_rate: f64,
    pub k_m_correct_rates: Vec<f64>,
    /// Fraction of replicates where the joint count and every block count
    /// were all exactly right.
    pub all_counts_correct_rate: f64,
    pub failed_replicates: usize,
}

/// Full Monte Carlo output: per-replicate rows plus the aggregate summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub options: MonteCarloOptions,
    pub records: Vec<ReplicateRecord>,
    pub summary: SimulationSummary,
}

/// Run the full pipeline over every replicate of the configured setting:
/// known-rank decomposition + clustering scored by matched precision, and
/// unknown-rank selection scored by exact recovery of the cluster counts.
/// Replicates run in parallel on independent PRNG streams; the output is
/// deterministic for a given config.
pub fn run_monte_carlo(cfg: &SimConfig, opts: &MonteCarloOptions) -> Result<SimulationReport> {
    cfg.validate()?;
    let records: Vec<ReplicateRecord> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| run_replicate(cfg, opts, rep))
        .collect();
    let summary = summarize(cfg, &records);
    Ok(SimulationReport {
        config: cfg.clone(),
        options: opts.clone(),
        records,
        summary,
    })
}

fn run_replicate(cfg: &SimConfig, opts: &MonteCarloOptions, rep: usize) -> ReplicateRecord {
    let m_blocks = cfg.block_dims.len();
    let mut record = ReplicateRecord {
        replicate: rep,
        joint_precision: None,
        individual_precisions: vec![None; m_blocks],
        joint_ari: None,
        individual_ari: vec![None; m_blocks],
        k_estimated: None,
        k_m_estimated: vec![None; m_blocks],
        k_correct: false,
        k_m_correct: vec![false; m_blocks],
        error: None,
    };

    let outcome = (|| -> Result<()> {
        let (raw, truth) = generate(cfg, rep)?;
        let bs = opts.preprocess.apply(&raw)?;

        // Known-rank arm: decompose with the generating ranks and score the
        // clusterings against the truth.
        let ranks = cfg.true_ranks();
        let d = jic_decompose(&bs, &ranks, &opts.decompose)?;
        let clusters = cluster_decomposition(&d, opts.restarts, derive_seed(cfg.seed, rep as u64))?;
        record.joint_precision = Some(precision(&clusters.joint_labels, &truth.joint_labels)?);
        record.joint_ari = Some(adjusted_rand_index(
            &clusters.joint_labels,
            &truth.joint_labels,
        )?);
        if cfg.setting == SimSetting::JointAndIndividual {
            for m in 0..m_blocks {
                record.individual_precisions[m] = Some(precision(
                    &clusters.individual_labels[m],
                    &truth.individual_labels[m],
                )?);
                record.individual_ari[m] = Some(adjusted_rand_index(
                    &clusters.individual_labels[m],
                    &truth.individual_labels[m],
                )?);
            }
        }

        // Unknown-rank arm: estimate the cluster counts from scratch.
        let selection = select_cluster_numbers(&bs, &opts.select)?;
        let (true_k, true_k_m) = cfg.true_counts();
        record.k_estimated = selection.k;
        record.k_correct = selection.k == Some(true_k);
        for m in 0..m_blocks {
            record.k_m_estimated[m] = selection.k_m.get(m).copied();
            record.k_m_correct[m] = selection.k_m.get(m) == Some(&true_k_m[m]);
        }
        Ok(())
    })();

    if let Err(err) = outcome {
        record.error = Some(err.to_string());
    }
    record
}

fn summarize(cfg: &SimConfig, records: &[ReplicateRecord]) -> SimulationSummary {
    let m_blocks = cfg.block_dims.len();
    let total = records.len() as f64;
    let mean_of = |values: Vec<f64>| -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    let mean_joint_precision = mean_of(
        records
            .iter()
            .filter_map(|r| r.joint_precision)
            .collect::<Vec<_>>(),
    );
    let mean_joint_ari = mean_of(
        records
            .iter()
            .filter_map(|r| r.joint_ari)
            .collect::<Vec<_>>(),
    );
    let mean_individual_precisions = (0..m_blocks)
        .map(|m| {
            mean_of(
                records
                    .iter()
                    .filter_map(|r| r.individual_precisions[m])
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let k_correct_rate = records.iter().filter(|r| r.k_correct).count() as f64 / total;
    let k_m_correct_rates = (0..m_blocks)
        .map(|m| records.iter().filter(|r| r.k_m_correct[m]).count() as f64 / total)
        .collect();
    let all_counts_correct_rate = records
        .iter()
        .filter(|r| r.k_correct && r.k_m_correct.iter().all(|&c| c))
        .count() as f64
        / total;
    SimulationSummary {
        mean_joint_precision,
        mean_individual_precisions,
        mean_joint_ari,
        k_correct_rate,
        k_m_correct_rates,
        all_counts_correct_rate,
        failed_replicates: records.iter().filter(|r| r.error.is_some()).count(),
    }
}

//! The alternating joint/individual decomposition and its clustering step.
//!
//! Each iteration fits a rank-r joint structure to the concatenated working
//! matrix by truncated SVD, then fits a rank-r_m individual structure to each
//! block's residual, constrained so individual score rows stay orthogonal to
//! the joint score rows. The working matrices are then refreshed and the
//! loop repeats until the reconstruction error stabilizes. At the end the
//! score rows are clustered with k-means: joint scores into r+1 groups,
//! block m's scores into r_m+1 groups.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{canonical_labels, kmeans};
use crate::matrix::{truncated_svd, BlockSet};
use crate::util::derive_seed;

/// Target ranks: joint rank r and one individual rank per block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranks {
    pub joint: usize,
    pub individual: Vec<usize>,
}

impl Ranks {
    pub fn new(joint: usize, individual: Vec<usize>) -> Self {
        Self { joint, individual }
    }

    /// Check feasibility against a block set: r <= min(p, n),
    /// r_m <= min(p_m, n), and r + max(r_m) <= n - 1.
    pub fn validate(&self, bs: &BlockSet) -> Result<()> {
        if self.individual.len() != bs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} individual ranks for {} blocks",
                self.individual.len(),
                bs.len()
            )));
        }
        let n = bs.nsamples();
        let p = bs.total_vars();
        if self.joint > p.min(n) {
            return Err(Error::RankOutOfRange {
                requested: self.joint,
                rows: p,
                cols: n,
            });
        }
        for (rank, block) in self.individual.iter().zip(bs.blocks()) {
            if *rank > block.nvars().min(n) {
                return Err(Error::RankOutOfRange {
                    requested: *rank,
                    rows: block.nvars(),
                    cols: n,
                });
            }
        }
        let max_individual = self.individual.iter().copied().max().unwrap_or(0);
        if self.joint + max_individual > n - 1 {
            return Err(Error::InvalidInput(format!(
                "joint rank {} plus largest individual rank {} must stay below n = {}",
                self.joint, max_individual, n
            )));
        }
        Ok(())
    }
}

/// Knobs for the alternating fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecomposeOptions {
    /// Stop when the relative change of the squared residual drops below
    /// this.
    pub tol: f64,
    pub max_iter: usize,
    /// Project individual score rows onto the orthogonal complement of the
    /// joint score rows (the identifiability constraint). Disable only for
    /// fidelity experiments.
    pub orthogonalize: bool,
    /// Subtract the current individual estimate from the original block each
    /// iteration. The alternative (subtracting from the running working
    /// matrix) accumulates the subtraction and is kept as a fidelity mode.
    pub subtract_from_original: bool,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            // Tight enough that the joint structure is stale by less than
            // the energy-identity tolerance when the loop exits; the extra
            // iterations this costs are in the single digits.
            tol: 1e-10,
            max_iter: 500,
            orthogonalize: true,
            subtract_from_original: true,
        }
    }
}

/// A requested rank that had to shrink because the matrix it was fit to had
/// lower numerical rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankTruncation {
    /// `None` for the joint structure, `Some(m)` for block m (0-based).
    pub block: Option<usize>,
    pub requested: usize,
    pub effective: usize,
}

/// Fitted joint and individual structures.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Joint score rows Z (r_eff x n), orthonormal.
    pub joint_scores: DMatrix<f64>,
    /// Joint loadings W (p x r_eff), blocks stacked in order.
    pub joint_loadings: DMatrix<f64>,
    /// Per-block individual score rows Z_m (r_m_eff x n), orthonormal.
    pub individual_scores: Vec<DMatrix<f64>>,
    /// Per-block individual loadings V_m (p_m x r_m_eff).
    pub individual_loadings: Vec<DMatrix<f64>>,
    /// Final squared reconstruction error.
    pub residual_sq: f64,
    /// Squared reconstruction error after every iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The ranks that were asked for.
    pub requested_ranks: Ranks,
    /// Rank reductions forced by degenerate inputs, if any.
    pub truncations: Vec<RankTruncation>,
    /// Row offsets of each block inside the concatenated loading matrix.
    pub block_offsets: Vec<usize>,
    /// Labels of the blocks, in order.
    pub block_labels: Vec<String>,
    options: DecomposeOptions,
}

impl Decomposition {
    /// Effective joint rank (after any truncation).
    pub fn joint_rank(&self) -> usize {
        self.joint_scores.nrows()
    }

    /// Effective individual rank of block m.
    pub fn individual_rank(&self, m: usize) -> usize {
        self.individual_scores[m].nrows()
    }

    /// Number of blocks.
    pub fn nblocks(&self) -> usize {
        self.individual_scores.len()
    }

    pub fn options(&self) -> &DecomposeOptions {
        &self.options
    }

    /// W_m: the rows of the joint loading matrix belonging to block m.
    pub fn joint_loadings_for_block(&self, m: usize) -> DMatrix<f64> {
        let rows = self.block_offsets[m + 1] - self.block_offsets[m];
        self.joint_loadings
            .rows(self.block_offsets[m], rows)
            .into_owned()
    }
}

const EXACT_FIT_REL: f64 = 1e-15;
const RANK_TRUNCATION_REL: f64 = 1e-12;

/// Alternating estimation of the joint and individual structures.
///
/// Blocks are used as given; apply [`crate::matrix::Preprocess`] first if
/// centering or scaling is wanted. Non-convergence within `max_iter` is not
/// an error: the result comes back with `converged = false`.
pub fn jic_decompose(
    bs: &BlockSet,
    ranks: &Ranks,
    opts: &DecomposeOptions,
) -> Result<Decomposition> {
    ranks.validate(bs)?;
    let n = bs.nsamples();
    let p = bs.total_vars();
    let m_blocks = bs.len();
    let offsets = bs.row_offsets();

    let originals: Vec<&DMatrix<f64>> = bs.blocks().iter().map(|b| b.data()).collect();
    let total_sq: f64 = originals.iter().map(|x| x.norm_squared()).sum();
    // Singular values below this share of the data scale are treated as
    // numerically zero when deciding effective ranks.
    let joint_cutoff = RANK_TRUNCATION_REL * total_sq.sqrt();
    let block_cutoffs: Vec<f64> = originals
        .iter()
        .map(|x| RANK_TRUNCATION_REL * x.norm())
        .collect();

    let mut working: Vec<DMatrix<f64>> = originals.iter().map(|&x| x.clone()).collect();
    let mut joint_scores = DMatrix::zeros(0, n);
    let mut joint_loadings = DMatrix::zeros(p, 0);
    let mut individual_scores: Vec<DMatrix<f64>> =
        (0..m_blocks).map(|_| DMatrix::zeros(0, n)).collect();
    let mut individual_loadings: Vec<DMatrix<f64>> = bs
        .blocks()
        .iter()
        .map(|b| DMatrix::zeros(b.nvars(), 0))
        .collect();

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut joint_effective = ranks.joint;
    let mut individual_effective: Vec<usize> = ranks.individual.clone();

    while iterations < opts.max_iter {
        iterations += 1;

        // Joint step: best rank-r fit to the concatenated working matrix.
        if ranks.joint > 0 {
            let mut concat = DMatrix::zeros(p, n);
            for (m, w) in working.iter().enumerate() {
                concat
                    .view_mut((offsets[m], 0), (w.nrows(), n))
                    .copy_from(w);
            }
            let svd = truncated_svd(&concat, ranks.joint)?;
            let eff = svd.s.iter().take_while(|&&v| v > joint_cutoff).count();
            let svd = svd.truncate(eff);
            joint_effective = svd.rank();
            joint_scores = svd.vt.clone();
            joint_loadings = {
                let mut u = svd.u.clone();
                for (j, mut col) in u.column_iter_mut().enumerate() {
                    col *= svd.s[j];
                }
                u
            };
        }

        // Individual step per block, then refresh the working matrix.
        let mut residual_sq = 0.0;
        for m in 0..m_blocks {
            let w_m = joint_loadings.rows(offsets[m], originals[m].nrows());
            let joint_part = if joint_effective > 0 {
                w_m * &joint_scores
            } else {
                DMatrix::zeros(originals[m].nrows(), n)
            };
            let base = if opts.subtract_from_original {
                originals[m]
            } else {
                &working[m]
            };
            let residual = base - &joint_part;

            if ranks.individual[m] > 0 {
                // Project the residual's columns onto the orthogonal
                // complement of the joint score rows before fitting, which
                // is exactly the constrained least-squares step and keeps
                // Z Z_m^T = 0 at every iterate.
                let projected = if opts.orthogonalize && joint_effective > 0 {
                    &residual - (&residual * joint_scores.transpose()) * &joint_scores
                } else {
                    residual.clone()
                };
                let svd = truncated_svd(&projected, ranks.individual[m])?;
                let eff = svd.s.iter().take_while(|&&v| v > block_cutoffs[m]).count();
                let svd = svd.truncate(eff);
                individual_effective[m] = svd.rank();
                individual_scores[m] = svd.vt.clone();
                // Least-squares loadings against the (unprojected) residual;
                // identical to the projected fit when Z_m is orthogonal to Z.
                individual_loadings[m] = &residual * individual_scores[m].transpose();
            }

            let individual_part = if individual_effective[m] > 0 {
                &individual_loadings[m] * &individual_scores[m]
            } else {
                DMatrix::zeros(originals[m].nrows(), n)
            };
            if opts.subtract_from_original {
                working[m] = originals[m] - &individual_part;
            } else {
                working[m] -= &individual_part;
            }
            residual_sq += (originals[m] - &joint_part - &individual_part).norm_squared();
        }

        let prev = history.last().copied();
        history.push(residual_sq);

        if residual_sq <= EXACT_FIT_REL * total_sq {
            converged = true;
            break;
        }
        if let Some(prev) = prev {
            if (prev - residual_sq).abs() < opts.tol * prev {
                converged = true;
                break;
            }
        }
    }

    let mut truncations = Vec::new();
    if joint_effective < ranks.joint {
        truncations.push(RankTruncation {
            block: None,
            requested: ranks.joint,
            effective: joint_effective,
        });
    }
    for m in 0..m_blocks {
        if individual_effective[m] < ranks.individual[m] {
            truncations.push(RankTruncation {
                block: Some(m),
                requested: ranks.individual[m],
                effective: individual_effective[m],
            });
        }
    }

    Ok(Decomposition {
        joint_scores,
        joint_loadings,
        individual_scores,
        individual_loadings,
        residual_sq: history.last().copied().unwrap_or(total_sq),
        history,
        iterations,
        converged,
        requested_ranks: ranks.clone(),
        truncations,
        block_offsets: offsets,
        block_labels: bs.blocks().iter().map(|b| b.label().to_string()).collect(),
        options: *opts,
    })
}

/// Sum over blocks of the squared Frobenius residual of the fitted model,
/// computed entry by entry against the given block set.
pub fn reconstruction_error(bs: &BlockSet, d: &Decomposition) -> Result<f64> {
    if bs.len() != d.nblocks() || bs.nsamples() != d.joint_scores.ncols() {
        return Err(Error::DimensionMismatch(
            "block set does not match the decomposition".into(),
        ));
    }
    let n = bs.nsamples();
    let mut total = 0.0;
    for (m, block) in bs.blocks().iter().enumerate() {
        if block.nvars() != d.block_offsets[m + 1] - d.block_offsets[m] {
            return Err(Error::DimensionMismatch(format!(
                "block '{}' has {} variables, decomposition expects {}",
                block.label(),
                block.nvars(),
                d.block_offsets[m + 1] - d.block_offsets[m]
            )));
        }
        let w_m = d.joint_loadings_for_block(m);
        let joint = if d.joint_rank() > 0 {
            &w_m * &d.joint_scores
        } else {
            DMatrix::zeros(block.nvars(), n)
        };
        let indiv = if d.individual_rank(m) > 0 {
            &d.individual_loadings[m] * &d.individual_scores[m]
        } else {
            DMatrix::zeros(block.nvars(), n)
        };
        total += (block.data() - joint - indiv).norm_squared();
    }
    Ok(total)
}

/// Per-clustering diagnostics carried alongside the labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub wss: f64,
    pub restarts: usize,
}

/// Joint and per-block cluster assignments of the samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResult {
    /// n labels in 1..=(r+1).
    pub joint_labels: Vec<usize>,
    /// One label vector per block, each in 1..=(r_m+1).
    pub individual_labels: Vec<Vec<usize>>,
    pub joint_diagnostics: ClusterDiagnostics,
    pub individual_diagnostics: Vec<ClusterDiagnostics>,
}

/// Cluster the sample columns of the fitted score matrices: joint scores
/// into r+1 groups, block m's scores into r_m+1 groups. A rank of zero
/// yields the all-ones labeling. The joint clustering uses `seed` directly;
/// block m uses a stream derived from it, so results are deterministic.
pub fn cluster_decomposition(
    d: &Decomposition,
    restarts: usize,
    seed: u64,
) -> Result<ClusterResult> {
    let n = d.joint_scores.ncols();
    let (joint_labels, joint_diagnostics) = cluster_scores(&d.joint_scores, n, restarts, seed)?;
    let mut individual_labels = Vec::with_capacity(d.nblocks());
    let mut individual_diagnostics = Vec::with_capacity(d.nblocks());
    for m in 0..d.nblocks() {
        let (labels, diag) = cluster_scores(
            &d.individual_scores[m],
            n,
            restarts,
            derive_seed(seed, m as u64 + 1),
        )?;
        individual_labels.push(labels);
        individual_diagnostics.push(diag);
    }
    Ok(ClusterResult {
        joint_labels,
        individual_labels,
        joint_diagnostics,
        individual_diagnostics,
    })
}

fn cluster_scores(
    scores: &DMatrix<f64>,
    n: usize,
    restarts: usize,
    seed: u64,
) -> Result<(Vec<usize>, ClusterDiagnostics)> {
    let r = scores.nrows();
    if r == 0 {
        return Ok((
            vec![1; n],
            ClusterDiagnostics {
                wss: 0.0,
                restarts: 0,
            },
        ));
    }
    let fit = kmeans(&scores.transpose(), r + 1, restarts, 200, seed)?;
    let labels = canonical_labels(&fit.labels);
    Ok((
        labels,
        ClusterDiagnostics {
            wss: fit.wss,
            restarts: fit.restarts_used,
        },
    ))
}

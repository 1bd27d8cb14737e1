//! Block-matrix container, concatenation, scaling, and the truncated SVD
//! used everywhere else.
//!
//! Matrices are oriented variables x samples: a block holds `p_m` variables
//! measured on the shared `n` samples. All types are immutable after
//! construction and all operations are pure functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm used to put blocks on a common scale before integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleNorm {
    /// Frobenius norm of the block.
    Frobenius,
    /// Frobenius norm after row-centering, i.e. the square root of the total
    /// variance summed over variables.
    TotalVariance,
}

/// One data block: `p_m` variables (rows) by `n` samples (columns).
#[derive(Debug, Clone)]
pub struct Block {
    data: DMatrix<f64>,
    label: String,
    scale_factor: f64,
}

impl Block {
    /// Build a block, validating shape and finiteness. `scale_factor`
    /// starts at 1.0 (unscaled).
    pub fn new(data: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::DimensionMismatch(
                "block must have at least one variable (row)".into(),
            ));
        }
        if data.ncols() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "block must have at least two samples (columns), got {}",
                data.ncols()
            )));
        }
        let label = label.into();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("block '{label}'")));
        }
        Ok(Self {
            data,
            label,
            scale_factor: 1.0,
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The norm divided out of the data so far; multiplying the data by this
    /// recovers the block as it was before scaling.
    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    /// Number of variables.
    pub fn nvars(&self) -> usize {
        self.data.nrows()
    }

    /// Number of samples.
    pub fn nsamples(&self) -> usize {
        self.data.ncols()
    }

    /// Replace the data while keeping label and scale state. Internal helper
    /// for centering.
    fn with_data(&self, data: DMatrix<f64>) -> Self {
        Self {
            data,
            label: self.label.clone(),
            scale_factor: self.scale_factor,
        }
    }
}

/// Divide a block by the chosen norm so it has unit size under that norm.
///
/// The divisor is folded into `scale_factor`, so `data * scale_factor`
/// still recovers the original data. Scaling an already unit-norm block is
/// a no-op up to floating tolerance.
pub fn scale_block(block: &Block, norm: ScaleNorm) -> Result<Block> {
    let value = match norm {
        ScaleNorm::Frobenius => block.data.norm(),
        ScaleNorm::TotalVariance => center_rows(&block.data).norm(),
    };
    if !(value > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "block '{}' has zero {:?} norm; cannot scale",
            block.label, norm
        )));
    }
    Ok(Block {
        data: &block.data / value,
        label: block.label.clone(),
        scale_factor: block.scale_factor * value,
    })
}

/// Subtract each row's mean so every variable has mean zero across samples.
pub fn center_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols() as f64;
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / n;
        row.add_scalar_mut(-mean);
    }
    out
}

/// Preprocessing applied to every block before decomposition or selection.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Preprocess {
    /// Row-center each block (variable means zero).
    pub center: bool,
    /// Norm to scale each block by, if any.
    pub scale: Option<ScaleNorm>,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            center: true,
            scale: Some(ScaleNorm::Frobenius),
        }
    }
}

impl Preprocess {
    pub fn none() -> Self {
        Self {
            center: false,
            scale: None,
        }
    }

    /// Apply centering then scaling to every block of a set.
    pub fn apply(&self, bs: &BlockSet) -> Result<BlockSet> {
        let mut blocks = Vec::with_capacity(bs.blocks.len());
        for b in &bs.blocks {
            let mut out = if self.center {
                b.with_data(center_rows(&b.data))
            } else {
                b.clone()
            };
            if let Some(norm) = self.scale {
                out = scale_block(&out, norm)?;
            }
            blocks.push(out);
        }
        BlockSet::new(blocks, bs.sample_ids.clone())
    }
}

/// An ordered collection of blocks sharing the same sample axis.
#[derive(Debug, Clone)]
pub struct BlockSet {
    blocks: Vec<Block>,
    sample_ids: Option<Vec<String>>,
}

impl BlockSet {
    pub fn new(blocks: Vec<Block>, sample_ids: Option<Vec<String>>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidInput("a block set needs at least one block".into()))?;
        let n = first.nsamples();
        for b in &blocks {
            if b.nsamples() != n {
                return Err(Error::DimensionMismatch(format!(
                    "block '{}' has {} samples but block '{}' has {}",
                    b.label,
                    b.nsamples(),
                    first.label,
                    n
                )));
            }
        }
        if let Some(ids) = &sample_ids {
            if ids.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} sample ids for {} samples",
                    ids.len(),
                    n
                )));
            }
        }
        Ok(Self { blocks, sample_ids })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn sample_ids(&self) -> Option<&[String]> {
        self.sample_ids.as_deref()
    }

    /// Number of blocks M.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Shared sample count n.
    pub fn nsamples(&self) -> usize {
        self.blocks[0].nsamples()
    }

    /// Total variable count p across blocks.
    pub fn total_vars(&self) -> usize {
        self.blocks.iter().map(Block::nvars).sum()
    }

    /// Row offset of each block inside the concatenated matrix, plus the
    /// total as a final entry.
    pub fn row_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.blocks.len() + 1);
        let mut acc = 0;
        offs.push(0);
        for b in &self.blocks {
            acc += b.nvars();
            offs.push(acc);
        }
        offs
    }
}

/// Stack the blocks of a set into a single (sum of p_m) x n matrix, block m
/// occupying the contiguous row slice at its offset.
pub fn concat_blocks(bs: &BlockSet) -> DMatrix<f64> {
    let p = bs.total_vars();
    let n = bs.nsamples();
    let mut out = DMatrix::zeros(p, n);
    let mut row = 0;
    for b in bs.blocks() {
        out.view_mut((row, 0), (b.nvars(), n)).copy_from(&b.data);
        row += b.nvars();
    }
    out
}

/// Split a concatenated matrix back into per-block pieces at the offsets of
/// `bs`. Inverse of [`concat_blocks`].
pub fn split_blocks(bs: &BlockSet, concat: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    if concat.nrows() != bs.total_vars() || concat.ncols() != bs.nsamples() {
        return Err(Error::DimensionMismatch(format!(
            "cannot split a {}x{} matrix at offsets of a {}x{} block set",
            concat.nrows(),
            concat.ncols(),
            bs.total_vars(),
            bs.nsamples()
        )));
    }
    let offs = bs.row_offsets();
    Ok(bs
        .blocks()
        .iter()
        .enumerate()
        .map(|(m, b)| concat.rows(offs[m], b.nvars()).into_owned())
        .collect())
}

/// Rank-r singular value decomposition: `u * diag(s) * vt` is the best
/// rank-r approximation of the input in Frobenius norm.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// p x r, orthonormal columns.
    pub u: DMatrix<f64>,
    /// r singular values, nonincreasing, nonnegative.
    pub s: DVector<f64>,
    /// r x n, orthonormal rows.
    pub vt: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `u * diag(s) * vt`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.s[j];
        }
        &scaled * &self.vt
    }

    /// Count of singular values above `rel_tol * s[0]` (numerical rank of
    /// the truncation).
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let s0 = self.s.get(0).copied().unwrap_or(0.0);
        if s0 <= 0.0 {
            return 0;
        }
        self.s.iter().take_while(|&&v| v > rel_tol * s0).count()
    }

    /// Drop trailing factors, keeping the first `r`.
    pub fn truncate(mut self, r: usize) -> Self {
        if r < self.rank() {
            self.u = self.u.columns(0, r).into_owned();
            self.s = self.s.rows(0, r).into_owned();
            self.vt = self.vt.rows(0, r).into_owned();
        }
        self
    }
}

/// Compute the rank-r truncated SVD of a dense matrix.
///
/// Goes through the Gram matrix of the smaller side and a symmetric
/// eigendecomposition, which is much cheaper than a full SVD when one
/// dimension dominates (the usual variables >> samples case). The side
/// derived by back-multiplication is re-orthonormalized, so both factors are
/// orthonormal to machine precision even when trailing singular values
/// vanish (vanished directions are completed with an arbitrary deterministic
/// orthonormal basis; their singular value is 0 so the reconstruction is
/// unaffected).
///
/// Sign convention: each (u_i, v_i) pair is flipped so that the entry of
/// largest absolute value in v_i is positive, making outputs deterministic
/// across runs and platforms.
pub fn truncated_svd(x: &DMatrix<f64>, r: usize) -> Result<TruncatedSvd> {
    let (p, n) = x.shape();
    if r == 0 || r > p.min(n) {
        return Err(Error::RankOutOfRange {
            requested: r,
            rows: p,
            cols: n,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("truncated_svd input".into()));
    }

    let (mut u, s, mut vt);
    if n <= p {
        let gram = x.tr_mul(x); // n x n
        let (values, vectors) = sorted_symmetric_eigen(gram);
        let sigmas: Vec<f64> = values.iter().take(r).map(|&l| l.max(0.0).sqrt()).collect();
        let v = vectors.columns(0, r).into_owned(); // n x r
        vt = v.transpose();
        // u_i = x v_i / sigma_i, then re-orthonormalize.
        u = x * &v;
        divide_columns(&mut u, &sigmas);
        orthonormalize_columns(&mut u);
        s = DVector::from_vec(sigmas);
    } else {
        let gram = x * x.transpose(); // p x p
        let (values, vectors) = sorted_symmetric_eigen(gram);
        let sigmas: Vec<f64> = values.iter().take(r).map(|&l| l.max(0.0).sqrt()).collect();
        u = vectors.columns(0, r).into_owned(); // p x r
                                                // vt_i = u_i^T x / sigma_i, then re-orthonormalize.
        let mut v = x.tr_mul(&u); // n x r
        divide_columns(&mut v, &sigmas);
        orthonormalize_columns(&mut v);
        vt = v.transpose();
        s = DVector::from_vec(sigmas);
    }

    apply_sign_convention(&mut u, &mut vt);
    Ok(TruncatedSvd { u, s, vt })
}

/// Standardized principal component scores: the `vt` factor of the rank-r
/// truncated SVD, one component per row, samples along columns, rows
/// orthonormal.
pub fn pc_scores(x: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    Ok(truncated_svd(x, r)?.vt)
}

/// Symmetric eigendecomposition with eigenpairs sorted by descending
/// eigenvalue (ties broken by original index, so the result is
/// deterministic).
fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let dim = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

fn divide_columns(m: &mut DMatrix<f64>, sigmas: &[f64]) {
    let cutoff = sigmas.first().copied().unwrap_or(0.0) * 1e-12;
    for (j, mut col) in m.column_iter_mut().enumerate() {
        if sigmas[j] > cutoff && sigmas[j] > 0.0 {
            col /= sigmas[j];
        } else {
            // Rank-deficient direction: zero it out, completion happens in
            // the orthonormalization pass.
            col.fill(0.0);
        }
    }
}

/// Two-pass modified Gram-Schmidt. Columns that vanish (rank deficiency)
/// are replaced by the first standard basis vector orthogonal to the ones
/// already kept.
fn orthonormalize_columns(m: &mut DMatrix<f64>) {
    let (rows, cols) = m.shape();
    for j in 0..cols {
        for _pass in 0..2 {
            for k in 0..j {
                let proj = m.column(j).dot(&m.column(k));
                let prev = m.column(k).into_owned();
                let mut col = m.column_mut(j);
                col.axpy(-proj, &prev, 1.0);
            }
        }
        let norm = m.column(j).norm();
        if norm > 1e-8 {
            m.column_mut(j).scale_mut(1.0 / norm);
        } else {
            // Deterministic completion from standard basis vectors.
            let mut replaced = false;
            for basis in 0..rows {
                let mut cand = DVector::zeros(rows);
                cand[basis] = 1.0;
                for k in 0..j {
                    let proj = cand.dot(&m.column(k).into_owned());
                    cand.axpy(-proj, &m.column(k).into_owned(), 1.0);
                }
                let cn = cand.norm();
                if cn > 0.5 {
                    cand /= cn;
                    m.set_column(j, &cand);
                    replaced = true;
                    break;
                }
            }
            if !replaced {
                // Cannot happen for j < rows; keep zeros as a last resort.
                m.column_mut(j).fill(0.0);
            }
        }
    }
}

fn apply_sign_convention(u: &mut DMatrix<f64>, vt: &mut DMatrix<f64>) {
    for i in 0..vt.nrows() {
        let row = vt.row(i);
        let mut best_idx = 0;
        let mut best_abs = 0.0;
        for (j, &v) in row.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best_idx = j;
            }
        }
        if best_abs > 0.0 && vt[(i, best_idx)] < 0.0 {
            vt.row_mut(i).neg_mut();
            u.column_mut(i).neg_mut();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(p: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(p, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0)
    }

    fn block(data: DMatrix<f64>, label: &str) -> Block {
        Block::new(data, label).unwrap()
    }

    #[test]
    fn concat_stacks_two_rows() {
        let bs = BlockSet::new(
            vec![
                block(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), "a"),
                block(DMatrix::from_row_slice(1, 2, &[3.0, 4.0]), "b"),
            ],
            None,
        )
        .unwrap();
        let x = concat_blocks(&bs);
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn concat_single_block_is_identity() {
        let data = random_matrix(3, 4, 1);
        let bs = BlockSet::new(vec![block(data.clone(), "a")], None).unwrap();
        assert_eq!(concat_blocks(&bs), data);
    }

    #[test]
    fn concat_three_200x150_blocks() {
        let bs = BlockSet::new(
            (0..3)
                .map(|m| block(random_matrix(200, 150, m as u64), &format!("b{m}")))
                .collect(),
            None,
        )
        .unwrap();
        let x = concat_blocks(&bs);
        assert_eq!(x.shape(), (600, 150));
    }

    #[test]
    fn concat_then_split_is_lossless() {
        let bs = BlockSet::new(
            vec![
                block(random_matrix(5, 7, 2), "a"),
                block(random_matrix(3, 7, 3), "b"),
                block(random_matrix(1, 7, 4), "c"),
            ],
            None,
        )
        .unwrap();
        let x = concat_blocks(&bs);
        let parts = split_blocks(&bs, &x).unwrap();
        for (part, b) in parts.iter().zip(bs.blocks()) {
            assert_eq!(part, b.data());
        }
    }

    #[test]
    fn mismatched_sample_counts_rejected() {
        let result = BlockSet::new(
            vec![
                block(random_matrix(2, 4, 5), "a"),
                block(random_matrix(2, 5, 6), "b"),
            ],
            None,
        );
        assert!(matches!(result, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn scale_block_three_four_five() {
        let b = block(DMatrix::from_row_slice(1, 2, &[3.0, 4.0]), "t");
        let scaled = scale_block(&b, ScaleNorm::Frobenius).unwrap();
        assert_relative_eq!(scaled.data()[(0, 0)], 0.6, epsilon = 1e-15);
        assert_relative_eq!(scaled.data()[(0, 1)], 0.8, epsilon = 1e-15);
        assert_relative_eq!(scaled.scale_factor(), 5.0, epsilon = 1e-15);
    }

    #[test]
    fn scale_block_is_idempotent() {
        let b = block(random_matrix(4, 6, 7), "t");
        let once = scale_block(&b, ScaleNorm::Frobenius).unwrap();
        let twice = scale_block(&once, ScaleNorm::Frobenius).unwrap();
        assert_relative_eq!(once.data().norm(), 1.0, epsilon = 1e-12);
        assert!((once.data() - twice.data()).amax() < 1e-12);
    }

    #[test]
    fn scale_block_unit_norm_and_invertible() {
        let b = block(random_matrix(10, 5, 8), "t");
        let scaled = scale_block(&b, ScaleNorm::Frobenius).unwrap();
        assert!((scaled.data().norm() - 1.0).abs() < 1e-12);
        let recovered = scaled.data() * scaled.scale_factor();
        assert!((recovered - b.data()).amax() < 1e-12);
    }

    #[test]
    fn scale_block_zero_matrix_is_degenerate() {
        let b = block(DMatrix::zeros(2, 3), "z");
        assert!(matches!(
            scale_block(&b, ScaleNorm::Frobenius),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn total_variance_ignores_row_means() {
        let mut data = random_matrix(4, 6, 9);
        let centered_norm = center_rows(&data).norm();
        for mut row in data.row_iter_mut() {
            row.add_scalar_mut(100.0);
        }
        let b = block(data, "t");
        let scaled = scale_block(&b, ScaleNorm::TotalVariance).unwrap();
        assert_relative_eq!(scaled.scale_factor(), centered_norm, epsilon = 1e-9);
    }

    #[test]
    fn svd_of_diagonal_matrix() {
        let x = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let svd = truncated_svd(&x, 2).unwrap();
        assert_relative_eq!(svd.s[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(svd.s[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn svd_recovers_rank_one_exactly() {
        let a = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let b = DVector::from_vec(vec![2.0, 1.0, -1.0]);
        let x = &a * b.transpose();
        let svd = truncated_svd(&x, 1).unwrap();
        assert!((svd.reconstruct() - &x).norm() < 1e-12 * x.norm());
    }

    #[test]
    fn svd_rank_out_of_range() {
        let x = random_matrix(4, 3, 10);
        assert!(matches!(
            truncated_svd(&x, 4),
            Err(Error::RankOutOfRange { .. })
        ));
        assert!(matches!(
            truncated_svd(&x, 0),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut x = random_matrix(3, 3, 11);
        x[(1, 1)] = f64::NAN;
        assert!(matches!(truncated_svd(&x, 1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn svd_beats_random_rank_r_candidates() {
        // Eckart-Young check against 100 random rank-r candidates per rank.
        let x = random_matrix(20, 15, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for r in [1usize, 3, 5] {
            let svd = truncated_svd(&x, r).unwrap();
            let best = (&x - svd.reconstruct()).norm();
            for _ in 0..100 {
                let a = DMatrix::from_fn(20, r, |_, _| rng.gen::<f64>() - 0.5);
                let b = DMatrix::from_fn(r, 15, |_, _| rng.gen::<f64>() - 0.5);
                // Scale the candidate to the least-squares optimum along its
                // own direction so the comparison is not a strawman.
                let cand = &a * &b;
                let scale = x.dot(&cand) / cand.dot(&cand);
                let resid = (&x - cand * scale).norm();
                assert!(best <= resid + 1e-12);
            }
        }
    }

    #[test]
    fn svd_residual_orthogonal_to_approximation() {
        let x = random_matrix(12, 9, 13);
        let svd = truncated_svd(&x, 4).unwrap();
        let approx_m = svd.reconstruct();
        let resid = &x - &approx_m;
        assert!(resid.dot(&approx_m).abs() < 1e-8 * x.norm_squared());
    }

    #[test]
    fn svd_handles_requested_rank_beyond_numerical_rank() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let x = &a * b.transpose(); // rank 1
        let svd = truncated_svd(&x, 3).unwrap();
        // The Gram route resolves vanished singular values to about
        // sqrt(machine eps) relative, not machine eps.
        assert!(svd.s[1] < 1e-7 * svd.s[0], "s = {:?}", svd.s);
        assert_eq!(svd.numerical_rank(1e-6), 1);
        // Factors stay orthonormal even for the padded directions.
        let utu = svd.u.tr_mul(&svd.u);
        let vvt = &svd.vt * svd.vt.transpose();
        assert!((utu - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!((vvt - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn pc_scores_rows_orthonormal_r1() {
        let x = random_matrix(6, 8, 14);
        let z = pc_scores(&x, 1).unwrap();
        let zzt = &z * z.transpose();
        assert_relative_eq!(zzt[(0, 0)], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn pc_scores_sign_separates_two_column_groups() {
        // Two well-separated column groups; the first score's sign splits
        // them. Verified by exhaustive label check on both sign patterns.
        let mut x = DMatrix::zeros(5, 8);
        for j in 0..4 {
            for i in 0..5 {
                x[(i, j)] = 10.0 + 0.01 * ((i * 7 + j * 3) % 5) as f64;
            }
        }
        for j in 4..8 {
            for i in 0..5 {
                x[(i, j)] = -10.0 + 0.01 * ((i * 5 + j) % 7) as f64;
            }
        }
        let z = pc_scores(&center_rows(&x), 1).unwrap();
        let signs: Vec<bool> = z.row(0).iter().map(|&v| v > 0.0).collect();
        let split_a = signs[..4].iter().all(|&s| s) && signs[4..].iter().all(|&s| !s);
        let split_b = signs[..4].iter().all(|&s| !s) && signs[4..].iter().all(|&s| s);
        assert!(
            split_a || split_b,
            "sign pattern {signs:?} does not split groups"
        );
    }

    #[test]
    fn svd_deterministic_sign_convention() {
        let x = random_matrix(9, 7, 15);
        let a = truncated_svd(&x, 3).unwrap();
        let b = truncated_svd(&x, 3).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.vt, b.vt);
        for i in 0..3 {
            let row = a.vt.row(i);
            let max = row.iter().cloned().fold(0.0f64, |acc, v| acc.max(v.abs()));
            assert!(row.iter().any(|&v| v == max));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prop_svd_factors_orthonormal(seed in 0u64..1000, p in 2usize..12, n in 2usize..12) {
            let r = 1 + (seed as usize) % p.min(n);
            let x = random_matrix(p, n, seed);
            let svd = truncated_svd(&x, r).unwrap();
            let utu = svd.u.tr_mul(&svd.u);
            let vvt = &svd.vt * svd.vt.transpose();
            prop_assert!((utu - DMatrix::identity(r, r)).amax() < 1e-8);
            prop_assert!((vvt - DMatrix::identity(r, r)).amax() < 1e-8);
            for i in 1..r {
                prop_assert!(svd.s[i] <= svd.s[i - 1] + 1e-12);
            }
        }

        #[test]
        fn prop_scale_then_unscale_roundtrips(seed in 0u64..1000) {
            let b = block(random_matrix(3, 5, seed) + DMatrix::repeat(3, 5, 0.5), "t");
            let scaled = scale_block(&b, ScaleNorm::Frobenius).unwrap();
            let back = scaled.data() * scaled.scale_factor();
            prop_assert!((back - b.data()).amax() < 1e-10 * b.data().amax().max(1.0));
        }
    }
}

//! Lloyd's k-means with k-means++ seeding and restarts, plus an exhaustive
//! small-instance oracle used by the test suites.
//!
//! Points are rows of an n x d matrix. Labels are 1-based and canonically
//! renumbered by first occurrence, so identical partitions always get
//! identical label vectors.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::derive_seed;

/// Result of one clustering: best of all restarts.
#[derive(Debug, Clone)]
pub struct KmeansFit {
    /// n labels in 1..=K, renumbered by first occurrence.
    pub labels: Vec<usize>,
    /// K x d centroid matrix, row k-1 is the centroid of cluster k.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares of the returned labeling.
    pub wss: f64,
    /// Number of restarts that were run.
    pub restarts_used: usize,
    /// Derived PRNG seed of the winning restart (0 for the exact oracle).
    pub best_restart_seed: u64,
}

/// Best-of-`restarts` Lloyd runs with k-means++ seeding.
///
/// Each restart draws from an independent deterministic stream derived from
/// `seed`, iterates until the assignment is stable or `max_iter` is hit, and
/// repairs emptied clusters by claiming the point farthest from its centroid.
/// Ties in assignment go to the lowest centroid index. Identical inputs give
/// identical output.
pub fn kmeans(
    points: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Result<KmeansFit> {
    let n = points.nrows();
    validate_points(points, k)?;
    if restarts == 0 {
        return Err(Error::InvalidInput(
            "kmeans needs at least one restart".into(),
        ));
    }

    if k == 1 {
        let centroids = mean_rows(points);
        let wss = (0..n).map(|i| row_dist2(points, i, &centroids, 0)).sum();
        return Ok(KmeansFit {
            labels: vec![1; n],
            centroids,
            wss,
            restarts_used: restarts,
            best_restart_seed: derive_seed(seed, 0),
        });
    }

    let mut best: Option<(f64, Vec<usize>, DMatrix<f64>, u64)> = None;
    for restart in 0..restarts {
        let restart_seed = derive_seed(seed, restart as u64);
        let (labels, centroids, wss) = lloyd_once(points, k, max_iter, restart_seed);
        let better = match &best {
            None => true,
            Some((best_wss, ..)) => wss < *best_wss,
        };
        if better {
            best = Some((wss, labels, centroids, restart_seed));
        }
    }
    let (wss, labels, _, best_restart_seed) = best.unwrap();
    let labels = canonical_labels(&labels);
    let centroids = centroids_for(points, &labels, k);
    Ok(KmeansFit {
        labels,
        centroids,
        wss,
        restarts_used: restarts,
        best_restart_seed,
    })
}

/// Exact global minimum of the k-means objective by enumerating every
/// partition of the points into exactly K nonempty clusters.
///
/// Refuses instances where the number of partitions into at most K parts
/// exceeds 10^6 (roughly n <= 12 with K <= 4).
pub fn brute_force_kmeans(points: &DMatrix<f64>, k: usize) -> Result<KmeansFit> {
    let n = points.nrows();
    validate_points(points, k)?;
    let count = partitions_up_to(n, k);
    if count > 1_000_000 {
        return Err(Error::InstanceTooLarge(format!(
            "{count} partitions of {n} points into <= {k} parts (limit 10^6)"
        )));
    }

    let d = points.ncols();
    // Per-cluster accumulators: count, coordinate sums, squared norms.
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0f64; d]; k];
    let mut sq = vec![0.0f64; k];
    let mut assignment = vec![0usize; n];
    let mut best_wss = f64::INFINITY;
    let mut best_assignment = vec![0usize; n];

    // Restricted growth strings: assignment[i] <= max(assignment[..i]) + 1,
    // capped at k-1, exactly k distinct values at the leaves.
    fn recurse(
        i: usize,
        used: usize,
        points: &DMatrix<f64>,
        k: usize,
        counts: &mut [usize],
        sums: &mut [Vec<f64>],
        sq: &mut [f64],
        assignment: &mut [usize],
        best_wss: &mut f64,
        best_assignment: &mut [usize],
    ) {
        let n = points.nrows();
        let d = points.ncols();
        if i == n {
            if used == k {
                let wss: f64 = (0..k)
                    .map(|c| {
                        let norm2: f64 = sums[c].iter().map(|s| s * s).sum();
                        sq[c] - norm2 / counts[c] as f64
                    })
                    .sum();
                if wss < *best_wss {
                    *best_wss = wss;
                    best_assignment.copy_from_slice(assignment);
                }
            }
            return;
        }
        // Remaining points must still be able to fill all k clusters.
        if used + (n - i) < k {
            return;
        }
        let limit = (used + 1).min(k);
        for c in 0..limit {
            let newly = c == used;
            assignment[i] = c;
            counts[c] += 1;
            let mut pt_sq = 0.0;
            for j in 0..d {
                let v = points[(i, j)];
                sums[c][j] += v;
                pt_sq += v * v;
            }
            sq[c] += pt_sq;
            recurse(
                i + 1,
                if newly { used + 1 } else { used },
                points,
                k,
                counts,
                sums,
                sq,
                assignment,
                best_wss,
                best_assignment,
            );
            counts[c] -= 1;
            for j in 0..d {
                sums[c][j] -= points[(i, j)];
            }
            sq[c] -= pt_sq;
        }
    }

    recurse(
        0,
        0,
        points,
        k,
        &mut counts,
        &mut sums,
        &mut sq,
        &mut assignment,
        &mut best_wss,
        &mut best_assignment,
    );

    let labels = canonical_labels(&best_assignment);
    let centroids = centroids_for(points, &labels, k);
    let wss: f64 = (0..n)
        .map(|i| row_dist2(points, i, &centroids, labels[i] - 1))
        .sum();
    Ok(KmeansFit {
        labels,
        centroids,
        wss,
        restarts_used: 0,
        best_restart_seed: 0,
    })
}

/// The (K-1) x n matrix of scaled cluster indicator vectors: row k is
/// n_k^{-1/2} on the samples of cluster k and zero elsewhere; cluster K is
/// encoded by the all-zero column pattern. Rows have unit norm and disjoint
/// support, so they are orthonormal.
pub fn indicator_matrix(labels: &[usize], k: usize) -> Result<DMatrix<f64>> {
    let n = labels.len();
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l < 1 || l > k {
            return Err(Error::InvalidInput(format!("label {l} outside 1..={k}")));
        }
        counts[l - 1] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingCluster {
            missing: missing + 1,
            k,
        });
    }
    let mut z = DMatrix::zeros(k.saturating_sub(1), n);
    for (j, &l) in labels.iter().enumerate() {
        if l < k {
            z[(l - 1, j)] = (counts[l - 1] as f64).sqrt().recip();
        }
    }
    Ok(z)
}

/// Renumber labels so the first sample gets 1, the next new cluster 2, etc.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = Vec::new();
    let mut next = 0usize;
    labels
        .iter()
        .map(|&l| {
            if l >= map.len() {
                map.resize(l + 1, None);
            }
            *map[l].get_or_insert_with(|| {
                next += 1;
                next
            })
        })
        .collect()
}

fn validate_points(points: &DMatrix<f64>, k: usize) -> Result<()> {
    let n = points.nrows();
    if n == 0 || points.ncols() == 0 {
        return Err(Error::InvalidInput(
            "kmeans needs a nonempty point matrix".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidInput(format!(
            "K={k} exceeds the number of points n={n}"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kmeans points".into()));
    }
    Ok(())
}

fn lloyd_once(
    points: &DMatrix<f64>,
    k: usize,
    max_iter: usize,
    seed: u64,
) -> (Vec<usize>, DMatrix<f64>, f64) {
    let n = points.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeanspp_init(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    assign(points, &centroids, &mut labels);
    repair_empty(points, &centroids, &mut labels, k);

    let mut prev_wss = f64::INFINITY;
    for _ in 0..max_iter {
        centroids = centroids_for_zero_based(points, &labels, k);
        let mut new_labels = vec![0usize; n];
        assign(points, &centroids, &mut new_labels);
        repair_empty(points, &centroids, &mut new_labels, k);
        let wss: f64 = (0..n)
            .map(|i| row_dist2(points, i, &centroids, new_labels[i]))
            .sum();
        debug_assert!(
            wss <= prev_wss * (1.0 + 1e-12) + 1e-12,
            "Lloyd iteration increased wss: {prev_wss} -> {wss}"
        );
        let stable = new_labels == labels;
        labels = new_labels;
        prev_wss = wss;
        if stable {
            break;
        }
    }
    centroids = centroids_for_zero_based(points, &labels, k);
    let wss: f64 = (0..n)
        .map(|i| row_dist2(points, i, &centroids, labels[i]))
        .sum();
    (labels, centroids, wss)
}

fn kmeanspp_init(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroids = DMatrix::zeros(k, d);
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from(&points.row(first));
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| row_dist2(points, i, &centroids, 0))
        .collect();
    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &v) in dist2.iter().enumerate() {
                acc += v;
                if acc > target {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).copy_from(&points.row(chosen));
        for (i, v) in dist2.iter_mut().enumerate() {
            let nd = row_dist2(points, i, &centroids, c);
            if nd < *v {
                *v = nd;
            }
        }
    }
    centroids
}

/// Nearest-centroid assignment; exact distance ties go to the lowest index.
fn assign(points: &DMatrix<f64>, centroids: &DMatrix<f64>, labels: &mut [usize]) {
    let k = centroids.nrows();
    for i in 0..points.nrows() {
        let mut best = 0usize;
        let mut best_d = row_dist2(points, i, centroids, 0);
        for c in 1..k {
            let dist = row_dist2(points, i, centroids, c);
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        labels[i] = best;
    }
}

/// Give every empty cluster the point farthest from its current centroid,
/// taking points only from clusters that keep at least one member. Claimed
/// points move to distance zero from their new singleton centroid, so the
/// repair never increases the objective.
fn repair_empty(points: &DMatrix<f64>, centroids: &DMatrix<f64>, labels: &mut [usize], k: usize) {
    let n = points.nrows();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far_idx = None;
        let mut far_d = -1.0;
        for i in 0..n {
            if counts[labels[i]] < 2 {
                continue;
            }
            let dist = row_dist2(points, i, centroids, labels[i]);
            if dist > far_d {
                far_d = dist;
                far_idx = Some(i);
            }
        }
        match far_idx {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}

fn row_dist2(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    let d = points.ncols();
    let mut acc = 0.0;
    for j in 0..d {
        let diff = points[(i, j)] - centroids[(c, j)];
        acc += diff * diff;
    }
    acc
}

fn mean_rows(points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.nrows() as f64;
    let d = points.ncols();
    let mut m = DMatrix::zeros(1, d);
    for i in 0..points.nrows() {
        for j in 0..d {
            m[(0, j)] += points[(i, j)];
        }
    }
    m /= n;
    m
}

fn centroids_for_zero_based(points: &DMatrix<f64>, labels: &[usize], k: usize) -> DMatrix<f64> {
    let d = points.ncols();
    let mut centroids = DMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..d {
            centroids[(l, j)] += points[(i, j)];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for j in 0..d {
                centroids[(c, j)] *= inv;
            }
        }
    }
    centroids
}

fn centroids_for(points: &DMatrix<f64>, labels_one_based: &[usize], k: usize) -> DMatrix<f64> {
    let zero: Vec<usize> = labels_one_based.iter().map(|&l| l - 1).collect();
    centroids_for_zero_based(points, &zero, k)
}

/// Number of ways to partition n items into at most k nonempty parts
/// (sum of Stirling numbers of the second kind), saturating.
fn partitions_up_to(n: usize, k: usize) -> u64 {
    // s[j] = S(i, j) built row by row.
    let mut s = vec![0u64; k + 1];
    s[0] = 1; // S(0, 0)
    for _i in 1..=n {
        let mut next = vec![0u64; k + 1];
        for j in 1..=k {
            next[j] = (j as u64).saturating_mul(s[j]).saturating_add(s[j - 1]);
        }
        s = next;
    }
    s.iter().fold(0u64, |acc, &v| acc.saturating_add(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn pts(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        let d = rows[0].len();
        DMatrix::from_fn(n, d, |i, j| rows[i][j])
    }

    #[test]
    fn separated_pairs_in_one_dimension() {
        let p = pts(&[&[0.0], &[0.1], &[10.0], &[10.1]]);
        let fit = kmeans(&p, 2, 10, 100, 42).unwrap();
        assert_eq!(fit.labels, vec![1, 1, 2, 2]);
        assert_relative_eq!(fit.wss, 0.01, epsilon = 1e-12);
    }

    #[test]
    fn k_equals_n_gives_zero_wss() {
        let p = pts(&[&[1.0, 0.0], &[2.0, 1.0], &[5.0, -1.0], &[9.0, 3.0]]);
        let fit = kmeans(&p, 4, 20, 100, 7).unwrap();
        assert!(fit.wss < 1e-18);
        let mut sorted = fit.labels.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3, 4]);
    }

    #[test]
    fn k_one_returns_total_scatter() {
        let p = pts(&[&[0.0], &[2.0], &[4.0]]);
        let fit = kmeans(&p, 1, 5, 100, 1).unwrap();
        assert_eq!(fit.labels, vec![1, 1, 1]);
        assert_relative_eq!(fit.wss, 8.0, epsilon = 1e-12); // mean 2, (4+0+4)
    }

    #[test]
    fn k_larger_than_n_is_an_error() {
        let p = pts(&[&[0.0], &[1.0]]);
        assert!(kmeans(&p, 3, 5, 100, 1).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = DMatrix::from_fn(8, 2, |_, _| rng.gen::<f64>() * 4.0);
        let exact = brute_force_kmeans(&p, 3).unwrap();
        let fit = kmeans(&p, 3, 20, 200, 5).unwrap();
        assert!(fit.wss >= exact.wss - 1e-12);
        assert_relative_eq!(fit.wss, exact.wss, max_relative = 1e-9);
    }

    #[test]
    fn brute_force_dominates_lloyd() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..5 {
            let p = DMatrix::from_fn(7, 2, |_, _| rng.gen::<f64>() * 3.0 - 1.0);
            let exact = brute_force_kmeans(&p, 2).unwrap();
            let fit = kmeans(&p, 2, 5, 100, trial).unwrap();
            assert!(
                fit.wss >= exact.wss - 1e-12,
                "oracle above heuristic on trial {trial}"
            );
        }
    }

    #[test]
    fn brute_force_n_equals_k() {
        let p = pts(&[&[0.0], &[5.0], &[9.0]]);
        let exact = brute_force_kmeans(&p, 3).unwrap();
        assert!(exact.wss < 1e-18);
    }

    #[test]
    fn brute_force_one_to_six_split() {
        // Points 1..6, K=2: optimal split {1,2,3} | {4,5,6}, each part wss 2.
        let p = pts(&[&[1.0], &[2.0], &[3.0], &[4.0], &[5.0], &[6.0]]);
        let exact = brute_force_kmeans(&p, 2).unwrap();
        assert_relative_eq!(exact.wss, 4.0, epsilon = 1e-12);
        assert_eq!(exact.labels, vec![1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn brute_force_rejects_huge_instances() {
        let p = DMatrix::zeros(40, 1);
        assert!(matches!(
            brute_force_kmeans(&p, 4),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn deterministic_given_identical_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = DMatrix::from_fn(30, 3, |_, _| rng.gen::<f64>());
        let a = kmeans(&p, 4, 10, 100, 99).unwrap();
        let b = kmeans(&p, 4, 10, 100, 99).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.wss.to_bits(), b.wss.to_bits());
        assert_eq!(a.best_restart_seed, b.best_restart_seed);
    }

    #[test]
    fn indicator_two_clusters() {
        let z = indicator_matrix(&[1, 1, 2, 2], 2).unwrap();
        assert_eq!(z.nrows(), 1);
        let s = 0.5f64.sqrt();
        for (j, expect) in [s, s, 0.0, 0.0].iter().enumerate() {
            assert_relative_eq!(z[(0, j)], *expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn indicator_k_one_is_empty() {
        let z = indicator_matrix(&[1, 1, 1], 1).unwrap();
        assert_eq!(z.shape(), (0, 3));
    }

    #[test]
    fn indicator_singletons() {
        let z = indicator_matrix(&[1, 2, 3], 3).unwrap();
        assert_eq!(z, DMatrix::from_row_slice(2, 3, &[1., 0., 0., 0., 1., 0.]));
    }

    #[test]
    fn indicator_missing_cluster_is_error() {
        assert!(matches!(
            indicator_matrix(&[1, 1, 3, 3], 3),
            Err(Error::MissingCluster { missing: 2, .. })
        ));
    }

    #[test]
    fn indicator_rows_orthonormal() {
        let labels = [1, 2, 2, 3, 3, 3, 4, 4, 4, 4];
        let z = indicator_matrix(&labels, 4).unwrap();
        let zzt = &z * z.transpose();
        assert!((zzt - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn labels_are_canonical() {
        assert_eq!(canonical_labels(&[3, 3, 1, 2, 1]), vec![1, 1, 2, 3, 2]);
    }

    #[test]
    fn oracle_equivalence_small_suite() {
        // Scaled-down version of the randomized oracle suite: best-of-20
        // restarts should match the exhaustive optimum on nearly every
        // instance and never beat it.
        let mut hits = 0;
        let total = 12;
        for inst in 0..total {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
            let n = 6 + (inst as usize % 5);
            let d = 1 + (inst as usize % 2);
            let k = 2 + (inst as usize % 2);
            let p = DMatrix::from_fn(n, d, |_, _| rng.gen::<f64>() * 2.0);
            let exact = brute_force_kmeans(&p, k).unwrap();
            let fit = kmeans(&p, k, 20, 200, 5000 + inst).unwrap();
            assert!(fit.wss >= exact.wss - 1e-12 * exact.wss.max(1.0));
            if fit.wss <= exact.wss * (1.0 + 1e-9) {
                hits += 1;
            }
        }
        assert!(hits >= total - 1, "only {hits}/{total} matched the oracle");
    }
}

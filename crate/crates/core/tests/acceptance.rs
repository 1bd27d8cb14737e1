//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them all).
//!
//! The two Monte Carlo runs are shared across criteria through lazy statics,
//! so the suite costs two full 100-replicate benchmark runs plus the
//! smaller property checks.

use std::sync::LazyLock;
use std::time::Instant;

use jic_core::decomposition::{jic_decompose, DecomposeOptions};
use jic_core::kmeans::{brute_force_kmeans, kmeans};
use jic_core::matrix::Preprocess;
use jic_core::selection::{anderson_darling, cluster_counts};
use jic_core::simulation::{
    generate, run_monte_carlo, MonteCarloOptions, SimConfig, SimSetting, SimulationReport,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SEED: u64 = 20260809;

struct TimedReport {
    report: SimulationReport,
    seconds: f64,
}

fn run_setting(setting: SimSetting) -> TimedReport {
    let cfg = SimConfig {
        setting,
        seed: SEED,
        replicates: 100,
        ..SimConfig::default()
    };
    let started = Instant::now();
    let report = run_monte_carlo(&cfg, &MonteCarloOptions::default()).expect("monte carlo");
    TimedReport {
        report,
        seconds: started.elapsed().as_secs_f64(),
    }
}

static SETTING_I: LazyLock<TimedReport> = LazyLock::new(|| run_setting(SimSetting::JointOnly));
static SETTING_II: LazyLock<TimedReport> =
    LazyLock::new(|| run_setting(SimSetting::JointAndIndividual));

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} FAILED: {detail}");
}

#[test]
fn criterion_1_setting_i_known_k_precision() {
    let timed = &*SETTING_I;
    let mean = timed
        .report
        .summary
        .mean_joint_precision
        .expect("precision recorded");
    let detail = format!(
        "mean joint precision {mean:.4} (need >= 0.95), runtime {:.0}s (need < 300s)",
        timed.seconds
    );
    verdict("1", mean >= 0.95 && timed.seconds < 300.0, &detail);
}

#[test]
fn criterion_2_setting_ii_known_ranks_precision() {
    let timed = &*SETTING_II;
    let summary = &timed.report.summary;
    let joint = summary.mean_joint_precision.expect("joint precision");
    let individual: Vec<f64> = summary
        .mean_individual_precisions
        .iter()
        .map(|p| p.expect("individual precision"))
        .collect();
    let references = [0.950, 0.791, 0.874];
    let windows_ok: Vec<bool> = individual
        .iter()
        .zip(references)
        .map(|(&p, r)| (p - r).abs() <= 0.10)
        .collect();
    let detail = format!(
        "mean joint precision {joint:.4} (need >= 0.88); mean individual precisions \
         {individual:?} vs reference {references:?} within ±0.10 per block: {windows_ok:?}; \
         runtime {:.0}s (need < 600s)",
        timed.seconds
    );
    let pass = joint >= 0.88 && windows_ok.iter().all(|&b| b) && timed.seconds < 600.0;
    verdict("2", pass, &detail);
}

#[test]
fn criterion_3_unknown_k_recovery() {
    let setting_i = &SETTING_I.report.summary;
    let setting_ii = &SETTING_II.report.summary;
    let detail = format!(
        "setting I exact K rate {:.2} (need >= 0.90); setting II exact (K,K_1,K_2,K_3) rate \
         {:.2} (need >= 0.78)",
        setting_i.k_correct_rate, setting_ii.all_counts_correct_rate
    );
    let pass = setting_i.k_correct_rate >= 0.90 && setting_ii.all_counts_correct_rate >= 0.78;
    verdict("3", pass, &detail);
}

#[test]
fn criterion_4_rank_arithmetic_fixture() {
    let counts = cluster_counts(8, &[2, 8]).expect("consistent ranks");
    let detail = format!(
        "E=8, E_m=[2,8] -> K={}, K_m={:?} (need K=3, K_m=[1,7])",
        counts.k, counts.k_m
    );
    verdict("4", counts.k == 3 && counts.k_m == vec![1, 7], &detail);
}

#[test]
fn criterion_5_decomposition_properties() {
    let cfg = SimConfig {
        setting: SimSetting::JointAndIndividual,
        seed: SEED ^ 0x5a5a,
        replicates: 50,
        ..SimConfig::default()
    };
    let ranks = cfg.true_ranks();
    let opts = DecomposeOptions::default();
    let mut failures = Vec::new();
    for rep in 0..cfg.replicates {
        let (raw, _) = generate(&cfg, rep).expect("generate");
        let bs = Preprocess::default().apply(&raw).expect("preprocess");
        let d = jic_decompose(&bs, &ranks, &opts).expect("decompose");

        for w in d.history.windows(2) {
            if w[1] > w[0] + 1e-9 * d.history[0] {
                failures.push(format!("rep {rep}: history increased {} -> {}", w[0], w[1]));
            }
        }
        let r = d.joint_rank();
        let zzt_err =
            (&d.joint_scores * d.joint_scores.transpose() - DMatrix::identity(r, r)).amax();
        if zzt_err >= 1e-8 {
            failures.push(format!("rep {rep}: |ZZ^T - I| = {zzt_err:.2e}"));
        }
        let mut structure_sq = (&d.joint_loadings * &d.joint_scores).norm_squared();
        for m in 0..d.nblocks() {
            let cross = (&d.joint_scores * d.individual_scores[m].transpose()).amax();
            if cross >= 1e-6 {
                failures.push(format!("rep {rep} block {m}: |Z Z_m^T| = {cross:.2e}"));
            }
            structure_sq += (&d.individual_loadings[m] * &d.individual_scores[m]).norm_squared();
        }
        let total_sq: f64 = bs.blocks().iter().map(|b| b.data().norm_squared()).sum();
        let energy_gap = (total_sq - structure_sq - d.residual_sq).abs() / total_sq;
        if energy_gap >= 1e-6 {
            failures.push(format!("rep {rep}: energy gap {energy_gap:.2e}"));
        }
    }
    let detail = if failures.is_empty() {
        "50 instances: history nonincreasing, |ZZ^T - I| < 1e-8, |Z Z_m^T| < 1e-6, \
         energy identity within 1e-6 relative"
            .to_string()
    } else {
        format!("{} violations, first: {}", failures.len(), failures[0])
    };
    verdict("5", failures.is_empty(), &detail);
}

#[test]
fn criterion_6_kmeans_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0xc6);
    let instances = 50;
    let mut matched = 0;
    let mut below_oracle = Vec::new();
    for inst in 0..instances {
        let n = rng.gen_range(6..=10usize);
        let d = rng.gen_range(1..=2usize);
        let k = rng.gen_range(2..=3usize);
        let points = DMatrix::from_fn(n, d, |_, _| rng.gen::<f64>() * 4.0 - 2.0);
        let oracle = brute_force_kmeans(&points, k).expect("oracle");
        let fit = kmeans(&points, k, 20, 200, SEED.wrapping_add(inst)).expect("kmeans");
        if fit.wss < oracle.wss - 1e-9 * oracle.wss.max(1e-12) {
            below_oracle.push(inst);
        }
        if fit.wss <= oracle.wss * (1.0 + 1e-9) + 1e-15 {
            matched += 1;
        }
    }
    let detail = format!(
        "{matched}/{instances} instances matched the exhaustive optimum within 1e-9 relative \
         (need >= {}), {} fell below it (need 0)",
        (instances as f64 * 0.95).ceil() as usize,
        below_oracle.len()
    );
    let pass = matched as f64 >= instances as f64 * 0.95 && below_oracle.is_empty();
    verdict("6", pass, &detail);
}

#[test]
fn criterion_7_anderson_darling_calibration_and_power() {
    let alpha = 0.05;
    let streams = 500;
    let tolerance = 2.0 * (alpha * (1.0 - alpha) / streams as f64).sqrt();
    let mut rates = Vec::new();
    let mut calibrated = true;
    for (idx, n) in [50usize, 150, 1000].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED.wrapping_add(1000 + idx as u64));
        let rejections = (0..streams)
            .filter(|_| {
                let sample: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                anderson_darling(&sample).expect("ad").2 < alpha
            })
            .count();
        let rate = rejections as f64 / streams as f64;
        calibrated &= (rate - alpha).abs() <= tolerance;
        rates.push((n, rate));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED.wrapping_add(2000));
    let power_hits = (0..streams)
        .filter(|_| {
            let sample: Vec<f64> = (0..150)
                .map(|i| {
                    let center: f64 = if i % 2 == 0 { -3.0 } else { 3.0 };
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    center + noise
                })
                .collect();
            anderson_darling(&sample).expect("ad").2 < alpha
        })
        .count();
    let power = power_hits as f64 / streams as f64;

    let detail = format!(
        "type-I rates {rates:?} (each within {tolerance:.4} of {alpha}); power vs ±3 mixture \
         at n=150: {power:.3} (need >= 0.99)"
    );
    verdict("7", calibrated && power >= 0.99, &detail);
}

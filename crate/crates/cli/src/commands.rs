//! One function per subcommand.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use jic_core::decomposition::{
    cluster_decomposition, jic_decompose, DecomposeOptions, Decomposition, Ranks,
};
use jic_core::io::{
    read_block, write_decomposition, write_json, write_labels_csv, write_replicate_blocks,
    write_selection, write_simulation_csv, Delimiter,
};
use jic_core::matrix::{concat_blocks, pc_scores, BlockSet};
use jic_core::selection::{select_cluster_numbers, SelectOptions};
use jic_core::simulation::{generate, run_monte_carlo, MonteCarloOptions, SimConfig, SimSetting};

use crate::options::{ClusterArgs, CommonArgs, DecomposeArgs, SelectArgs, SimulateArgs};

/// Everything needed to rerun a command and reproduce its outputs, plus the
/// observed wall-clock time (the one field excluded from byte-for-byte
/// comparisons).
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    inputs: Vec<PathBuf>,
    parameters: serde_json::Value,
    version: String,
    duration_seconds: f64,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    inputs: &[PathBuf],
    parameters: serde_json::Value,
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        inputs: inputs.to_vec(),
        parameters,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(())
}

fn common_parameters(common: &CommonArgs) -> serde_json::Value {
    serde_json::json!({
        "seed": common.seed,
        "alpha": common.alpha,
        "tol": common.tol,
        "max_iter": common.max_iter,
        "restarts": common.restarts,
        "scale": match common.scale.0 {
            Some(jic_core::matrix::ScaleNorm::Frobenius) => "frobenius",
            Some(jic_core::matrix::ScaleNorm::TotalVariance) => "variance",
            None => "none",
        },
        "center": common.center,
        "scan_rule": common.scan_rule.to_string(),
    })
}

/// Read, pair, and preprocess the input blocks. Columns are matched by
/// header sample ids when present; any disagreement is an error, never a
/// silent reordering.
fn load_blocks(paths: &[PathBuf], delimiter: Delimiter, common: &CommonArgs) -> Result<BlockSet> {
    let mut blocks = Vec::new();
    let mut sample_ids: Option<(String, Vec<String>)> = None;
    for path in paths {
        let parsed = read_block(path, delimiter)
            .with_context(|| format!("cannot read block file {}", path.display()))?;
        if let Some(ids) = parsed.sample_ids {
            match &sample_ids {
                None => sample_ids = Some((path.display().to_string(), ids)),
                Some((first_path, first_ids)) => {
                    if *first_ids != ids {
                        bail!(
                            "sample ids in {} do not match those in {first_path}; \
                             refusing to pair columns",
                            path.display()
                        );
                    }
                }
            }
        }
        blocks.push(parsed.block);
    }
    let raw = BlockSet::new(blocks, sample_ids.map(|(_, ids)| ids))?;
    Ok(common.preprocess().apply(&raw)?)
}

fn sample_ids_of(bs: &BlockSet) -> Vec<String> {
    match bs.sample_ids() {
        Some(ids) => ids.to_vec(),
        None => (1..=bs.nsamples()).map(|j| format!("s{j}")).collect(),
    }
}

pub fn select(args: SelectArgs) -> Result<()> {
    let started = Instant::now();
    if args.blocks.len() < 2 {
        bail!("select needs at least two block files sharing the same samples");
    }
    let common = &args.common;
    let bs = load_blocks(&args.blocks, common.delimiter, common)?;
    let opts = SelectOptions {
        alpha: common.alpha,
        rule: common.scan_rule,
        max_components: args.max_components,
    };
    let selection = select_cluster_numbers(&bs, &opts)?;

    std::fs::create_dir_all(&common.out)?;
    // Recompute the score rows that were tested so qq data can be written.
    let n = bs.nsamples();
    let cap = args.max_components.unwrap_or_else(|| (n - 1).min(30));
    let joint_scores = pc_scores(&concat_blocks(&bs), cap.min(bs.total_vars()).min(n))?;
    let mut block_scores = Vec::with_capacity(bs.len());
    for b in bs.blocks() {
        let rows = cap.min(b.nvars()).min(n);
        block_scores.push((b.label().to_string(), pc_scores(b.data(), rows)?));
    }
    write_selection(&common.out, &selection, &joint_scores, &block_scores)?;

    let mut parameters = common_parameters(common);
    parameters["max_components"] = serde_json::json!(args.max_components);
    write_manifest(&common.out, "select", &args.blocks, parameters, started)?;
    println!(
        "E = {}, per-block E_m = {:?}, K = {:?}, K_m = {:?}",
        selection.e, selection.e_m, selection.k, selection.k_m
    );
    Ok(())
}

pub fn cluster(args: ClusterArgs) -> Result<()> {
    let started = Instant::now();
    let common = &args.common;
    let bs = load_blocks(&args.blocks, common.delimiter, common)?;
    if args.joint_k == 0 {
        bail!("--joint-k must be at least 1");
    }
    if args.joint_k > bs.nsamples() {
        bail!(
            "--joint-k {} exceeds the number of samples {}",
            args.joint_k,
            bs.nsamples()
        );
    }
    let individual_k = match &args.individual_k {
        Some(ks) => {
            if ks.len() != bs.len() {
                bail!(
                    "--individual-k lists {} counts for {} blocks",
                    ks.len(),
                    bs.len()
                );
            }
            if ks.contains(&0) {
                bail!("every individual cluster count must be at least 1");
            }
            ks.clone()
        }
        None => vec![1; bs.len()],
    };
    let ranks = Ranks::new(
        args.joint_k - 1,
        individual_k.iter().map(|&k| k - 1).collect(),
    );
    let d = run_decomposition(&bs, &ranks, common)?;
    let clusters = cluster_decomposition(&d, common.restarts, common.seed)?;

    std::fs::create_dir_all(&common.out)?;
    let ids = sample_ids_of(&bs);
    write_labels_csv(
        &common.out.join("joint_labels.csv"),
        &ids,
        &clusters.joint_labels,
    )?;
    for (m, block) in bs.blocks().iter().enumerate() {
        write_labels_csv(
            &common.out.join(format!("labels_{}.csv", block.label())),
            &ids,
            &clusters.individual_labels[m],
        )?;
    }
    write_decomposition(&common.out.join("decomposition"), &d, Some(common.seed))?;

    let mut parameters = common_parameters(common);
    parameters["joint_k"] = serde_json::json!(args.joint_k);
    parameters["individual_k"] = serde_json::json!(individual_k);
    write_manifest(&common.out, "cluster", &args.blocks, parameters, started)?;
    println!(
        "joint clusters: {}; converged: {}; residual_sq: {:.6e}",
        args.joint_k, d.converged, d.residual_sq
    );
    Ok(())
}

pub fn decompose(args: DecomposeArgs) -> Result<()> {
    let started = Instant::now();
    let common = &args.common;
    let bs = load_blocks(&args.blocks, common.delimiter, common)?;
    let individual = match &args.individual_ranks {
        Some(rs) => {
            if rs.len() != bs.len() {
                bail!(
                    "--individual-ranks lists {} ranks for {} blocks",
                    rs.len(),
                    bs.len()
                );
            }
            rs.clone()
        }
        None => vec![0; bs.len()],
    };
    let ranks = Ranks::new(args.joint_rank, individual.clone());
    let d = run_decomposition(&bs, &ranks, common)?;

    std::fs::create_dir_all(&common.out)?;
    write_decomposition(&common.out.join("decomposition"), &d, Some(common.seed))?;
    let mut parameters = common_parameters(common);
    parameters["joint_rank"] = serde_json::json!(args.joint_rank);
    parameters["individual_ranks"] = serde_json::json!(individual);
    write_manifest(&common.out, "decompose", &args.blocks, parameters, started)?;
    println!(
        "iterations: {}; converged: {}; residual_sq: {:.6e}",
        d.iterations, d.converged, d.residual_sq
    );
    Ok(())
}

fn run_decomposition(bs: &BlockSet, ranks: &Ranks, common: &CommonArgs) -> Result<Decomposition> {
    let opts = DecomposeOptions {
        tol: common.tol,
        max_iter: common.max_iter,
        ..DecomposeOptions::default()
    };
    Ok(jic_decompose(bs, ranks, &opts)?)
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let common = &args.common;
    let setting: SimSetting = args.setting.parse()?;
    let cfg = SimConfig {
        setting,
        n: args.samples,
        k_joint: args.joint_k,
        block_dims: args.block_dims.clone(),
        joint_signal: args.joint_signal,
        individual_signal: args.individual_signal.clone(),
        seed: common.seed,
        replicates: args.replicates,
    };
    let opts = MonteCarloOptions {
        preprocess: common.preprocess(),
        decompose: DecomposeOptions {
            tol: common.tol,
            max_iter: common.max_iter,
            ..DecomposeOptions::default()
        },
        restarts: common.restarts,
        select: SelectOptions {
            alpha: common.alpha,
            rule: common.scan_rule,
            max_components: None,
        },
    };
    let report = run_monte_carlo(&cfg, &opts)?;

    std::fs::create_dir_all(&common.out)?;
    write_simulation_csv(&common.out.join("report.csv"), &report)?;
    write_json(&common.out.join("summary.json"), &report.summary)?;
    write_json(
        &common.out.join("config.json"),
        &(&report.config, &report.options),
    )?;

    if args.dump_blocks {
        let (raw, truth) = generate(&cfg, 0)?;
        write_replicate_blocks(
            &common.out.join("blocks"),
            raw.blocks(),
            raw.sample_ids(),
            &truth,
        )?;
    }

    let mut parameters = common_parameters(common);
    parameters["setting"] = serde_json::json!(setting.to_string());
    parameters["replicates"] = serde_json::json!(args.replicates);
    parameters["samples"] = serde_json::json!(args.samples);
    parameters["joint_k"] = serde_json::json!(args.joint_k);
    parameters["block_dims"] = serde_json::json!(args.block_dims);
    parameters["joint_signal"] = serde_json::json!(args.joint_signal);
    parameters["individual_signal"] = serde_json::json!(args.individual_signal);
    parameters["dump_blocks"] = serde_json::json!(args.dump_blocks);
    write_manifest(&common.out, "simulate", &[], parameters, started)?;

    let s = &report.summary;
    println!(
        "setting {}: mean joint precision {:?}, K correct {:.0}%, all counts correct {:.0}%",
        setting,
        s.mean_joint_precision,
        s.k_correct_rate * 100.0,
        s.all_counts_correct_rate * 100.0
    );
    Ok(())
}

//! Flag definitions shared by the subcommands.

use std::path::PathBuf;

use clap::Args;
use jic_core::io::Delimiter;
use jic_core::matrix::{Preprocess, ScaleNorm};
use jic_core::selection::ScanRule;

/// Flags every pipeline command accepts.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Seed for every randomized step.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Significance level for the per-component normality tests.
    #[arg(long, default_value_t = 0.005)]
    pub alpha: f64,

    /// Relative residual-change tolerance of the alternating fit.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,

    /// Iteration cap of the alternating fit.
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,

    /// Restarts for every k-means clustering.
    #[arg(long, default_value_t = 30)]
    pub restarts: usize,

    /// Per-block scaling applied before analysis.
    #[arg(long, value_parser = parse_scale, default_value = "frobenius")]
    pub scale: ScaleArg,

    /// Row-center each block before analysis.
    #[arg(long, value_parser = parse_on_off, default_value = "on")]
    pub center: bool,

    /// Component scanning rule: `first-normal` or `lookahead:N`.
    #[arg(long, value_parser = parse_scan_rule, default_value = "lookahead:4")]
    pub scan_rule: ScanRule,

    /// Input delimiter; `auto` sniffs tab vs comma per file.
    #[arg(long, value_parser = parse_delimiter, default_value = "auto")]
    pub delimiter: Delimiter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleArg(pub Option<ScaleNorm>);

impl CommonArgs {
    pub fn preprocess(&self) -> Preprocess {
        Preprocess {
            center: self.center,
            scale: self.scale.0,
        }
    }
}

fn parse_scale(s: &str) -> Result<ScaleArg, String> {
    match s.to_ascii_lowercase().as_str() {
        "frobenius" => Ok(ScaleArg(Some(ScaleNorm::Frobenius))),
        "variance" => Ok(ScaleArg(Some(ScaleNorm::TotalVariance))),
        "none" => Ok(ScaleArg(None)),
        other => Err(format!(
            "unknown scale '{other}', expected frobenius, variance, or none"
        )),
    }
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        other => Err(format!("expected on or off, got '{other}'")),
    }
}

fn parse_scan_rule(s: &str) -> Result<ScanRule, String> {
    let lower = s.to_ascii_lowercase();
    if lower == "first-normal" {
        return Ok(ScanRule::FirstNormal);
    }
    if let Some(rest) = lower.strip_prefix("lookahead:") {
        let w: usize = rest
            .parse()
            .map_err(|_| format!("bad lookahead window '{rest}'"))?;
        if w == 0 {
            return Err("lookahead window must be at least 1".into());
        }
        return Ok(ScanRule::Lookahead(w));
    }
    Err(format!(
        "unknown scan rule '{s}', expected first-normal or lookahead:N"
    ))
}

fn parse_delimiter(s: &str) -> Result<Delimiter, String> {
    match s.to_ascii_lowercase().as_str() {
        "auto" => Ok(Delimiter::Auto),
        "comma" => Ok(Delimiter::Comma),
        "tab" => Ok(Delimiter::Tab),
        other => Err(format!("unknown delimiter '{other}'")),
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Block files (at least two).
    #[arg(required = true, value_name = "BLOCK")]
    pub blocks: Vec<PathBuf>,

    /// Components examined per scan (default: min(n-1, 30)).
    #[arg(long)]
    pub max_components: Option<usize>,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Block files.
    #[arg(required = true, value_name = "BLOCK")]
    pub blocks: Vec<PathBuf>,

    /// Number of joint clusters (joint rank is one less).
    #[arg(long, value_name = "K")]
    pub joint_k: usize,

    /// Per-block cluster counts, comma separated (default: 1 per block).
    #[arg(long, value_name = "K1,K2,...", value_delimiter = ',')]
    pub individual_k: Option<Vec<usize>>,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Block files.
    #[arg(required = true, value_name = "BLOCK")]
    pub blocks: Vec<PathBuf>,

    /// Joint rank.
    #[arg(long, value_name = "R")]
    pub joint_rank: usize,

    /// Per-block individual ranks, comma separated (default: 0 per block).
    #[arg(long, value_name = "R1,R2,...", value_delimiter = ',')]
    pub individual_ranks: Option<Vec<usize>>,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Benchmark setting: I (joint only) or II (joint + individual).
    #[arg(long, default_value = "I")]
    pub setting: String,

    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,

    /// Samples per replicate.
    #[arg(long, default_value_t = 150)]
    pub samples: usize,

    /// Number of joint clusters.
    #[arg(long, default_value_t = 5)]
    pub joint_k: usize,

    /// Variables per block, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [200usize, 200, 200])]
    pub block_dims: Vec<usize>,

    /// Joint signal strength.
    #[arg(long, default_value_t = 80.0)]
    pub joint_signal: f64,

    /// Per-block individual signal strengths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [30.0, 30.0, 30.0])]
    pub individual_signal: Vec<f64>,

    /// Also write the raw blocks and truth labels of replicate 0.
    #[arg(long)]
    pub dump_blocks: bool,

    #[command(flatten)]
    pub common: CommonArgs,
}

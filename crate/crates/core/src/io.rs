//! Reading blocks from delimited text and writing every output format.
//!
//! Block files are variables x samples. An optional first row carries sample
//! identifiers (detected by non-numeric cells) and an optional first column
//! carries variable identifiers. The delimiter is sniffed from the first
//! line (tab wins over comma) unless forced. All numeric output is written
//! with 17 significant digits so reruns can be compared byte for byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::matrix::Block;
use crate::selection::{qq_points, RankSelection};
use crate::simulation::{SimTruth, SimulationReport};
use crate::util::format_f64;

/// Delimiter handling for block files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    Auto,
    Comma,
    Tab,
}

/// A parsed block file: the data plus whatever identifiers were present.
#[derive(Debug, Clone)]
pub struct ParsedBlock {
    pub block: Block,
    pub sample_ids: Option<Vec<String>>,
    pub variable_ids: Option<Vec<String>>,
}

/// Read one block from a CSV/TSV file.
///
/// The block label defaults to the file stem. Header row and identifier
/// column are auto-detected; every remaining cell must parse as a finite
/// 64-bit float.
pub fn read_block(path: &Path, delimiter: Delimiter) -> Result<ParsedBlock> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let delim = match delimiter {
        Delimiter::Comma => b',',
        Delimiter::Tab => b'\t',
        Delimiter::Auto => {
            let first_line = text.lines().next().unwrap_or("");
            if first_line.contains('\t') {
                b'\t'
            } else {
                b','
            }
        }
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delim)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let cells: Vec<String> = record.iter().map(|c| c.trim().to_string()).collect();
        if cells.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push(cells);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: display,
            line: 0,
            message: "file contains no data".into(),
        });
    }

    let is_numeric = |cell: &str| cell.parse::<f64>().is_ok();

    // Header row: present when any cell past the first fails to parse.
    let has_header = rows[0].iter().skip(1).any(|c| !is_numeric(c))
        || (rows[0].len() == 1 && !is_numeric(&rows[0][0]));
    let data_rows = if has_header { &rows[1..] } else { &rows[..] };
    if data_rows.is_empty() {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: "no data rows below the header".into(),
        });
    }

    // Identifier column: present when any data row's first cell is
    // non-numeric.
    let has_id_column = data_rows.iter().any(|r| !is_numeric(&r[0]));
    let skip = usize::from(has_id_column);

    let n = data_rows[0].len() - skip;
    if n == 0 {
        return Err(Error::Parse {
            path: display,
            line: if has_header { 2 } else { 1 },
            message: "no numeric columns".into(),
        });
    }
    let p = data_rows.len();
    let mut data = DMatrix::zeros(p, n);
    let mut variable_ids = if has_id_column {
        Some(Vec::with_capacity(p))
    } else {
        None
    };
    for (i, row) in data_rows.iter().enumerate() {
        let line = i + 1 + usize::from(has_header);
        if row.len() - skip != n {
            return Err(Error::Parse {
                path: display,
                line,
                message: format!("expected {n} numeric cells, found {}", row.len() - skip),
            });
        }
        if let Some(ids) = &mut variable_ids {
            ids.push(row[0].clone());
        }
        for (j, cell) in row[skip..].iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                line,
                message: format!("cell '{cell}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: display.clone(),
                    line,
                    message: format!("cell '{cell}' is not finite"),
                });
            }
            data[(i, j)] = value;
        }
    }

    let sample_ids = if has_header {
        let header = &rows[0];
        let ids: Vec<String> = if header.len() == n + skip {
            header[skip..].to_vec()
        } else if header.len() == n {
            header.clone()
        } else if header.len() == n + 1 {
            header[1..].to_vec()
        } else {
            return Err(Error::Parse {
                path: display,
                line: 1,
                message: format!("header has {} cells for {} data columns", header.len(), n),
            });
        };
        Some(ids)
    } else {
        None
    };

    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "block".to_string());
    Ok(ParsedBlock {
        block: Block::new(data, label)?,
        sample_ids,
        variable_ids,
    })
}

/// Write a matrix as headerless CSV with 17-significant-digit cells.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a block with sample-id header and variable-id column, matching the
/// reader's format.
pub fn write_block_csv(path: &Path, block: &Block, sample_ids: Option<&[String]>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let n = block.nsamples();
    let ids: Vec<String> = match sample_ids {
        Some(ids) => ids.to_vec(),
        None => (1..=n).map(|j| format!("s{j}")).collect(),
    };
    writeln!(file, "id,{}", ids.join(","))?;
    for i in 0..block.nvars() {
        let row: Vec<String> = (0..n).map(|j| format_f64(block.data()[(i, j)])).collect();
        writeln!(file, "v{},{}", i + 1, row.join(","))?;
    }
    Ok(())
}

/// Write `sample_id,label` rows.
pub fn write_labels_csv(path: &Path, sample_ids: &[String], labels: &[usize]) -> Result<()> {
    if sample_ids.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} sample ids vs {} labels",
            sample_ids.len(),
            labels.len()
        )));
    }
    let mut file = fs::File::create(path)?;
    writeln!(file, "sample_id,label")?;
    for (id, label) in sample_ids.iter().zip(labels) {
        writeln!(file, "{id},{label}")?;
    }
    Ok(())
}

/// Manifest stored inside a serialized decomposition directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionManifest {
    pub joint_rank_requested: usize,
    pub individual_ranks_requested: Vec<usize>,
    pub joint_rank_effective: usize,
    pub individual_ranks_effective: Vec<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub orthogonalize: bool,
    pub subtract_from_original: bool,
    pub converged: bool,
    pub iterations: usize,
    pub residual_sq: f64,
    pub block_labels: Vec<String>,
    pub block_offsets: Vec<usize>,
    pub seed: Option<u64>,
    pub files: Vec<String>,
}

/// Serialize a decomposition to a directory: one CSV per factor matrix plus
/// the residual history and a JSON manifest.
pub fn write_decomposition(dir: &Path, d: &Decomposition, seed: Option<u64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    write_matrix_csv(&dir.join("joint_scores.csv"), &d.joint_scores)?;
    files.push("joint_scores.csv".into());
    write_matrix_csv(&dir.join("joint_loadings.csv"), &d.joint_loadings)?;
    files.push("joint_loadings.csv".into());
    for m in 0..d.nblocks() {
        let scores_name = format!("individual_scores_{}.csv", m + 1);
        write_matrix_csv(&dir.join(&scores_name), &d.individual_scores[m])?;
        files.push(scores_name);
        let loadings_name = format!("individual_loadings_{}.csv", m + 1);
        write_matrix_csv(&dir.join(&loadings_name), &d.individual_loadings[m])?;
        files.push(loadings_name);
    }

    let mut history = fs::File::create(dir.join("history.csv"))?;
    writeln!(history, "iteration,residual_sq")?;
    for (i, r) in d.history.iter().enumerate() {
        writeln!(history, "{},{}", i + 1, format_f64(*r))?;
    }
    files.push("history.csv".into());

    let manifest = DecompositionManifest {
        joint_rank_requested: d.requested_ranks.joint,
        individual_ranks_requested: d.requested_ranks.individual.clone(),
        joint_rank_effective: d.joint_rank(),
        individual_ranks_effective: (0..d.nblocks()).map(|m| d.individual_rank(m)).collect(),
        tol: d.options().tol,
        max_iter: d.options().max_iter,
        orthogonalize: d.options().orthogonalize,
        subtract_from_original: d.options().subtract_from_original,
        converged: d.converged,
        iterations: d.iterations,
        residual_sq: d.residual_sq,
        block_labels: d.block_labels.clone(),
        block_offsets: d.block_offsets.clone(),
        seed,
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Write a selection report as JSON plus one qq CSV per tested component.
pub fn write_selection(
    dir: &Path,
    selection: &RankSelection,
    joint_scores: &DMatrix<f64>,
    block_scores: &[(String, DMatrix<f64>)],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json_path = dir.join("selection.json");
    write_json(&json_path, selection)?;
    written.push(json_path);

    let mut emit = |name: String, scores: &DMatrix<f64>, count: usize| -> Result<()> {
        for c in 0..count.min(scores.nrows()) {
            let sample: Vec<f64> = scores.row(c).iter().copied().collect();
            let path = dir.join(format!("qq_{}_c{:02}.csv", name, c + 1));
            let mut file = fs::File::create(&path)?;
            writeln!(file, "theoretical_quantile,sample_quantile")?;
            for (q, z) in qq_points(&sample) {
                writeln!(file, "{},{}", format_f64(q), format_f64(z))?;
            }
            written.push(path);
        }
        Ok(())
    };
    emit(
        "joint".to_string(),
        joint_scores,
        selection.joint_reports.len(),
    )?;
    for ((label, scores), reports) in block_scores.iter().zip(&selection.block_reports) {
        emit(label.clone(), scores, reports.len())?;
    }
    Ok(written)
}

/// Write the per-replicate CSV of a simulation report.
pub fn write_simulation_csv(path: &Path, report: &SimulationReport) -> Result<()> {
    let m_blocks = report.config.block_dims.len();
    let mut file = fs::File::create(path)?;
    let mut header = vec!["replicate".to_string(), "joint_precision".to_string()];
    for m in 1..=m_blocks {
        header.push(format!("precision_block_{m}"));
    }
    header.push("joint_ari".into());
    for m in 1..=m_blocks {
        header.push(format!("ari_block_{m}"));
    }
    header.push("k_estimated".into());
    for m in 1..=m_blocks {
        header.push(format!("k_estimated_block_{m}"));
    }
    header.push("k_correct".into());
    for m in 1..=m_blocks {
        header.push(format!("k_correct_block_{m}"));
    }
    header.push("error".into());
    writeln!(file, "{}", header.join(","))?;

    let fmt_opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    let fmt_opt_usize = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.records {
        let mut cells = vec![r.replicate.to_string(), fmt_opt(r.joint_precision)];
        for m in 0..m_blocks {
            cells.push(fmt_opt(r.individual_precisions[m]));
        }
        cells.push(fmt_opt(r.joint_ari));
        for m in 0..m_blocks {
            cells.push(fmt_opt(r.individual_ari[m]));
        }
        cells.push(fmt_opt_usize(r.k_estimated));
        for m in 0..m_blocks {
            cells.push(fmt_opt_usize(r.k_m_estimated[m]));
        }
        cells.push(r.k_correct.to_string());
        for m in 0..m_blocks {
            cells.push(r.k_m_correct[m].to_string());
        }
        cells.push(r.error.clone().unwrap_or_default().replace(',', ";"));
        writeln!(file, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Dump the blocks and truth labels of one generated replicate, in the same
/// format the reader ingests.
pub fn write_replicate_blocks(
    dir: &Path,
    blocks: &[Block],
    sample_ids: Option<&[String]>,
    truth: &SimTruth,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for block in blocks {
        write_block_csv(
            &dir.join(format!("{}.csv", block.label())),
            block,
            sample_ids,
        )?;
    }
    let ids: Vec<String> = match sample_ids {
        Some(ids) => ids.to_vec(),
        None => (1..=truth.joint_labels.len())
            .map(|j| format!("s{j}"))
            .collect(),
    };
    write_labels_csv(
        &dir.join("truth_joint_labels.csv"),
        &ids,
        &truth.joint_labels,
    )?;
    for (m, labels) in truth.individual_labels.iter().enumerate() {
        write_labels_csv(
            &dir.join(format!("truth_individual_labels_{}.csv", m + 1)),
            &ids,
            labels,
        )?;
    }
    Ok(())
}

/// Serialize any value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

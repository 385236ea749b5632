//! CSV ingestion and the row-stream output files.
//!
//! Output CSVs start with `#`-prefixed provenance comments carrying the
//! format version and the resolved run configuration, then a header row.
//! Floats are written with 17 significant digits so identical runs produce
//! identical bytes.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mdn_core::data::RawTable;

use crate::checkpoint::fmt_f64;

pub const CSV_FORMAT_VERSION: u32 = 1;

/// Parse a headered, comma-separated UTF-8 file into a rectangular table.
/// `#`-prefixed lines are treated as comments.
pub fn load_csv(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot open `{}`", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("cannot read header row of `{}`", path.display()))?
        .iter()
        .map(String::from)
        .collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        bail!("`{}` has no header row", path.display());
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("`{}` row {}", path.display(), i + 1))?;
        rows.push(record.iter().map(String::from).collect());
    }
    RawTable::new(headers, rows)
        .map_err(|e| anyhow::anyhow!("`{}`: {e}", path.display()))
}

fn provenance_comments(provenance: &[(String, String)]) -> String {
    let mut out = format!("# format_version={CSV_FORMAT_VERSION}\n");
    for (key, value) in provenance {
        out.push_str(&format!("# {key}={value}\n"));
    }
    out
}

/// `x,y,label` rows for a generated synthetic dataset.
pub fn write_synthetic_csv(
    path: &Path,
    xs: &[f64],
    ys: &[f64],
    labels: &[bool],
    provenance: &[(String, String)],
) -> Result<()> {
    let mut out = provenance_comments(provenance);
    out.push_str("x,y,label\n");
    for i in 0..xs.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(xs[i]),
            fmt_f64(ys[i]),
            u8::from(labels[i])
        ));
    }
    fs::write(path, out).with_context(|| format!("cannot write `{}`", path.display()))?;
    Ok(())
}

/// `epoch,train_loss,val_loss` rows, one per epoch.
pub fn write_curves_csv(
    path: &Path,
    train_curve: &[f64],
    val_curve: &[f64],
    provenance: &[(String, String)],
) -> Result<()> {
    let mut out = provenance_comments(provenance);
    out.push_str("epoch,train_loss,val_loss\n");
    for (epoch, (t, v)) in train_curve.iter().zip(val_curve).enumerate() {
        out.push_str(&format!("{},{},{}\n", epoch + 1, fmt_f64(*t), fmt_f64(*v)));
    }
    fs::write(path, out).with_context(|| format!("cannot write `{}`", path.display()))?;
    Ok(())
}

/// `record_index,score,flag` rows, in input order.
pub fn write_scores_csv(
    path: &Path,
    scores: &[f64],
    flags: &[bool],
    provenance: &[(String, String)],
) -> Result<()> {
    let mut out = provenance_comments(provenance);
    out.push_str("record_index,score,flag\n");
    for (i, (score, flag)) in scores.iter().zip(flags).enumerate() {
        out.push_str(&format!("{},{},{}\n", i, fmt_f64(*score), u8::from(*flag)));
    }
    fs::write(path, out).with_context(|| format!("cannot write `{}`", path.display()))?;
    Ok(())
}

/// `kind,accuracy,f1,loss_variance` rows of an optimizer comparison.
pub fn write_comparison_csv(
    path: &Path,
    rows: &[mdn_core::train::OptimizerComparison],
    provenance: &[(String, String)],
) -> Result<()> {
    let mut out = provenance_comments(provenance);
    out.push_str("kind,accuracy,f1,loss_variance\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.kind.name(),
            fmt_f64(row.accuracy),
            fmt_f64(row.f1),
            fmt_f64(row.loss_variance)
        ));
    }
    fs::write(path, out).with_context(|| format!("cannot write `{}`", path.display()))?;
    Ok(())
}

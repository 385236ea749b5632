//! Tabular ingestion and preprocessing: z-scored numerics, capped one-hot
//! categoricals with an OTHER bucket, mean imputation for missing numeric
//! cells, and a designated continuous target column. Also the synthetic
//! bimodal generator whose exact conditional density serves as a
//! ground-truth oracle for the rest of the pipeline.
//!
//! Parsing files into a `RawTable` is the companion crate's job; everything
//! here operates on in-memory tables and is deterministic given its inputs.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Header row plus string cells, rectangular.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        if headers.is_empty() {
            return Err(Error::EmptyInput { op: "RawTable::new" });
        }
        for (i, h) in headers.iter().enumerate() {
            if headers[..i].contains(h) {
                return Err(Error::InvalidArgument {
                    op: "RawTable::new",
                    reason: format!("duplicate column name `{h}`"),
                });
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != headers.len() {
                return Err(Error::InvalidArgument {
                    op: "RawTable::new",
                    reason: format!(
                        "row {i} has {} cells, expected {}",
                        row.len(),
                        headers.len()
                    ),
                });
            }
        }
        Ok(RawTable { headers, rows })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn take_rows(&self, indices: &[usize]) -> Result<RawTable> {
        let mut rows = Vec::with_capacity(indices.len());
        for &i in indices {
            let row = self.rows.get(i).ok_or_else(|| Error::InvalidArgument {
                op: "RawTable::take_rows",
                reason: format!("row index {i} out of range"),
            })?;
            rows.push(row.clone());
        }
        Ok(RawTable {
            headers: self.headers.clone(),
            rows,
        })
    }
}

/// Column roles for preprocessing. Feature order in the encoded matrix is
/// the numeric columns in schema order, then each categorical column's
/// one-hot block in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaSpec {
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    /// Per-column cap on one-hot width, including the OTHER bucket.
    pub vocab_cap: usize,
    pub target_column: String,
    pub label_column: Option<String>,
    pub drop_columns: Vec<String>,
}

pub const DEFAULT_VOCAB_CAP: usize = 32;

impl SchemaSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidArgument {
                op: "SchemaSpec::validate",
                reason,
            })
        };
        if self.target_column.is_empty() {
            return fail("target_column must be set".into());
        }
        if self.vocab_cap < 2 {
            return fail(format!("vocab_cap must be >= 2, got {}", self.vocab_cap));
        }
        let feature = |c: &String| {
            self.numeric_columns.contains(c) || self.categorical_columns.contains(c)
        };
        if feature(&self.target_column) {
            return fail(format!(
                "target column `{}` must not be a feature",
                self.target_column
            ));
        }
        if let Some(lc) = &self.label_column {
            if feature(lc) {
                return fail(format!("label column `{lc}` must not be a feature"));
            }
        }
        Ok(())
    }

    /// FNV-1a over a canonical rendering; ties data, checkpoints, and
    /// configs to one schema.
    pub fn hash(&self) -> u64 {
        let mut text = String::new();
        text.push_str("numeric:");
        text.push_str(&self.numeric_columns.join(","));
        text.push_str(";categorical:");
        text.push_str(&self.categorical_columns.join(","));
        text.push_str(&format!(";cap:{}", self.vocab_cap));
        text.push_str(";target:");
        text.push_str(&self.target_column);
        text.push_str(";label:");
        text.push_str(self.label_column.as_deref().unwrap_or("-"));
        fnv1a64(text.as_bytes())
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1_0000_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericColStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalColStats {
    pub name: String,
    /// Kept vocabulary in slot order; the OTHER bucket is the final slot.
    pub vocab: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Everything needed to reproduce the fitted transform on new data.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub schema_hash: u64,
    pub numeric: Vec<NumericColStats>,
    /// Numeric columns dropped for zero spread.
    pub dropped: Vec<String>,
    pub categorical: Vec<CategoricalColStats>,
    pub target: TargetStats,
    pub label_column: Option<String>,
}

impl NormStats {
    pub fn encoded_dim(&self) -> usize {
        self.numeric.len()
            + self
                .categorical
                .iter()
                .map(|c| c.vocab.len() + 1)
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub source: String,
    pub schema_hash: u64,
}

/// Ground truth for the synthetic bimodal task: y = s*x + eps with
/// s = +/-1 equiprobable and eps ~ N(0, noise_sigma^2), so
/// p(y|x) = 0.5 N(y | x, sigma^2) + 0.5 N(y | -x, sigma^2).
#[derive(Debug, Clone, PartialEq)]
pub struct BimodalTruth {
    pub noise_sigma: f64,
}

impl BimodalTruth {
    pub fn log_density(&self, x: f64, y: f64) -> Result<f64> {
        let s = self.noise_sigma;
        let a = math::ln(0.5) + math::gaussian_log_pdf(y, x, s)?;
        let b = math::ln(0.5) + math::gaussian_log_pdf(y, -x, s)?;
        crate::math::log_sum_exp(&[a, b])
    }

    /// Exact mean negative log likelihood of a sample under the generator.
    pub fn mean_nll(&self, xs: &[f64], ys: &[f64]) -> Result<f64> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidArgument {
                op: "BimodalTruth::mean_nll",
                reason: "xs and ys must be equal-length and non-empty".into(),
            });
        }
        let mut total = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            total -= self.log_density(x, y)?;
        }
        Ok(total / xs.len() as f64)
    }
}

/// Preprocessed features, targets, and labels plus the statistics that
/// produced them. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Vec<f64>,
    pub labels: Option<Vec<bool>>,
    pub norm_stats: NormStats,
    pub provenance: Provenance,
    /// Present only for synthetic data; carries the exact density.
    pub truth: Option<BimodalTruth>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    /// Row subset in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let features = self.features.take_rows(indices)?;
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            targets.push(*self.targets.get(i).ok_or_else(|| Error::InvalidArgument {
                op: "Dataset::subset",
                reason: format!("row index {i} out of range"),
            })?);
        }
        let labels = self
            .labels
            .as_ref()
            .map(|ls| indices.iter().map(|&i| ls[i]).collect());
        Ok(Dataset {
            features,
            targets,
            labels,
            norm_stats: self.norm_stats.clone(),
            provenance: self.provenance.clone(),
            truth: self.truth.clone(),
        })
    }
}

fn parse_numeric_cell(cell: &str) -> Option<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return None;
    }
    trimmed.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_label_cell(cell: &str, row: usize, col: &str) -> Result<bool> {
    match cell.trim() {
        "0" | "false" | "False" | "FALSE" => Ok(false),
        "1" | "true" | "True" | "TRUE" => Ok(true),
        other => Err(Error::InvalidArgument {
            op: "parse_label",
            reason: format!("row {row}, column `{col}`: unparsable label `{other}`"),
        }),
    }
}

fn require_column(table: &RawTable, name: &str, op: &'static str) -> Result<usize> {
    table.column_index(name).ok_or_else(|| Error::InvalidArgument {
        op,
        reason: format!("missing required column `{name}`"),
    })
}

fn population_mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, math::sqrt(var))
}

/// Learn normalization statistics from a training table and encode it.
pub fn fit_preprocess(table: &RawTable, schema: &SchemaSpec, source: &str) -> Result<Dataset> {
    schema.validate()?;
    if table.is_empty() {
        return Err(Error::EmptyInput {
            op: "fit_preprocess",
        });
    }
    let op = "fit_preprocess";
    for name in &schema.numeric_columns {
        require_column(table, name, op)?;
    }
    for name in &schema.categorical_columns {
        require_column(table, name, op)?;
    }
    let target_idx = require_column(table, &schema.target_column, op)?;

    let n = table.len();
    let mut numeric = Vec::new();
    let mut dropped = Vec::new();
    for name in &schema.numeric_columns {
        let idx = table.column_index(name).unwrap();
        let present: Vec<f64> = table
            .rows()
            .iter()
            .filter_map(|row| parse_numeric_cell(&row[idx]))
            .collect();
        if present.is_empty() {
            return Err(Error::InvalidArgument {
                op,
                reason: format!("numeric column `{name}` has no parsable values"),
            });
        }
        let missing = n - present.len();
        let (mean, std) = population_mean_std(&present);
        if std == 0.0 {
            dropped.push(name.clone());
            continue;
        }
        numeric.push(NumericColStats {
            name: name.clone(),
            mean,
            std,
            missing,
        });
    }

    let mut categorical = Vec::new();
    for name in &schema.categorical_columns {
        let idx = table.column_index(name).unwrap();
        let mut counts: Vec<(String, usize)> = Vec::new();
        for row in table.rows() {
            let value = row[idx].trim();
            match counts.iter_mut().find(|(v, _)| v == value) {
                Some((_, c)) => *c += 1,
                None => counts.push((value.to_string(), 1)),
            }
        }
        // Most frequent first; lexicographic tiebreak keeps slot order
        // independent of row order.
        counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        counts.truncate(schema.vocab_cap - 1);
        categorical.push(CategoricalColStats {
            name: name.clone(),
            vocab: counts.into_iter().map(|(v, _)| v).collect(),
        });
    }

    let mut raw_targets = Vec::with_capacity(n);
    for (r, row) in table.rows().iter().enumerate() {
        match parse_numeric_cell(&row[target_idx]) {
            Some(v) => raw_targets.push(v),
            None => {
                return Err(Error::InvalidArgument {
                    op,
                    reason: format!(
                        "row {r}: unparsable target cell `{}` in column `{}`",
                        row[target_idx], schema.target_column
                    ),
                })
            }
        }
    }
    let (t_mean, t_std) = population_mean_std(&raw_targets);
    if t_std == 0.0 {
        return Err(Error::InvalidArgument {
            op,
            reason: format!(
                "target column `{}` has zero spread",
                schema.target_column
            ),
        });
    }

    let stats = NormStats {
        schema_hash: schema.hash(),
        numeric,
        dropped,
        categorical,
        target: TargetStats {
            name: schema.target_column.clone(),
            mean: t_mean,
            std: t_std,
        },
        label_column: schema.label_column.clone(),
    };
    // Encode through the apply path so fit and apply agree bit-for-bit.
    apply_preprocess(table, &stats, source)
}

/// Encode a table with previously fitted statistics.
pub fn apply_preprocess(table: &RawTable, stats: &NormStats, source: &str) -> Result<Dataset> {
    let op = "apply_preprocess";
    if table.is_empty() {
        return Err(Error::EmptyInput {
            op: "apply_preprocess",
        });
    }
    let mut numeric_idx = Vec::with_capacity(stats.numeric.len());
    for col in &stats.numeric {
        numeric_idx.push(require_column(table, &col.name, op)?);
    }
    let mut categorical_idx = Vec::with_capacity(stats.categorical.len());
    for col in &stats.categorical {
        categorical_idx.push(require_column(table, &col.name, op)?);
    }
    let target_idx = require_column(table, &stats.target.name, op)?;
    let label_idx = match &stats.label_column {
        Some(name) => table.column_index(name),
        None => None,
    };

    let n = table.len();
    let d = stats.encoded_dim();
    let mut features = Matrix::zeros(n, d);
    let mut targets = Vec::with_capacity(n);
    let mut labels: Option<Vec<bool>> = label_idx.map(|_| Vec::with_capacity(n));

    for (r, row) in table.rows().iter().enumerate() {
        let out = features.row_mut(r);
        let mut at = 0;
        for (col, &idx) in stats.numeric.iter().zip(&numeric_idx) {
            let value = parse_numeric_cell(&row[idx]).unwrap_or(col.mean);
            out[at] = (value - col.mean) / col.std;
            at += 1;
        }
        for (col, &idx) in stats.categorical.iter().zip(&categorical_idx) {
            let cell = row[idx].trim();
            let slot = col
                .vocab
                .iter()
                .position(|v| v == cell)
                .unwrap_or(col.vocab.len()); // OTHER bucket
            out[at + slot] = 1.0;
            at += col.vocab.len() + 1;
        }
        match parse_numeric_cell(&row[target_idx]) {
            Some(v) => targets.push((v - stats.target.mean) / stats.target.std),
            None => {
                return Err(Error::InvalidArgument {
                    op,
                    reason: format!(
                        "row {r}: unparsable target cell `{}` in column `{}`",
                        row[target_idx], stats.target.name
                    ),
                })
            }
        }
        if let (Some(ls), Some(idx)) = (labels.as_mut(), label_idx) {
            ls.push(parse_label_cell(
                &row[idx],
                r,
                stats.label_column.as_deref().unwrap_or(""),
            )?);
        }
    }

    Ok(Dataset {
        features,
        targets,
        labels,
        norm_stats: stats.clone(),
        provenance: Provenance {
            source: source.to_string(),
            schema_hash: stats.schema_hash,
        },
        truth: None,
    })
}

/// Identity statistics for the synthetic task (features and target pass
/// through unscaled).
fn synthetic_stats() -> NormStats {
    NormStats {
        schema_hash: fnv1a64(b"synthetic-bimodal-v1"),
        numeric: vec![NumericColStats {
            name: "x".into(),
            mean: 0.0,
            std: 1.0,
            missing: 0,
        }],
        dropped: Vec::new(),
        categorical: Vec::new(),
        target: TargetStats {
            name: "y".into(),
            mean: 0.0,
            std: 1.0,
        },
        label_column: Some("label".into()),
    }
}

/// Draw n samples of the bimodal task: x ~ U(-1, 1), y = s*x + eps.
/// Per sample the generator draws x, then the branch, then the noise.
pub fn gen_synthetic_bimodal(n: usize, rng: &mut Rng, noise_sigma: f64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyInput {
            op: "gen_synthetic_bimodal",
        });
    }
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(Error::InvalidArgument {
            op: "gen_synthetic_bimodal",
            reason: format!("noise_sigma must be >= 0, got {noise_sigma}"),
        });
    }
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.uniform(-1.0, 1.0);
        let s = if rng.next_f64() < 0.5 { 1.0 } else { -1.0 };
        let eps = rng.normal() * noise_sigma;
        xs.push(x);
        ys.push(s * x + eps);
    }
    Ok(Dataset {
        features: Matrix::from_vec(n, 1, xs)?,
        targets: ys,
        labels: None,
        norm_stats: synthetic_stats(),
        provenance: Provenance {
            source: "synthetic-bimodal".into(),
            schema_hash: fnv1a64(b"synthetic-bimodal-v1"),
        },
        truth: Some(BimodalTruth { noise_sigma }),
    })
}

/// Relabel a seeded subset of records as anomalous by pushing their targets
/// off-manifold: y += sign(y) * shift * noise_sigma. Moving outward keeps
/// the new target at least shift*noise_sigma away from both modes (+x and
/// -x), which a shift toward the center would not guarantee.
pub fn inject_anomalies(
    dataset: &Dataset,
    fraction: f64,
    rng: &mut Rng,
    shift: f64,
) -> Result<Dataset> {
    let op = "inject_anomalies";
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(Error::InvalidArgument {
            op,
            reason: format!("fraction must be in (0, 0.5), got {fraction}"),
        });
    }
    let truth = dataset.truth.as_ref().ok_or_else(|| Error::InvalidArgument {
        op,
        reason: "dataset carries no generator ground truth".into(),
    })?;
    let n = dataset.len();
    let count = math::round(fraction * n as f64) as usize;
    if count == 0 || count >= n {
        return Err(Error::InvalidArgument {
            op,
            reason: format!("fraction {fraction} selects {count} of {n} records"),
        });
    }
    let perm = rng.permutation(n);
    let chosen = &perm[..count];
    let mut out = dataset.clone();
    let mut labels = vec![false; n];
    let offset = shift * truth.noise_sigma;
    for &i in chosen {
        let direction = if out.targets[i] < 0.0 { -1.0 } else { 1.0 };
        out.targets[i] += direction * offset;
        labels[i] = true;
    }
    out.labels = Some(labels);
    Ok(out)
}

/// Label-stratified row sample: keeps each class's share as close to the
/// original as rounding allows. Used for smoke runs on large labeled files.
pub fn stratified_sample(
    table: &RawTable,
    label_column: &str,
    n: usize,
    rng: &mut Rng,
) -> Result<RawTable> {
    let op = "stratified_sample";
    let idx = require_column(table, label_column, op)?;
    if n == 0 || n > table.len() {
        return Err(Error::InvalidArgument {
            op,
            reason: format!("sample size {n} out of range for {} rows", table.len()),
        });
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (r, row) in table.rows().iter().enumerate() {
        if parse_label_cell(&row[idx], r, label_column)? {
            positives.push(r);
        } else {
            negatives.push(r);
        }
    }
    let n_pos = ((n as f64) * positives.len() as f64 / table.len() as f64) as usize;
    let n_pos = n_pos.min(positives.len()).max(if positives.is_empty() { 0 } else { 1 });
    let n_neg = (n - n_pos).min(negatives.len());

    let mut chosen = Vec::with_capacity(n_pos + n_neg);
    let pos_perm = rng.permutation(positives.len());
    chosen.extend(pos_perm[..n_pos].iter().map(|&i| positives[i]));
    let neg_perm = rng.permutation(negatives.len());
    chosen.extend(neg_perm[..n_neg].iter().map(|&i| negatives[i]));
    chosen.sort_unstable();
    table.take_rows(&chosen)
}

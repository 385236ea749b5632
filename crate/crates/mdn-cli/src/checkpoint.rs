//! Line-oriented text checkpoint carrying the model configuration, the
//! normalization statistics, and every parameter as a decimal float with 17
//! significant digits. Saving, loading, and saving again reproduces the file
//! byte for byte; see docs/formats.md for the field-by-field layout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use mdn_core::data::{CategoricalColStats, NormStats, NumericColStats, TargetStats};
use mdn_core::model::{Activation, Layer, MdnConfig, NetworkParams};
use mdn_core::Matrix;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "mdn-checkpoint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("checkpoint format version {found} is not supported (expected {FORMAT_VERSION})")]
    VersionMismatch { found: String },
    #[error("checkpoint is internally inconsistent: {0}")]
    ShapeInconsistency(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: MdnConfig,
    pub params: NetworkParams,
    pub norm_stats: NormStats,
    /// Resolved run configuration echoed for reproducibility, in order.
    pub provenance: Vec<(String, String)>,
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String, CheckpointError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('s') => out.push(' '),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            other => {
                return Err(CheckpointError::Parse {
                    line,
                    message: format!("bad escape `\\{}`", other.map(String::from).unwrap_or_default()),
                })
            }
        }
    }
    Ok(out)
}

fn usize_list(values: &[usize]) -> String {
    if values.is_empty() {
        "-".to_string()
    } else {
        values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn render(checkpoint: &Checkpoint) -> String {
    let mut out = String::new();
    let c = &checkpoint.config;
    let s = &checkpoint.norm_stats;
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "format_version {FORMAT_VERSION}").unwrap();

    writeln!(out, "[provenance]").unwrap();
    for (key, value) in &checkpoint.provenance {
        writeln!(out, "config {}={}", escape(key), escape(value)).unwrap();
    }

    writeln!(out, "[model]").unwrap();
    writeln!(out, "input_dim {}", c.input_dim).unwrap();
    writeln!(out, "hidden_dims {}", usize_list(&c.hidden_dims)).unwrap();
    writeln!(out, "activation {}", c.activation.name()).unwrap();
    writeln!(out, "num_components {}", c.num_components).unwrap();
    writeln!(out, "sigma_floor {}", fmt_f64(c.sigma_floor)).unwrap();

    writeln!(out, "[normalization]").unwrap();
    writeln!(out, "schema_hash {}", s.schema_hash).unwrap();
    writeln!(out, "target_name {}", escape(&s.target.name)).unwrap();
    writeln!(out, "target_mean {}", fmt_f64(s.target.mean)).unwrap();
    writeln!(out, "target_std {}", fmt_f64(s.target.std)).unwrap();
    writeln!(
        out,
        "label_column {}",
        s.label_column.as_deref().map(escape).unwrap_or_else(|| "-".into())
    )
    .unwrap();
    writeln!(out, "numeric_count {}", s.numeric.len()).unwrap();
    for (i, col) in s.numeric.iter().enumerate() {
        writeln!(
            out,
            "numeric {i} {} {} {} {}",
            escape(&col.name),
            fmt_f64(col.mean),
            fmt_f64(col.std),
            col.missing
        )
        .unwrap();
    }
    writeln!(out, "dropped_count {}", s.dropped.len()).unwrap();
    for (i, name) in s.dropped.iter().enumerate() {
        writeln!(out, "dropped {i} {}", escape(name)).unwrap();
    }
    writeln!(out, "categorical_count {}", s.categorical.len()).unwrap();
    for (i, col) in s.categorical.iter().enumerate() {
        writeln!(out, "categorical {i} {} {}", escape(&col.name), col.vocab.len()).unwrap();
        for (slot, value) in col.vocab.iter().enumerate() {
            writeln!(out, "vocab {i} {slot} {}", escape(value)).unwrap();
        }
    }

    writeln!(out, "[params]").unwrap();
    let names = checkpoint.params.block_names();
    for (name, layer) in names.iter().zip(checkpoint.params.layers()) {
        write_block(&mut out, &format!("{name}.weight"), &layer.weight);
        let bias = Matrix::from_vec(1, layer.bias.len(), layer.bias.clone()).unwrap();
        write_block(&mut out, &format!("{name}.bias"), &bias);
    }
    writeln!(out, "end").unwrap();
    out
}

fn write_block(out: &mut String, name: &str, m: &Matrix) {
    writeln!(out, "block {} {} {}", escape(name), m.rows(), m.cols()).unwrap();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    fs::write(path, render(checkpoint))?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), CheckpointError> {
        match self.inner.next() {
            Some((i, line)) => Ok((i + 1, line)),
            None => Err(CheckpointError::Parse {
                line: 0,
                message: "unexpected end of file".into(),
            }),
        }
    }

    /// Next line, which must start with `keyword`; returns the remainder.
    fn expect<'k>(&mut self, keyword: &'k str) -> Result<(usize, &'a str), CheckpointError> {
        let (line, text) = self.next()?;
        match text.strip_prefix(keyword) {
            Some(rest) if rest.is_empty() => Ok((line, "")),
            Some(rest) if rest.starts_with(' ') => Ok((line, &rest[1..])),
            _ => Err(CheckpointError::Parse {
                line,
                message: format!("expected `{keyword}`, found `{text}`"),
            }),
        }
    }
}

fn parse_value<T: FromStr>(raw: &str, line: usize, what: &str) -> Result<T, CheckpointError> {
    raw.parse().map_err(|_| CheckpointError::Parse {
        line,
        message: format!("unparsable {what} `{raw}`"),
    })
}

fn parse_usize_list(raw: &str, line: usize) -> Result<Vec<usize>, CheckpointError> {
    if raw == "-" {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|part| parse_value(part, line, "dimension"))
        .collect()
}

fn read_block(
    lines: &mut Lines<'_>,
    expected_name: &str,
    expected_shape: (usize, usize),
) -> Result<Matrix, CheckpointError> {
    let (line, rest) = lines.expect("block")?;
    let mut parts = rest.split(' ');
    let name = unescape(parts.next().unwrap_or(""), line)?;
    let rows: usize = parse_value(parts.next().unwrap_or(""), line, "row count")?;
    let cols: usize = parse_value(parts.next().unwrap_or(""), line, "column count")?;
    if name != expected_name {
        return Err(CheckpointError::Parse {
            line,
            message: format!("expected block `{expected_name}`, found `{name}`"),
        });
    }
    if (rows, cols) != expected_shape {
        return Err(CheckpointError::ShapeInconsistency(format!(
            "block `{name}` is {rows}x{cols}, expected {}x{}",
            expected_shape.0, expected_shape.1
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (line, text) = lines.next()?;
        let mut count = 0;
        for cell in text.split(' ') {
            data.push(parse_value::<f64>(cell, line, "parameter")?);
            count += 1;
        }
        if count != cols {
            return Err(CheckpointError::Parse {
                line,
                message: format!("expected {cols} values, found {count}"),
            });
        }
    }
    Matrix::from_vec(rows, cols, data)
        .map_err(|e| CheckpointError::ShapeInconsistency(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = fs::read_to_string(path)?;
    parse(&text)
}

fn parse(text: &str) -> Result<Checkpoint, CheckpointError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (line, magic) = lines.next()?;
    if magic != MAGIC {
        return Err(CheckpointError::Parse {
            line,
            message: format!("not a checkpoint file (got `{magic}`)"),
        });
    }
    let (_, version) = lines.expect("format_version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(CheckpointError::VersionMismatch {
            found: version.to_string(),
        });
    }

    lines.expect("[provenance]")?;
    let mut provenance = Vec::new();
    let rest_after_provenance;
    loop {
        let (line, text) = lines.next()?;
        if text == "[model]" {
            rest_after_provenance = line;
            break;
        }
        let payload = text.strip_prefix("config ").ok_or_else(|| CheckpointError::Parse {
            line,
            message: format!("expected `config` or `[model]`, found `{text}`"),
        })?;
        let (key, value) = payload.split_once('=').ok_or_else(|| CheckpointError::Parse {
            line,
            message: "provenance line has no `=`".into(),
        })?;
        provenance.push((unescape(key, line)?, unescape(value, line)?));
    }
    let _ = rest_after_provenance;

    let (line, raw) = lines.expect("input_dim")?;
    let input_dim: usize = parse_value(raw, line, "input_dim")?;
    let (line, raw) = lines.expect("hidden_dims")?;
    let hidden_dims = parse_usize_list(raw, line)?;
    let (line, raw) = lines.expect("activation")?;
    let activation = Activation::from_str(raw).map_err(|e| CheckpointError::Parse {
        line,
        message: e.to_string(),
    })?;
    let (line, raw) = lines.expect("num_components")?;
    let num_components: usize = parse_value(raw, line, "num_components")?;
    let (line, raw) = lines.expect("sigma_floor")?;
    let sigma_floor: f64 = parse_value(raw, line, "sigma_floor")?;
    let config = MdnConfig {
        input_dim,
        hidden_dims,
        activation,
        num_components,
        sigma_floor,
    };

    lines.expect("[normalization]")?;
    let (line, raw) = lines.expect("schema_hash")?;
    let schema_hash: u64 = parse_value(raw, line, "schema_hash")?;
    let (line, raw) = lines.expect("target_name")?;
    let target_name = unescape(raw, line)?;
    let (line, raw) = lines.expect("target_mean")?;
    let target_mean: f64 = parse_value(raw, line, "target_mean")?;
    let (line, raw) = lines.expect("target_std")?;
    let target_std: f64 = parse_value(raw, line, "target_std")?;
    let (line, raw) = lines.expect("label_column")?;
    let label_column = if raw == "-" {
        None
    } else {
        Some(unescape(raw, line)?)
    };

    let (line, raw) = lines.expect("numeric_count")?;
    let numeric_count: usize = parse_value(raw, line, "numeric_count")?;
    let mut numeric = Vec::with_capacity(numeric_count);
    for i in 0..numeric_count {
        let (line, rest) = lines.expect("numeric")?;
        let mut parts = rest.split(' ');
        let index: usize = parse_value(parts.next().unwrap_or(""), line, "index")?;
        if index != i {
            return Err(CheckpointError::Parse {
                line,
                message: format!("numeric column {i} out of order"),
            });
        }
        numeric.push(NumericColStats {
            name: unescape(parts.next().unwrap_or(""), line)?,
            mean: parse_value(parts.next().unwrap_or(""), line, "mean")?,
            std: parse_value(parts.next().unwrap_or(""), line, "std")?,
            missing: parse_value(parts.next().unwrap_or(""), line, "missing count")?,
        });
    }
    let (line, raw) = lines.expect("dropped_count")?;
    let dropped_count: usize = parse_value(raw, line, "dropped_count")?;
    let mut dropped = Vec::with_capacity(dropped_count);
    for _ in 0..dropped_count {
        let (line, rest) = lines.expect("dropped")?;
        let (_, name) = rest.split_once(' ').ok_or_else(|| CheckpointError::Parse {
            line,
            message: "dropped line needs an index and a name".into(),
        })?;
        dropped.push(unescape(name, line)?);
    }
    let (line, raw) = lines.expect("categorical_count")?;
    let categorical_count: usize = parse_value(raw, line, "categorical_count")?;
    let mut categorical = Vec::with_capacity(categorical_count);
    for i in 0..categorical_count {
        let (line, rest) = lines.expect("categorical")?;
        let mut parts = rest.split(' ');
        let _index: usize = parse_value(parts.next().unwrap_or(""), line, "index")?;
        let name = unescape(parts.next().unwrap_or(""), line)?;
        let vocab_len: usize = parse_value(parts.next().unwrap_or(""), line, "vocab length")?;
        let mut vocab = Vec::with_capacity(vocab_len);
        for slot in 0..vocab_len {
            let (line, rest) = lines.expect("vocab")?;
            let mut parts = rest.splitn(3, ' ');
            let cat_idx: usize = parse_value(parts.next().unwrap_or(""), line, "index")?;
            let slot_idx: usize = parse_value(parts.next().unwrap_or(""), line, "slot")?;
            if cat_idx != i || slot_idx != slot {
                return Err(CheckpointError::Parse {
                    line,
                    message: "vocab entry out of order".into(),
                });
            }
            vocab.push(unescape(parts.next().unwrap_or(""), line)?);
        }
        categorical.push(CategoricalColStats { name, vocab });
    }
    let norm_stats = NormStats {
        schema_hash,
        numeric,
        dropped,
        categorical,
        target: TargetStats {
            name: target_name,
            mean: target_mean,
            std: target_std,
        },
        label_column,
    };

    lines.expect("[params]")?;
    let mut params =
        NetworkParams::zeros(&config).map_err(|e| CheckpointError::ShapeInconsistency(e.to_string()))?;
    let names = params.block_names();
    let shapes: Vec<((usize, usize), usize)> = params
        .layers()
        .map(|l| (l.weight.shape(), l.bias.len()))
        .collect();
    let mut loaded: Vec<Layer> = Vec::with_capacity(shapes.len());
    for (name, (w_shape, b_len)) in names.iter().zip(&shapes) {
        let weight = read_block(&mut lines, &format!("{name}.weight"), *w_shape)?;
        let bias = read_block(&mut lines, &format!("{name}.bias"), (1, *b_len))?;
        loaded.push(Layer {
            weight,
            bias: bias.as_slice().to_vec(),
        });
    }
    lines.expect("end")?;
    let mut iter = loaded.into_iter();
    for slot in params.layers_mut() {
        *slot = iter.next().unwrap();
    }

    if norm_stats.encoded_dim() != config.input_dim {
        return Err(CheckpointError::ShapeInconsistency(format!(
            "normalization encodes {} features but the model expects {}",
            norm_stats.encoded_dim(),
            config.input_dim
        )));
    }
    Ok(Checkpoint {
        config,
        params,
        norm_stats,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdn_core::data::gen_synthetic_bimodal;
    use mdn_core::model::init_params;
    use mdn_core::Rng;

    fn sample_checkpoint() -> Checkpoint {
        let config = MdnConfig {
            input_dim: 1,
            hidden_dims: vec![4, 3],
            activation: Activation::Tanh,
            num_components: 2,
            sigma_floor: 1e-3,
        };
        let params = init_params(&config, &mut Rng::new(21)).unwrap();
        let ds = gen_synthetic_bimodal(5, &mut Rng::new(3), 0.1).unwrap();
        Checkpoint {
            config,
            params,
            norm_stats: ds.norm_stats,
            provenance: vec![
                ("seed".into(), "42".into()),
                ("note".into(), "two words".into()),
            ],
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = sample_checkpoint();
        let text = render(&ck);
        let parsed = parse(&text).unwrap();
        assert_eq!(parsed, ck);
        assert_eq!(render(&parsed), text);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let ck = sample_checkpoint();
        let text = render(&ck);
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            parse(cut),
            Err(CheckpointError::Parse { .. }) | Err(CheckpointError::ShapeInconsistency(_))
        ));
    }

    #[test]
    fn version_mismatch_is_detected() {
        let ck = sample_checkpoint();
        let text = render(&ck).replace("format_version 1", "format_version 99");
        assert!(matches!(
            parse(&text),
            Err(CheckpointError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        assert!(matches!(
            parse("garbage\n"),
            Err(CheckpointError::Parse { .. })
        ));
    }

    #[test]
    fn tampered_shape_is_inconsistent() {
        let ck = sample_checkpoint();
        let text = render(&ck).replace("block trunk[0].weight 1 4", "block trunk[0].weight 1 5");
        assert!(matches!(
            parse(&text),
            Err(CheckpointError::ShapeInconsistency(_)) | Err(CheckpointError::Parse { .. })
        ));
    }

    #[test]
    fn names_with_spaces_survive() {
        let mut ck = sample_checkpoint();
        ck.norm_stats.numeric[0].name = "packet length".into();
        ck.provenance.push(("path".into(), "with\\backslash and space".into()));
        let parsed = parse(&render(&ck)).unwrap();
        assert_eq!(parsed, ck);
    }

    #[test]
    fn save_load_save_files_match() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let ck = sample_checkpoint();
        save_checkpoint(&p1, &ck).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&p2, &loaded).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }
}

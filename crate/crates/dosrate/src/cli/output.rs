//! Run artifacts: strict CSV emission and parsing, key-value summaries, and
//! the run manifest that makes every invocation reproducible.
//!
//! All CSVs use `.` as the decimal separator and LF line endings regardless
//! of locale; floats are printed in shortest round-trip form.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sim::{SampleRow, TxRecord};

/// Environment variable naming the default output root when `--out` is not
/// given.
pub const OUT_ENV: &str = "DOSRATE_OUT";

/// Resolve the output directory: explicit flag, then `$DOSRATE_OUT/<sub>`,
/// then `./dosrate-out/<sub>`.
pub fn resolve_out_dir(explicit: Option<&Path>, subcommand: &str) -> PathBuf {
    if let Some(dir) = explicit {
        return dir.to_owned();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) => PathBuf::from(root).join(subcommand),
        None => PathBuf::from("dosrate-out").join(subcommand),
    }
}

/// Shortest round-trip formatting; `.` decimal point, never locale-dependent.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text.as_bytes())?;
    Ok(())
}

fn push_vector(row: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        row.push(',');
        row.push_str(&fmt_num(v));
    }
}

/// Write the trajectory log: one row per sampled instant with the plant
/// state, the predictor state, the prediction error, and the range vector,
/// plus attempt/attack annotations.
pub fn write_trajectory_csv(path: &Path, samples: &[SampleRow]) -> Result<()> {
    let n = samples
        .first()
        .map(|r| r.x.len())
        .ok_or_else(|| Error::InvariantBreach("no samples to write".into()))?;
    let mut text = String::from("t");
    for tag in ["x", "xhat", "e", "j"] {
        for l in 1..=n {
            let _ = write!(text, ",{tag}_{l}");
        }
    }
    text.push_str(",dos_active,attempt,success,bits_this_attempt\n");
    for row in samples {
        let mut line = fmt_num(row.t);
        push_vector(&mut line, row.x.iter().copied());
        push_vector(&mut line, row.xhat.iter().copied());
        push_vector(&mut line, row.e.iter().copied());
        push_vector(&mut line, row.j.iter().copied());
        let _ = write!(
            line,
            ",{},{},{},{}",
            u8::from(row.dos_active),
            u8::from(row.attempt),
            u8::from(row.success),
            row.bits
        );
        line.push('\n');
        text.push_str(&line);
    }
    write_text(path, &text)
}

fn join_list<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

/// Write the transmission log: one row per attempt with the budgets offered,
/// the codeword indices actually sent, and the per-block clock state.
pub fn write_transmissions_csv(path: &Path, log: &[TxRecord]) -> Result<()> {
    let mut text = String::from(
        "t,attempt_index,success,total_bits,block_budgets,element_bits,indices,clock_g,clock_rolled\n",
    );
    for rec in log {
        let total: u64 = rec.element_bits.iter().map(|&b| u64::from(b)).sum();
        let rolled: Vec<u8> = rec.clock_rolled.iter().map(|&b| u8::from(b)).collect();
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            fmt_num(rec.t),
            rec.attempt_index,
            u8::from(rec.success),
            total,
            join_list(&rec.block_budgets),
            join_list(&rec.element_bits),
            join_list(&rec.indices),
            join_list(&rec.clock_g),
            join_list(&rolled),
        );
    }
    write_text(path, &text)
}

/// Write a flat `key = value` summary file.
pub fn write_summary(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        let _ = writeln!(text, "{k} = {v}");
    }
    write_text(path, &text)
}

/// Write a diagnostic dump after a failed run.
pub fn write_dump(dir: &Path, message: &str) -> Result<PathBuf> {
    let path = dir.join("dump.txt");
    write_text(&path, &format!("{message}\n"))?;
    Ok(path)
}

/// Record of one tool invocation: enough to reproduce the run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Canonical digest of the configuration file (stable under key
    /// reordering).
    pub config_digest: String,
    /// Effective random seed, when the run consumed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Paths of the files this run produced, relative to the manifest.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config_digest: String, seed: Option<u64>) -> Self {
        Self {
            tool: "dosrate".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config_digest,
            seed,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
        write_text(path, &text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Parse a CSV produced by this tool under strict rules: LF endings only (no
/// carriage returns anywhere), a trailing newline, a header row, and the same
/// field count on every row. Returns the header and the data rows as strings.
pub fn read_csv_strict(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_csv_strict(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Strict CSV parsing over in-memory text; see [`read_csv_strict`].
pub fn parse_csv_strict(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    if text.contains('\r') {
        return Err(Error::Config("carriage return found; LF endings required".into()));
    }
    if !text.ends_with('\n') {
        return Err(Error::Config("missing trailing newline".into()));
    }
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config("empty file".into()))?
        .split(',')
        .map(str::to_owned)
        .collect();
    if header.iter().any(String::is_empty) {
        return Err(Error::Config("empty header field".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<String> = line.split(',').map(str::to_owned).collect();
        if fields.len() != header.len() {
            return Err(Error::Config(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                fields.len(),
                header.len()
            )));
        }
        rows.push(fields);
    }
    Ok((header, rows))
}

/// Parse one numeric CSV cell strictly: only `.` decimals and ASCII digits,
/// signs, and exponents are accepted (this is exactly Rust's float grammar).
pub fn parse_cell_f64(cell: &str) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("cell {cell:?} is not a strict float")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn sample(t: f64) -> SampleRow {
        SampleRow {
            t,
            x: DVector::from_vec(vec![1.0, 2.0]),
            xhat: DVector::from_vec(vec![0.5, 1.5]),
            e: DVector::from_vec(vec![-0.5, -0.5]),
            j: DVector::from_vec(vec![2.0, 2.0]),
            dos_active: false,
            attempt: t > 0.0,
            success: t > 0.0,
            bits: 4,
        }
    }

    #[test]
    fn trajectory_roundtrips_through_the_strict_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &[sample(0.0), sample(0.1)]).unwrap();
        let (header, rows) = read_csv_strict(&path).unwrap();
        assert_eq!(header.len(), 1 + 4 * 2 + 4);
        assert_eq!(header[0], "t");
        assert_eq!(header[1], "x_1");
        assert_eq!(rows.len(), 2);
        assert_eq!(parse_cell_f64(&rows[1][0]).unwrap(), 0.1);
        for row in &rows {
            for cell in &row[..row.len() - 4] {
                parse_cell_f64(cell).unwrap();
            }
        }
    }

    #[test]
    fn strict_reader_rejects_crlf_and_ragged_rows() {
        assert!(parse_csv_strict("a,b\r\n1,2\n").is_err());
        assert!(parse_csv_strict("a,b\n1,2,3\n").is_err());
        assert!(parse_csv_strict("a,b\n1,2").is_err());
        assert!(parse_csv_strict("a,b\n1,2\n").is_ok());
    }

    #[test]
    fn strict_cells_reject_locale_decimals() {
        assert!(parse_cell_f64("1.5").is_ok());
        assert!(parse_cell_f64("1e-12").is_ok());
        assert!(parse_cell_f64("1,5").is_err());
        assert!(parse_cell_f64("").is_err());
    }

    #[test]
    fn manifest_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        let mut m = RunManifest::new("simulate", "abc123".into(), Some(7));
        m.outputs = vec!["trajectory.csv".into()];
        m.write(&path).unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn out_dir_resolution_prefers_the_flag() {
        let explicit = PathBuf::from("/tmp/xyz");
        assert_eq!(
            resolve_out_dir(Some(explicit.as_path()), "simulate"),
            explicit
        );
        let fallback = resolve_out_dir(None, "simulate");
        assert!(fallback.ends_with("simulate"));
    }
}

//! CSV and metadata emission. Every file is a pure function of its inputs:
//! fixed float formatting, no timestamps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use lightstore::sequence::{render, ExperimentSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn spec_hash(spec: &ExperimentSpec) -> String {
    hex::encode(Sha256::digest(render(spec).as_bytes()))
}

/// Scientific notation with 12 significant digits.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        // folds −0.0 into 0.0
        return format!("{:.11e}", 0.0);
    }
    format!("{x:.11e}")
}

pub struct Column {
    pub name: &'static str,
    pub unit: &'static str,
}

pub const fn col(name: &'static str, unit: &'static str) -> Column {
    Column { name, unit }
}

/// A CSV table with a `#`-commented header naming the tool, the table kind,
/// the spec hash and each column's unit.
pub struct Table {
    kind: &'static str,
    hash: String,
    columns: Vec<Column>,
    notes: Vec<String>,
    body: String,
}

impl Table {
    pub fn new(kind: &'static str, spec: &ExperimentSpec, columns: Vec<Column>) -> Self {
        Self {
            kind,
            hash: spec_hash(spec),
            columns,
            notes: Vec::new(),
            body: String::new(),
        }
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns.len());
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    /// Blank line between data blocks, as gnuplot expects for `index`.
    pub fn block_break(&mut self) {
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# lightstore {VERSION} {}", self.kind);
        let _ = writeln!(out, "# spec_sha256 {}", self.hash);
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        for c in &self.columns {
            let _ = writeln!(out, "# column {} [{}]", c.name, c.unit);
        }
        let names: Vec<&str> = self.columns.iter().map(|c| c.name).collect();
        let _ = writeln!(out, "{}", names.join(","));
        out.push_str(&self.body);
        out
    }
}

/// Canonical experiment text preceded by tool version and content hash.
pub fn meta(spec: &ExperimentSpec) -> String {
    format!(
        "# lightstore {VERSION}\n# spec_sha256 {}\n{}",
        spec_hash(spec),
        render(spec)
    )
}

pub fn write(dir: &Path, name: &str, contents: &str) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lightstore::sequence::{scenario, Scenario};

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(num(1.0), "1.00000000000e0");
        assert_eq!(num(-0.0), num(0.0));
        assert_eq!(num(-2.5e-7), "-2.50000000000e-7");
    }

    #[test]
    fn table_layout() {
        let spec = scenario(Scenario::Fig2a).unwrap();
        let mut t = Table::new("test", &spec, vec![col("a", "µs"), col("b", "1")]);
        t.row(&[1.0, 2.0]);
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# lightstore"));
        assert_eq!(lines[1], format!("# spec_sha256 {}", spec_hash(&spec)));
        assert_eq!(lines[4], "a,b");
        assert_eq!(lines[5], "1.00000000000e0,2.00000000000e0");
    }

    #[test]
    fn hash_depends_on_content_only() {
        let a = scenario(Scenario::Fig2a).unwrap();
        let mut b = a.clone();
        assert_eq!(spec_hash(&a), spec_hash(&b));
        b.grid.nz += 1;
        assert_ne!(spec_hash(&a), spec_hash(&b));
        assert_eq!(spec_hash(&a).len(), 64);
    }
}

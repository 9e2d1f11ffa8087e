//! Flat-file outputs: CSV tables, whitespace data blocks and JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV cell.
#[derive(Clone, Copy, Debug)]
pub enum Cell {
    Int(i64),
    Float(f64),
    /// Two columns, `re,im`.
    Complex(C64),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<C64> for Cell {
    fn from(z: C64) -> Self {
        Cell::Complex(z)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    /// Complex columns are named `<name>_re,<name>_im` in `header`.
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match *c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Float(x) => fmt_float(x),
                    Cell::Complex(z) => format!("{},{}", fmt_float(z.re), fmt_float(z.im)),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Whitespace-separated columns, one block per curve, blocks separated by a
/// blank line. Each block starts with a `# name` comment.
pub fn data_blocks(blocks: &[(String, Vec<Vec<f64>>)]) -> String {
    let mut out = String::new();
    for (i, (name, rows)) in blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# {name}");
        for row in rows {
            let cols: Vec<String> = row.iter().map(|&x| fmt_float(x)).collect();
            out.push_str(&cols.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Writes files into one directory and remembers their names.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| Error::Io {
            path: root.display().to_string(),
            source,
        })?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.write(name, &table.to_csv())
    }

    pub fn blocks(&mut self, name: &str, blocks: &[(String, Vec<Vec<f64>>)]) -> Result<()> {
        self.write(name, &data_blocks(blocks))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
            path: name.to_string(),
            message: e.to_string(),
        })?;
        text.push('\n');
        self.write(name, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_format() {
        let mut t = Table::new(["n", "lambda", "z_re", "z_im"]);
        t.push(vec![1usize.into(), 0.5.into(), C64::new(1.0, -2.0).into()]);
        assert_eq!(
            t.to_csv(),
            "n,lambda,z_re,z_im\n1,5.0000000000000000e-1,1.0000000000000000e0,-2.0000000000000000e0\n"
        );
    }

    #[test]
    fn blocks_are_blank_line_separated() {
        let b = data_blocks(&[("a".into(), vec![vec![0.0, 1.0]]), ("b".into(), vec![vec![2.0, 3.0]])]);
        assert_eq!(b.split("\n\n").count(), 2);
        assert!(b.starts_with("# a\n0.0000000000000000e0 1.0000000000000000e0\n"));
    }

    #[test]
    fn files_are_listed_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path().join("x")).unwrap();
        out.write("a.txt", "1").unwrap();
        out.write("a.txt", "2").unwrap();
        assert_eq!(out.files(), &["a.txt".to_string()]);
        assert_eq!(fs::read_to_string(dir.path().join("x/a.txt")).unwrap(), "2");
    }
}

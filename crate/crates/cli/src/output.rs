use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// One CSV cell. Floats print with 17 significant digits so they read back
/// bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Csv,
    Json,
}

/// An emitted file, as listed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub kind: FileKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    pub rows: usize,
}

/// Writes files into one run directory and keeps the list for the manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

impl OutputDir {
    /// Creates the directory and checks that it accepts files.
    pub fn create(root: &Path) -> Result<Self, CliError> {
        let unwritable = |e: std::io::Error| CliError::Config(format!("output directory {} not writable: {e}", root.display()));
        std::fs::create_dir_all(root).map_err(unwritable)?;
        let probe = root.join(".diffsim-probe");
        File::create(&probe).map_err(unwritable)?;
        std::fs::remove_file(&probe).map_err(unwritable)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    pub fn write_csv<R>(&mut self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = R>) -> Result<usize, CliError>
    where
        R: AsRef<[Cell]>,
    {
        let path = self.root.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        let mut n = 0;
        let mut line = columns.join(",");
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io_err(&path))?;
        for row in rows {
            let row = row.as_ref();
            if row.len() != columns.len() {
                panic!("{name}: row of {} cells for {} columns", row.len(), columns.len());
            }
            line.clear();
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                match c {
                    Cell::Int(v) => line.push_str(&v.to_string()),
                    Cell::Float(v) => line.push_str(&format_float(*v)),
                }
            }
            line.push('\n');
            w.write_all(line.as_bytes()).map_err(io_err(&path))?;
            n += 1;
        }
        w.flush().map_err(io_err(&path))?;
        self.files.push(OutputFile {
            file: name.to_string(),
            kind: FileKind::Csv,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: n,
        });
        Ok(n)
    }

    /// `rows` counts the records in the document, for the manifest.
    pub fn write_json(&mut self, name: &str, value: &impl Serialize, rows: usize) -> Result<(), CliError> {
        let path = self.root.join(name);
        write_json_file(&path, value)?;
        self.files.push(OutputFile { file: name.to_string(), kind: FileKind::Json, columns: Vec::new(), rows });
        Ok(())
    }
}

fn write_json_file(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub outputs: Vec<OutputFile>,
    pub converged: bool,
    /// Human-readable notes on anything that did not converge.
    pub flags: Vec<String>,
    pub results: serde_json::Value,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json_file(&dir.join(MANIFEST), self)
    }
}

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
}

impl Cell {
    /// Floats carry 17 significant digits so they round-trip exactly.
    pub fn render(self) -> String {
        match self {
            Cell::F(x) => format!("{x:.16e}"),
            Cell::I(i) => i.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::I(b as i64)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::I(i as i64)
    }
}

/// One CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// A row of NaN, used in place of a failed point.
    pub fn push_nan(&mut self, leading: &[Cell]) {
        let mut row = leading.to_vec();
        row.resize(self.header.len(), Cell::F(f64::NAN));
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.render()))?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }
}

/// Curve file name for a cutoff value, e.g. `omega_c_8.5`.
pub fn curve_name(omega_c: f64) -> String {
    format!("omega_c_{omega_c}")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverRecord {
    pub h: f64,
    pub finest_h: f64,
    pub tol: f64,
    pub diff_u: f64,
    pub diff_v: f64,
    pub refinements: usize,
    pub richardson: bool,
    pub kernel: String,
}

impl From<&nmqfi_core::dynamics::SolverMeta> for SolverRecord {
    fn from(m: &nmqfi_core::dynamics::SolverMeta) -> Self {
        Self {
            h: m.h,
            finest_h: m.finest_h,
            tol: m.tol,
            diff_u: m.diff_u,
            diff_v: m.diff_v,
            refinements: m.refinements,
            richardson: m.richardson,
            kernel: m.kernel.to_string(),
        }
    }
}

/// Outcome of one parameter point.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PointRecord {
    pub label: String,
    pub omega_c: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl PointRecord {
    pub fn ok(label: impl Into<String>, omega_c: f64) -> Self {
        Self {
            label: label.into(),
            omega_c,
            converged: true,
            ..Default::default()
        }
    }

    pub fn failed(label: impl Into<String>, omega_c: f64, err: &nmqfi_core::Error) -> Self {
        Self {
            label: label.into(),
            omega_c,
            converged: false,
            error: Some(err.to_string()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    /// Path relative to the scenario directory.
    pub path: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub config: Config,
    pub wall_clock_seconds: f64,
    pub status: String,
    pub points: Vec<PointRecord>,
    pub outputs: Vec<OutputFile>,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.converged)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes each table as `<dir>/<name>.csv` and returns the checksummed list.
pub fn write_tables(dir: &Path, tables: &[Table]) -> io::Result<Vec<OutputFile>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(tables.len());
    for t in tables {
        let bytes = t.to_csv()?;
        let file = format!("{}.csv", t.name);
        fs::write(dir.join(&file), &bytes)?;
        out.push(OutputFile {
            path: file,
            rows: t.rows.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    Ok(out)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

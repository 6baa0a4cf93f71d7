//! File formats: grids as JSON or CSV, and iteration traces as CSV.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lloyd::LloydTrace;
use crate::voronoi::Grid;

/// `{"level": N, "dim": d, "points": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub level: usize,
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl From<&Grid> for GridFile {
    fn from(g: &Grid) -> Self {
        GridFile { level: g.len(), dim: g.dim(), points: g.to_vecs() }
    }
}

impl GridFile {
    pub fn into_grid(self) -> Result<Grid> {
        if self.points.len() != self.level || self.points.iter().any(|p| p.len() != self.dim) {
            return Err(Error::Config(format!(
                "grid file declares {} points of dimension {}, found {} points",
                self.level,
                self.dim,
                self.points.len()
            )));
        }
        Grid::new(self.points)
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

pub fn write_grid_json<W: Write>(grid: &Grid, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &GridFile::from(grid)).map_err(io_err)
}

pub fn read_grid_json<R: Read>(r: R) -> Result<Grid> {
    let file: GridFile = serde_json::from_reader(r).map_err(io_err)?;
    file.into_grid()
}

/// One point per row under a `x1,...,xd` header.
pub fn write_grid_csv<W: Write>(grid: &Grid, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record((1..=grid.dim()).map(|k| format!("x{k}"))).map_err(io_err)?;
    for p in grid.points() {
        out.write_record(p.iter().map(|v| v.to_string())).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads the grid CSV format; the header row is optional.
pub fn read_grid_csv<R: Read>(r: R) -> Result<Grid> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut points = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(io_err)?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(p) => points.push(p),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Config(format!("grid CSV row {}: {e}", line + 1))),
        }
    }
    Grid::new(points)
}

pub const TRACE_HEADER: [&str; 8] = ["k", "energy", "gap", "grad_norm", "min_pair_dist", "max_disp", "radius", "pullbacks"];

pub fn write_trace_csv<W: Write>(trace: &LloydTrace, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER).map_err(io_err)?;
    for r in &trace.rows {
        out.write_record([
            r.k.to_string(),
            r.energy.to_string(),
            r.energy_gap.to_string(),
            r.grad_norm.to_string(),
            r.min_pair_dist.to_string(),
            r.max_displacement.to_string(),
            r.grid_radius.to_string(),
            r.pullbacks.to_string(),
        ])
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

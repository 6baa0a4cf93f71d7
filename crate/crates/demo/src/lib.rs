//! Browser bindings. Every export takes plain numbers and strings and returns
//! a JSON string, so the page needs no generated glue beyond wasm-bindgen's.

use quantgrid::hessian::{hessian_1d, hessian_2d};
use quantgrid::lloyd::{lloyd_step, Step};
use quantgrid::measure::{Distribution, DistributionSpec};
use quantgrid::voronoi::{cell_polygon, planar_window};
use quantgrid::{distortion, gradient, Backend, Grid};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn law(name: &str, dim: usize) -> Result<Distribution, String> {
    let d = DistributionSpec::parse_name(name).and_then(|s| s.build()).map_err(|e| e.to_string())?;
    if d.dim() != dim {
        return Err(format!("{name} is {}-dimensional, expected {dim}", d.dim()));
    }
    Ok(d)
}

fn frame(grid: &Grid, dist: &Distribution, backend: &Backend) -> Result<Value, String> {
    let e = distortion(grid, dist, backend).map_err(|e| e.to_string())?.value;
    let g = gradient(grid, dist, backend).map_err(|e| e.to_string())?;
    let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(json!({ "points": grid.to_vecs(), "energy": e, "grad_norm": grad_norm }))
}

fn iterate(
    points: Vec<f64>,
    dim: usize,
    dist: &Distribution,
    iters: usize,
    mut extra: impl FnMut(&Grid, &mut Value),
) -> Result<Value, String> {
    let backend = Backend::exact_for(dist).ok_or("no exact backend for this law")?;
    let mut grid = Grid::from_flat(dim, points).map_err(|e| e.to_string())?;
    let mut frames = Vec::with_capacity(iters + 1);
    for k in 0..=iters {
        let mut f = frame(&grid, dist, &backend)?;
        extra(&grid, &mut f);
        if k == iters {
            frames.push(f);
            break;
        }
        let Step { grid: next, gap, empty_cells, .. } = lloyd_step(&grid, dist, &backend).map_err(|e| e.to_string())?;
        f["gap"] = json!(gap);
        f["empty_cells"] = json!(empty_cells);
        frames.push(f);
        if gap == 0.0 {
            break;
        }
        grid = next;
    }
    Ok(json!({ "frames": frames }))
}

fn respond(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Lloyd iterates of a 1D grid.
pub fn lloyd_1d_value(dist: &str, points: Vec<f64>, iters: usize) -> Result<Value, String> {
    let d = law(dist, 1)?;
    iterate(points, 1, &d, iters, |_, _| {})
}

/// Lloyd iterates of a planar grid, with the Voronoi cell of every point
/// clipped to the integration window.
pub fn lloyd_2d_value(dist: &str, points: Vec<f64>, iters: usize) -> Result<Value, String> {
    let d = law(dist, 2)?;
    let (lo, hi) = planar_window(&d, 3.0).map_err(|e| e.to_string())?;
    let mut out = iterate(points, 2, &d, iters, |g, f| {
        let cells: Vec<_> = (0..g.len()).map(|i| cell_polygon(g, i, lo, hi)).collect();
        f["cells"] = json!(cells);
    })?;
    out["window"] = json!({ "lo": lo, "hi": hi });
    Ok(out)
}

/// Hessian of the distortion at a grid, with its spectrum and label.
pub fn hessian_value(dist: &str, dim: usize, points: Vec<f64>) -> Result<Value, String> {
    let d = law(dist, dim)?;
    let grid = Grid::from_flat(dim, points).map_err(|e| e.to_string())?;
    let r = match dim {
        1 => hessian_1d(&grid, &d),
        2 => hessian_2d(&grid, &d, 64),
        _ => return Err("only 1D and 2D grids".into()),
    }
    .map_err(|e| e.to_string())?;
    Ok(json!({
        "matrix": r.matrix,
        "size": grid.len() * dim,
        "eigenvalues": r.eigenvalues,
        "label": r.label.as_str(),
        "fd_discrepancy": r.fd_discrepancy,
    }))
}

#[wasm_bindgen]
pub fn lloyd_1d(dist: &str, points: Vec<f64>, iters: usize) -> String {
    respond(lloyd_1d_value(dist, points, iters))
}

#[wasm_bindgen]
pub fn lloyd_2d(dist: &str, points: Vec<f64>, iters: usize) -> String {
    respond(lloyd_2d_value(dist, points, iters))
}

#[wasm_bindgen]
pub fn hessian(dist: &str, dim: usize, points: Vec<f64>) -> String {
    respond(hessian_value(dist, dim, points))
}

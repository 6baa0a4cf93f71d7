mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use quantgrid::distortion::{distortion, estimate_optimal_error, random_grid};
use quantgrid::hessian::{hessian_1d, hessian_2d, HessianReport};
use quantgrid::io::{read_grid_csv, read_grid_json, write_grid_csv, write_grid_json, write_trace_csv};
use quantgrid::lloyd::{diagnose, ladder, run, split_init, Diagnostics, LloydRun, LloydTrace, Status};
use quantgrid::measure::{Distribution, McParams};
use quantgrid::radius::{measured_radius, solve_radius, RadiusBound};
use quantgrid::{Grid, LloydConfig};
use serde::Serialize;
use serde_json::{json, Value};

use config::{build, Options, RadiusArg, Resolved};

#[derive(Parser)]
#[command(name = "quantgrid", version, about = "Optimal quantization grids by batch Lloyd iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lloyd iteration from a random or given initial grid.
    Run(Options),
    /// Splitting ladder from {mean} up to Nmax points.
    Ladder(Options),
    /// Radius-bounded Lloyd iteration at level N.
    Bounded(Options),
    /// A-priori radius bound for grids with error at most c.
    Radius(Options),
    /// Hessian and stability label of a (stationary) grid.
    Hessian(Options),
    /// Upper estimate of the optimal error over random restarts.
    OptimalError(Options),
}

impl Command {
    fn split(self) -> (&'static str, Options) {
        match self {
            Command::Run(o) => ("run", o),
            Command::Ladder(o) => ("ladder", o),
            Command::Bounded(o) => ("bounded", o),
            Command::Radius(o) => ("radius", o),
            Command::Hessian(o) => ("hessian", o),
            Command::OptimalError(o) => ("optimal-error", o),
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    code: String,
    message: String,
    exit: u8,
}

impl CliError {
    pub fn config(code: &str, message: String) -> Self {
        CliError { code: code.into(), message, exit: 2 }
    }
}

impl From<quantgrid::Error> for CliError {
    fn from(e: quantgrid::Error) -> Self {
        CliError { code: e.code().into(), message: e.to_string(), exit: if e.is_config() { 2 } else { 3 } }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::config("io_error", format!("{}: {e}", path.display()))
}

struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    fn new(dir: &str) -> Result<Self, CliError> {
        let dir = PathBuf::from(dir);
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Artifacts { dir })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| io_error(&path, e))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::config("io_error", e.to_string()))?;
        use std::io::Write;
        writeln!(w).map_err(|e| io_error(&self.dir.join(name), e))
    }

    fn grid(&self, grid: &Grid) -> Result<(), CliError> {
        write_grid_json(grid, self.create("grid.json")?)?;
        write_grid_csv(grid, self.create("grid.csv")?)?;
        Ok(())
    }

    fn trace(&self, trace: Option<&LloydTrace>) -> Result<(), CliError> {
        let empty = LloydTrace {
            rows: Vec::new(),
            status: Status::ConvergedGap,
            degenerate_cell_seen: false,
            final_energy: f64::NAN,
            final_grad_norm: f64::NAN,
            final_radius: f64::NAN,
            descent_violations: 0,
            pullback_events: Vec::new(),
        };
        write_trace_csv(trace.unwrap_or(&empty), self.create("trace.csv")?)?;
        Ok(())
    }
}

fn require(v: Option<usize>, flag: &str) -> Result<usize, CliError> {
    match v {
        Some(n) if n >= 1 => Ok(n),
        Some(_) => Err(CliError::config("config_invalid", format!("{flag} must be at least 1"))),
        None => Err(CliError::config("config_invalid", format!("{flag} is required"))),
    }
}

fn load_grid(path: &str) -> Result<Grid, CliError> {
    let file = File::open(path).map_err(|e| io_error(Path::new(path), e))?;
    if path.ends_with(".json") {
        Ok(read_grid_json(file)?)
    } else {
        Ok(read_grid_csv(file)?)
    }
}

fn status_str(s: Status) -> &'static str {
    match s {
        Status::ConvergedGap => "converged_gap",
        Status::ConvergedMove => "converged_move",
        Status::MaxIter => "max_iter",
    }
}

fn mc_params(cfg: &Resolved) -> McParams {
    McParams { samples: cfg.mc_samples, seed: cfg.seed }
}

/// Summary fields describing a finished Lloyd run.
fn run_summary(cfg: &Resolved, dist: &Distribution, out: &LloydRun) -> Value {
    let t = &out.trace;
    let diag: Diagnostics = diagnose(t);
    json!({
        "command": cfg.command,
        "config": cfg,
        "n": out.grid.len(),
        "dim": out.grid.dim(),
        "final_energy": t.final_energy,
        "quant_error": t.final_energy.max(0.0).sqrt(),
        "grad_norm": t.final_grad_norm,
        "status": status_str(t.status),
        "iterations": t.rows.len(),
        "radius": measured_radius(&out.grid, dist),
        "degenerate_cell_seen": t.degenerate_cell_seen,
        "descent_violations": t.descent_violations,
        "pullbacks": t.pullback_events.len(),
        "diagnostics": diag,
    })
}

fn initial_grid(cfg: &Resolved, dist: &Distribution, n: usize) -> Result<Grid, CliError> {
    match &cfg.init {
        Some(path) => {
            let g = load_grid(path)?;
            if g.len() != n || g.dim() != dist.dim() {
                return Err(CliError::config(
                    "config_invalid",
                    format!("initial grid has {} points in dimension {}, expected {n} in {}", g.len(), g.dim(), dist.dim()),
                ));
            }
            Ok(g)
        }
        None => Ok(random_grid(dist, n, cfg.seed, 0)?),
    }
}

fn cmd_run(cfg: &Resolved, dist: &Distribution, art: &Artifacts) -> Result<Value, CliError> {
    let n = require(cfg.n, "--N")?;
    let g0 = initial_grid(cfg, dist, n)?;
    let out = run(&g0, dist, &cfg.lloyd)?;
    art.grid(&out.grid)?;
    art.trace(Some(&out.trace))?;
    Ok(run_summary(cfg, dist, &out))
}

fn level_summaries(levels: &[quantgrid::lloyd::Level], dist: &Distribution) -> Vec<Value> {
    levels
        .iter()
        .map(|l| {
            json!({
                "n": l.n,
                "energy": l.trace.final_energy,
                "quant_error": l.trace.final_energy.max(0.0).sqrt(),
                "grad_norm": l.trace.final_grad_norm,
                "iterations": l.trace.rows.len(),
                "status": status_str(l.trace.status),
                "radius": measured_radius(&l.grid, dist),
                "upper_energy": l.upper_energy,
                "bracket_ok": l.bracket_ok,
            })
        })
        .collect()
}

fn finish_ladder(
    cfg: &Resolved,
    dist: &Distribution,
    art: &Artifacts,
    levels: Vec<quantgrid::lloyd::Level>,
) -> Result<(Value, LloydRun), CliError> {
    let summaries = level_summaries(&levels, dist);
    let last = levels.into_iter().last().expect("at least one level");
    let out = LloydRun { grid: last.grid, trace: last.trace };
    art.grid(&out.grid)?;
    art.trace(Some(&out.trace))?;
    let mut summary = run_summary(cfg, dist, &out);
    summary["levels"] = Value::Array(summaries);
    Ok((summary, out))
}

fn cmd_ladder(cfg: &Resolved, dist: &Distribution, art: &Artifacts) -> Result<Value, CliError> {
    let n_max = require(cfg.n_max.or(cfg.n), "--Nmax")?;
    let levels = ladder(dist, n_max, &cfg.lloyd, cfg.seed)?;
    Ok(finish_ladder(cfg, dist, art, levels)?.0)
}

fn cmd_bounded(cfg: &Resolved, dist: &Distribution, art: &Artifacts) -> Result<Value, CliError> {
    let n = require(cfg.n, "--N")?;
    let radius = cfg.radius.ok_or_else(|| CliError::config("config_invalid", "--radius is required".into()))?;
    match radius {
        RadiusArg::Fixed(_) => {
            if let Some(path) = &cfg.init {
                let g0 = load_grid(path)?;
                let out = run(&g0, dist, &cfg.lloyd)?;
                art.grid(&out.grid)?;
                art.trace(Some(&out.trace))?;
                return Ok(run_summary(cfg, dist, &out));
            }
            let levels = ladder(dist, n, &cfg.lloyd, cfg.seed)?;
            Ok(finish_ladder(cfg, dist, art, levels)?.0)
        }
        RadiusArg::Auto => {
            if n < 2 {
                return Err(CliError::config("config_invalid", "--radius auto needs N >= 2".into()));
            }
            let unbounded = LloydConfig { radius_bound: None, ..cfg.lloyd.clone() };
            let prev = ladder(dist, n - 1, &unbounded, cfg.seed)?;
            let prev = prev.last().expect("n - 1 >= 1 levels");
            let init = split_init(&prev.grid, dist, &cfg.lloyd.backend, cfg.seed)?;
            let e_prev = prev.trace.final_energy.sqrt();
            let c = init.energy.sqrt();
            let bound = solve_radius(dist, c, e_prev, mc_params(cfg))?;
            let r = bound.radius.max(2.0 * measured_radius(&prev.grid, dist));
            art.json("radius.json", &bound)?;
            let bounded = LloydConfig { radius_bound: Some(r), ..cfg.lloyd.clone() };
            let out = run(&init.grid, dist, &bounded)?;
            art.grid(&out.grid)?;
            art.trace(Some(&out.trace))?;
            let mut summary = run_summary(cfg, dist, &out);
            summary["radius_bound"] = json!({ "used": r, "solver": bound });
            Ok(summary)
        }
    }
}

fn cmd_radius(cfg: &Resolved, dist: &Distribution, art: &Artifacts) -> Result<Value, CliError> {
    let (c, e_prev, out) = match (cfg.c, cfg.e_prev) {
        (Some(c), Some(e)) => (c, e, None),
        _ => {
            let n = require(cfg.n, "--N (or both --c and --e-prev)")?;
            if n < 2 && cfg.e_prev.is_none() {
                return Err(CliError::config("config_invalid", "the radius bound needs N >= 2 or --e-prev".into()));
            }
            let levels = ladder(dist, n, &cfg.lloyd, cfg.seed)?;
            let e_prev = cfg.e_prev.unwrap_or_else(|| levels[n - 2].trace.final_energy.sqrt());
            let last = levels.into_iter().last().expect("n levels");
            let c = cfg.c.unwrap_or_else(|| last.trace.final_energy.sqrt());
            (c, e_prev, Some(LloydRun { grid: last.grid, trace: last.trace }))
        }
    };
    let bound: RadiusBound = solve_radius(dist, c, e_prev, mc_params(cfg))?;
    art.json("radius.json", &bound)?;
    let mut summary = match &out {
        Some(run) => {
            art.grid(&run.grid)?;
            art.trace(Some(&run.trace))?;
            run_summary(cfg, dist, run)
        }
        None => {
            art.trace(None)?;
            json!({ "command": cfg.command, "config": cfg })
        }
    };
    summary["radius_bound"] = serde_json::to_value(&bound).expect("serializable");
    Ok(summary)
}

fn cmd_hessian(cfg: &Resolved, dist: &Distribution, art: &Artifacts) -> Result<Value, CliError> {
    let (out, levels) = match &cfg.init {
        Some(_) => {
            let n = require(cfg.n, "--N")?;
            let g0 = initial_grid(cfg, dist, n)?;
            (run(&g0, dist, &cfg.lloyd)?, None)
        }
        None => {
            let n = require(cfg.n, "--N")?;
            let levels = ladder(dist, n, &cfg.lloyd, cfg.seed)?;
            let summaries = level_summaries(&levels, dist);
            let last = levels.into_iter().last().expect("n levels");
            (LloydRun { grid: last.grid, trace: last.trace }, Some(summaries))
        }
    };
    let report: HessianReport = match dist.dim() {
        1 => hessian_1d(&out.grid, dist)?,
        2 => hessian_2d(&out.grid, dist, cfg.quad_points)?,
        d => return Err(CliError::config("unsupported_backend", format!("no Hessian formula in dimension {d}"))),
    };
    art.grid(&out.grid)?;
    art.trace(Some(&out.trace))?;
    art.json("hessian.json", &report)?;
    let mut summary = run_summary(cfg, dist, &out);
    summary["hessian_label"] = json!(report.label.as_str());
    summary["hessian_min_eigenvalue"] = json!(report.eigenvalues.first());
    if let Some(levels) = levels {
        summary["levels"] = Value::Array(levels);
    }
    Ok(summary)
}

fn cmd_optimal_error(cfg: &Resolved, dist: &Distribution, art: &Artifacts) -> Result<Value, CliError> {
    let n = require(cfg.n, "--N")?;
    let est = estimate_optimal_error(dist, n, cfg.restarts, cfg.seed, &cfg.lloyd)?;
    // replay the winning restart for its trace
    let g0 = random_grid(dist, n, cfg.seed, est.restart as u64)?;
    let out = run(&g0, dist, &cfg.lloyd)?;
    art.grid(&out.grid)?;
    art.trace(Some(&out.trace))?;
    let mut summary = run_summary(cfg, dist, &out);
    summary["optimal_error"] = json!({
        "error": est.error,
        "energy": est.energy,
        "restart": est.restart,
        "energies": est.energies,
        "check_energy": distortion(&est.grid, dist, &cfg.lloyd.backend)?.value,
    });
    Ok(summary)
}

fn execute(command: &str, options: Options) -> Result<(Value, Artifacts), CliError> {
    let options = options.resolve()?;
    let (cfg, dist) = build(command, &options)?;
    let art = Artifacts::new(&cfg.out)?;
    let result = match command {
        "run" => cmd_run(&cfg, &dist, &art),
        "ladder" => cmd_ladder(&cfg, &dist, &art),
        "bounded" => cmd_bounded(&cfg, &dist, &art),
        "radius" => cmd_radius(&cfg, &dist, &art),
        "hessian" => cmd_hessian(&cfg, &dist, &art),
        "optimal-error" => cmd_optimal_error(&cfg, &dist, &art),
        _ => unreachable!("clap restricts subcommands"),
    };
    match result {
        Ok(summary) => {
            art.json("summary.json", &summary)?;
            Ok((summary, art))
        }
        Err(e) => {
            // best effort: the error report also lands next to the artifacts
            let _ = art.json("error.json", &error_json(&e));
            Err(e)
        }
    }
}

fn error_json(e: &CliError) -> Value {
    json!({ "error": { "code": e.code, "message": e.message, "exit_code": e.exit } })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config("usage", e.to_string().trim().to_string());
            eprintln!("{}", error_json(&err));
            return ExitCode::from(2);
        }
    };
    let (command, options) = cli.command.split();
    match execute(command, options) {
        Ok((summary, art)) => {
            println!(
                "{} N={} energy={} status={} -> {}",
                command,
                summary["n"],
                summary["final_energy"],
                summary["status"].as_str().unwrap_or("-"),
                art.dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(e.exit)
        }
    }
}

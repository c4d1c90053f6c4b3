//! Command-line interface: generate, solve, validate, bench, export.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Coord, Grid3D, GridError, ObstaclePattern};
use crate::instance::{self, InstanceError, PatternKind, PatternSpec};
use crate::solver::{solve, PhaseBreakdown, Plan, SolveError, SolverOptions};
use crate::validate::{self, RunRecord};

/// Environment variable capping worker threads (0 = one per core).
pub const THREADS_ENV: &str = "RUBIKROUTE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("malformed plan file: {0}")]
    Plan(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("plan is invalid: {0} violation(s)")]
    Invalid(usize),
    #[error("bad {THREADS_ENV} value {0:?}")]
    Threads(String),
    #[error(transparent)]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Parser)]
#[command(name = "rubikroute", version, about = "Labeled multi-robot routing on 3D grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    #[value(name = "rth3d")]
    Rth3d,
    #[value(name = "rth3d-lba")]
    Rth3dLba,
}

impl Algo {
    fn options(self) -> SolverOptions {
        SolverOptions {
            lba: self == Algo::Rth3dLba,
            record_phases: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pattern {
    Uniform,
    Rings,
    Blocks,
}

impl From<Pattern> for PatternKind {
    fn from(p: Pattern) -> Self {
        match p {
            Pattern::Uniform => PatternKind::UniformRandom,
            Pattern::Rings => PatternKind::Rings,
            Pattern::Blocks => PatternKind::Blocks,
        }
    }
}

#[derive(Debug, Args)]
struct PatternArgs {
    /// Start/goal pattern.
    #[arg(long, value_enum, default_value = "uniform")]
    pattern: Pattern,
    /// Place building columns at (3i+1, 3j+1, *).
    #[arg(long)]
    buildings: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an instance file.
    Generate {
        #[arg(long, num_args = 3, value_names = ["M1", "M2", "M3"], required = true)]
        dims: Vec<usize>,
        /// Robots per grid vertex, as a decimal or a fraction like 1/3.
        #[arg(long, value_parser = parse_density)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        pattern: PatternArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Solve an instance and write the plan.
    Solve {
        instance: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "rth3d-lba")]
        algo: Algo,
    },
    /// Audit a plan against its instance; exits 0 iff the plan is valid.
    Validate { instance: PathBuf, plan: PathBuf },
    /// Solve a sweep of generated instances and write one CSV row per run.
    Bench {
        /// Comma-separated sizes such as 24x12x6,48x24x12.
        #[arg(long, value_delimiter = ',', value_parser = parse_size, required = true)]
        sizes: Vec<[usize; 3]>,
        #[arg(long, value_delimiter = ',', value_enum, default_value = "rth3d,rth3d-lba")]
        algos: Vec<Algo>,
        /// Number of seeds per configuration, starting at --first-seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, value_delimiter = ',', value_parser = parse_density, default_value = "1/3")]
        densities: Vec<f64>,
        #[command(flatten)]
        pattern: PatternArgs,
        /// Write 0 for runtime so repeated runs give identical files.
        #[arg(long)]
        no_timing: bool,
        /// Also write per-configuration aggregates to this CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write per-robot timed waypoints ("t x y z" lines, one block per robot).
    Export {
        plan: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn parse_density(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
            if b == 0.0 {
                return Err("zero denominator".into());
            }
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("density must be positive, got {s}"))
    }
}

fn parse_size(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        return Err(format!("expected M1xM2xM3, got {s}"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    }
    Ok(out)
}

/// Plan file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanDoc {
    pub makespan: usize,
    pub paths: Vec<Vec<Coord>>,
    pub phases: Option<PhaseBreakdown>,
    pub lower_bound: usize,
}

impl From<&Plan> for PlanDoc {
    fn from(p: &Plan) -> Self {
        PlanDoc {
            makespan: p.makespan,
            paths: p.paths.clone(),
            phases: p.phases,
            lower_bound: p.lower_bound,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn make_grid(dims: [usize; 3], buildings: bool) -> Result<Grid3D, GridError> {
    let pattern = if buildings {
        ObstaclePattern::Buildings
    } else {
        ObstaclePattern::None
    };
    Grid3D::with_pattern(dims[0], dims[1], dims[2], pattern)
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| CliError::Threads(v))?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

/// Writes the waypoint text for a set of paths.
pub fn waypoints<W: Write>(paths: &[Vec<Coord>], mut w: W) -> std::io::Result<()> {
    for (i, p) in paths.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        writeln!(w, "# robot {i}")?;
        for (t, c) in p.iter().enumerate() {
            writeln!(w, "{t} {} {} {}", c.x, c.y, c.z)?;
        }
    }
    Ok(())
}

fn bench_runs(
    grids: &[Grid3D],
    kind: PatternKind,
    densities: &[f64],
    algos: &[Algo],
    seeds: std::ops::Range<u64>,
    timing: bool,
) -> Result<Vec<RunRecord>, CliError> {
    let mut jobs = Vec::new();
    for grid in grids {
        for &density in densities {
            for &algo in algos {
                for seed in seeds.clone() {
                    jobs.push((grid, density, algo, seed));
                }
            }
        }
    }
    let mut rows = jobs
        .par_iter()
        .map(|&(grid, density, algo, seed)| -> Result<RunRecord, CliError> {
            let inst = instance::generate(grid, PatternSpec { kind, density }, seed)?;
            let clock = Instant::now();
            let plan = solve(&inst, algo.options())?;
            let runtime_ms = if timing { clock.elapsed().as_millis() as u64 } else { 0 };
            let report = validate::validate(&inst, &plan.paths);
            if !report.ok {
                return Err(CliError::Invalid(report.violations.len()));
            }
            let phases = plan.phases.unwrap_or_default();
            let (m1, m2, m3) = grid.dims();
            Ok(RunRecord {
                algorithm: algo.options().algorithm_name().into(),
                m1,
                m2,
                m3,
                density,
                seed,
                robots: inst.num_real(),
                makespan: report.makespan,
                lower_bound: report.lower_bound,
                ratio: report.ratio,
                runtime_ms,
                phase_unlabeled1: phases.unlabeled1,
                phase_z1: phases.z1,
                phase_xy: phases.xy,
                phase_z2: phases.z2,
                phase_unlabeled2: phases.unlabeled2,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| {
        (&a.algorithm, a.m1, a.m2, a.m3, a.seed)
            .cmp(&(&b.algorithm, b.m1, b.m2, b.m3, b.seed))
            .then(a.density.total_cmp(&b.density))
    });
    Ok(rows)
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Generate {
            dims,
            density,
            seed,
            pattern,
            output,
        } => {
            let grid = make_grid([dims[0], dims[1], dims[2]], pattern.buildings)?;
            let spec = PatternSpec {
                kind: pattern.pattern.into(),
                density,
            };
            let inst = instance::generate(&grid, spec, seed)?;
            write(&output, &instance::save(&inst))?;
            println!("robots={} capacity={}", inst.num_robots(), grid.capacity());
        }
        Command::Solve {
            instance: path,
            output,
            algo,
        } => {
            let inst = instance::load(&read(&path)?)?;
            let pool = thread_pool()?;
            let clock = Instant::now();
            let plan = pool.install(|| solve(&inst, algo.options()))?;
            let runtime = clock.elapsed().as_millis();
            let doc = PlanDoc::from(&plan);
            write(&output, &serde_json::to_vec(&doc)?)?;
            println!(
                "makespan={} lower_bound={} ratio={:.4} runtime_ms={runtime}",
                plan.makespan, plan.lower_bound, plan.ratio
            );
        }
        Command::Validate { instance: ipath, plan } => {
            let inst = instance::load(&read(&ipath)?)?;
            let doc: PlanDoc = serde_json::from_slice(&read(&plan)?)?;
            let report = validate::validate(&inst, &doc.paths);
            for v in report.violations.iter().take(20) {
                eprintln!(
                    "violation {:?} at t={} robots={:?} coords={:?}",
                    v.kind, v.timestep, v.robots, v.coords
                );
            }
            if !report.ok {
                return Err(CliError::Invalid(report.violations.len()));
            }
            if doc.makespan != report.makespan {
                eprintln!(
                    "warning: plan file states makespan {} but paths give {}",
                    doc.makespan, report.makespan
                );
            }
            println!(
                "ok makespan={} lower_bound={} ratio={:.4}",
                report.makespan, report.lower_bound, report.ratio
            );
        }
        Command::Bench {
            sizes,
            algos,
            seeds,
            first_seed,
            densities,
            pattern,
            no_timing,
            summary,
            output,
        } => {
            let grids = sizes
                .iter()
                .map(|&d| make_grid(d, pattern.buildings))
                .collect::<Result<Vec<_>, _>>()?;
            let pool = thread_pool()?;
            let rows = pool.install(|| {
                bench_runs(
                    &grids,
                    pattern.pattern.into(),
                    &densities,
                    &algos,
                    first_seed..first_seed + seeds,
                    !no_timing,
                )
            })?;
            let mut buf = Vec::new();
            validate::write_runs_csv(&rows, &mut buf)?;
            write(&output, &buf)?;
            if let Some(path) = summary {
                let mut wr = csv::Writer::from_writer(Vec::new());
                for row in validate::stats(&rows) {
                    wr.serialize(row)?;
                }
                let bytes = wr.into_inner().map_err(|e| CliError::Io {
                    path: path.clone(),
                    source: e.into_error(),
                })?;
                write(&path, &bytes)?;
            }
            println!("rows={}", rows.len());
        }
        Command::Export { plan, output } => {
            let doc: PlanDoc = serde_json::from_slice(&read(&plan)?)?;
            let mut buf = Vec::new();
            waypoints(&doc.paths, &mut buf).expect("writing to memory cannot fail");
            match output {
                Some(path) => write(&path, &buf)?,
                None => match std::io::stdout().write_all(&buf) {
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                        return Err(CliError::Io {
                            path: PathBuf::from("<stdout>"),
                            source: e,
                        })
                    }
                    _ => {}
                },
            }
        }
    }
    Ok(())
}

/// Runs the CLI on `argv` (including the program name) and returns the exit
/// code: 0 on success, 1 on failure or invalid plans, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

//! Plan audit and metrics. Works on raw path data only: endpoints,
//! continuity, bounds, obstacles, vertex collisions and head-on swaps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::Coord;
use crate::instance::Instance;

/// Violations reported before the audit stops collecting.
pub const MAX_VIOLATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    RobotCount,
    EmptyPath,
    WrongStart,
    WrongGoal,
    Discontinuity,
    OutOfBounds,
    Obstacle,
    VertexCollision,
    EdgeSwap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub timestep: usize,
    pub robots: Vec<usize>,
    pub coords: Vec<Coord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    /// Last timestep at which a real robot moves.
    pub makespan: usize,
    pub lower_bound: usize,
    pub ratio: f64,
}

/// `makespan / max(lower_bound, 1)`.
pub fn ratio(makespan: usize, lower_bound: usize) -> f64 {
    makespan as f64 / lower_bound.max(1) as f64
}

/// Largest start-to-goal grid distance over real robots.
pub fn lower_bound(instance: &Instance) -> usize {
    let g = &instance.grid;
    instance.starts[..instance.virtual_from]
        .iter()
        .zip(&instance.goals[..instance.virtual_from])
        .map(|(&s, &t)| g.distance(s, t))
        .max()
        .unwrap_or(0)
}

struct Collector {
    violations: Vec<Violation>,
}

impl Collector {
    fn push(&mut self, kind: ViolationKind, timestep: usize, robots: Vec<usize>, coords: Vec<Coord>) {
        if self.violations.len() < MAX_VIOLATIONS {
            self.violations.push(Violation {
                kind,
                timestep,
                robots,
                coords,
            });
        }
    }

    fn full(&self) -> bool {
        self.violations.len() >= MAX_VIOLATIONS
    }
}

/// Audits `paths` for `instance`. `paths` may hold only the real robots or
/// every robot including virtual ones; virtual robots take part in collision
/// checks but not in makespan or ratio. Shorter paths wait at their end.
pub fn validate(instance: &Instance, paths: &[Vec<Coord>]) -> ValidationReport {
    let grid = &instance.grid;
    let real = instance.virtual_from;
    let lb = lower_bound(instance);
    let mut out = Collector { violations: Vec::new() };
    if paths.len() != real && paths.len() != instance.num_robots() {
        out.push(ViolationKind::RobotCount, 0, vec![], vec![]);
        return report(out, 0, lb);
    }
    for (i, p) in paths.iter().enumerate() {
        if p.is_empty() {
            out.push(ViolationKind::EmptyPath, 0, vec![i], vec![]);
        }
    }
    if !out.violations.is_empty() {
        return report(out, 0, lb);
    }
    let horizon = paths.iter().map(|p| p.len() - 1).max().unwrap_or(0);
    let at = |i: usize, t: usize| {
        let p = &paths[i];
        p[t.min(p.len() - 1)]
    };
    let in_bounds = |c: Coord| grid.in_bounds(c);

    for (i, p) in paths.iter().enumerate() {
        if p[0] != instance.starts[i] {
            out.push(ViolationKind::WrongStart, 0, vec![i], vec![p[0], instance.starts[i]]);
        }
        let end = *p.last().expect("non-empty");
        if end != instance.goals[i] {
            out.push(ViolationKind::WrongGoal, p.len() - 1, vec![i], vec![end, instance.goals[i]]);
        }
        for (t, &c) in p.iter().enumerate() {
            if !in_bounds(c) {
                out.push(ViolationKind::OutOfBounds, t, vec![i], vec![c]);
            } else if grid.is_obstacle(c) {
                out.push(ViolationKind::Obstacle, t, vec![i], vec![c]);
            }
            if t > 0 && p[t - 1].l1(&c) > 1 {
                out.push(ViolationKind::Discontinuity, t, vec![i], vec![p[t - 1], c]);
            }
        }
    }

    // per-timestep occupancy; out-of-bounds robots are skipped here
    let nv = grid.num_vertices();
    let mut occ_prev = vec![u32::MAX; nv];
    let mut occ_now = vec![u32::MAX; nv];
    let mut stamp_prev = vec![usize::MAX; nv];
    let mut stamp_now = vec![usize::MAX; nv];
    for t in 0..=horizon {
        if out.full() {
            break;
        }
        for i in 0..paths.len() {
            let c = at(i, t);
            if !in_bounds(c) {
                continue;
            }
            let k = grid.index(c);
            if stamp_now[k] == t {
                out.push(
                    ViolationKind::VertexCollision,
                    t,
                    vec![occ_now[k] as usize, i],
                    vec![c],
                );
            } else {
                stamp_now[k] = t;
                occ_now[k] = i as u32;
            }
        }
        if t > 0 {
            for i in 0..paths.len() {
                let (a, b) = (at(i, t - 1), at(i, t));
                if a == b || !in_bounds(a) || !in_bounds(b) {
                    continue;
                }
                let kb = grid.index(b);
                if stamp_prev[kb] != t - 1 {
                    continue;
                }
                let j = occ_prev[kb] as usize;
                if j != i && at(j, t) == a && i < j {
                    out.push(ViolationKind::EdgeSwap, t, vec![i, j], vec![a, b]);
                }
            }
        }
        std::mem::swap(&mut occ_prev, &mut occ_now);
        std::mem::swap(&mut stamp_prev, &mut stamp_now);
    }

    let mut makespan = 0;
    for p in paths.iter().take(real) {
        if let Some(t) = (1..p.len()).rev().find(|&t| p[t] != p[t - 1]) {
            makespan = makespan.max(t);
        }
    }
    report(out, makespan, lb)
}

fn report(out: Collector, makespan: usize, lower_bound: usize) -> ValidationReport {
    ValidationReport {
        ok: out.violations.is_empty(),
        violations: out.violations,
        makespan,
        lower_bound,
        ratio: ratio(makespan, lower_bound),
    }
}

/// One solved instance, as written by the benchmark CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub density: f64,
    pub seed: u64,
    pub robots: usize,
    pub makespan: usize,
    pub lower_bound: usize,
    pub ratio: f64,
    pub runtime_ms: u64,
    pub phase_unlabeled1: usize,
    pub phase_z1: usize,
    pub phase_xy: usize,
    pub phase_z2: usize,
    pub phase_unlabeled2: usize,
}

pub const RUN_CSV_HEADER: &str = "algorithm,m1,m2,m3,density,seed,robots,makespan,lower_bound,ratio,runtime_ms,phase_unlabeled1,phase_z1,phase_xy,phase_z2,phase_unlabeled2";

/// Aggregate over all runs sharing algorithm, dimensions and density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub density: f64,
    pub runs: usize,
    pub makespan_mean: f64,
    pub makespan_min: usize,
    pub makespan_max: usize,
    pub ratio_mean: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub runtime_ms_mean: f64,
    pub phase_unlabeled1_mean: f64,
    pub phase_z1_mean: f64,
    pub phase_xy_mean: f64,
    pub phase_z2_mean: f64,
    pub phase_unlabeled2_mean: f64,
}

/// One row per (algorithm, dimensions, density), sorted by that key.
pub fn stats(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, usize, usize, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.algorithm.clone(), r.m1, r.m2, r.m3, r.density.to_bits()))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&RunRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let first = rs[0];
            let ratio_min = rs.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
            let ratio_max = rs.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
            SummaryRow {
                algorithm: first.algorithm.clone(),
                m1: first.m1,
                m2: first.m2,
                m3: first.m3,
                density: first.density,
                runs: rs.len(),
                makespan_mean: mean(&|r| r.makespan as f64),
                makespan_min: rs.iter().map(|r| r.makespan).min().unwrap_or(0),
                makespan_max: rs.iter().map(|r| r.makespan).max().unwrap_or(0),
                // rounding in the sum must not push the mean outside the range
                ratio_mean: mean(&|r| r.ratio).clamp(ratio_min, ratio_max),
                ratio_min,
                ratio_max,
                runtime_ms_mean: mean(&|r| r.runtime_ms as f64),
                phase_unlabeled1_mean: mean(&|r| r.phase_unlabeled1 as f64),
                phase_z1_mean: mean(&|r| r.phase_z1 as f64),
                phase_xy_mean: mean(&|r| r.phase_xy as f64),
                phase_z2_mean: mean(&|r| r.phase_z2 as f64),
                phase_unlabeled2_mean: mean(&|r| r.phase_unlabeled2 as f64),
            }
        })
        .collect()
}

/// Writes run records as CSV with [`RUN_CSV_HEADER`].
pub fn write_runs_csv<W: std::io::Write>(records: &[RunRecord], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    if records.is_empty() {
        wr.write_record(RUN_CSV_HEADER.split(','))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_runs_csv<R: std::io::Read>(r: R) -> Result<Vec<RunRecord>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

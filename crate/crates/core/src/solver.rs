//! End-to-end solver: pad to capacity, gather robots onto middle-column
//! slots, run the shuffle rounds, and replay the goal-side gathering in
//! reverse.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Coord, GridError, Orientation};
use crate::instance::{pad_virtual, Instance, InstanceError};
use crate::rubik::{matching_xy, xy_fitting, z_fitting, Axis, RubikError, ShuffleRound};
use crate::shuffle::{execute_round, MotionSegment, ShuffleError};
use crate::unlabeled::{assign_slots, schedule, UnlabeledResult};
use crate::validate;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("stage planning failed: {0}")]
    Rubik(#[from] RubikError),
    #[error("motion synthesis failed: {0}")]
    Shuffle(#[from] ShuffleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    /// Bottleneck-optimized matchings instead of arbitrary decompositions.
    pub lba: bool,
    pub record_phases: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lba: true,
            record_phases: true,
        }
    }
}

impl SolverOptions {
    pub fn algorithm_name(&self) -> &'static str {
        if self.lba {
            "rth3d-lba"
        } else {
            "rth3d"
        }
    }
}

/// Durations of the pipeline stages in execution order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseBreakdown {
    pub unlabeled1: usize,
    pub z1: usize,
    pub xy: usize,
    pub z2: usize,
    pub unlabeled2: usize,
}

impl PhaseBreakdown {
    pub fn total(&self) -> usize {
        self.unlabeled1 + self.z1 + self.xy + self.z2 + self.unlabeled2
    }

    /// The shuffle-round part of the plan.
    pub fn rubik(&self) -> usize {
        self.z1 + self.xy + self.z2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// One path per real robot, all of length `makespan + 1`.
    pub paths: Vec<Vec<Coord>>,
    /// Last timestep at which a real robot moves.
    pub makespan: usize,
    /// Present when requested through [`SolverOptions::record_phases`].
    pub phases: Option<PhaseBreakdown>,
    pub lower_bound: usize,
    pub ratio: f64,
}

/// Duration of one executed shuffle round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundRecord {
    pub axis: Axis,
    /// Grid length along the round's axis.
    pub axis_len: usize,
    pub duration: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub plan: Plan,
    /// The padded instance actually routed.
    pub padded: Instance,
    /// Paths of every robot including virtual ones, length `phases.total() + 1`.
    pub all_paths: Vec<Vec<Coord>>,
    pub phases: PhaseBreakdown,
    pub rounds: Vec<RoundRecord>,
    /// Timesteps spent in the unlabeled deadlock fallback, both sides.
    pub fallback_steps: usize,
}

/// Largest start-to-goal distance over real robots.
pub fn lower_bound(instance: &Instance) -> usize {
    validate::lower_bound(instance)
}

pub fn solve(instance: &Instance, opts: SolverOptions) -> Result<Plan, SolveError> {
    Ok(solve_detailed(instance, opts)?.plan)
}

fn append(paths: &mut [Vec<Coord>], seg: &MotionSegment) {
    for (i, p) in paths.iter_mut().enumerate() {
        for t in 1..=seg.duration {
            p.push(seg.position(i, t));
        }
    }
}

fn gather(instance: &Instance, from: &[Coord], slots: &[Coord]) -> UnlabeledResult {
    let a = assign_slots(&instance.grid, from, slots);
    schedule(&instance.grid, from, slots, &a)
}

/// Solves and keeps all intermediate data: virtual robots' paths, phase
/// durations and the per-round log.
pub fn solve_detailed(instance: &Instance, opts: SolverOptions) -> Result<Solution, SolveError> {
    instance.check()?;
    let grid = &instance.grid;
    let padded = pad_virtual(instance);
    let slots = grid.centered_slots(Orientation::VerticalCentered);

    let (u1, u2) = rayon::join(
        || gather(&padded, &padded.starts, &slots),
        || gather(&padded, &padded.goals, &slots),
    );
    let s1: Vec<Coord> = u1.paths.iter().map(|p| *p.last().expect("non-empty")).collect();
    let g1: Vec<Coord> = u2.paths.iter().map(|p| *p.last().expect("non-empty")).collect();

    let mut paths = u1.paths.clone();
    let mut phases = PhaseBreakdown {
        unlabeled1: u1.makespan,
        unlabeled2: u2.makespan,
        ..Default::default()
    };
    let mut rounds = Vec::new();
    let mut cur = s1;
    let mut run = |cur: &mut Vec<Coord>, round: &ShuffleRound, paths: &mut Vec<Vec<Coord>>| {
        let seg = execute_round(grid, cur, round)?;
        append(paths, &seg);
        rounds.push(RoundRecord {
            axis: round.axis,
            axis_len: grid.len(round.axis.index()),
            duration: seg.duration,
        });
        *cur = seg.final_positions();
        Ok::<usize, SolveError>(seg.duration)
    };

    let stage = matching_xy(grid, &cur, &g1, opts.lba)?;
    for r in &stage.rounds {
        phases.z1 += run(&mut cur, r, &mut paths)?;
    }
    let stage = xy_fitting(grid, &cur, &g1, opts.lba)?;
    for r in &stage.rounds {
        phases.xy += run(&mut cur, r, &mut paths)?;
    }
    let stage = z_fitting(grid, &cur, &g1)?;
    for r in &stage.rounds {
        phases.z2 += run(&mut cur, r, &mut paths)?;
    }
    debug_assert_eq!(cur, g1);
    for (p, tail) in paths.iter_mut().zip(&u2.paths) {
        p.extend(tail.iter().rev().skip(1));
    }

    let real = instance.virtual_from;
    let makespan = paths[..real]
        .iter()
        .filter_map(|p| (1..p.len()).rev().find(|&t| p[t] != p[t - 1]))
        .max()
        .unwrap_or(0);
    let plan_paths: Vec<Vec<Coord>> = paths[..real].iter().map(|p| p[..=makespan].to_vec()).collect();
    let lb = lower_bound(instance);
    let plan = Plan {
        paths: plan_paths,
        makespan,
        phases: opts.record_phases.then_some(phases),
        lower_bound: lb,
        ratio: validate::ratio(makespan, lb),
    };
    Ok(Solution {
        plan,
        padded,
        all_paths: paths,
        phases,
        rounds,
        fallback_steps: u1.fallback_steps + u2.fallback_steps,
    })
}

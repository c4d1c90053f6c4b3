//! Motion synthesis for shuffle rounds. Movers leave their line into one of
//! the two empty side lanes (chosen by direction), travel at unit speed and
//! step back in at their destination. In-cell conversions between middle
//! columns and middle rows are found by exhaustive search over the cell.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::grid::{Coord, Grid3D, Orientation};
use crate::rubik::{Axis, ShuffleRound};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShuffleError {
    #[error("no robot at {0}")]
    MissingRobot(Coord),
    #[error("lane cell {0} is blocked or occupied")]
    LaneBlocked(Coord),
    #[error("destination {0} is held by a robot that does not move")]
    DestinationHeld(Coord),
    #[error("two movers share destination {0}")]
    DuplicateDestination(Coord),
    #[error("move {from} -> {to} leaves its 3x3 cell")]
    LeavesCell { from: Coord, to: Coord },
    #[error("cell at {at} holds {count} robots, more than its {slots} slots")]
    Unbalanced { at: Coord, count: usize, slots: usize },
    #[error("no in-cell conversion found for the cell at {0}")]
    NoConversion(Coord),
}

/// Per-robot positions over a time window. A path shorter than
/// `duration + 1` means the robot waits at its last position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MotionSegment {
    pub duration: usize,
    pub paths: Vec<Vec<Coord>>,
}

impl MotionSegment {
    pub fn position(&self, robot: usize, t: usize) -> Coord {
        let p = &self.paths[robot];
        p[t.min(p.len() - 1)]
    }

    pub fn final_positions(&self) -> Vec<Coord> {
        self.paths.iter().map(|p| *p.last().expect("paths are non-empty")).collect()
    }

    /// Paths padded with waits to `duration + 1` entries.
    pub fn padded(&self) -> Vec<Vec<Coord>> {
        (0..self.paths.len())
            .map(|i| (0..=self.duration).map(|t| self.position(i, t)).collect())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// In-cell search

/// Local cell index `lx + 3 ly`.
type Local = u8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum CellGoal {
    Exact(Vec<Local>),
    Line(Orientation),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CellKey {
    center_blocked: bool,
    starts: Vec<Local>,
    goal: CellGoal,
}

type CellPaths = Arc<Vec<Vec<Local>>>;

fn cell_cache() -> &'static Mutex<HashMap<CellKey, Option<CellPaths>>> {
    static CACHE: OnceLock<Mutex<HashMap<CellKey, Option<CellPaths>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn on_line(l: Local, o: Orientation) -> bool {
    match o {
        Orientation::VerticalCentered => l % 3 == 1,
        Orientation::HorizontalCentered => l / 3 == 1,
    }
}

fn local_neighbors(l: Local, center_blocked: bool) -> impl Iterator<Item = Local> {
    let (x, y) = ((l % 3) as i8, (l / 3) as i8);
    [(1i8, 0i8), (-1, 0), (0, 1), (0, -1)]
        .into_iter()
        .map(move |(dx, dy)| (x + dx, y + dy))
        .filter(|&(a, b)| (0..3).contains(&a) && (0..3).contains(&b))
        .map(|(a, b)| (a + 3 * b) as Local)
        .filter(move |&n| !(center_blocked && n == 4))
}

/// Shortest joint plan for at most three robots inside one cell, with vertex
/// and swap constraints. Returns one equal-length local path per robot.
fn solve_cell(key: &CellKey) -> Option<Vec<Vec<Local>>> {
    let n = key.starts.len();
    let done = |s: &[Local]| match &key.goal {
        CellGoal::Exact(g) => s == g.as_slice(),
        CellGoal::Line(o) => s.iter().all(|&l| on_line(l, *o)),
    };
    let encode = |s: &[Local]| s.iter().rev().fold(0u32, |acc, &l| acc * 9 + l as u32);
    let decode = |mut c: u32| {
        (0..n)
            .map(|_| {
                let l = (c % 9) as Local;
                c /= 9;
                l
            })
            .collect::<Vec<_>>()
    };
    let start = encode(&key.starts);
    let mut parent: HashMap<u32, u32> = HashMap::from([(start, start)]);
    let mut queue = VecDeque::from([start]);
    let mut found = None;
    while let Some(code) = queue.pop_front() {
        let state = decode(code);
        if done(&state) {
            found = Some(code);
            break;
        }
        let opts: Vec<Vec<Local>> = state
            .iter()
            .map(|&l| std::iter::once(l).chain(local_neighbors(l, key.center_blocked)).collect())
            .collect();
        let mut choice = vec![0usize; n];
        loop {
            let next: Vec<Local> = (0..n).map(|r| opts[r][choice[r]]).collect();
            let ok = (0..n).all(|a| {
                (a + 1..n).all(|b| next[a] != next[b] && !(next[a] == state[b] && next[b] == state[a]))
            });
            if ok {
                let c = encode(&next);
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(c) {
                    e.insert(code);
                    queue.push_back(c);
                }
            }
            let mut r = 0;
            while r < n {
                choice[r] += 1;
                if choice[r] < opts[r].len() {
                    break;
                }
                choice[r] = 0;
                r += 1;
            }
            if r == n {
                break;
            }
        }
    }
    let mut code = found?;
    let mut states = vec![decode(code)];
    while parent[&code] != code {
        code = parent[&code];
        states.push(decode(code));
    }
    states.reverse();
    Some((0..n).map(|r| states.iter().map(|s| s[r]).collect()).collect())
}

fn cached_cell(key: CellKey) -> Option<CellPaths> {
    if let Some(hit) = cell_cache().lock().expect("cache lock").get(&key) {
        return hit.clone();
    }
    let solved = solve_cell(&key).map(Arc::new);
    cell_cache()
        .lock()
        .expect("cache lock")
        .insert(key, solved.clone());
    solved
}

/// Robots of one (cell, plane): indices, local starts and goals.
struct CellJob {
    origin: Coord,
    robots: Vec<usize>,
    goal: CellGoal,
    starts: Vec<Local>,
}

fn local_of(c: Coord) -> Local {
    ((c.x % 3) + 3 * (c.y % 3)) as Local
}

fn cell_origin(c: Coord) -> Coord {
    Coord::new(c.x - c.x % 3, c.y - c.y % 3, c.z)
}

fn from_local(origin: Coord, l: Local) -> Coord {
    Coord::new(origin.x + (l % 3) as u16, origin.y + (l / 3) as u16, origin.z)
}

/// Runs every cell job and writes the local paths into `paths`. Returns the
/// longest duration.
fn run_cells(grid: &Grid3D, jobs: &[CellJob], paths: &mut [Vec<Coord>]) -> Result<usize, ShuffleError> {
    let mut duration = 0;
    for job in jobs {
        let key = CellKey {
            center_blocked: grid.has_buildings(),
            starts: job.starts.clone(),
            goal: job.goal.clone(),
        };
        let local = cached_cell(key).ok_or(ShuffleError::NoConversion(job.origin))?;
        for (&r, lp) in job.robots.iter().zip(local.iter()) {
            let mut p: Vec<Coord> = lp.iter().map(|&l| from_local(job.origin, l)).collect();
            while p.len() > 1 && p[p.len() - 1] == p[p.len() - 2] {
                p.pop();
            }
            duration = duration.max(p.len() - 1);
            paths[r] = p;
        }
    }
    Ok(duration)
}

fn occupancy(grid: &Grid3D, config: &[Coord]) -> Vec<u32> {
    let mut occ = vec![u32::MAX; grid.num_vertices()];
    for (i, &c) in config.iter().enumerate() {
        occ[grid.index(c)] = i as u32;
    }
    occ
}

/// Converts every cell of every plane so that its robots stand on the middle
/// line given by `to`, using at most three steps on balanced input.
pub fn recenter(grid: &Grid3D, config: &[Coord], to: Orientation) -> Result<MotionSegment, ShuffleError> {
    let mut cells: HashMap<Coord, Vec<usize>> = HashMap::new();
    for (i, &c) in config.iter().enumerate() {
        cells.entry(cell_origin(c)).or_default().push(i);
    }
    let mut origins: Vec<Coord> = cells.keys().copied().collect();
    origins.sort_unstable_by_key(|c| (c.z, c.y, c.x));
    let slots = grid.slots_per_cell();
    let mut jobs = Vec::with_capacity(origins.len());
    for origin in origins {
        let robots = cells.remove(&origin).unwrap_or_default();
        if robots.len() > slots {
            return Err(ShuffleError::Unbalanced {
                at: origin,
                count: robots.len(),
                slots,
            });
        }
        let starts = robots.iter().map(|&r| local_of(config[r])).collect();
        jobs.push(CellJob {
            origin,
            robots,
            goal: CellGoal::Line(to),
            starts,
        });
    }
    let mut paths: Vec<Vec<Coord>> = config.iter().map(|&c| vec![c]).collect();
    let duration = run_cells(grid, &jobs, &mut paths)?;
    Ok(MotionSegment { duration, paths })
}

/// Synthesizes the motion of one round from `config`: the embedded in-cell
/// conversion first, then all line permutations simultaneously through the
/// side lanes. Duration is at most `L + 1` plus the conversion time, where
/// `L` is the grid length along the round's axis.
pub fn execute_round(grid: &Grid3D, config: &[Coord], round: &ShuffleRound) -> Result<MotionSegment, ShuffleError> {
    let mut occ = occupancy(grid, config);
    let mut paths: Vec<Vec<Coord>> = config.iter().map(|&c| vec![c]).collect();
    let mut pos = config.to_vec();

    let mut rc_duration = 0;
    if let Some(rc) = &round.recenter {
        let mut cells: HashMap<Coord, Vec<(usize, Coord)>> = HashMap::new();
        for &(from, to) in &rc.moves {
            if cell_origin(from) != cell_origin(to) {
                return Err(ShuffleError::LeavesCell { from, to });
            }
            if !grid.in_bounds(from) {
                return Err(ShuffleError::MissingRobot(from));
            }
            let r = occ[grid.index(from)];
            if r == u32::MAX {
                return Err(ShuffleError::MissingRobot(from));
            }
            cells.entry(cell_origin(from)).or_default().push((r as usize, to));
        }
        let mut origins: Vec<Coord> = cells.keys().copied().collect();
        origins.sort_unstable_by_key(|c| (c.z, c.y, c.x));
        let mut jobs = Vec::with_capacity(origins.len());
        for origin in origins {
            let mut members = cells.remove(&origin).unwrap_or_default();
            // robots of the cell without a listed move stay put
            for ly in 0..3 {
                for lx in 0..3 {
                    let c = Coord::new(origin.x + lx, origin.y + ly, origin.z);
                    let r = occ[grid.index(c)];
                    if r != u32::MAX && !members.iter().any(|&(m, _)| m == r as usize) {
                        members.push((r as usize, c));
                    }
                }
            }
            if members.len() > 3 {
                return Err(ShuffleError::Unbalanced {
                    at: origin,
                    count: members.len(),
                    slots: 3,
                });
            }
            members.sort_unstable();
            jobs.push(CellJob {
                origin,
                robots: members.iter().map(|m| m.0).collect(),
                starts: members.iter().map(|m| local_of(config[m.0])).collect(),
                goal: CellGoal::Exact(members.iter().map(|m| local_of(m.1)).collect()),
            });
        }
        rc_duration = run_cells(grid, &jobs, &mut paths)?;
        for job in &jobs {
            for &r in &job.robots {
                occ[grid.index(pos[r])] = u32::MAX;
            }
        }
        for job in &jobs {
            for &r in &job.robots {
                pos[r] = *paths[r].last().expect("non-empty");
                occ[grid.index(pos[r])] = r as u32;
            }
        }
    }

    // lane phase
    let axis = round.axis.index();
    let lane_axis = match round.axis {
        Axis::X => 1,
        Axis::Y | Axis::Z => 0,
    };
    let mut movers: Vec<(usize, Coord, Coord)> = Vec::new();
    for line in &round.lines {
        for &(a, b) in &line.moves {
            if a == b {
                continue;
            }
            let from = line.anchor.with(axis, a);
            let to = line.anchor.with(axis, b);
            if !grid.in_bounds(from) {
                return Err(ShuffleError::MissingRobot(from));
            }
            let r = occ[grid.index(from)];
            if r == u32::MAX {
                return Err(ShuffleError::MissingRobot(from));
            }
            movers.push((r as usize, from, to));
        }
    }
    let mut is_mover = vec![false; pos.len()];
    for &(r, _, _) in &movers {
        is_mover[r] = true;
    }
    let mut dest_taken = vec![false; grid.num_vertices()];
    let mut lane_duration = 0;
    for &(_, from, to) in &movers {
        if !grid.is_free(to) {
            return Err(ShuffleError::LaneBlocked(to));
        }
        let k = grid.index(to);
        if dest_taken[k] {
            return Err(ShuffleError::DuplicateDestination(to));
        }
        dest_taken[k] = true;
        let held = occ[k];
        if held != u32::MAX && !is_mover[held as usize] {
            return Err(ShuffleError::DestinationHeld(to));
        }
        let d = from.get(axis).abs_diff(to.get(axis)) as usize;
        lane_duration = lane_duration.max(d + 2);
        let lane = lane_of(from, to, axis, lane_axis, grid)?;
        let (lo, hi) = (from.get(axis).min(to.get(axis)), from.get(axis).max(to.get(axis)));
        for v in lo..=hi {
            let c = lane.with(axis, v);
            if !grid.is_free(c) || occ[grid.index(c)] != u32::MAX {
                return Err(ShuffleError::LaneBlocked(c));
            }
        }
    }
    if lane_duration > 0 {
        for &(r, from, to) in &movers {
            let p = &mut paths[r];
            while p.len() < rc_duration + 1 {
                p.push(from);
            }
            let lane = lane_of(from, to, axis, lane_axis, grid)?;
            let (a, b) = (from.get(axis), to.get(axis));
            p.push(lane);
            if a < b {
                p.extend((a + 1..=b).map(|v| lane.with(axis, v)));
            } else {
                p.extend((b..a).rev().map(|v| lane.with(axis, v)));
            }
            p.push(to);
        }
    }
    Ok(MotionSegment {
        duration: rc_duration + lane_duration,
        paths,
    })
}

/// Side-lane cell next to `from`: increasing-direction movers use the `+1`
/// neighbor across the line, decreasing ones the `-1` neighbor.
fn lane_of(from: Coord, to: Coord, axis: usize, lane_axis: usize, grid: &Grid3D) -> Result<Coord, ShuffleError> {
    let v = from.get(lane_axis);
    let up = to.get(axis) > from.get(axis);
    let w = if up { v as i32 + 1 } else { v as i32 - 1 };
    if w < 0 || w as usize >= grid.len(lane_axis) {
        return Err(ShuffleError::LaneBlocked(from));
    }
    Ok(from.with(lane_axis, w as u16))
}

//! Unlabeled routing: move interchangeable robots onto a target slot set
//! without collisions. Used for the first and last phases of the solver.

use thiserror::Error;

use crate::grid::{Coord, Grid3D};
use crate::matching::{Adjacency, HopcroftKarp};

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("time-expanded network would have {0} vertex copies (limit {1})")]
    TooLarge(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotAssignment {
    /// `target[i]` is the index into the slot list for robot `i`.
    pub target: Vec<usize>,
    pub bottleneck_distance: usize,
}

#[derive(Debug, Clone)]
pub struct UnlabeledResult {
    /// One coordinate per timestep, all of length `makespan + 1`.
    pub paths: Vec<Vec<Coord>>,
    pub makespan: usize,
    /// Final slot of every robot. Robots are interchangeable, so this may
    /// permute the input assignment.
    pub assignment: SlotAssignment,
    /// Timesteps spent in the sequential deadlock fallback.
    pub fallback_steps: usize,
}

/// Offsets reaching vertical slots (`x % 3 == 1`), grouped by
/// `(x % 3, y % 3)` of the start, within L1 radius `radius`. Each entry is
/// `(dx, dy, dz, distance)`, sorted by exact grid distance.
fn slot_offsets(grid: &Grid3D, radius: usize) -> Vec<Vec<(i32, i32, i32, usize)>> {
    let r = radius as i32;
    let mut classes = vec![Vec::new(); 9];
    for xr in 0..3i32 {
        for yr in 0..3i32 {
            let list: &mut Vec<(i32, i32, i32, usize)> = &mut classes[(xr * 3 + yr) as usize];
            // representative start well inside a large grid
            let sx = 30 + xr;
            let sy = 30 + yr;
            for dx in -r..=r {
                if (sx + dx).rem_euclid(3) != 1 {
                    continue;
                }
                let rem = r - dx.abs();
                for dy in -rem..=rem {
                    let rem2 = rem - dy.abs();
                    for dz in -rem2..=rem2 {
                        let l1 = (dx.abs() + dy.abs() + dz.abs()) as usize;
                        let mut d = l1;
                        if grid.has_buildings() {
                            if (sy + dy).rem_euclid(3) == 1 {
                                continue;
                            }
                            if sy.rem_euclid(3) == 1 && sx.rem_euclid(3) == 1 {
                                continue;
                            }
                            // same building column, a building strictly between
                            if dx == 0 && sx.rem_euclid(3) == 1 {
                                let (lo, hi) = if dy < 0 { (sy + dy, sy) } else { (sy, sy + dy) };
                                let next = lo - lo.rem_euclid(3) + 1 + if lo.rem_euclid(3) >= 1 { 3 } else { 0 };
                                if next < hi {
                                    d += 2;
                                }
                            }
                        }
                        list.push((dx, dy, dz, d));
                    }
                }
            }
            list.sort_by_key(|&(dx, dy, dz, d)| (d, dx.abs() + dy.abs() + dz.abs(), dx, dy, dz));
        }
    }
    classes
}

struct ThresholdGraph<'a> {
    grid: &'a Grid3D,
    starts: &'a [Coord],
    slot_id: &'a [u32],
    classes: &'a [Vec<(i32, i32, i32, usize)>],
    /// per class: number of offsets with distance <= threshold
    prefix: Vec<usize>,
}

impl ThresholdGraph<'_> {
    fn class(&self, c: Coord) -> usize {
        (c.x % 3) as usize * 3 + (c.y % 3) as usize
    }
}

impl Adjacency for ThresholdGraph<'_> {
    fn left_len(&self) -> usize {
        self.starts.len()
    }

    fn degree(&self, u: usize) -> usize {
        self.prefix[self.class(self.starts[u])]
    }

    fn neighbor(&self, u: usize, k: usize) -> Option<(usize, usize)> {
        let s = self.starts[u];
        let (dx, dy, dz, _) = self.classes[self.class(s)][k];
        let x = s.x as i32 + dx;
        let y = s.y as i32 + dy;
        let z = s.z as i32 + dz;
        if x < 0 || y < 0 || z < 0 {
            return None;
        }
        let c = Coord::new(x as u16, y as u16, z as u16);
        if !self.grid.in_bounds(c) {
            return None;
        }
        let id = self.slot_id[self.grid.index(c)];
        (id != NONE).then_some((id as usize, id as usize))
    }
}

/// Bottleneck assignment of robots to slots minimizing the largest grid
/// distance, via increasing distance thresholds and warm-started maximum
/// matching on the implicit threshold graph.
///
/// Slots on the middle columns of cells (`x % 3 == 1`) use a fast implicit
/// neighborhood; any other slot set falls back to explicit adjacency.
pub fn assign_slots(grid: &Grid3D, starts: &[Coord], slots: &[Coord]) -> SlotAssignment {
    assert!(slots.len() >= starts.len(), "fewer slots than robots");
    if starts.is_empty() {
        return SlotAssignment {
            target: vec![],
            bottleneck_distance: 0,
        };
    }
    let mut slot_id = vec![NONE; grid.num_vertices()];
    for (i, &s) in slots.iter().enumerate() {
        slot_id[grid.index(s)] = i as u32;
    }
    let vertical = slots.iter().all(|s| s.x % 3 == 1);
    let max_d = grid.m1() + grid.m2() + grid.m3() + 4;
    let mut hk = HopcroftKarp::new(starts.len(), slots.len());
    let n = starts.len();

    if vertical {
        let mut radius = 8.min(max_d);
        let mut classes = slot_offsets(grid, radius);
        for d in 0..=max_d {
            if d > radius {
                radius = (radius * 2).min(max_d);
                classes = slot_offsets(grid, radius);
                // offsets for class lists changed; matched pairs remain valid edges
            }
            let prefix = classes
                .iter()
                .map(|l| l.partition_point(|o| o.3 <= d))
                .collect();
            let graph = ThresholdGraph {
                grid,
                starts,
                slot_id: &slot_id,
                classes: &classes,
                prefix,
            };
            if hk.run(&graph) == n {
                return finish(&hk, d);
            }
        }
        unreachable!("every robot reaches every slot within the grid diameter")
    } else {
        for d in 0..=max_d {
            let adj: Vec<Vec<(usize, usize)>> = starts
                .iter()
                .map(|&s| {
                    let mut l: Vec<(usize, usize, usize)> = slots
                        .iter()
                        .enumerate()
                        .map(|(j, &t)| (grid.distance(s, t), j, j))
                        .filter(|&(dd, _, _)| dd <= d)
                        .collect();
                    l.sort_unstable();
                    l.into_iter().map(|(_, j, p)| (j, p)).collect()
                })
                .collect();
            if hk.run(&adj) == n {
                return finish(&hk, d);
            }
        }
        unreachable!("every robot reaches every slot within the grid diameter")
    }
}

fn finish(hk: &HopcroftKarp, d: usize) -> SlotAssignment {
    SlotAssignment {
        target: hk.mate_left.clone(),
        bottleneck_distance: d,
    }
}

/// Per-step scheduler state.
struct Sim<'a> {
    grid: &'a Grid3D,
    pos: Vec<Coord>,
    target: Vec<Coord>,
    occ: Vec<u32>,
    state: Vec<u8>,
    moved: Vec<bool>,
    next: Vec<Coord>,
    reserved: Vec<u32>,
    exchanged: Vec<u32>,
    step: u32,
    nbrs: Vec<Coord>,
}

const UNPROCESSED: u8 = 0;
const IN_PROGRESS: u8 = 1;
const DECIDED: u8 = 2;
const PUSH_DEPTH: usize = 12;

impl Sim<'_> {
    fn dist(&self, i: usize) -> usize {
        self.grid.distance(self.pos[i], self.target[i])
    }

    /// Neighbors strictly closer to the robot's target, largest remaining
    /// axis delta first.
    fn good_moves(&mut self, i: usize) -> Vec<Coord> {
        let p = self.pos[i];
        let t = self.target[i];
        let d = self.grid.distance(p, t);
        let mut nbrs = std::mem::take(&mut self.nbrs);
        self.grid.neighbors_into(p, &mut nbrs);
        let mut good: Vec<(usize, Coord)> = nbrs
            .iter()
            .filter(|&&n| self.grid.distance(n, t) + 1 == d)
            .map(|&n| {
                let axis = if n.x != p.x {
                    0
                } else if n.y != p.y {
                    1
                } else {
                    2
                };
                let delta = p.get(axis).abs_diff(t.get(axis)) as usize;
                (usize::MAX - delta, n)
            })
            .collect();
        self.nbrs = nbrs;
        good.sort();
        good.into_iter().map(|(_, n)| n).collect()
    }

    fn can_enter(&self, v: Coord) -> bool {
        let vi = self.grid.index(v);
        if self.reserved[vi] == self.step {
            return false;
        }
        let o = self.occ[vi];
        o == NONE || (self.state[o as usize] == DECIDED && self.moved[o as usize])
    }

    fn commit(&mut self, i: usize, v: Coord) {
        self.reserved[self.grid.index(v)] = self.step;
        self.next[i] = v;
        self.moved[i] = true;
        self.state[i] = DECIDED;
    }

    fn try_move(&mut self, i: usize, depth: usize) -> bool {
        match self.state[i] {
            DECIDED => return self.moved[i],
            IN_PROGRESS => return false,
            _ => {}
        }
        self.state[i] = IN_PROGRESS;
        let d = self.dist(i);
        if d == 0 {
            self.state[i] = DECIDED;
            return false;
        }
        let cands = self.good_moves(i);
        for &v in &cands {
            if self.can_enter(v) {
                self.commit(i, v);
                return true;
            }
        }
        if depth < PUSH_DEPTH {
            for &v in &cands {
                let o = self.occ[self.grid.index(v)];
                if o != NONE
                    && self.state[o as usize] == UNPROCESSED
                    && self.try_move(o as usize, depth + 1)
                    && self.can_enter(v)
                {
                    self.commit(i, v);
                    return true;
                }
            }
        }
        // target exchange with a blocking robot
        if self.exchanged[i] != self.step {
            for &v in &cands {
                let vi = self.grid.index(v);
                if self.reserved[vi] == self.step {
                    continue;
                }
                let b = self.occ[vi];
                if b == NONE {
                    continue;
                }
                let b = b as usize;
                if self.state[b] == IN_PROGRESS || self.exchanged[b] == self.step {
                    continue;
                }
                let db = self.dist(b);
                let new_a = self.grid.distance(self.pos[i], self.target[b]);
                let new_b = d - 1;
                if (db == 0 && d >= 2) || new_a + new_b < d + db {
                    self.target.swap(i, b);
                    self.exchanged[i] = self.step;
                    self.exchanged[b] = self.step;
                    if self.state[b] == DECIDED {
                        self.state[b] = UNPROCESSED;
                    }
                    self.state[i] = UNPROCESSED;
                    if depth < PUSH_DEPTH {
                        self.try_move(b, depth + 1);
                    }
                    return self.try_move(i, depth + 1);
                }
            }
        }
        self.state[i] = DECIDED;
        false
    }
}

/// Collision-free schedule taking every robot onto the slot set.
///
/// Robots advance along shortest paths in synchronous rounds, larger remaining
/// distance first. A blocked robot first asks its blocker to move, then may
/// exchange targets with it (the phase is unlabeled) when the blocker is
/// parked or the exchange shortens the pair's total remaining distance. If no
/// robot moves for `3 * (m1 + m2 + m3)` consecutive rounds, or the round count
/// passes a hard cap, remaining robots are moved one at a time.
pub fn schedule(
    grid: &Grid3D,
    starts: &[Coord],
    slots: &[Coord],
    assignment: &SlotAssignment,
) -> UnlabeledResult {
    let n = starts.len();
    let mut sim = Sim {
        grid,
        pos: starts.to_vec(),
        target: assignment.target.iter().map(|&j| slots[j]).collect(),
        occ: vec![NONE; grid.num_vertices()],
        state: vec![UNPROCESSED; n],
        moved: vec![false; n],
        next: starts.to_vec(),
        reserved: vec![0; grid.num_vertices()],
        exchanged: vec![0; n],
        step: 0,
        nbrs: Vec::with_capacity(6),
    };
    for (i, &s) in starts.iter().enumerate() {
        sim.occ[grid.index(s)] = i as u32;
    }
    let mut paths: Vec<Vec<Coord>> = starts.iter().map(|&s| vec![s]).collect();
    let perimeter = grid.m1() + grid.m2() + grid.m3();
    let stall_limit = 3 * perimeter;
    let hard_cap = 10 * perimeter + 100;
    let mut stalled = 0;
    let mut rounds = 0;
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(n);
    loop {
        order.clear();
        order.extend((0..n).map(|i| (sim.dist(i), i)).filter(|&(d, _)| d > 0));
        if order.is_empty() {
            break;
        }
        if stalled >= stall_limit || rounds >= hard_cap {
            break;
        }
        order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        sim.step += 1;
        sim.state.iter_mut().for_each(|s| *s = UNPROCESSED);
        sim.moved.iter_mut().for_each(|m| *m = false);
        for &(_, i) in &order {
            if sim.state[i] == UNPROCESSED {
                sim.try_move(i, 0);
            }
        }
        let mut any = false;
        for i in 0..n {
            if sim.moved[i] {
                sim.occ[grid.index(sim.pos[i])] = NONE;
            }
        }
        for (i, path) in paths.iter_mut().enumerate() {
            if sim.moved[i] {
                any = true;
                sim.pos[i] = sim.next[i];
                sim.occ[grid.index(sim.pos[i])] = i as u32;
            }
            path.push(sim.pos[i]);
        }
        rounds += 1;
        stalled = if any { 0 } else { stalled + 1 };
    }
    // drop trailing rounds without movement
    let mut makespan = rounds;
    while makespan > 0 && (0..n).all(|i| paths[i][makespan] == paths[i][makespan - 1]) {
        makespan -= 1;
    }
    for p in paths.iter_mut() {
        p.truncate(makespan + 1);
    }
    let mut fallback_steps = 0;
    if (0..n).any(|i| sim.dist(i) > 0) {
        fallback_steps = sequential_fallback(grid, &mut sim.pos, slots, &mut paths);
        makespan += fallback_steps;
    }
    let mut slot_id = vec![NONE; grid.num_vertices()];
    for (j, &s) in slots.iter().enumerate() {
        slot_id[grid.index(s)] = j as u32;
    }
    let target: Vec<usize> = sim
        .pos
        .iter()
        .map(|&p| slot_id[grid.index(p)] as usize)
        .collect();
    let bottleneck_distance = starts
        .iter()
        .zip(&sim.pos)
        .map(|(&s, &p)| grid.distance(s, p))
        .max()
        .unwrap_or(0);
    UnlabeledResult {
        paths,
        makespan,
        assignment: SlotAssignment {
            target,
            bottleneck_distance,
        },
        fallback_steps,
    }
}

/// Moves robots one at a time until every robot stands on a slot. Each
/// iteration connects an empty slot to the nearest robot standing off the
/// slot set and shifts the robots on the connecting path towards the slot.
fn sequential_fallback(
    grid: &Grid3D,
    pos: &mut [Coord],
    slots: &[Coord],
    paths: &mut [Vec<Coord>],
) -> usize {
    let n = pos.len();
    let mut is_slot = vec![false; grid.num_vertices()];
    for &s in slots {
        is_slot[grid.index(s)] = true;
    }
    let mut occ = vec![NONE; grid.num_vertices()];
    for (i, &p) in pos.iter().enumerate() {
        occ[grid.index(p)] = i as u32;
    }
    let mut steps = 0;
    let mut parent = vec![usize::MAX; grid.num_vertices()];
    let mut nbrs = Vec::with_capacity(6);
    loop {
        if pos.iter().all(|&p| is_slot[grid.index(p)]) {
            break;
        }
        let Some(&empty) = slots.iter().find(|&&s| occ[grid.index(s)] == NONE) else {
            break;
        };
        // BFS from the empty slot to the nearest off-slot robot
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        let root = grid.index(empty);
        parent[root] = root;
        let mut queue = std::collections::VecDeque::from([empty]);
        let mut found = None;
        while let Some(c) = queue.pop_front() {
            let ci = grid.index(c);
            let o = occ[ci];
            if o != NONE && !is_slot[ci] {
                found = Some(c);
                break;
            }
            grid.neighbors_into(c, &mut nbrs);
            for &m in &nbrs {
                let mi = grid.index(m);
                if parent[mi] == usize::MAX {
                    parent[mi] = ci;
                    queue.push_back(m);
                }
            }
        }
        let Some(far) = found else { break };
        // path from the off-slot robot to the empty slot
        let mut route = vec![far];
        let mut ci = grid.index(far);
        while ci != root {
            ci = parent[ci];
            route.push(grid.coord(ci));
        }
        let occupied: Vec<usize> = (0..route.len())
            .filter(|&k| occ[grid.index(route[k])] != NONE)
            .collect();
        // shift robots forward, the one nearest the empty slot first
        // robots after the first stand on slots, so each one moves into the
        // cell its successor vacated and the last one fills the empty slot
        for (idx, &k) in occupied.iter().enumerate().rev() {
            let end = occupied.get(idx + 1).copied().unwrap_or(route.len() - 1);
            let robot = occ[grid.index(route[k])] as usize;
            for c in &route[k + 1..=end] {
                occ[grid.index(pos[robot])] = NONE;
                pos[robot] = *c;
                occ[grid.index(*c)] = robot as u32;
                steps += 1;
                for (i, p) in paths.iter_mut().enumerate() {
                    p.push(pos[i]);
                }
            }
        }
        debug_assert!(n == pos.len());
    }
    steps
}

/// Decides whether the robots can occupy `slots` (as a set) within `horizon`
/// steps, by unit-capacity maximum flow on the time-expanded network with a
/// swap-blocking gadget on every edge and timestep. Desk-scale oracle only.
pub fn exact_feasible(
    grid: &Grid3D,
    starts: &[Coord],
    slots: &[Coord],
    horizon: usize,
) -> Result<bool, OracleError> {
    const LIMIT: usize = 200_000;
    let free: Vec<Coord> = grid.free_coords().collect();
    let copies = free.len() * (horizon + 1);
    if copies > LIMIT {
        return Err(OracleError::TooLarge(copies, LIMIT));
    }
    if starts.len() != slots.len() {
        return Ok(false);
    }
    let mut local = vec![usize::MAX; grid.num_vertices()];
    for (k, &c) in free.iter().enumerate() {
        local[grid.index(c)] = k;
    }
    let nv = free.len();
    // node layout: in(v,t) = 2*(t*nv+v), out(v,t) = in + 1, then gadgets, source, sink
    let vin = |v: usize, t: usize| 2 * (t * nv + v);
    let mut edges_uv = Vec::new();
    let mut nbrs = Vec::new();
    for (k, &c) in free.iter().enumerate() {
        grid.neighbors_into(c, &mut nbrs);
        for &m in &nbrs {
            let j = local[grid.index(m)];
            if k < j {
                edges_uv.push((k, j));
            }
        }
    }
    let base = 2 * nv * (horizon + 1);
    let gadget_nodes = 2 * edges_uv.len() * horizon;
    let source = base + gadget_nodes;
    let sink = source + 1;
    let mut flow = Dinic::new(sink + 1);
    for t in 0..=horizon {
        for v in 0..nv {
            flow.add_edge(vin(v, t), vin(v, t) + 1, 1);
            if t < horizon {
                flow.add_edge(vin(v, t) + 1, vin(v, t + 1), 1);
            }
        }
    }
    for t in 0..horizon {
        for (e, &(u, v)) in edges_uv.iter().enumerate() {
            let a = base + 2 * (t * edges_uv.len() + e);
            let b = a + 1;
            flow.add_edge(vin(u, t) + 1, a, 1);
            flow.add_edge(vin(v, t) + 1, a, 1);
            flow.add_edge(a, b, 1);
            flow.add_edge(b, vin(u, t + 1), 1);
            flow.add_edge(b, vin(v, t + 1), 1);
        }
    }
    for &s in starts {
        flow.add_edge(source, vin(local[grid.index(s)], 0), 1);
    }
    for &g in slots {
        flow.add_edge(vin(local[grid.index(g)], horizon) + 1, sink, 1);
    }
    Ok(flow.max_flow(source, sink) == starts.len())
}

struct Dinic {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<i32>,
    next: Vec<usize>,
    level: Vec<i32>,
    it: Vec<usize>,
}

impl Dinic {
    fn new(n: usize) -> Self {
        Dinic {
            head: vec![usize::MAX; n],
            to: Vec::new(),
            cap: Vec::new(),
            next: Vec::new(),
            level: vec![0; n],
            it: vec![0; n],
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: i32) {
        for (a, b, cc) in [(u, v, c), (v, u, 0)] {
            self.to.push(b);
            self.cap.push(cc);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() - 1;
        }
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut q = std::collections::VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            let mut e = self.head[u];
            while e != usize::MAX {
                let v = self.to[e];
                if self.cap[e] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    q.push_back(v);
                }
                e = self.next[e];
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, f: i32) -> i32 {
        if u == t {
            return f;
        }
        while self.it[u] != usize::MAX {
            let e = self.it[u];
            let v = self.to[e];
            if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                let got = self.dfs(v, t, f.min(self.cap[e]));
                if got > 0 {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            self.it[u] = self.next[e];
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> usize {
        let mut total = 0;
        while self.bfs(s, t) {
            self.it.copy_from_slice(&self.head);
            loop {
                let f = self.dfs(s, t, i32::MAX);
                if f == 0 {
                    break;
                }
                total += f as usize;
            }
        }
        total
    }
}

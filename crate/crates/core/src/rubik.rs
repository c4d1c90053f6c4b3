//! Rubik-table planning. The abstract part sorts fully occupied 2D and 3D
//! tables with column shuffles; the pipeline part turns a centered robot
//! configuration into the shuffle rounds that carry every robot to its
//! target slot.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Coord, Grid3D, Orientation};
use crate::matching::{
    assign_matchings_to_heights, decompose_regular, lba_matching_sequence, BipartiteMultigraph,
    MatchingError, MatchingSet,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RubikError {
    #[error("table has {found} items but its dimensions need {expected}")]
    TableSize { expected: usize, found: usize },
    #[error("table labels are not a permutation of positions")]
    NotPermutation,
    #[error("tables must have 2 or 3 axes, got {0}")]
    Rank(usize),
    #[error("robot {robot} at {at} is not on a {expected:?} slot")]
    NotCentered {
        robot: usize,
        at: Coord,
        expected: Orientation,
    },
    #[error("configuration is not a full centered configuration: {0}")]
    Occupancy(String),
    #[error("robot {robot} at {at} is not in its target column {target}")]
    WrongColumn { robot: usize, at: Coord, target: Coord },
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error("shuffle round is inconsistent with the configuration: {0}")]
    BadRound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Permutation of one grid line. `anchor` fixes the two coordinates off the
/// shuffle axis (its component on the axis is zero); `moves` lists
/// `(from, to)` positions along the axis for robots that change place.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineShuffle {
    pub anchor: Coord,
    pub moves: Vec<(u16, u16)>,
}

/// In-cell conversion run at the start of a round: every listed robot moves
/// from the first coordinate to the second, which lies in the same 3x3 cell
/// of the same plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recentering {
    pub to: Orientation,
    pub moves: Vec<(Coord, Coord)>,
}

/// One parallel shuffle round: an optional in-cell recentering followed by
/// simultaneous permutations of disjoint lines along `axis`. Lines not listed
/// are left unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffleRound {
    pub axis: Axis,
    pub recenter: Option<Recentering>,
    pub lines: Vec<LineShuffle>,
}

impl ShuffleRound {
    pub fn is_identity(&self) -> bool {
        self.lines.iter().all(|l| l.moves.is_empty())
            && self
                .recenter
                .as_ref()
                .is_none_or(|r| r.moves.iter().all(|(a, b)| a == b))
    }
}

/// Rounds of one pipeline stage with the configuration they produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    pub rounds: Vec<ShuffleRound>,
    /// Per-robot position after the stage.
    pub output: Vec<Coord>,
    /// Per-robot intermediate targets chosen by the stage's matching.
    pub intermediate: Vec<Coord>,
}

/// Applies a round to a per-robot configuration as a pure permutation.
pub fn apply_round(grid: &Grid3D, config: &[Coord], round: &ShuffleRound) -> Result<Vec<Coord>, RubikError> {
    let mut occ = vec![u32::MAX; grid.num_vertices()];
    for (i, &c) in config.iter().enumerate() {
        if !grid.in_bounds(c) {
            return Err(RubikError::BadRound(format!("robot {i} out of bounds at {c}")));
        }
        occ[grid.index(c)] = i as u32;
    }
    let mut out = config.to_vec();
    let permute = |out: &mut Vec<Coord>, occ: &mut Vec<u32>, pairs: Vec<(Coord, Coord)>| {
        let mut robots = Vec::with_capacity(pairs.len());
        for &(from, to) in &pairs {
            if !grid.in_bounds(from) || !grid.in_bounds(to) {
                return Err(RubikError::BadRound(format!("move {from} -> {to} leaves the grid")));
            }
            let r = occ[grid.index(from)];
            if r == u32::MAX {
                return Err(RubikError::BadRound(format!("no robot at {from}")));
            }
            robots.push(r);
        }
        for &(from, _) in &pairs {
            occ[grid.index(from)] = u32::MAX;
        }
        for (&(_, to), &r) in pairs.iter().zip(&robots) {
            let k = grid.index(to);
            if occ[k] != u32::MAX {
                return Err(RubikError::BadRound(format!("two robots end at {to}")));
            }
            occ[k] = r;
            out[r as usize] = to;
        }
        Ok(())
    };
    if let Some(rc) = &round.recenter {
        permute(&mut out, &mut occ, rc.moves.clone())?;
    }
    let axis = round.axis.index();
    let pairs: Vec<(Coord, Coord)> = round
        .lines
        .iter()
        .flat_map(|l| {
            l.moves
                .iter()
                .map(move |&(a, b)| (l.anchor.with(axis, a), l.anchor.with(axis, b)))
        })
        .collect();
    permute(&mut out, &mut occ, pairs)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Abstract tables

/// Fully occupied table; `items[p]` is the target position of the item at
/// position `p`. Positions are row-major with axis 0 fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractTable {
    pub dims: Vec<usize>,
    pub items: Vec<usize>,
}

/// Shuffle of one table line: `line` holds the coordinates of the line with
/// the shuffled axis set to zero, `perm[k]` is the new index of the item at
/// index `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableShuffle {
    pub axis: usize,
    pub line: Vec<usize>,
    pub perm: Vec<usize>,
}

impl TableShuffle {
    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(k, &p)| k == p)
    }
}

impl AbstractTable {
    pub fn new(dims: Vec<usize>, items: Vec<usize>) -> Result<Self, RubikError> {
        let t = AbstractTable { dims, items };
        t.check()?;
        Ok(t)
    }

    pub fn sorted(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        AbstractTable {
            dims,
            items: (0..n).collect(),
        }
    }

    pub fn check(&self) -> Result<(), RubikError> {
        if !(2..=3).contains(&self.dims.len()) {
            return Err(RubikError::Rank(self.dims.len()));
        }
        let n: usize = self.dims.iter().product();
        if self.items.len() != n {
            return Err(RubikError::TableSize {
                expected: n,
                found: self.items.len(),
            });
        }
        let mut seen = vec![false; n];
        for &l in &self.items {
            if l >= n || seen[l] {
                return Err(RubikError::NotPermutation);
            }
            seen[l] = true;
        }
        Ok(())
    }

    pub fn is_sorted(&self) -> bool {
        self.items.iter().enumerate().all(|(p, &l)| p == l)
    }

    pub fn position(&self, coords: &[usize]) -> usize {
        let mut p = 0;
        for (a, &c) in coords.iter().enumerate().rev() {
            p = p * self.dims[a] + c;
        }
        p
    }

    pub fn coords(&self, mut p: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&d| {
                let c = p % d;
                p /= d;
                c
            })
            .collect()
    }

    pub fn apply(&mut self, s: &TableShuffle) {
        let mut at = s.line.clone();
        let old: Vec<usize> = (0..self.dims[s.axis])
            .map(|k| {
                at[s.axis] = k;
                self.items[self.position(&at)]
            })
            .collect();
        for (k, &label) in old.iter().enumerate() {
            at[s.axis] = s.perm[k];
            let p = self.position(&at);
            self.items[p] = label;
        }
    }
}

/// Every line along `axis`, in position order of the remaining axes.
fn lines_along(dims: &[usize], axis: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dims.len()]];
    for (a, &d) in dims.iter().enumerate() {
        if a == axis {
            continue;
        }
        out = out
            .into_iter()
            .flat_map(|l| {
                (0..d).map(move |v| {
                    let mut l = l.clone();
                    l[a] = v;
                    l
                })
            })
            .collect();
    }
    out.sort_by_key(|l| l.iter().rev().copied().collect::<Vec<_>>());
    out
}

/// Shuffles moving each item along `axis` to the index given by `dest`.
fn round_to(t: &AbstractTable, axis: usize, dest: impl Fn(usize) -> usize) -> Vec<TableShuffle> {
    lines_along(&t.dims, axis)
        .into_iter()
        .map(|line| {
            let mut at = line.clone();
            let perm = (0..t.dims[axis])
                .map(|k| {
                    at[axis] = k;
                    dest(t.position(&at))
                })
                .collect();
            TableShuffle { axis, line, perm }
        })
        .collect()
}

fn apply_all(t: &mut AbstractTable, shuffles: &[TableShuffle]) {
    for s in shuffles {
        t.apply(s);
    }
}

/// Sorts an `m1 x m2` table with `m1 + 2 m2` line shuffles in three rounds:
/// rows, then columns, then rows.
pub fn rta2d(table: &AbstractTable) -> Result<Vec<TableShuffle>, RubikError> {
    table.check()?;
    if table.dims.len() != 2 {
        return Err(RubikError::Rank(table.dims.len()));
    }
    let (m1, m2) = (table.dims[0], table.dims[1]);
    let mut t = table.clone();
    // source row -> target row, one edge per item, m1-regular
    let mut g = BipartiteMultigraph::new(m2, m2);
    for p in 0..m1 * m2 {
        g.add_edge(p / m1, t.items[p] / m1, p);
    }
    let ms = decompose_regular(&g, m1)?;
    let mut column_of = vec![0; m1 * m2];
    for (k, m) in ms.matchings.iter().enumerate() {
        for e in m {
            column_of[e.tag] = k;
        }
    }
    let mut out = round_to(&t, 0, |p| column_of[p]);
    apply_all(&mut t, &out);
    let b = round_to(&t, 1, |p| t.items[p] / m1);
    apply_all(&mut t, &b);
    out.extend(b);
    let c = round_to(&t, 0, |p| t.items[p] % m1);
    apply_all(&mut t, &c);
    out.extend(c);
    debug_assert!(t.is_sorted());
    Ok(out)
}

/// Sorts an `m1 x m2 x m3` table: one round along axis 2, a 2D sort of every
/// axis-2 plane, and a final round along axis 2; at most
/// `2 m1 m2 + m3 (2 m2 + m1)` line shuffles.
pub fn rta3d(table: &AbstractTable) -> Result<Vec<TableShuffle>, RubikError> {
    table.check()?;
    if table.dims.len() != 3 {
        return Err(RubikError::Rank(table.dims.len()));
    }
    let (m1, m2, m3) = (table.dims[0], table.dims[1], table.dims[2]);
    let plane = m1 * m2;
    let mut t = table.clone();
    let mut g = BipartiteMultigraph::new(plane, plane);
    for p in 0..plane * m3 {
        g.add_edge(p % plane, t.items[p] % plane, p);
    }
    let ms = decompose_regular(&g, m3)?;
    let mut height = vec![0; plane * m3];
    for (k, m) in ms.matchings.iter().enumerate() {
        for e in m {
            height[e.tag] = k;
        }
    }
    let mut out = round_to(&t, 2, |p| height[p]);
    apply_all(&mut t, &out);
    for z in 0..m3 {
        let sub = AbstractTable {
            dims: vec![m1, m2],
            items: t.items[z * plane..(z + 1) * plane]
                .iter()
                .map(|&l| l % plane)
                .collect(),
        };
        for s in rta2d(&sub)? {
            let mut line = s.line.clone();
            line.push(z);
            let lifted = TableShuffle {
                axis: s.axis,
                line,
                perm: s.perm,
            };
            t.apply(&lifted);
            out.push(lifted);
        }
    }
    let last = round_to(&t, 2, |p| t.items[p] / plane);
    apply_all(&mut t, &last);
    out.extend(last);
    debug_assert!(t.is_sorted());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Pipeline stages on centered configurations

/// Index of vertical-slot columns `(x, y)` with `x % 3 == 1`.
struct ColumnIndex {
    ys: Vec<u16>,
    y_rank: Vec<u32>,
}

impl ColumnIndex {
    fn new(grid: &Grid3D) -> Self {
        let ys = grid.vertical_slot_ys();
        let mut y_rank = vec![u32::MAX; grid.m2()];
        for (k, &y) in ys.iter().enumerate() {
            y_rank[y as usize] = k as u32;
        }
        ColumnIndex { ys, y_rank }
    }

    fn of(&self, c: Coord) -> usize {
        (c.x as usize / 3) * self.ys.len() + self.y_rank[c.y as usize] as usize
    }
}

fn check_centered(grid: &Grid3D, config: &[Coord], o: Orientation) -> Result<(), RubikError> {
    if config.len() != grid.capacity() {
        return Err(RubikError::Occupancy(format!(
            "{} robots for {} slots",
            config.len(),
            grid.capacity()
        )));
    }
    let mut seen = vec![false; grid.num_vertices()];
    for (robot, &at) in config.iter().enumerate() {
        if !grid.is_centered_slot(at, o) {
            return Err(RubikError::NotCentered {
                robot,
                at,
                expected: o,
            });
        }
        let k = grid.index(at);
        if seen[k] {
            return Err(RubikError::Occupancy(format!("two robots at {at}")));
        }
        seen[k] = true;
    }
    Ok(())
}

fn tag_to_index(ms: &MatchingSet, n: usize, index_of: &[usize]) -> Vec<usize> {
    let mut out = vec![usize::MAX; n];
    for (k, m) in ms.matchings.iter().enumerate() {
        for e in m {
            out[e.tag] = index_of[k];
        }
    }
    out
}

/// Decomposes `g` into `d` matchings and gives each a destination index.
/// Plain mode uses decomposition order; otherwise matchings are built greedily
/// by bottleneck `cost(tag, index)` and then reassigned to indices by a
/// bottleneck assignment. Returns the destination index per tag.
fn matchings_to_indices(
    g: &BipartiteMultigraph,
    d: usize,
    tags: usize,
    lba: bool,
    cost: impl Fn(usize, usize) -> u64,
) -> Result<Vec<usize>, RubikError> {
    if lba {
        let ms = lba_matching_sequence(g, d, &cost)?;
        let heights = assign_matchings_to_heights(&ms, |m, h| {
            m.iter().map(|e| cost(e.tag, h)).max().unwrap_or(0)
        });
        Ok(tag_to_index(&ms, tags, &heights))
    } else {
        let ms = decompose_regular(g, d)?;
        let ident: Vec<usize> = (0..d).collect();
        Ok(tag_to_index(&ms, tags, &ident))
    }
}

/// Groups `(robot, from, to)` moves along `axis` into line shuffles, dropping
/// stayers. Lines are sorted by anchor.
fn group_lines(axis: Axis, moves: impl IntoIterator<Item = (Coord, Coord)>) -> Vec<LineShuffle> {
    let a = axis.index();
    let mut by_line: std::collections::BTreeMap<(u16, u16, u16), Vec<(u16, u16)>> = Default::default();
    for (from, to) in moves {
        debug_assert_eq!(from.with(a, 0), to.with(a, 0));
        if from == to {
            continue;
        }
        let k = from.with(a, 0);
        by_line.entry((k.z, k.y, k.x)).or_default().push((from.get(a), to.get(a)));
    }
    by_line
        .into_iter()
        .map(|((z, y, x), mut moves)| {
            moves.sort_unstable();
            LineShuffle {
                anchor: Coord::new(x, y, z),
                moves,
            }
        })
        .collect()
}

fn z_round(current: &[Coord], dest_z: &[u16]) -> ShuffleRound {
    ShuffleRound {
        axis: Axis::Z,
        recenter: None,
        lines: group_lines(
            Axis::Z,
            current.iter().zip(dest_z).map(|(&c, &z)| (c, c.with(2, z))),
        ),
    }
}

/// First z round: within every vertical-slot column, robots move to heights
/// such that each x-y plane holds exactly one robot per target column.
///
/// `s1` and `g1` must be full vertical-centered configurations.
pub fn matching_xy(grid: &Grid3D, s1: &[Coord], g1: &[Coord], lba: bool) -> Result<StagePlan, RubikError> {
    check_centered(grid, s1, Orientation::VerticalCentered)?;
    check_centered(grid, g1, Orientation::VerticalCentered)?;
    let cols = ColumnIndex::new(grid);
    let nc = grid.m1() / 3 * cols.ys.len();
    let mut g = BipartiteMultigraph::new(nc, nc);
    for (i, (&s, &t)) in s1.iter().zip(g1).enumerate() {
        g.add_edge(cols.of(s), cols.of(t), i);
    }
    let heights = matchings_to_indices(&g, grid.m3(), s1.len(), lba, |i, h| {
        s1[i].z.abs_diff(h as u16) as u64
    })?;
    let dest: Vec<u16> = heights.iter().map(|&h| h as u16).collect();
    let round = z_round(s1, &dest);
    let output: Vec<Coord> = s1.iter().zip(&dest).map(|(&c, &z)| c.with(2, z)).collect();
    Ok(StagePlan {
        rounds: vec![round],
        intermediate: output.clone(),
        output,
    })
}

/// Per-plane result of the three XY rounds.
struct PlaneRounds {
    a: Vec<(Coord, Coord)>,
    b_recenter: Vec<(Coord, Coord)>,
    b: Vec<(Coord, Coord)>,
    c_recenter: Vec<(Coord, Coord)>,
    c: Vec<(Coord, Coord)>,
    /// (robot, final position, row chosen in round A)
    finals: Vec<(usize, Coord, Coord)>,
}

fn plane_rounds(
    grid: &Grid3D,
    z: u16,
    robots: &[usize],
    s2: &[Coord],
    g1: &[Coord],
    lba: bool,
) -> Result<PlaneRounds, RubikError> {
    let ys = grid.vertical_slot_ys();
    let ncol = grid.m1() / 3;
    let rows = ys.len();
    if robots.len() != ncol * rows {
        return Err(RubikError::Occupancy(format!(
            "plane z={z} holds {} robots, expected {}",
            robots.len(),
            ncol * rows
        )));
    }
    let mut seen_target = vec![false; grid.num_vertices()];
    for &i in robots {
        let k = grid.index(g1[i].with(2, 0));
        if seen_target[k] {
            return Err(RubikError::Occupancy(format!(
                "plane z={z} holds two robots for target column ({}, {})",
                g1[i].x, g1[i].y
            )));
        }
        seen_target[k] = true;
    }
    // local index k -> robot robots[k]
    let mut g = BipartiteMultigraph::new(ncol, ncol);
    for (k, &i) in robots.iter().enumerate() {
        g.add_edge(s2[i].x as usize / 3, g1[i].x as usize / 3, k);
    }
    let row_of = matchings_to_indices(&g, rows, robots.len(), lba, |k, r| {
        s2[robots[k]].y.abs_diff(ys[r]) as u64
    })?;

    // round A: y shuffle to the chosen row
    let mut pos: Vec<Coord> = robots.iter().map(|&i| s2[i]).collect();
    let a: Vec<(Coord, Coord)> = pos
        .iter()
        .zip(&row_of)
        .map(|(&p, &r)| (p, p.with(1, ys[r])))
        .collect();
    for (p, m) in pos.iter_mut().zip(&a) {
        *p = m.1;
    }
    let after_a = pos.clone();

    // round B: vertical -> horizontal by target cell, then x shuffle
    let target_cell: Vec<usize> = robots.iter().map(|&i| g1[i].x as usize / 3).collect();
    let mut by_cell: Vec<Vec<usize>> = vec![Vec::new(); ncol * (grid.m2() / 3)];
    let cell_of = |c: Coord| (c.y as usize / 3) * ncol + c.x as usize / 3;
    for (k, &p) in pos.iter().enumerate() {
        by_cell[cell_of(p)].push(k);
    }
    let mut b_recenter = Vec::with_capacity(pos.len());
    for (cell, members) in by_cell.iter_mut().enumerate() {
        let (ci, cj) = (cell % ncol, cell / ncol);
        members.sort_by_key(|&k| (target_cell[k], pos[k].y));
        let xs = grid.slot_xs_in_cell(ci);
        for (&k, &x) in members.iter().zip(&xs) {
            let to = Coord::new(x, 3 * cj as u16 + 1, z);
            b_recenter.push((pos[k], to));
            pos[k] = to;
        }
    }
    // incoming robots of a target cell take its slots in source-x order
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); ncol * (grid.m2() / 3)];
    for (k, &p) in pos.iter().enumerate() {
        incoming[(p.y as usize / 3) * ncol + target_cell[k]].push(k);
    }
    let mut b = Vec::with_capacity(pos.len());
    for (cell, members) in incoming.iter_mut().enumerate() {
        members.sort_by_key(|&k| pos[k].x);
        let xs = grid.slot_xs_in_cell(cell % ncol);
        if members.len() != xs.len() {
            return Err(RubikError::Occupancy(format!(
                "cell {cell} of plane z={z} receives {} robots",
                members.len()
            )));
        }
        for (&k, &x) in members.iter().zip(&xs) {
            let to = pos[k].with(0, x);
            b.push((pos[k], to));
            pos[k] = to;
        }
    }

    // round C: horizontal -> vertical by target row, then y shuffle
    for m in by_cell.iter_mut() {
        m.clear();
    }
    for (k, &p) in pos.iter().enumerate() {
        by_cell[cell_of(p)].push(k);
    }
    let mut c_recenter = Vec::with_capacity(pos.len());
    for (cell, members) in by_cell.iter_mut().enumerate() {
        let (ci, cj) = (cell % ncol, cell / ncol);
        members.sort_by_key(|&k| (g1[robots[k]].y, pos[k].x));
        let yv = grid.slot_ys_in_cell(cj);
        for (&k, &y) in members.iter().zip(&yv) {
            let to = Coord::new(3 * ci as u16 + 1, y, z);
            c_recenter.push((pos[k], to));
            pos[k] = to;
        }
    }
    let mut c = Vec::with_capacity(pos.len());
    let mut finals = Vec::with_capacity(pos.len());
    for (k, p) in pos.iter_mut().enumerate() {
        let to = p.with(1, g1[robots[k]].y);
        c.push((*p, to));
        *p = to;
        finals.push((robots[k], to, after_a[k]));
    }
    Ok(PlaneRounds {
        a,
        b_recenter,
        b,
        c_recenter,
        c,
        finals,
    })
}

/// Three rounds on every x-y plane at once: a y round to rows chosen by a
/// matching over x-columns, an x round (after converting cells to middle
/// rows) to the target cell column, and a y round (after converting back to
/// middle columns) to the target row. Afterwards every robot stands at its
/// target `(x, y)` in its current plane.
///
/// Planes are planned in parallel; the result does not depend on scheduling.
pub fn xy_fitting(grid: &Grid3D, s2: &[Coord], g1: &[Coord], lba: bool) -> Result<StagePlan, RubikError> {
    check_centered(grid, s2, Orientation::VerticalCentered)?;
    check_centered(grid, g1, Orientation::VerticalCentered)?;
    let mut per_plane: Vec<Vec<usize>> = vec![Vec::new(); grid.m3()];
    for (i, c) in s2.iter().enumerate() {
        per_plane[c.z as usize].push(i);
    }
    let planes: Vec<PlaneRounds> = per_plane
        .par_iter()
        .enumerate()
        .map(|(z, robots)| plane_rounds(grid, z as u16, robots, s2, g1, lba))
        .collect::<Result<_, _>>()?;
    let mut output = s2.to_vec();
    let mut intermediate = s2.to_vec();
    for p in &planes {
        for &(i, to, mid) in &p.finals {
            output[i] = to;
            intermediate[i] = mid;
        }
    }
    let round_a = ShuffleRound {
        axis: Axis::Y,
        recenter: None,
        lines: group_lines(Axis::Y, planes.iter().flat_map(|p| p.a.iter().copied())),
    };
    let round_b = ShuffleRound {
        axis: Axis::X,
        recenter: Some(Recentering {
            to: Orientation::HorizontalCentered,
            moves: planes.iter().flat_map(|p| p.b_recenter.iter().copied()).collect(),
        }),
        lines: group_lines(Axis::X, planes.iter().flat_map(|p| p.b.iter().copied())),
    };
    let round_c = ShuffleRound {
        axis: Axis::Y,
        recenter: Some(Recentering {
            to: Orientation::VerticalCentered,
            moves: planes.iter().flat_map(|p| p.c_recenter.iter().copied()).collect(),
        }),
        lines: group_lines(Axis::Y, planes.iter().flat_map(|p| p.c.iter().copied())),
    };
    Ok(StagePlan {
        rounds: vec![round_a, round_b, round_c],
        output,
        intermediate,
    })
}

/// Final z round placing every robot at its exact target slot.
pub fn z_fitting(grid: &Grid3D, current: &[Coord], g1: &[Coord]) -> Result<StagePlan, RubikError> {
    check_centered(grid, current, Orientation::VerticalCentered)?;
    for (robot, (&at, &target)) in current.iter().zip(g1).enumerate() {
        if at.x != target.x || at.y != target.y {
            return Err(RubikError::WrongColumn { robot, at, target });
        }
    }
    let dest: Vec<u16> = g1.iter().map(|c| c.z).collect();
    Ok(StagePlan {
        rounds: vec![z_round(current, &dest)],
        output: g1.to_vec(),
        intermediate: g1.to_vec(),
    })
}

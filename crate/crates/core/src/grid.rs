//! Geometry of the `m1 x m2 x m3` routing grid.
//!
//! Every x-y plane is partitioned into 3x3 cells. Cell `(ci, cj)` spans
//! `x in [3ci, 3ci + 2]` and `y in [3cj, 3cj + 2]`; its middle column is
//! `x = 3ci + 1` and its middle row is `y = 3cj + 1`. The only supported
//! obstacle layout is the "building" pattern: full-height blocked columns at
//! every cell center `(3i + 1, 3j + 1, z)`.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("grid side lengths must be positive multiples of 3, got {0}x{1}x{2}")]
    NotMultipleOfThree(usize, usize, usize),
    #[error("grid side lengths must satisfy m1 >= m2 >= m3, got {0}x{1}x{2}")]
    NotOrdered(usize, usize, usize),
    #[error("grid side length {0} exceeds the supported maximum of 65535")]
    TooLarge(usize),
    #[error("unsupported obstacle set: only full-height building columns at (3i+1, 3j+1) are accepted ({0})")]
    UnsupportedObstacles(String),
    #[error("coordinate {0} is outside the grid")]
    OutOfBounds(Coord),
    #[error("coordinate {0} is an obstacle")]
    Blocked(Coord),
    #[error("no obstacle-free path between {0} and {1}")]
    Unreachable(Coord, Coord),
}

/// A lattice vertex. Serialized as a JSON array `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coord {
    pub x: u16,
    pub y: u16,
    pub z: u16,
}

impl Coord {
    pub const fn new(x: u16, y: u16, z: u16) -> Self {
        Coord { x, y, z }
    }

    pub fn from_usize(x: usize, y: usize, z: usize) -> Self {
        Coord::new(x as u16, y as u16, z as u16)
    }

    pub fn l1(&self, other: &Coord) -> usize {
        (self.x.abs_diff(other.x) + self.y.abs_diff(other.y) + self.z.abs_diff(other.z)) as usize
    }

    /// Component along `axis` (0 = x, 1 = y, 2 = z).
    pub fn get(&self, axis: usize) -> u16 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn with(mut self, axis: usize, value: u16) -> Self {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            _ => self.z = value,
        }
        self
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl Serialize for Coord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Coord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y, z] = <[u16; 3]>::deserialize(deserializer)?;
        Ok(Coord { x, y, z })
    }
}

/// A 3x3 cell of an x-y plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub ci: usize,
    pub cj: usize,
}

impl Cell {
    pub fn of(c: Coord) -> Cell {
        Cell {
            ci: c.x as usize / 3,
            cj: c.y as usize / 3,
        }
    }
}

/// Which middle line of each cell a centered configuration occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Middle columns, `x = 3ci + 1`.
    VerticalCentered,
    /// Middle rows, `y = 3cj + 1`.
    HorizontalCentered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstaclePattern {
    None,
    Buildings,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid3D {
    m1: usize,
    m2: usize,
    m3: usize,
    pattern: ObstaclePattern,
}

const OFFSETS: [(i32, i32, i32); 6] = [
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (0, 0, 1),
    (0, 0, -1),
];

impl Grid3D {
    pub fn new(m1: usize, m2: usize, m3: usize) -> Result<Self, GridError> {
        Self::with_pattern(m1, m2, m3, ObstaclePattern::None)
    }

    pub fn with_buildings(m1: usize, m2: usize, m3: usize) -> Result<Self, GridError> {
        Self::with_pattern(m1, m2, m3, ObstaclePattern::Buildings)
    }

    pub fn with_pattern(
        m1: usize,
        m2: usize,
        m3: usize,
        pattern: ObstaclePattern,
    ) -> Result<Self, GridError> {
        for m in [m1, m2, m3] {
            if m > u16::MAX as usize {
                return Err(GridError::TooLarge(m));
            }
        }
        if [m1, m2, m3].iter().any(|&m| m == 0 || m % 3 != 0) {
            return Err(GridError::NotMultipleOfThree(m1, m2, m3));
        }
        if !(m1 >= m2 && m2 >= m3) {
            return Err(GridError::NotOrdered(m1, m2, m3));
        }
        Ok(Grid3D { m1, m2, m3, pattern })
    }

    /// Builds a grid from an explicit obstacle list. The list must be empty or
    /// exactly the building pattern.
    pub fn with_obstacles(
        m1: usize,
        m2: usize,
        m3: usize,
        obstacles: &[Coord],
    ) -> Result<Self, GridError> {
        if obstacles.is_empty() {
            return Self::new(m1, m2, m3);
        }
        let grid = Self::with_buildings(m1, m2, m3)?;
        let mut seen = vec![false; grid.num_vertices()];
        for &c in obstacles {
            if !grid.in_bounds(c) {
                return Err(GridError::OutOfBounds(c));
            }
            if !grid.is_obstacle(c) {
                return Err(GridError::UnsupportedObstacles(format!(
                    "{c} is not on a building column"
                )));
            }
            seen[grid.index(c)] = true;
        }
        let expected = grid.num_vertices() - grid.num_free();
        let given = seen.iter().filter(|&&b| b).count();
        if given != expected {
            return Err(GridError::UnsupportedObstacles(format!(
                "{given} distinct obstacle cells given, building pattern needs {expected}"
            )));
        }
        Ok(grid)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m1, self.m2, self.m3)
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn m3(&self) -> usize {
        self.m3
    }

    /// Side length along `axis` (0 = x, 1 = y, 2 = z).
    pub fn len(&self, axis: usize) -> usize {
        match axis {
            0 => self.m1,
            1 => self.m2,
            _ => self.m3,
        }
    }

    pub fn pattern(&self) -> ObstaclePattern {
        self.pattern
    }

    pub fn has_buildings(&self) -> bool {
        self.pattern == ObstaclePattern::Buildings
    }

    pub fn num_vertices(&self) -> usize {
        self.m1 * self.m2 * self.m3
    }

    pub fn num_free(&self) -> usize {
        match self.pattern {
            ObstaclePattern::None => self.num_vertices(),
            ObstaclePattern::Buildings => self.num_vertices() / 9 * 8,
        }
    }

    /// Maximum supported robot count: one third of the vertices, or two
    /// ninths with buildings. Equals the number of centered slots.
    pub fn capacity(&self) -> usize {
        match self.pattern {
            ObstaclePattern::None => self.num_vertices() / 3,
            ObstaclePattern::Buildings => 2 * self.num_vertices() / 9,
        }
    }

    pub fn in_bounds(&self, c: Coord) -> bool {
        (c.x as usize) < self.m1 && (c.y as usize) < self.m2 && (c.z as usize) < self.m3
    }

    pub fn is_obstacle(&self, c: Coord) -> bool {
        self.pattern == ObstaclePattern::Buildings && c.x % 3 == 1 && c.y % 3 == 1
    }

    pub fn is_free(&self, c: Coord) -> bool {
        self.in_bounds(c) && !self.is_obstacle(c)
    }

    /// Dense vertex index, x fastest.
    pub fn index(&self, c: Coord) -> usize {
        (c.z as usize * self.m2 + c.y as usize) * self.m1 + c.x as usize
    }

    pub fn coord(&self, index: usize) -> Coord {
        let x = index % self.m1;
        let y = (index / self.m1) % self.m2;
        let z = index / (self.m1 * self.m2);
        Coord::from_usize(x, y, z)
    }

    pub fn obstacles(&self) -> Vec<Coord> {
        self.all_coords().filter(|&c| self.is_obstacle(c)).collect()
    }

    pub fn all_coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.num_vertices()).map(move |i| self.coord(i))
    }

    pub fn free_coords(&self) -> impl Iterator<Item = Coord> + '_ {
        self.all_coords().filter(move |&c| !self.is_obstacle(c))
    }

    pub fn check(&self, c: Coord) -> Result<(), GridError> {
        if !self.in_bounds(c) {
            Err(GridError::OutOfBounds(c))
        } else if self.is_obstacle(c) {
            Err(GridError::Blocked(c))
        } else {
            Ok(())
        }
    }

    /// Free 6-neighbors of `c`, appended to `out` (cleared first).
    pub fn neighbors_into(&self, c: Coord, out: &mut Vec<Coord>) {
        out.clear();
        for (dx, dy, dz) in OFFSETS {
            let x = c.x as i32 + dx;
            let y = c.y as i32 + dy;
            let z = c.z as i32 + dz;
            if x < 0 || y < 0 || z < 0 {
                continue;
            }
            let n = Coord::new(x as u16, y as u16, z as u16);
            if self.is_free(n) {
                out.push(n);
            }
        }
    }

    pub fn neighbors(&self, c: Coord) -> Result<Vec<Coord>, GridError> {
        self.check(c)?;
        let mut out = Vec::with_capacity(6);
        self.neighbors_into(c, &mut out);
        Ok(out)
    }

    /// Shortest obstacle-avoiding distance, in closed form.
    ///
    /// Buildings are isolated single-cell columns, so a detour is only needed
    /// when both endpoints share a building line (`x = 3i + 1` or
    /// `y = 3j + 1`) with a building strictly between them; it costs 2.
    pub fn distance(&self, a: Coord, b: Coord) -> usize {
        let l1 = a.l1(&b);
        if self.pattern == ObstaclePattern::None {
            return l1;
        }
        let blocked_between = |lo: u16, hi: u16| {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            // first building coordinate strictly above lo
            let next = lo - lo % 3 + 1 + if lo % 3 >= 1 { 3 } else { 0 };
            next < hi
        };
        if a.x == b.x && a.x % 3 == 1 && blocked_between(a.y, b.y) {
            return l1 + 2;
        }
        if a.y == b.y && a.y % 3 == 1 && blocked_between(a.x, b.x) {
            return l1 + 2;
        }
        l1
    }

    /// Breadth-first search distance. Agrees with [`Grid3D::distance`] on
    /// every supported grid; kept as the reference implementation.
    pub fn bfs_distance(&self, a: Coord, b: Coord) -> Result<usize, GridError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Ok(0);
        }
        let mut dist = vec![u32::MAX; self.num_vertices()];
        let mut queue = VecDeque::new();
        dist[self.index(a)] = 0;
        queue.push_back(a);
        let mut nbrs = Vec::with_capacity(6);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)];
            self.neighbors_into(c, &mut nbrs);
            for &n in &nbrs {
                let ni = self.index(n);
                if dist[ni] == u32::MAX {
                    dist[ni] = d + 1;
                    if n == b {
                        return Ok(d as usize + 1);
                    }
                    queue.push_back(n);
                }
            }
        }
        Err(GridError::Unreachable(a, b))
    }

    /// Middle-line positions along x for horizontal slots in cell column `ci`.
    pub fn slot_xs_in_cell(&self, ci: usize) -> Vec<u16> {
        let base = 3 * ci as u16;
        if self.has_buildings() {
            vec![base, base + 2]
        } else {
            vec![base, base + 1, base + 2]
        }
    }

    /// Vertical-slot y values within one cell row `cj`.
    pub fn slot_ys_in_cell(&self, cj: usize) -> Vec<u16> {
        let base = 3 * cj as u16;
        if self.has_buildings() {
            vec![base, base + 2]
        } else {
            vec![base, base + 1, base + 2]
        }
    }

    /// All y values occupied by vertical slots along one middle column.
    pub fn vertical_slot_ys(&self) -> Vec<u16> {
        (0..self.m2 / 3).flat_map(|cj| self.slot_ys_in_cell(cj)).collect()
    }

    /// All x values occupied by horizontal slots along one middle row.
    pub fn horizontal_slot_xs(&self) -> Vec<u16> {
        (0..self.m1 / 3).flat_map(|ci| self.slot_xs_in_cell(ci)).collect()
    }

    /// Slots per 3x3 cell in a centered configuration (3, or 2 with buildings).
    pub fn slots_per_cell(&self) -> usize {
        if self.has_buildings() {
            2
        } else {
            3
        }
    }

    pub fn is_centered_slot(&self, c: Coord, o: Orientation) -> bool {
        if !self.is_free(c) {
            return false;
        }
        match o {
            Orientation::VerticalCentered => c.x % 3 == 1,
            Orientation::HorizontalCentered => c.y % 3 == 1,
        }
    }

    /// Free cells on the middle line of every cell, in lexicographic
    /// `(x, y, z)` order.
    pub fn centered_slots(&self, o: Orientation) -> Vec<Coord> {
        let mut out = Vec::with_capacity(self.capacity());
        for x in 0..self.m1 {
            for y in 0..self.m2 {
                for z in 0..self.m3 {
                    let c = Coord::from_usize(x, y, z);
                    if self.is_centered_slot(c, o) {
                        out.push(c);
                    }
                }
            }
        }
        out
    }

    /// True iff no (cell, z) pair holds more than three robots.
    pub fn is_balanced(&self, config: &[Coord]) -> bool {
        let (ni, nj) = (self.m1 / 3, self.m2 / 3);
        let mut counts = vec![0u8; ni * nj * self.m3];
        for c in config {
            let k = (c.z as usize * nj + c.y as usize / 3) * ni + c.x as usize / 3;
            counts[k] = counts[k].saturating_add(1);
            if counts[k] > 3 {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(x: u16, y: u16, z: u16) -> Coord {
        Coord::new(x, y, z)
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(matches!(
            Grid3D::new(7, 6, 3),
            Err(GridError::NotMultipleOfThree(..))
        ));
        assert!(matches!(
            Grid3D::new(6, 6, 4),
            Err(GridError::NotMultipleOfThree(..))
        ));
        assert!(matches!(Grid3D::new(6, 9, 3), Err(GridError::NotOrdered(..))));
        assert!(Grid3D::new(0, 0, 0).is_err());
    }

    #[test]
    fn corner_and_interior_neighbors() {
        let g = Grid3D::new(3, 3, 3).unwrap();
        let mut n = g.neighbors(c(0, 0, 0)).unwrap();
        n.sort();
        assert_eq!(n, vec![c(0, 0, 1), c(0, 1, 0), c(1, 0, 0)]);
        assert_eq!(g.neighbors(c(1, 1, 1)).unwrap().len(), 6);
    }

    #[test]
    fn neighbors_skip_buildings() {
        let g = Grid3D::with_buildings(6, 6, 3).unwrap();
        let n = g.neighbors(c(0, 1, 0)).unwrap();
        assert!(!n.contains(&c(1, 1, 0)));
        let mut n = n;
        n.sort();
        assert_eq!(n, vec![c(0, 0, 0), c(0, 1, 1), c(0, 2, 0)]);
        assert!(matches!(g.neighbors(c(1, 1, 0)), Err(GridError::Blocked(_))));
        assert!(matches!(
            g.neighbors(c(6, 0, 0)),
            Err(GridError::OutOfBounds(_))
        ));
    }

    #[test]
    fn explicit_obstacles_must_be_buildings() {
        let b = Grid3D::with_buildings(6, 6, 3).unwrap();
        let obs = b.obstacles();
        assert_eq!(obs.len(), 12);
        assert_eq!(Grid3D::with_obstacles(6, 6, 3, &obs).unwrap(), b);
        assert!(Grid3D::with_obstacles(6, 6, 3, &obs[..5]).is_err());
        assert!(Grid3D::with_obstacles(6, 6, 3, &[c(0, 0, 0)]).is_err());
    }

    #[test]
    fn bfs_examples() {
        let g = Grid3D::new(3, 3, 3).unwrap();
        assert_eq!(g.bfs_distance(c(1, 1, 1), c(1, 1, 1)).unwrap(), 0);
        let g = Grid3D::new(6, 6, 3).unwrap();
        assert_eq!(g.bfs_distance(c(0, 0, 0), c(2, 3, 1)).unwrap(), 6);
        let b = Grid3D::with_buildings(6, 6, 3).unwrap();
        assert_eq!(b.bfs_distance(c(0, 1, 0), c(2, 1, 0)).unwrap(), 4);
        assert_eq!(b.distance(c(0, 1, 0), c(2, 1, 0)), 4);
    }

    #[test]
    fn closed_form_matches_bfs_with_buildings() {
        let g = Grid3D::with_buildings(12, 9, 3).unwrap();
        let free: Vec<Coord> = g.free_coords().collect();
        for &a in free.iter().step_by(7) {
            for &b in &free {
                assert_eq!(g.distance(a, b), g.bfs_distance(a, b).unwrap(), "{a} {b}");
            }
        }
    }

    #[test]
    fn centered_slot_counts() {
        let g = Grid3D::new(6, 6, 3).unwrap();
        assert_eq!(g.centered_slots(Orientation::VerticalCentered).len(), 36);
        assert_eq!(g.centered_slots(Orientation::HorizontalCentered).len(), 36);
        let b = Grid3D::with_buildings(6, 6, 3).unwrap();
        let slots = b.centered_slots(Orientation::VerticalCentered);
        assert_eq!(slots.len(), 24);
        assert_eq!(slots.len(), b.capacity());
        assert!(slots.iter().all(|s| s.x % 3 == 1 && !b.is_obstacle(*s)));
        let t = Grid3D::new(3, 3, 3).unwrap();
        let slots = t.centered_slots(Orientation::VerticalCentered);
        assert_eq!(slots.len(), 9);
        assert!(slots.iter().all(|s| s.x == 1));
        assert!(slots.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn balance_checks() {
        let g = Grid3D::new(6, 6, 3).unwrap();
        let slots = g.centered_slots(Orientation::VerticalCentered);
        assert!(g.is_balanced(&slots));
        assert!(!g.is_balanced(&[c(0, 0, 0), c(1, 0, 0), c(2, 0, 0), c(0, 1, 0)]));
        assert!(g.is_balanced(&[c(0, 0, 0), c(1, 0, 0), c(2, 0, 0), c(0, 1, 1)]));
    }

    #[test]
    fn balance_matches_direct_count() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let g = Grid3D::new(12, 12, 3).unwrap();
        let all: Vec<Coord> = g.all_coords().collect();
        for seed in 0..30u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let sample: Vec<Coord> = all.choose_multiple(&mut rng, 144).copied().collect();
            let mut worst = 0;
            for ci in 0..4u16 {
                for cj in 0..4u16 {
                    for z in 0..3u16 {
                        let n = sample
                            .iter()
                            .filter(|p| p.x / 3 == ci && p.y / 3 == cj && p.z == z)
                            .count();
                        worst = worst.max(n);
                    }
                }
            }
            assert_eq!(g.is_balanced(&sample), worst <= 3);
        }
    }

    fn arb_pair() -> impl Strategy<Value = (Coord, Coord, Coord)> {
        let c = (0u16..12, 0u16..9, 0u16..6).prop_map(|(x, y, z)| Coord::new(x, y, z));
        (c.clone(), c.clone(), c)
    }

    proptest! {
        #[test]
        fn bfs_is_metric_and_l1_without_obstacles((a, b, m) in arb_pair()) {
            let g = Grid3D::new(12, 9, 6).unwrap();
            let ab = g.bfs_distance(a, b).unwrap();
            prop_assert_eq!(ab, a.l1(&b));
            prop_assert_eq!(ab, g.bfs_distance(b, a).unwrap());
            prop_assert!(ab <= g.bfs_distance(a, m).unwrap() + g.bfs_distance(m, b).unwrap());
        }
    }
}

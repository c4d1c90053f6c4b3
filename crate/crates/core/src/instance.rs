//! Labeled problem instances, pattern generators and the instance file format.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)` (rand_chacha
//! 0.3) and an explicit Fisher-Yates partial shuffle driven by `gen_range`,
//! so generated instances are a pure function of `(grid, spec, seed)`.
//! Virtual-robot padding draws from the same generator seeded with
//! `seed ^ PAD_STREAM`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Coord, Grid3D, GridError, ObstaclePattern};

pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64";
const PAD_STREAM: u64 = 0x5eed_7ad0_0000_0001;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{requested} robots exceed the grid capacity of {capacity}")]
    CapacityExceeded { requested: usize, capacity: usize },
    #[error("pattern does not fit the grid: {0}")]
    PatternMismatch(String),
    #[error("starts and goals differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("duplicate {which} coordinate {coord}")]
    Duplicate { which: &'static str, coord: Coord },
    #[error("{which} coordinate {coord} is not a free cell")]
    NotFree { which: &'static str, coord: Coord },
    #[error("virtual_from {0} exceeds the robot count {1}")]
    BadVirtualFrom(usize, usize),
    #[error("malformed instance document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("density must lie in (0, 1/3], got {0}")]
    BadDensity(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub grid: Grid3D,
    pub starts: Vec<Coord>,
    pub goals: Vec<Coord>,
    pub seed: u64,
    /// Index of the first virtual robot; equals the robot count if none.
    pub virtual_from: usize,
}

impl Instance {
    /// Builds an instance of real robots only, checking every invariant.
    pub fn new(
        grid: Grid3D,
        starts: Vec<Coord>,
        goals: Vec<Coord>,
        seed: u64,
    ) -> Result<Self, InstanceError> {
        let n = starts.len();
        Self::with_virtual(grid, starts, goals, seed, n)
    }

    pub fn with_virtual(
        grid: Grid3D,
        starts: Vec<Coord>,
        goals: Vec<Coord>,
        seed: u64,
        virtual_from: usize,
    ) -> Result<Self, InstanceError> {
        let inst = Instance {
            grid,
            starts,
            goals,
            seed,
            virtual_from,
        };
        inst.check()?;
        Ok(inst)
    }

    pub fn check(&self) -> Result<(), InstanceError> {
        if self.starts.len() != self.goals.len() {
            return Err(InstanceError::LengthMismatch(
                self.starts.len(),
                self.goals.len(),
            ));
        }
        if self.virtual_from > self.starts.len() {
            return Err(InstanceError::BadVirtualFrom(
                self.virtual_from,
                self.starts.len(),
            ));
        }
        let capacity = self.grid.capacity();
        if self.starts.len() > capacity {
            return Err(InstanceError::CapacityExceeded {
                requested: self.starts.len(),
                capacity,
            });
        }
        for (which, list) in [("start", &self.starts), ("goal", &self.goals)] {
            let mut seen = vec![false; self.grid.num_vertices()];
            for &c in list.iter() {
                if !self.grid.is_free(c) {
                    return Err(InstanceError::NotFree { which, coord: c });
                }
                let i = self.grid.index(c);
                if seen[i] {
                    return Err(InstanceError::Duplicate { which, coord: c });
                }
                seen[i] = true;
            }
        }
        Ok(())
    }

    pub fn num_robots(&self) -> usize {
        self.starts.len()
    }

    pub fn num_real(&self) -> usize {
        self.virtual_from
    }

    /// Robot density relative to all grid vertices, counting real robots.
    pub fn density(&self) -> f64 {
        self.virtual_from as f64 / self.grid.num_vertices() as f64
    }

    pub fn real_only(&self) -> Instance {
        Instance {
            grid: self.grid.clone(),
            starts: self.starts[..self.virtual_from].to_vec(),
            goals: self.goals[..self.virtual_from].to_vec(),
            seed: self.seed,
            virtual_from: self.virtual_from,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternKind {
    UniformRandom,
    Rings,
    Blocks,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    /// Fraction of all grid vertices occupied by robots.
    pub density: f64,
}

impl PatternSpec {
    pub fn uniform(density: f64) -> Self {
        PatternSpec {
            kind: PatternKind::UniformRandom,
            density,
        }
    }

    pub fn robot_count(&self, grid: &Grid3D) -> Result<usize, InstanceError> {
        if !(self.density > 0.0 && self.density <= 1.0 / 3.0 + 1e-9) {
            return Err(InstanceError::BadDensity(self.density));
        }
        let n = (self.density * grid.num_vertices() as f64).round() as usize;
        let capacity = grid.capacity();
        if n > capacity {
            return Err(InstanceError::CapacityExceeded {
                requested: n,
                capacity,
            });
        }
        Ok(n)
    }
}

/// Draws `k` distinct elements from `pool` by a partial Fisher-Yates shuffle.
fn sample<T: Copy>(pool: &mut [T], k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    debug_assert!(k <= pool.len());
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool[..k].to_vec()
}

pub fn generate(grid: &Grid3D, spec: PatternSpec, seed: u64) -> Result<Instance, InstanceError> {
    match spec.kind {
        PatternKind::UniformRandom => generate_uniform(grid, spec, seed),
        PatternKind::Rings => generate_rings(grid, spec, seed),
        PatternKind::Blocks => generate_blocks(grid, spec.density, seed, None),
    }
}

fn generate_uniform(
    grid: &Grid3D,
    spec: PatternSpec,
    seed: u64,
) -> Result<Instance, InstanceError> {
    let n = spec.robot_count(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<Coord> = grid.free_coords().collect();
    let starts = sample(&mut pool, n, &mut rng);
    let mut pool: Vec<Coord> = grid.free_coords().collect();
    let goals = sample(&mut pool, n, &mut rng);
    Instance::new(grid.clone(), starts, goals, seed)
}

fn require_cube(grid: &Grid3D) -> Result<usize, InstanceError> {
    let (m1, m2, m3) = grid.dims();
    if m1 != m2 || m2 != m3 {
        return Err(InstanceError::PatternMismatch(format!(
            "rings and blocks need a cubic grid, got {m1}x{m2}x{m3}"
        )));
    }
    Ok(m1)
}

/// Point reflection through the grid center.
pub fn reflect(grid: &Grid3D, c: Coord) -> Coord {
    let (m1, m2, m3) = grid.dims();
    Coord::from_usize(
        m1 - 1 - c.x as usize,
        m2 - 1 - c.y as usize,
        m3 - 1 - c.z as usize,
    )
}

/// Index of the concentric square ring containing `(x, y)`, counted inwards
/// from the plane boundary (the boundary ring is 0).
pub fn ring_index(m: usize, x: usize, y: usize) -> usize {
    x.min(y).min(m - 1 - x).min(m - 1 - y)
}

fn generate_rings(grid: &Grid3D, spec: PatternSpec, seed: u64) -> Result<Instance, InstanceError> {
    let m = require_cube(grid)?;
    let n = spec.robot_count(grid)?;
    let mut pool: Vec<Coord> = grid
        .free_coords()
        .filter(|c| ring_index(m, c.x as usize, c.y as usize).is_multiple_of(2))
        .collect();
    if pool.len() < n {
        return Err(InstanceError::PatternMismatch(format!(
            "rings hold {} cells, {n} robots requested",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = sample(&mut pool, n, &mut rng);
    let goals = starts.iter().map(|&s| reflect(grid, s)).collect();
    Instance::new(grid.clone(), starts, goals, seed)
}

/// Splits a cubic grid into 27 blocks and sends every robot to the same
/// offset inside the image block under `permutation` (seeded random when
/// `None`).
pub fn generate_blocks(
    grid: &Grid3D,
    density: f64,
    seed: u64,
    permutation: Option<[usize; 27]>,
) -> Result<Instance, InstanceError> {
    let m = require_cube(grid)?;
    let side = m / 3;
    if grid.has_buildings() && side % 3 != 0 {
        return Err(InstanceError::PatternMismatch(format!(
            "block side {side} would move robots onto buildings"
        )));
    }
    let n = PatternSpec {
        kind: PatternKind::Blocks,
        density,
    }
    .robot_count(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perm = match permutation {
        Some(p) => {
            let mut sorted = p;
            sorted.sort_unstable();
            if sorted != std::array::from_fn::<usize, 27, _>(|i| i) {
                return Err(InstanceError::PatternMismatch(
                    "block permutation is not a permutation of 0..27".into(),
                ));
            }
            p
        }
        None => {
            let mut p: [usize; 27] = std::array::from_fn(|i| i);
            for i in (1..27).rev() {
                let j = rng.gen_range(0..=i);
                p.swap(i, j);
            }
            p
        }
    };
    let mut pool: Vec<Coord> = grid.free_coords().collect();
    let starts = sample(&mut pool, n, &mut rng);
    let block_of = |c: Coord| {
        let (bx, by, bz) = (c.x as usize / side, c.y as usize / side, c.z as usize / side);
        bx + 3 * by + 9 * bz
    };
    let goals = starts
        .iter()
        .map(|&s| {
            let to = perm[block_of(s)];
            let (tx, ty, tz) = (to % 3, (to / 3) % 3, to / 9);
            Coord::from_usize(
                tx * side + s.x as usize % side,
                ty * side + s.y as usize % side,
                tz * side + s.z as usize % side,
            )
        })
        .collect();
    Instance::new(grid.clone(), starts, goals, seed)
}

/// Appends virtual robots (goal = start) on random cells untouched by any
/// start or goal until the grid is at capacity. Real robots keep their
/// indices.
pub fn pad_virtual(instance: &Instance) -> Instance {
    let grid = &instance.grid;
    let missing = grid.capacity().saturating_sub(instance.num_robots());
    if missing == 0 {
        return instance.clone();
    }
    let used: HashSet<Coord> = instance
        .starts
        .iter()
        .chain(instance.goals.iter())
        .copied()
        .collect();
    let mut pool: Vec<Coord> = grid.free_coords().filter(|c| !used.contains(c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(instance.seed ^ PAD_STREAM);
    let extra = sample(&mut pool, missing, &mut rng);
    let mut starts = instance.starts.clone();
    let mut goals = instance.goals.clone();
    starts.extend_from_slice(&extra);
    goals.extend_from_slice(&extra);
    Instance {
        grid: grid.clone(),
        starts,
        goals,
        seed: instance.seed,
        virtual_from: instance.virtual_from,
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    dims: [usize; 3],
    obstacles: ObstaclePattern,
    seed: u64,
    virtual_from: usize,
    starts: Vec<Coord>,
    goals: Vec<Coord>,
}

pub fn save(instance: &Instance) -> Vec<u8> {
    let (m1, m2, m3) = instance.grid.dims();
    let doc = InstanceDoc {
        dims: [m1, m2, m3],
        obstacles: instance.grid.pattern(),
        seed: instance.seed,
        virtual_from: instance.virtual_from,
        starts: instance.starts.clone(),
        goals: instance.goals.clone(),
    };
    serde_json::to_vec(&doc).expect("instance serialization cannot fail")
}

pub fn load(bytes: &[u8]) -> Result<Instance, InstanceError> {
    let doc: InstanceDoc = serde_json::from_slice(bytes)?;
    let [m1, m2, m3] = doc.dims;
    let grid = Grid3D::with_pattern(m1, m2, m3, doc.obstacles)?;
    Instance::with_virtual(grid, doc.starts, doc.goals, doc.seed, doc.virtual_from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(m1: usize, m2: usize, m3: usize) -> Grid3D {
        Grid3D::new(m1, m2, m3).unwrap()
    }

    #[test]
    fn uniform_full_density() {
        let inst = generate(&g(6, 6, 3), PatternSpec::uniform(1.0 / 3.0), 7).unwrap();
        assert_eq!(inst.num_robots(), 36);
        assert_eq!(inst.virtual_from, 36);
        inst.check().unwrap();
        let again = generate(&g(6, 6, 3), PatternSpec::uniform(1.0 / 3.0), 7).unwrap();
        assert_eq!(inst, again);
        let other = generate(&g(6, 6, 3), PatternSpec::uniform(1.0 / 3.0), 8).unwrap();
        assert_ne!(inst, other);
    }

    #[test]
    fn density_over_capacity_is_rejected() {
        assert!(generate(&g(6, 6, 3), PatternSpec::uniform(0.5), 0).is_err());
        let b = Grid3D::with_buildings(6, 6, 3).unwrap();
        assert!(matches!(
            generate(&b, PatternSpec::uniform(1.0 / 3.0), 0),
            Err(InstanceError::CapacityExceeded { .. })
        ));
        assert_eq!(
            generate(&b, PatternSpec::uniform(2.0 / 9.0), 0)
                .unwrap()
                .num_robots(),
            24
        );
    }

    #[test]
    fn rings_are_centrosymmetric() {
        let grid = g(12, 12, 12);
        assert_eq!(reflect(&grid, Coord::new(0, 0, 0)), Coord::new(11, 11, 11));
        let spec = PatternSpec {
            kind: PatternKind::Rings,
            density: 1.0 / 3.0,
        };
        let inst = generate(&grid, spec, 3).unwrap();
        assert_eq!(inst.num_robots(), 576);
        for (s, gl) in inst.starts.iter().zip(&inst.goals) {
            assert_eq!(*gl, reflect(&grid, *s));
            assert_eq!(ring_index(12, s.x as usize, s.y as usize) % 2, 0);
        }
        let corner = (0..200)
            .map(|seed| generate(&grid, spec, seed).unwrap())
            .find_map(|inst| {
                inst.starts
                    .iter()
                    .position(|&s| s == Coord::new(0, 0, 0))
                    .map(|i| inst.goals[i])
            })
            .expect("some seed keeps the corner robot");
        assert_eq!(corner, Coord::new(11, 11, 11));
        // swapping starts and goals gives the reflected instance
        let swapped: Vec<Coord> = inst.goals.clone();
        let reflected: Vec<Coord> = inst.starts.iter().map(|&s| reflect(&grid, s)).collect();
        assert_eq!(swapped, reflected);
    }

    #[test]
    fn patterns_need_cubes() {
        let spec = PatternSpec {
            kind: PatternKind::Rings,
            density: 0.2,
        };
        assert!(matches!(
            generate(&g(12, 12, 6), spec, 0),
            Err(InstanceError::PatternMismatch(_))
        ));
    }

    #[test]
    fn blocks_identity_keeps_goals() {
        let grid = g(12, 12, 12);
        let id: [usize; 27] = std::array::from_fn(|i| i);
        let inst = generate_blocks(&grid, 1.0 / 3.0, 4, Some(id)).unwrap();
        assert_eq!(inst.starts, inst.goals);
        let inst = generate_blocks(&grid, 1.0 / 3.0, 4, None).unwrap();
        inst.check().unwrap();
        let side = 4;
        for (s, t) in inst.starts.iter().zip(&inst.goals) {
            assert_eq!(s.x % side, t.x % side);
            assert_eq!(s.y % side, t.y % side);
            assert_eq!(s.z % side, t.z % side);
        }
    }

    #[test]
    fn padding_fills_to_capacity() {
        let grid = g(6, 6, 3);
        let full = generate(&grid, PatternSpec::uniform(1.0 / 3.0), 1).unwrap();
        assert_eq!(pad_virtual(&full), full);

        let part = generate(&grid, PatternSpec::uniform(30.0 / 108.0), 1).unwrap();
        assert_eq!(part.num_robots(), 30);
        let padded = pad_virtual(&part);
        assert_eq!(padded.num_robots(), 36);
        assert_eq!(padded.virtual_from, 30);
        assert_eq!(&padded.starts[..30], &part.starts[..]);
        assert_eq!(&padded.goals[..30], &part.goals[..]);
        assert_eq!(&padded.starts[30..], &padded.goals[30..]);
    }

    #[test]
    fn padded_instances_stay_valid() {
        for seed in 0..20 {
            let b = Grid3D::with_buildings(9, 9, 3).unwrap();
            let inst = generate(&b, PatternSpec::uniform(0.1), seed).unwrap();
            let padded = pad_virtual(&inst);
            padded.check().unwrap();
            assert_eq!(padded.num_robots(), b.capacity());
            let inst = generate(&g(9, 9, 6), PatternSpec::uniform(0.2), seed).unwrap();
            pad_virtual(&inst).check().unwrap();
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let inst = pad_virtual(&generate(&g(6, 6, 3), PatternSpec::uniform(0.2), 9).unwrap());
        let bytes = save(&inst);
        let text = std::str::from_utf8(&bytes).unwrap();
        assert!(text.starts_with(r#"{"dims":[6,6,3],"obstacles":"none","seed":9,"virtual_from":22,"starts":[["#));
        assert_eq!(load(&bytes).unwrap(), inst);

        let dup = r#"{"dims":[6,6,3],"obstacles":"none","seed":0,"virtual_from":2,
            "starts":[[0,0,0],[0,0,0]],"goals":[[1,0,0],[2,0,0]]}"#;
        assert!(matches!(
            load(dup.as_bytes()),
            Err(InstanceError::Duplicate { .. })
        ));
        let bad_dims = r#"{"dims":[6,6,4],"obstacles":"none","seed":0,"virtual_from":0,
            "starts":[],"goals":[]}"#;
        assert!(matches!(
            load(bad_dims.as_bytes()),
            Err(InstanceError::Grid(GridError::NotMultipleOfThree(..)))
        ));
        assert!(matches!(
            load(b"{\"dims\":"),
            Err(InstanceError::Malformed(_))
        ));
        let on_building = r#"{"dims":[6,6,3],"obstacles":"buildings","seed":0,"virtual_from":1,
            "starts":[[1,1,0]],"goals":[[0,0,0]]}"#;
        assert!(matches!(
            load(on_building.as_bytes()),
            Err(InstanceError::NotFree { .. })
        ));
    }
}

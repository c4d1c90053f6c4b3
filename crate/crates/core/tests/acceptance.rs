//! Acceptance suite. Each test checks one criterion and writes a single
//! PASS/FAIL line to stderr (bypassing output capture) before asserting.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rubikroute::grid::{Coord, Grid3D};
use rubikroute::instance::{generate, generate_blocks, Instance, PatternKind, PatternSpec};
use rubikroute::matching::{decompose_regular, lba, BipartiteMultigraph, CostMatrix};
use rubikroute::rubik::{rta2d, rta3d, AbstractTable, TableShuffle};
use rubikroute::solver::{solve, solve_detailed, SolverOptions};
use rubikroute::unlabeled::exact_feasible;
use rubikroute::validate::{validate, ViolationKind};

/// Slack added to every asymptotic bound.
const SLACK: usize = 50;
/// Extra steps allowed per shuffle round beyond the axis length.
const ROUND_SLACK: usize = 5;
const SWEEP_LIMIT: Duration = Duration::from_secs(600);
const SCALE_LIMIT: Duration = Duration::from_secs(120);
const RATIO_CAP_LBA: f64 = 1.75;
const RATIO_CAP_PLAIN: f64 = 1.95;
const RATIO_CAP_BUILDINGS: f64 = 2.2;

const PLAIN: SolverOptions = SolverOptions {
    lba: false,
    record_phases: true,
};
const LBA: SolverOptions = SolverOptions {
    lba: true,
    record_phases: true,
};

fn report(id: u32, name: &str, result: Result<String, String>) {
    let line = match &result {
        Ok(detail) => format!("PASS criterion {id:>2} {name}: {detail}\n"),
        Err(detail) => format!("FAIL criterion {id:>2} {name}: {detail}\n"),
    };
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    if let Err(detail) = result {
        panic!("criterion {id} failed: {detail}");
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn grid(d: [usize; 3]) -> Grid3D {
    Grid3D::new(d[0], d[1], d[2]).unwrap()
}

fn uniform(g: &Grid3D, density: f64, seed: u64) -> Instance {
    generate(g, PatternSpec::uniform(density), seed).unwrap()
}

/// Mean optimality ratio over seeds `0..seeds`, failing on any invalid plan.
fn mean_ratio(
    make: impl Fn(u64) -> Instance + Sync,
    opts: SolverOptions,
    seeds: u64,
) -> Result<f64, String> {
    let ratios = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let inst = make(seed);
            let plan = solve(&inst, opts).map_err(|e| format!("seed {seed}: {e}"))?;
            let rep = validate(&inst, &plan.paths);
            if rep.ok {
                Ok(rep.ratio)
            } else {
                Err(format!("seed {seed}: invalid plan {:?}", rep.violations.first()))
            }
        })
        .collect::<Result<Vec<f64>, String>>()?;
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt_ratios(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" > ")
}

// Shared correctness sweep

struct SweepRun {
    dims: [usize; 3],
    density: f64,
    seed: u64,
    lba: bool,
    ok: bool,
    at_goals: bool,
    makespan: usize,
    worst_round_excess: Option<(usize, usize)>,
    rounds: usize,
}

struct Sweep {
    runs: Vec<SweepRun>,
    elapsed: Duration,
}

const SWEEP_SIZES: [[usize; 3]; 4] = [[6, 6, 3], [12, 12, 6], [24, 12, 6], [48, 24, 12]];
const SWEEP_DENSITIES: [f64; 3] = [1.0 / 9.0, 2.0 / 9.0, 1.0 / 3.0];
const SWEEP_INSTANCES: u64 = 100;

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let clock = Instant::now();
        let jobs: Vec<(u64, bool)> = (0..SWEEP_INSTANCES)
            .flat_map(|k| [(k, false), (k, true)])
            .collect();
        let runs = jobs
            .par_iter()
            .map(|&(k, lba)| {
                let dims = SWEEP_SIZES[k as usize % SWEEP_SIZES.len()];
                let density = SWEEP_DENSITIES[(k as usize / SWEEP_SIZES.len()) % SWEEP_DENSITIES.len()];
                let g = grid(dims);
                let inst = uniform(&g, density, k);
                let sol = solve_detailed(&inst, if lba { LBA } else { PLAIN }).unwrap();
                let rep = validate(&inst, &sol.plan.paths);
                let at_goals = sol
                    .plan
                    .paths
                    .iter()
                    .zip(&inst.goals)
                    .all(|(p, g)| p.last() == Some(g));
                let worst_round_excess = sol
                    .rounds
                    .iter()
                    .map(|r| (r.duration, r.axis_len))
                    .max_by_key(|&(d, l)| d as isize - l as isize);
                SweepRun {
                    dims,
                    density,
                    seed: k,
                    lba,
                    ok: rep.ok,
                    at_goals,
                    makespan: sol.plan.makespan,
                    worst_round_excess,
                    rounds: sol.rounds.len(),
                }
            })
            .collect();
        Sweep {
            runs,
            elapsed: clock.elapsed(),
        }
    })
}

#[test]
fn criterion_01_correctness_sweep() {
    let s = sweep();
    let result = (|| {
        for r in &s.runs {
            check(r.ok && r.at_goals, || {
                format!(
                    "{:?} density {:.3} seed {} lba {}: ok={} at_goals={}",
                    r.dims, r.density, r.seed, r.lba, r.ok, r.at_goals
                )
            })?;
        }
        check(s.elapsed < SWEEP_LIMIT, || format!("took {:.1?}", s.elapsed))?;
        Ok(format!(
            "{} instances x 2 algorithms valid in {:.1?}",
            SWEEP_INSTANCES, s.elapsed
        ))
    })();
    report(1, "correctness sweep", result);
}

#[test]
fn criterion_02_shuffle_stage_bound() {
    let dims = [48, 24, 12];
    let bound = dims[0] + 2 * dims[1] + 2 * dims[2] + SLACK;
    let g = grid(dims);
    let worst = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let sol = solve_detailed(&uniform(&g, 1.0 / 3.0, seed), LBA).unwrap();
            (sol.phases.rubik(), seed)
        })
        .max()
        .unwrap();
    let result = check(worst.0 <= bound, || {
        format!("seed {} shuffle stages take {} > {bound}", worst.1, worst.0)
    })
    .map(|()| format!("max z1+xy+z2 = {} <= {bound} over 20 seeds", worst.0));
    report(2, "shuffle-stage makespan bound", result);
}

#[test]
fn criterion_03_total_makespan_bound() {
    let s = sweep();
    let result = (|| {
        let mut tightest = 0.0f64;
        for r in &s.runs {
            let [m1, m2, m3] = r.dims;
            let bound = 3 * m1 + 4 * m2 + 4 * m3 + SLACK;
            check(r.makespan <= bound, || {
                format!("{:?} seed {}: makespan {} > {bound}", r.dims, r.seed, r.makespan)
            })?;
            tightest = tightest.max(r.makespan as f64 / bound as f64);
        }
        Ok(format!(
            "all {} plans within 3m1+4m2+4m3+{SLACK}, max makespan/bound = {tightest:.3}",
            s.runs.len()
        ))
    })();
    report(3, "total makespan bound", result);
}

#[test]
fn criterion_04_round_budget() {
    let s = sweep();
    let result = (|| {
        let mut rounds = 0;
        let mut worst = isize::MIN;
        for r in &s.runs {
            rounds += r.rounds;
            if let Some((d, l)) = r.worst_round_excess {
                check(d <= l + ROUND_SLACK, || {
                    format!("{:?} seed {}: round of {d} steps on axis of length {l}", r.dims, r.seed)
                })?;
                worst = worst.max(d as isize - l as isize);
            }
        }
        Ok(format!(
            "{rounds} rounds, max duration - axis length = {worst} <= {ROUND_SLACK}"
        ))
    })();
    report(4, "per-round budget", result);
}

#[test]
fn criterion_05_ratio_trend_4_2_1() {
    let sizes = [[24, 12, 6], [48, 24, 12], [96, 48, 24]];
    let result = (|| {
        let mut detail = Vec::new();
        for (opts, cap) in [(PLAIN, RATIO_CAP_PLAIN), (LBA, RATIO_CAP_LBA)] {
            let means = sizes
                .iter()
                .map(|&d| {
                    let g = grid(d);
                    mean_ratio(|s| uniform(&g, 1.0 / 3.0, s), opts, 20)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let name = opts.algorithm_name();
            check(strictly_decreasing(&means), || {
                format!("{name} means not decreasing: {means:?}")
            })?;
            let last = *means.last().unwrap();
            check(last <= cap, || format!("{name} mean {last:.3} > {cap} at largest size"))?;
            detail.push(format!("{name} {}", fmt_ratios(&means)));
        }
        Ok(detail.join("; "))
    })();
    report(5, "optimality-ratio trend on 4:2:1 grids", result);
}

#[test]
fn criterion_06_ratio_trend_flat() {
    let result = (|| {
        let means = [24, 48, 96]
            .iter()
            .map(|&m| {
                let g = grid([m, m, 6]);
                mean_ratio(|s| uniform(&g, 1.0 / 3.0, s), LBA, 20)
            })
            .collect::<Result<Vec<_>, _>>()?;
        check(strictly_decreasing(&means), || format!("means not decreasing: {means:?}"))?;
        let last = means[2];
        check(last <= RATIO_CAP_LBA, || format!("mean {last:.3} > {RATIO_CAP_LBA} at m = 96"))?;
        Ok(format!("rth3d-lba {}", fmt_ratios(&means)))
    })();
    report(6, "flat-grid ratio trend", result);
}

#[test]
fn criterion_07_buildings() {
    let result = (|| {
        let g = Grid3D::with_buildings(36, 18, 9).unwrap();
        let mut detail = Vec::new();
        for opts in [PLAIN, LBA] {
            let mean = mean_ratio(|s| uniform(&g, 2.0 / 9.0, s), opts, 20)?;
            let name = opts.algorithm_name();
            check(mean <= RATIO_CAP_BUILDINGS, || {
                format!("{name} mean ratio {mean:.3} > {RATIO_CAP_BUILDINGS}")
            })?;
            detail.push(format!("{name} mean {mean:.3}"));
        }
        Ok(format!("20 seeds valid, {}", detail.join(", ")))
    })();
    report(7, "building obstacles", result);
}

#[test]
fn criterion_08_special_patterns() {
    let sizes = [12, 24, 36];
    let result = (|| {
        let means = sizes
            .iter()
            .map(|&m| {
                let g = grid([m, m, m]);
                let spec = PatternSpec {
                    kind: PatternKind::Rings,
                    density: 1.0 / 3.0,
                };
                mean_ratio(|s| generate(&g, spec, s).unwrap(), LBA, 5)
            })
            .collect::<Result<Vec<_>, _>>()?;
        check(strictly_decreasing(&means), || format!("ring means not decreasing: {means:?}"))?;
        for &m in &sizes {
            let g = grid([m, m, m]);
            for seed in 0..3 {
                let inst = generate_blocks(&g, 1.0 / 3.0, seed, None).unwrap();
                let plan = solve(&inst, LBA).map_err(|e| e.to_string())?;
                check(validate(&inst, &plan.paths).ok, || {
                    format!("block instance m = {m} seed {seed} invalid")
                })?;
            }
        }
        Ok(format!("rings {}; blocks valid at m = 12, 24, 36", fmt_ratios(&means)))
    })();
    report(8, "ring and block patterns", result);
}

fn random_table(dims: Vec<usize>, rng: &mut ChaCha8Rng) -> AbstractTable {
    let n = dims.iter().product();
    let mut items: Vec<usize> = (0..n).collect();
    items.shuffle(rng);
    AbstractTable::new(dims, items).unwrap()
}

fn sorts(table: &AbstractTable, shuffles: &[TableShuffle]) -> bool {
    let mut t = table.clone();
    for s in shuffles {
        t.apply(s);
    }
    t.is_sorted()
}

#[test]
fn criterion_09_abstract_shuffle_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let result = (|| {
        for case in 0..200 {
            let (m1, m2) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
            let t = random_table(vec![m1, m2], &mut rng);
            let s = rta2d(&t).map_err(|e| e.to_string())?;
            check(s.len() <= m1 + 2 * m2, || {
                format!("2D case {case} {m1}x{m2}: {} shuffles", s.len())
            })?;
            check(sorts(&t, &s), || format!("2D case {case} {m1}x{m2} not sorted"))?;
        }
        for case in 0..200 {
            let dims = [rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=6)];
            let [m1, m2, m3] = dims;
            let t = random_table(dims.to_vec(), &mut rng);
            let s = rta3d(&t).map_err(|e| e.to_string())?;
            let bound = 2 * m1 * m2 + m3 * (2 * m2 + m1);
            check(s.len() <= bound, || {
                format!("3D case {case} {dims:?}: {} shuffles > {bound}", s.len())
            })?;
            check(sorts(&t, &s), || format!("3D case {case} {dims:?} not sorted"))?;
        }
        Ok("200 2D and 200 3D tables sorted within the shuffle budgets".into())
    })();
    report(9, "abstract shuffle counts", result);
}

fn brute_bottleneck(m: &CostMatrix) -> u64 {
    fn rec(m: &CostMatrix, row: usize, used: &mut [bool], cur: u64, best: &mut u64) {
        if cur >= *best {
            return;
        }
        if row == m.size() {
            *best = cur;
            return;
        }
        for j in 0..m.size() {
            if !used[j] {
                used[j] = true;
                rec(m, row + 1, used, cur.max(m.get(row, j)), best);
                used[j] = false;
            }
        }
    }
    let mut best = u64::MAX;
    rec(m, 0, &mut vec![false; m.size()], 0, &mut best);
    best
}

/// Fewest synchronous steps moving an unlabeled robot set onto `targets`,
/// by breadth-first search over joint configurations.
fn joint_makespan(g: &Grid3D, starts: &[Coord], targets: &[Coord]) -> usize {
    let key = |v: &[usize]| {
        let mut k = v.to_vec();
        k.sort_unstable();
        k
    };
    let start = key(&starts.iter().map(|&c| g.index(c)).collect::<Vec<_>>());
    let goal = key(&targets.iter().map(|&c| g.index(c)).collect::<Vec<_>>());
    let moves = |i: usize| {
        let mut o = vec![i];
        o.extend(g.neighbors(g.coord(i)).unwrap().iter().map(|&c| g.index(c)));
        o
    };
    let mut dist = HashMap::from([(start.clone(), 0usize)]);
    let mut queue = VecDeque::from([start]);
    while let Some(state) = queue.pop_front() {
        let d = dist[&state];
        if state == goal {
            return d;
        }
        let opts: Vec<Vec<usize>> = state.iter().map(|&i| moves(i)).collect();
        let mut next = Vec::with_capacity(state.len());
        let mut out = Vec::new();
        fn extend(
            r: usize,
            state: &[usize],
            opts: &[Vec<usize>],
            next: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if r == state.len() {
                out.push(next.clone());
                return;
            }
            for &v in &opts[r] {
                let clash = (0..r).any(|q| next[q] == v || (next[q] == state[r] && v == state[q]));
                if !clash {
                    next.push(v);
                    extend(r + 1, state, opts, next, out);
                    next.pop();
                }
            }
        }
        extend(0, &state, &opts, &mut next, &mut out);
        for n in out {
            let k = key(&n);
            if !dist.contains_key(&k) {
                dist.insert(k.clone(), d + 1);
                queue.push_back(k);
            }
        }
    }
    unreachable!("targets are reachable on a connected grid")
}

#[test]
fn criterion_10_combinatorial_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let result = (|| {
        for case in 0..500 {
            let n = rng.gen_range(1..=7);
            let m = CostMatrix::from_fn(n, |_, _| rng.gen_range(0..30));
            let a = lba(&m);
            let perm: HashSet<usize> = a.perm.iter().copied().collect();
            check(perm.len() == n, || format!("lba case {case}: not a permutation"))?;
            let achieved = (0..n).map(|i| m.get(i, a.perm[i])).max().unwrap();
            let brute = brute_bottleneck(&m);
            check(a.bottleneck == brute && achieved == brute, || {
                format!("lba case {case}: {} vs exhaustive {brute}", a.bottleneck)
            })?;
        }
        for case in 0..500 {
            let n = rng.gen_range(1..=8);
            let d = rng.gen_range(1..=6);
            let mut g = BipartiteMultigraph::new(n, n);
            let mut tag = 0;
            for _ in 0..d {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                for (l, &r) in p.iter().enumerate() {
                    g.add_edge(l, r, tag);
                    tag += 1;
                }
            }
            let ms = decompose_regular(&g, d).map_err(|e| format!("decompose case {case}: {e}"))?;
            check(ms.matchings.len() == d, || format!("decompose case {case}: wrong count"))?;
            let mut used = Vec::new();
            for mt in &ms.matchings {
                let lefts: HashSet<usize> = mt.iter().map(|e| e.left).collect();
                let rights: HashSet<usize> = mt.iter().map(|e| e.right).collect();
                check(mt.len() == n && lefts.len() == n && rights.len() == n, || {
                    format!("decompose case {case}: matching not perfect")
                })?;
                used.extend(mt.iter().copied());
            }
            used.sort();
            let mut all = g.edges.clone();
            all.sort();
            check(used == all, || format!("decompose case {case}: not a partition"))?;
        }
        let g = grid([3, 3, 3]);
        let cells: Vec<Coord> = g.free_coords().collect();
        for case in 0..100 {
            let k = rng.gen_range(1..=4);
            let starts: Vec<Coord> = cells.choose_multiple(&mut rng, k).copied().collect();
            let targets: Vec<Coord> = cells.choose_multiple(&mut rng, k).copied().collect();
            let best = joint_makespan(&g, &starts, &targets);
            let at = exact_feasible(&g, &starts, &targets, best).map_err(|e| e.to_string())?;
            let before = best > 0
                && exact_feasible(&g, &starts, &targets, best - 1).map_err(|e| e.to_string())?;
            check(at && !before, || {
                format!("unlabeled case {case}: brute force {best}, flow says {at}/{before}")
            })?;
        }
        Ok("500 lba, 500 decompositions, 100 unlabeled feasibility cases agree".into())
    })();
    report(10, "combinatorial oracles", result);
}

#[test]
fn criterion_11_scale() {
    let g = grid([120, 60, 6]);
    let inst = uniform(&g, 1.0 / 3.0, 0);
    let clock = Instant::now();
    let plan = solve(&inst, LBA);
    let elapsed = clock.elapsed();
    let result = (|| {
        let plan = plan.map_err(|e| e.to_string())?;
        let rep = validate(&inst, &plan.paths);
        check(rep.ok, || "plan invalid".into())?;
        check(elapsed < SCALE_LIMIT, || format!("took {elapsed:.1?}"))?;
        Ok(format!(
            "{} vertices, {} robots solved in {elapsed:.1?}, ratio {:.3}",
            g.num_vertices(),
            inst.num_real(),
            rep.ratio
        ))
    })();
    report(11, "scale check", result);
}

#[derive(Debug, Clone, Copy)]
enum Fault {
    Teleport,
    VertexShare,
    Swap,
}

/// Inserts two timesteps after `t` in which only the faulty robots move.
fn inject(paths: &[Vec<Coord>], t: usize, moves: &[(usize, Coord, Coord)]) -> Vec<Vec<Coord>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut q = p[..=t].to_vec();
            match moves.iter().find(|m| m.0 == i) {
                Some(&(_, a, b)) => q.extend([a, b]),
                None => q.extend([p[t], p[t]]),
            }
            q.extend_from_slice(&p[t + 1..]);
            q
        })
        .collect()
}

fn mutate(g: &Grid3D, paths: &[Vec<Coord>], fault: Fault, rng: &mut ChaCha8Rng) -> Vec<Vec<Coord>> {
    loop {
        let t = rng.gen_range(0..paths[0].len() - 1);
        let i = rng.gen_range(0..paths.len());
        let here = paths[i][t];
        let occupied: HashMap<Coord, usize> = paths.iter().enumerate().map(|(j, p)| (p[t], j)).collect();
        match fault {
            Fault::Teleport => {
                let far: Vec<Coord> = g
                    .free_coords()
                    .filter(|&c| g.distance(here, c) >= 2 && !occupied.contains_key(&c))
                    .collect();
                if let Some(&c) = far.choose(rng) {
                    return inject(paths, t, &[(i, c, here)]);
                }
            }
            Fault::VertexShare | Fault::Swap => {
                let near: Vec<(Coord, usize)> = g
                    .neighbors(here)
                    .unwrap()
                    .into_iter()
                    .filter_map(|c| occupied.get(&c).map(|&j| (c, j)))
                    .collect();
                if let Some(&(c, j)) = near.choose(rng) {
                    return match fault {
                        Fault::VertexShare => inject(paths, t, &[(i, c, here)]),
                        _ => inject(paths, t, &[(i, c, here), (j, here, c)]),
                    };
                }
            }
        }
    }
}

#[test]
fn criterion_12_fault_injection() {
    let g = grid([12, 12, 6]);
    let inst = uniform(&g, 1.0 / 3.0, 12);
    let plan = solve(&inst, LBA).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let result = (|| {
        check(validate(&inst, &plan.paths).ok, || "unmutated plan invalid".into())?;
        let faults = [Fault::Teleport, Fault::VertexShare, Fault::Swap];
        for case in 0..50 {
            let fault = faults[case % faults.len()];
            let bad = mutate(&g, &plan.paths, fault, &mut rng);
            let rep = validate(&inst, &bad);
            let expected = match fault {
                Fault::Teleport => ViolationKind::Discontinuity,
                Fault::VertexShare => ViolationKind::VertexCollision,
                Fault::Swap => ViolationKind::EdgeSwap,
            };
            check(!rep.ok, || format!("case {case} {fault:?} accepted"))?;
            check(rep.violations.iter().any(|v| v.kind == expected), || {
                format!("case {case} {fault:?} reported as {:?}", rep.violations.first())
            })?;
        }
        Ok("50 mutated plans rejected with the injected violation kind".into())
    })();
    report(12, "fault injection", result);
}

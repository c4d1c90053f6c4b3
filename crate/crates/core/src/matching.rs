//! Matching engines: perfect-matching decomposition of regular bipartite
//! multigraphs, linear bottleneck assignment, and the greedy bottleneck
//! matching sequence used to pick intermediate configurations.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchingError {
    #[error("graph is not {degree}-regular: {side} node {node} has degree {found}")]
    NotRegular {
        degree: usize,
        side: &'static str,
        node: usize,
        found: usize,
    },
    #[error("left and right sides differ in size ({0} vs {1})")]
    Unbalanced(usize, usize),
    #[error("no perfect matching exists in the remaining graph")]
    NoPerfectMatching,
}

/// Edge of a bipartite multigraph; `tag` identifies the item (robot)
/// contributing the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub left: usize,
    pub right: usize,
    pub tag: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BipartiteMultigraph {
    pub left_nodes: usize,
    pub right_nodes: usize,
    pub edges: Vec<Edge>,
}

impl BipartiteMultigraph {
    pub fn new(left_nodes: usize, right_nodes: usize) -> Self {
        BipartiteMultigraph {
            left_nodes,
            right_nodes,
            edges: Vec::new(),
        }
    }

    pub fn add_edge(&mut self, left: usize, right: usize, tag: usize) {
        debug_assert!(left < self.left_nodes && right < self.right_nodes);
        self.edges.push(Edge { left, right, tag });
    }

    /// Checks that every node on both sides has degree exactly `d`.
    pub fn check_regular(&self, d: usize) -> Result<(), MatchingError> {
        if self.left_nodes != self.right_nodes {
            return Err(MatchingError::Unbalanced(self.left_nodes, self.right_nodes));
        }
        let mut ldeg = vec![0usize; self.left_nodes];
        let mut rdeg = vec![0usize; self.right_nodes];
        for e in &self.edges {
            ldeg[e.left] += 1;
            rdeg[e.right] += 1;
        }
        for (side, degs) in [("left", &ldeg), ("right", &rdeg)] {
            if let Some((node, &found)) = degs.iter().enumerate().find(|(_, &k)| k != d) {
                return Err(MatchingError::NotRegular {
                    degree: d,
                    side,
                    node,
                    found,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchingSet {
    /// Each matching lists one edge per left node, ordered by left node.
    pub matchings: Vec<Vec<Edge>>,
}

const NONE: usize = usize::MAX;

/// Left-to-right adjacency as seen by [`HopcroftKarp`]. `neighbor(u, k)` may
/// return `None` to skip a candidate slot.
pub(crate) trait Adjacency {
    fn left_len(&self) -> usize;
    fn degree(&self, u: usize) -> usize;
    fn neighbor(&self, u: usize, k: usize) -> Option<(usize, usize)>;
}

impl Adjacency for [Vec<(usize, usize)>] {
    fn left_len(&self) -> usize {
        self.len()
    }

    fn degree(&self, u: usize) -> usize {
        self[u].len()
    }

    fn neighbor(&self, u: usize, k: usize) -> Option<(usize, usize)> {
        Some(self[u][k])
    }
}

impl Adjacency for Vec<Vec<(usize, usize)>> {
    fn left_len(&self) -> usize {
        self.len()
    }

    fn degree(&self, u: usize) -> usize {
        self[u].len()
    }

    fn neighbor(&self, u: usize, k: usize) -> Option<(usize, usize)> {
        Some(self[u][k])
    }
}

/// Hopcroft-Karp maximum matching over adjacency lists of `(right, payload)`.
/// Adjacency order fixes the tie-breaking, so results are deterministic.
pub(crate) struct HopcroftKarp {
    pub mate_left: Vec<usize>,
    pub mate_payload: Vec<usize>,
    pub mate_right: Vec<usize>,
    dist: Vec<u32>,
    iter: Vec<usize>,
    queue: Vec<usize>,
    stack: Vec<usize>,
}

impl HopcroftKarp {
    pub fn new(n_left: usize, n_right: usize) -> Self {
        HopcroftKarp {
            mate_left: vec![NONE; n_left],
            mate_payload: vec![NONE; n_left],
            mate_right: vec![NONE; n_right],
            dist: vec![0; n_left],
            iter: vec![0; n_left],
            queue: Vec::with_capacity(n_left),
            stack: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.mate_left.iter().filter(|&&r| r != NONE).count()
    }

    /// Grows the current matching to maximum size over `adj`. Existing pairs
    /// must be edges of `adj` (warm start).
    pub fn run<A: Adjacency + ?Sized>(&mut self, adj: &A) -> usize {
        const INF: u32 = u32::MAX;
        loop {
            // layered BFS from free left nodes
            self.queue.clear();
            for u in 0..adj.left_len() {
                if self.mate_left[u] == NONE {
                    self.dist[u] = 0;
                    self.queue.push(u);
                } else {
                    self.dist[u] = INF;
                }
            }
            let mut found = false;
            let mut head = 0;
            while head < self.queue.len() {
                let u = self.queue[head];
                head += 1;
                for k in 0..adj.degree(u) {
                    let Some((v, _)) = adj.neighbor(u, k) else {
                        continue;
                    };
                    let w = self.mate_right[v];
                    if w == NONE {
                        found = true;
                    } else if self.dist[w] == INF {
                        self.dist[w] = self.dist[u] + 1;
                        self.queue.push(w);
                    }
                }
            }
            if !found {
                break;
            }
            self.iter.iter_mut().for_each(|i| *i = 0);
            let mut augmented = false;
            for root in 0..adj.left_len() {
                if self.mate_left[root] == NONE && self.augment(root, adj) {
                    augmented = true;
                }
            }
            if !augmented {
                break;
            }
        }
        self.size()
    }

    fn augment<A: Adjacency + ?Sized>(&mut self, root: usize, adj: &A) -> bool {
        const INF: u32 = u32::MAX;
        self.stack.clear();
        self.stack.push(root);
        while let Some(&u) = self.stack.last() {
            if self.iter[u] < adj.degree(u) {
                let Some((v, _)) = adj.neighbor(u, self.iter[u]) else {
                    self.iter[u] += 1;
                    continue;
                };
                let w = self.mate_right[v];
                if w == NONE {
                    for &x in self.stack.iter() {
                        let (vx, px) = adj.neighbor(x, self.iter[x]).expect("stack entries are valid");
                        self.mate_right[vx] = x;
                        self.mate_left[x] = vx;
                        self.mate_payload[x] = px;
                    }
                    return true;
                } else if self.dist[w] == self.dist[u].wrapping_add(1) && self.dist[w] != INF {
                    self.stack.push(w);
                } else {
                    self.iter[u] += 1;
                }
            } else {
                self.dist[u] = INF;
                self.stack.pop();
                if let Some(&p) = self.stack.last() {
                    self.iter[p] += 1;
                }
            }
        }
        false
    }
}

/// Splits a `d`-regular bipartite multigraph into `d` perfect matchings by
/// repeated augmenting-path extraction.
pub fn decompose_regular(g: &BipartiteMultigraph, d: usize) -> Result<MatchingSet, MatchingError> {
    g.check_regular(d)?;
    let n = g.left_nodes;
    let mut alive = vec![true; g.edges.len()];
    let mut order: Vec<usize> = (0..g.edges.len()).collect();
    order.sort_by_key(|&i| (g.edges[i].left, g.edges[i].right, g.edges[i].tag));
    let mut matchings = Vec::with_capacity(d);
    for _ in 0..d {
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &i in &order {
            if alive[i] {
                adj[g.edges[i].left].push((g.edges[i].right, i));
            }
        }
        let mut hk = HopcroftKarp::new(n, g.right_nodes);
        if hk.run(&adj) != n {
            return Err(MatchingError::NoPerfectMatching);
        }
        let matching: Vec<Edge> = (0..n)
            .map(|u| {
                let i = hk.mate_payload[u];
                alive[i] = false;
                g.edges[i]
            })
            .collect();
        matchings.push(matching);
    }
    Ok(MatchingSet { matchings })
}

/// Cost used for pairs that must never be selected unless unavoidable.
pub const MISSING_COST: u64 = 1 << 40;

/// Square matrix of non-negative costs (timesteps), row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<u64>,
}

impl CostMatrix {
    pub fn new(n: usize, data: Vec<u64>) -> Self {
        assert_eq!(data.len(), n * n, "cost matrix must be square");
        CostMatrix { n, data }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> u64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        CostMatrix { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// `perm[row] = column`.
    pub perm: Vec<usize>,
    pub bottleneck: u64,
    pub total: u64,
}

/// Above this size the min-sum refinement among bottleneck-optimal
/// assignments is skipped.
const REFINE_LIMIT: usize = 256;

/// Linear bottleneck assignment: binary search over the distinct costs with a
/// perfect-matching feasibility test per threshold. Among bottleneck-optimal
/// assignments the one of smallest total cost is returned.
pub fn lba(costs: &CostMatrix) -> Assignment {
    let n = costs.n;
    if n == 0 {
        return Assignment {
            perm: vec![],
            bottleneck: 0,
            total: 0,
        };
    }
    let mut values = costs.data.clone();
    values.sort_unstable();
    values.dedup();

    let feasible = |thr: u64| -> Option<Vec<usize>> {
        let adj: Vec<Vec<(usize, usize)>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| costs.get(i, j) <= thr)
                    .map(|j| (j, j))
                    .collect()
            })
            .collect();
        let mut hk = HopcroftKarp::new(n, n);
        (hk.run(&adj) == n).then(|| hk.mate_left.clone())
    };

    let (mut lo, mut hi) = (0usize, values.len() - 1);
    let mut best = feasible(values[hi]).expect("complete bipartite graph has a perfect matching");
    while lo < hi {
        let mid = (lo + hi) / 2;
        match feasible(values[mid]) {
            Some(p) => {
                hi = mid;
                best = p;
            }
            None => lo = mid + 1,
        }
    }
    let bottleneck = values[hi];
    let perm = if n <= REFINE_LIMIT {
        min_sum_below(costs, bottleneck)
    } else {
        best
    };
    let total = perm.iter().enumerate().map(|(i, &j)| costs.get(i, j)).sum();
    Assignment {
        perm,
        bottleneck,
        total,
    }
}

/// Minimum-sum assignment using only entries `<= cap` (Hungarian method with
/// potentials, O(n^3)).
fn min_sum_below(costs: &CostMatrix, cap: u64) -> Vec<usize> {
    let n = costs.n;
    let allowed_sum: i128 = costs.data.iter().filter(|&&c| c <= cap).map(|&c| c as i128).sum();
    let big = allowed_sum + 1;
    let cost = |i: usize, j: usize| -> i128 {
        let c = costs.get(i, j);
        if c <= cap {
            c as i128
        } else {
            big
        }
    };
    // 1-indexed rows/cols, column 0 is the virtual start
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i128::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i128::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Greedy bottleneck matching sequence over a `d`-regular multigraph.
///
/// Matching `h` is a minimum-bottleneck perfect matching of the edges left
/// after matchings `0..h`, where a (left, right) pair costs the cheapest of
/// its parallel edges under `cost(tag, h)`; the edge carrying that minimum
/// (smallest tag on ties) is the one recorded.
pub fn lba_matching_sequence(
    g: &BipartiteMultigraph,
    d: usize,
    cost: impl Fn(usize, usize) -> u64,
) -> Result<MatchingSet, MatchingError> {
    g.check_regular(d)?;
    let n = g.left_nodes;
    let mut alive = vec![true; g.edges.len()];
    let mut by_left: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in g.edges.iter().enumerate() {
        by_left[e.left].push(i);
    }
    let mut matchings = Vec::with_capacity(d);
    let mut best_for_right: Vec<(u64, usize)> = vec![(u64::MAX, NONE); g.right_nodes];
    let mut touched: Vec<usize> = Vec::new();
    for h in 0..d {
        // cheapest live edge per (left, right) pair at height h
        let mut cands: Vec<Vec<(u64, usize, usize)>> = Vec::with_capacity(n);
        let mut values: Vec<u64> = Vec::new();
        for edges in &by_left {
            touched.clear();
            for &i in edges {
                if !alive[i] {
                    continue;
                }
                let e = g.edges[i];
                let c = cost(e.tag, h);
                let slot = &mut best_for_right[e.right];
                if slot.1 == NONE {
                    touched.push(e.right);
                }
                if slot.1 == NONE || (c, e.tag) < (slot.0, g.edges[slot.1].tag) {
                    *slot = (c, i);
                }
            }
            let mut list: Vec<(u64, usize, usize)> = touched
                .iter()
                .map(|&r| (best_for_right[r].0, r, best_for_right[r].1))
                .collect();
            for &r in &touched {
                best_for_right[r] = (u64::MAX, NONE);
            }
            list.sort_unstable();
            values.extend(list.iter().map(|c| c.0));
            cands.push(list);
        }
        values.sort_unstable();
        values.dedup();
        if values.is_empty() {
            return Err(MatchingError::NoPerfectMatching);
        }
        let attempt = |thr: u64| -> Option<Vec<usize>> {
            let adj: Vec<Vec<(usize, usize)>> = cands
                .iter()
                .map(|l| {
                    l.iter()
                        .take_while(|c| c.0 <= thr)
                        .map(|c| (c.1, c.2))
                        .collect()
                })
                .collect();
            let mut hk = HopcroftKarp::new(n, g.right_nodes);
            (hk.run(&adj) == n).then(|| hk.mate_payload.clone())
        };
        let (mut lo, mut hi) = (0usize, values.len() - 1);
        let mut best = attempt(values[hi]).ok_or(MatchingError::NoPerfectMatching)?;
        while lo < hi {
            let mid = (lo + hi) / 2;
            match attempt(values[mid]) {
                Some(m) => {
                    hi = mid;
                    best = m;
                }
                None => lo = mid + 1,
            }
        }
        let matching: Vec<Edge> = best
            .iter()
            .map(|&i| {
                alive[i] = false;
                g.edges[i]
            })
            .collect();
        matchings.push(matching);
    }
    Ok(MatchingSet { matchings })
}

/// Reassigns matchings to heights by bottleneck assignment over
/// `cost(matching, height)`. Returns the height chosen for each matching.
pub fn assign_matchings_to_heights(
    matchings: &MatchingSet,
    cost: impl Fn(&[Edge], usize) -> u64,
) -> Vec<usize> {
    let n = matchings.matchings.len();
    let m = CostMatrix::from_fn(n, |i, h| cost(&matchings.matchings[i], h));
    lba(&m).perm
}

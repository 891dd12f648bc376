//! Exact solvers for small graphs and degree-based greedy baselines.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::discrete_objective;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::task::{Solution, TaskKind};

pub const MAX_EXACT_NODES: usize = 26;
pub const MAX_EXACT_COLORING_NODES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResult {
    pub optimum: i64,
    pub witness: Solution,
    /// Search nodes (exact) or construction steps (greedy) examined.
    pub explored: u64,
}

fn adjacency_masks(g: &Graph) -> Vec<u64> {
    (0..g.num_nodes())
        .map(|v| g.neighbors(v).iter().fold(0u64, |m, &u| m | (1 << u)))
        .collect()
}

fn mask_to_solution(mask: u64, n: usize) -> Solution {
    Solution::Subset((0..n).filter(|&v| mask >> v & 1 == 1).collect())
}

/// Global optimum by exhaustive search with pruning.
pub fn exact_solve(task: TaskKind, g: &Graph) -> Result<OracleResult> {
    let n = g.num_nodes();
    let limit = match task {
        TaskKind::Coloring(_) => MAX_EXACT_COLORING_NODES,
        _ => MAX_EXACT_NODES,
    };
    if n > limit {
        return Err(Error::TooLarge(format!(
            "{task} on {n} nodes exceeds the exact limit of {limit}; use greedy_baseline"
        )));
    }
    let adj = adjacency_masks(g);
    let mut search = Search { adj: &adj, n, explored: 0, best: 0, best_mask: 0 };
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let (optimum, witness) = match task {
        TaskKind::Mis => {
            search.independent(full, 0, 0);
            (search.best, mask_to_solution(search.best_mask, n))
        }
        TaskKind::MaxClique => {
            search.clique(full, 0, 0);
            (search.best, mask_to_solution(search.best_mask, n))
        }
        TaskKind::Mvc => {
            search.best = n as i64 + 1;
            search.cover(0, 0, 0);
            (search.best, mask_to_solution(search.best_mask, n))
        }
        TaskKind::Mds => {
            search.best = n as i64 + 1;
            let max_closed = (0..n).map(|v| g.degree(v) + 1).max().unwrap_or(1);
            search.dominate(full, 0, 0, 0, max_closed);
            (search.best, mask_to_solution(search.best_mask, n))
        }
        TaskKind::MaxCut => {
            let (cut, side) = max_cut(g, &mut search.explored);
            (cut, Solution::Partition(side))
        }
        TaskKind::Coloring(k) => {
            let (viol, colors) = min_violation_coloring(g, k, &mut search.explored);
            (viol, Solution::Colors(colors))
        }
    };
    debug_assert_eq!(discrete_objective(task, g, &witness).unwrap(), optimum);
    Ok(OracleResult { optimum, witness, explored: search.explored })
}

struct Search<'a> {
    adj: &'a [u64],
    n: usize,
    explored: u64,
    best: i64,
    best_mask: u64,
}

impl Search<'_> {
    fn independent(&mut self, cand: u64, chosen: u64, size: i64) {
        self.explored += 1;
        if cand == 0 {
            if size > self.best {
                self.best = size;
                self.best_mask = chosen;
            }
            return;
        }
        if size + cand.count_ones() as i64 <= self.best {
            return;
        }
        let v = cand.trailing_zeros() as usize;
        let bit = 1u64 << v;
        self.independent(cand & !bit & !self.adj[v], chosen | bit, size + 1);
        if self.adj[v] & cand != 0 {
            self.independent(cand & !bit, chosen, size);
        }
    }

    fn clique(&mut self, cand: u64, chosen: u64, size: i64) {
        self.explored += 1;
        if cand == 0 {
            if size > self.best {
                self.best = size;
                self.best_mask = chosen;
            }
            return;
        }
        if size + cand.count_ones() as i64 <= self.best {
            return;
        }
        let v = cand.trailing_zeros() as usize;
        let bit = 1u64 << v;
        self.clique(cand & self.adj[v], chosen | bit, size + 1);
        self.clique(cand & !bit, chosen, size);
    }

    // branch on the lowest node with an uncovered edge: take it, or take
    // all of its neighbors
    fn cover(&mut self, chosen: u64, excluded: u64, size: i64) {
        self.explored += 1;
        let open = (0..self.n).find(|&u| chosen >> u & 1 == 0 && self.adj[u] & !chosen != 0);
        let Some(u) = open else {
            if size < self.best {
                self.best = size;
                self.best_mask = chosen;
            }
            return;
        };
        if size + 1 >= self.best {
            return;
        }
        let bit = 1u64 << u;
        if excluded & bit == 0 {
            self.cover(chosen | bit, excluded, size + 1);
        }
        let missing = self.adj[u] & !chosen;
        if missing & excluded == 0 {
            self.cover(chosen | missing, excluded | bit, size + missing.count_ones() as i64);
        }
    }

    fn dominate(&mut self, undominated: u64, chosen: u64, forbidden: u64, size: i64, max_closed: usize) {
        self.explored += 1;
        if undominated == 0 {
            if size < self.best {
                self.best = size;
                self.best_mask = chosen;
            }
            return;
        }
        let lower = (undominated.count_ones() as usize).div_ceil(max_closed) as i64;
        if size + lower >= self.best {
            return;
        }
        let u = undominated.trailing_zeros() as usize;
        let closed = self.adj[u] | (1u64 << u);
        // candidates tried earlier at this level are forbidden in later branches
        let mut tried = forbidden;
        let mut options = closed & !chosen & !forbidden;
        while options != 0 {
            let w = options.trailing_zeros() as usize;
            let wbit = 1u64 << w;
            options &= !wbit;
            let covers = self.adj[w] | wbit;
            self.dominate(undominated & !covers, chosen | wbit, tried, size + 1, max_closed);
            tried |= wbit;
        }
    }
}

// Gray-code sweep over all bipartitions with the last node pinned.
fn max_cut(g: &Graph, explored: &mut u64) -> (i64, Vec<bool>) {
    let n = g.num_nodes();
    let mut side = vec![false; n];
    if n == 1 {
        *explored += 1;
        return (0, side);
    }
    let free = n - 1;
    let mut cut = 0i64;
    let mut best = 0i64;
    let mut best_side = side.clone();
    for step in 1u64..(1u64 << free) {
        let v = step.trailing_zeros() as usize;
        let delta: i64 = g.neighbors(v).iter().map(|&u| if side[u] == side[v] { 1 } else { -1 }).sum();
        side[v] = !side[v];
        cut += delta;
        *explored += 1;
        if cut > best {
            best = cut;
            best_side.copy_from_slice(&side);
        }
    }
    (best, best_side)
}

fn min_violation_coloring(g: &Graph, k: usize, explored: &mut u64) -> (i64, Vec<usize>) {
    let n = g.num_nodes();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    let mut colors = vec![usize::MAX; n];
    let mut best = (g.num_edges() as i64 + 1, vec![0; n]);
    color_rec(g, k, &order, 0, 0, 0, &mut colors, &mut best, explored);
    best
}

#[allow(clippy::too_many_arguments)]
fn color_rec(
    g: &Graph,
    k: usize,
    order: &[usize],
    depth: usize,
    used: usize,
    cost: i64,
    colors: &mut [usize],
    best: &mut (i64, Vec<usize>),
    explored: &mut u64,
) {
    *explored += 1;
    if cost >= best.0 {
        return;
    }
    if depth == order.len() {
        best.0 = cost;
        best.1.copy_from_slice(colors);
        return;
    }
    let v = order[depth];
    // colors beyond the first unused one are symmetric
    let limit = (used + 1).min(k);
    for c in 0..limit {
        let clash = g.neighbors(v).iter().filter(|&&u| colors[u] == c).count() as i64;
        colors[v] = c;
        color_rec(g, k, order, depth + 1, used.max(c + 1), cost + clash, colors, best, explored);
        colors[v] = usize::MAX;
        if best.0 == 0 {
            return;
        }
    }
}

/// Fast heuristic answer, not guaranteed optimal. `seed` breaks ties and
/// drives the random MaxCut start.
pub fn greedy_baseline(task: TaskKind, g: &Graph, seed: u64) -> Result<OracleResult> {
    let n = g.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tiebreak: Vec<usize> = (0..n).collect();
    tiebreak.shuffle(&mut rng);
    let mut rank = vec![0usize; n];
    for (r, &v) in tiebreak.iter().enumerate() {
        rank[v] = r;
    }
    let mut steps = 0u64;
    let witness = match task {
        TaskKind::Mis | TaskKind::MaxClique => {
            let mut order: Vec<usize> = (0..n).collect();
            if task == TaskKind::Mis {
                order.sort_by_key(|&v| (g.degree(v), rank[v]));
            } else {
                order.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), rank[v]));
            }
            let mut chosen: Vec<usize> = Vec::new();
            for v in order {
                steps += 1;
                let ok = if task == TaskKind::Mis {
                    chosen.iter().all(|&u| !g.has_edge(u, v))
                } else {
                    chosen.iter().all(|&u| g.has_edge(u, v))
                };
                if ok {
                    chosen.push(v);
                }
            }
            chosen.sort_unstable();
            Solution::Subset(chosen)
        }
        TaskKind::Mvc | TaskKind::Mds => {
            let mut chosen = vec![false; n];
            // for MVC: covered edges tracked through chosen; for MDS: dominated nodes
            let mut dominated = vec![false; n];
            loop {
                let gain = |v: usize, chosen: &[bool], dominated: &[bool]| -> usize {
                    if chosen[v] {
                        return 0;
                    }
                    match task {
                        TaskKind::Mvc => g.neighbors(v).iter().filter(|&&u| !chosen[u]).count(),
                        _ => {
                            usize::from(!dominated[v])
                                + g.neighbors(v).iter().filter(|&&u| !dominated[u]).count()
                        }
                    }
                };
                let pick = (0..n)
                    .map(|v| (gain(v, &chosen, &dominated), v))
                    .filter(|&(gn, _)| gn > 0)
                    .max_by(|a, b| a.0.cmp(&b.0).then(rank[b.1].cmp(&rank[a.1])));
                let Some((_, v)) = pick else { break };
                steps += 1;
                chosen[v] = true;
                dominated[v] = true;
                for &u in g.neighbors(v) {
                    dominated[u] = true;
                }
            }
            Solution::subset_from_mask(&chosen)
        }
        TaskKind::MaxCut => {
            let mut side: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
            loop {
                let flip = (0..n).find(|&v| {
                    let same = g.neighbors(v).iter().filter(|&&u| side[u] == side[v]).count();
                    2 * same > g.degree(v)
                });
                let Some(v) = flip else { break };
                steps += 1;
                side[v] = !side[v];
            }
            Solution::Partition(side)
        }
        TaskKind::Coloring(k) => Solution::Colors(dsatur(g, k, &rank, &mut steps)),
    };
    let optimum = discrete_objective(task, g, &witness)?;
    Ok(OracleResult { optimum, witness, explored: steps })
}

fn dsatur(g: &Graph, k: usize, rank: &[usize], steps: &mut u64) -> Vec<usize> {
    let n = g.num_nodes();
    let mut colors = vec![usize::MAX; n];
    for _ in 0..n {
        let saturation = |v: usize| {
            let mut seen: Vec<usize> = g.neighbors(v).iter().map(|&u| colors[u]).filter(|&c| c != usize::MAX).collect();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        };
        let v = (0..n)
            .filter(|&v| colors[v] == usize::MAX)
            .max_by(|&a, &b| {
                saturation(a)
                    .cmp(&saturation(b))
                    .then(g.degree(a).cmp(&g.degree(b)))
                    .then(rank[b].cmp(&rank[a]))
            })
            .unwrap();
        *steps += 1;
        let mut clash = vec![0usize; k];
        for &u in g.neighbors(v) {
            if colors[u] != usize::MAX {
                clash[colors[u]] += 1;
            }
        }
        let mut best = 0;
        for c in 1..k {
            if clash[c] < clash[best] {
                best = c;
            }
        }
        colors[v] = best;
    }
    colors
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::is_feasible;

    #[test]
    fn known_optima() {
        let c5 = Graph::cycle(5).unwrap();
        assert_eq!(exact_solve(TaskKind::Mis, &c5).unwrap().optimum, 2);
        assert_eq!(exact_solve(TaskKind::MaxCut, &c5).unwrap().optimum, 4);
        assert_eq!(exact_solve(TaskKind::Mds, &Graph::path(4).unwrap()).unwrap().optimum, 2);
        assert_eq!(exact_solve(TaskKind::Coloring(3), &Graph::complete(4).unwrap()).unwrap().optimum, 1);
        assert_eq!(exact_solve(TaskKind::Mvc, &Graph::star(6).unwrap()).unwrap().optimum, 1);
        assert_eq!(exact_solve(TaskKind::MaxClique, &Graph::complete(5).unwrap()).unwrap().optimum, 5);
    }

    #[test]
    fn size_limits() {
        let big = Graph::empty(27).unwrap();
        assert!(matches!(exact_solve(TaskKind::Mis, &big), Err(Error::TooLarge(_))));
        let mid = Graph::empty(17).unwrap();
        assert!(matches!(exact_solve(TaskKind::Coloring(3), &mid), Err(Error::TooLarge(_))));
    }

    // plain 2^n enumeration, independent of the pruned search
    fn brute_force(task: TaskKind, g: &Graph) -> i64 {
        let n = g.num_nodes();
        let mut best: Option<i64> = None;
        for mask in 0u32..(1 << n) {
            let s = Solution::Subset((0..n).filter(|&v| mask >> v & 1 == 1).collect());
            if is_feasible(task, g, &s) {
                let size = mask.count_ones() as i64;
                if best.is_none_or(|b| task.better(size, b)) {
                    best = Some(size);
                }
            }
        }
        best.unwrap()
    }

    #[test]
    fn pruned_search_matches_enumeration() {
        for seed in 0..30 {
            let g = Graph::erdos_renyi(10, 0.35, seed).unwrap();
            for task in [TaskKind::Mis, TaskKind::Mvc, TaskKind::MaxClique, TaskKind::Mds] {
                let r = exact_solve(task, &g).unwrap();
                assert_eq!(r.optimum, brute_force(task, &g), "{task} seed {seed}");
                assert!(is_feasible(task, &g, &r.witness));
            }
        }
    }

    #[test]
    fn greedy_examples() {
        let c5 = Graph::cycle(5).unwrap();
        assert_eq!(greedy_baseline(TaskKind::Mis, &c5, 0).unwrap().optimum, 2);
        assert_eq!(greedy_baseline(TaskKind::Mvc, &Graph::star(4).unwrap(), 0).unwrap().optimum, 1);
        let tree = Graph::barabasi_albert(30, 1, 4).unwrap();
        assert_eq!(greedy_baseline(TaskKind::Coloring(2), &tree, 0).unwrap().optimum, 0);
    }

    #[test]
    fn greedy_never_beats_exact() {
        for seed in 0..20 {
            let g = Graph::erdos_renyi(11, 0.3, 100 + seed).unwrap();
            for task in TaskKind::all(3) {
                let ex = exact_solve(task, &g).unwrap().optimum;
                let gr = greedy_baseline(task, &g, seed).unwrap();
                assert!(!task.better(gr.optimum, ex), "{task}: greedy {} exact {ex}", gr.optimum);
                assert!(is_feasible(task, &g, &gr.witness));
            }
        }
    }
}

//! Feasibility predicates and the k-seed sequential decoder.
//!
//! Every seed builds a full candidate independently; the best objective
//! wins, ties going to the lowest seed.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{discrete_objective, SoftAssignment};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::task::{Solution, TaskKind};

pub const DEFAULT_SEEDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub solution: Solution,
    pub objective: i64,
    pub feasible: bool,
    pub seeds_used: usize,
}

fn mask_of(n: usize, nodes: &[usize]) -> Option<Vec<bool>> {
    let mut mask = vec![false; n];
    for &v in nodes {
        if v >= n {
            return None;
        }
        mask[v] = true;
    }
    Some(mask)
}

/// Whether `candidate` satisfies the hard constraints of `task` on `g`.
/// Any complete bipartition or coloring is feasible.
pub fn is_feasible(task: TaskKind, g: &Graph, candidate: &Solution) -> bool {
    let n = g.num_nodes();
    match (task, candidate) {
        (TaskKind::MaxCut, Solution::Partition(side)) => side.len() == n,
        (TaskKind::Coloring(k), Solution::Colors(c)) => c.len() == n && c.iter().all(|&x| x < k),
        (t, Solution::Subset(nodes)) if t.is_subset_task() => {
            let Some(s) = mask_of(n, nodes) else {
                return false;
            };
            match t {
                TaskKind::Mis => is_independent_set(g, &s),
                TaskKind::MaxClique => is_clique(g, &s),
                TaskKind::Mvc => is_vertex_cover(g, &s),
                TaskKind::Mds => is_dominating_set(g, &s),
                _ => unreachable!(),
            }
        }
        _ => false,
    }
}

pub fn is_independent_set(g: &Graph, s: &[bool]) -> bool {
    g.edges().iter().all(|&(u, v)| !(s[u] && s[v]))
}

pub fn is_vertex_cover(g: &Graph, s: &[bool]) -> bool {
    g.edges().iter().all(|&(u, v)| s[u] || s[v])
}

pub fn is_clique(g: &Graph, s: &[bool]) -> bool {
    let members: Vec<usize> = (0..s.len()).filter(|&v| s[v]).collect();
    members
        .iter()
        .enumerate()
        .all(|(i, &u)| members[i + 1..].iter().all(|&v| g.has_edge(u, v)))
}

pub fn is_dominating_set(g: &Graph, s: &[bool]) -> bool {
    (0..g.num_nodes()).all(|v| s[v] || g.neighbors(v).iter().any(|&u| s[u]))
}

/// `V \ s`.
pub fn complement_set(g: &Graph, s: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; g.num_nodes()];
    for &v in s {
        if v < mask.len() {
            mask[v] = true;
        }
    }
    (0..g.num_nodes()).filter(|&v| !mask[v]).collect()
}

/// Order in which the growth and threshold rules visit nodes: descending
/// probability, ties by ascending index.
pub fn node_order(p: &[f64]) -> Vec<usize> {
    rank_desc(p)
}

/// Node indices sorted by `key` descending, ties by ascending index.
fn rank_desc(key: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[b].partial_cmp(&key[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

fn rank_asc(key: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[a].partial_cmp(&key[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Rounds `p` into a feasible solution using `k` seeds.
pub fn decode(task: TaskKind, g: &Graph, p: &SoftAssignment, k: usize) -> Result<DecodeOutcome> {
    if k == 0 {
        return Err(Error::InvalidArgument("decoder needs at least one seed".into()));
    }
    let n = g.num_nodes();
    let shape_ok = match (task, p) {
        (TaskKind::Coloring(c), SoftAssignment::Colors(x)) => x.dim() == (n, c),
        (TaskKind::Coloring(_), _) => false,
        (_, SoftAssignment::Nodes(v)) => v.len() == n,
        _ => false,
    };
    if !shape_ok {
        return Err(Error::DimensionMismatch {
            expected: format!("soft assignment for {task} on {n} nodes"),
            got: format!("{} rows", p.num_nodes()),
        });
    }
    let seeds = k.min(n);
    let candidates: Vec<Solution> = match task {
        TaskKind::Coloring(colors) => {
            let x = p.as_colors().unwrap();
            let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
            let confidence: Vec<f64> = rows.iter().map(|r| r.iter().cloned().fold(f64::MIN, f64::max)).collect();
            let uncertain = rank_asc(&confidence);
            (0..seeds)
                .into_par_iter()
                .map(|i| Solution::Colors(coloring_seed(g, &rows, colors, uncertain[i])))
                .collect()
        }
        TaskKind::MaxCut => {
            let p = p.as_nodes().unwrap().to_vec();
            let distance: Vec<f64> = p.iter().map(|x| (x - 0.5).abs()).collect();
            let uncertain = rank_asc(&distance);
            (0..seeds)
                .into_par_iter()
                .map(|i| Solution::Partition(maxcut_seed(g, &p, uncertain[i])))
                .collect()
        }
        _ => {
            let p = p.as_nodes().unwrap().to_vec();
            let order = rank_desc(&p);
            let prune_order = rank_asc(&p);
            (0..seeds)
                .into_par_iter()
                .map(|i| {
                    let seq = std::iter::once(order[i]).chain(order.iter().copied().filter(|&v| v != order[i]));
                    let mask = match task {
                        TaskKind::Mis => grow_independent(g, seq),
                        TaskKind::MaxClique => grow_clique(g, seq),
                        TaskKind::Mvc => cover_then_prune(g, seq, &prune_order),
                        TaskKind::Mds => dominate_then_prune(g, seq, &prune_order),
                        _ => unreachable!(),
                    };
                    Solution::subset_from_mask(&mask)
                })
                .collect()
        }
    };
    let mut best: Option<(i64, Solution)> = None;
    for cand in candidates {
        let obj = discrete_objective(task, g, &cand)?;
        if best.as_ref().is_none_or(|(b, _)| task.better(obj, *b)) {
            best = Some((obj, cand));
        }
    }
    let (objective, solution) = best.expect("at least one seed");
    let feasible = is_feasible(task, g, &solution);
    Ok(DecodeOutcome { solution, objective, feasible, seeds_used: seeds })
}

fn grow_independent(g: &Graph, seq: impl Iterator<Item = usize>) -> Vec<bool> {
    let n = g.num_nodes();
    let mut in_set = vec![false; n];
    let mut blocked = vec![false; n];
    for v in seq {
        if !blocked[v] && !in_set[v] {
            in_set[v] = true;
            for &u in g.neighbors(v) {
                blocked[u] = true;
            }
        }
    }
    in_set
}

fn grow_clique(g: &Graph, seq: impl Iterator<Item = usize>) -> Vec<bool> {
    let n = g.num_nodes();
    let mut in_set = vec![false; n];
    // number of current members adjacent to each node
    let mut linked = vec![0usize; n];
    let mut size = 0;
    for v in seq {
        if !in_set[v] && linked[v] == size {
            in_set[v] = true;
            size += 1;
            for &u in g.neighbors(v) {
                linked[u] += 1;
            }
        }
    }
    in_set
}

fn cover_then_prune(g: &Graph, seq: impl Iterator<Item = usize>, prune_order: &[usize]) -> Vec<bool> {
    let n = g.num_nodes();
    let mut in_set = vec![false; n];
    // uncovered edges at each node outside the set
    let mut open: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let mut remaining = g.num_edges();
    for (step, v) in seq.enumerate() {
        if remaining == 0 {
            break;
        }
        if in_set[v] || (open[v] == 0 && step > 0) {
            continue;
        }
        in_set[v] = true;
        remaining -= open[v];
        for &u in g.neighbors(v) {
            if !in_set[u] {
                open[u] -= 1;
            }
        }
        open[v] = 0;
    }
    for &v in prune_order {
        if in_set[v] && g.neighbors(v).iter().all(|&u| in_set[u]) {
            in_set[v] = false;
        }
    }
    in_set
}

fn dominate_then_prune(g: &Graph, seq: impl Iterator<Item = usize>, prune_order: &[usize]) -> Vec<bool> {
    let n = g.num_nodes();
    let mut in_set = vec![false; n];
    // members of the closed neighborhood in the set
    let mut dom = vec![0usize; n];
    let mut undominated = n;
    for (step, v) in seq.enumerate() {
        if undominated == 0 {
            break;
        }
        if in_set[v] {
            continue;
        }
        let gains = (dom[v] == 0) || g.neighbors(v).iter().any(|&u| dom[u] == 0);
        if !gains && step > 0 {
            continue;
        }
        in_set[v] = true;
        for u in std::iter::once(v).chain(g.neighbors(v).iter().copied()) {
            if dom[u] == 0 {
                undominated -= 1;
            }
            dom[u] += 1;
        }
    }
    for &v in prune_order {
        if in_set[v] && dom[v] >= 2 && g.neighbors(v).iter().all(|&u| dom[u] >= 2) {
            in_set[v] = false;
            dom[v] -= 1;
            for &u in g.neighbors(v) {
                dom[u] -= 1;
            }
        }
    }
    in_set
}

fn maxcut_seed(g: &Graph, p: &[f64], flip_first: usize) -> Vec<bool> {
    let n = g.num_nodes();
    let mut side: Vec<bool> = p.iter().map(|&x| x >= 0.5).collect();
    side[flip_first] = !side[flip_first];
    // cut gain of flipping each node
    let gain_of = |side: &[bool], v: usize| -> i64 {
        g.neighbors(v).iter().map(|&u| if side[u] == side[v] { 1 } else { -1 }).sum()
    };
    let mut gain: Vec<i64> = (0..n).map(|v| gain_of(&side, v)).collect();
    for _ in 0..2 * n {
        let mut pick = None;
        let mut best = 0;
        for v in 0..n {
            if gain[v] > best {
                best = gain[v];
                pick = Some(v);
            }
        }
        let Some(v) = pick else { break };
        side[v] = !side[v];
        gain[v] = -gain[v];
        for &u in g.neighbors(v) {
            gain[u] = gain_of(&side, u);
        }
    }
    side
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for c in 1..row.len() {
        if row[c] > row[best] {
            best = c;
        }
    }
    best
}

fn coloring_seed(g: &Graph, rows: &[Vec<f64>], colors: usize, perturb: usize) -> Vec<usize> {
    let n = g.num_nodes();
    let mut assign: Vec<usize> = rows.iter().map(|r| argmax_lowest(r)).collect();
    if colors > 1 {
        let row = &rows[perturb];
        let first = assign[perturb];
        let second = (0..colors)
            .filter(|&c| c != first)
            .fold(None, |acc: Option<usize>, c| match acc {
                Some(b) if row[b] >= row[c] => Some(b),
                _ => Some(c),
            })
            .unwrap();
        assign[perturb] = second;
    }
    let clashes = |assign: &[usize], v: usize| g.neighbors(v).iter().filter(|&&u| assign[u] == assign[v]).count();
    let mut violating: Vec<(usize, usize)> = (0..n)
        .map(|v| (clashes(&assign, v), v))
        .filter(|&(c, _)| c > 0)
        .collect();
    violating.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut per_color = vec![0usize; colors];
    for (_, v) in violating {
        per_color.iter_mut().for_each(|c| *c = 0);
        for &u in g.neighbors(v) {
            per_color[assign[u]] += 1;
        }
        let mut best = 0;
        for c in 1..colors {
            if per_color[c] < per_color[best] {
                best = c;
            }
        }
        assign[v] = best;
    }
    assign
}

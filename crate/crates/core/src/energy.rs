//! Relaxed Hamiltonians for the six tasks, their exact gradients, and
//! discrete objective evaluation.
//!
//! With `X` replaced by a soft assignment `p`:
//!
//! | task      | energy                                                        |
//! |-----------|---------------------------------------------------------------|
//! | MIS       | `-A Σ p_i + B Σ_{(i,j)∈E} p_i p_j`                            |
//! | MVC       | `A Σ p_i + B Σ_{(i,j)∈E} (1-p_i)(1-p_j)`                      |
//! | MaxClique | `-A Σ p_i + B Σ_{(i,j)∉E, i<j} p_i p_j`                       |
//! | MaxCut    | `-Σ_{(i,j)∈E} (1 - σ_i σ_j)/2`, `σ = 2p - 1`                  |
//! | MDS       | `A Σ p_i + B Σ_i (1-p_i) Π_{k∈N(i)} (1-p_k)`                  |
//! | Coloring  | `Σ_i (1 - Σ_c X_ic)^2 + Σ_{(i,j)∈E} Σ_c X_ic X_jc`            |

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::task::{Solution, TaskKind};

/// Penalty weights for the constrained subset tasks. Binary minimizers are
/// feasible whenever `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub a: f64,
    pub b: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        PenaltyWeights { a: 1.0, b: 2.0 }
    }
}

impl PenaltyWeights {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument(format!("penalties must be positive, got A={a}, B={b}")));
        }
        Ok(PenaltyWeights { a, b })
    }
}

/// Relaxed decision variables: one probability per node, or an `N x K`
/// matrix of color probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum SoftAssignment {
    Nodes(Array1<f64>),
    Colors(Array2<f64>),
}

impl SoftAssignment {
    pub fn nodes(values: impl Into<Vec<f64>>) -> Self {
        SoftAssignment::Nodes(Array1::from(values.into()))
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            SoftAssignment::Nodes(p) => p.len(),
            SoftAssignment::Colors(x) => x.nrows(),
        }
    }

    pub fn as_nodes(&self) -> Option<&Array1<f64>> {
        match self {
            SoftAssignment::Nodes(p) => Some(p),
            SoftAssignment::Colors(_) => None,
        }
    }

    pub fn as_colors(&self) -> Option<&Array2<f64>> {
        match self {
            SoftAssignment::Colors(x) => Some(x),
            SoftAssignment::Nodes(_) => None,
        }
    }

    /// Binary assignment for a subset of nodes.
    pub fn indicator(n: usize, members: &[usize]) -> Self {
        let mut p = Array1::zeros(n);
        for &v in members {
            p[v] = 1.0;
        }
        SoftAssignment::Nodes(p)
    }

    /// One-hot rows for a full coloring.
    pub fn one_hot(colors: &[usize], k: usize) -> Self {
        let mut x = Array2::zeros((colors.len(), k));
        for (i, &c) in colors.iter().enumerate() {
            x[[i, c]] = 1.0;
        }
        SoftAssignment::Colors(x)
    }
}

fn check_shape(task: TaskKind, g: &Graph, p: &SoftAssignment) -> Result<()> {
    let n = g.num_nodes();
    let ok = match (task, p) {
        (TaskKind::Coloring(k), SoftAssignment::Colors(x)) => x.dim() == (n, k),
        (TaskKind::Coloring(_), SoftAssignment::Nodes(_)) => false,
        (_, SoftAssignment::Nodes(v)) => v.len() == n,
        (_, SoftAssignment::Colors(_)) => false,
    };
    if ok {
        Ok(())
    } else {
        let got = match p {
            SoftAssignment::Nodes(v) => format!("vector of length {}", v.len()),
            SoftAssignment::Colors(x) => format!("{}x{} matrix", x.nrows(), x.ncols()),
        };
        let expected = match task {
            TaskKind::Coloring(k) => format!("{n}x{k} matrix for {task}"),
            _ => format!("vector of length {n} for {task}"),
        };
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Evaluates the task's relaxed Hamiltonian at `p`. MaxCut and Coloring
/// ignore `w`.
pub fn energy(task: TaskKind, g: &Graph, p: &SoftAssignment, w: PenaltyWeights) -> Result<f64> {
    check_shape(task, g, p)?;
    let e = match task {
        TaskKind::Coloring(_) => coloring_energy(g, p.as_colors().unwrap()),
        _ => {
            let p = p.as_nodes().unwrap();
            match task {
                TaskKind::Mis => -w.a * p.sum() + w.b * edge_products(g, p),
                TaskKind::Mvc => {
                    let uncovered: f64 = g.edges().iter().map(|&(i, j)| (1.0 - p[i]) * (1.0 - p[j])).sum();
                    w.a * p.sum() + w.b * uncovered
                }
                TaskKind::MaxClique => -w.a * p.sum() + w.b * non_edge_products(g, p),
                TaskKind::MaxCut => -g
                    .edges()
                    .iter()
                    .map(|&(i, j)| {
                        let (si, sj) = (2.0 * p[i] - 1.0, 2.0 * p[j] - 1.0);
                        (1.0 - si * sj) / 2.0
                    })
                    .sum::<f64>(),
                TaskKind::Mds => {
                    let undominated: f64 = (0..g.num_nodes())
                        .map(|i| (1.0 - p[i]) * g.neighbors(i).iter().map(|&k| 1.0 - p[k]).product::<f64>())
                        .sum();
                    w.a * p.sum() + w.b * undominated
                }
                TaskKind::Coloring(_) => unreachable!(),
            }
        }
    };
    Ok(e)
}

fn edge_products(g: &Graph, p: &Array1<f64>) -> f64 {
    g.edges().iter().map(|&(i, j)| p[i] * p[j]).sum()
}

// Σ_{i<j, (i,j)∉E} p_i p_j = ((Σp)² - Σp²)/2 - Σ_{(i,j)∈E} p_i p_j
fn non_edge_products(g: &Graph, p: &Array1<f64>) -> f64 {
    let s = p.sum();
    let sq: f64 = p.iter().map(|x| x * x).sum();
    0.5 * (s * s - sq) - edge_products(g, p)
}

fn coloring_energy(g: &Graph, x: &Array2<f64>) -> f64 {
    let rows: f64 = x.rows().into_iter().map(|r| (1.0 - r.sum()).powi(2)).sum();
    let clashes: f64 = g
        .edges()
        .iter()
        .map(|&(i, j)| x.row(i).dot(&x.row(j)))
        .sum();
    rows + clashes
}

/// Exact gradient of [`energy`] with respect to `p`, same shape as `p`.
pub fn energy_gradient(task: TaskKind, g: &Graph, p: &SoftAssignment, w: PenaltyWeights) -> Result<SoftAssignment> {
    check_shape(task, g, p)?;
    let n = g.num_nodes();
    if let TaskKind::Coloring(_) = task {
        let x = p.as_colors().unwrap();
        let mut grad = Array2::zeros(x.dim());
        for i in 0..n {
            let slack = 1.0 - x.row(i).sum();
            let mut row = grad.row_mut(i);
            row.fill(-2.0 * slack);
            for &j in g.neighbors(i) {
                row += &x.row(j);
            }
        }
        return Ok(SoftAssignment::Colors(grad));
    }
    let p = p.as_nodes().unwrap();
    let nbr_sum = |i: usize, f: &dyn Fn(f64) -> f64| g.neighbors(i).iter().map(|&j| f(p[j])).sum::<f64>();
    let grad: Array1<f64> = match task {
        TaskKind::Mis => (0..n).map(|i| -w.a + w.b * nbr_sum(i, &|x| x)).collect(),
        TaskKind::Mvc => (0..n).map(|i| w.a - w.b * nbr_sum(i, &|x| 1.0 - x)).collect(),
        TaskKind::MaxClique => {
            let total = p.sum();
            (0..n)
                .map(|i| -w.a + w.b * (total - p[i] - nbr_sum(i, &|x| x)))
                .collect()
        }
        TaskKind::MaxCut => (0..n).map(|i| nbr_sum(i, &|x| 2.0 * x - 1.0)).collect(),
        TaskKind::Mds => mds_gradient(g, p, w),
        TaskKind::Coloring(_) => unreachable!(),
    };
    Ok(SoftAssignment::Nodes(grad))
}

fn mds_gradient(g: &Graph, p: &Array1<f64>, w: PenaltyWeights) -> Array1<f64> {
    let n = g.num_nodes();
    let mut grad = Array1::from_elem(n, w.a);
    let mut prefix = Vec::new();
    for i in 0..n {
        let nbrs = g.neighbors(i);
        // prefix[t] = Π_{s<t} (1 - p_{nbrs[s]})
        prefix.clear();
        prefix.push(1.0);
        for &k in nbrs {
            let last = *prefix.last().unwrap();
            prefix.push(last * (1.0 - p[k]));
        }
        let full = prefix[nbrs.len()];
        grad[i] -= w.b * full;
        let outer = w.b * (1.0 - p[i]);
        let mut suffix = 1.0;
        for t in (0..nbrs.len()).rev() {
            grad[nbrs[t]] -= outer * prefix[t] * suffix;
            suffix *= 1.0 - p[nbrs[t]];
        }
    }
    grad
}

/// Discrete objective: subset size for MIS/MVC/MaxClique/MDS, cut size for
/// MaxCut, monochromatic edge count for Coloring.
pub fn discrete_objective(task: TaskKind, g: &Graph, s: &Solution) -> Result<i64> {
    let n = g.num_nodes();
    match (task, s) {
        (t, Solution::Subset(nodes)) if t.is_subset_task() => {
            if let Some(&bad) = nodes.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidArgument(format!("node {bad} outside graph of {n} nodes")));
            }
            let mut sorted = nodes.clone();
            sorted.sort_unstable();
            sorted.dedup();
            Ok(sorted.len() as i64)
        }
        (TaskKind::MaxCut, Solution::Partition(side)) => {
            if side.len() != n {
                return Err(incomplete(task, side.len(), n));
            }
            Ok(g.edges().iter().filter(|&&(i, j)| side[i] != side[j]).count() as i64)
        }
        (TaskKind::Coloring(k), Solution::Colors(colors)) => {
            if colors.len() != n {
                return Err(incomplete(task, colors.len(), n));
            }
            if let Some(&c) = colors.iter().find(|&&c| c >= k) {
                return Err(Error::InvalidArgument(format!("color {c} outside 0..{k}")));
            }
            Ok(g.edges().iter().filter(|&&(i, j)| colors[i] == colors[j]).count() as i64)
        }
        _ => Err(Error::InvalidArgument(format!("solution kind does not match task {task}"))),
    }
}

fn incomplete(task: TaskKind, got: usize, n: usize) -> Error {
    Error::DimensionMismatch {
        expected: format!("complete assignment of {n} nodes for {task}"),
        got: format!("{got} entries"),
    }
}

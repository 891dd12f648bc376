//! Undirected, unweighted simple graphs and the random generators used to
//! build training and test corpora.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable simple graph on nodes `0..n`.
///
/// Edges are stored canonically as `(u, v)` with `u < v`, sorted and
/// deduplicated; neighbor lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

/// On-disk shape of a graph: `{"n": int, "edges": [[u, v], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphRecord> for Graph {
    type Error = Error;

    fn try_from(r: GraphRecord) -> Result<Self> {
        Graph::new(r.n, r.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<Graph> for GraphRecord {
    fn from(g: Graph) -> Self {
        GraphRecord {
            n: g.n,
            edges: g.edges.iter().map(|&(u, v)| [u, v]).collect(),
        }
    }
}

impl Graph {
    /// Builds a canonical graph from an arbitrary edge list. Duplicates and
    /// reversed pairs collapse; self-loops and out-of-range endpoints are
    /// rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::EndpointOutOfRange { u, v, n });
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self::from_canonical(n, canon))
    }

    /// Graph with no edges.
    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, std::iter::empty())
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("cycle needs n >= 3, got {n}")));
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    /// Star with center 0 and `n - 1` leaves.
    pub fn star(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (0, i)))
    }

    fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Graph { n, edges, adj }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.adj[u].binary_search(&v).is_ok()
    }

    /// Same node set, exactly the non-edges of `self`.
    pub fn complement(&self) -> Graph {
        let n = self.n;
        let mut edges = Vec::with_capacity(n * (n - 1) / 2 - self.edges.len());
        for u in 0..n {
            let mut nbrs = self.adj[u].iter().peekable();
            for v in u + 1..n {
                while nbrs.peek().is_some_and(|&&w| w < v) {
                    nbrs.next();
                }
                if nbrs.peek() != Some(&&v) {
                    edges.push((u, v));
                }
            }
        }
        Self::from_canonical(n, edges)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Erdős–Rényi G(n, p): every pair is kept independently with
    /// probability `p`.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("edge probability {p} not in [0, 1]")));
        }
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Ok(Self::from_canonical(n, edges))
    }

    /// Barabási–Albert preferential attachment, seeded with the complete
    /// graph on `m` nodes. Every later node attaches to `m` distinct
    /// existing nodes sampled proportionally to degree, without
    /// replacement, so `|E| = m(m-1)/2 + m(n-m)`.
    pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(Error::InvalidArgument(format!("need 1 <= m < n, got m={m}, n={n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(m * (m - 1) / 2 + m * (n - m));
        let mut degree = vec![0usize; n];
        for u in 0..m {
            for v in u + 1..m {
                edges.push((u, v));
                degree[u] += 1;
                degree[v] += 1;
            }
        }
        let mut targets = Vec::with_capacity(m);
        for new in m..n {
            targets.clear();
            let mut pool: Vec<usize> = (0..new).collect();
            for _ in 0..m {
                let total: usize = pool.iter().map(|&v| degree[v]).sum();
                let pick = if total == 0 {
                    rng.gen_range(0..pool.len())
                } else {
                    let mut r = rng.gen_range(0..total);
                    let mut idx = 0;
                    loop {
                        let d = degree[pool[idx]];
                        if r < d {
                            break idx;
                        }
                        r -= d;
                        idx += 1;
                    }
                };
                targets.push(pool.swap_remove(pick));
            }
            for &t in &targets {
                edges.push((t.min(new), t.max(new)));
                degree[t] += 1;
                degree[new] += 1;
            }
        }
        edges.sort_unstable();
        Ok(Self::from_canonical(n, edges))
    }

    /// Uniformly random node permutation applied to `self`.
    pub fn shuffled(&self, seed: u64) -> Graph {
        let mut perm: Vec<usize> = (0..self.n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        Graph::new(self.n, edges).expect("permutation preserves validity")
    }
}

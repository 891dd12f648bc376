//! Structural node features: degree, local clustering coefficient and
//! triangle count, optionally repeated on the complement graph.

use ndarray::Array2;

use crate::graph::Graph;

const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub names: Vec<String>,
    pub standardized: bool,
}

impl FeatureMatrix {
    pub fn num_features(&self) -> usize {
        self.values.ncols()
    }
}

/// Per-node `(degree, clustering, triangles)` without any normalization.
pub fn raw_statistics(g: &Graph) -> Vec<[f64; 3]> {
    let n = g.num_nodes();
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        let nbrs = g.neighbors(v);
        let deg = nbrs.len();
        let mut tri = 0usize;
        for (i, &a) in nbrs.iter().enumerate() {
            tri += count_common_after(g.neighbors(a), &nbrs[i + 1..]);
        }
        let clustering = if deg >= 2 {
            tri as f64 / (deg * (deg - 1) / 2) as f64
        } else {
            0.0
        };
        out.push([deg as f64, clustering, tri as f64]);
    }
    out
}

// size of the intersection of two sorted lists
fn count_common_after(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Unstandardized feature matrix; columns 3..6 hold the complement-graph
/// statistics when `include_complement` is set.
pub fn raw_features(g: &Graph, include_complement: bool) -> FeatureMatrix {
    let n = g.num_nodes();
    let width = if include_complement { 6 } else { 3 };
    let mut values = Array2::zeros((n, width));
    for (v, row) in raw_statistics(g).into_iter().enumerate() {
        for c in 0..3 {
            values[[v, c]] = row[c];
        }
    }
    if include_complement {
        for (v, row) in raw_statistics(&g.complement()).into_iter().enumerate() {
            for c in 0..3 {
                values[[v, 3 + c]] = row[c];
            }
        }
    }
    let mut names: Vec<String> = ["degree", "clustering", "triangles"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if include_complement {
        names.extend(["degree", "clustering", "triangles"].iter().map(|s| format!("complement_{s}")));
    }
    FeatureMatrix { values, names, standardized: false }
}

/// Encoder input: raw features z-scored per column over the nodes of this
/// graph. Columns whose standard deviation is below `1e-6` become zero.
pub fn node_features(g: &Graph, include_complement: bool) -> FeatureMatrix {
    let mut fm = raw_features(g, include_complement);
    let n = fm.values.nrows() as f64;
    for mut col in fm.values.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < STD_FLOOR {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|x| (x - mean) / std);
        }
    }
    fm.standardized = true;
    fm
}

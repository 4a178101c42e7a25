//! Node features on a [`LayeredGraph`]: weighted degree and eigenvector
//! centrality.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::LayeredGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[serde(alias = "weighted_degree")]
    Degree,
    #[serde(alias = "eigenvector_centrality")]
    Eigenvector,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Degree => "degree",
            FeatureKind::Eigenvector => "eigenvector",
        })
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degree" | "weighted_degree" => Ok(FeatureKind::Degree),
            "eigenvector" | "eigenvector_centrality" => Ok(FeatureKind::Eigenvector),
            other => Err(Error::InvalidParameter(format!("unknown node feature {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    /// Euclidean distance between the last two iterates.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureVector {
    pub kind: FeatureKind,
    /// Indexed by node id.
    pub values: Vec<f64>,
    pub convergence: Option<Convergence>,
}

/// Signed sum of incident edge weights.
pub fn weighted_degree(g: &LayeredGraph) -> NodeFeatureVector {
    let mut values = vec![0.0; g.node_count()];
    for e in &g.edges {
        values[e.u as usize] += e.weight;
        values[e.v as usize] += e.weight;
    }
    NodeFeatureVector {
        kind: FeatureKind::Degree,
        values,
        convergence: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

/// Symmetric adjacency in CSR form over |weight|, zero weights omitted.
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl Csr {
    fn from_graph(g: &LayeredGraph) -> Self {
        let n = g.node_count();
        let mut counts = vec![0usize; n + 1];
        for e in g.edges.iter().filter(|e| e.weight != 0.0) {
            counts[e.u as usize + 1] += 1;
            counts[e.v as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let total = counts[n];
        let mut fill = counts.clone();
        let mut targets = vec![0u32; total];
        let mut weights = vec![0.0; total];
        for e in g.edges.iter().filter(|e| e.weight != 0.0) {
            let w = e.weight.abs();
            for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                let slot = fill[a as usize];
                targets[slot] = b;
                weights[slot] = w;
                fill[a as usize] += 1;
            }
        }
        Self {
            offsets: counts,
            targets,
            weights,
        }
    }

    fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[node]..self.offsets[node + 1];
        self.targets[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&t, &w)| (t as usize, w))
    }

    /// Nodes of the largest connected component (ties go to the component
    /// holding the smallest node id), in ascending id order.
    fn largest_component(&self) -> Vec<usize> {
        let n = self.offsets.len() - 1;
        let mut label = vec![usize::MAX; n];
        let mut best: Vec<usize> = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut members = vec![start];
            label[start] = start;
            stack.push(start);
            while let Some(node) = stack.pop() {
                for (next, _) in self.neighbors(node) {
                    if label[next] == usize::MAX {
                        label[next] = start;
                        members.push(next);
                        stack.push(next);
                    }
                }
            }
            if members.len() > best.len() {
                best = members;
            }
        }
        best.sort_unstable();
        best
    }
}

/// Principal eigenvector of |W| by power iteration on `|W| + σI`, with σ the
/// largest weighted degree. The shift separates λ_max from −λ_max, which
/// k-partite spectra always contain. Computed on the largest connected
/// component; nodes outside it get 0. The result is nonnegative with unit
/// Euclidean norm.
pub fn eigenvector_centrality(g: &LayeredGraph, opts: EigenOptions) -> Result<NodeFeatureVector> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter(format!(
            "eigenvector centrality needs tol > 0 and max_iter > 0 (got {}, {})",
            opts.tol, opts.max_iter
        )));
    }
    let n = g.node_count();
    let csr = Csr::from_graph(g);
    let component = csr.largest_component();
    if component.len() < 2 {
        return Err(Error::EdgelessGraph);
    }

    // local indexing within the component
    let mut local = vec![usize::MAX; n];
    for (i, &node) in component.iter().enumerate() {
        local[node] = i;
    }
    let m = component.len();
    let sigma = component
        .iter()
        .map(|&node| csr.neighbors(node).map(|(_, w)| w).sum::<f64>())
        .fold(0.0, f64::max);

    let mut x = vec![1.0 / (m as f64).sqrt(); m];
    let mut y = vec![0.0; m];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        for (i, &node) in component.iter().enumerate() {
            let mut acc = sigma * x[i];
            for (next, w) in csr.neighbors(node) {
                acc += w * x[local[next]];
            }
            y[i] = acc;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        residual = 0.0;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi /= norm;
            residual += (*yi - xi) * (*yi - xi);
        }
        residual = residual.sqrt();
        std::mem::swap(&mut x, &mut y);
        if residual < opts.tol {
            let mut values = vec![0.0; n];
            for (i, &node) in component.iter().enumerate() {
                values[node] = x[i].max(0.0);
            }
            return Ok(NodeFeatureVector {
                kind: FeatureKind::Eigenvector,
                values,
                convergence: Some(Convergence {
                    iterations,
                    residual,
                }),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations,
        residual,
    })
}

/// Computes the requested node feature.
pub fn node_features(
    g: &LayeredGraph,
    kind: FeatureKind,
    opts: EigenOptions,
) -> Result<NodeFeatureVector> {
    match kind {
        FeatureKind::Degree => Ok(weighted_degree(g)),
        FeatureKind::Eigenvector => eigenvector_centrality(g, opts),
    }
}

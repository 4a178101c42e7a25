//! Weighted k-partite graphs built from a single checkpoint.
//!
//! Three constructions are provided:
//!
//! * **fc**: every neuron is a node and consecutive layers are joined by the
//!   (signed) entries of their weight matrix.
//! * **rolled**: one node per input channel, per conv filter and per fc
//!   neuron. Conv-to-conv edges carry the norm of the kernel channel slice
//!   `K[l, k, :, :]`; the conv-to-fc boundary carries the norm of the fc
//!   weight rows belonging to one channel; fc-to-fc edges carry `|W[i][j]|`
//!   (the norm of a single entry). Pooling layers add no nodes. All weights
//!   are nonnegative.
//! * **unrolled**: one node per activation position (input pixels, conv and
//!   pool outputs, fc neurons). Conv edges carry the kernel entry applied at
//!   each receptive-field offset, pool edges carry `1 / window²`.
//!
//! Node ids are contiguous and partition-major; every edge goes from a node in
//! partition `p` (stored as `u`) to a node in partition `p + 1` (stored as `v`).

mod build;
mod export;

pub use build::{
    build_fc_graph, build_graph, build_rolled_graph, build_unrolled_graph,
    build_unrolled_graph_with_limit, unrolled_node_count, DEFAULT_UNROLLED_NODE_CEILING,
};
pub use export::{read_edge_list, write_edge_list};

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Fc,
    Rolled,
    Unrolled,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Fc => "fc",
            Representation::Rolled => "rolled",
            Representation::Unrolled => "unrolled",
        })
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fc" => Ok(Representation::Fc),
            "rolled" => Ok(Representation::Rolled),
            "unrolled" => Ok(Representation::Unrolled),
            other => Err(Error::InvalidParameter(format!(
                "unknown representation {other:?} (expected fc, rolled or unrolled)"
            ))),
        }
    }
}

/// Norm used to collapse a kernel channel slice into one rolled edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    #[default]
    L2,
}

impl Norm {
    pub fn apply<I: IntoIterator<Item = f64>>(self, values: I) -> f64 {
        match self {
            Norm::L1 => values.into_iter().map(f64::abs).sum(),
            Norm::L2 => values.into_iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(Error::InvalidParameter(format!("unknown norm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredGraph {
    pub partitions: Vec<usize>,
    pub edges: Vec<Edge>,
    pub representation: Representation,
}

impl LayeredGraph {
    pub fn node_count(&self) -> usize {
        self.partitions.iter().sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// First node id of every partition.
    pub fn partition_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.partitions.len());
        let mut acc = 0;
        for &n in &self.partitions {
            offsets.push(acc);
            acc += n;
        }
        offsets
    }

    /// Partition index of every node id.
    pub fn node_partitions(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.node_count());
        for (p, &n) in self.partitions.iter().enumerate() {
            out.extend(std::iter::repeat_n(p, n));
        }
        out
    }

    /// Checks the k-partite layout, self-loops, duplicates and, for rolled
    /// graphs, weight signs.
    pub fn validate(&self) -> Result<()> {
        let part = self.node_partitions();
        let n = part.len();
        let mut seen = HashSet::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            let (u, v) = (e.u as usize, e.v as usize);
            if u >= n || v >= n {
                return Err(Error::Structure(format!("edge {i} references a missing node")));
            }
            if u == v {
                return Err(Error::Structure(format!("edge {i} is a self-loop on {u}")));
            }
            if part[u] + 1 != part[v] {
                return Err(Error::Structure(format!(
                    "edge {i} ({u}, {v}) joins partitions {} and {}",
                    part[u], part[v]
                )));
            }
            if !e.weight.is_finite() {
                return Err(Error::Structure(format!("edge {i} has a non-finite weight")));
            }
            if self.representation == Representation::Rolled && e.weight < 0.0 {
                return Err(Error::Structure(format!(
                    "rolled edge {i} has negative weight {}",
                    e.weight
                )));
            }
            if !seen.insert((e.u, e.v)) {
                return Err(Error::Structure(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(())
    }

    /// Dense symmetric adjacency matrix, row-major. Intended for small graphs.
    pub fn dense_adjacency(&self) -> Vec<Vec<f64>> {
        let n = self.node_count();
        let mut a = vec![vec![0.0; n]; n];
        for e in &self.edges {
            a[e.u as usize][e.v as usize] += e.weight;
            a[e.v as usize][e.u as usize] += e.weight;
        }
        a
    }
}

/// Positive- and negative-weight subgraphs of a signed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedSplit {
    pub positive: LayeredGraph,
    /// Weights are magnitudes of the original negative weights.
    pub negative: LayeredGraph,
}

impl SignedSplit {
    /// Re-merges both halves into the signed edge list (positive edges first).
    pub fn merge(&self) -> Vec<Edge> {
        self.positive
            .edges
            .iter()
            .copied()
            .chain(self.negative.edges.iter().map(|e| Edge {
                weight: -e.weight,
                ..*e
            }))
            .collect()
    }
}

/// Splits `g` by edge sign. Zero-weight edges are dropped from both halves.
pub fn split_signed(g: &LayeredGraph) -> SignedSplit {
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for e in &g.edges {
        if e.weight > 0.0 {
            positive.push(*e);
        } else if e.weight < 0.0 {
            negative.push(Edge {
                weight: -e.weight,
                ..*e
            });
        }
    }
    SignedSplit {
        positive: LayeredGraph {
            partitions: g.partitions.clone(),
            edges: positive,
            representation: g.representation,
        },
        negative: LayeredGraph {
            partitions: g.partitions.clone(),
            edges: negative,
            representation: g.representation,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(weights: &[f64]) -> LayeredGraph {
        LayeredGraph {
            partitions: vec![1, weights.len()],
            edges: weights
                .iter()
                .enumerate()
                .map(|(i, &w)| Edge {
                    u: 0,
                    v: 1 + i as u32,
                    weight: w,
                })
                .collect(),
            representation: Representation::Fc,
        }
    }

    #[test]
    fn split_signs() {
        let s = split_signed(&toy(&[2.0, -3.0, 0.0]));
        assert_eq!(s.positive.edges.len(), 1);
        assert_eq!(s.positive.edges[0].weight, 2.0);
        assert_eq!(s.negative.edges.len(), 1);
        assert_eq!(s.negative.edges[0].weight, 3.0);
        assert_eq!(s.positive.partitions, vec![1, 3]);
        assert_eq!(s.negative.partitions, vec![1, 3]);
    }

    #[test]
    fn validate_catches_bad_layouts() {
        let mut g = toy(&[1.0, 1.0]);
        g.validate().unwrap();
        g.edges.push(g.edges[0]);
        assert!(g.validate().is_err());

        let mut g = toy(&[1.0]);
        g.edges[0].v = 0;
        assert!(g.validate().is_err());

        let g = LayeredGraph {
            partitions: vec![1, 1, 1],
            edges: vec![Edge {
                u: 0,
                v: 2,
                weight: 1.0,
            }],
            representation: Representation::Fc,
        };
        assert!(g.validate().is_err());

        let mut g = toy(&[-1.0]);
        g.representation = Representation::Rolled;
        assert!(g.validate().is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(Norm::L1.apply([3.0, -4.0]), 7.0);
        assert_eq!(Norm::L2.apply([3.0, -4.0]), 5.0);
        assert_eq!("L2".parse::<Norm>().unwrap(), Norm::L2);
        assert_eq!("rolled".parse::<Representation>().unwrap(), Representation::Rolled);
        assert!("fancy".parse::<Representation>().is_err());
    }
}

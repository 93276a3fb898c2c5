//! Minimum-spanning-tree connectivity penalty.
//!
//! Each wire is a graph vertex. The edge weight between two wires is the
//! smallest squared distance between one endpoint of each (four
//! combinations). Prim's algorithm on the dense graph gives the tree whose
//! total weight, the "MST budget", is the penalty. Its gradient moves the
//! realized endpoint pairs of every tree edge toward each other; topology and
//! endpoint choice are held fixed within a step.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{Point3, Wire, WireArt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Endpoint {
    /// First control point of the first segment.
    Head,
    /// Last control point of the last segment.
    Tail,
}

impl Endpoint {
    fn of(self, w: &Wire) -> Point3 {
        match self {
            Endpoint::Head => w.head(),
            Endpoint::Tail => w.tail(),
        }
    }
}

/// The closest endpoint combination of two wires.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EndpointPair {
    pub i: usize,
    pub j: usize,
    pub end_i: Endpoint,
    pub end_j: Endpoint,
    /// Squared Euclidean distance, scene units squared.
    pub weight: f64,
}

impl EndpointPair {
    fn flipped(self) -> EndpointPair {
        EndpointPair {
            i: self.j,
            j: self.i,
            end_i: self.end_j,
            end_j: self.end_i,
            weight: self.weight,
        }
    }
}

/// Candidate order; ties go to the earliest.
const COMBINATIONS: [(Endpoint, Endpoint); 4] = [
    (Endpoint::Head, Endpoint::Head),
    (Endpoint::Tail, Endpoint::Head),
    (Endpoint::Tail, Endpoint::Tail),
    (Endpoint::Head, Endpoint::Tail),
];

/// Smallest squared endpoint distance between `wi` and `wj`. Wire indices
/// are taken from the wires' ids.
pub fn endpoint_distance(wi: &Wire, wj: &Wire) -> EndpointPair {
    let mut best = EndpointPair {
        i: wi.id,
        j: wj.id,
        end_i: Endpoint::Head,
        end_j: Endpoint::Head,
        weight: f64::INFINITY,
    };
    for (ei, ej) in COMBINATIONS {
        let d = (ei.of(wi) - ej.of(wj)).norm_squared();
        if d < best.weight {
            best.end_i = ei;
            best.end_j = ej;
            best.weight = d;
        }
    }
    best
}

/// Complete graph over the wires, dense symmetric storage.
#[derive(Debug, Clone, PartialEq)]
pub struct WireGraph {
    n: usize,
    pairs: Vec<EndpointPair>,
}

impl WireGraph {
    pub fn from_art(art: &WireArt) -> Self {
        let n = art.wires.len();
        let mut pairs = vec![
            EndpointPair {
                i: 0,
                j: 0,
                end_i: Endpoint::Head,
                end_j: Endpoint::Head,
                weight: 0.0,
            };
            n * n
        ];
        for i in 0..n {
            for j in (i + 1)..n {
                let mut p = endpoint_distance(&art.wires[i], &art.wires[j]);
                p.i = i;
                p.j = j;
                pairs[i * n + j] = p;
                pairs[j * n + i] = p.flipped();
            }
        }
        WireGraph { n, pairs }
    }

    /// A graph with explicit weights; endpoints recorded as head-head.
    /// Only the upper triangle of `weights` (row-major `n x n`) is read.
    pub fn from_weights(n: usize, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), n * n, "weight matrix must be n x n");
        let mut pairs = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let w = if i == j { 0.0 } else { weights[i.min(j) * n + i.max(j)] };
                pairs.push(EndpointPair {
                    i,
                    j,
                    end_i: Endpoint::Head,
                    end_j: Endpoint::Head,
                    weight: w,
                });
            }
        }
        WireGraph { n, pairs }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn pair(&self, i: usize, j: usize) -> &EndpointPair {
        &self.pairs[i * self.n + j]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.pair(i, j).weight
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MstResult {
    /// Tree edges in the order Prim adds them, oriented parent to child.
    pub edges: Vec<EndpointPair>,
    pub total_weight: f64,
}

/// Array-based Prim, O(n^2). Starts at vertex 0; among equal keys the
/// smallest vertex index is taken next, and a key only moves on a strict
/// improvement.
pub fn prim_mst(g: &WireGraph) -> MstResult {
    let n = g.n;
    if n < 2 {
        return MstResult::default();
    }
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    key[0] = 0.0;
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || key[v] < key[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        if u != 0 {
            edges.push(*g.pair(parent[u], u));
        }
        for v in 0..n {
            if !in_tree[v] {
                let w = g.weight(u, v);
                if w < key[v] {
                    key[v] = w;
                    parent[v] = u;
                }
            }
        }
    }
    let total_weight = edges.iter().map(|e| e.weight).sum();
    MstResult { edges, total_weight }
}

/// The MST budget alone.
pub fn mst_budget(art: &WireArt) -> f64 {
    prim_mst(&WireGraph::from_art(art)).total_weight
}

#[derive(Debug, Clone, PartialEq)]
pub struct MstLoss {
    pub tree: MstResult,
    pub loss: f64,
    /// Flat `[x0, y0, z0, ...]` gradient aligned with [`WireArt::flat_coords`].
    pub grad: Vec<f64>,
}

/// Tree loss and its gradient. Only the two extreme endpoints of each wire
/// can receive a non-zero gradient.
pub fn mst_loss_and_grad(art: &WireArt) -> MstLoss {
    let tree = prim_mst(&WireGraph::from_art(art));
    let ends = art.endpoint_indices();
    let mut grad = vec![0.0; 3 * art.point_count()];
    let index = |wire: usize, e: Endpoint| match e {
        Endpoint::Head => ends[wire].0,
        Endpoint::Tail => ends[wire].1,
    };
    for e in &tree.edges {
        let a = e.end_i.of(&art.wires[e.i]);
        let b = e.end_j.of(&art.wires[e.j]);
        let d = (a - b) * 2.0;
        let (ia, ib) = (index(e.i, e.end_i), index(e.j, e.end_j));
        for (k, c) in d.to_array().into_iter().enumerate() {
            grad[3 * ia + k] += c;
            grad[3 * ib + k] -= c;
        }
    }
    MstLoss {
        loss: tree.total_weight,
        tree,
        grad,
    }
}

//! Model inputs: encoded graphs packed into disjoint-union batches.

use alloc::vec::Vec;

use fixedbitset::FixedBitSet;

use super::params::EDGE_TYPES;
use crate::graph::ProgramGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeInput {
    pub src: u32,
    pub dst: u32,
    pub flow: u8,
    pub position: u32,
}

/// Token ids and typed edges of one graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedGraph {
    pub tokens: Vec<u32>,
    pub edges: Vec<EdgeInput>,
}

impl EncodedGraph {
    pub fn new(graph: &ProgramGraph, tokens: Vec<u32>) -> Self {
        assert_eq!(tokens.len(), graph.num_vertices());
        let edges = graph
            .edges
            .iter()
            .map(|e| EdgeInput { src: e.src as u32, dst: e.dst as u32, flow: e.flow.index() as u8, position: e.position })
            .collect();
        EncodedGraph { tokens, edges }
    }

    pub fn num_vertices(&self) -> usize {
        self.tokens.len()
    }
}

/// A directed message route: `from`'s state, scaled by the position
/// encoding, lands in `to`'s message for one edge type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Route {
    pub from: u32,
    pub to: u32,
    pub position: u32,
}

/// Several graphs laid side by side with vertex ids offset.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub tokens: Vec<u32>,
    pub selected: Vec<bool>,
    /// Vertices whose prediction enters the loss and metrics.
    pub scored: Vec<bool>,
    pub labels: Vec<bool>,
    pub routes: [Vec<Route>; EDGE_TYPES],
    pub max_position: u32,
    /// Start offset of each packed graph.
    pub offsets: Vec<usize>,
}

impl Batch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(graph: &EncodedGraph, root: Option<usize>) -> Self {
        let mut b = Batch::new();
        b.push(graph, root, None, None);
        b
    }

    pub fn num_vertices(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_graphs(&self) -> usize {
        self.offsets.len()
    }

    pub fn num_scored(&self) -> usize {
        self.scored.iter().filter(|&&s| s).count()
    }

    /// Append a graph. `scored` defaults to no vertex, `labels` to all negative.
    pub fn push(
        &mut self,
        graph: &EncodedGraph,
        root: Option<usize>,
        labels: Option<&FixedBitSet>,
        scored: Option<&FixedBitSet>,
    ) {
        let off = self.tokens.len();
        let n = graph.num_vertices();
        self.offsets.push(off);
        self.tokens.extend_from_slice(&graph.tokens);
        self.selected.extend((0..n).map(|v| Some(v) == root));
        self.labels.extend((0..n).map(|v| labels.is_some_and(|l| l.contains(v))));
        self.scored.extend((0..n).map(|v| scored.is_some_and(|s| s.contains(v))));
        let o = off as u32;
        for e in &graph.edges {
            let k = 2 * e.flow as usize;
            self.routes[k].push(Route { from: e.src + o, to: e.dst + o, position: e.position });
            self.routes[k + 1].push(Route { from: e.dst + o, to: e.src + o, position: e.position });
            self.max_position = self.max_position.max(e.position);
        }
    }
}

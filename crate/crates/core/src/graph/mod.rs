//! Directed road graph with travel-time weighted edges.

mod central;
mod ego;
pub mod io;
mod paths;

use std::collections::BTreeMap;

use crate::geo::Coord;
use crate::osm::HighwayClass;

pub use central::{insert_central_node, CentralNode, JUNCTION_REUSE_M};
pub use ego::{ego_graph, EgoGraph};
pub(crate) use paths::State;
pub use paths::{shortest_travel_time, Network};

/// OSM node ids are positive; virtual nodes inserted at sensors are negative.
pub type NodeId = i64;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub length_m: f64,
    pub speed_kph: f64,
    pub travel_time_s: f64,
    pub class: HighwayClass,
    pub lanes: Option<u32>,
    /// Source way, when known. Not serialized.
    pub way_id: Option<i64>,
    /// Polyline from `src` to `dst`, endpoints included. Not serialized.
    pub geometry: Vec<Coord>,
}

impl Edge {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        src: NodeId,
        dst: NodeId,
        length_m: f64,
        speed_kph: f64,
        class: HighwayClass,
        lanes: Option<u32>,
        way_id: Option<i64>,
        geometry: Vec<Coord>,
    ) -> Self {
        Edge {
            src,
            dst,
            length_m,
            speed_kph,
            travel_time_s: length_m / (speed_kph / 3.6),
            class,
            lanes,
            way_id,
            geometry,
        }
    }

    pub fn reversed(&self) -> Edge {
        let mut geometry = self.geometry.clone();
        geometry.reverse();
        Edge {
            src: self.dst,
            dst: self.src,
            geometry,
            ..self.clone()
        }
    }

    /// Whether `other` is the opposite carriageway of the same two-way road.
    pub fn is_reverse_of(&self, other: &Edge) -> bool {
        self.src == other.dst
            && self.dst == other.src
            && self.class == other.class
            && self.way_id == other.way_id
            && (self.length_m - other.length_m).abs() <= 1e-9 * self.length_m.max(1.0)
    }
}

/// Immutable directed graph of junctions and road segments.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    center: Coord,
    nodes: BTreeMap<NodeId, Coord>,
    edges: Vec<Edge>,
    out_adj: BTreeMap<NodeId, Vec<usize>>,
    in_adj: BTreeMap<NodeId, Vec<usize>>,
}

impl RoadGraph {
    /// Builds a graph; the projection center defaults to the node centroid.
    pub fn new(nodes: BTreeMap<NodeId, Coord>, edges: Vec<Edge>) -> Self {
        let n = nodes.len().max(1) as f64;
        let center = Coord::new(
            nodes.values().map(|c| c.lat).sum::<f64>() / n,
            nodes.values().map(|c| c.lon).sum::<f64>() / n,
        );
        Self::with_center(center, nodes, edges)
    }

    pub fn with_center(center: Coord, nodes: BTreeMap<NodeId, Coord>, edges: Vec<Edge>) -> Self {
        let mut out_adj: BTreeMap<NodeId, Vec<usize>> = nodes.keys().map(|&id| (id, Vec::new())).collect();
        let mut in_adj = out_adj.clone();
        for (i, e) in edges.iter().enumerate() {
            debug_assert!(nodes.contains_key(&e.src) && nodes.contains_key(&e.dst));
            out_adj.get_mut(&e.src).expect("edge source is a node").push(i);
            in_adj.get_mut(&e.dst).expect("edge target is a node").push(i);
        }
        RoadGraph {
            center,
            nodes,
            edges,
            out_adj,
            in_adj,
        }
    }

    pub fn center(&self) -> Coord {
        self.center
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, Coord> {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn coord(&self, id: NodeId) -> Option<Coord> {
        self.nodes.get(&id).copied()
    }

    pub fn out_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.out_adj
            .get(&id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.edges[i])
    }

    pub fn in_edges(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.in_adj.get(&id).into_iter().flatten().map(move |&i| &self.edges[i])
    }

    /// Neighbors ignoring edge direction.
    pub fn undirected_neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.out_edges(id)
            .map(|e| e.dst)
            .chain(self.in_edges(id).map(|e| e.src))
    }

    /// Subgraph induced by `keep`: those nodes and every edge among them.
    pub fn induced(&self, keep: &std::collections::BTreeSet<NodeId>) -> RoadGraph {
        let nodes = self
            .nodes
            .iter()
            .filter(|(id, _)| keep.contains(id))
            .map(|(&id, &c)| (id, c))
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| keep.contains(&e.src) && keep.contains(&e.dst))
            .cloned()
            .collect();
        RoadGraph::with_center(self.center, nodes, edges)
    }

    /// Smallest id not yet used by a virtual node.
    pub fn next_virtual_id(&self) -> NodeId {
        self.nodes.keys().next().map_or(-1, |&min| min.min(0) - 1)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Graph from `(src, dst, travel_time_s)` triples; nodes laid out on a line.
    pub fn graph_from_times(edges: &[(NodeId, NodeId, f64)]) -> RoadGraph {
        let mut nodes = BTreeMap::new();
        for &(s, d, _) in edges {
            nodes.insert(s, Coord::new(40.0, -3.0 + s as f64 * 1e-3));
            nodes.insert(d, Coord::new(40.0, -3.0 + d as f64 * 1e-3));
        }
        let edges = edges
            .iter()
            .map(|&(s, d, t)| {
                let mut e = Edge::new(
                    s,
                    d,
                    t * 10.0,
                    36.0,
                    HighwayClass::Residential,
                    None,
                    None,
                    vec![nodes[&s], nodes[&d]],
                );
                e.travel_time_s = t;
                e
            })
            .collect();
        RoadGraph::new(nodes, edges)
    }
}

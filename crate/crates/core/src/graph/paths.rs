use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::{NodeId, RoadGraph};
use crate::error::{Error, Result};

/// Dense travel-time adjacency over a [`RoadGraph`].
///
/// Parallel edges collapse to the fastest one; node indices follow
/// ascending node id.
#[derive(Debug, Clone)]
pub struct Network {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl Network {
    pub fn from_graph(graph: &RoadGraph) -> Self {
        let ids: Vec<NodeId> = graph.nodes().keys().copied().collect();
        let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ids.len()];
        for e in graph.edges() {
            if e.src == e.dst {
                continue;
            }
            let (s, d) = (index[&e.src], index[&e.dst]);
            match adj[s].iter_mut().find(|(t, _)| *t == d) {
                Some(slot) => slot.1 = slot.1.min(e.travel_time_s),
                None => adj[s].push((d, e.travel_time_s)),
            }
        }
        for list in &mut adj {
            list.sort_by_key(|&(t, _)| t);
        }
        Network { ids, index, adj }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn successors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    /// Travel times from `src` to every node; `f64::INFINITY` when unreachable.
    pub fn distances_from(&self, src: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(State { cost: 0.0, node: src });
        while let Some(State { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(next, w) in &self.adj[node] {
                let alt = cost + w;
                if alt < dist[next] {
                    dist[next] = alt;
                    heap.push(State { cost: alt, node: next });
                }
            }
        }
        dist
    }
}

/// Min-heap entry; ties pop the lower node index first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct State {
    pub cost: f64,
    pub node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Free-flow travel time of the fastest directed path, `None` if unreachable.
pub fn shortest_travel_time(graph: &RoadGraph, src: NodeId, dst: NodeId) -> Result<Option<f64>> {
    let net = Network::from_graph(graph);
    let s = net
        .index_of(src)
        .ok_or_else(|| Error::argument(format!("unknown node {src}")))?;
    let d = net
        .index_of(dst)
        .ok_or_else(|| Error::argument(format!("unknown node {dst}")))?;
    let t = net.distances_from(s)[d];
    Ok(t.is_finite().then_some(t))
}

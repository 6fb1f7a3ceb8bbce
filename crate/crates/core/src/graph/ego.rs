use std::collections::{BTreeSet, VecDeque};

use super::{CentralNode, RoadGraph};
use crate::error::{Error, Result};

/// Subgraph induced by the nodes within `hops` undirected hops of a center.
#[derive(Debug, Clone)]
pub struct EgoGraph {
    pub graph: RoadGraph,
    pub center: CentralNode,
    pub hops: usize,
}

/// Extracts the ego-graph of `center` by breadth-first search over
/// undirected hop distance. Edges keep their original direction.
pub fn ego_graph(graph: &RoadGraph, center: &CentralNode, hops: usize) -> Result<EgoGraph> {
    if hops == 0 {
        return Err(Error::argument("ego-graph hop limit must be at least 1"));
    }
    if !graph.contains(center.node_id) {
        return Err(Error::argument(format!(
            "central node {} is not in the graph",
            center.node_id
        )));
    }
    let mut seen = BTreeSet::from([center.node_id]);
    let mut queue = VecDeque::from([(center.node_id, 0usize)]);
    while let Some((v, depth)) = queue.pop_front() {
        if depth == hops {
            continue;
        }
        for w in graph.undirected_neighbors(v) {
            if seen.insert(w) {
                queue.push_back((w, depth + 1));
            }
        }
    }
    Ok(EgoGraph {
        graph: graph.induced(&seen),
        center: center.clone(),
        hops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_support::graph_from_times;
    use crate::osm::HighwayClass;

    fn center(id: i64) -> CentralNode {
        CentralNode {
            node_id: id,
            sensor_id: "c".into(),
            coord: crate::geo::Coord::new(0.0, 0.0),
            host_edge_class: HighwayClass::Residential,
            host_edge_lanes: None,
            snap_distance_m: 0.0,
            reused_junction: true,
        }
    }

    #[test]
    fn one_hop_on_directed_path() {
        // c=1 -> a=2 -> b=3 -> d=4
        let g = graph_from_times(&[(1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)]);
        let ego = ego_graph(&g, &center(1), 1).unwrap();
        assert_eq!(ego.graph.nodes().keys().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(ego.graph.edge_count(), 1);
        assert_eq!((ego.graph.edges()[0].src, ego.graph.edges()[0].dst), (1, 2));
    }

    #[test]
    fn against_direction_counts() {
        let g = graph_from_times(&[(2, 1, 1.0), (3, 2, 1.0)]);
        let ego = ego_graph(&g, &center(1), 2).unwrap();
        assert_eq!(ego.graph.node_count(), 3);
    }

    #[test]
    fn zero_hops_rejected() {
        let g = graph_from_times(&[(1, 2, 1.0)]);
        assert!(matches!(ego_graph(&g, &center(1), 0), Err(Error::Argument(_))));
        assert!(matches!(ego_graph(&g, &center(9), 1), Err(Error::Argument(_))));
    }

    #[test]
    fn isolated_center() {
        let g = graph_from_times(&[(1, 2, 1.0)]);
        let mut nodes = g.nodes().clone();
        nodes.insert(5, crate::geo::Coord::new(1.0, 1.0));
        let g = RoadGraph::new(nodes, g.edges().to_vec());
        let ego = ego_graph(&g, &center(5), 3).unwrap();
        assert_eq!(ego.graph.node_count(), 1);
        assert_eq!(ego.graph.edge_count(), 0);
    }
}

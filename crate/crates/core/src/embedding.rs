//! Road feature embedding.
//!
//! Seven features characterise a road segment, computed around its central
//! node:
//!
//! | # | feature | source |
//! |---|---------|--------|
//! | 1 | betweenness of the central node | ego-graph |
//! | 2 | maximum betweenness of the other ego-graph nodes | ego-graph |
//! | 3 | median betweenness of the other ego-graph nodes | ego-graph |
//! | 4 | travel time to the nearest motorway | full graph |
//! | 5 | travel time to the nearest primary road | full graph |
//! | 6 | road type code in `[0, 1]` | host edge / override |
//! | 7 | number of lanes | override / tag / class default |
//!
//! Shortest paths everywhere are weighted by free-flow travel time.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::graph::{CentralNode, EgoGraph, Network, NodeId, RoadGraph};
use crate::osm::HighwayClass;
use crate::stats::median;

pub const FEATURES: usize = 7;

pub const FEATURE_NAMES: [&str; FEATURES] = [
    "spbc_central",
    "spbc_max_neighbors",
    "spbc_median_neighbors",
    "tt_motorway",
    "tt_primary",
    "road_type",
    "lanes",
];

/// Shortest-path betweenness over ordered pairs, unnormalized.
///
/// Brandes' accumulation with Dijkstra in place of BFS. Equal-cost paths
/// are detected by exact float equality of left-to-right path sums.
pub fn brandes(net: &Network) -> Vec<f64> {
    use std::collections::BinaryHeap;

    use crate::graph::State;

    let n = net.len();
    let mut centrality = vec![0.0; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0f64; n];
    let mut delta = vec![0.0f64; n];
    let mut settled = vec![false; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = Vec::with_capacity(n);

    for s in 0..n {
        dist.fill(f64::INFINITY);
        sigma.fill(0.0);
        delta.fill(0.0);
        settled.fill(false);
        preds.iter_mut().for_each(Vec::clear);
        stack.clear();

        dist[s] = 0.0;
        sigma[s] = 1.0;
        let mut heap = BinaryHeap::from([State { cost: 0.0, node: s }]);
        while let Some(State { cost, node: v }) = heap.pop() {
            if settled[v] || cost > dist[v] {
                continue;
            }
            settled[v] = true;
            stack.push(v);
            for &(w, weight) in net.successors(v) {
                let alt = dist[v] + weight;
                if alt < dist[w] {
                    dist[w] = alt;
                    sigma[w] = sigma[v];
                    preds[w].clear();
                    preds[w].push(v);
                    heap.push(State { cost: alt, node: w });
                } else if alt == dist[w] && !settled[w] {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            let coeff = (1.0 + delta[w]) / sigma[w];
            for &v in &preds[w] {
                delta[v] += sigma[v] * coeff;
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    centrality
}

/// Betweenness of every node of `graph`, keyed by node id.
pub fn graph_betweenness(graph: &RoadGraph) -> BTreeMap<NodeId, f64> {
    let net = Network::from_graph(graph);
    net.ids().iter().copied().zip(brandes(&net)).collect()
}

/// Betweenness of every ego-graph node.
pub fn betweenness(ego: &EgoGraph) -> BTreeMap<NodeId, f64> {
    graph_betweenness(&ego.graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralityFeatures {
    pub spbc_central: f64,
    pub spbc_max_neighbors: f64,
    pub spbc_median_neighbors: f64,
    /// Set when the ego-graph has no node besides the center.
    pub degenerate: bool,
}

pub fn centrality_features(ego: &EgoGraph) -> CentralityFeatures {
    centrality_from_scores(&betweenness(ego), ego.center.node_id)
}

/// Features 1-3 from precomputed betweenness scores.
///
/// "Neighbors" are all ego-graph nodes other than the center.
pub fn centrality_from_scores(scores: &BTreeMap<NodeId, f64>, center: NodeId) -> CentralityFeatures {
    let others: Vec<f64> = scores.iter().filter(|(&id, _)| id != center).map(|(_, &v)| v).collect();
    CentralityFeatures {
        spbc_central: scores.get(&center).copied().unwrap_or(0.0),
        spbc_max_neighbors: others.iter().copied().fold(0.0, f64::max),
        spbc_median_neighbors: median(&others).unwrap_or(0.0),
        degenerate: others.is_empty(),
    }
}

/// Fastest travel time from the central node to the nearer endpoint of any
/// edge of `class` (links count as their base class), over the full graph.
///
/// Zero when the center sits on such an edge; `None` when none is reachable.
pub fn travel_time_to_class(graph: &RoadGraph, center: &CentralNode, class: HighwayClass) -> Result<Option<f64>> {
    let target = class.base();
    if center.host_edge_class.base() == target {
        return Ok(Some(0.0));
    }
    let net = Network::from_graph(graph);
    let src = net
        .index_of(center.node_id)
        .ok_or_else(|| Error::argument(format!("central node {} is not in the graph", center.node_id)))?;
    let dist = net.distances_from(src);
    let best = graph
        .edges()
        .iter()
        .filter(|e| e.class.base() == target)
        .map(|e| {
            let d_src = dist[net.index_of(e.src).expect("edge node")];
            let d_dst = dist[net.index_of(e.dst).expect("edge node")];
            d_src.min(d_dst)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best.is_finite().then_some(best))
}

/// Road type on a uniform scale: residential 0 up to motorway 1.
pub fn road_type_code(class: HighwayClass) -> f64 {
    f64::from(class.rank()) / 4.0
}

/// Lane count assumed when neither override nor tag is available.
pub fn default_lanes(class: HighwayClass) -> u32 {
    match class.base() {
        HighwayClass::Motorway => 3,
        HighwayClass::Primary | HighwayClass::Secondary => 2,
        _ => 1,
    }
}

/// Manually verified road attributes for a sensor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub road_type: Option<HighwayClass>,
    pub lanes: Option<u32>,
}

/// The seven raw features of one segment, plus its pool-normalized form.
///
/// Unreachable travel-time features are stored as `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEmbedding {
    pub sensor_id: String,
    pub raw: [f64; FEATURES],
    pub normalized: Option<[f64; FEATURES]>,
    pub degenerate_centrality: bool,
}

impl RoadEmbedding {
    pub fn from_raw(sensor_id: impl Into<String>, raw: [f64; FEATURES]) -> Self {
        RoadEmbedding {
            sensor_id: sensor_id.into(),
            raw,
            normalized: None,
            degenerate_centrality: false,
        }
    }

    pub fn spbc_central(&self) -> f64 {
        self.raw[0]
    }
    pub fn spbc_max_neighbors(&self) -> f64 {
        self.raw[1]
    }
    pub fn spbc_median_neighbors(&self) -> f64 {
        self.raw[2]
    }
    pub fn tt_motorway(&self) -> Option<f64> {
        Some(self.raw[3]).filter(|t| t.is_finite())
    }
    pub fn tt_primary(&self) -> Option<f64> {
        Some(self.raw[4]).filter(|t| t.is_finite())
    }
    pub fn road_type(&self) -> f64 {
        self.raw[5]
    }
    pub fn lanes(&self) -> f64 {
        self.raw[6]
    }
}

/// Assembles the raw embedding of a central node.
pub fn build_embedding(
    graph: &RoadGraph,
    ego: &EgoGraph,
    center: &CentralNode,
    overrides: Overrides,
) -> Result<RoadEmbedding> {
    if ego.center.node_id != center.node_id {
        return Err(Error::argument("ego-graph was not extracted around this central node"));
    }
    let c = centrality_features(ego);
    let tt_motorway = travel_time_to_class(graph, center, HighwayClass::Motorway)?;
    let tt_primary = travel_time_to_class(graph, center, HighwayClass::Primary)?;
    let class = overrides.road_type.unwrap_or(center.host_edge_class);
    let lanes = overrides
        .lanes
        .or(center.host_edge_lanes)
        .unwrap_or_else(|| default_lanes(class));
    Ok(RoadEmbedding {
        sensor_id: center.sensor_id.clone(),
        raw: [
            c.spbc_central,
            c.spbc_max_neighbors,
            c.spbc_median_neighbors,
            tt_motorway.unwrap_or(f64::INFINITY),
            tt_primary.unwrap_or(f64::INFINITY),
            road_type_code(class),
            f64::from(lanes),
        ],
        normalized: None,
        degenerate_centrality: c.degenerate,
    })
}

/// Min-max scales every feature to `[0, 1]` across the pool.
///
/// Unreachable values map to 1.0 and do not take part in the extrema; a
/// feature with a single finite value across the pool maps to 0.0.
pub fn normalize_pool(embeddings: &[RoadEmbedding]) -> Result<Vec<RoadEmbedding>> {
    if embeddings.len() < 2 {
        return Err(Error::argument("normalization needs a pool of at least two embeddings"));
    }
    let mut out: Vec<RoadEmbedding> = embeddings.to_vec();
    for f in 0..FEATURES {
        let finite = embeddings.iter().map(|e| e.raw[f]).filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        for (e, src) in out.iter_mut().zip(embeddings) {
            let v = src.raw[f];
            let n = if !v.is_finite() {
                1.0
            } else if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            e.normalized.get_or_insert([0.0; FEATURES])[f] = n;
        }
    }
    Ok(out)
}

/// Writes `sensor_id,f1..f7,n1..n7`.
pub fn write_embeddings_csv<W: Write>(embeddings: &[RoadEmbedding], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sensor_id".to_string()];
    header.extend((1..=FEATURES).map(|i| format!("f{i}")));
    header.extend((1..=FEATURES).map(|i| format!("n{i}")));
    w.write_record(&header)?;
    for e in embeddings {
        let mut row = vec![e.sensor_id.clone()];
        row.extend(e.raw.iter().map(|&v| sig6(v)));
        match &e.normalized {
            Some(n) => row.extend(n.iter().map(|&v| sig6(v))),
            None => row.extend(std::iter::repeat_n(String::new(), FEATURES)),
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("embeddings.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Coord;
    use crate::graph::test_support::graph_from_times;
    use crate::graph::{ego_graph, RoadGraph};

    fn central(id: NodeId, class: HighwayClass) -> CentralNode {
        CentralNode {
            node_id: id,
            sensor_id: format!("S{id}"),
            coord: Coord::new(0.0, 0.0),
            host_edge_class: class,
            host_edge_lanes: None,
            snap_distance_m: 0.0,
            reused_junction: true,
        }
    }

    fn spbc(edges: &[(NodeId, NodeId, f64)]) -> BTreeMap<NodeId, f64> {
        graph_betweenness(&graph_from_times(edges))
    }

    #[test]
    fn directed_path() {
        let b = spbc(&[(1, 2, 1.0), (2, 3, 1.0)]);
        assert_eq!(b[&1], 0.0);
        assert_eq!(b[&2], 1.0);
        assert_eq!(b[&3], 0.0);
    }

    #[test]
    fn bidirectional_star() {
        let b = spbc(&[
            (0, 1, 1.0),
            (1, 0, 1.0),
            (0, 2, 1.0),
            (2, 0, 1.0),
            (0, 3, 1.0),
            (3, 0, 1.0),
        ]);
        assert_eq!(b[&0], 6.0);
        assert_eq!(b[&1], 0.0);
    }

    #[test]
    fn equal_parallel_paths_split_credit() {
        // a=1 -> b=2 -> c=3 and a=1 -> d=4 -> c=3
        let b = spbc(&[(1, 2, 1.0), (2, 3, 2.0), (1, 4, 2.0), (4, 3, 1.0)]);
        assert_eq!(b[&2], 0.5);
        assert_eq!(b[&4], 0.5);
    }

    #[test]
    fn travel_time_not_hops() {
        // the two-hop route is faster than the direct edge
        let b = spbc(&[(1, 2, 1.0), (2, 3, 1.0), (1, 3, 5.0)]);
        assert_eq!(b[&2], 1.0);
    }

    #[test]
    fn path_ego_features() {
        let g = graph_from_times(&[(1, 2, 1.0), (2, 3, 1.0)]);
        let ego = ego_graph(&g, &central(2, HighwayClass::Residential), 5).unwrap();
        let f = centrality_features(&ego);
        assert_eq!(
            (f.spbc_central, f.spbc_max_neighbors, f.spbc_median_neighbors),
            (1.0, 0.0, 0.0)
        );
        assert!(!f.degenerate);
    }

    #[test]
    fn neighbor_multiset_max_and_median() {
        let scores = BTreeMap::from([(0, 7.0), (1, 0.0), (2, 2.0), (3, 4.0), (4, 10.0)]);
        let f = centrality_from_scores(&scores, 0);
        assert_eq!(f.spbc_central, 7.0);
        assert_eq!(f.spbc_max_neighbors, 10.0);
        assert_eq!(f.spbc_median_neighbors, 3.0);
    }

    #[test]
    fn single_node_ego_is_degenerate() {
        let scores = BTreeMap::from([(5, 0.0)]);
        let f = centrality_from_scores(&scores, 5);
        assert!(f.degenerate);
        assert_eq!(
            (f.spbc_central, f.spbc_max_neighbors, f.spbc_median_neighbors),
            (0.0, 0.0, 0.0)
        );
    }

    fn with_classes(edges: &[(NodeId, NodeId, f64, HighwayClass)]) -> RoadGraph {
        let g = graph_from_times(&edges.iter().map(|&(s, d, t, _)| (s, d, t)).collect::<Vec<_>>());
        let mut es = g.edges().to_vec();
        for (e, &(_, _, _, c)) in es.iter_mut().zip(edges) {
            e.class = c;
        }
        RoadGraph::new(g.nodes().clone(), es)
    }

    #[test]
    fn travel_time_to_motorway() {
        use HighwayClass::*;
        let g = with_classes(&[
            (1, 2, 120.0, Residential),
            (2, 3, 60.0, Residential),
            (3, 4, 30.0, Motorway),
        ]);
        let c = central(1, Residential);
        assert_eq!(travel_time_to_class(&g, &c, Motorway).unwrap(), Some(180.0));
        assert_eq!(travel_time_to_class(&g, &c, Primary).unwrap(), None);
        let on_primary = central(1, PrimaryLink);
        assert_eq!(travel_time_to_class(&g, &on_primary, Primary).unwrap(), Some(0.0));
    }

    #[test]
    fn link_edges_count_as_base_class() {
        use HighwayClass::*;
        let g = with_classes(&[
            (1, 2, 10.0, Residential),
            (2, 3, 5.0, MotorwayLink),
            (3, 4, 5.0, Motorway),
        ]);
        assert_eq!(
            travel_time_to_class(&g, &central(1, Residential), Motorway).unwrap(),
            Some(10.0)
        );
    }

    #[test]
    fn road_type_codes() {
        assert_eq!(road_type_code(HighwayClass::Residential), 0.0);
        assert_eq!(road_type_code(HighwayClass::Tertiary), 0.25);
        assert_eq!(road_type_code(HighwayClass::Secondary), 0.5);
        assert_eq!(road_type_code(HighwayClass::Primary), 0.75);
        assert_eq!(road_type_code(HighwayClass::Motorway), 1.0);
        assert_eq!(road_type_code(HighwayClass::SecondaryLink), 0.5);
    }

    #[test]
    fn assembly_and_overrides() {
        use HighwayClass::*;
        let g = with_classes(&[(1, 2, 10.0, Secondary), (2, 1, 10.0, Secondary)]);
        let mut c = central(1, Secondary);
        c.host_edge_lanes = Some(2);
        let ego = ego_graph(&g, &c, 5).unwrap();
        let e = build_embedding(&g, &ego, &c, Overrides::default()).unwrap();
        assert_eq!(e.road_type(), 0.5);
        assert_eq!(e.lanes(), 2.0);
        assert_eq!(e.tt_motorway(), None);

        c.host_edge_lanes = Some(1);
        let e = build_embedding(
            &g,
            &ego,
            &c,
            Overrides {
                road_type: None,
                lanes: Some(3),
            },
        )
        .unwrap();
        assert_eq!(e.lanes(), 3.0);

        c.host_edge_lanes = None;
        let e = build_embedding(
            &g,
            &ego,
            &c,
            Overrides {
                road_type: Some(Primary),
                lanes: None,
            },
        )
        .unwrap();
        assert_eq!(e.road_type(), 0.75);
        assert_eq!(e.lanes(), 2.0);
    }

    fn pool(values: &[[f64; FEATURES]]) -> Vec<RoadEmbedding> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| RoadEmbedding::from_raw(format!("S{i}"), *v))
            .collect()
    }

    #[test]
    fn min_max_lanes_and_constant_feature() {
        let p = pool(&[
            [0.0, 0.0, 0.0, 1.0, 1.0, 0.5, 1.0],
            [0.0, 0.0, 0.0, 2.0, 1.0, 0.5, 2.0],
            [0.0, 0.0, 0.0, 3.0, 1.0, 0.5, 3.0],
        ]);
        let n = normalize_pool(&p).unwrap();
        let lanes: Vec<f64> = n.iter().map(|e| e.normalized.unwrap()[6]).collect();
        assert_eq!(lanes, vec![0.0, 0.5, 1.0]);
        assert!(n.iter().all(|e| e.normalized.unwrap()[5] == 0.0));
    }

    #[test]
    fn unreachable_maps_to_one() {
        let inf = f64::INFINITY;
        let p = pool(&[
            [0.0, 0.0, 0.0, inf, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, inf, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 300.0, 0.0, 0.0, 1.0],
        ]);
        let n = normalize_pool(&p).unwrap();
        let f4: Vec<f64> = n.iter().map(|e| e.normalized.unwrap()[3]).collect();
        assert_eq!(f4, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn pool_of_one_rejected() {
        assert!(normalize_pool(&pool(&[[0.0; FEATURES]])).is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::{Edge, NodeId, RoadGraph};
use crate::error::{Error, Result};
use crate::geo::{haversine_m, project_onto_segment, Coord, LocalProjection};
use crate::osm::HighwayClass;

/// Feet of perpendicular closer than this to a junction reuse the junction.
pub const JUNCTION_REUSE_M: f64 = 0.5;

/// The graph node standing in for a sensor (or a target location).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralNode {
    pub node_id: NodeId,
    pub sensor_id: String,
    pub coord: Coord,
    pub host_edge_class: HighwayClass,
    pub host_edge_lanes: Option<u32>,
    /// Distance from the sensor to the host edge.
    pub snap_distance_m: f64,
    /// True when an existing junction was reused instead of splitting.
    pub reused_junction: bool,
}

struct Snap {
    edge: usize,
    segment: usize,
    t: f64,
    distance: f64,
}

fn nearest_edge(graph: &RoadGraph, proj: &LocalProjection, p: [f64; 2]) -> Option<Snap> {
    let mut order: Vec<usize> = (0..graph.edges.len()).collect();
    order.sort_by_key(|&i| (graph.edges[i].src, graph.edges[i].dst, i));

    let mut best: Option<Snap> = None;
    for i in order {
        let pts: Vec<[f64; 2]> = graph.edges[i].geometry.iter().map(|&c| proj.project(c)).collect();
        for (k, w) in pts.windows(2).enumerate() {
            let (t, d) = project_onto_segment(p, w[0], w[1]);
            if best.as_ref().is_none_or(|b| d < b.distance) {
                best = Some(Snap {
                    edge: i,
                    segment: k,
                    t,
                    distance: d,
                });
            }
        }
    }
    best
}

/// Splits `edge` at `frac` of its length through `mid`.
///
/// The first child keeps `frac` of the length and travel time; the second
/// child gets the remainder so both quantities are conserved.
fn split_edge(edge: &Edge, mid: NodeId, mid_coord: Coord, segment: usize, frac: f64) -> (Edge, Edge) {
    let mut head_geom = edge.geometry[..=segment].to_vec();
    head_geom.push(mid_coord);
    let mut tail_geom = vec![mid_coord];
    tail_geom.extend_from_slice(&edge.geometry[segment + 1..]);

    let head_len = edge.length_m * frac;
    let head_tt = edge.travel_time_s * frac;
    let head = Edge {
        dst: mid,
        length_m: head_len,
        travel_time_s: head_tt,
        geometry: head_geom,
        ..edge.clone()
    };
    let tail = Edge {
        src: mid,
        length_m: edge.length_m - head_len,
        travel_time_s: edge.travel_time_s - head_tt,
        geometry: tail_geom,
        ..edge.clone()
    };
    (head, tail)
}

/// Inserts a central node for a sensor on its nearest edge.
///
/// The nearest edge is found by point-to-polyline distance in a local
/// projection around the graph center; exact ties go to the lowest
/// `(src, dst)` key. The edge (and its opposite carriageway, for two-way
/// roads) is split through a new node at the foot of the perpendicular,
/// unless the foot is within [`JUNCTION_REUSE_M`] of an endpoint, in which
/// case that endpoint becomes the central node.
pub fn insert_central_node(
    graph: &RoadGraph,
    sensor_id: &str,
    sensor: Coord,
    snap_threshold_m: f64,
) -> Result<(RoadGraph, CentralNode)> {
    if graph.edges.is_empty() {
        return Err(Error::argument("cannot insert a central node into an empty graph"));
    }
    let proj = LocalProjection::new(graph.center);
    let p = proj.project(sensor);
    let snap = nearest_edge(graph, &proj, p).expect("non-empty graph has an edge");
    if snap.distance > snap_threshold_m {
        return Err(Error::Snap {
            sensor_id: sensor_id.to_string(),
            distance_m: snap.distance,
            threshold_m: snap_threshold_m,
        });
    }

    let host = &graph.edges[snap.edge];
    let pts: Vec<[f64; 2]> = host.geometry.iter().map(|&c| proj.project(c)).collect();
    let seg_len = |w: &[[f64; 2]]| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
    let total: f64 = pts.windows(2).map(seg_len).sum();
    let before: f64 = pts[..=snap.segment].windows(2).map(seg_len).sum::<f64>()
        + snap.t * seg_len(&pts[snap.segment..snap.segment + 2]);
    let frac = if total > 0.0 { before / total } else { 0.0 };
    let (a, b) = (pts[snap.segment], pts[snap.segment + 1]);
    let foot = proj.unproject([a[0] + snap.t * (b[0] - a[0]), a[1] + snap.t * (b[1] - a[1])]);

    let central = |node_id: NodeId, coord: Coord, reused: bool| CentralNode {
        node_id,
        sensor_id: sensor_id.to_string(),
        coord,
        host_edge_class: host.class,
        host_edge_lanes: host.lanes,
        snap_distance_m: snap.distance,
        reused_junction: reused,
    };

    let src_coord = graph.nodes[&host.src];
    let dst_coord = graph.nodes[&host.dst];
    let (d_src, d_dst) = (haversine_m(foot, src_coord), haversine_m(foot, dst_coord));
    if d_src.min(d_dst) < JUNCTION_REUSE_M {
        let (id, coord) = if d_src <= d_dst {
            (host.src, src_coord)
        } else {
            (host.dst, dst_coord)
        };
        return Ok((graph.clone(), central(id, coord, true)));
    }

    let mid = graph.next_virtual_id();
    let reverse = graph.edges.iter().position(|e| e.is_reverse_of(host));

    let mut edges = Vec::with_capacity(graph.edges.len() + 2);
    for (i, e) in graph.edges.iter().enumerate() {
        if i == snap.edge {
            let (head, tail) = split_edge(e, mid, foot, snap.segment, frac);
            edges.push(head);
            edges.push(tail);
        } else if Some(i) == reverse {
            // the reverse polyline meets the foot in mirrored segment order
            let segment = e.geometry.len() - 2 - snap.segment;
            let (head, tail) = split_edge(e, mid, foot, segment, 1.0 - frac);
            edges.push(head);
            edges.push(tail);
        } else {
            edges.push(e.clone());
        }
    }
    let mut nodes = graph.nodes.clone();
    nodes.insert(mid, foot);
    let split = RoadGraph::with_center(graph.center, nodes, edges);
    Ok((split, central(mid, foot, false)))
}

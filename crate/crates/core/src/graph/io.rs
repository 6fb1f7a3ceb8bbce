//! Graph serialization: `nodes.csv`, `edges.csv` and a JSON manifest.
//!
//! Floats are written in shortest round-trip form so that reading a graph
//! back reproduces its attributes exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Edge, NodeId, RoadGraph};
use crate::error::{Error, Result};
use crate::geo::Coord;
use crate::osm::HighwayClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphManifest {
    pub center: Coord,
    pub radius_m: f64,
    pub node_count: usize,
    pub edge_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    node_id: NodeId,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    src: NodeId,
    dst: NodeId,
    length_m: f64,
    speed_kph: f64,
    travel_time_s: f64,
    highway_class: HighwayClass,
    lanes: Option<u32>,
}

pub fn write_nodes_csv<W: Write>(graph: &RoadGraph, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (&node_id, c) in graph.nodes() {
        w.serialize(NodeRow {
            node_id,
            lat: c.lat,
            lon: c.lon,
        })?;
    }
    w.flush().map_err(|e| Error::io("nodes.csv", e))?;
    Ok(())
}

pub fn write_edges_csv<W: Write>(graph: &RoadGraph, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in graph.edges() {
        w.serialize(EdgeRow {
            src: e.src,
            dst: e.dst,
            length_m: e.length_m,
            speed_kph: e.speed_kph,
            travel_time_s: e.travel_time_s,
            highway_class: e.class,
            lanes: e.lanes,
        })?;
    }
    w.flush().map_err(|e| Error::io("edges.csv", e))?;
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input)
}

/// Reads a graph written by [`write_nodes_csv`] and [`write_edges_csv`].
///
/// Edge geometry is not serialized; loaded edges are straight lines.
pub fn read_graph_csv<R1: Read, R2: Read>(nodes: R1, edges: R2, center: Option<Coord>) -> Result<RoadGraph> {
    let mut node_map = BTreeMap::new();
    for (i, row) in reader(nodes).deserialize::<NodeRow>().enumerate() {
        let row = row?;
        if node_map.insert(row.node_id, Coord::new(row.lat, row.lon)).is_some() {
            return Err(Error::Format {
                row: i + 2,
                message: format!("duplicate node {}", row.node_id),
            });
        }
    }
    let mut edge_list = Vec::new();
    for (i, row) in reader(edges).deserialize::<EdgeRow>().enumerate() {
        let row = row?;
        let (Some(&a), Some(&b)) = (node_map.get(&row.src), node_map.get(&row.dst)) else {
            return Err(Error::Format {
                row: i + 2,
                message: format!("edge {}->{} references an unknown node", row.src, row.dst),
            });
        };
        edge_list.push(Edge {
            src: row.src,
            dst: row.dst,
            length_m: row.length_m,
            speed_kph: row.speed_kph,
            travel_time_s: row.travel_time_s,
            class: row.highway_class,
            lanes: row.lanes,
            way_id: None,
            geometry: vec![a, b],
        });
    }
    Ok(match center {
        Some(c) => RoadGraph::with_center(c, node_map, edge_list),
        None => RoadGraph::new(node_map, edge_list),
    })
}

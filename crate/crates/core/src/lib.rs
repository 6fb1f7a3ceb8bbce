//! Sensorless estimation of daily road traffic profiles.
//!
//! A road segment without a traffic sensor is characterised by a seven-feature
//! road embedding computed from the surrounding road network (shortest-path
//! betweenness in an ego-graph, travel time to the nearest motorway and
//! primary road, road type and lane count). The sensed segment whose embedding
//! is closest is selected, and daily traffic for the target is synthesised
//! from that segment's history.
//!
//! The crate is organised bottom-up:
//!
//! - [`osm`]: OpenStreetMap XML ingestion and graph construction.
//! - [`graph`]: the road graph model, central-node insertion, ego-graphs and
//!   travel-time shortest paths.
//! - [`embedding`]: betweenness centrality and the road feature embedding.
//! - [`selection`]: embedding and geographic nearest-segment selection.
//! - [`traffic`]: traffic series ingestion, cleaning and weekday profiles.
//! - [`generation`]: calendar day classes, the cluster RTP generator and NSE.
//! - [`evaluation`]: RMSE scoring, leave-one-out benchmarks, Friedman and
//!   Nemenyi tests.
//! - [`pipeline`]: file-based orchestration used by the `roadtwin` binary.

pub mod calendar;
pub mod config;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod fmt;
pub mod generation;
pub mod geo;
pub mod graph;
pub mod osm;
pub mod pipeline;
pub mod plot;
pub mod selection;
pub mod stats;
pub mod traffic;

pub use error::{Error, ErrorKind, Result};

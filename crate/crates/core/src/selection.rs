//! Choosing the sensed segment that stands in for a target.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embedding::{RoadEmbedding, FEATURES};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::geo::{haversine_m, Coord};

/// Distance between normalized embeddings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    L2,
    L1,
}

impl DistanceMetric {
    pub fn distance(self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != v.len() {
            return Err(Error::argument(format!(
                "dimension mismatch: {} vs {}",
                u.len(),
                v.len()
            )));
        }
        let pairs = u.iter().zip(v);
        Ok(match self {
            DistanceMetric::L2 => pairs.map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
            DistanceMetric::L1 => pairs.map(|(a, b)| (a - b).abs()).sum(),
        })
    }

    /// Largest possible distance between two points of the unit cube.
    pub fn max_distance(self, dims: usize) -> f64 {
        match self {
            DistanceMetric::L2 => (dims as f64).sqrt(),
            DistanceMetric::L1 => dims as f64,
        }
    }

    pub fn similarity_percent(self, d: f64, dims: usize) -> Result<f64> {
        let max = self.max_distance(dims);
        if !(0.0..=max * (1.0 + 1e-12)).contains(&d) || dims == 0 {
            return Err(Error::argument(format!("distance {d} outside [0, {max}]")));
        }
        Ok((100.0 * (1.0 - d / max)).clamp(0.0, 100.0))
    }
}

/// Euclidean distance between two embedding vectors.
pub fn embedding_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    DistanceMetric::L2.distance(u, v)
}

/// `100 * (1 - d / sqrt(dims))`.
pub fn similarity_percent(d: f64, dims: usize) -> Result<f64> {
    DistanceMetric::L2.similarity_percent(d, dims)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Embedding,
    Geographic,
}

impl SelectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::Embedding => "embedding",
            SelectionMethod::Geographic => "geographic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub sensor_id: String,
    /// Embedding distance, or meters for geographic selection.
    pub distance: f64,
    pub similarity_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub target_id: String,
    pub selected_id: String,
    pub distance: f64,
    pub similarity_pct: Option<f64>,
    pub method: SelectionMethod,
    pub ranking: Vec<RankedCandidate>,
}

fn ranked(mut ranking: Vec<RankedCandidate>) -> Vec<RankedCandidate> {
    ranking.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.sensor_id.cmp(&b.sensor_id))
    });
    ranking
}

fn normalized(e: &RoadEmbedding) -> Result<&[f64; FEATURES]> {
    e.normalized
        .as_ref()
        .ok_or_else(|| Error::argument(format!("embedding {} is not normalized", e.sensor_id)))
}

/// Picks the pool entry closest to `target` in embedding space.
///
/// Exact ties go to the lowest sensor id. `target` must not appear in the
/// pool under its own id.
pub fn select_by_embedding(
    target: &RoadEmbedding,
    pool: &[RoadEmbedding],
    metric: DistanceMetric,
) -> Result<SelectionResult> {
    if pool.is_empty() {
        return Err(Error::argument("selection pool is empty"));
    }
    if pool.iter().any(|p| p.sensor_id == target.sensor_id) {
        return Err(Error::argument(format!(
            "target {} is part of its own selection pool",
            target.sensor_id
        )));
    }
    let t = normalized(target)?;
    let ranking = pool
        .iter()
        .map(|p| {
            let d = metric.distance(t, normalized(p)?)?;
            Ok(RankedCandidate {
                sensor_id: p.sensor_id.clone(),
                distance: d,
                similarity_pct: Some(metric.similarity_percent(d, FEATURES)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ranking = ranked(ranking);
    let best = &ranking[0];
    Ok(SelectionResult {
        target_id: target.sensor_id.clone(),
        selected_id: best.sensor_id.clone(),
        distance: best.distance,
        similarity_pct: best.similarity_pct,
        method: SelectionMethod::Embedding,
        ranking,
    })
}

/// Picks the pool entry with the smallest great-circle distance.
pub fn select_by_geography(target_id: &str, target: Coord, pool: &[(String, Coord)]) -> Result<SelectionResult> {
    if pool.is_empty() {
        return Err(Error::argument("selection pool is empty"));
    }
    let ranking = ranked(
        pool.iter()
            .map(|(id, c)| RankedCandidate {
                sensor_id: id.clone(),
                distance: haversine_m(target, *c),
                similarity_pct: None,
            })
            .collect(),
    );
    let best = &ranking[0];
    Ok(SelectionResult {
        target_id: target_id.to_string(),
        selected_id: best.sensor_id.clone(),
        distance: best.distance,
        similarity_pct: None,
        method: SelectionMethod::Geographic,
        ranking,
    })
}

/// Writes `target_id,rank,sensor_id,distance,similarity_pct,method`.
pub fn write_ranking_csv<W: Write>(results: &[SelectionResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target_id", "rank", "sensor_id", "distance", "similarity_pct", "method"])?;
    for r in results {
        for (i, c) in r.ranking.iter().enumerate() {
            w.write_record([
                r.target_id.clone(),
                (i + 1).to_string(),
                c.sensor_id.clone(),
                sig6(c.distance),
                c.similarity_pct.map(sig6).unwrap_or_default(),
                r.method.as_str().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("ranking.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(id: &str, n: [f64; FEATURES]) -> RoadEmbedding {
        RoadEmbedding {
            sensor_id: id.into(),
            raw: n,
            normalized: Some(n),
            degenerate_centrality: false,
        }
    }

    #[test]
    fn distance_examples() {
        let zero = [0.0; FEATURES];
        let one = [1.0; FEATURES];
        assert_eq!(embedding_distance(&zero, &zero).unwrap(), 0.0);
        assert!((embedding_distance(&zero, &one).unwrap() - 7f64.sqrt()).abs() < 1e-12);
        let mut axis = zero;
        axis[0] = 1.0;
        assert_eq!(embedding_distance(&axis, &zero).unwrap(), 1.0);
        assert!(embedding_distance(&[0.0; 3], &[0.0; 4]).is_err());
        assert_eq!(DistanceMetric::L1.distance(&zero, &one).unwrap(), 7.0);
    }

    #[test]
    fn similarity_examples() {
        let r7 = 7f64.sqrt();
        assert_eq!(similarity_percent(0.0, 7).unwrap(), 100.0);
        assert_eq!(similarity_percent(r7, 7).unwrap(), 0.0);
        assert!((similarity_percent(r7 / 2.0, 7).unwrap() - 50.0).abs() < 1e-12);
        assert!(similarity_percent(3.0, 7).is_err());
        assert!(similarity_percent(-0.1, 7).is_err());
    }

    #[test]
    fn argmin_and_ties() {
        let t = emb("T", [0.0; FEATURES]);
        let mut a = [0.0; FEATURES];
        a[0] = 0.3;
        let mut b = [0.0; FEATURES];
        b[0] = 0.7;
        let r = select_by_embedding(&t, &[emb("B", b), emb("A", a)], DistanceMetric::L2).unwrap();
        assert_eq!(r.selected_id, "A");
        assert_eq!(r.ranking[1].sensor_id, "B");

        let r = select_by_embedding(&t, &[emb("Z", a), emb("Y", a)], DistanceMetric::L2).unwrap();
        assert_eq!(r.selected_id, "Y");

        let r = select_by_embedding(&t, &[emb("Q", b)], DistanceMetric::L2).unwrap();
        assert_eq!(r.selected_id, "Q");
    }

    #[test]
    fn self_selection_guard() {
        let t = emb("T", [0.0; FEATURES]);
        assert!(select_by_embedding(&t, &[emb("T", [0.0; FEATURES])], DistanceMetric::L2).is_err());
        assert!(select_by_embedding(&t, &[], DistanceMetric::L2).is_err());
    }

    #[test]
    fn geographic_nearest() {
        let target = Coord::new(40.0, -3.0);
        let m = 1.0 / 111_195.0;
        let pool = vec![
            ("far".to_string(), Coord::new(40.0 + 500.0 * m, -3.0)),
            ("near".to_string(), Coord::new(40.0 + 100.0 * m, -3.0)),
        ];
        let r = select_by_geography("t", target, &pool).unwrap();
        assert_eq!(r.selected_id, "near");
        assert!((r.distance - 100.0).abs() < 0.1);

        let same = vec![("s".to_string(), target)];
        assert_eq!(select_by_geography("t", target, &same).unwrap().distance, 0.0);
    }
}

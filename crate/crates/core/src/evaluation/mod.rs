//! Scoring selections and generated days.

mod ranking;

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use ranking::{
    critical_difference, friedman_test, nemenyi_posthoc, nemenyi_q, FriedmanResult, NemenyiResult, PairComparison,
    PairVerdict,
};

use crate::calendar::HolidayCalendar;
use crate::embedding::RoadEmbedding;
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::generation::{Fallback, Generator};
use crate::geo::Coord;
use crate::selection::{select_by_embedding, select_by_geography, DistanceMetric};
use crate::stats::{mean, sample_std};
use crate::traffic::{slice_day, CleaningStats, TrafficProfile, TrafficSeries};

/// Root mean squared error between equal-length vectors.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::argument(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            y.len(),
            yhat.len()
        )));
    }
    let ss: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// RMSE divided by the target's mean weekday flow.
pub fn nrmse(rmse_value: f64, mean_flow: f64) -> Result<f64> {
    if mean_flow.is_nan() || mean_flow <= 0.0 {
        return Err(Error::domain(format!("mean flow must be positive, got {mean_flow}")));
    }
    Ok(rmse_value / mean_flow)
}

/// A sensed segment as seen by the leave-one-out selection benchmark.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub embedding: RoadEmbedding,
    pub coord: Coord,
    pub profile: TrafficProfile,
    pub mean_weekday_flow: f64,
}

impl Candidate {
    pub fn id(&self) -> &str {
        &self.embedding.sensor_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Embedding,
    Geographic,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub target_id: String,
    pub embedding_selected: String,
    pub embedding_distance: f64,
    pub similarity_pct: Option<f64>,
    pub embedding_rmse: f64,
    pub geographic_selected: String,
    pub geographic_distance_m: f64,
    pub geographic_rmse: f64,
    /// Candidate whose profile is closest to the target's.
    pub best_selected: String,
    pub best_rmse: f64,
    pub mean_weekday_flow: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionTally {
    pub embedding_wins: usize,
    pub geographic_wins: usize,
    pub ties: usize,
}

impl SelectionTally {
    pub fn total(&self) -> usize {
        self.embedding_wins + self.geographic_wins + self.ties
    }
}

/// Profile RMSE between two candidates' weekday profiles.
fn profile_rmse(a: &Candidate, b: &Candidate) -> Result<f64> {
    rmse(&a.profile.values, &b.profile.values)
}

/// Leave-one-out selection for one target against every other candidate.
pub fn evaluate_selection(pool: &[Candidate], target: usize, metric: DistanceMetric) -> Result<SelectionOutcome> {
    let t = &pool[target];
    let others: Vec<&Candidate> = pool
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, c)| c)
        .collect();
    let embeddings: Vec<RoadEmbedding> = others.iter().map(|c| c.embedding.clone()).collect();
    let by_embedding = select_by_embedding(&t.embedding, &embeddings, metric)?;
    let coords: Vec<(String, Coord)> = others.iter().map(|c| (c.id().to_string(), c.coord)).collect();
    let by_geography = select_by_geography(t.id(), t.coord, &coords)?;

    let find = |id: &str| {
        others
            .iter()
            .find(|c| c.id() == id)
            .copied()
            .expect("selected from pool")
    };
    let embedding_rmse = profile_rmse(t, find(&by_embedding.selected_id))?;
    let geographic_rmse = profile_rmse(t, find(&by_geography.selected_id))?;

    let mut best: Option<(f64, &str)> = None;
    for c in &others {
        let r = profile_rmse(t, c)?;
        if best.is_none_or(|(b, id)| r < b || (r == b && c.id() < id)) {
            best = Some((r, c.id()));
        }
    }
    let (best_rmse, best_id) = best.expect("pool has other candidates");

    let verdict = if by_embedding.selected_id == by_geography.selected_id || embedding_rmse == geographic_rmse {
        Verdict::Tie
    } else if embedding_rmse < geographic_rmse {
        Verdict::Embedding
    } else {
        Verdict::Geographic
    };
    Ok(SelectionOutcome {
        target_id: t.id().to_string(),
        embedding_selected: by_embedding.selected_id,
        embedding_distance: by_embedding.distance,
        similarity_pct: by_embedding.similarity_pct,
        embedding_rmse,
        geographic_selected: by_geography.selected_id,
        geographic_distance_m: by_geography.distance,
        geographic_rmse,
        best_selected: best_id.to_string(),
        best_rmse,
        mean_weekday_flow: t.mean_weekday_flow,
        verdict,
    })
}

/// Leave-one-out over the whole pool, in pool order.
pub fn selection_benchmark(
    pool: &[Candidate],
    metric: DistanceMetric,
) -> Result<(Vec<SelectionOutcome>, SelectionTally)> {
    if pool.len() < 3 {
        return Err(Error::argument(format!(
            "selection benchmark needs at least 3 segments, got {}",
            pool.len()
        )));
    }
    let outcomes = (0..pool.len())
        .map(|i| evaluate_selection(pool, i, metric))
        .collect::<Result<Vec<_>>>()?;
    Ok((outcomes.clone(), tally(&outcomes)))
}

pub fn tally(outcomes: &[SelectionOutcome]) -> SelectionTally {
    let mut t = SelectionTally::default();
    for o in outcomes {
        match o.verdict {
            Verdict::Embedding => t.embedding_wins += 1,
            Verdict::Geographic => t.geographic_wins += 1,
            Verdict::Tie => t.ties += 1,
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayErrors {
    pub date: NaiveDate,
    /// One cell per method; `None` when the method could not generate the day.
    pub rmse: Vec<Option<f64>>,
    pub nrmse: Vec<Option<f64>>,
    pub fallback: Vec<Fallback>,
}

impl DayErrors {
    pub fn is_complete(&self) -> bool {
        self.nrmse.iter().all(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_nrmse: f64,
    pub std_nrmse: f64,
    pub days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationBenchmark {
    pub target_id: String,
    pub methods: Vec<String>,
    pub mean_weekday_flow: f64,
    pub days: Vec<DayErrors>,
    /// Days dropped because at least one method had no output.
    pub excluded_days: usize,
    pub summary: Vec<MethodSummary>,
}

impl GenerationBenchmark {
    /// Summarizes per-day errors; cells must line up with `methods`.
    pub fn from_days(target_id: String, methods: Vec<String>, mean_weekday_flow: f64, days: Vec<DayErrors>) -> Self {
        let complete: Vec<&DayErrors> = days.iter().filter(|d| d.is_complete()).collect();
        let summary = methods
            .iter()
            .enumerate()
            .map(|(m, name)| {
                let vals: Vec<f64> = complete.iter().map(|d| d.nrmse[m].expect("complete row")).collect();
                MethodSummary {
                    method: name.clone(),
                    mean_nrmse: mean(&vals).unwrap_or(f64::NAN),
                    std_nrmse: sample_std(&vals),
                    days: vals.len(),
                }
            })
            .collect();
        let excluded_days = days.len() - complete.len();
        GenerationBenchmark {
            target_id,
            methods,
            mean_weekday_flow,
            days,
            excluded_days,
            summary,
        }
    }

    /// nRMSE matrix over the days every method could generate.
    pub fn complete_matrix(&self) -> Vec<Vec<f64>> {
        self.days
            .iter()
            .filter(|d| d.is_complete())
            .map(|d| d.nrmse.iter().map(|v| v.expect("complete row")).collect())
            .collect()
    }
}

/// Scores every generator on every complete day of the target series.
///
/// Days a generator cannot produce (NSE without source data) are absent
/// cells; summaries use only the days complete across all methods.
pub fn generation_benchmark(
    target: &TrafficSeries,
    generators: &[&dyn Generator],
    holidays: &HolidayCalendar,
    mean_weekday_flow: f64,
) -> Result<GenerationBenchmark> {
    if generators.is_empty() {
        return Err(Error::argument("no generators to benchmark"));
    }
    let mut days = Vec::new();
    for date in target.dates() {
        let Ok(truth) = slice_day(target, date) else {
            continue;
        };
        let mut row = DayErrors {
            date,
            rmse: Vec::with_capacity(generators.len()),
            nrmse: Vec::with_capacity(generators.len()),
            fallback: Vec::with_capacity(generators.len()),
        };
        for g in generators {
            match g.generate(date, holidays) {
                Ok(day) => {
                    let r = rmse(&truth, &day.flows)?;
                    row.rmse.push(Some(r));
                    row.nrmse.push(Some(nrmse(r, mean_weekday_flow)?));
                    row.fallback.push(day.fallback);
                }
                Err(Error::Unavailable { .. }) => {
                    row.rmse.push(None);
                    row.nrmse.push(None);
                    row.fallback.push(Fallback::None);
                }
                Err(e) => return Err(e),
            }
        }
        days.push(row);
    }
    let methods = generators.iter().map(|g| g.name().to_string()).collect();
    Ok(GenerationBenchmark::from_days(
        target.sensor_id.clone(),
        methods,
        mean_weekday_flow,
        days,
    ))
}

/// Per-target generation results with their statistical verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub source_id: String,
    pub benchmark: GenerationBenchmark,
    pub statistics: Option<NemenyiResult>,
    pub best_methods: Vec<String>,
}

impl GenerationReport {
    /// Ranks the methods; too few complete days leaves every method tied.
    pub fn new(source_id: String, benchmark: GenerationBenchmark, alpha: f64, q: Option<f64>) -> Result<Self> {
        let matrix = benchmark.complete_matrix();
        let statistics = if matrix.len() >= 2 && benchmark.methods.len() >= 2 {
            Some(nemenyi_posthoc(&matrix, alpha, q)?)
        } else {
            None
        };
        let best_methods = match &statistics {
            Some(s) => s.best().into_iter().map(|i| benchmark.methods[i].clone()).collect(),
            None => benchmark.methods.clone(),
        };
        Ok(GenerationReport {
            source_id,
            benchmark,
            statistics,
            best_methods,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target_id: String,
    pub road_type: String,
    pub selection: SelectionOutcome,
    pub generation: Option<GenerationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub config: serde_json::Value,
    pub decisions: Vec<String>,
    pub cleaning: BTreeMap<String, CleaningStats>,
    /// Sensors left out of the study, with the reason.
    pub excluded: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: ReportMetadata,
    pub tally: SelectionTally,
    pub targets: Vec<TargetReport>,
}

/// Writes `target_id,method,mean_nrmse,std_nrmse,road_type,best_methods`.
pub fn write_summary_csv<W: Write>(report: &BenchmarkReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "target_id",
        "method",
        "mean_nrmse",
        "std_nrmse",
        "road_type",
        "best_methods",
    ])?;
    for t in &report.targets {
        let Some(g) = &t.generation else { continue };
        for s in &g.benchmark.summary {
            w.write_record([
                t.target_id.clone(),
                s.method.clone(),
                sig6(s.mean_nrmse),
                sig6(s.std_nrmse),
                t.road_type.clone(),
                g.best_methods.join(";"),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("summary.csv", e))?;
    Ok(())
}

/// Writes the per-day error table `target_id,date,method,rmse,nrmse,fallback_used`.
pub fn write_errors_csv<W: Write>(bench: &GenerationBenchmark, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target_id", "date", "method", "rmse", "nrmse", "fallback_used"])?;
    for d in &bench.days {
        for (m, method) in bench.methods.iter().enumerate() {
            w.write_record([
                bench.target_id.clone(),
                d.date.to_string(),
                method.clone(),
                d.rmse[m].map(sig6).unwrap_or_default(),
                d.nrmse[m].map(sig6).unwrap_or_default(),
                d.fallback[m].as_str().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("errors.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::DayFilter;
    use crate::embedding::FEATURES;
    use crate::generation::{fit_cluster_model, NseGenerator};

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5355339059327378).abs() < 1e-12);
        assert_eq!(rmse(&[1.0, 5.0, 9.0], &[3.0, 7.0, 11.0]).unwrap(), 2.0);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn nrmse_examples() {
        assert_eq!(nrmse(50.0, 100.0).unwrap(), 0.5);
        assert_eq!(nrmse(0.0, 100.0).unwrap(), 0.0);
        assert!(matches!(nrmse(1.0, 0.0), Err(Error::Domain(_))));
    }

    fn candidate(id: &str, emb: [f64; FEATURES], coord: Coord, level: f64) -> Candidate {
        Candidate {
            embedding: RoadEmbedding {
                sensor_id: id.into(),
                raw: emb,
                normalized: Some(emb),
                degenerate_centrality: false,
            },
            coord,
            profile: TrafficProfile {
                sensor_id: id.into(),
                interval_min: 15,
                values: vec![level; 96],
                stdev: vec![0.0; 96],
                day_filter: DayFilter::Weekdays,
                day_count: 1,
            },
            mean_weekday_flow: level,
        }
    }

    #[test]
    fn leave_one_out_tally() {
        let m = 1.0 / 111_195.0;
        let z = [0.0; FEATURES];
        let mut far_emb = z;
        far_emb[6] = 1.0;
        let pool = vec![
            candidate("A", z, Coord::new(40.0, -3.0), 100.0),
            // geographically next to A, but a very different road
            candidate("B", far_emb, Coord::new(40.0 + 50.0 * m, -3.0), 900.0),
            // same embedding as A, farther away, identical profile
            candidate("C", z, Coord::new(40.0 + 900.0 * m, -3.0), 100.0),
        ];
        let (outcomes, t) = selection_benchmark(&pool, DistanceMetric::L2).unwrap();
        assert_eq!(t.total(), 3);
        let a = &outcomes[0];
        assert_eq!(a.embedding_selected, "C");
        assert_eq!(a.geographic_selected, "B");
        assert_eq!(a.best_rmse, 0.0);
        assert_eq!(a.verdict, Verdict::Embedding);
        assert!(selection_benchmark(&pool[..2], DistanceMetric::L2).is_err());
    }

    #[test]
    fn same_pick_is_a_tie() {
        let m = 1.0 / 111_195.0;
        let z = [0.0; FEATURES];
        let pool = vec![
            candidate("A", z, Coord::new(40.0, -3.0), 100.0),
            candidate("B", z, Coord::new(40.0 + 50.0 * m, -3.0), 120.0),
            candidate("C", [1.0; FEATURES], Coord::new(40.0 + 900.0 * m, -3.0), 100.0),
        ];
        let o = evaluate_selection(&pool, 0, DistanceMetric::L2).unwrap();
        assert_eq!(o.embedding_selected, "B");
        assert_eq!(o.geographic_selected, "B");
        assert_eq!(o.verdict, Verdict::Tie);
    }

    #[test]
    fn identity_generator_scores_zero() {
        let days: Vec<Vec<f64>> = (0..14).map(|i| vec![10.0 + i as f64; 96]).collect();
        let s = TrafficSeries::from_days("T", 15, d("2019-01-07"), &days).unwrap();
        let nse = NseGenerator { source: &s };
        let b = generation_benchmark(&s, &[&nse], &HolidayCalendar::default(), 15.0).unwrap();
        assert_eq!(b.days.len(), 14);
        assert!(b.days.iter().all(|d| d.rmse[0] == Some(0.0)));
        assert_eq!(b.summary[0].mean_nrmse, 0.0);
    }

    #[test]
    fn nse_gaps_are_excluded_listwise() {
        let target = TrafficSeries::from_days("T", 15, d("2019-01-07"), &vec![vec![10.0; 96]; 10]).unwrap();
        let source = TrafficSeries::from_days("S", 15, d("2019-01-07"), &vec![vec![12.0; 96]; 7]).unwrap();
        let cluster = fit_cluster_model(&source, &HolidayCalendar::default()).unwrap();
        let nse = NseGenerator { source: &source };
        let b = generation_benchmark(&target, &[&cluster, &nse], &HolidayCalendar::default(), 10.0).unwrap();
        assert_eq!(b.days.len(), 10);
        assert_eq!(b.excluded_days, 3);
        assert_eq!(b.summary[0].days, 7);
        assert!((b.summary[1].mean_nrmse - 0.2).abs() < 1e-12);
        assert_eq!(b.complete_matrix().len(), 7);
    }
}

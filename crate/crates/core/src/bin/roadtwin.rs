use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use roadtwin::calendar::DayFilter;
use roadtwin::config::PipelineConfig;
use roadtwin::geo::Coord;
use roadtwin::osm::HighwayClass;
use roadtwin::pipeline::{self, MethodChoice, TargetSpec};
use roadtwin::{Error, ErrorKind};

/// Estimate daily traffic profiles of unsensed road segments.
///
/// Any config key can be overridden with `--key=value`, e.g. `--hops=7`.
#[derive(Parser, Debug)]
#[command(name = "roadtwin", version)]
struct Cli {
    /// JSON config file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// OSM extract to graph CSVs (nodes.csv, edges.csv, graph.json).
    Ingest,
    /// Road feature embeddings of every sensor.
    Embed,
    /// Rank sensors for a target location by embedding and by geography.
    Select {
        #[command(flatten)]
        target: TargetArgs,
    },
    /// Weekday (or other) median profile per sensor, as CSV and SVG.
    Profile {
        #[arg(long)]
        sensor: Option<String>,
        #[arg(long, default_value = "weekdays")]
        filter: DayFilter,
    },
    /// Generate days for a target from one source sensor.
    Synthesize {
        #[arg(long)]
        source: String,
        #[arg(long)]
        target_id: Option<String>,
        #[arg(long)]
        from: NaiveDate,
        #[arg(long)]
        to: NaiveDate,
        #[arg(long, default_value = "both")]
        method: MethodChoice,
    },
    /// Score generated-day CSVs against a sensor's real traffic.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        generated: Vec<PathBuf>,
        #[arg(long)]
        target: String,
    },
    /// Leave-one-out selection and generation study over all sensors.
    Benchmark {
        /// Embeddings CSV from `embed` to reuse.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Embed a location, select its source and generate one day.
    Estimate {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        date: NaiveDate,
        #[arg(long, default_value = "cluster")]
        method: MethodChoice,
    },
}

#[derive(clap::Args, Debug)]
struct TargetArgs {
    #[arg(long, allow_hyphen_values = true)]
    lat: f64,
    #[arg(long, allow_hyphen_values = true)]
    lon: f64,
    #[arg(long, default_value = "target")]
    target_id: String,
    /// Verified road type of the target segment.
    #[arg(long)]
    road_type: Option<HighwayClass>,
    #[arg(long)]
    lanes: Option<u32>,
}

impl TargetArgs {
    fn spec(&self) -> TargetSpec {
        TargetSpec {
            target_id: self.target_id.clone(),
            coord: Coord::new(self.lat, self.lon),
            road_type: self.road_type,
            lanes: self.lanes,
        }
    }
}

/// Splits config overrides out of the arguments clap sees.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    let keys = PipelineConfig::keys();
    args.into_iter().partition(|a| {
        !a.strip_prefix("--")
            .and_then(|rest| rest.split_once('='))
            .is_some_and(|(k, _)| keys.iter().any(|key| key == k))
    })
}

fn run(cli: Cli, overrides: &[String]) -> roadtwin::Result<Vec<PathBuf>> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), overrides)?;
    let out = match &cli.command {
        Command::Ingest => pipeline::ingest(&cfg)?,
        Command::Embed => pipeline::embed(&cfg)?,
        Command::Select { target } => pipeline::select(&cfg, &target.spec())?,
        Command::Profile { sensor, filter } => pipeline::profile(&cfg, sensor.as_deref(), *filter)?,
        Command::Synthesize {
            source,
            target_id,
            from,
            to,
            method,
        } => pipeline::synthesize(&cfg, source, target_id.as_deref(), *from, *to, *method)?,
        Command::Evaluate { generated, target } => pipeline::evaluate(&cfg, generated, target)?,
        Command::Benchmark { embeddings } => pipeline::benchmark(&cfg, embeddings.as_deref())?,
        Command::Estimate { target, date, method } => pipeline::estimate(&cfg, &target.spec(), *date, *method)?,
    };
    out.commit(&cfg.output_dir())
}

fn report(kind: ErrorKind, message: String) -> ExitCode {
    let body = serde_json::json!({
        "error": {
            "kind": kind,
            "exit_code": kind.exit_code(),
            "message": message,
        }
    });
    eprintln!("{body}");
    ExitCode::from(kind.exit_code() as u8)
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(ErrorKind::Input, e.to_string().trim_end().to_string()),
    };
    match run(cli, &overrides) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(e.kind(), error_message(&e)),
    }
}

fn error_message(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        let s_msg = s.to_string();
        if !msg.contains(&s_msg) {
            msg.push_str(": ");
            msg.push_str(&s_msg);
        }
        src = s.source();
    }
    msg
}

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use micromobility::consensus::{run_consensus, ConsensusConfig};
use micromobility::ingest::write_normalized;
use micromobility::profile::{period_summary, read_dataset_csv, write_dataset_csv};
use micromobility::report::{emit_consensus_curve, run_pipeline, AnalysisConfig};
use micromobility::{
    build_dataset, filter_trips, fit, parse_trips, ClusterConfig, DaytimeWindow, Distance, FilterPolicy,
    Granularity, PeriodMode, QuotaPolicy, SchemaMap, VehicleType,
};

#[derive(Parser)]
#[command(name = "micromobility", version, about = "Speed-regime analysis of dockless trip records")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw trip export into the normalized trip file.
    Ingest(IngestArgs),
    /// Build a labeled (speed, label, period, weight) dataset.
    Profile(ProfileArgs),
    /// Fit the matching-based supervised clustering.
    Cluster(ClusterArgs),
    /// Resampling consensus curve for choosing k.
    Consensus(ConsensusArgs),
    /// Run the whole pipeline and write the report bundle.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Column layout of the input: austin or normalized.
    #[arg(long, default_value = "austin")]
    schema: String,
    /// Apply the default distance and duration filter. Without it only trips
    /// with an undefined speed are dropped.
    #[arg(long)]
    filter_defaults: bool,
    #[arg(long)]
    out: PathBuf,
    /// Ingest report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Trip file, normalized by default.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "normalized")]
    schema: String,
    #[arg(long)]
    mode: PeriodMode,
    #[arg(long)]
    vehicle: VehicleType,
    /// per-trip or per-period; defaults by mode.
    #[arg(long)]
    granularity: Option<Granularity>,
    #[arg(long, default_value_t = 6)]
    daytime_start: u8,
    #[arg(long, default_value_t = 18)]
    daytime_end: u8,
    /// Skip the default distance and duration filter.
    #[arg(long)]
    no_filter: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-period mean and std as CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetInput {
    /// Dataset CSV written by `profile`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "bicycle")]
    vehicle: VehicleType,
    #[arg(long, default_value = "per-trip")]
    granularity: Granularity,
}

impl DatasetInput {
    fn load(&self) -> Result<micromobility::AnalysisDataset> {
        let file = open(&self.input)?;
        read_dataset_csv(file, self.vehicle, self.granularity)
            .with_context(|| format!("reading dataset {}", self.input.display()))
    }
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    data: DatasetInput,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value = "balanced")]
    quota: QuotaPolicy,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_outer_iters: usize,
    #[arg(long, default_value = "squared_euclidean")]
    distance: Distance,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConsensusArgs {
    #[command(flatten)]
    data: DatasetInput,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 6)]
    k_max: usize,
    #[arg(long, default_value_t = 50)]
    resamples: usize,
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "balanced")]
    quota: QuotaPolicy,
    #[arg(long, default_value_t = micromobility::consensus::DEFAULT_FLATNESS_THRESHOLD)]
    flatness: f64,
    /// Curve as JSON.
    #[arg(long)]
    out: PathBuf,
    /// Curve as CSV (k, area, delta, chosen).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-run assignments as JSON lines.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Vehicle types to analyze; repeatable.
    #[arg(long)]
    vehicle: Vec<String>,
    /// Period modes to analyze; repeatable.
    #[arg(long)]
    mode: Vec<String>,
    /// `auto` or a fixed cluster count.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<()> {
    let schema = SchemaMap::by_name(&args.schema)?;
    let (trips, report) = parse_trips(open(&args.input)?, &schema).context("ingest stage failed")?;
    let policy = if args.filter_defaults { FilterPolicy::default() } else { FilterPolicy::permissive() };
    let kept = filter_trips(&trips, &policy);
    info!("parsed {} of {} rows, kept {}", report.rows_parsed, report.rows_read, kept.len());
    let mut out = create(&args.out)?;
    write_normalized(&mut out, &kept)?;
    out.flush()?;
    if let Some(path) = &args.report {
        let value = json!({
            "report": report,
            "filter": policy,
            "rows_kept": kept.len(),
        });
        write_json(path, &value)?;
    }
    Ok(())
}

fn profile(args: ProfileArgs) -> Result<()> {
    let schema = SchemaMap::by_name(&args.schema)?;
    let (trips, _) = parse_trips(open(&args.input)?, &schema).context("ingest stage failed")?;
    let trips = if args.no_filter { trips } else { filter_trips(&trips, &FilterPolicy::default()) };
    let window = DaytimeWindow::new(args.daytime_start, args.daytime_end)?;
    let granularity = args.granularity.unwrap_or_else(|| Granularity::default_for(args.mode));
    let dataset = build_dataset(&trips, args.vehicle, args.mode, granularity, window).context("profile stage failed")?;
    info!("{} points, total weight {}", dataset.len(), dataset.total_weight());
    let mut out = create(&args.out)?;
    write_dataset_csv(&mut out, &dataset)?;
    out.flush()?;
    if let Some(path) = &args.summary {
        let mut writer = create(path)?;
        writeln!(writer, "period,mean_mps,std_mps,points,trips")?;
        for row in period_summary(&dataset) {
            writeln!(writer, "{},{},{},{},{}", row.period, row.mean, row.std, row.points, row.trips)?;
        }
        writer.flush()?;
    }
    Ok(())
}

fn cluster(args: ClusterArgs) -> Result<()> {
    let dataset = args.data.load()?;
    let config = ClusterConfig {
        k: args.k,
        quota_policy: args.quota,
        max_outer_iters: args.max_outer_iters,
        seed: args.seed,
        distance: args.distance,
    };
    let model = fit(&dataset, &config).context("cluster stage failed")?.canonicalized();
    if !model.converged {
        log::warn!("no fixpoint after {} outer iterations", model.outer_iterations);
    }
    let value = json!({
        "seed": args.seed,
        "config": config,
        "input": args.data.input,
        "points": dataset.len(),
        "centroids": model.centroids,
        "assignment": model.assignment,
        "clusters": model.clusters,
        "outer_iterations": model.outer_iterations,
        "converged": model.converged,
    });
    write_json(&args.out, &value)
}

fn consensus(args: ConsensusArgs) -> Result<()> {
    let dataset = args.data.load()?;
    let template = ClusterConfig { quota_policy: args.quota, seed: args.seed, ..ClusterConfig::default() };
    let config = ConsensusConfig {
        k_min: args.k_min,
        k_max: args.k_max,
        resamples: args.resamples,
        subsample_fraction: args.fraction,
        seed: args.seed,
    };
    let outcome = run_consensus(&dataset, &template, &config, args.flatness).context("consensus stage failed")?;
    let value = json!({ "seed": args.seed, "config": config, "curve": outcome.curve });
    write_json(&args.out, &value)?;
    if let Some(path) = &args.csv {
        let (csv, _) = emit_consensus_curve(&outcome.curve)?;
        fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = &args.log {
        let mut out = create(path)?;
        for run in &outcome.runs {
            serde_json::to_writer(&mut out, run)?;
            writeln!(out)?;
        }
        out.flush()?;
    }
    println!("chosen k = {}", outcome.curve.chosen_k);
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let config = analysis_config(&args).context("config stage failed")?;
    let bundle = run_pipeline(&config)?;
    for a in &bundle.analyses {
        let means: Vec<String> = a.clusters.iter().map(|c| format!("{:.3}", c.mean)).collect();
        let p = a.ranksum.as_ref().map(|r| format!("{:.3e}", r.p)).unwrap_or_else(|| "n/a".into());
        println!("{} {}: k = {} ({}), means [{}] m/s, rank-sum p = {p}", a.vehicle, a.mode, a.k, a.k_source, means.join(", "));
    }
    println!("wrote {}", config.out.display());
    Ok(())
}

fn analysis_config(args: &AnalyzeArgs) -> Result<AnalysisConfig> {
    let text = match &args.config {
        Some(path) => Some(fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?),
        None => None,
    };
    let mut overrides: Vec<(String, String)> = Vec::new();
    if let Some(input) = &args.input {
        overrides.push(("input".into(), input.display().to_string()));
    }
    if !args.vehicle.is_empty() {
        overrides.push(("vehicles".into(), args.vehicle.join(",")));
    }
    if !args.mode.is_empty() {
        overrides.push(("modes".into(), args.mode.join(",")));
    }
    if let Some(k) = &args.k {
        overrides.push(("k".into(), k.clone()));
    }
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &args.out {
        overrides.push(("out".into(), out.display().to_string()));
    }
    for item in &args.set {
        let (k, v) = item.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {item:?}"))?;
        overrides.push((k.trim().into(), v.trim().into()));
    }
    Ok(AnalysisConfig::from_layers(text.as_deref(), std::env::vars(), &overrides)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Profile(a) => profile(a),
        Command::Cluster(a) => cluster(a),
        Command::Consensus(a) => consensus(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

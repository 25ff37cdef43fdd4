use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use super::{
    cluster_rows, emit_cluster_table, emit_consensus_curve, emit_period_coloring, AnalysisConfig,
    AnalysisReport, ColoringRow, KSelection, ReportBundle, RunMetadata,
};
use crate::cluster::{fit, majority_period_coloring, ClusterConfig};
use crate::consensus::{run_consensus, stratified_subsample};
use crate::error::Error;
use crate::ingest::{filter_trips, parse_trips, FilterPolicy, SchemaMap};
use crate::profile::{build_dataset, period_summary, AnalysisDataset};
use crate::stats::ranksum_test_weighted;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Filter,
    Profile,
    Consensus,
    Cluster,
    Coloring,
    RankSum,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Profile => "profile",
            Stage::Consensus => "consensus",
            Stage::Cluster => "cluster",
            Stage::Coloring => "coloring",
            Stage::RankSum => "ranksum",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

fn at(stage: Stage) -> impl FnOnce(Error) -> PipelineError {
    move |source| PipelineError { stage, source }
}

type Artifact = (String, String);

/// Consensus, fit, coloring and rank-sum for one dataset. Returns the report
/// entry and the artifact files as `(file name, contents)`.
pub fn analyze_dataset(
    dataset: &AnalysisDataset,
    config: &AnalysisConfig,
) -> Result<(AnalysisReport, Vec<Artifact>), PipelineError> {
    let tag = format!("{}_{}", dataset.vehicle_type, dataset.mode);
    let mut files = Vec::new();

    let (k, consensus, consensus_points) = match config.k {
        KSelection::Fixed(k) => (k, None, None),
        KSelection::Auto => {
            let sample = if dataset.len() > config.consensus_max_points {
                let fraction = config.consensus_max_points as f64 / dataset.len() as f64;
                dataset.subset(&stratified_subsample(&dataset.labels(), fraction, config.seed))
            } else {
                dataset.clone()
            };
            let outcome = run_consensus(&sample, &config.cluster, &config.consensus, config.flatness_threshold)
                .map_err(at(Stage::Consensus))?;
            let (csv, svg) = emit_consensus_curve(&outcome.curve).map_err(at(Stage::Consensus))?;
            files.push((format!("consensus_{tag}.csv"), csv));
            files.push((format!("consensus_{tag}.svg"), svg));
            (outcome.curve.chosen_k, Some(outcome.curve), Some(sample.len()))
        }
    };
    info!("{tag}: fitting k = {k} on {} points", dataset.len());

    let cluster_config = ClusterConfig { k, ..config.cluster };
    let model = fit(dataset, &cluster_config)
        .map_err(at(Stage::Cluster))?
        .canonicalized();
    let clusters = cluster_rows(&model, dataset.mode);
    files.push((
        format!("clusters_{tag}.csv"),
        emit_cluster_table(&clusters).map_err(at(Stage::Cluster))?,
    ));

    let coloring = majority_period_coloring(&model, dataset);
    let coloring: Vec<ColoringRow> = period_summary(dataset)
        .into_iter()
        .map(|row| ColoringRow {
            period_index: row.period,
            cluster_id: coloring[&row.period],
            mean_speed: row.mean,
        })
        .collect();
    let (csv, svg) = emit_period_coloring(&coloring, dataset.mode).map_err(at(Stage::Coloring))?;
    files.push((format!("coloring_{tag}.csv"), csv));
    files.push((format!("coloring_{tag}.svg"), svg));

    let members = model.members();
    let sample = |c: usize| -> Vec<(f64, f64)> {
        members[c]
            .iter()
            .map(|&i| (dataset.points[i].feature, dataset.points[i].weight))
            .collect()
    };
    let (slow, fast) = (sample(0), sample(k - 1));
    let ranksum = if slow.is_empty() || fast.is_empty() {
        None
    } else {
        Some(ranksum_test_weighted(&slow, &fast).map_err(at(Stage::RankSum))?)
    };
    if let Some(r) = &ranksum {
        let json = serde_json::to_string_pretty(r).map_err(|e| at(Stage::RankSum)(e.into()))?;
        files.push((format!("ranksum_{tag}.json"), json + "\n"));
    }

    let report = AnalysisReport {
        vehicle: dataset.vehicle_type,
        mode: dataset.mode,
        granularity: dataset.granularity,
        points: dataset.len(),
        total_weight: dataset.total_weight(),
        k,
        k_source: if consensus.is_some() { "consensus" } else { "fixed" }.to_string(),
        consensus_points,
        converged: model.converged,
        outer_iterations: model.outer_iterations,
        clusters,
        coloring,
        consensus,
        ranksum,
        files: files.iter().map(|(name, _)| name.clone()).collect(),
    };
    Ok((report, files))
}

/// Runs ingest → filter → profile → consensus (or fixed k) → fit → coloring
/// → rank-sum for every requested (vehicle, mode) and writes the artifacts
/// plus `manifest.json` into `config.out`. Nothing is left behind on error.
pub fn run_pipeline(config: &AnalysisConfig) -> Result<ReportBundle, PipelineError> {
    config.validate().map_err(at(Stage::Config))?;
    let schema = SchemaMap::by_name(&config.schema).map_err(at(Stage::Config))?;

    let file = fs::File::open(&config.input).map_err(|e| at(Stage::Ingest)(Error::io(&config.input, e)))?;
    let (trips, ingest) = parse_trips(std::io::BufReader::new(file), &schema).map_err(at(Stage::Ingest))?;
    info!("parsed {} of {} rows", ingest.rows_parsed, ingest.rows_read);

    let policy = FilterPolicy::default();
    policy.validate().map_err(at(Stage::Filter))?;
    let trips = filter_trips(&trips, &policy);

    let jobs: Vec<_> = config
        .vehicles
        .iter()
        .flat_map(|&v| config.modes.iter().map(move |&m| (v, m)))
        .collect();
    let results: Vec<(AnalysisReport, Vec<Artifact>)> = jobs
        .par_iter()
        .map(|&(vehicle, mode)| {
            let dataset = build_dataset(&trips, vehicle, mode, config.granularity_for(mode), config.daytime)
                .map_err(at(Stage::Profile))?;
            analyze_dataset(&dataset, config)
        })
        .collect::<Result<_, _>>()?;

    let metadata = RunMetadata {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config_hash: config.config_hash(),
        settings: config.hashed_settings(),
        filter: policy,
        rows_read: ingest.rows_read,
        rows_parsed: ingest.rows_parsed,
        rows_kept: trips.len() as u64,
        ingest,
    };
    let mut artifacts = Vec::new();
    let mut analyses = Vec::new();
    for (report, files) in results {
        analyses.push(report);
        artifacts.extend(files);
    }
    let bundle = ReportBundle { metadata, analyses };
    let manifest = serde_json::to_string_pretty(&bundle).map_err(|e| at(Stage::Write)(e.into()))? + "\n";
    artifacts.push(("manifest.json".to_string(), manifest));

    write_artifacts(&config.out, &artifacts).map_err(at(Stage::Write))?;
    Ok(bundle)
}

/// Writes into a staging directory, then moves files into place; the
/// manifest is last in `artifacts` and therefore moved last.
fn write_artifacts(out: &Path, artifacts: &[Artifact]) -> Result<(), Error> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let staging = out.join(".staging");
    let _ = fs::remove_dir_all(&staging);
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let mut placed: Vec<PathBuf> = Vec::new();
    let result = (|| {
        for (name, contents) in artifacts {
            let path = staging.join(name);
            fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        }
        for (name, _) in artifacts {
            let target = out.join(name);
            fs::rename(staging.join(name), &target).map_err(|e| Error::io(&target, e))?;
            placed.push(target);
        }
        Ok(())
    })();
    let _ = fs::remove_dir_all(&staging);
    if result.is_err() {
        for path in placed {
            let _ = fs::remove_file(path);
        }
    }
    result
}

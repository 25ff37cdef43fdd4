//! End-to-end analysis runs and their file artifacts.

mod config;
mod pipeline;
pub mod svg;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterModel;
use crate::consensus::ConsensusCurve;
use crate::error::Result;
use crate::ingest::{FilterPolicy, IngestReport, VehicleType};
use crate::profile::{Granularity, Label, PeriodMode};
use crate::stats::RankSumResult;

pub use config::{parse_key_values, AnalysisConfig, KSelection, ENV_PREFIX};
pub use pipeline::{analyze_dataset, run_pipeline, PipelineError, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub cluster_id: usize,
    pub mean: f64,
    pub std: f64,
    pub size: usize,
    pub weight: f64,
    pub purity: f64,
    pub majority_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColoringRow {
    pub period_index: u8,
    pub cluster_id: usize,
    /// Weighted mean speed of the period's points.
    pub mean_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub vehicle: VehicleType,
    pub mode: PeriodMode,
    pub granularity: Granularity,
    pub points: usize,
    pub total_weight: f64,
    pub k: usize,
    pub k_source: String,
    pub consensus_points: Option<usize>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub clusters: Vec<ClusterRow>,
    pub coloring: Vec<ColoringRow>,
    pub consensus: Option<ConsensusCurve>,
    /// Slowest cluster against fastest cluster.
    pub ranksum: Option<RankSumResult>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub settings: std::collections::BTreeMap<String, String>,
    pub filter: FilterPolicy,
    pub rows_read: u64,
    pub rows_parsed: u64,
    pub rows_kept: u64,
    pub ingest: IngestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    pub analyses: Vec<AnalysisReport>,
}

pub fn cluster_rows(model: &ClusterModel, mode: PeriodMode) -> Vec<ClusterRow> {
    model
        .clusters
        .iter()
        .map(|c| ClusterRow {
            cluster_id: c.cluster,
            mean: c.mean,
            std: c.std,
            size: c.size,
            weight: c.weight,
            purity: c.purity,
            majority_label: c.majority_label.map(|l: Label| l.name(mode).to_string()),
        })
        .collect()
}

fn to_csv<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_cluster_table(rows: &[ClusterRow]) -> Result<String> {
    to_csv(
        ["cluster_id", "mean_mps", "std_mps", "size", "weight", "purity", "majority_label"],
        rows.iter().map(|r| {
            [
                r.cluster_id.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.size.to_string(),
                r.weight.to_string(),
                r.purity.to_string(),
                r.majority_label.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// CSV `(period_index, cluster_id, mean_speed)` and an SVG band strip.
pub fn emit_period_coloring(rows: &[ColoringRow], mode: PeriodMode) -> Result<(String, String)> {
    let csv = to_csv(
        ["period_index", "cluster_id", "mean_speed"],
        rows.iter().map(|r| {
            [
                r.period_index.to_string(),
                r.cluster_id.to_string(),
                r.mean_speed.to_string(),
            ]
        }),
    )?;
    Ok((csv, svg::coloring_strip(rows, mode)))
}

/// CSV `(k, area, delta, chosen)` and an SVG line plot.
pub fn emit_consensus_curve(curve: &ConsensusCurve) -> Result<(String, String)> {
    let csv = to_csv(
        ["k", "area", "delta", "chosen"],
        curve.points.iter().map(|p| {
            [
                p.k.to_string(),
                p.area.to_string(),
                p.delta.to_string(),
                u8::from(p.k == curve.chosen_k).to_string(),
            ]
        }),
    )?;
    Ok((csv, svg::consensus_plot(curve)))
}

//! Usage-pattern analysis of dockless e-bike and e-scooter trips.
//!
//! Trips are ingested and filtered ([`ingest`]), turned into labeled
//! average-speed datasets by day of week or hour of day ([`profile`]),
//! clustered with a college-admission supervised clustering ([`cluster`])
//! whose number of clusters is picked by consensus clustering
//! ([`consensus`]), and the resulting clusters are compared with a
//! rank-sum test ([`stats`]). [`report`] runs the whole pipeline.

pub mod cluster;
pub mod consensus;
pub mod error;
pub mod ingest;
pub mod profile;
pub mod report;
pub mod stats;

pub use cluster::{fit, ClusterConfig, ClusterModel, Distance, QuotaPolicy};
pub use consensus::{run_consensus, ConsensusConfig, ConsensusCurve};
pub use error::{Error, Result};
pub use ingest::{filter_trips, parse_trips, trip_speed, FilterPolicy, IngestReport, SchemaMap, TripRecord, VehicleType};
pub use profile::{build_dataset, AnalysisDataset, DaytimeWindow, Granularity, Label, LabeledPoint, PeriodKey, PeriodMode};
pub use report::{run_pipeline, AnalysisConfig, ReportBundle};
pub use stats::{rank_with_ties, ranksum_test, RankSumResult};

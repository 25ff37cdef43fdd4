//! Flat `key = value` analysis configuration.
//!
//! Values are layered: built-in defaults, then the config file, then
//! environment variables (`MICROMOBILITY_<KEY>`), then command-line overrides.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::cluster::{ClusterConfig, Distance, QuotaPolicy};
use crate::consensus::ConsensusConfig;
use crate::error::{Error, Result};
use crate::ingest::{SchemaMap, VehicleType};
use crate::profile::{DaytimeWindow, Granularity, PeriodMode};

pub const ENV_PREFIX: &str = "MICROMOBILITY_";

const DEFAULTS: &[(&str, &str)] = &[
    ("input", ""),
    ("schema", "austin"),
    ("vehicles", "bicycle,scooter"),
    ("modes", "day_of_week,time_of_day"),
    ("granularity", "default"),
    ("daytime_start", "6"),
    ("daytime_end", "18"),
    ("k", "auto"),
    ("quota", "balanced"),
    ("max_outer_iters", "100"),
    ("distance", "squared_euclidean"),
    ("k_min", "2"),
    ("k_max", "6"),
    ("resamples", "50"),
    ("fraction", "0.8"),
    ("flatness_threshold", "0.025"),
    ("consensus_max_points", "1000"),
    ("seed", "42"),
    ("out", "report"),
];

/// Keys that do not affect results and are left out of the config hash.
const UNHASHED: &[&str] = &["out"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSelection {
    Auto,
    Fixed(usize),
}

impl FromStr for KSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(KSelection::Auto),
            other => other
                .parse()
                .map(KSelection::Fixed)
                .map_err(|_| Error::config(format!("k must be 'auto' or an integer, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    pub schema: String,
    pub vehicles: Vec<VehicleType>,
    pub modes: Vec<PeriodMode>,
    /// `None` picks the per-mode default.
    pub granularity: Option<Granularity>,
    pub daytime: DaytimeWindow,
    pub k: KSelection,
    pub cluster: ClusterConfig,
    pub consensus: ConsensusConfig,
    pub flatness_threshold: f64,
    pub consensus_max_points: usize,
    pub out: PathBuf,
    pub seed: u64,
    raw: BTreeMap<String, String>,
}

pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("config line {}: expected key = value", i + 1)))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

fn list<T: FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config("empty list"));
    }
    Ok(items)
}

fn number<T: FromStr>(raw: &BTreeMap<String, String>, key: &str) -> Result<T> {
    raw[key]
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {:?}", raw[key])))
}

impl AnalysisConfig {
    /// Builds a config from layered sources; later layers win. Env entries
    /// without the [`ENV_PREFIX`] are ignored.
    pub fn from_layers(
        file: Option<&str>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut raw: BTreeMap<String, String> = DEFAULTS
            .iter()
            .map(|&(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut set = |key: &str, value: &str, source: &str| -> Result<()> {
            let key = normalize_key(key);
            match raw.get_mut(&key) {
                Some(slot) => {
                    *slot = value.to_string();
                    Ok(())
                }
                None => Err(Error::config(format!("unknown config key {key:?} ({source})"))),
            }
        };
        if let Some(text) = file {
            for (k, v) in parse_key_values(text)? {
                set(&k, &v, "config file")?;
            }
        }
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_string(), v)))
            .collect();
        env.sort();
        for (k, v) in env {
            set(&k, &v, "environment")?;
        }
        for (k, v) in overrides {
            set(k, v, "command line")?;
        }
        Self::from_raw(raw)
    }

    fn from_raw(raw: BTreeMap<String, String>) -> Result<Self> {
        let seed: u64 = number(&raw, "seed")?;
        let granularity = match raw["granularity"].as_str() {
            "default" | "" => None,
            g => Some(g.parse()?),
        };
        let cluster = ClusterConfig {
            k: 2,
            quota_policy: raw["quota"].parse::<QuotaPolicy>()?,
            max_outer_iters: number(&raw, "max_outer_iters")?,
            seed,
            distance: raw["distance"].parse::<Distance>()?,
        };
        let consensus = ConsensusConfig {
            k_min: number(&raw, "k_min")?,
            k_max: number(&raw, "k_max")?,
            resamples: number(&raw, "resamples")?,
            subsample_fraction: number(&raw, "fraction")?,
            seed,
        };
        let config = AnalysisConfig {
            input: PathBuf::from(&raw["input"]),
            schema: raw["schema"].clone(),
            vehicles: list(&raw["vehicles"])?,
            modes: list(&raw["modes"])?,
            granularity,
            daytime: DaytimeWindow::new(number(&raw, "daytime_start")?, number(&raw, "daytime_end")?)?,
            k: raw["k"].parse()?,
            cluster,
            consensus,
            flatness_threshold: number(&raw, "flatness_threshold")?,
            consensus_max_points: number(&raw, "consensus_max_points")?,
            out: PathBuf::from(&raw["out"]),
            seed,
            raw,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::config("no input file given"));
        }
        SchemaMap::by_name(&self.schema)?;
        match self.k {
            KSelection::Fixed(k) => ClusterConfig { k, ..self.cluster }.validate()?,
            KSelection::Auto => {
                self.consensus.validate()?;
                if self.consensus_max_points < self.consensus.k_max {
                    return Err(Error::config("consensus_max_points must be at least k_max"));
                }
            }
        }
        self.cluster.validate()
    }

    pub fn granularity_for(&self, mode: PeriodMode) -> Granularity {
        self.granularity.unwrap_or_else(|| Granularity::default_for(mode))
    }

    /// Effective settings that determine results, sorted by key.
    pub fn hashed_settings(&self) -> BTreeMap<String, String> {
        self.raw
            .iter()
            .filter(|(k, _)| !UNHASHED.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// `key = value` text that reproduces this config.
    pub fn to_text(&self) -> String {
        self.raw.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the result-determining settings.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.hashed_settings() {
            hasher.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

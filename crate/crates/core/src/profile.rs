//! Labeled speed datasets for the day-of-week and time-of-day analyses.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{trip_speed, TripRecord, VehicleType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodMode {
    DayOfWeek,
    TimeOfDay,
}

impl PeriodMode {
    pub const ALL: [PeriodMode; 2] = [PeriodMode::DayOfWeek, PeriodMode::TimeOfDay];

    pub fn as_str(self) -> &'static str {
        match self {
            PeriodMode::DayOfWeek => "day_of_week",
            PeriodMode::TimeOfDay => "time_of_day",
        }
    }

    pub fn period_count(self) -> u8 {
        match self {
            PeriodMode::DayOfWeek => 7,
            PeriodMode::TimeOfDay => 24,
        }
    }

    fn period_of(self, trip: &TripRecord) -> u8 {
        match self {
            PeriodMode::DayOfWeek => trip.day_of_week,
            PeriodMode::TimeOfDay => trip.hour,
        }
    }
}

impl fmt::Display for PeriodMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PeriodMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "day_of_week" | "dow" => Ok(PeriodMode::DayOfWeek),
            "time_of_day" | "tod" | "hour" => Ok(PeriodMode::TimeOfDay),
            other => Err(Error::config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PeriodKey {
    pub mode: PeriodMode,
    pub index: u8,
}

impl PeriodKey {
    pub fn new(mode: PeriodMode, index: u8) -> Result<Self> {
        if index >= mode.period_count() {
            return Err(Error::domain(format!("period index {index} out of range for {mode}")));
        }
        Ok(PeriodKey { mode, index })
    }
}

/// Binary supervision label. `RegimeA` is weekday (day-of-week mode) or
/// daytime (time-of-day mode); `RegimeB` is weekend or nighttime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    RegimeA,
    RegimeB,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::RegimeA => 0,
            Label::RegimeB => 1,
        }
    }

    pub fn name(self, mode: PeriodMode) -> &'static str {
        match (mode, self) {
            (PeriodMode::DayOfWeek, Label::RegimeA) => "weekday",
            (PeriodMode::DayOfWeek, Label::RegimeB) => "weekend",
            (PeriodMode::TimeOfDay, Label::RegimeA) => "daytime",
            (PeriodMode::TimeOfDay, Label::RegimeB) => "nighttime",
        }
    }

    fn from_name(s: &str) -> Result<(PeriodMode, Label)> {
        match s.trim() {
            "weekday" => Ok((PeriodMode::DayOfWeek, Label::RegimeA)),
            "weekend" => Ok((PeriodMode::DayOfWeek, Label::RegimeB)),
            "daytime" => Ok((PeriodMode::TimeOfDay, Label::RegimeA)),
            "nighttime" => Ok((PeriodMode::TimeOfDay, Label::RegimeB)),
            other => Err(Error::config(format!("unknown label {other:?}"))),
        }
    }
}

/// Saturday (6) and Sunday (0) are weekend.
pub fn label_day_of_week(day_of_week: u8) -> Result<Label> {
    match day_of_week {
        0 | 6 => Ok(Label::RegimeB),
        1..=5 => Ok(Label::RegimeA),
        d => Err(Error::domain(format!("day of week {d} outside 0..=6"))),
    }
}

/// Half-open `[start, end)` hour window counted as daytime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaytimeWindow {
    pub start: u8,
    pub end: u8,
}

impl Default for DaytimeWindow {
    fn default() -> Self {
        DaytimeWindow { start: 6, end: 18 }
    }
}

impl DaytimeWindow {
    pub fn new(start: u8, end: u8) -> Result<Self> {
        if start >= end || end > 24 {
            return Err(Error::config(format!(
                "daytime window [{start}, {end}) must satisfy start < end <= 24"
            )));
        }
        Ok(DaytimeWindow { start, end })
    }
}

pub fn label_time_of_day(hour: u8, window: DaytimeWindow) -> Result<Label> {
    DaytimeWindow::new(window.start, window.end)?;
    if hour > 23 {
        return Err(Error::domain(format!("hour {hour} outside 0..=23")));
    }
    Ok(if (window.start..window.end).contains(&hour) {
        Label::RegimeA
    } else {
        Label::RegimeB
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub feature: f64,
    pub label: Label,
    pub period: PeriodKey,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    PerTrip,
    PerPeriodPerDate,
}

impl Granularity {
    pub fn default_for(mode: PeriodMode) -> Self {
        match mode {
            PeriodMode::DayOfWeek => Granularity::PerTrip,
            PeriodMode::TimeOfDay => Granularity::PerPeriodPerDate,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::PerTrip => "per_trip",
            Granularity::PerPeriodPerDate => "per_period_per_date",
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "per_trip" | "trip" => Ok(Granularity::PerTrip),
            "per_period" | "per_period_per_date" | "period" => Ok(Granularity::PerPeriodPerDate),
            other => Err(Error::config(format!("unknown granularity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDataset {
    pub vehicle_type: VehicleType,
    pub mode: PeriodMode,
    pub granularity: Granularity,
    pub points: Vec<LabeledPoint>,
}

impl AnalysisDataset {
    /// Validates the dataset invariants: non-empty, one shared mode,
    /// positive features and weights of at least one.
    pub fn new(
        vehicle_type: VehicleType,
        mode: PeriodMode,
        granularity: Granularity,
        points: Vec<LabeledPoint>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDataset {
                vehicle: vehicle_type.to_string(),
                mode: mode.to_string(),
            });
        }
        for (i, p) in points.iter().enumerate() {
            if p.period.mode != mode {
                return Err(Error::domain(format!("point {i} has mode {}", p.period.mode)));
            }
            if !(p.feature.is_finite() && p.feature > 0.0) {
                return Err(Error::domain(format!("point {i} has non-positive feature {}", p.feature)));
            }
            if !(p.weight >= 1.0) {
                return Err(Error::domain(format!("point {i} has weight {} < 1", p.weight)));
            }
        }
        Ok(AnalysisDataset {
            vehicle_type,
            mode,
            granularity,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn features(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.feature).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.points.iter().map(|p| p.label).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    /// Dataset restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> AnalysisDataset {
        AnalysisDataset {
            vehicle_type: self.vehicle_type,
            mode: self.mode,
            granularity: self.granularity,
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }
}

pub fn label_for(mode: PeriodMode, index: u8, window: DaytimeWindow) -> Result<Label> {
    match mode {
        PeriodMode::DayOfWeek => label_day_of_week(index),
        PeriodMode::TimeOfDay => label_time_of_day(index, window),
    }
}

/// Builds the labeled dataset for one vehicle type and mode.
///
/// Per-trip points keep input order. Per-period points are one per
/// (calendar date, period index) cell, ordered by date then period, with the
/// cell's mean speed as feature and its trip count as weight.
pub fn build_dataset(
    trips: &[TripRecord],
    vehicle: VehicleType,
    mode: PeriodMode,
    granularity: Granularity,
    window: DaytimeWindow,
) -> Result<AnalysisDataset> {
    let selected = trips.iter().filter(|t| t.vehicle_type == vehicle);
    let mut points = Vec::new();
    match granularity {
        Granularity::PerTrip => {
            for trip in selected {
                let index = mode.period_of(trip);
                points.push(LabeledPoint {
                    feature: trip_speed(trip)?,
                    label: label_for(mode, index, window)?,
                    period: PeriodKey::new(mode, index)?,
                    weight: 1.0,
                });
            }
        }
        Granularity::PerPeriodPerDate => {
            let mut cells: BTreeMap<(NaiveDate, u8), (f64, u64)> = BTreeMap::new();
            for trip in selected {
                let cell = cells
                    .entry((trip.start_time.date(), mode.period_of(trip)))
                    .or_default();
                cell.0 += trip_speed(trip)?;
                cell.1 += 1;
            }
            for ((_, index), (sum, count)) in cells {
                points.push(LabeledPoint {
                    feature: sum / count as f64,
                    label: label_for(mode, index, window)?,
                    period: PeriodKey::new(mode, index)?,
                    weight: count as f64,
                });
            }
        }
    }
    AnalysisDataset::new(vehicle, mode, granularity, points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummaryRow {
    pub period: u8,
    pub mean: f64,
    pub std: f64,
    pub points: usize,
    pub trips: f64,
}

/// Weight-weighted mean and frequency-weighted sample standard deviation
/// `sqrt(Σw(x-μ)² / (Σw - 1))`, zero when `Σw <= 1`.
pub fn weighted_mean_std(values: impl IntoIterator<Item = (f64, f64)> + Clone) -> (f64, f64, f64) {
    let (sw, swx) = values
        .clone()
        .into_iter()
        .fold((0.0, 0.0), |(sw, swx), (x, w)| (sw + w, swx + w * x));
    if sw == 0.0 {
        return (f64::NAN, 0.0, 0.0);
    }
    let mean = swx / sw;
    let ss: f64 = values
        .into_iter()
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum();
    let std = if sw > 1.0 { (ss / (sw - 1.0)).sqrt() } else { 0.0 };
    (mean, std, sw)
}

pub fn period_summary(dataset: &AnalysisDataset) -> Vec<PeriodSummaryRow> {
    let mut groups: BTreeMap<u8, Vec<(f64, f64)>> = BTreeMap::new();
    for p in &dataset.points {
        groups.entry(p.period.index).or_default().push((p.feature, p.weight));
    }
    groups
        .into_iter()
        .map(|(period, values)| {
            let (mean, std, trips) = weighted_mean_std(values.iter().copied());
            PeriodSummaryRow {
                period,
                mean,
                std,
                points: values.len(),
                trips,
            }
        })
        .collect()
}

/// Writes `feature,label,period,weight` rows. The label names encode the mode.
pub fn write_dataset_csv<W: Write>(sink: W, dataset: &AnalysisDataset) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["feature", "label", "period", "weight"])?;
    for p in &dataset.points {
        writer.write_record([
            p.feature.to_string(),
            p.label.name(dataset.mode).to_string(),
            p.period.index.to_string(),
            p.weight.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_csv`]. The vehicle type is not
/// part of the file and must be supplied.
pub fn read_dataset_csv<R: Read>(
    source: R,
    vehicle: VehicleType,
    granularity: Granularity,
) -> Result<AnalysisDataset> {
    let mut reader = csv::Reader::from_reader(source);
    let mut points = Vec::new();
    let mut mode = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |what: &str| Error::config(format!("dataset row {}: bad {what}", line + 1));
        if record.len() != 4 {
            return Err(bad("field count"));
        }
        let feature: f64 = record[0].trim().parse().map_err(|_| bad("feature"))?;
        let (row_mode, label) = Label::from_name(&record[1])?;
        if *mode.get_or_insert(row_mode) != row_mode {
            return Err(bad("label (mixed modes)"));
        }
        let index: u8 = record[2].trim().parse().map_err(|_| bad("period"))?;
        let weight: f64 = record[3].trim().parse().map_err(|_| bad("weight"))?;
        points.push(LabeledPoint {
            feature,
            label,
            period: PeriodKey::new(row_mode, index)?,
            weight,
        });
    }
    let mode = mode.ok_or(Error::EmptyDataset {
        vehicle: vehicle.to_string(),
        mode: "unknown".into(),
    })?;
    AnalysisDataset::new(vehicle, mode, granularity, points)
}

//! Trip ingestion for dockless-vehicle trip exports.
//!
//! The reader is driven by a [`SchemaMap`] that maps logical fields onto CSV
//! header names, so column renames between exports only need a new map. Rows
//! that cannot be parsed are skipped and tallied by reason in the
//! [`IngestReport`]; only configuration problems (a missing required header)
//! abort a read.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 0.1 statute miles in meters.
pub const TENTH_MILE_M: f64 = 160.9344;
/// 500 statute miles in meters.
pub const FIVE_HUNDRED_MILES_M: f64 = 804_672.0;
pub const ONE_DAY_S: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleType {
    Scooter,
    Bicycle,
}

impl VehicleType {
    pub const ALL: [VehicleType; 2] = [VehicleType::Bicycle, VehicleType::Scooter];

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleType::Scooter => "scooter",
            VehicleType::Bicycle => "bicycle",
        }
    }
}

impl fmt::Display for VehicleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scooter" | "e-scooter" | "escooter" => Ok(VehicleType::Scooter),
            "bicycle" | "bike" | "e-bike" | "ebike" => Ok(VehicleType::Bicycle),
            other => Err(Error::domain(format!("unknown vehicle type {other:?}"))),
        }
    }
}

/// One dockless trip.
///
/// `day_of_week`, `hour`, `month` and `year` are always the calendar
/// decomposition of `start_time`; day 0 is Sunday.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: String,
    pub device_id: String,
    pub vehicle_type: VehicleType,
    pub duration_s: f64,
    pub distance_m: f64,
    pub start_time: NaiveDateTime,
    pub end_time: Option<NaiveDateTime>,
    pub day_of_week: u8,
    pub hour: u8,
    pub month: u8,
    pub year: i32,
    pub council_district_start: Option<String>,
    pub council_district_end: Option<String>,
    pub census_tract_start: Option<String>,
    pub census_tract_end: Option<String>,
}

impl TripRecord {
    /// Builds a record from the required fields, deriving the calendar fields.
    pub fn new(
        trip_id: impl Into<String>,
        vehicle_type: VehicleType,
        duration_s: f64,
        distance_m: f64,
        start_time: NaiveDateTime,
    ) -> Self {
        let (day_of_week, hour, month, year) = decompose(&start_time);
        TripRecord {
            trip_id: trip_id.into(),
            device_id: String::new(),
            vehicle_type,
            duration_s,
            distance_m,
            start_time,
            end_time: None,
            day_of_week,
            hour,
            month,
            year,
            council_district_start: None,
            council_district_end: None,
            census_tract_start: None,
            census_tract_end: None,
        }
    }

    pub fn speed(&self) -> Result<f64> {
        trip_speed(self)
    }
}

fn decompose(t: &NaiveDateTime) -> (u8, u8, u8, i32) {
    (
        t.weekday().num_days_from_sunday() as u8,
        t.hour() as u8,
        t.month() as u8,
        t.year(),
    )
}

/// Average speed in m/s.
pub fn trip_speed(trip: &TripRecord) -> Result<f64> {
    if !(trip.duration_s > 0.0) {
        return Err(Error::domain(format!(
            "trip {} has non-positive duration {}",
            trip.trip_id, trip.duration_s
        )));
    }
    Ok(trip.distance_m / trip.duration_s)
}

/// Distance and duration windows applied to parsed trips.
///
/// A trip is kept iff `distance_m ∈ [min_distance_m, max_distance_m)` and
/// `duration_s ∈ [min_duration_s, max_duration_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            min_distance_m: TENTH_MILE_M,
            max_distance_m: FIVE_HUNDRED_MILES_M,
            min_duration_s: 1.0,
            max_duration_s: ONE_DAY_S,
        }
    }
}

impl FilterPolicy {
    pub fn new(
        min_distance_m: f64,
        max_distance_m: f64,
        min_duration_s: f64,
        max_duration_s: f64,
    ) -> Result<Self> {
        let policy = FilterPolicy {
            min_distance_m,
            max_distance_m,
            min_duration_s,
            max_duration_s,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Only drops trips whose speed is undefined.
    pub fn permissive() -> Self {
        FilterPolicy {
            min_distance_m: 0.0,
            max_distance_m: f64::INFINITY,
            min_duration_s: 1.0,
            max_duration_s: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_distance_m.is_nan() || self.min_distance_m < 0.0 {
            return Err(Error::config("min_distance_m must be non-negative"));
        }
        if !(self.min_distance_m < self.max_distance_m) {
            return Err(Error::config("min_distance_m must be below max_distance_m"));
        }
        if !(self.min_duration_s >= 1.0) {
            return Err(Error::config("min_duration_s must be at least 1 s"));
        }
        if !(self.max_duration_s > self.min_duration_s) {
            return Err(Error::config("max_duration_s must exceed min_duration_s"));
        }
        Ok(())
    }

    pub fn keeps(&self, trip: &TripRecord) -> bool {
        trip.distance_m >= self.min_distance_m
            && trip.distance_m < self.max_distance_m
            && trip.duration_s >= self.min_duration_s
            && trip.duration_s < self.max_duration_s
    }
}

/// Keeps the trips admitted by `policy`, preserving order.
pub fn filter_trips(trips: &[TripRecord], policy: &FilterPolicy) -> Vec<TripRecord> {
    trips.iter().filter(|t| policy.keeps(t)).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    TripId,
    DeviceId,
    VehicleType,
    Duration,
    Distance,
    StartTime,
    EndTime,
    Month,
    Hour,
    DayOfWeek,
    Year,
    CouncilDistrictStart,
    CouncilDistrictEnd,
    CensusTractStart,
    CensusTractEnd,
}

impl Field {
    pub const REQUIRED: [Field; 4] = [
        Field::VehicleType,
        Field::Duration,
        Field::Distance,
        Field::StartTime,
    ];
}

/// Maps logical trip fields onto the header names of a particular export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaMap {
    headers: BTreeMap<Field, String>,
}

impl SchemaMap {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Field, S)>,
        S: Into<String>,
    {
        SchemaMap {
            headers: pairs.into_iter().map(|(f, h)| (f, h.into())).collect(),
        }
    }

    /// Column names of the City of Austin dockless vehicle trips export.
    pub fn austin() -> Self {
        Self::from_pairs([
            (Field::TripId, "ID"),
            (Field::DeviceId, "Device ID"),
            (Field::VehicleType, "Vehicle Type"),
            (Field::Duration, "Trip Duration"),
            (Field::Distance, "Trip Distance"),
            (Field::StartTime, "Start Time"),
            (Field::EndTime, "End Time"),
            (Field::Month, "Month"),
            (Field::Hour, "Hour"),
            (Field::DayOfWeek, "Day of Week"),
            (Field::Year, "Year"),
            (Field::CouncilDistrictStart, "Council District (Start)"),
            (Field::CouncilDistrictEnd, "Council District (End)"),
            (Field::CensusTractStart, "Census Tract Start"),
            (Field::CensusTractEnd, "Census Tract End"),
        ])
    }

    /// Columns written by [`write_normalized`].
    pub fn normalized() -> Self {
        Self::from_pairs([
            (Field::TripId, "trip_id"),
            (Field::VehicleType, "vehicle_type"),
            (Field::Distance, "distance_m"),
            (Field::Duration, "duration_s"),
            (Field::StartTime, "start_time"),
            (Field::DayOfWeek, "day_of_week"),
            (Field::Hour, "hour"),
        ])
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "austin" => Ok(Self::austin()),
            "normalized" => Ok(Self::normalized()),
            other => Err(Error::config(format!("unknown schema preset {other:?}"))),
        }
    }

    pub fn header(&self, field: Field) -> Option<&str> {
        self.headers.get(&field).map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: u64,
    pub rows_parsed: u64,
    pub rows_rejected: BTreeMap<String, u64>,
    pub per_vehicle: BTreeMap<String, u64>,
    /// File columns that disagreed with the value derived from the start time.
    pub derived_conflicts: BTreeMap<String, u64>,
}

impl IngestReport {
    pub fn total_rejected(&self) -> u64 {
        self.rows_rejected.values().sum()
    }

    fn reject(&mut self, reason: &str) {
        *self.rows_rejected.entry(reason.to_string()).or_default() += 1;
    }
}

const TIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M",
    "%m/%d/%Y %I:%M:%S %p",
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %I:%M %p",
    "%m/%d/%Y %H:%M",
];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIME_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

fn parse_number(s: &str) -> Option<f64> {
    let v: f64 = s.trim().replace(',', "").parse().ok()?;
    v.is_finite().then_some(v)
}

fn optional(s: Option<&str>) -> Option<String> {
    s.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

struct Columns {
    index: BTreeMap<Field, usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, schema: &SchemaMap) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (&field, name) in &schema.headers {
            if let Some(pos) = headers.iter().position(|h| h.trim() == name) {
                index.insert(field, pos);
            } else if Field::REQUIRED.contains(&field) {
                return Err(Error::config(format!("missing required header {name:?}")));
            }
        }
        Ok(Columns { index })
    }

    fn get<'r>(&self, record: &'r csv::StringRecord, field: Field) -> Option<&'r str> {
        self.index.get(&field).and_then(|&i| record.get(i))
    }
}

/// Parses a trip CSV with a header row.
///
/// Unparseable rows are tallied in the report; the returned records are in
/// file order.
pub fn parse_trips<R: Read>(source: R, schema: &SchemaMap) -> Result<(Vec<TripRecord>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let mut report = IngestReport::default();

    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Ok((Vec::new(), report));
    }
    let columns = Columns::resolve(&headers, schema)?;

    let mut trips = Vec::new();
    let mut raw = csv::ByteRecord::new();
    loop {
        match reader.read_byte_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
            Err(_) => {
                report.rows_read += 1;
                report.reject("malformed_row");
                continue;
            }
        }
        report.rows_read += 1;
        let record = match csv::StringRecord::from_byte_record(raw.clone()) {
            Ok(r) if r.len() == headers.len() => r,
            _ => {
                report.reject("malformed_row");
                continue;
            }
        };
        match parse_row(&record, &columns, &mut report) {
            Ok(trip) => {
                report.rows_parsed += 1;
                *report
                    .per_vehicle
                    .entry(trip.vehicle_type.to_string())
                    .or_default() += 1;
                trips.push(trip);
            }
            Err(reason) => report.reject(reason),
        }
    }
    Ok((trips, report))
}

fn parse_row(
    record: &csv::StringRecord,
    columns: &Columns,
    report: &mut IngestReport,
) -> std::result::Result<TripRecord, &'static str> {
    let vehicle_type = columns
        .get(record, Field::VehicleType)
        .and_then(|s| s.parse::<VehicleType>().ok())
        .ok_or("unparseable_vehicle_type")?;
    let duration_s = columns
        .get(record, Field::Duration)
        .and_then(parse_number)
        .ok_or("unparseable_duration")?;
    let distance_m = columns
        .get(record, Field::Distance)
        .and_then(parse_number)
        .ok_or("unparseable_distance")?;
    let start_time = columns
        .get(record, Field::StartTime)
        .and_then(parse_timestamp)
        .ok_or("unparseable_start_time")?;
    if duration_s < 0.0 {
        return Err("negative_duration");
    }
    if distance_m < 0.0 {
        return Err("negative_distance");
    }
    let end_time = match columns.get(record, Field::EndTime).map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(parse_timestamp(s).ok_or("unparseable_end_time")?),
    };

    let mut trip = TripRecord::new(
        columns.get(record, Field::TripId).unwrap_or("").trim(),
        vehicle_type,
        duration_s,
        distance_m,
        start_time,
    );
    trip.device_id = columns.get(record, Field::DeviceId).unwrap_or("").trim().to_string();
    trip.end_time = end_time;
    trip.council_district_start = optional(columns.get(record, Field::CouncilDistrictStart));
    trip.council_district_end = optional(columns.get(record, Field::CouncilDistrictEnd));
    trip.census_tract_start = optional(columns.get(record, Field::CensusTractStart));
    trip.census_tract_end = optional(columns.get(record, Field::CensusTractEnd));

    let derived = [
        (Field::DayOfWeek, "day_of_week", i64::from(trip.day_of_week)),
        (Field::Hour, "hour", i64::from(trip.hour)),
        (Field::Month, "month", i64::from(trip.month)),
        (Field::Year, "year", i64::from(trip.year)),
    ];
    for (field, name, value) in derived {
        let in_file = columns
            .get(record, field)
            .and_then(parse_number)
            .map(|v| v as i64);
        if matches!(in_file, Some(v) if v != value) {
            *report.derived_conflicts.entry(name.to_string()).or_default() += 1;
        }
    }
    Ok(trip)
}

pub const NORMALIZED_HEADER: [&str; 8] = [
    "trip_id",
    "vehicle_type",
    "distance_m",
    "duration_s",
    "speed_mps",
    "start_time",
    "day_of_week",
    "hour",
];

/// Writes trips in the normalized column layout.
pub fn write_normalized<W: Write>(sink: W, trips: &[TripRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(NORMALIZED_HEADER)?;
    for trip in trips {
        let speed = trip_speed(trip)?;
        writer.write_record([
            trip.trip_id.clone(),
            trip.vehicle_type.to_string(),
            trip.distance_m.to_string(),
            trip.duration_s.to_string(),
            speed.to_string(),
            trip.start_time.format("%Y-%m-%dT%H:%M:%S").to_string(),
            trip.day_of_week.to_string(),
            trip.hour.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

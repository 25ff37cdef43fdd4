//! Python bindings for the `micromobility` crate.
//!
//! Enumerations cross the boundary as their lowercase string names
//! (`"scooter"`, `"time_of_day"`, `"per_trip"`, ...). Structured results
//! expose typed getters plus `to_dict()` for everything else.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::str::FromStr;

use micromobility::consensus::{self, relative_deltas, CurvePoint};
use micromobility::ingest::parse_timestamp;
use micromobility::profile::{self, label_for};
use micromobility::report::PipelineError;
use micromobility::{
    AnalysisDataset, DaytimeWindow, Distance, Granularity, LabeledPoint, PeriodKey, PeriodMode, QuotaPolicy,
    SchemaMap,
};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn chain(err: &dyn std::error::Error) -> String {
    let mut msg = err.to_string();
    let mut cur = err.source();
    while let Some(e) = cur {
        msg.push_str(": ");
        msg.push_str(&e.to_string());
        cur = e.source();
    }
    msg
}

fn py_err(err: micromobility::Error) -> PyErr {
    use micromobility::Error as E;
    let msg = chain(&err);
    match err {
        E::Io { .. } | E::BareIo(_) => PyOSError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn pipeline_err(err: PipelineError) -> PyErr {
    PyRuntimeError::new_err(chain(&err))
}

fn parse<T: FromStr<Err = micromobility::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

/// Serializes through JSON so nested structs become plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn window(start: u8, end: u8) -> PyResult<DaytimeWindow> {
    DaytimeWindow::new(start, end).map_err(py_err)
}

#[pyclass(name = "Trip", module = "pymicromobility", frozen, from_py_object)]
#[derive(Clone)]
struct PyTrip(micromobility::TripRecord);

#[pymethods]
impl PyTrip {
    #[new]
    fn new(trip_id: String, vehicle_type: &str, duration_s: f64, distance_m: f64, start_time: &str) -> PyResult<Self> {
        let start = parse_timestamp(start_time)
            .ok_or_else(|| PyValueError::new_err(format!("unparseable start time {start_time:?}")))?;
        Ok(PyTrip(micromobility::TripRecord::new(trip_id, parse(vehicle_type)?, duration_s, distance_m, start)))
    }

    #[getter]
    fn trip_id(&self) -> &str {
        &self.0.trip_id
    }

    #[getter]
    fn vehicle_type(&self) -> &'static str {
        self.0.vehicle_type.as_str()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.0.duration_s
    }

    #[getter]
    fn distance_m(&self) -> f64 {
        self.0.distance_m
    }

    #[getter]
    fn start_time(&self) -> String {
        self.0.start_time.format("%Y-%m-%dT%H:%M:%S").to_string()
    }

    #[getter]
    fn day_of_week(&self) -> u8 {
        self.0.day_of_week
    }

    #[getter]
    fn hour(&self) -> u8 {
        self.0.hour
    }

    #[getter]
    fn month(&self) -> u8 {
        self.0.month
    }

    #[getter]
    fn year(&self) -> i32 {
        self.0.year
    }

    fn speed(&self) -> PyResult<f64> {
        self.0.speed().map_err(py_err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "Trip({:?}, {}, {} m in {} s)",
            self.0.trip_id, self.0.vehicle_type, self.0.distance_m, self.0.duration_s
        )
    }
}

#[pyclass(name = "FilterPolicy", module = "pymicromobility", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyFilterPolicy(micromobility::FilterPolicy);

#[pymethods]
impl PyFilterPolicy {
    #[new]
    #[pyo3(signature = (min_distance_m=None, max_distance_m=None, min_duration_s=None, max_duration_s=None))]
    fn new(
        min_distance_m: Option<f64>,
        max_distance_m: Option<f64>,
        min_duration_s: Option<f64>,
        max_duration_s: Option<f64>,
    ) -> PyResult<Self> {
        let d = micromobility::FilterPolicy::default();
        micromobility::FilterPolicy::new(
            min_distance_m.unwrap_or(d.min_distance_m),
            max_distance_m.unwrap_or(d.max_distance_m),
            min_duration_s.unwrap_or(d.min_duration_s),
            max_duration_s.unwrap_or(d.max_duration_s),
        )
        .map(PyFilterPolicy)
        .map_err(py_err)
    }

    #[staticmethod]
    fn permissive() -> Self {
        PyFilterPolicy(micromobility::FilterPolicy::permissive())
    }

    fn keeps(&self, trip: &PyTrip) -> bool {
        self.0.keeps(&trip.0)
    }

    #[getter]
    fn min_distance_m(&self) -> f64 {
        self.0.min_distance_m
    }

    #[getter]
    fn max_distance_m(&self) -> f64 {
        self.0.max_distance_m
    }

    #[getter]
    fn min_duration_s(&self) -> f64 {
        self.0.min_duration_s
    }

    #[getter]
    fn max_duration_s(&self) -> f64 {
        self.0.max_duration_s
    }
}

#[pyclass(name = "IngestReport", module = "pymicromobility", frozen)]
struct PyIngestReport(micromobility::IngestReport);

#[pymethods]
impl PyIngestReport {
    #[getter]
    fn rows_read(&self) -> u64 {
        self.0.rows_read
    }

    #[getter]
    fn rows_parsed(&self) -> u64 {
        self.0.rows_parsed
    }

    #[getter]
    fn total_rejected(&self) -> u64 {
        self.0.total_rejected()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }
}

#[pyclass(name = "Dataset", module = "pymicromobility", frozen)]
struct PyDataset(AnalysisDataset);

#[pymethods]
impl PyDataset {
    /// Builds a dataset from raw features; labels follow from the periods.
    #[staticmethod]
    #[pyo3(signature = (vehicle_type, mode, granularity, features, periods, weights=None, daytime_start=6, daytime_end=18))]
    #[allow(clippy::too_many_arguments)]
    fn from_points(
        vehicle_type: &str,
        mode: &str,
        granularity: &str,
        features: Vec<f64>,
        periods: Vec<u8>,
        weights: Option<Vec<f64>>,
        daytime_start: u8,
        daytime_end: u8,
    ) -> PyResult<Self> {
        let mode: PeriodMode = parse(mode)?;
        let win = window(daytime_start, daytime_end)?;
        let weights = weights.unwrap_or_else(|| vec![1.0; features.len()]);
        if features.len() != periods.len() || features.len() != weights.len() {
            return Err(PyValueError::new_err("features, periods and weights must have equal lengths"));
        }
        let points = features
            .iter()
            .zip(&periods)
            .zip(&weights)
            .map(|((&feature, &index), &weight)| {
                Ok(LabeledPoint {
                    feature,
                    label: label_for(mode, index, win)?,
                    period: PeriodKey::new(mode, index)?,
                    weight,
                })
            })
            .collect::<micromobility::Result<Vec<_>>>()
            .map_err(py_err)?;
        AnalysisDataset::new(parse(vehicle_type)?, mode, parse(granularity)?, points)
            .map(PyDataset)
            .map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn vehicle_type(&self) -> &'static str {
        self.0.vehicle_type.as_str()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.0.mode.as_str()
    }

    #[getter]
    fn granularity(&self) -> &'static str {
        self.0.granularity.as_str()
    }

    #[getter]
    fn features(&self) -> Vec<f64> {
        self.0.features()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights()
    }

    #[getter]
    fn labels(&self) -> Vec<&'static str> {
        self.0.points.iter().map(|p| p.label.name(self.0.mode)).collect()
    }

    #[getter]
    fn periods(&self) -> Vec<u8> {
        self.0.points.iter().map(|p| p.period.index).collect()
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.0.len()) {
            return Err(PyValueError::new_err(format!("index {bad} out of range")));
        }
        Ok(PyDataset(self.0.subset(&indices)))
    }

    /// Per-period mean, std and weight.
    fn period_summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &profile::period_summary(&self.0))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({}, {}, {}, {} points)",
            self.0.vehicle_type,
            self.0.mode,
            self.0.granularity.as_str(),
            self.0.len()
        )
    }
}

#[pyclass(name = "ClusterConfig", module = "pymicromobility", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyClusterConfig(micromobility::ClusterConfig);

#[pymethods]
impl PyClusterConfig {
    #[new]
    #[pyo3(signature = (k=2, quota="balanced", max_outer_iters=100, seed=42, distance="squared_euclidean"))]
    fn new(k: usize, quota: &str, max_outer_iters: usize, seed: u64, distance: &str) -> PyResult<Self> {
        let config = micromobility::ClusterConfig {
            k,
            quota_policy: parse::<QuotaPolicy>(quota)?,
            max_outer_iters,
            seed,
            distance: parse::<Distance>(distance)?,
        };
        config.validate().map_err(py_err)?;
        Ok(PyClusterConfig(config))
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k
    }

    #[getter]
    fn quota(&self) -> &'static str {
        self.0.quota_policy.as_str()
    }

    #[getter]
    fn max_outer_iters(&self) -> usize {
        self.0.max_outer_iters
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn distance(&self) -> &'static str {
        self.0.distance.as_str()
    }
}

#[pyclass(name = "ClusterModel", module = "pymicromobility", frozen)]
struct PyClusterModel(micromobility::ClusterModel);

#[pymethods]
impl PyClusterModel {
    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn centroids(&self) -> Vec<f64> {
        self.0.centroids.clone()
    }

    #[getter]
    fn assignment(&self) -> Vec<usize> {
        self.0.assignment.clone()
    }

    #[getter]
    fn outer_iterations(&self) -> usize {
        self.0.outer_iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    /// Per-cluster mean, std, size, weight, purity and majority label.
    #[getter]
    fn clusters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.clusters)
    }

    fn members(&self) -> Vec<Vec<usize>> {
        self.0.members()
    }

    /// Same model with clusters relabeled by ascending mean.
    fn canonicalized(&self) -> Self {
        PyClusterModel(self.0.canonicalized())
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }
}

#[pyclass(name = "ConsensusCurve", module = "pymicromobility", frozen)]
struct PyConsensusCurve(micromobility::ConsensusCurve);

#[pymethods]
impl PyConsensusCurve {
    #[getter]
    fn chosen_k(&self) -> usize {
        self.0.chosen_k
    }

    #[getter]
    fn ks(&self) -> Vec<usize> {
        self.0.points.iter().map(|p| p.k).collect()
    }

    #[getter]
    fn areas(&self) -> Vec<f64> {
        self.0.points.iter().map(|p| p.area).collect()
    }

    #[getter]
    fn deltas(&self) -> Vec<f64> {
        self.0.points.iter().map(|p| p.delta).collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }
}

#[pyclass(name = "RankSumResult", module = "pymicromobility", frozen)]
struct PyRankSumResult(micromobility::RankSumResult);

#[pymethods]
impl PyRankSumResult {
    #[getter]
    fn u(&self) -> f64 {
        self.0.u
    }

    #[getter]
    fn w(&self) -> f64 {
        self.0.w
    }

    #[getter]
    fn z(&self) -> Option<f64> {
        self.0.z
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    #[getter]
    fn method(&self) -> &'static str {
        match self.0.method {
            micromobility::stats::Method::Exact => "exact",
            micromobility::stats::Method::NormalApprox => "normal_approx",
        }
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        format!("RankSumResult(U={}, p={:e}, method={})", self.0.u, self.0.p, self.method())
    }
}

/// Reads a trip CSV with the `austin` or `normalized` column mapping.
#[pyfunction]
#[pyo3(signature = (path, schema="austin"))]
fn parse_trips(py: Python<'_>, path: PathBuf, schema: &str) -> PyResult<(Vec<PyTrip>, PyIngestReport)> {
    let schema = SchemaMap::by_name(schema).map_err(py_err)?;
    let file = File::open(&path).map_err(|e| py_err(micromobility::Error::io(&path, e)))?;
    let (trips, report) = py
        .detach(|| micromobility::parse_trips(BufReader::new(file), &schema))
        .map_err(py_err)?;
    Ok((trips.into_iter().map(PyTrip).collect(), PyIngestReport(report)))
}

#[pyfunction]
#[pyo3(signature = (trips, policy=None))]
fn filter_trips(trips: Vec<PyTrip>, policy: Option<PyFilterPolicy>) -> Vec<PyTrip> {
    let policy = policy.map(|p| p.0).unwrap_or_default();
    trips.into_iter().filter(|t| policy.keeps(&t.0)).collect()
}

#[pyfunction]
fn trip_speed(trip: &PyTrip) -> PyResult<f64> {
    micromobility::trip_speed(&trip.0).map_err(py_err)
}

/// `"weekday"` or `"weekend"`; day 0 is Sunday.
#[pyfunction]
fn label_day_of_week(day_of_week: u8) -> PyResult<&'static str> {
    profile::label_day_of_week(day_of_week)
        .map(|l| l.name(PeriodMode::DayOfWeek))
        .map_err(py_err)
}

/// `"daytime"` or `"nighttime"`.
#[pyfunction]
#[pyo3(signature = (hour, daytime_start=6, daytime_end=18))]
fn label_time_of_day(hour: u8, daytime_start: u8, daytime_end: u8) -> PyResult<&'static str> {
    profile::label_time_of_day(hour, window(daytime_start, daytime_end)?)
        .map(|l| l.name(PeriodMode::TimeOfDay))
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (trips, vehicle_type, mode, granularity=None, daytime_start=6, daytime_end=18))]
fn build_dataset(
    trips: Vec<PyTrip>,
    vehicle_type: &str,
    mode: &str,
    granularity: Option<&str>,
    daytime_start: u8,
    daytime_end: u8,
) -> PyResult<PyDataset> {
    let mode: PeriodMode = parse(mode)?;
    let granularity = match granularity {
        Some(g) => parse(g)?,
        None => Granularity::default_for(mode),
    };
    let trips: Vec<_> = trips.into_iter().map(|t| t.0).collect();
    micromobility::build_dataset(&trips, parse(vehicle_type)?, mode, granularity, window(daytime_start, daytime_end)?)
        .map(PyDataset)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (dataset, config=None))]
fn fit(py: Python<'_>, dataset: &PyDataset, config: Option<PyClusterConfig>) -> PyResult<PyClusterModel> {
    let config = config.map(|c| c.0).unwrap_or_default();
    py.detach(|| micromobility::fit(&dataset.0, &config))
        .map(PyClusterModel)
        .map_err(py_err)
}

/// Consensus curve over `k_min..=k_max`. Per-run logs and matrices stay on the Rust side.
#[pyfunction]
#[pyo3(signature = (dataset, config=None, k_min=2, k_max=6, resamples=50, fraction=0.8, seed=42, flatness_threshold=consensus::DEFAULT_FLATNESS_THRESHOLD))]
#[allow(clippy::too_many_arguments)]
fn run_consensus(
    py: Python<'_>,
    dataset: &PyDataset,
    config: Option<PyClusterConfig>,
    k_min: usize,
    k_max: usize,
    resamples: usize,
    fraction: f64,
    seed: u64,
    flatness_threshold: f64,
) -> PyResult<PyConsensusCurve> {
    let template = config.map(|c| c.0).unwrap_or_default();
    let cc = micromobility::ConsensusConfig { k_min, k_max, resamples, subsample_fraction: fraction, seed };
    py.detach(|| micromobility::run_consensus(&dataset.0, &template, &cc, flatness_threshold))
        .map(|o| PyConsensusCurve(o.curve))
        .map_err(py_err)
}

/// Area under the empirical CDF of the given consensus entries.
#[pyfunction]
fn cdf_area(entries: Vec<f64>) -> f64 {
    consensus::cdf_area(&entries)
}

/// Picks k from CDF areas listed for consecutive k starting at `k_min`.
#[pyfunction]
#[pyo3(signature = (areas, k_min=2, threshold=consensus::DEFAULT_FLATNESS_THRESHOLD))]
fn select_model_order(areas: Vec<f64>, k_min: usize, threshold: f64) -> PyResult<usize> {
    let points: Vec<CurvePoint> = areas
        .iter()
        .zip(relative_deltas(&areas))
        .enumerate()
        .map(|(i, (&area, delta))| CurvePoint { k: k_min + i, area, delta, undefined_pairs: 0 })
        .collect();
    consensus::select_model_order(&points, threshold).map_err(py_err)
}

#[pyfunction]
fn rank_with_ties(values: Vec<f64>) -> PyResult<Vec<f64>> {
    micromobility::rank_with_ties(&values).map_err(py_err)
}

#[pyfunction]
fn ranksum_test(sample_a: Vec<f64>, sample_b: Vec<f64>) -> PyResult<PyRankSumResult> {
    micromobility::ranksum_test(&sample_a, &sample_b)
        .map(PyRankSumResult)
        .map_err(py_err)
}

/// Samples are `(value, weight)` pairs; weights act as integer frequencies.
#[pyfunction]
fn ranksum_test_weighted(sample_a: Vec<(f64, f64)>, sample_b: Vec<(f64, f64)>) -> PyResult<PyRankSumResult> {
    micromobility::stats::ranksum_test_weighted(&sample_a, &sample_b)
        .map(PyRankSumResult)
        .map_err(py_err)
}

/// Runs the full analysis and writes every artifact under the configured
/// output directory. `settings` uses the same keys as the config file.
/// Returns the manifest as a dict.
#[pyfunction]
#[pyo3(signature = (settings, config_text=None))]
fn run_pipeline<'py>(
    py: Python<'py>,
    settings: &Bound<'py, PyDict>,
    config_text: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let overrides: Vec<(String, String)> = settings
        .iter()
        .map(|(k, v)| Ok((k.extract::<String>()?, v.str()?.to_string())))
        .collect::<PyResult<_>>()?;
    let config = micromobility::AnalysisConfig::from_layers(config_text, Vec::new(), &overrides).map_err(py_err)?;
    let bundle = py.detach(|| micromobility::run_pipeline(&config)).map_err(pipeline_err)?;
    to_py(py, &bundle)
}

#[pymodule]
fn pymicromobility(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrip>()?;
    m.add_class::<PyFilterPolicy>()?;
    m.add_class::<PyIngestReport>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyClusterConfig>()?;
    m.add_class::<PyClusterModel>()?;
    m.add_class::<PyConsensusCurve>()?;
    m.add_class::<PyRankSumResult>()?;
    m.add_function(wrap_pyfunction!(parse_trips, m)?)?;
    m.add_function(wrap_pyfunction!(filter_trips, m)?)?;
    m.add_function(wrap_pyfunction!(trip_speed, m)?)?;
    m.add_function(wrap_pyfunction!(label_day_of_week, m)?)?;
    m.add_function(wrap_pyfunction!(label_time_of_day, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_consensus, m)?)?;
    m.add_function(wrap_pyfunction!(cdf_area, m)?)?;
    m.add_function(wrap_pyfunction!(select_model_order, m)?)?;
    m.add_function(wrap_pyfunction!(rank_with_ties, m)?)?;
    m.add_function(wrap_pyfunction!(ranksum_test, m)?)?;
    m.add_function(wrap_pyfunction!(ranksum_test_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}

//! Python bindings. Built with maturin as the `phenowarp` extension module.

use std::collections::BTreeMap;
use std::fs::File;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use phenowarp::classify::{self, ClassifierMode, ExperimentConfig};
use phenowarp::distance::{self as dist, Matrix, Measure, VectorMode, WarpConfig};
use phenowarp::ingest;
use phenowarp::preprocess::{self as pre, PipelineConfig, Smoothing};
use phenowarp::simulate::{self, DatasetSpec, ScenarioSpec};
use phenowarp::vegindex::{self, IndexKind, IndexParams, Reflectance};
use phenowarp::window::{self, MultiClassPolicy, WindowPolicy};
use phenowarp::{QualityFlag, TimeGrid};

fn err(e: phenowarp::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn value_err(msg: String) -> PyErr {
    PyValueError::new_err(msg)
}

/// Round-trips through JSON so reports arrive as plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| value_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

pub fn parse_vector_mode(s: &str) -> Result<VectorMode, String> {
    match s {
        "pair" => Ok(VectorMode::Pair),
        "segment" => Ok(VectorMode::Segment),
        _ => Err(format!("unknown vector mode `{s}` (pair or segment)")),
    }
}

pub fn parse_policy(s: &str) -> Result<MultiClassPolicy, String> {
    match s.replace('_', "-").as_str() {
        "min-length" => Ok(MultiClassPolicy::MinLength),
        "union" => Ok(MultiClassPolicy::Union),
        _ => Err(format!("unknown window policy `{s}` (min-length or union)")),
    }
}

pub fn parse_smoothing(s: &str, window: usize, order: usize) -> Result<Smoothing, String> {
    match s.replace('_', "-").as_str() {
        "sg" | "savitzky-golay" => Ok(Smoothing::SavitzkyGolay { window, order }),
        "double-sigmoid" => Ok(Smoothing::DoubleSigmoid),
        "none" => Ok(Smoothing::None),
        _ => Err(format!("unknown smoothing `{s}` (sg, double-sigmoid or none)")),
    }
}

fn warp(measure: &str, band_days: f64, twdtw_alpha: f64, twdtw_beta: f64, vector_mode: &str) -> PyResult<WarpConfig> {
    let cfg = WarpConfig {
        measure: measure.parse::<Measure>().map_err(value_err)?,
        band_days,
        twdtw_alpha,
        twdtw_beta,
        vector_mode: parse_vector_mode(vector_mode).map_err(value_err)?,
        ..WarpConfig::default()
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Vegetation-index values on strictly increasing days, each with a quality flag.
#[pyclass(name = "Series", module = "phenowarp", frozen)]
pub struct PySeries {
    inner: phenowarp::Series,
}

#[pymethods]
impl PySeries {
    #[new]
    #[pyo3(signature = (days, values, flags=None))]
    fn new(days: Vec<i32>, values: Vec<f64>, flags: Option<Vec<String>>) -> PyResult<Self> {
        let inner = match flags {
            None => phenowarp::Series::clear(days, values),
            Some(f) => {
                let flags = f
                    .iter()
                    .map(|s| s.parse::<QualityFlag>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(value_err)?;
                phenowarp::Series::new(days, values, flags)
            }
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    /// Clear series on consecutive days starting at `start`.
    #[staticmethod]
    #[pyo3(signature = (values, start=0))]
    fn from_values(values: Vec<f64>, start: i32) -> Self {
        Self {
            inner: phenowarp::Series::from_values(start, values),
        }
    }

    #[getter]
    fn days(&self) -> Vec<i32> {
        self.inner.days().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn flags(&self) -> Vec<&'static str> {
        self.inner.flags().iter().map(|f| f.as_str()).collect()
    }

    fn scaled(&self, c: f64) -> Self {
        Self {
            inner: self.inner.scaled(c),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        match (self.inner.first_day(), self.inner.last_day()) {
            (Some(a), Some(b)) => format!("Series(len={}, days={a}..{b})", self.inner.len()),
            _ => "Series(len=0)".into(),
        }
    }
}

impl From<phenowarp::Series> for PySeries {
    fn from(inner: phenowarp::Series) -> Self {
        Self { inner }
    }
}

/// One field observed in one year, optionally labeled.
#[pyclass(name = "FieldSample", module = "phenowarp", frozen)]
pub struct PyFieldSample {
    inner: phenowarp::FieldSample,
}

#[pymethods]
impl PyFieldSample {
    #[new]
    #[pyo3(signature = (field_id, year, series, label=None))]
    fn new(field_id: String, year: i32, series: &PySeries, label: Option<String>) -> Self {
        Self {
            inner: phenowarp::FieldSample::new(field_id, year, label, series.inner.clone()),
        }
    }

    #[getter]
    fn field_id(&self) -> &str {
        &self.inner.field_id
    }

    #[getter]
    fn year(&self) -> i32 {
        self.inner.year
    }

    #[getter]
    fn label(&self) -> Option<&str> {
        self.inner.label.as_deref()
    }

    #[getter]
    fn series(&self) -> PySeries {
        self.inner.series.clone().into()
    }

    fn __repr__(&self) -> String {
        format!(
            "FieldSample({:?}, {}, label={:?}, len={})",
            self.inner.field_id,
            self.inner.year,
            self.inner.label,
            self.inner.series.len()
        )
    }
}

fn wrap_samples(samples: Vec<phenowarp::FieldSample>) -> Vec<PyFieldSample> {
    samples.into_iter().map(|inner| PyFieldSample { inner }).collect()
}

fn unwrap_samples(samples: &[PyRef<'_, PyFieldSample>]) -> Vec<phenowarp::FieldSample> {
    samples.iter().map(|s| s.inner.clone()).collect()
}

#[pyfunction]
#[pyo3(signature = (x, y, *, measure="vdtw", band_days=15.0, twdtw_alpha=0.1, twdtw_beta=50.0, vector_mode="pair"))]
fn distance(
    x: &PySeries,
    y: &PySeries,
    measure: &str,
    band_days: f64,
    twdtw_alpha: f64,
    twdtw_beta: f64,
    vector_mode: &str,
) -> PyResult<f64> {
    let cfg = warp(measure, band_days, twdtw_alpha, twdtw_beta, vector_mode)?;
    dist::distance(&x.inner, &y.inner, &cfg).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, y, *, band_days=15.0, vector_mode="pair"))]
fn vdtw(x: &PySeries, y: &PySeries, band_days: f64, vector_mode: &str) -> PyResult<f64> {
    let cfg = warp("vdtw", band_days, 0.1, 50.0, vector_mode)?;
    dist::vdtw(&x.inner, &y.inner, &cfg).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, y, *, band_days=15.0))]
fn dtw(x: &PySeries, y: &PySeries, band_days: f64) -> PyResult<f64> {
    let cfg = warp("dtw", band_days, 0.1, 50.0, "pair")?;
    dist::dtw(&x.inner, &y.inner, &cfg).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, y, *, band_days=15.0, alpha=0.1, beta=50.0))]
fn twdtw(x: &PySeries, y: &PySeries, band_days: f64, alpha: f64, beta: f64) -> PyResult<f64> {
    let cfg = warp("twdtw", band_days, alpha, beta, "pair")?;
    dist::twdtw(&x.inner, &y.inner, &cfg).map_err(err)
}

#[pyfunction]
fn sam(x: &PySeries, y: &PySeries) -> PyResult<f64> {
    dist::sam(&x.inner, &y.inner).map_err(err)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Local (`psi`) and accumulated (`acc`) cost matrices; `distance` is None when the band blocks every path.
#[pyfunction]
#[pyo3(signature = (x, y, *, measure="vdtw", band_days=15.0, twdtw_alpha=0.1, twdtw_beta=50.0, vector_mode="pair"))]
#[allow(clippy::too_many_arguments)]
fn cost_matrices<'py>(
    py: Python<'py>,
    x: &PySeries,
    y: &PySeries,
    measure: &str,
    band_days: f64,
    twdtw_alpha: f64,
    twdtw_beta: f64,
    vector_mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = warp(measure, band_days, twdtw_alpha, twdtw_beta, vector_mode)?;
    let m = dist::cost_matrices(&x.inner, &y.inner, &cfg).map_err(err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("psi", rows(&m.psi))?;
    out.set_item("acc", rows(&m.acc))?;
    out.set_item("distance", m.distance)?;
    Ok(out.into_any())
}

#[pyfunction]
#[pyo3(signature = (kind, *, blue, green, red, nir))]
fn compute_index(kind: &str, blue: f64, green: f64, red: f64, nir: f64) -> PyResult<f64> {
    let kind = kind.parse::<IndexKind>().map_err(value_err)?;
    vegindex::compute_index(kind, Reflectance { blue, green, red, nir }, &IndexParams::default()).map_err(err)
}

#[pyfunction]
fn fill_cloud_gaps_idw(series: &PySeries) -> PyResult<PySeries> {
    pre::fill_cloud_gaps_idw(&series.inner).map(Into::into).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (series, window=5, order=2))]
fn savitzky_golay(series: &PySeries, window: usize, order: usize) -> PyResult<PySeries> {
    pre::savitzky_golay(&series.inner, window, order).map(Into::into).map_err(err)
}

#[pyfunction]
fn fit_double_sigmoid<'py>(py: Python<'py>, series: &PySeries) -> PyResult<Bound<'py, PyAny>> {
    let fit = pre::fit_double_sigmoid(&series.inner).map_err(err)?;
    to_py(py, &fit)
}

/// Intersection of the calendars' day spans as `(t_l, t_u, step)`.
#[pyfunction]
#[pyo3(signature = (calendars, step=1))]
fn common_grid(calendars: Vec<Vec<i32>>, step: i32) -> PyResult<(i32, i32, i32)> {
    let g = pre::common_grid(&calendars, step).map_err(err)?;
    Ok((g.t_l, g.t_u, g.step))
}

#[pyfunction]
#[pyo3(signature = (series, t_l, t_u, step=1))]
fn resample_linear(series: &PySeries, t_l: i32, t_u: i32, step: i32) -> PyResult<PySeries> {
    let grid = TimeGrid::new(t_l, t_u, step).map_err(err)?;
    pre::resample_linear(&series.inner, &grid).map(Into::into).map_err(err)
}

/// Fill, smooth and resample every field onto one grid. Returns `(samples, report)`.
#[pyfunction]
#[pyo3(signature = (samples, *, smoothing="sg", sg_window=5, sg_order=2, step=1))]
fn preprocess_dataset<'py>(
    py: Python<'py>,
    samples: Vec<PyRef<'py, PyFieldSample>>,
    smoothing: &str,
    sg_window: usize,
    sg_order: usize,
    step: i32,
) -> PyResult<(Vec<PyFieldSample>, Bound<'py, PyAny>)> {
    let cfg = PipelineConfig {
        smoothing: parse_smoothing(smoothing, sg_window, sg_order).map_err(value_err)?,
        step,
    };
    let input = unwrap_samples(&samples);
    let (clean, report) = py.detach(|| pre::preprocess_dataset(&input, &cfg)).map_err(err)?;
    Ok((wrap_samples(clean), to_py(py, &report)?))
}

/// Reads observation and label CSVs into per-field samples.
#[pyfunction]
#[pyo3(signature = (observations, labels, index="msavi"))]
fn read_field_samples(observations: Vec<String>, labels: String, index: &str) -> PyResult<Vec<PyFieldSample>> {
    let kind = index.parse::<IndexKind>().map_err(value_err)?;
    let open = |p: &str| File::open(p).map_err(|e| PyIOError::new_err(format!("{p}: {e}")));
    let mut rows = Vec::new();
    for p in &observations {
        rows.extend(ingest::parse_observations(open(p)?).map_err(err)?);
    }
    let table = ingest::parse_labels(open(&labels)?).map_err(err)?;
    let (samples, _) = ingest::build_field_samples(&rows, &table, kind, &IndexParams::default());
    Ok(wrap_samples(samples))
}

#[pyfunction]
fn median_profile(series: Vec<PyRef<'_, PySeries>>) -> PyResult<PySeries> {
    let refs: Vec<&phenowarp::Series> = series.iter().map(|s| &s.inner).collect();
    window::median_profile(&refs).map(Into::into).map_err(err)
}

#[pyfunction]
fn pivot_day(a: &PySeries, b: &PySeries) -> PyResult<i32> {
    window::pivot_day(&a.inner, &b.inner).map_err(err)
}

/// Discriminative window from per-class median profiles on a shared grid.
#[pyfunction]
#[pyo3(signature = (profiles, *, band_days=15.0, policy="min-length", eps1=1e-3, eps2=1e-3, smoothing_width=3, stability_run=3))]
#[allow(clippy::too_many_arguments)]
fn select_window<'py>(
    py: Python<'py>,
    profiles: BTreeMap<String, PyRef<'py, PySeries>>,
    band_days: f64,
    policy: &str,
    eps1: f64,
    eps2: f64,
    smoothing_width: usize,
    stability_run: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let policy = WindowPolicy {
        multiclass: parse_policy(policy).map_err(value_err)?,
        eps1,
        eps2,
        smoothing_width,
        stability_run,
    };
    let cfg = warp("dtw", band_days, 0.1, 50.0, "pair")?;
    let profiles: BTreeMap<String, phenowarp::Series> =
        profiles.into_iter().map(|(k, v)| (k, v.inner.clone())).collect();
    let result = window::multiclass_window(&profiles, &cfg, &policy).map_err(err)?;
    to_py(py, &result)
}

#[pyfunction]
#[pyo3(signature = (test, train, *, measure="vdtw", band_days=15.0))]
fn nn_classify(test: &PySeries, train: Vec<PyRef<'_, PyFieldSample>>, measure: &str, band_days: f64) -> PyResult<String> {
    let cfg = warp(measure, band_days, 0.1, 50.0, "pair")?;
    classify::nn_classify(&test.inner, &unwrap_samples(&train), &cfg).map_err(err)
}

/// Overall accuracy, kappa and per-class accuracies from paired label lists.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, predicted: Vec<String>, observed: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let cm = classify::confusion(&predicted, &observed).map_err(err)?;
    to_py(py, &classify::metrics(&cm).map_err(err)?)
}

/// Stratified nearest-neighbour experiment. `test_year` defaults to `train_year`.
#[pyfunction]
#[pyo3(signature = (
    samples, train_year, test_year=None, *, measure="vdtw", band_days=15.0, samples_per_class=5,
    replications=100, seed=0, classifier="nearest_neighbor", window=None
))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    samples: Vec<PyRef<'py, PyFieldSample>>,
    train_year: i32,
    test_year: Option<i32>,
    measure: &str,
    band_days: f64,
    samples_per_class: usize,
    replications: usize,
    seed: u64,
    classifier: &str,
    window: Option<(i32, i32)>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig {
        samples_per_class,
        replications,
        seed,
        mode: classifier.parse::<ClassifierMode>().map_err(err)?,
        window,
        ..ExperimentConfig::new(
            warp(measure, band_days, 0.1, 50.0, "pair")?,
            train_year,
            test_year.unwrap_or(train_year),
        )
    };
    let dataset = unwrap_samples(&samples);
    let report = py.detach(|| classify::run_experiment(&cfg, &dataset)).map_err(err)?;
    to_py(py, &report)
}

/// Two synthetic years. `preset` is `two-class` or `s4-benchmark`; scenarios are
/// `identity`, `s1` .. `s4`. Returns `(year_a, year_b)`.
#[pyfunction]
#[pyo3(signature = (*, preset="two-class", n_per_class=100, seed=0, scenario_a=None, scenario_b=None))]
fn generate_dataset(
    preset: &str,
    n_per_class: usize,
    seed: u64,
    scenario_a: Option<&str>,
    scenario_b: Option<&str>,
) -> PyResult<(Vec<PyFieldSample>, Vec<PyFieldSample>)> {
    let mut spec = match preset.replace('_', "-").as_str() {
        "two-class" => DatasetSpec::two_class(n_per_class, TimeGrid::new(110, 334, 8).map_err(err)?),
        "s4-benchmark" => DatasetSpec::s4_benchmark(n_per_class),
        _ => return Err(value_err(format!("unknown preset `{preset}` (two-class or s4-benchmark)"))),
    };
    if let Some(name) = scenario_a {
        spec.scenario_a = ScenarioSpec::named(name).map_err(err)?;
    }
    if let Some(name) = scenario_b {
        spec.scenario_b = ScenarioSpec::named(name).map_err(err)?;
    }
    let (a, b) = simulate::generate_dataset(&spec, seed).map_err(err)?;
    Ok((wrap_samples(a), wrap_samples(b)))
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySeries>()?;
    m.add_class::<PyFieldSample>()?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(vdtw, m)?)?;
    m.add_function(wrap_pyfunction!(dtw, m)?)?;
    m.add_function(wrap_pyfunction!(twdtw, m)?)?;
    m.add_function(wrap_pyfunction!(sam, m)?)?;
    m.add_function(wrap_pyfunction!(cost_matrices, m)?)?;
    m.add_function(wrap_pyfunction!(compute_index, m)?)?;
    m.add_function(wrap_pyfunction!(fill_cloud_gaps_idw, m)?)?;
    m.add_function(wrap_pyfunction!(savitzky_golay, m)?)?;
    m.add_function(wrap_pyfunction!(fit_double_sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(common_grid, m)?)?;
    m.add_function(wrap_pyfunction!(resample_linear, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(read_field_samples, m)?)?;
    m.add_function(wrap_pyfunction!(median_profile, m)?)?;
    m.add_function(wrap_pyfunction!(pivot_day, m)?)?;
    m.add_function(wrap_pyfunction!(select_window, m)?)?;
    m.add_function(wrap_pyfunction!(nn_classify, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[pymodule]
#[pyo3(name = "phenowarp")]
fn phenowarp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

//! Python bindings for the spectral detection toolkit.
//!
//! The surface mirrors the library: build or load a cube, accumulate its
//! statistics, ask for detector weights, score the cube, and run the two
//! verification checks. Spectra and masks cross the boundary as plain
//! lists; matrices come back as row lists. Input mistakes raise ValueError,
//! data degeneracies (singular statistics and friends) raise RuntimeError,
//! and file-system problems raise OSError.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use specdet::detectors::{
    self, BandSubset, DetectorError, DetectorWeights, TargetSignature,
};
use specdet::io::IoError;
use specdet::stats::{accumulate_stats, SceneStats, SpectralCube};
use specdet::synth::{self, Rect, SceneConfig};
use specdet::verify::{self, SubsetSelection};
use std::path::Path;

fn detector_err(e: DetectorError) -> PyErr {
    match e {
        DetectorError::DimensionMismatch { .. }
        | DetectorError::EmptySubset
        | DetectorError::BandOutOfRange { .. }
        | DetectorError::ZeroSignature => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn verify_err(e: verify::VerifyError) -> PyErr {
    match e {
        verify::VerifyError::Detector(inner) => detector_err(inner),
        verify::VerifyError::SubsetEnumerationTooLarge { .. }
        | verify::VerifyError::SubsetNotProper(_)
        | verify::VerifyError::DimensionMismatch { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn io_err(e: IoError) -> PyErr {
    match e {
        IoError::File(inner) => PyOSError::new_err(inner.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix_rows(m: &specdet::SymMatrix) -> Vec<Vec<f64>> {
    (0..m.order())
        .map(|i| (0..m.order()).map(|j| m.get(i, j)).collect())
        .collect()
}

/// A multiband image held pixel-major in memory.
#[pyclass(name = "SpectralCube", frozen)]
struct PyCube {
    inner: SpectralCube,
}

#[pymethods]
impl PyCube {
    #[new]
    fn new(rows: usize, cols: usize, bands: usize, values: Vec<f64>) -> PyResult<Self> {
        SpectralCube::new(rows, cols, bands, values)
            .map(|inner| PyCube { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn bands(&self) -> usize {
        self.inner.bands()
    }

    #[getter]
    fn n_pixels(&self) -> usize {
        self.inner.n_pixels()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn pixel(&self, row: usize, col: usize) -> PyResult<Vec<f64>> {
        if row >= self.inner.rows() || col >= self.inner.cols() {
            return Err(PyValueError::new_err(format!(
                "pixel ({row},{col}) outside {} x {}",
                self.inner.rows(),
                self.inner.cols()
            )));
        }
        Ok(self.inner.pixel_at(row, col).to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "SpectralCube({} x {} pixels, {} bands)",
            self.inner.rows(),
            self.inner.cols(),
            self.inner.bands()
        )
    }
}

/// First and second sample moments of a pixel set.
#[pyclass(name = "SceneStats", frozen)]
struct PyStats {
    inner: SceneStats,
}

#[pymethods]
impl PyStats {
    #[getter]
    fn n_pixels(&self) -> usize {
        self.inner.n_pixels()
    }

    #[getter]
    fn bands(&self) -> usize {
        self.inner.bands()
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean().to_vec()
    }

    fn correlation(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.correlation())
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.covariance())
    }

    fn __repr__(&self) -> String {
        format!(
            "SceneStats({} pixels, {} bands)",
            self.inner.n_pixels(),
            self.inner.bands()
        )
    }
}

/// Solved filter weights plus the normalizer they were scaled by.
#[pyclass(name = "DetectorWeights", frozen)]
struct PyWeights {
    inner: DetectorWeights,
}

#[pymethods]
impl PyWeights {
    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn normalizer(&self) -> f64 {
        self.inner.normalizer()
    }

    #[getter]
    fn subset(&self) -> Option<Vec<usize>> {
        self.inner.subset().map(|s| s.indices().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "DetectorWeights({}, {} weights)",
            self.inner.kind(),
            self.inner.weights().len()
        )
    }
}

/// Per-pixel scores, row-major.
#[pyclass(name = "DetectionMap", frozen)]
struct PyMap {
    inner: detectors::DetectionMap,
}

#[pymethods]
impl PyMap {
    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    fn scores(&self) -> Vec<f64> {
        self.inner.scores().to_vec()
    }

    fn score_at(&self, row: usize, col: usize) -> f64 {
        self.inner.score_at(row, col)
    }

    fn mean_square(&self) -> f64 {
        self.inner.mean_square()
    }

    fn __repr__(&self) -> String {
        format!(
            "DetectionMap({}, {} x {})",
            self.inner.kind(),
            self.inner.rows(),
            self.inner.cols()
        )
    }
}

/// Result of the strict band-improvement check.
#[pyclass(name = "Theorem1Report", frozen)]
struct PyTheorem1Report {
    inner: verify::Theorem1Report,
}

#[pymethods]
impl PyTheorem1Report {
    #[getter]
    fn full_energy(&self) -> f64 {
        self.inner.full_energy
    }

    fn subset_energies(&self) -> Vec<(Vec<usize>, f64)> {
        self.inner
            .subset_energies
            .iter()
            .map(|(s, e)| (s.indices().to_vec(), *e))
            .collect()
    }

    fn violations(&self) -> Vec<Vec<usize>> {
        self.inner
            .violations
            .iter()
            .map(|s| s.indices().to_vec())
            .collect()
    }

    fn skipped(&self) -> Vec<(Vec<usize>, String)> {
        self.inner
            .skipped
            .iter()
            .map(|(s, e)| (s.indices().to_vec(), e.to_string()))
            .collect()
    }

    #[getter]
    fn strict_margin(&self) -> f64 {
        self.inner.strict_margin
    }

    #[getter]
    fn tolerance(&self) -> f64 {
        self.inner.tolerance
    }

    fn certified(&self) -> bool {
        self.inner.certified()
    }
}

/// Result of the matched-filter equivalence check.
#[pyclass(name = "Theorem2Report", frozen)]
struct PyTheorem2Report {
    inner: verify::Theorem2Report,
}

#[pymethods]
impl PyTheorem2Report {
    #[getter]
    fn c_ratio(&self) -> f64 {
        self.inner.c_ratio
    }

    #[getter]
    fn max_component_deviation(&self) -> f64 {
        self.inner.max_component_deviation
    }

    #[getter]
    fn map_r2(&self) -> f64 {
        self.inner.map_r2
    }

    #[getter]
    fn slope(&self) -> f64 {
        self.inner.slope
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.intercept
    }

    #[getter]
    fn expected_intercept(&self) -> f64 {
        self.inner.expected_intercept
    }

    #[getter]
    fn tolerance(&self) -> f64 {
        self.inner.tolerance
    }

    fn certified(&self) -> bool {
        self.inner.certified()
    }
}

#[pyfunction(name = "accumulate_stats")]
fn py_accumulate_stats(cube: &PyCube) -> PyResult<PyStats> {
    accumulate_stats(&cube.inner)
        .map(|inner| PyStats { inner })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction(name = "cem_weights")]
#[pyo3(signature = (stats, target, subset = None))]
fn py_cem_weights(
    stats: &PyStats,
    target: Vec<f64>,
    subset: Option<Vec<usize>>,
) -> PyResult<PyWeights> {
    let target = TargetSignature::new(target);
    let inner = match subset {
        None => detectors::cem_weights(&stats.inner, &target),
        Some(indices) => {
            let subset =
                BandSubset::new(&indices, stats.inner.bands()).map_err(detector_err)?;
            detectors::cem_subset_weights(&stats.inner, &target, &subset)
        }
    }
    .map_err(detector_err)?;
    Ok(PyWeights { inner })
}

#[pyfunction(name = "mf_weights")]
fn py_mf_weights(stats: &PyStats, target: Vec<f64>) -> PyResult<PyWeights> {
    detectors::mf_weights(&stats.inner, &TargetSignature::new(target))
        .map(|inner| PyWeights { inner })
        .map_err(detector_err)
}

#[pyfunction(name = "mf_weights_expanded")]
fn py_mf_weights_expanded(stats: &PyStats, target: Vec<f64>) -> PyResult<PyWeights> {
    detectors::mf_weights_expanded(&stats.inner, &TargetSignature::new(target))
        .map(|inner| PyWeights { inner })
        .map_err(detector_err)
}

#[pyfunction(name = "acem_weights")]
fn py_acem_weights(stats: &PyStats, target: Vec<f64>) -> PyResult<PyWeights> {
    detectors::acem_weights(&stats.inner, &TargetSignature::new(target))
        .map(|inner| PyWeights { inner })
        .map_err(detector_err)
}

#[pyfunction(name = "output_energy")]
#[pyo3(signature = (stats, target, subset = None))]
fn py_output_energy(
    stats: &PyStats,
    target: Vec<f64>,
    subset: Option<Vec<usize>>,
) -> PyResult<f64> {
    let target = TargetSignature::new(target);
    let subset = match subset {
        None => None,
        Some(indices) => {
            Some(BandSubset::new(&indices, stats.inner.bands()).map_err(detector_err)?)
        }
    };
    detectors::output_energy(&stats.inner, &target, subset.as_ref()).map_err(detector_err)
}

#[pyfunction(name = "apply_detector")]
fn py_apply_detector(cube: &PyCube, weights: &PyWeights, stats: &PyStats) -> PyResult<PyMap> {
    detectors::apply_detector(&cube.inner, &weights.inner, &stats.inner)
        .map(|inner| PyMap { inner })
        .map_err(detector_err)
}

#[pyfunction(name = "generate_scene")]
#[pyo3(signature = (seed = 42, bands = 2, rows = 50, cols = 50))]
fn py_generate_scene(
    seed: u64,
    bands: usize,
    rows: usize,
    cols: usize,
) -> PyResult<(PyCube, Vec<bool>, Vec<f64>)> {
    let mut config = SceneConfig::default_for_bands(bands);
    config.seed = seed;
    config.rows = rows;
    config.cols = cols;
    let height = 5.min(rows);
    let width = 5.min(cols);
    config.target_rect = Rect {
        row0: (rows - height) / 2,
        col0: (cols - width) / 2,
        height,
        width,
    };
    let scene =
        synth::generate_scene(&config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((
        PyCube { inner: scene.cube },
        scene.truth,
        scene.target.values().to_vec(),
    ))
}

#[pyfunction(name = "generate_scene_from_config")]
fn py_generate_scene_from_config(text: &str) -> PyResult<(PyCube, Vec<bool>, Vec<f64>)> {
    let config =
        SceneConfig::from_key_value_text(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let scene =
        synth::generate_scene(&config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((
        PyCube { inner: scene.cube },
        scene.truth,
        scene.target.values().to_vec(),
    ))
}

#[pyfunction(name = "check_theorem1")]
#[pyo3(signature = (cube, target, tolerance = 1e-12, selection = "all"))]
fn py_check_theorem1(
    cube: &PyCube,
    target: Vec<f64>,
    tolerance: f64,
    selection: &str,
) -> PyResult<PyTheorem1Report> {
    let selection = match selection {
        "all" => SubsetSelection::AllProper,
        "leave-one-out" => SubsetSelection::LeaveOneOut,
        other => {
            return Err(PyValueError::new_err(format!(
                "selection must be `all` or `leave-one-out`, not `{other}`"
            )))
        }
    };
    let stats = accumulate_stats(&cube.inner).map_err(|e| PyValueError::new_err(e.to_string()))?;
    verify::check_theorem1(&stats, &TargetSignature::new(target), &selection, tolerance)
        .map(|inner| PyTheorem1Report { inner })
        .map_err(verify_err)
}

#[pyfunction(name = "check_theorem2")]
#[pyo3(signature = (cube, target, tolerance = 1e-10))]
fn py_check_theorem2(
    cube: &PyCube,
    target: Vec<f64>,
    tolerance: f64,
) -> PyResult<PyTheorem2Report> {
    verify::check_theorem2(&cube.inner, &TargetSignature::new(target), tolerance)
        .map(|inner| PyTheorem2Report { inner })
        .map_err(verify_err)
}

#[pyfunction(name = "pearson_r2")]
fn py_pearson_r2(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    verify::pearson_r2(&x, &y).map_err(verify_err)
}

#[pyfunction(name = "roc_auc")]
fn py_roc_auc(scores: Vec<f64>, truth: Vec<bool>) -> PyResult<f64> {
    verify::roc_auc_scores(&scores, &truth).map_err(verify_err)
}

#[pyfunction(name = "read_cube")]
#[pyo3(signature = (header_path, payload_path = None))]
fn py_read_cube(header_path: &str, payload_path: Option<&str>) -> PyResult<PyCube> {
    let header = Path::new(header_path);
    let payload = match payload_path {
        Some(p) => Path::new(p).to_path_buf(),
        None => header.with_extension("img"),
    };
    specdet::io::load_cube(header, &payload)
        .map(|(_, cube)| PyCube { inner: cube })
        .map_err(io_err)
}

#[pyfunction(name = "write_cube")]
fn py_write_cube(cube: &PyCube, header_path: &str, payload_path: &str) -> PyResult<()> {
    specdet::io::save_cube(
        Path::new(header_path),
        Path::new(payload_path),
        &cube.inner,
        &specdet::io::EnviWriteOptions::default(),
    )
    .map_err(io_err)
}

#[pymodule]
fn specdet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCube>()?;
    m.add_class::<PyStats>()?;
    m.add_class::<PyWeights>()?;
    m.add_class::<PyMap>()?;
    m.add_class::<PyTheorem1Report>()?;
    m.add_class::<PyTheorem2Report>()?;
    m.add_function(wrap_pyfunction!(py_accumulate_stats, m)?)?;
    m.add_function(wrap_pyfunction!(py_cem_weights, m)?)?;
    m.add_function(wrap_pyfunction!(py_mf_weights, m)?)?;
    m.add_function(wrap_pyfunction!(py_mf_weights_expanded, m)?)?;
    m.add_function(wrap_pyfunction!(py_acem_weights, m)?)?;
    m.add_function(wrap_pyfunction!(py_output_energy, m)?)?;
    m.add_function(wrap_pyfunction!(py_apply_detector, m)?)?;
    m.add_function(wrap_pyfunction!(py_generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(py_generate_scene_from_config, m)?)?;
    m.add_function(wrap_pyfunction!(py_check_theorem1, m)?)?;
    m.add_function(wrap_pyfunction!(py_check_theorem2, m)?)?;
    m.add_function(wrap_pyfunction!(py_pearson_r2, m)?)?;
    m.add_function(wrap_pyfunction!(py_roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(py_read_cube, m)?)?;
    m.add_function(wrap_pyfunction!(py_write_cube, m)?)?;
    Ok(())
}

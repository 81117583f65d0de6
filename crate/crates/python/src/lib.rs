//! Python bindings for the main grid, sampling, and estimation operations.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use cropchange_core::crops;
use cropchange_core::error::Error;
use cropchange_core::estimate;
use cropchange_core::geo;
use cropchange_core::grid;
use cropchange_core::sampling;
use cropchange_core::synth;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Single-band raster of class codes with nodata cells.
#[pyclass(name = "ClassGrid", skip_from_py_object)]
#[derive(Clone)]
struct PyClassGrid {
    inner: grid::ClassGrid,
}

#[pymethods]
impl PyClassGrid {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyClassGrid {
            inner: grid::ClassGrid::read(&path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(&path).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (ncols, nrows, xll, yll, cellsize, cells, nodata=-9999.0))]
    #[allow(clippy::too_many_arguments)]
    fn from_cells(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        cells: Vec<Option<u8>>,
        nodata: f64,
    ) -> PyResult<Self> {
        let header = grid::GridHeader::new(ncols, nrows, xll, yll, cellsize, nodata).map_err(err)?;
        Ok(PyClassGrid {
            inner: grid::ClassGrid::new(header, cells).map_err(err)?,
        })
    }

    #[getter]
    fn ncols(&self) -> usize {
        self.inner.header.ncols
    }

    #[getter]
    fn nrows(&self) -> usize {
        self.inner.header.nrows
    }

    #[getter]
    fn cellsize(&self) -> f64 {
        self.inner.header.cellsize
    }

    fn get(&self, row: usize, col: usize) -> PyResult<Option<u8>> {
        if row >= self.inner.header.nrows || col >= self.inner.header.ncols {
            return Err(PyValueError::new_err("cell index out of range"));
        }
        Ok(self.inner.get(row, col))
    }

    fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let p = self.inner.header.cell_center(row, col);
        (p.lon, p.lat)
    }

    fn class_counts(&self) -> BTreeMap<u8, u64> {
        grid::class_pixel_counts(&self.inner, None)
    }

    fn __repr__(&self) -> String {
        format!(
            "ClassGrid({}x{} cells at {} deg/pixel)",
            self.inner.header.nrows, self.inner.header.ncols, self.inner.header.cellsize
        )
    }
}

/// Single-band raster of reals (e.g. a peak-NDVI surface).
#[pyclass(name = "RealGrid", skip_from_py_object)]
#[derive(Clone)]
struct PyRealGrid {
    inner: grid::RealGrid,
}

#[pymethods]
impl PyRealGrid {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyRealGrid {
            inner: grid::RealGrid::read(&path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(&path).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (ncols, nrows, xll, yll, cellsize, cells, nodata=-9999.0))]
    #[allow(clippy::too_many_arguments)]
    fn from_cells(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        cells: Vec<Option<f64>>,
        nodata: f64,
    ) -> PyResult<Self> {
        let header = grid::GridHeader::new(ncols, nrows, xll, yll, cellsize, nodata).map_err(err)?;
        Ok(PyRealGrid {
            inner: grid::RealGrid::new(header, cells).map_err(err)?,
        })
    }

    fn get(&self, row: usize, col: usize) -> PyResult<Option<f64>> {
        if row >= self.inner.header.nrows || col >= self.inner.header.ncols {
            return Err(PyValueError::new_err("cell index out of range"));
        }
        Ok(self.inner.get(row, col))
    }
}

/// Four-class change map with per-stratum pixel counts.
#[pyclass(name = "ChangeMap")]
struct PyChangeMap {
    inner: crops::ChangeMap,
}

#[pymethods]
impl PyChangeMap {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyChangeMap {
            inner: crops::ChangeMap::read(&path).map_err(err)?,
        })
    }

    #[getter]
    fn grid(&self) -> PyClassGrid {
        PyClassGrid {
            inner: self.inner.grid.clone(),
        }
    }

    fn class_counts(&self) -> BTreeMap<String, u64> {
        crops::ChangeClass::ALL
            .iter()
            .map(|c| (c.label().to_string(), self.inner.class_counts[c.code() as usize]))
            .collect()
    }
}

/// Combine two binary annual maps into the four-class change map.
#[pyfunction]
fn compose_change(map_2020: &PyClassGrid, map_2021: &PyClassGrid) -> PyResult<PyChangeMap> {
    Ok(PyChangeMap {
        inner: crops::compose_change(&map_2020.inner, &map_2021.inner).map_err(err)?,
    })
}

/// Reclassify crop pixels with anomalously low peaks; returns the filtered
/// map and the number of reclassified pixels.
#[pyfunction]
#[pyo3(signature = (crop_map, peaks, n_sigma=3.5))]
fn apply_ndvi_filter(
    crop_map: &PyClassGrid,
    peaks: &PyRealGrid,
    n_sigma: f64,
) -> PyResult<(PyClassGrid, u64)> {
    let cfg = crops::FilterConfig::new(n_sigma).map_err(err)?;
    let (filtered, reclassified) =
        crops::apply_ndvi_filter(&crop_map.inner, &peaks.inner, cfg).map_err(err)?;
    Ok((PyClassGrid { inner: filtered }, reclassified))
}

/// Great-circle distance in meters.
#[pyfunction]
fn haversine_m(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> PyResult<f64> {
    let a = geo::GeoPoint::new(lon1, lat1).map_err(err)?;
    let b = geo::GeoPoint::new(lon2, lat2).map_err(err)?;
    Ok(geo::haversine_m(&a, &b))
}

/// Stratified allocation with pre-allocation to the change strata; returns
/// {stratum code: n}.
#[pyfunction]
fn allocate(
    total_n: usize,
    prealloc_per_change: usize,
    stratum_areas: BTreeMap<u8, f64>,
) -> PyResult<BTreeMap<u8, usize>> {
    let plan = sampling::allocate(total_n, prealloc_per_change, &stratum_areas).map_err(err)?;
    Ok(plan.per_stratum_n)
}

/// Draw a seeded stratified sample of pixel centers; returns a list of
/// {id, lon, lat, stratum} dicts.
#[pyfunction]
#[pyo3(signature = (change_map, total_n, prealloc_per_change, seed, pixel_area_ha=0.01))]
fn draw_sample<'py>(
    py: Python<'py>,
    change_map: &PyChangeMap,
    total_n: usize,
    prealloc_per_change: usize,
    seed: u64,
    pixel_area_ha: f64,
) -> PyResult<Bound<'py, PyList>> {
    let area = grid::PixelArea::constant(pixel_area_ha).map_err(err)?;
    let areas = grid::stratum_areas(&change_map.inner.grid, &area, None);
    let plan = sampling::allocate(total_n, prealloc_per_change, &areas).map_err(err)?;
    let records = sampling::draw_sample(&change_map.inner, &plan, seed).map_err(err)?;
    let out = PyList::empty(py);
    for r in records {
        let d = PyDict::new(py);
        d.set_item("id", r.id)?;
        d.set_item("lon", r.location.lon)?;
        d.set_item("lat", r.location.lat)?;
        d.set_item("stratum", r.stratum.code())?;
        out.append(d)?;
    }
    Ok(out)
}

/// Stratified area estimate from a confusion matrix; returns one dict per
/// reference class with proportion, area_ha, se_proportion, ci95_ha.
#[pyfunction]
fn estimate_area<'py>(
    py: Python<'py>,
    stratum_labels: Vec<String>,
    ref_labels: Vec<String>,
    counts: Vec<Vec<u64>>,
    stratum_areas: Vec<f64>,
) -> PyResult<Bound<'py, PyList>> {
    let cm = estimate::ConfusionMatrix::new(stratum_labels, ref_labels, counts, stratum_areas)
        .map_err(err)?;
    let est = estimate::estimate_area(&cm);
    let out = PyList::empty(py);
    for class in est.classes {
        let d = PyDict::new(py);
        d.set_item("class", class.label)?;
        d.set_item("proportion", class.proportion)?;
        d.set_item("area_ha", class.area_ha)?;
        d.set_item("se_proportion", class.se_proportion)?;
        d.set_item("ci95_ha", class.ci95_ha)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Unstratified binary metrics with seeded bootstrap half-widths.
#[pyfunction]
#[pyo3(signature = (tn, fp, fn_, tp, resamples=1000, seed=0))]
fn binary_accuracy<'py>(
    py: Python<'py>,
    tn: u64,
    fp: u64,
    fn_: u64,
    tp: u64,
    resamples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let counts = estimate::BinaryCounts { tn, fp, fn_, tp };
    let cfg = estimate::BootstrapConfig { resamples, seed };
    let report = estimate::binary_accuracy(&counts, &cfg).map_err(err)?;
    let crop = &report.classes[0];
    let f1 = crop.f1.expect("binary reports carry f1");
    let d = PyDict::new(py);
    d.set_item("precision", crop.users.value)?;
    d.set_item("precision_hw", crop.users.half_width)?;
    d.set_item("recall", crop.producers.value)?;
    d.set_item("recall_hw", crop.producers.half_width)?;
    d.set_item("f1", f1.value)?;
    d.set_item("f1_hw", f1.half_width)?;
    d.set_item("overall_accuracy", report.overall.value)?;
    d.set_item("overall_accuracy_hw", report.overall.half_width)?;
    d.set_item("tpr", crop.tpr)?;
    d.set_item("fpr", crop.fpr)?;
    Ok(d)
}

/// Monte Carlo bias/coverage trial on a synthetic landscape; returns one
/// dict per change class.
#[pyfunction]
#[pyo3(signature = (seed, reps, nrows=100, ncols=100, confusion=0.1, total_n=400, prealloc=50, patch_size=5))]
#[allow(clippy::too_many_arguments)]
fn coverage_trial<'py>(
    py: Python<'py>,
    seed: u64,
    reps: usize,
    nrows: usize,
    ncols: usize,
    confusion: f64,
    total_n: usize,
    prealloc: usize,
    patch_size: usize,
) -> PyResult<Bound<'py, PyList>> {
    let spec = synth::SynthSpec {
        ncols,
        nrows,
        proportions: [0.45, 0.35, 0.10, 0.10],
        error_matrix: synth::SynthSpec::symmetric_error(confusion),
        seed,
        patch_size,
    };
    let trial = synth::coverage_trial(&spec, total_n, prealloc, reps).map_err(err)?;
    let out = PyList::empty(py);
    for class in trial.per_class {
        let d = PyDict::new(py);
        d.set_item("class", class.class.label())?;
        d.set_item("true_area_ha", class.true_area_ha)?;
        d.set_item("mean_area_ha", class.mean_area_ha)?;
        d.set_item("relative_bias", class.relative_bias)?;
        d.set_item("coverage", class.coverage)?;
        out.append(d)?;
    }
    Ok(out)
}

#[pymodule]
fn cropchange(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyClassGrid>()?;
    m.add_class::<PyRealGrid>()?;
    m.add_class::<PyChangeMap>()?;
    m.add_function(wrap_pyfunction!(compose_change, m)?)?;
    m.add_function(wrap_pyfunction!(apply_ndvi_filter, m)?)?;
    m.add_function(wrap_pyfunction!(haversine_m, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(draw_sample, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_area, m)?)?;
    m.add_function(wrap_pyfunction!(binary_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_trial, m)?)?;
    Ok(())
}

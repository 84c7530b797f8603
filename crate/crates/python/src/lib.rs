//! Python bindings: listings, model fitting, evaluation and the Hong Kong counterfactual.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sailprice::adadelta;
use sailprice::analysis;
use sailprice::data::{RegionScheme, SailboatRecord};
use sailprice::evaluation::{self, FittedModel, ModelFamily, ModelSpec};
use sailprice::ingest::{self, SyntheticSpec};
use sailprice::metrics;

create_exception!(sailprice_py, SailpriceError, PyException);

fn err(e: sailprice::Error) -> PyErr {
    SailpriceError::new_err(e.to_string())
}

fn spec_for(family: &str, regions: Option<&str>, standardize: Option<bool>) -> PyResult<ModelSpec> {
    let mut spec = ModelSpec::new(ModelFamily::from_name(family).map_err(err)?);
    if let Some(r) = regions {
        spec = spec.with_regions(r.parse::<RegionScheme>().map_err(err)?);
    }
    if let Some(s) = standardize {
        spec.standardize = s;
    }
    Ok(spec)
}

/// A cleaned set of sailboat listings.
#[pyclass(module = "sailprice_py", skip_from_py_object)]
#[derive(Clone)]
struct Listings {
    records: Vec<SailboatRecord>,
}

#[pymethods]
impl Listings {
    /// Loads and cleans a CSV file. Returns the listings and the cleaning counts.
    #[staticmethod]
    fn load_csv<'py>(py: Python<'py>, path: PathBuf) -> PyResult<(Self, Bound<'py, PyDict>)> {
        let (records, report) = ingest::load_csv(&path).map_err(err)?;
        let counts = PyDict::new(py);
        counts.set_item("rows_in", report.rows_in)?;
        counts.set_item("dropped_missing_region", report.dropped_missing_region)?;
        counts.set_item("dropped_missing_technical", report.dropped_missing_technical)?;
        counts.set_item("dropped_malformed", report.dropped_malformed)?;
        counts.set_item("rows_out", report.rows_out)?;
        Ok((Self { records }, counts))
    }

    /// Synthetic listings with all four regions and noise at a fraction of the mean price.
    #[staticmethod]
    #[pyo3(signature = (n_rows, seed, noise_fraction = None))]
    fn synthetic(n_rows: usize, seed: u64, noise_fraction: Option<f64>) -> PyResult<Self> {
        let mut spec = SyntheticSpec::acceptance(n_rows, seed).map_err(err)?;
        if let Some(f) = noise_fraction {
            spec = spec.with_noise_fraction(f).map_err(err)?;
        }
        Ok(Self { records: ingest::generate_synthetic(&spec).map_err(err)? })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| SailpriceError::new_err(e.to_string()))?;
        ingest::write_csv(&self.records, file).map_err(err)
    }

    fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    fn prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.listing_price).collect()
    }

    fn regions(&self) -> Vec<String> {
        self.records.iter().map(|r| r.region.to_string()).collect()
    }

    /// Numeric values of one column, e.g. `length_ft` or `hull`.
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        analysis::column_values(&self.records, name).map_err(err)
    }

    /// Rows whose id is in `ids`, in the order given.
    fn subset(&self, ids: Vec<String>) -> PyResult<Self> {
        let by_id: HashMap<&str, &SailboatRecord> = self.records.iter().map(|r| (r.id.as_str(), r)).collect();
        let records = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| SailpriceError::new_err(format!("unknown id {id:?}")))
            })
            .collect::<PyResult<_>>()?;
        Ok(Self { records })
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }

    fn __repr__(&self) -> String {
        format!("Listings(n={})", self.records.len())
    }
}

/// A fitted linear or boosted model.
#[pyclass(module = "sailprice_py")]
struct Model {
    inner: FittedModel,
    #[pyo3(get)]
    loss_trace: Vec<f64>,
}

#[pymethods]
impl Model {
    /// Fits `family` (ols, gd, adadelta or gbr) on all given listings.
    #[staticmethod]
    #[pyo3(signature = (listings, family = "ols", regions = None, standardize = None))]
    fn fit(listings: &Listings, family: &str, regions: Option<&str>, standardize: Option<bool>) -> PyResult<Self> {
        let spec = spec_for(family, regions, standardize)?;
        let out = evaluation::fit_model(&spec, &listings.records).map_err(err)?;
        Ok(Self { inner: out.model, loss_trace: out.loss_trace })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: FittedModel::from_text(text).map_err(err)?, loss_trace: Vec::new() })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn predict(&self, listings: &Listings) -> PyResult<Vec<f64>> {
        Ok(self.inner.predict(&listings.records).map_err(err)?.values)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner {
            FittedModel::Linear(_) => "linear",
            FittedModel::Boosted(_) => "gbr",
        }
    }

    fn columns(&self) -> Vec<String> {
        self.inner.schema().column_names()
    }

    /// Intercept and named coefficients of a linear model, on the scale it was fit.
    fn coefficients<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let FittedModel::Linear(m) = &self.inner else {
            return Err(SailpriceError::new_err("boosted models have no coefficients"));
        };
        let out = PyDict::new(py);
        out.set_item("intercept", m.intercept)?;
        for (name, c) in m.named_coefficients() {
            out.set_item(name, c)?;
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={}, columns={})", self.kind(), self.inner.schema().width())
    }
}

/// Running averages for the ADADELTA update.
#[pyclass(module = "sailprice_py")]
struct AdadeltaState {
    inner: adadelta::AdadeltaState,
}

#[pymethods]
impl AdadeltaState {
    #[new]
    #[pyo3(signature = (dim, rho = 0.95, epsilon = 1e-6))]
    fn new(dim: usize, rho: f64, epsilon: f64) -> PyResult<Self> {
        Ok(Self { inner: adadelta::AdadeltaState::new(dim, rho, epsilon).map_err(err)? })
    }

    /// Applies one update and returns the new parameters.
    fn step(&mut self, params: Vec<f64>, grads: Vec<f64>) -> PyResult<Vec<f64>> {
        let mut params = params;
        adadelta::adadelta_step(&mut self.inner, &mut params, &grads).map_err(err)?;
        Ok(params)
    }
}

#[pyfunction]
fn mse(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    metrics::mse(&actual, &predicted).map_err(err)
}

#[pyfunction]
fn mae(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    metrics::mae(&actual, &predicted).map_err(err)
}

#[pyfunction]
fn residuals(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<Vec<f64>> {
    metrics::residuals(&actual, &predicted).map_err(err)
}

/// Seeded split of ids into two halves, the first holding the extra id when n is odd.
#[pyfunction]
fn make_split(ids: Vec<String>, seed: u64) -> PyResult<(Vec<String>, Vec<String>)> {
    let plan = evaluation::make_split(&ids, seed).map_err(err)?;
    Ok((plan.half_a_ids, plan.half_b_ids))
}

/// Fits on each half and scores on the other. Returns metrics and relative gaps.
#[pyfunction]
#[pyo3(signature = (listings, family = "ols", seed = 42, regions = None))]
fn swap<'py>(
    py: Python<'py>,
    listings: &Listings,
    family: &str,
    seed: u64,
    regions: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = spec_for(family, regions, None)?;
    let split = evaluation::make_split(&listings.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>(), seed)
        .map_err(err)?;
    let r = evaluation::run_swap(&listings.records, &spec, &split).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("forward_mse", r.forward.mse)?;
    out.set_item("forward_mae", r.forward.mae)?;
    out.set_item("backward_mse", r.backward.mse)?;
    out.set_item("backward_mae", r.backward.mae)?;
    out.set_item("relative_mse_gap", r.relative_mse_gap)?;
    out.set_item("relative_mae_gap", r.relative_mae_gap)?;
    out.set_item("flagged", r.flagged())?;
    Ok(out)
}

/// Pearson r and trend line of each numeric column against price.
#[pyfunction]
fn correlations(listings: &Listings) -> PyResult<Vec<(String, f64, f64, f64)>> {
    Ok(analysis::correlate_features(&listings.records)
        .map_err(err)?
        .into_iter()
        .map(|c| (c.feature, c.pearson_r, c.trend_slope, c.trend_intercept))
        .collect())
}

/// Relabels a sample of non Hong Kong listings as Hong Kong and predicts both versions.
/// Returns rows of (id, hull, original_region, pred_original, pred_hk, delta).
#[pyfunction]
#[pyo3(signature = (model, listings, sample_size = analysis::DEFAULT_COUNTERFACTUAL_SAMPLE, seed = 0))]
fn hk_counterfactual(
    model: &Model,
    listings: &Listings,
    sample_size: usize,
    seed: u64,
) -> PyResult<Vec<(String, String, String, f64, f64, f64)>> {
    let cf = analysis::hk_counterfactual(&model.inner, &listings.records, sample_size, seed).map_err(err)?;
    Ok(cf
        .rows
        .into_iter()
        .map(|r| (r.id, r.hull.to_string(), r.original_region.to_string(), r.pred_original, r.pred_hk, r.delta))
        .collect())
}

#[pymodule]
fn sailprice_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SailpriceError", m.py().get_type::<SailpriceError>())?;
    m.add_class::<Listings>()?;
    m.add_class::<Model>()?;
    m.add_class::<AdadeltaState>()?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(residuals, m)?)?;
    m.add_function(wrap_pyfunction!(make_split, m)?)?;
    m.add_function(wrap_pyfunction!(swap, m)?)?;
    m.add_function(wrap_pyfunction!(correlations, m)?)?;
    m.add_function(wrap_pyfunction!(hk_counterfactual, m)?)?;
    Ok(())
}

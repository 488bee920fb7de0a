//! Python bindings: design spaces, the composite response, orthogonal arrays,
//! LHS, Gaussian-process fits and whole campaigns.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use doe_core::campaign::oracle_seed;
use doe_core::report::{compare, report_single};
use doe_core::{gpr, sampling, taguchi};

create_exception!(doe_py, DoeError, PyException, "Domain error; the message starts with its code.");

fn err(e: doe_core::Error) -> PyErr {
    let msg = e.to_string();
    let prefix = format!("{}: ", e.code());
    let body = msg.strip_prefix(&prefix).unwrap_or(&msg);
    DoeError::new_err(format!("{prefix}{body}"))
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for doe_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn point(indices: Vec<usize>) -> doe_core::DesignPoint {
    doe_core::DesignPoint(indices)
}

#[pyclass(name = "DesignSpace", module = "doe_py", from_py_object)]
#[derive(Clone)]
struct PyDesignSpace {
    inner: doe_core::DesignSpace,
}

#[pymethods]
impl PyDesignSpace {
    /// `factors` is a list of `(name, unit, levels)`.
    #[new]
    fn new(factors: Vec<(String, String, Vec<f64>)>) -> PyResult<Self> {
        let factors = factors
            .into_iter()
            .map(|(n, u, l)| doe_core::Factor::new(n, u, l))
            .collect::<doe_core::Result<Vec<_>>>()
            .py()?;
        Ok(PyDesignSpace {
            inner: doe_core::DesignSpace::new(factors).py()?,
        })
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(PyDesignSpace {
            inner: doe_core::DesignSpace::preset(name).py()?,
        })
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    #[getter]
    fn grid_size(&self) -> usize {
        self.inner.grid_size()
    }

    #[getter]
    fn factor_names(&self) -> Vec<String> {
        self.inner.factors.iter().map(|f| f.name.clone()).collect()
    }

    fn enumerate_grid(&self) -> Vec<Vec<usize>> {
        self.inner.enumerate_grid().into_iter().map(|p| p.0).collect()
    }

    fn to_real(&self, point_: Vec<usize>) -> PyResult<Vec<f64>> {
        Ok(self.inner.to_real(&point(point_)).py()?.0)
    }

    fn __repr__(&self) -> String {
        format!("DesignSpace({})", self.factor_names().join(", "))
    }
}

/// Composite response `y` for one bead measurement.
#[pyfunction]
fn composite_response(d: f64, w: f64, h: f64) -> PyResult<f64> {
    let g = doe_core::BeadGeometry::new(d, w, h).py()?;
    Ok(doe_core::composite_response(&g).py()?.value())
}

/// Rows of a strength-2 orthogonal array; `orthogonal_array(5, 3)` is the L25.
#[pyfunction]
#[pyo3(signature = (levels=5, columns=3))]
fn orthogonal_array(levels: usize, columns: usize) -> PyResult<Vec<Vec<usize>>> {
    let oa = taguchi::OrthogonalArray::build(levels, columns).py()?;
    Ok(oa.design_points().into_iter().map(|p| p.0).collect())
}

/// Maximin LHS in the unit cube; with `space` the points come back snapped onto its grid.
#[pyfunction]
#[pyo3(signature = (n, dims, seed=0, restarts=sampling::DEFAULT_RESTARTS, space=None))]
fn lhs(
    py: Python<'_>,
    n: usize,
    dims: usize,
    seed: u64,
    restarts: usize,
    space: Option<PyDesignSpace>,
) -> PyResult<Py<PyAny>> {
    match space {
        Some(s) => {
            if s.inner.dims() != dims {
                return Err(err(doe_core::Error::DimensionMismatch {
                    expected: s.inner.dims(),
                    got: dims,
                }));
            }
            let d = sampling::grid_initializer(&s.inner, n, seed, restarts).py()?;
            let pts: Vec<Vec<usize>> = d.snapped.unwrap_or_default().into_iter().map(|p| p.0).collect();
            Ok(pts.into_pyobject(py)?.into_any().unbind())
        }
        None => {
            let d = sampling::lhs_maximin(n, dims, seed, restarts).py()?;
            Ok(d.unit_points.into_pyobject(py)?.into_any().unbind())
        }
    }
}

#[pyclass(name = "GprModel", module = "doe_py")]
struct PyGprModel {
    inner: gpr::GprModel,
    report: Option<gpr::FitReport>,
}

#[pymethods]
impl PyGprModel {
    /// Fit with fixed hyperparameters.
    #[staticmethod]
    fn fit(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        length_scale: f64,
        signal_variance: f64,
        noise_variance: f64,
    ) -> PyResult<Self> {
        let p = doe_core::KernelParams::new(length_scale, signal_variance, noise_variance).py()?;
        Ok(PyGprModel {
            inner: gpr::fit(&x, &y, p).py()?,
            report: None,
        })
    }

    /// Fit after maximizing the log marginal likelihood with the default search.
    #[staticmethod]
    fn optimize(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        let (p, report) = gpr::optimize_hyperparameters(&x, &y, &doe_core::SearchSpec::default()).py()?;
        Ok(PyGprModel {
            inner: gpr::fit(&x, &y, p).py()?,
            report: Some(report),
        })
    }

    /// `(mean, std)` of the latent function at `x`.
    fn predict(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        self.inner.predict(&x).py()
    }

    fn log_marginal_likelihood(&self) -> f64 {
        self.inner.log_marginal_likelihood()
    }

    /// `(length_scale, signal_variance, noise_variance)`
    #[getter]
    fn params(&self) -> (f64, f64, f64) {
        let p = self.inner.params;
        (p.length_scale, p.signal_variance, p.noise_variance)
    }

    #[getter]
    fn cv_rmse(&self) -> Option<f64> {
        self.report.as_ref().and_then(|r| r.cv_rmse)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Campaign", module = "doe_py")]
struct PyCampaign {
    inner: doe_core::CampaignState,
}

#[pymethods]
impl PyCampaign {
    #[new]
    #[pyo3(signature = (
        strategy,
        oracle="synthetic:waam-like-v1",
        seed=0,
        noise_sd=doe_core::oracle::DEFAULT_NOISE_SD,
        space=None,
        id=None,
        test_size=doe_core::campaign::DEFAULT_TEST_SIZE,
        init_samples=5,
        max_iterations=15,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        strategy: &str,
        oracle: &str,
        seed: u64,
        noise_sd: f64,
        space: Option<PyDesignSpace>,
        id: Option<String>,
        test_size: usize,
        init_samples: usize,
        max_iterations: usize,
    ) -> PyResult<Self> {
        let strategy: doe_core::Strategy = strategy.parse().py()?;
        let oracle = doe_core::OracleSpec::from_flag(oracle, noise_sd, oracle_seed(seed)).py()?;
        let space = space.map(|s| s.inner).unwrap_or_else(doe_core::DesignSpace::waam_default);
        let config = doe_core::AlConfig {
            init_samples,
            max_iterations,
            ..doe_core::AlConfig::default()
        };
        let options = doe_core::InitOptions { id, test_size };
        Ok(PyCampaign {
            inner: doe_core::init_campaign(space, strategy, oracle, config, seed, options).py()?,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn strategy(&self) -> String {
        self.inner.strategy.to_string()
    }

    #[getter]
    fn status(&self) -> &'static str {
        self.inner.status.as_str()
    }

    #[getter]
    fn runs(&self) -> usize {
        self.inner.runs.len()
    }

    #[getter]
    fn space(&self) -> PyDesignSpace {
        PyDesignSpace {
            inner: self.inner.space.clone(),
        }
    }

    fn test_points(&self) -> Vec<Vec<usize>> {
        self.inner.test_points().into_iter().map(|p| p.0).collect()
    }

    /// Next point to measure, or `None` once complete. Synthetic campaigns
    /// measure it immediately; manual ones wait for `record`.
    fn suggest(&mut self) -> PyResult<Option<Vec<usize>>> {
        Ok(match self.inner.suggest().py()? {
            doe_core::Suggestion::Point(p) => Some(p.0),
            doe_core::Suggestion::Complete => None,
        })
    }

    fn record(&mut self, point_: Vec<usize>, d: f64, w: f64, h: f64) -> PyResult<()> {
        let g = doe_core::BeadGeometry::new(d, w, h).py()?;
        self.inner.record_result(&point(point_), g).py()
    }

    fn run_to_completion(&mut self) -> PyResult<()> {
        self.inner.run_to_completion().py()
    }

    /// `(rmse, r2)` on the held-out test set.
    fn evaluate(&self) -> PyResult<(f64, f64)> {
        let m = self.inner.evaluate().py()?;
        Ok((m.rmse, m.r2))
    }

    fn predict(&self, points: Vec<Vec<usize>>) -> PyResult<Vec<f64>> {
        let pts: Vec<_> = points.into_iter().map(point).collect();
        self.inner.predict_points(&pts).py()
    }

    /// One CSV export; `other` adds a second campaign side by side.
    #[pyo3(signature = (kind, other=None))]
    fn export_csv(&self, kind: &str, other: Option<PyRef<'_, PyCampaign>>) -> PyResult<String> {
        let kind: doe_core::ExportKind = kind.parse().py()?;
        let report = match other {
            Some(o) => compare(&self.inner, &o.inner).py()?,
            None => report_single(&self.inner).py()?,
        };
        doe_core::export_csv(&report, kind).py()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_canonical_json().py()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyCampaign {
            inner: doe_core::CampaignState::from_json(text).py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).py()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCampaign {
            inner: doe_core::CampaignState::load(&path).py()?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Campaign({}, {}, {} runs)", self.inner.id, self.inner.status, self.inner.runs.len())
    }
}

#[pymodule]
pub fn doe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DoeError", m.py().get_type::<DoeError>())?;
    m.add_class::<PyDesignSpace>()?;
    m.add_class::<PyGprModel>()?;
    m.add_class::<PyCampaign>()?;
    m.add_function(wrap_pyfunction!(composite_response, m)?)?;
    m.add_function(wrap_pyfunction!(orthogonal_array, m)?)?;
    m.add_function(wrap_pyfunction!(lhs, m)?)?;
    Ok(())
}

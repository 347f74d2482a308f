//! Python bindings: fit a logistic model, evaluate the four estimators,
//! their asymptotic MSE matrices and dominance conditions, and run
//! simulation cells.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pcltl::estimators::rule_params;
use pcltl::{
    asymptotic_msem, irls_fit, pcltl_vs_ltl_condition, pcltl_vs_ml_condition, pcltl_vs_pclr_condition,
    select_components, simulate_cell as core_simulate_cell, BetaSource, Dataset, DominanceVerdict, Error,
    EstimatorKind, EstimatorSpec, FitConfig, MlConditionForm, ShrinkageParams, SimulationConfig,
};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("rows of x must all have the same length"));
    }
    Ok(DMatrix::from_row_iterator(n, p, rows.into_iter().flatten()))
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn kind(name: &str) -> PyResult<EstimatorKind> {
    name.parse().map_err(py_err)
}

/// A converged (or not) logistic fit together with its plug-in quantities.
#[pyclass(name = "Fit", module = "pcltl_py")]
struct PyFit {
    fit: pcltl::LogisticFit,
    plugin: pcltl::PlugIn,
}

impl PyFit {
    fn spec(
        &self,
        estimator: &str,
        r: Option<usize>,
        k: Option<f64>,
        d: Option<f64>,
    ) -> PyResult<EstimatorSpec> {
        let kind = kind(estimator)?;
        let params = match (k, d) {
            (Some(k), Some(d)) => Some(ShrinkageParams::new(k, d).map_err(py_err)?),
            (None, None) if kind.needs_params() => Some(rule_params(&self.plugin).map_err(py_err)?.0),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("give both k and d, or neither")),
        };
        EstimatorSpec::new(
            kind,
            params.filter(|_| kind.needs_params()),
            r.filter(|_| kind.needs_components()),
        )
        .map_err(py_err)
    }
}

#[pymethods]
impl PyFit {
    #[getter]
    fn beta(&self) -> Vec<f64> {
        to_vec(&self.fit.beta)
    }

    #[getter]
    fn converged(&self) -> bool {
        self.fit.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.fit.iterations
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.fit.log_likelihood()
    }

    /// Eigenvalues of X'VX in descending order.
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        to_vec(&self.plugin.decomp.lambdas)
    }

    /// Eigenvectors as columns, in the order of `eigenvalues`.
    #[getter]
    fn eigenvectors(&self) -> Vec<Vec<f64>> {
        to_rows(&self.plugin.decomp.vectors)
    }

    fn components(&self, ptv: f64) -> PyResult<usize> {
        select_components(&self.plugin.decomp.lambdas, ptv).map_err(py_err)
    }

    /// `(k, d)` chosen by the data-driven rules.
    fn rule_parameters(&self) -> PyResult<(f64, f64)> {
        let (params, _) = rule_params(&self.plugin).map_err(py_err)?;
        Ok((params.k, params.d))
    }

    /// Coefficients of `estimator` ("ml", "ltl", "pclr", "pcltl"). Missing k and d
    /// fall back to the rules.
    #[pyo3(signature = (estimator, r=None, k=None, d=None))]
    fn estimate(
        &self,
        estimator: &str,
        r: Option<usize>,
        k: Option<f64>,
        d: Option<f64>,
    ) -> PyResult<Vec<f64>> {
        let spec = self.spec(estimator, r, k, d)?;
        self.plugin.estimate(&spec).map(|b| to_vec(&b)).map_err(py_err)
    }

    /// Asymptotic bias, covariance, MSE matrix and its trace at `beta`.
    #[pyo3(signature = (estimator, beta, r=None, k=None, d=None))]
    fn msem<'py>(
        &self,
        py: Python<'py>,
        estimator: &str,
        beta: Vec<f64>,
        r: Option<usize>,
        k: Option<f64>,
        d: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let spec = self.spec(estimator, r, k, d)?;
        let beta = DVector::from_vec(beta);
        let rep = asymptotic_msem(&spec, &self.plugin.decomp, &beta, BetaSource::TrueBeta).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("estimator", rep.estimator.kind.label())?;
        out.set_item("bias", to_vec(&rep.bias))?;
        out.set_item("covariance", to_rows(&rep.covariance))?;
        out.set_item("msem", to_rows(&rep.msem))?;
        out.set_item("smse", rep.smse)?;
        Ok(out)
    }

    /// Dominance condition of PCLTL over `against` ("ml", "pclr" or "ltl"),
    /// with the direct PSD check alongside.
    #[pyo3(signature = (against, beta, r, k, d))]
    fn compare<'py>(
        &self,
        py: Python<'py>,
        against: &str,
        beta: Vec<f64>,
        r: usize,
        k: f64,
        d: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let beta = DVector::from_vec(beta);
        let split = self.plugin.split(r).map_err(py_err)?;
        let params = ShrinkageParams::new(k, d).map_err(py_err)?;
        let v: DominanceVerdict = match kind(against)? {
            EstimatorKind::Ml => {
                pcltl_vs_ml_condition(&beta, &split, &params, MlConditionForm::DroppedLambda)
            }
            EstimatorKind::Pclr => pcltl_vs_pclr_condition(&beta, &split, &params),
            EstimatorKind::Ltl => pcltl_vs_ltl_condition(&beta, &split, &params),
            EstimatorKind::Pcltl => {
                return Err(PyValueError::new_err("compare PCLTL against ml, pclr or ltl"))
            }
        }
        .map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("condition_value", v.condition_value)?;
        out.set_item("holds", v.holds)?;
        out.set_item("oracle_min_eigenvalue", v.oracle_min_eigenvalue)?;
        out.set_item("oracle_holds", v.psd_oracle_holds)?;
        out.set_item("agrees", v.psd_oracle_agrees)?;
        Ok(out)
    }
}

/// Fits a logistic regression (no intercept is added) by IRLS.
#[pyfunction]
#[pyo3(signature = (x, y, tol=1e-6, max_iter=100))]
fn fit(x: Vec<Vec<f64>>, y: Vec<f64>, tol: f64, max_iter: usize) -> PyResult<PyFit> {
    let x = matrix(x)?;
    let data = Dataset::new(x.clone(), DVector::from_vec(y)).map_err(py_err)?;
    let config = FitConfig {
        tolerance: tol,
        max_iterations: max_iter,
        ..FitConfig::default()
    };
    let fit = irls_fit(&data, &config).map_err(py_err)?;
    let plugin = pcltl::PlugIn::new(&fit, &x).map_err(py_err)?;
    Ok(PyFit { fit, plugin })
}

/// Simulated MSE of every estimator for one (p, n, rho) cell.
#[pyfunction]
#[pyo3(signature = (p, n, rho, replications=2000, seed=20170, ptv=None))]
fn simulate_cell<'py>(
    py: Python<'py>,
    p: usize,
    n: usize,
    rho: f64,
    replications: usize,
    seed: u64,
    ptv: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = SimulationConfig {
        p,
        n,
        rho,
        replications,
        seed,
        ptv_threshold: ptv.unwrap_or_else(|| pcltl::simulation::default_ptv_threshold(p)),
        ..SimulationConfig::default()
    };
    let res = py.detach(|| core_simulate_cell(&config)).map_err(py_err)?;
    let out = PyDict::new(py);
    let mse = PyDict::new(py);
    for (k, v) in &res.mse {
        mse.set_item(k.label(), *v)?;
    }
    out.set_item("mse", mse)?;
    out.set_item("converged_replications", res.converged_replications)?;
    out.set_item("divergent_replications", res.divergent_replications)?;
    out.set_item("mean_r", res.mean_r)?;
    out.set_item("mean_k", res.mean_k)?;
    out.set_item("mean_d", res.mean_d)?;
    out.set_item("true_beta", res.true_beta)?;
    Ok(out)
}

#[pymodule]
fn pcltl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_cell, m)?)?;
    Ok(())
}

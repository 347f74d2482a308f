//! Binary logistic regression model and its IRLS maximum-likelihood fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, solve_spd, weighted_gram};

/// Covariates plus binary response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::invalid("design matrix has no columns"));
        }
        if n < p {
            return Err(Error::invalid(format!("need n >= p, got n={n}, p={p}")));
        }
        if y.len() != n {
            return Err(Error::invalid(format!(
                "response has {} entries but design has {n} rows",
                y.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite covariate at row {}, column {}",
                i % n,
                i / n
            )));
        }
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain(format!(
                "response at row {i} is {}, expected 0 or 1",
                y[i]
            )));
        }
        Ok(Dataset { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Threshold on the max-norm of the coefficient update.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Fitted probabilities are clipped to `[clip, 1 - clip]`.
    pub probability_clip: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tolerance: 1e-6,
            max_iterations: 100,
            probability_clip: 1e-10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.probability_clip > 0.0 && self.probability_clip < 0.5) {
            return Err(Error::invalid("probability clip must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

/// Result of an IRLS run. `v_diag` and `z` are evaluated at `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub beta: DVector<f64>,
    pub v_diag: DVector<f64>,
    pub z: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_step_norm: f64,
    /// Log-likelihood at the start point and after every accepted step.
    pub log_likelihood_trace: Vec<f64>,
}

impl LogisticFit {
    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().unwrap_or(&f64::NAN)
    }
}

pub(crate) fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn check_dims(x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<()> {
    if x.ncols() != beta.len() {
        return Err(Error::invalid(format!(
            "design has {} columns but coefficient vector has length {}",
            x.ncols(),
            beta.len()
        )));
    }
    Ok(())
}

/// Logistic probabilities `exp(x'b) / (1 + exp(x'b))`, clipped to `[clip, 1 - clip]`.
pub fn predict_probabilities(x: &DMatrix<f64>, beta: &DVector<f64>, clip: f64) -> Result<DVector<f64>> {
    check_dims(x, beta)?;
    if x.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entry in design or coefficients"));
    }
    let eta = x * beta;
    Ok(eta.map(|e| logistic(e).clamp(clip, 1.0 - clip)))
}

pub fn log_likelihood(y: &DVector<f64>, pi: &DVector<f64>) -> Result<f64> {
    if y.len() != pi.len() {
        return Err(Error::invalid("response and probability lengths differ"));
    }
    let mut ll = 0.0;
    for (&yi, &pii) in y.iter().zip(pi.iter()) {
        if !(pii > 0.0 && pii < 1.0) {
            return Err(Error::Domain(format!("probability {pii} outside (0, 1)")));
        }
        ll += yi * pii.ln() + (1.0 - yi) * (-pii).ln_1p();
    }
    Ok(ll)
}

/// Bernoulli variances `pi (1 - pi)`.
pub fn weight_diagonal(pi: &DVector<f64>) -> DVector<f64> {
    pi.map(|p| p * (1.0 - p))
}

/// Linearized response `x'b + (y - pi) / (pi (1 - pi))`.
pub fn working_response(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    y: &DVector<f64>,
    clip: f64,
) -> Result<DVector<f64>> {
    if y.len() != x.nrows() {
        return Err(Error::invalid("response length does not match design rows"));
    }
    let pi = predict_probabilities(x, beta, clip)?;
    let eta = x * beta;
    Ok(DVector::from_iterator(
        y.len(),
        (0..y.len()).map(|i| eta[i] + (y[i] - pi[i]) / (pi[i] * (1.0 - pi[i]))),
    ))
}

const MAX_HALVINGS: usize = 10;

/// Maximum-likelihood fit by iteratively re-weighted least squares.
///
/// Starts at zero and takes Newton steps `(X'VX)^{-1} X'(y - pi)`. A step that
/// lowers the log-likelihood is halved up to ten times (steps already below the
/// tolerance are taken as they are); if no halving helps the
/// iteration stops where it is. Running out of iterations is reported through
/// `converged = false`, never as an error.
pub fn irls_fit(data: &Dataset, config: &FitConfig) -> Result<LogisticFit> {
    config.validate()?;
    let x = data.x();
    let y = data.y();
    let clip = config.probability_clip;

    let mut beta = DVector::zeros(data.p());
    let mut pi = predict_probabilities(x, &beta, clip)?;
    let mut ll = log_likelihood(y, &pi)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut final_step_norm = f64::INFINITY;
    let mut iterations = 0;

    for iteration in 1..=config.max_iterations {
        iterations = iteration;
        let v = weight_diagonal(&pi);
        let hessian = weighted_gram(x, &v);
        let score = x.tr_mul(&(y - &pi));
        let step = solve_spd(&hessian, &score).ok_or(Error::Singular { iteration })?;

        let mut scale = 1.0;
        let mut accepted = None;
        if max_abs(&step) <= config.tolerance {
            // Below the tolerance the likelihood change is at rounding level,
            // so comparing likelihoods would only add noise.
            let candidate = &beta + &step;
            let cand_pi = predict_probabilities(x, &candidate, clip)?;
            let cand_ll = log_likelihood(y, &cand_pi)?;
            accepted = Some((candidate, cand_pi, cand_ll));
        }
        for _ in 0..=MAX_HALVINGS {
            if accepted.is_some() {
                break;
            }
            let candidate = &beta + &step * scale;
            let cand_pi = predict_probabilities(x, &candidate, clip)?;
            let cand_ll = log_likelihood(y, &cand_pi)?;
            if cand_ll >= ll {
                accepted = Some((candidate, cand_pi, cand_ll));
                break;
            }
            scale *= 0.5;
        }

        match accepted {
            Some((candidate, cand_pi, cand_ll)) => {
                final_step_norm = max_abs(&step) * scale;
                beta = candidate;
                pi = cand_pi;
                ll = cand_ll;
                trace.push(ll);
                if final_step_norm <= config.tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                // No ascent along the Newton direction: either already at the
                // optimum up to rounding, or stuck.
                final_step_norm = max_abs(&step);
                converged = final_step_norm <= config.tolerance;
                break;
            }
        }
    }

    let v_diag = weight_diagonal(&pi);
    let eta = x * &beta;
    let z = DVector::from_iterator(y.len(), (0..y.len()).map(|i| eta[i] + (y[i] - pi[i]) / v_diag[i]));
    Ok(LogisticFit {
        beta,
        v_diag,
        z,
        iterations,
        converged,
        final_step_norm,
        log_likelihood_trace: trace,
    })
}

//! Asymptotic bias, covariance and mean squared error matrices (MSEM) of the
//! four estimators, plus the dominance conditions that compare PCLTL with ML,
//! PCLR and LTL.
//!
//! Every condition evaluator also runs a direct check: it builds both MSEMs
//! and tests whether their difference is positive semidefinite. That check is
//! the ground truth; the closed-form conditions are reported alongside it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    ComponentSplit, EstimatorKind, EstimatorSpec, ShrinkageParams, SpectralDecomposition,
};
use crate::linalg::{max_abs, min_eigenvalue, symmetrize};

/// Relative tolerance of the positive-semidefiniteness check.
pub const PSD_TOLERANCE: f64 = 1e-8;
/// Absolute threshold for "this coordinate block of beta is zero".
pub const ZERO_BLOCK_TOLERANCE: f64 = 1e-10;
/// Slack on the `<= 1` quadratic-form bound so that boundary cases survive rounding.
pub const QUADRATIC_BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSource {
    TrueBeta,
    PlugInMle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsemReport {
    pub estimator: EstimatorSpec,
    pub bias: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub msem: DMatrix<f64>,
    pub smse: f64,
    pub beta_source: BetaSource,
}

impl MsemReport {
    fn assemble(
        estimator: EstimatorSpec,
        bias: DVector<f64>,
        covariance: DMatrix<f64>,
        beta_source: BetaSource,
    ) -> Self {
        let covariance = symmetrize(&covariance);
        let msem = &covariance + &bias * bias.transpose();
        let smse = msem.trace();
        MsemReport {
            estimator,
            bias,
            covariance,
            msem,
            smse,
            beta_source,
        }
    }
}

/// `T diag(g) T'` over the given columns.
fn spectral_sum(t: &DMatrix<f64>, gains: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let g = DVector::from_iterator(t.ncols(), gains);
    t * DMatrix::from_diagonal(&g) * t.transpose()
}

/// `(-T_{p-r} T_{p-r}' - (d + k) T_r S_r(k)^{-1} T_r') beta`.
pub fn pcltl_bias(beta: &DVector<f64>, split: &ComponentSplit, params: &ShrinkageParams) -> DVector<f64> {
    let (k, d) = (params.k, params.d);
    let t_r = split.retained_vectors();
    let t_rest = split.dropped_vectors();
    let mut kept = t_r.tr_mul(beta);
    for (a, &l) in kept.iter_mut().zip(split.retained_lambdas().iter()) {
        *a *= -(d + k) / (l + k);
    }
    let dropped = &t_rest * t_rest.tr_mul(beta);
    t_r * kept - dropped
}

/// `T_r diag((lambda - d)^2 / (lambda (lambda + k)^2)) T_r'`.
pub fn pcltl_covariance(split: &ComponentSplit, params: &ShrinkageParams) -> DMatrix<f64> {
    let (k, d) = (params.k, params.d);
    spectral_sum(
        &split.retained_vectors(),
        split
            .retained_lambdas()
            .iter()
            .map(|&l| (l - d).powi(2) / (l * (l + k).powi(2)))
            .collect::<Vec<_>>()
            .into_iter(),
    )
}

/// Closed-form asymptotic MSEM of one estimator for coefficient vector `beta`.
pub fn asymptotic_msem(
    spec: &EstimatorSpec,
    decomp: &SpectralDecomposition,
    beta: &DVector<f64>,
    beta_source: BetaSource,
) -> Result<MsemReport> {
    let p = decomp.p();
    if beta.len() != p {
        return Err(Error::invalid(format!(
            "beta has length {} but the decomposition has dimension {p}",
            beta.len()
        )));
    }
    let spec = EstimatorSpec::new(spec.kind, spec.params, spec.r)?;
    let t = &decomp.vectors;
    let lambdas = &decomp.lambdas;
    let report = match spec.kind {
        EstimatorKind::Ml => {
            let cov = spectral_sum(t, lambdas.iter().map(|&l| 1.0 / l));
            MsemReport::assemble(spec, DVector::zeros(p), cov, beta_source)
        }
        EstimatorKind::Ltl => {
            let ShrinkageParams { k, d, .. } = spec.params.expect("validated");
            let cov = spectral_sum(
                t,
                lambdas.iter().map(|&l| (l - d).powi(2) / (l * (l + k).powi(2))),
            );
            let shrink = spectral_sum(t, lambdas.iter().map(|&l| 1.0 / (l + k)));
            let bias = shrink * beta * (-(k + d));
            MsemReport::assemble(spec, bias, cov, beta_source)
        }
        EstimatorKind::Pclr => {
            let split = decomp.split(spec.r.expect("validated"))?;
            let t_r = split.retained_vectors();
            let cov = spectral_sum(&t_r, split.retained_lambdas().iter().map(|&l| 1.0 / l));
            let bias = (split.retained_projector() - DMatrix::identity(p, p)) * beta;
            MsemReport::assemble(spec, bias, cov, beta_source)
        }
        EstimatorKind::Pcltl => {
            let split = decomp.split(spec.r.expect("validated"))?;
            let params = spec.params.expect("validated");
            let cov = pcltl_covariance(&split, &params);
            let bias = pcltl_bias(beta, &split, &params);
            MsemReport::assemble(spec, bias, cov, beta_source)
        }
    };
    Ok(report)
}

/// Scalar MSE, the trace of the MSEM.
pub fn smse(report: &MsemReport) -> f64 {
    report.msem.trace()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// PCLTL against maximum likelihood.
    PcltlVsMl,
    /// PCLTL against principal component logistic regression.
    PcltlVsPclr,
    /// PCLTL against the Liu-type logistic estimator.
    PcltlVsLtl,
    /// Plain check that one MSEM minus another is positive semidefinite.
    DirectPsd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceVerdict {
    pub comparison: Comparison,
    /// For `DirectPsd` the smallest eigenvalue of the difference; otherwise
    /// the quantity the closed-form condition thresholds.
    pub condition_value: f64,
    pub holds: bool,
    /// `d < k` and `d + k > 0`; always true for `DirectPsd`.
    pub precondition_met: bool,
    pub oracle_min_eigenvalue: Option<f64>,
    pub psd_oracle_holds: Option<bool>,
    pub psd_oracle_agrees: Option<bool>,
    /// Whether the two MSEMs coincide to working precision.
    pub msem_equal: Option<bool>,
}

/// Tests `msem_a - msem_b >= 0`, i.e. whether the estimator behind `msem_b`
/// is at least as good as the one behind `msem_a`.
pub fn psd_dominates(msem_a: &DMatrix<f64>, msem_b: &DMatrix<f64>, tol: f64) -> Result<DominanceVerdict> {
    if msem_a.shape() != msem_b.shape() || !msem_a.is_square() {
        return Err(Error::invalid(format!(
            "cannot compare matrices of shape {:?} and {:?}",
            msem_a.shape(),
            msem_b.shape()
        )));
    }
    let diff = symmetrize(&(msem_a - msem_b));
    let norm = diff.norm();
    let min_eig = if norm == 0.0 { 0.0 } else { min_eigenvalue(&diff) };
    let holds = min_eig >= -tol * norm;
    let scale = msem_a.norm().max(msem_b.norm());
    Ok(DominanceVerdict {
        comparison: Comparison::DirectPsd,
        condition_value: min_eig,
        holds,
        precondition_met: true,
        oracle_min_eigenvalue: Some(min_eig),
        psd_oracle_holds: Some(holds),
        psd_oracle_agrees: None,
        msem_equal: Some(norm <= tol * scale),
    })
}

fn params_precondition(params: &ShrinkageParams) -> bool {
    params.d < params.k && params.d + params.k > 0.0
}

/// Which weighting the dropped-component term of the PCLTL-vs-ML condition uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlConditionForm {
    /// `beta' T_{p-r} Lambda_{p-r} T_{p-r}' beta`.
    #[default]
    DroppedLambda,
    /// `beta' T_{p-r} Lambda_{p-r}^{-1} T_{p-r}' beta`.
    DroppedInverseLambda,
}

fn with_oracle(
    mut verdict: DominanceVerdict,
    comparator: &EstimatorSpec,
    pcltl: &EstimatorSpec,
    decomp: &SpectralDecomposition,
    beta: &DVector<f64>,
) -> Result<DominanceVerdict> {
    let a = asymptotic_msem(comparator, decomp, beta, BetaSource::TrueBeta)?;
    let b = asymptotic_msem(pcltl, decomp, beta, BetaSource::TrueBeta)?;
    let oracle = psd_dominates(&a.msem, &b.msem, PSD_TOLERANCE)?;
    verdict.oracle_min_eigenvalue = oracle.oracle_min_eigenvalue;
    verdict.psd_oracle_holds = Some(oracle.holds);
    verdict.psd_oracle_agrees = Some(oracle.holds == verdict.holds);
    verdict.msem_equal = oracle.msem_equal;
    Ok(verdict)
}

/// PCLTL beats ML in MSEM iff
/// `sum_{j<=r} (k+d)^2 a_j^2 / (2(k+d) + (k^2-d^2)/lambda_j) + sum_{j>r} lambda_j a_j^2 <= 1`
/// with `a = T' beta`, given `d < k` and `d + k > 0`.
pub fn pcltl_vs_ml_condition(
    beta: &DVector<f64>,
    split: &ComponentSplit,
    params: &ShrinkageParams,
    form: MlConditionForm,
) -> Result<DominanceVerdict> {
    let decomp = split.decomposition();
    if beta.len() != decomp.p() {
        return Err(Error::invalid("beta length does not match the decomposition"));
    }
    let (k, d) = (params.k, params.d);
    let alpha = decomp.coordinates(beta);
    let r = split.r();
    let mut value = 0.0;
    for (j, (&a, &l)) in alpha.iter().zip(decomp.lambdas.iter()).enumerate() {
        value += if j < r {
            (k + d).powi(2) * a * a / (2.0 * (k + d) + (k * k - d * d) / l)
        } else {
            match form {
                MlConditionForm::DroppedLambda => l * a * a,
                MlConditionForm::DroppedInverseLambda => a * a / l,
            }
        };
    }
    let precondition_met = params_precondition(params);
    let verdict = DominanceVerdict {
        comparison: Comparison::PcltlVsMl,
        condition_value: value,
        holds: precondition_met && value <= 1.0 + QUADRATIC_BOUND_SLACK,
        precondition_met,
        oracle_min_eigenvalue: None,
        psd_oracle_holds: None,
        psd_oracle_agrees: None,
        msem_equal: None,
    };
    with_oracle(
        verdict,
        &EstimatorSpec::ml(),
        &EstimatorSpec::pcltl(r, *params),
        decomp,
        beta,
    )
}

/// PCLTL beats PCLR iff `T_r' beta = 0`.
pub fn pcltl_vs_pclr_condition(
    beta: &DVector<f64>,
    split: &ComponentSplit,
    params: &ShrinkageParams,
) -> Result<DominanceVerdict> {
    let decomp = split.decomposition();
    if beta.len() != decomp.p() {
        return Err(Error::invalid("beta length does not match the decomposition"));
    }
    let value = max_abs(&split.retained_vectors().tr_mul(beta));
    let verdict = DominanceVerdict {
        comparison: Comparison::PcltlVsPclr,
        condition_value: value,
        holds: value <= ZERO_BLOCK_TOLERANCE,
        precondition_met: params_precondition(params),
        oracle_min_eigenvalue: None,
        psd_oracle_holds: None,
        psd_oracle_agrees: None,
        msem_equal: None,
    };
    let r = split.r();
    with_oracle(
        verdict,
        &EstimatorSpec::pclr(r),
        &EstimatorSpec::pcltl(r, *params),
        decomp,
        beta,
    )
}

/// PCLTL beats LTL iff `T_{p-r}' beta = 0`.
pub fn pcltl_vs_ltl_condition(
    beta: &DVector<f64>,
    split: &ComponentSplit,
    params: &ShrinkageParams,
) -> Result<DominanceVerdict> {
    let decomp = split.decomposition();
    if beta.len() != decomp.p() {
        return Err(Error::invalid("beta length does not match the decomposition"));
    }
    let value = max_abs(&split.dropped_vectors().tr_mul(beta));
    let verdict = DominanceVerdict {
        comparison: Comparison::PcltlVsLtl,
        condition_value: value,
        holds: value <= ZERO_BLOCK_TOLERANCE,
        precondition_met: params_precondition(params),
        oracle_min_eigenvalue: None,
        psd_oracle_holds: None,
        psd_oracle_agrees: None,
        msem_equal: None,
    };
    let r = split.r();
    with_oracle(
        verdict,
        &EstimatorSpec::ltl(*params),
        &EstimatorSpec::pcltl(r, *params),
        decomp,
        beta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_decomp(l: &[f64]) -> SpectralDecomposition {
        SpectralDecomposition::from_symmetric(&DMatrix::from_diagonal(&DVector::from_row_slice(l))).unwrap()
    }

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(s)
    }

    #[test]
    fn bias_in_diagonal_case() {
        let split = diag_decomp(&[4.0, 1.0]).split(1).unwrap();
        let params = ShrinkageParams::new(1.0, 0.5).unwrap();
        let b = pcltl_bias(&v(&[1.0, 1.0]), &split, &params);
        assert!((b[0] + 0.3).abs() < 1e-15 && (b[1] + 1.0).abs() < 1e-15);
        assert_eq!(pcltl_bias(&v(&[0.0, 0.0]), &split, &params), v(&[0.0, 0.0]));
    }

    #[test]
    fn bias_vanishes_at_full_rank_without_shrinkage() {
        let split = diag_decomp(&[3.0, 2.0, 1.0]).split(3).unwrap();
        let params = ShrinkageParams::new(1e-12, 0.0).unwrap();
        assert!(max_abs(&pcltl_bias(&v(&[0.3, -2.0, 1.0]), &split, &params)) < 1e-11);
    }

    #[test]
    fn covariance_scalar_and_rank() {
        let split = diag_decomp(&[4.0, 1.0]).split(1).unwrap();
        let c = pcltl_covariance(&split, &ShrinkageParams::new(1.0, 0.5).unwrap());
        assert!((c[(0, 0)] - 0.1225).abs() < 1e-15);
        let t = split.dropped_vectors();
        assert!((t.transpose() * &c * t).norm() < 1e-12);
    }

    #[test]
    fn covariance_reduces_to_inverse() {
        let split = diag_decomp(&[4.0, 2.0]).split(2).unwrap();
        let c = pcltl_covariance(&split, &ShrinkageParams::new(1e-12, 0.0).unwrap());
        assert!((c - DMatrix::from_diagonal(&v(&[0.25, 0.5]))).norm() < 1e-10);
    }

    #[test]
    fn ml_msem_and_smse() {
        let d = diag_decomp(&[2.0, 4.0]);
        let rep = asymptotic_msem(&EstimatorSpec::ml(), &d, &v(&[1.0, 1.0]), BetaSource::TrueBeta).unwrap();
        assert!((&rep.msem - DMatrix::from_diagonal(&v(&[0.5, 0.25]))).norm() < 1e-15);
        assert!((smse(&rep) - 0.75).abs() < 1e-15);
        assert_eq!(rep.bias, v(&[0.0, 0.0]));
    }

    #[test]
    fn msem_rejects_wrong_beta_length() {
        let d = diag_decomp(&[2.0, 4.0]);
        assert!(asymptotic_msem(&EstimatorSpec::ml(), &d, &v(&[1.0]), BetaSource::TrueBeta).is_err());
    }

    #[test]
    fn smse_of_identity() {
        let d = diag_decomp(&[1.0, 1.0, 1.0]);
        let rep = asymptotic_msem(
            &EstimatorSpec::ml(),
            &d,
            &v(&[0.0, 0.0, 0.0]),
            BetaSource::PlugInMle,
        )
        .unwrap();
        assert_eq!(smse(&rep), 3.0);
    }

    #[test]
    fn psd_examples() {
        let i = DMatrix::<f64>::identity(2, 2);
        let r = psd_dominates(&i, &(&i * 0.5), PSD_TOLERANCE).unwrap();
        assert!(r.holds && (r.condition_value - 0.5).abs() < 1e-15);

        let a = DMatrix::from_diagonal(&v(&[1.0, 0.1]));
        let b = DMatrix::from_diagonal(&v(&[0.5, 0.5]));
        assert!(!psd_dominates(&a, &b, PSD_TOLERANCE).unwrap().holds);

        let r = psd_dominates(&a, &a, PSD_TOLERANCE).unwrap();
        assert!(r.holds && r.condition_value == 0.0 && r.msem_equal == Some(true));

        assert!(psd_dominates(&a, &DMatrix::identity(3, 3), PSD_TOLERANCE).is_err());
    }

    #[test]
    fn ml_condition_at_zero_beta() {
        let split = diag_decomp(&[4.0, 2.0, 1.0]).split(2).unwrap();
        let params = ShrinkageParams::new(1.0, 0.2).unwrap();
        let r =
            pcltl_vs_ml_condition(&v(&[0.0, 0.0, 0.0]), &split, &params, MlConditionForm::default()).unwrap();
        assert_eq!(r.condition_value, 0.0);
        assert!(r.holds && r.psd_oracle_holds == Some(true) && r.psd_oracle_agrees == Some(true));
    }

    #[test]
    fn ml_condition_precondition_failure_is_a_verdict() {
        let split = diag_decomp(&[4.0, 1.0]).split(1).unwrap();
        let params = ShrinkageParams::new(1.0, 2.0).unwrap();
        let r = pcltl_vs_ml_condition(&v(&[0.0, 0.0]), &split, &params, MlConditionForm::default()).unwrap();
        assert!(!r.precondition_met && !r.holds);
    }

    #[test]
    fn zero_block_conditions() {
        let split = diag_decomp(&[4.0, 2.0, 1.0]).split(2).unwrap();
        let params = ShrinkageParams::new(1.0, 0.2).unwrap();
        // beta in span(T_{p-r})
        let r = pcltl_vs_pclr_condition(&v(&[0.0, 0.0, 1.0]), &split, &params).unwrap();
        assert!(r.holds && r.psd_oracle_holds == Some(true));
        let r = pcltl_vs_pclr_condition(&v(&[1.0, 0.0, 0.0]), &split, &params).unwrap();
        assert!(!r.holds && r.condition_value == 1.0);
        // beta in span(T_r)
        let r = pcltl_vs_ltl_condition(&v(&[0.3, 0.4, 0.0]), &split, &params).unwrap();
        assert!(r.holds && r.psd_oracle_holds == Some(true));
        let r = pcltl_vs_ltl_condition(&v(&[0.0, 0.0, 1.0]), &split, &params).unwrap();
        assert!(!r.holds);
    }
}

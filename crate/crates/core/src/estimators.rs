//! Spectral decomposition of `X'VX` and the four coefficient estimators:
//! maximum likelihood (ML), Liu-type (LTL), principal component (PCLR) and
//! principal component Liu-type (PCLTL).
//!
//! All estimators are plug-in: they are evaluated at the weights `V` and the
//! working response `z` of a converged ML fit.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, sym_eigen_desc, weighted_cross, weighted_gram};
use crate::model::LogisticFit;

/// Eigenpairs of `X'VX`, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub vectors: DMatrix<f64>,
    pub lambdas: DVector<f64>,
}

impl SpectralDecomposition {
    /// Decomposes a symmetric positive definite matrix.
    pub fn from_symmetric(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::invalid("expected a non-empty square matrix"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Decomposition {
                smallest_eigenvalue: f64::NAN,
            });
        }
        let (lambdas, vectors) = sym_eigen_desc(a);
        let p = lambdas.len();
        let smallest = lambdas[p - 1];
        if smallest.is_nan() || smallest <= f64::EPSILON * lambdas[0] * p as f64 {
            return Err(Error::Decomposition {
                smallest_eigenvalue: smallest,
            });
        }
        Ok(SpectralDecomposition { vectors, lambdas })
    }

    pub fn p(&self) -> usize {
        self.lambdas.len()
    }

    /// `T diag(lambda) T'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.lambdas) * self.vectors.transpose()
    }

    pub fn condition_number(&self) -> f64 {
        self.lambdas[0] / self.lambdas[self.p() - 1]
    }

    /// Coordinates of `beta` in the eigenbasis, `T' beta`.
    pub fn coordinates(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.vectors.tr_mul(beta)
    }

    pub fn split(&self, r: usize) -> Result<ComponentSplit> {
        ComponentSplit::new(self.clone(), r)
    }
}

/// Eigendecomposition of `X' diag(v) X`.
pub fn spectral_decompose(x: &DMatrix<f64>, v_diag: &DVector<f64>) -> Result<SpectralDecomposition> {
    if v_diag.len() != x.nrows() {
        return Err(Error::invalid("weight vector length does not match design rows"));
    }
    SpectralDecomposition::from_symmetric(&weighted_gram(x, v_diag))
}

/// A decomposition partitioned into the `r` leading components and the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSplit {
    decomp: SpectralDecomposition,
    r: usize,
}

impl ComponentSplit {
    pub fn new(decomp: SpectralDecomposition, r: usize) -> Result<Self> {
        if r == 0 || r > decomp.p() {
            return Err(Error::invalid(format!(
                "retained component count must be in 1..={}, got {r}",
                decomp.p()
            )));
        }
        Ok(ComponentSplit { decomp, r })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn p(&self) -> usize {
        self.decomp.p()
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomp
    }

    pub fn retained_vectors(&self) -> DMatrix<f64> {
        self.decomp.vectors.columns(0, self.r).into_owned()
    }

    pub fn dropped_vectors(&self) -> DMatrix<f64> {
        self.decomp
            .vectors
            .columns(self.r, self.p() - self.r)
            .into_owned()
    }

    pub fn retained_lambdas(&self) -> DVector<f64> {
        self.decomp.lambdas.rows(0, self.r).into_owned()
    }

    pub fn dropped_lambdas(&self) -> DVector<f64> {
        self.decomp.lambdas.rows(self.r, self.p() - self.r).into_owned()
    }

    /// `T_r T_r'`.
    pub fn retained_projector(&self) -> DMatrix<f64> {
        let t = self.retained_vectors();
        &t * t.transpose()
    }

    /// `T_{p-r} T_{p-r}'`.
    pub fn dropped_projector(&self) -> DMatrix<f64> {
        let t = self.dropped_vectors();
        &t * t.transpose()
    }
}

/// Smallest `r` whose leading eigenvalues carry at least `threshold` of the total.
pub fn select_components(lambdas: &DVector<f64>, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "variability threshold must be in (0, 1], got {threshold}"
        )));
    }
    if lambdas.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    let total: f64 = lambdas.iter().sum();
    let mut cumulative = 0.0;
    for (j, &l) in lambdas.iter().enumerate() {
        cumulative += l;
        if cumulative / total >= threshold {
            return Ok(j + 1);
        }
    }
    Ok(lambdas.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    User,
    Rule,
}

/// Biasing parameters `k > 0` and finite `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageParams {
    pub k: f64,
    pub d: f64,
    pub k_source: Provenance,
    pub d_source: Provenance,
}

impl ShrinkageParams {
    pub fn new(k: f64, d: f64) -> Result<Self> {
        Self::with_provenance(k, Provenance::User, d, Provenance::User)
    }

    pub fn with_provenance(k: f64, k_source: Provenance, d: f64, d_source: Provenance) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!("k must be positive, got {k}")));
        }
        if !d.is_finite() {
            return Err(Error::invalid(format!("d must be finite, got {d}")));
        }
        Ok(ShrinkageParams {
            k,
            d,
            k_source,
            d_source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "MLE")]
    Ml,
    #[serde(rename = "LTL")]
    Ltl,
    #[serde(rename = "PCLR")]
    Pclr,
    #[serde(rename = "PCLTL")]
    Pcltl,
}

impl EstimatorKind {
    /// Reporting order.
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Ml,
        EstimatorKind::Ltl,
        EstimatorKind::Pclr,
        EstimatorKind::Pcltl,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Ml => "MLE",
            EstimatorKind::Ltl => "LTL",
            EstimatorKind::Pclr => "PCLR",
            EstimatorKind::Pcltl => "PCLTL",
        }
    }

    pub fn needs_params(self) -> bool {
        matches!(self, EstimatorKind::Ltl | EstimatorKind::Pcltl)
    }

    pub fn needs_components(self) -> bool {
        matches!(self, EstimatorKind::Pclr | EstimatorKind::Pcltl)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" | "mle" => Ok(EstimatorKind::Ml),
            "ltl" => Ok(EstimatorKind::Ltl),
            "pclr" => Ok(EstimatorKind::Pclr),
            "pcltl" => Ok(EstimatorKind::Pcltl),
            other => Err(Error::invalid(format!("unknown estimator '{other}'"))),
        }
    }
}

/// One of the four estimators together with the settings it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub params: Option<ShrinkageParams>,
    pub r: Option<usize>,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, params: Option<ShrinkageParams>, r: Option<usize>) -> Result<Self> {
        if kind.needs_params() != params.is_some() {
            return Err(Error::invalid(format!(
                "{kind} {} biasing parameters",
                if kind.needs_params() {
                    "requires"
                } else {
                    "takes no"
                }
            )));
        }
        if kind.needs_components() != r.is_some() {
            return Err(Error::invalid(format!(
                "{kind} {} a component count",
                if kind.needs_components() {
                    "requires"
                } else {
                    "takes no"
                }
            )));
        }
        if r == Some(0) {
            return Err(Error::invalid("component count must be at least 1"));
        }
        Ok(EstimatorSpec { kind, params, r })
    }

    pub fn ml() -> Self {
        EstimatorSpec {
            kind: EstimatorKind::Ml,
            params: None,
            r: None,
        }
    }

    pub fn ltl(params: ShrinkageParams) -> Self {
        EstimatorSpec {
            kind: EstimatorKind::Ltl,
            params: Some(params),
            r: None,
        }
    }

    pub fn pclr(r: usize) -> Self {
        EstimatorSpec {
            kind: EstimatorKind::Pclr,
            params: None,
            r: Some(r),
        }
    }

    pub fn pcltl(r: usize, params: ShrinkageParams) -> Self {
        EstimatorSpec {
            kind: EstimatorKind::Pcltl,
            params: Some(params),
            r: Some(r),
        }
    }
}

/// Quantities every plug-in estimator shares: `X'VX`, `X'Vz`, its
/// eigendecomposition and the ML closed form.
#[derive(Debug, Clone)]
pub struct PlugIn {
    pub xtvx: DMatrix<f64>,
    pub xtvz: DVector<f64>,
    pub decomp: SpectralDecomposition,
    pub mle: DVector<f64>,
}

impl PlugIn {
    pub fn new(fit: &LogisticFit, x: &DMatrix<f64>) -> Result<Self> {
        if fit.v_diag.len() != x.nrows() || fit.beta.len() != x.ncols() {
            return Err(Error::invalid("fit does not match design dimensions"));
        }
        let xtvx = weighted_gram(x, &fit.v_diag);
        let xtvz = weighted_cross(x, &fit.v_diag, &fit.z);
        let mle = solve_spd(&xtvx, &xtvz).ok_or(Error::Singular {
            iteration: fit.iterations,
        })?;
        let decomp = SpectralDecomposition::from_symmetric(&xtvx)?;
        Ok(PlugIn {
            xtvx,
            xtvz,
            decomp,
            mle,
        })
    }

    pub fn p(&self) -> usize {
        self.mle.len()
    }

    pub fn split(&self, r: usize) -> Result<ComponentSplit> {
        self.decomp.split(r)
    }

    /// `T' beta_ML`.
    pub fn alpha_hat(&self) -> DVector<f64> {
        self.decomp.coordinates(&self.mle)
    }

    /// `(X'VX + kI)^{-1} (X'Vz - d beta_ML)`, solved directly.
    pub fn ltl(&self, params: &ShrinkageParams) -> DVector<f64> {
        let p = self.p();
        let lhs = &self.xtvx + DMatrix::identity(p, p) * params.k;
        let rhs = &self.xtvz - &self.mle * params.d;
        solve_spd(&lhs, &rhs).expect("X'VX + kI is positive definite for k > 0")
    }

    /// `T_r Lambda_r^{-1} T_r' X'Vz`.
    pub fn pclr(&self, split: &ComponentSplit) -> DVector<f64> {
        self.retained_filter(split, |l| 1.0 / l)
    }

    /// `T_r (Lambda_r + kI)^{-1} (Lambda_r - dI) Lambda_r^{-1} T_r' X'Vz`.
    pub fn pcltl(&self, split: &ComponentSplit, params: &ShrinkageParams) -> DVector<f64> {
        let (k, d) = (params.k, params.d);
        self.retained_filter(split, |l| (l - d) / ((l + k) * l))
    }

    fn retained_filter(&self, split: &ComponentSplit, gain: impl Fn(f64) -> f64) -> DVector<f64> {
        let t_r = split.retained_vectors();
        let mut coords = t_r.tr_mul(&self.xtvz);
        for (c, &l) in coords.iter_mut().zip(split.retained_lambdas().iter()) {
            *c *= gain(l);
        }
        t_r * coords
    }

    pub fn estimate(&self, spec: &EstimatorSpec) -> Result<DVector<f64>> {
        let params = || {
            spec.params
                .ok_or_else(|| Error::invalid("missing biasing parameters"))
        };
        let split = || self.split(spec.r.ok_or_else(|| Error::invalid("missing component count"))?);
        Ok(match spec.kind {
            EstimatorKind::Ml => self.mle.clone(),
            EstimatorKind::Ltl => self.ltl(&params()?),
            EstimatorKind::Pclr => self.pclr(&split()?),
            EstimatorKind::Pcltl => self.pcltl(&split()?, &params()?),
        })
    }
}

/// `(X'VX)^{-1} X'Vz` at the fit's weights and working response.
pub fn mle_estimate(fit: &LogisticFit, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(PlugIn::new(fit, x)?.mle)
}

pub fn ltl_estimate(fit: &LogisticFit, x: &DMatrix<f64>, params: &ShrinkageParams) -> Result<DVector<f64>> {
    Ok(PlugIn::new(fit, x)?.ltl(params))
}

pub fn pclr_estimate(fit: &LogisticFit, x: &DMatrix<f64>, split: &ComponentSplit) -> Result<DVector<f64>> {
    Ok(PlugIn::new(fit, x)?.pclr(split))
}

pub fn pcltl_estimate(
    fit: &LogisticFit,
    x: &DMatrix<f64>,
    split: &ComponentSplit,
    params: &ShrinkageParams,
) -> Result<DVector<f64>> {
    Ok(PlugIn::new(fit, x)?.pcltl(split, params))
}

/// `d = min_j lambda_j / (1 + lambda_j) / 2`.
pub fn choose_d(lambdas: &DVector<f64>) -> f64 {
    0.5 * lambdas
        .iter()
        .map(|&l| l / (1.0 + l))
        .fold(f64::INFINITY, f64::min)
}

pub const ALPHA_FLOOR: f64 = 1e-8;
pub const K_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KChoice {
    pub k: f64,
    /// Value of the averaging rule before clamping.
    pub raw: f64,
    pub clamped: bool,
}

/// Arithmetic-mean rule `k = mean_j (lambda_j - d (1 + lambda_j a_j^2)) / (lambda_j a_j^2)`
/// with `a = T' beta_ML`. Coordinates are floored at `1e-8` in magnitude and a
/// result below `1e-4` (including any non-positive one) is raised to `1e-4`.
pub fn choose_k(lambdas: &DVector<f64>, alpha_hat: &DVector<f64>, d: f64) -> KChoice {
    let p = lambdas.len();
    let sum: f64 = lambdas
        .iter()
        .zip(alpha_hat.iter())
        .map(|(&l, &a)| {
            let a2 = a.abs().max(ALPHA_FLOOR).powi(2);
            (l - d * (1.0 + l * a2)) / (l * a2)
        })
        .sum();
    let raw = sum / p as f64;
    if raw >= K_MIN {
        KChoice {
            k: raw,
            raw,
            clamped: false,
        }
    } else {
        KChoice {
            k: K_MIN,
            raw,
            clamped: true,
        }
    }
}

/// Rule-based `(k, d)` from a plug-in fit.
pub fn rule_params(plugin: &PlugIn) -> Result<(ShrinkageParams, KChoice)> {
    let d = choose_d(&plugin.decomp.lambdas);
    let kc = choose_k(&plugin.decomp.lambdas, &plugin.alpha_hat(), d);
    let params = ShrinkageParams::with_provenance(kc.k, Provenance::Rule, d, Provenance::Rule)?;
    Ok((params, kc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn identity_decomposes_to_identity() {
        let d = SpectralDecomposition::from_symmetric(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(d.lambdas, DVector::from_element(4, 1.0));
        assert_eq!(d.vectors, DMatrix::identity(4, 4));
    }

    #[test]
    fn diagonal_decomposition() {
        let d = SpectralDecomposition::from_symmetric(&diag(&[4.0, 1.0])).unwrap();
        assert_eq!(d.lambdas.as_slice(), &[4.0, 1.0]);
        assert_eq!(d.vectors, DMatrix::identity(2, 2));
        let d = SpectralDecomposition::from_symmetric(&diag(&[1.0, 4.0])).unwrap();
        assert_eq!(d.lambdas.as_slice(), &[4.0, 1.0]);
        assert_eq!(d.vectors, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn non_positive_definite_is_rejected() {
        let err = SpectralDecomposition::from_symmetric(&diag(&[1.0, -2.0])).unwrap_err();
        match err {
            Error::Decomposition { smallest_eigenvalue } => assert_eq!(smallest_eigenvalue, -2.0),
            e => panic!("unexpected {e}"),
        }
        assert!(SpectralDecomposition::from_symmetric(&diag(&[1.0, f64::NAN])).is_err());
    }

    #[test]
    fn component_selection() {
        let l = |v: &[f64]| DVector::from_row_slice(v);
        assert_eq!(select_components(&l(&[3.0, 1.0]), 0.75).unwrap(), 1);
        assert_eq!(select_components(&l(&[1.0, 1.0, 1.0, 1.0]), 0.75).unwrap(), 3);
        assert_eq!(select_components(&l(&[1.0, 1.0, 1.0, 1.0]), 1.0).unwrap(), 4);
        assert_eq!(select_components(&l(&[5.0]), 0.01).unwrap(), 1);
        assert!(select_components(&l(&[1.0]), 0.0).is_err());
        assert!(select_components(&l(&[1.0]), 1.5).is_err());
    }

    #[test]
    fn split_bounds() {
        let d = SpectralDecomposition::from_symmetric(&diag(&[4.0, 1.0])).unwrap();
        assert!(d.split(0).is_err());
        assert!(d.split(3).is_err());
        let s = d.split(1).unwrap();
        assert_eq!(s.retained_lambdas().as_slice(), &[4.0]);
        assert_eq!(s.dropped_lambdas().as_slice(), &[1.0]);
    }

    #[test]
    fn d_rule() {
        assert_eq!(choose_d(&DVector::from_row_slice(&[1.0, 1.0])), 0.25);
        assert_eq!(choose_d(&DVector::from_row_slice(&[4.0, 1.0])), 0.25);
        let d = choose_d(&DVector::from_row_slice(&[9.0, 3.0, 0.01]));
        assert!((d - 0.5 * 0.01 / 1.01).abs() < 1e-15);
        assert!((d - 0.0049505).abs() < 1e-7);
    }

    #[test]
    fn k_rule() {
        let v = |s: &[f64]| DVector::from_row_slice(s);
        let c = choose_k(&v(&[1.0]), &v(&[1.0]), 0.25);
        assert!((c.k - 0.5).abs() < 1e-15 && !c.clamped);
        let c = choose_k(&v(&[2.0, 1.0]), &v(&[1.0, 1.0]), 0.0);
        assert!((c.k - 1.0).abs() < 1e-15);
        // lambda = 1, a = 1, d = 1: (1 - 2) / 1 < 0
        let c = choose_k(&v(&[1.0]), &v(&[1.0]), 1.0);
        assert!(c.clamped && c.k == K_MIN && c.raw == -1.0);
    }

    #[test]
    fn k_rule_floors_zero_coordinate() {
        let c = choose_k(
            &DVector::from_row_slice(&[1.0]),
            &DVector::from_row_slice(&[0.0]),
            0.0,
        );
        assert!((c.k - 1e16).abs() / 1e16 < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(ShrinkageParams::new(0.0, 0.1).is_err());
        assert!(ShrinkageParams::new(-1.0, 0.1).is_err());
        assert!(ShrinkageParams::new(1.0, f64::INFINITY).is_err());
        assert!(ShrinkageParams::new(1.0, -3.0).is_ok());
    }

    #[test]
    fn spec_validation() {
        let p = ShrinkageParams::new(1.0, 0.5).unwrap();
        assert!(EstimatorSpec::new(EstimatorKind::Ml, None, None).is_ok());
        assert!(EstimatorSpec::new(EstimatorKind::Ml, Some(p), None).is_err());
        assert!(EstimatorSpec::new(EstimatorKind::Ltl, None, None).is_err());
        assert!(EstimatorSpec::new(EstimatorKind::Pclr, None, Some(0)).is_err());
        assert!(EstimatorSpec::new(EstimatorKind::Pcltl, Some(p), Some(2)).is_ok());
        assert!(EstimatorSpec::new(EstimatorKind::Pcltl, Some(p), None).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("PCLTL".parse::<EstimatorKind>().unwrap(), EstimatorKind::Pcltl);
        assert_eq!("mle".parse::<EstimatorKind>().unwrap(), EstimatorKind::Ml);
        assert!("ridge".parse::<EstimatorKind>().is_err());
    }
}

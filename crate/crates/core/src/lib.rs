//! Maximum-likelihood, Liu-type, principal component and principal component
//! Liu-type estimators for binary logistic regression on collinear designs,
//! their asymptotic mean squared error matrices, and a reproducible Monte
//! Carlo harness comparing them.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod model;
pub mod msem;
pub mod simulation;

pub use error::{Error, Result};
pub use estimators::{
    choose_d, choose_k, ltl_estimate, mle_estimate, pclr_estimate, pcltl_estimate, select_components,
    spectral_decompose, ComponentSplit, EstimatorKind, EstimatorSpec, KChoice, PlugIn, Provenance,
    ShrinkageParams, SpectralDecomposition,
};
pub use model::{
    irls_fit, log_likelihood, predict_probabilities, weight_diagonal, working_response, Dataset, FitConfig,
    LogisticFit,
};
pub use msem::{
    asymptotic_msem, pcltl_bias, pcltl_covariance, pcltl_vs_ltl_condition, pcltl_vs_ml_condition,
    pcltl_vs_pclr_condition, psd_dominates, smse, BetaSource, Comparison, DominanceVerdict, MlConditionForm,
    MsemReport,
};
pub use simulation::{run_study, simulate_cell, CellResult, SimulationConfig, StudyGrid};

//! Monte Carlo comparison of the four estimators on correlated designs.
//!
//! Random streams: every cell derives a 64-bit seed from the master seed and
//! its coordinates `(p, n, rho)` with a splitmix64 chain, then seeds a
//! ChaCha20 generator. Stream 0 of that generator draws the design and stream
//! `c + 1` draws the response of replication `c`. Results therefore do not
//! depend on the grid a cell belongs to, on replication scheduling, or on
//! whether execution is parallel.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{rule_params, select_components, EstimatorKind, PlugIn, SpectralDecomposition};
use crate::model::{irls_fit, logistic, Dataset, FitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub replications: usize,
    pub seed: u64,
    pub ptv_threshold: f64,
    pub fit: FitConfig,
    /// Run replications on the rayon pool. Output is identical either way.
    #[serde(skip, default)]
    pub parallel: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n: 200,
            p: 4,
            rho: 0.8,
            replications: 2000,
            seed: 20170,
            ptv_threshold: 0.75,
            fit: FitConfig::default(),
            parallel: true,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.n <= self.p {
            return Err(Error::invalid(format!(
                "need n > p >= 2, got n={}, p={}",
                self.n, self.p
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if !(self.ptv_threshold > 0.0 && self.ptv_threshold <= 1.0) {
            return Err(Error::invalid("ptv threshold must lie in (0, 1]"));
        }
        self.fit.validate()
    }
}

/// Variability threshold used for the default study: 0.83 when `p = 6`, else 0.75.
pub fn default_ptv_threshold(p: usize) -> f64 {
    if p == 6 {
        0.83
    } else {
        0.75
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: SimulationConfig,
    /// Simulated MSE per estimator, averaged over converged replications.
    pub mse: BTreeMap<EstimatorKind, f64>,
    pub converged_replications: usize,
    pub divergent_replications: usize,
    pub mean_r: f64,
    pub mean_k: f64,
    pub mean_d: f64,
    pub k_clamped: usize,
    /// Average of `tr((X'VX)^{-1})` over converged replications.
    pub mean_asymptotic_ml_smse: f64,
    pub true_beta: Vec<f64>,
}

impl CellResult {
    pub fn mse_of(&self, kind: EstimatorKind) -> f64 {
        self.mse[&kind]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyGrid {
    pub p_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub rho_values: Vec<f64>,
    /// Fixed threshold for every cell; `None` applies [`default_ptv_threshold`].
    pub ptv_override: Option<f64>,
}

impl Default for StudyGrid {
    fn default() -> Self {
        StudyGrid {
            p_values: vec![4, 6, 8, 12],
            n_values: vec![200, 500, 1000],
            rho_values: vec![0.8, 0.9, 0.99, 0.999],
            ptv_override: None,
        }
    }
}

impl StudyGrid {
    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty() || self.n_values.is_empty() || self.rho_values.is_empty() {
            return Err(Error::invalid("study grid lists must be nonempty"));
        }
        Ok(())
    }

    /// Cell configurations in `p`, then `n`, then `rho` order.
    pub fn cells(&self, base: &SimulationConfig) -> Vec<SimulationConfig> {
        let mut out = Vec::with_capacity(self.p_values.len() * self.n_values.len() * self.rho_values.len());
        for &p in &self.p_values {
            for &n in &self.n_values {
                for &rho in &self.rho_values {
                    out.push(SimulationConfig {
                        p,
                        n,
                        rho,
                        ptv_threshold: self.ptv_override.unwrap_or_else(|| default_ptv_threshold(p)),
                        ..*base
                    });
                }
            }
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one cell: `splitmix64` folded over the master seed, `p`, `n` and the bits of `rho`.
pub fn cell_seed(master: u64, p: usize, n: usize, rho: f64) -> u64 {
    [p as u64, n as u64, rho.to_bits()]
        .iter()
        .fold(splitmix64(master), |acc, &v| splitmix64(acc ^ v))
}

fn stream(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `x_ij = sqrt(1 - rho^2) z_ij + rho z_{i,q+1}` with standard normal `z`.
///
/// Each row consumes `q + 1` normals: the `q` column draws, then the shared one.
pub fn generate_design<R: Rng + ?Sized>(n: usize, q: usize, rho: f64, rng: &mut R) -> DMatrix<f64> {
    let own = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, q);
    let mut row = vec![0.0; q];
    for i in 0..n {
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let shared: f64 = rng.sample(StandardNormal);
        for j in 0..q {
            x[(i, j)] = own * row[j] + rho * shared;
        }
    }
    x
}

/// Unit eigenvector of `X'X` for its largest eigenvalue, largest-magnitude entry positive.
pub fn newhouse_oman_beta(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let decomp = SpectralDecomposition::from_symmetric(&x.tr_mul(x))?;
    let v = decomp.vectors.column(0).into_owned();
    Ok(v.normalize())
}

/// Independent Bernoulli draws with logistic probabilities `x_i' beta`.
pub fn generate_response<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let eta = x * beta;
    eta.map(|e| {
        let u: f64 = rng.random();
        if u < logistic(e) {
            1.0
        } else {
            0.0
        }
    })
}

/// Per-replication estimates and the tuning values chosen for them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    /// Indexed like [`EstimatorKind::ALL`].
    pub estimates: [DVector<f64>; 4],
    pub r: usize,
    pub k: f64,
    pub d: f64,
    pub k_clamped: bool,
    pub asymptotic_ml_smse: f64,
}

impl ReplicationOutcome {
    pub fn squared_errors(&self, beta: &DVector<f64>) -> [f64; 4] {
        std::array::from_fn(|i| (&self.estimates[i] - beta).norm_squared())
    }
}

/// The fixed part of a cell: its design, true coefficients and seed.
#[derive(Debug, Clone)]
pub struct CellSetup {
    pub x: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub seed: u64,
}

impl CellSetup {
    pub fn new(config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        let seed = cell_seed(config.seed, config.p, config.n, config.rho);
        let x = generate_design(config.n, config.p, config.rho, &mut stream(seed, 0));
        let beta = newhouse_oman_beta(&x)?;
        Ok(CellSetup { x, beta, seed })
    }

    /// One replication; `None` when the ML fit diverges or is unusable.
    pub fn replicate(&self, config: &SimulationConfig, c: usize) -> Option<ReplicationOutcome> {
        let mut rng = stream(self.seed, c as u64 + 1);
        let y = generate_response(&self.x, &self.beta, &mut rng);
        let data = Dataset::new(self.x.clone(), y).ok()?;
        let fit = irls_fit(&data, &config.fit).ok()?;
        if !fit.converged {
            return None;
        }
        let plugin = PlugIn::new(&fit, &self.x).ok()?;
        let lambdas = &plugin.decomp.lambdas;
        let r = select_components(lambdas, config.ptv_threshold).ok()?;
        let split = plugin.split(r).ok()?;
        let (params, kc) = rule_params(&plugin).ok()?;
        let estimates = [
            plugin.mle.clone(),
            plugin.ltl(&params),
            plugin.pclr(&split),
            plugin.pcltl(&split, &params),
        ];
        if estimates.iter().any(|e| e.iter().any(|v| !v.is_finite())) {
            return None;
        }
        Some(ReplicationOutcome {
            estimates,
            r,
            k: params.k,
            d: params.d,
            k_clamped: kc.clamped,
            asymptotic_ml_smse: lambdas.iter().map(|l| 1.0 / l).sum(),
        })
    }

    pub fn replicate_all(&self, config: &SimulationConfig) -> Vec<Option<ReplicationOutcome>> {
        if config.parallel {
            (0..config.replications)
                .into_par_iter()
                .map(|c| self.replicate(config, c))
                .collect()
        } else {
            (0..config.replications)
                .map(|c| self.replicate(config, c))
                .collect()
        }
    }
}

/// Runs every replication of one cell and averages squared estimation error
/// against the true coefficients over the converged replications.
pub fn simulate_cell(config: &SimulationConfig) -> Result<CellResult> {
    let setup = CellSetup::new(config)?;
    let outcomes = setup.replicate_all(config);
    summarize(config, &setup.beta, &outcomes)
}

/// Folds replication outcomes in index order into a [`CellResult`].
pub fn summarize(
    config: &SimulationConfig,
    beta: &DVector<f64>,
    outcomes: &[Option<ReplicationOutcome>],
) -> Result<CellResult> {
    let mut sums = [0.0; 4];
    let (mut r_sum, mut k_sum, mut d_sum, mut trace_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut converged = 0usize;
    let mut clamped = 0usize;
    for o in outcomes.iter().flatten() {
        for (s, e) in sums.iter_mut().zip(o.squared_errors(beta)) {
            *s += e;
        }
        r_sum += o.r as f64;
        k_sum += o.k;
        d_sum += o.d;
        trace_sum += o.asymptotic_ml_smse;
        clamped += o.k_clamped as usize;
        converged += 1;
    }
    if converged == 0 {
        return Err(Error::CellFailed {
            p: config.p,
            n: config.n,
            rho: config.rho,
            replications: outcomes.len(),
        });
    }
    let m = converged as f64;
    Ok(CellResult {
        config: *config,
        mse: EstimatorKind::ALL
            .iter()
            .zip(sums)
            .map(|(&k, s)| (k, s / m))
            .collect(),
        converged_replications: converged,
        divergent_replications: outcomes.len() - converged,
        mean_r: r_sum / m,
        mean_k: k_sum / m,
        mean_d: d_sum / m,
        k_clamped: clamped,
        mean_asymptotic_ml_smse: trace_sum / m,
        true_beta: beta.iter().copied().collect(),
    })
}

/// Outcome of one study cell; failures keep their coordinates.
pub type CellOutcome = std::result::Result<CellResult, (SimulationConfig, String)>;

/// Runs every cell, keeping failed cells in place.
pub fn run_study_lenient(grid: &StudyGrid, base: &SimulationConfig) -> Result<Vec<CellOutcome>> {
    grid.validate()?;
    let cells = grid.cells(base);
    let run = |c: &SimulationConfig| simulate_cell(c).map_err(|e| (*c, e.to_string()));
    Ok(if base.parallel {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    })
}

/// Runs every cell; the first failing cell aborts the study.
pub fn run_study(grid: &StudyGrid, base: &SimulationConfig) -> Result<Vec<CellResult>> {
    grid.validate()?;
    let cells = grid.cells(base);
    let run = |c: &SimulationConfig| -> Result<CellResult> {
        simulate_cell(c).map_err(|e| match e {
            e @ Error::CellFailed { .. } => e,
            other => Error::InvalidArgument(format!("cell p={} n={} rho={}: {other}", c.p, c.n, c.rho)),
        })
    };
    if base.parallel {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    }
}

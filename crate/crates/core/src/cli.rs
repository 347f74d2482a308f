//! Orchestration behind the `pcltl` binary: the `fit`, `compare` and
//! `simulate` commands and their report types.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    choose_d, choose_k, select_components, EstimatorKind, EstimatorSpec, PlugIn, Provenance, ShrinkageParams,
};
use crate::io::{delimited, parse_dataset, render_study_text, study_tables, ParseOptions, StudyTable};
use crate::linalg::max_abs;
use crate::model::{irls_fit, Dataset, FitConfig, LogisticFit};
use crate::msem::{
    asymptotic_msem, pcltl_vs_ltl_condition, pcltl_vs_ml_condition, pcltl_vs_pclr_condition, psd_dominates,
    BetaSource, Comparison, DominanceVerdict, MlConditionForm, PSD_TOLERANCE,
};
use crate::simulation::{run_study_lenient, CellResult, SimulationConfig, StudyGrid};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_PTV: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Tsv,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Fit,
    Simulate,
    Compare,
}

/// Everything a command needs, already parsed from flags and config files.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub subcommand: Subcommand,
    pub input_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
    pub parse: ParseOptions,
    pub estimators: Vec<EstimatorKind>,
    pub pairs: Vec<(EstimatorKind, EstimatorKind)>,
    pub k: Option<f64>,
    pub d: Option<f64>,
    pub r: Option<usize>,
    pub ptv: Option<f64>,
    pub fit: FitConfig,
    pub seed: u64,
    pub replications: usize,
    pub grid: StudyGrid,
    pub beta_source: BetaSource,
    pub beta_file: Option<PathBuf>,
    pub ml_condition: MlConditionForm,
    pub parallel: bool,
}

impl CliConfig {
    pub fn new(subcommand: Subcommand) -> Self {
        CliConfig {
            subcommand,
            input_path: None,
            output_path: None,
            format: OutputFormat::Tsv,
            parse: ParseOptions::default(),
            estimators: EstimatorKind::ALL.to_vec(),
            pairs: vec![(EstimatorKind::Pcltl, EstimatorKind::Ml)],
            k: None,
            d: None,
            r: None,
            ptv: None,
            fit: FitConfig::default(),
            seed: SimulationConfig::default().seed,
            replications: 2000,
            grid: StudyGrid::default(),
            beta_source: BetaSource::PlugInMle,
            beta_file: None,
            ml_condition: MlConditionForm::default(),
            parallel: true,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.subcommand {
            Subcommand::Fit | Subcommand::Compare if self.input_path.is_none() => {
                Err(Error::invalid("an input dataset is required"))
            }
            _ => Ok(()),
        }
    }
}

/// Parses `ml,ltl,pcltl`.
pub fn parse_estimator_list(s: &str) -> Result<Vec<EstimatorKind>> {
    let mut kinds: Vec<EstimatorKind> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if kinds.is_empty() {
        return Err(Error::invalid("no estimators selected"));
    }
    kinds.sort();
    kinds.dedup();
    Ok(kinds)
}

/// Parses `pcltl:ml`.
pub fn parse_pair(s: &str) -> Result<(EstimatorKind, EstimatorKind)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::invalid(format!("pair must look like 'pcltl:ml', got '{s}'")))?;
    let (a, b) = (a.parse()?, b.parse()?);
    if a == b {
        return Err(Error::invalid("a pair needs two different estimators"));
    }
    Ok((a, b))
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad {what} value '{t}'")))
        })
        .collect()
}

/// Biasing parameters and component count for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub r: usize,
    pub r_source: Provenance,
    pub ptv_threshold: Option<f64>,
    pub params: ShrinkageParams,
    pub k_clamped: bool,
}

fn tune(plugin: &PlugIn, config: &CliConfig) -> Result<Tuning> {
    let lambdas = &plugin.decomp.lambdas;
    let (d, d_source) = match config.d {
        Some(d) => (d, Provenance::User),
        None => (choose_d(lambdas), Provenance::Rule),
    };
    let (k, k_source, k_clamped) = match config.k {
        Some(k) => (k, Provenance::User, false),
        None => {
            let kc = choose_k(lambdas, &plugin.alpha_hat(), d);
            (kc.k, Provenance::Rule, kc.clamped)
        }
    };
    let params = ShrinkageParams::with_provenance(k, k_source, d, d_source)?;
    let (r, r_source, ptv_threshold) = match config.r {
        Some(r) => (r, Provenance::User, None),
        None => {
            let ptv = config.ptv.unwrap_or(DEFAULT_PTV);
            (select_components(lambdas, ptv)?, Provenance::Rule, Some(ptv))
        }
    };
    Ok(Tuning {
        r,
        r_source,
        ptv_threshold,
        params,
        k_clamped,
    })
}

struct Pipeline {
    data: Dataset,
    fit: LogisticFit,
    plugin: PlugIn,
    tuning: Tuning,
}

fn run_pipeline(config: &CliConfig) -> Result<Pipeline> {
    config.validate()?;
    if let Some(ptv) = config.ptv {
        if !(ptv > 0.0 && ptv <= 1.0) {
            return Err(Error::invalid(format!("ptv must lie in (0, 1], got {ptv}")));
        }
    }
    if let Some(k) = config.k {
        if k.is_nan() || k <= 0.0 {
            return Err(Error::invalid(format!("k must be positive, got {k}")));
        }
    }
    if config.r == Some(0) {
        return Err(Error::invalid("r must be at least 1"));
    }
    let path = config.input_path.as_ref().expect("validated");
    let data = parse_dataset(path, config.parse)?;
    let fit = irls_fit(&data, &config.fit)?;
    if !fit.converged {
        return Err(Error::Domain(format!(
            "IRLS did not converge after {} iterations (last step max-norm {:e}, log-likelihood {})",
            fit.iterations,
            fit.final_step_norm,
            fit.log_likelihood()
        )));
    }
    let plugin = PlugIn::new(&fit, data.x())?;
    let tuning = tune(&plugin, config)?;
    Ok(Pipeline {
        data,
        fit,
        plugin,
        tuning,
    })
}

fn spec_for(kind: EstimatorKind, tuning: &Tuning) -> Result<EstimatorSpec> {
    let params = kind.needs_params().then_some(tuning.params);
    let r = kind.needs_components().then_some(tuning.r);
    EstimatorSpec::new(kind, params, r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub estimator: EstimatorKind,
    pub coefficients: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub p: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_step_norm: f64,
    pub log_likelihood: f64,
    pub score_max_norm: f64,
    pub eigenvalues: Vec<f64>,
    pub condition_number: f64,
    pub tuning: Tuning,
    pub estimates: Vec<EstimateRow>,
}

pub fn run_fit_command(config: &CliConfig) -> Result<FitReport> {
    let Pipeline {
        data,
        fit,
        plugin,
        tuning,
    } = run_pipeline(config)?;
    let pi = crate::model::predict_probabilities(data.x(), &fit.beta, config.fit.probability_clip)?;
    let score = data.x().tr_mul(&(data.y() - pi));

    let mut kinds = config.estimators.clone();
    kinds.sort();
    kinds.dedup();
    let estimates = kinds
        .into_iter()
        .map(
            |kind| match spec_for(kind, &tuning).and_then(|s| plugin.estimate(&s)) {
                Ok(b) => EstimateRow {
                    estimator: kind,
                    coefficients: Some(b.iter().copied().collect()),
                    error: None,
                },
                Err(e) => EstimateRow {
                    estimator: kind,
                    coefficients: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect();

    Ok(FitReport {
        n: data.n(),
        p: data.p(),
        converged: fit.converged,
        iterations: fit.iterations,
        final_step_norm: fit.final_step_norm,
        log_likelihood: fit.log_likelihood(),
        score_max_norm: max_abs(&score),
        eigenvalues: plugin.decomp.lambdas.iter().copied().collect(),
        condition_number: plugin.decomp.condition_number(),
        tuning,
        estimates,
    })
}

fn provenance(p: Provenance) -> &'static str {
    match p {
        Provenance::User => "user",
        Provenance::Rule => "rule",
    }
}

impl FitReport {
    pub fn render(&self, format: OutputFormat) -> Result<String> {
        let sep = match format {
            OutputFormat::Json => return Ok(serde_json::to_string_pretty(self)? + "\n"),
            OutputFormat::Tsv => '\t',
            OutputFormat::Csv => ',',
        };
        let t = &self.tuning;
        let summary: Vec<Vec<String>> = [
            ("n", self.n.to_string()),
            ("p", self.p.to_string()),
            ("converged", self.converged.to_string()),
            ("iterations", self.iterations.to_string()),
            ("final_step_norm", format!("{:e}", self.final_step_norm)),
            ("log_likelihood", self.log_likelihood.to_string()),
            ("score_max_norm", format!("{:e}", self.score_max_norm)),
            ("condition_number", self.condition_number.to_string()),
            ("r", format!("{} ({})", t.r, provenance(t.r_source))),
            (
                "ptv_threshold",
                t.ptv_threshold.map_or_else(|| "-".into(), |v| v.to_string()),
            ),
            ("k", format!("{} ({})", t.params.k, provenance(t.params.k_source))),
            ("d", format!("{} ({})", t.params.d, provenance(t.params.d_source))),
            ("k_clamped", t.k_clamped.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), v])
        .collect();
        let mut out = delimited(&["field", "value"], &summary, sep);

        out.push('\n');
        let eig: Vec<Vec<String>> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(j, l)| vec![(j + 1).to_string(), l.to_string()])
            .collect();
        out += &delimited(&["component", "eigenvalue"], &eig, sep);

        out.push('\n');
        let names: Vec<String> = std::iter::once("estimator".to_string())
            .chain((1..=self.p).map(|j| format!("b{j}")))
            .collect();
        let header: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = self
            .estimates
            .iter()
            .map(|row| {
                let mut cells = vec![row.estimator.label().to_string()];
                match (&row.coefficients, &row.error) {
                    (Some(b), _) => cells.extend(b.iter().map(|v| v.to_string())),
                    (None, e) => cells.push(format!("error: {}", e.as_deref().unwrap_or("unknown"))),
                }
                cells
            })
            .collect();
        out += &delimited(&header, &rows, sep);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// The estimator claimed to be at least as good.
    pub candidate: EstimatorKind,
    pub comparator: EstimatorKind,
    pub verdict: DominanceVerdict,
    pub smse_candidate: f64,
    pub smse_comparator: f64,
    pub beta_source: BetaSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub n: usize,
    pub p: usize,
    pub tuning: Tuning,
    pub beta: Vec<f64>,
    pub beta_source: BetaSource,
    pub comparisons: Vec<ComparisonRow>,
}

fn read_beta_file(path: &PathBuf, p: usize) -> Result<DVector<f64>> {
    let text = std::fs::read_to_string(path)?;
    let values: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line: 0,
                message: format!("bad coefficient '{t}' in {}", path.display()),
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != p {
        return Err(Error::Domain(format!(
            "coefficient file has {} values, dataset has {p} covariates",
            values.len()
        )));
    }
    Ok(DVector::from_vec(values))
}

pub fn run_compare_command(config: &CliConfig) -> Result<CompareReport> {
    if config.pairs.is_empty() {
        return Err(Error::invalid("no estimator pairs selected"));
    }
    let Pipeline {
        data, plugin, tuning, ..
    } = run_pipeline(config)?;
    let beta = match config.beta_source {
        BetaSource::PlugInMle => plugin.mle.clone(),
        BetaSource::TrueBeta => {
            let path = config
                .beta_file
                .as_ref()
                .ok_or_else(|| Error::invalid("--beta-source file requires --beta-file"))?;
            read_beta_file(path, data.p())?
        }
    };
    let split = plugin.split(tuning.r)?;
    let params = tuning.params;
    let decomp = &plugin.decomp;

    let mut comparisons = Vec::new();
    for &(a, b) in &config.pairs {
        let (candidate, comparator) = if b == EstimatorKind::Pcltl { (b, a) } else { (a, b) };
        let verdict = match (candidate, comparator) {
            (EstimatorKind::Pcltl, EstimatorKind::Ml) => {
                pcltl_vs_ml_condition(&beta, &split, &params, config.ml_condition)?
            }
            (EstimatorKind::Pcltl, EstimatorKind::Pclr) => pcltl_vs_pclr_condition(&beta, &split, &params)?,
            (EstimatorKind::Pcltl, EstimatorKind::Ltl) => pcltl_vs_ltl_condition(&beta, &split, &params)?,
            _ => {
                let ma = asymptotic_msem(&spec_for(comparator, &tuning)?, decomp, &beta, config.beta_source)?;
                let mb = asymptotic_msem(&spec_for(candidate, &tuning)?, decomp, &beta, config.beta_source)?;
                psd_dominates(&ma.msem, &mb.msem, PSD_TOLERANCE)?
            }
        };
        let smse = |kind| -> Result<f64> {
            Ok(asymptotic_msem(&spec_for(kind, &tuning)?, decomp, &beta, config.beta_source)?.smse)
        };
        comparisons.push(ComparisonRow {
            candidate,
            comparator,
            verdict,
            smse_candidate: smse(candidate)?,
            smse_comparator: smse(comparator)?,
            beta_source: config.beta_source,
        });
    }
    Ok(CompareReport {
        n: data.n(),
        p: data.p(),
        tuning,
        beta: beta.iter().copied().collect(),
        beta_source: config.beta_source,
        comparisons,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".into(), |x| x.to_string())
}

impl CompareReport {
    pub fn render(&self, format: OutputFormat) -> Result<String> {
        let sep = match format {
            OutputFormat::Json => return Ok(serde_json::to_string_pretty(self)? + "\n"),
            OutputFormat::Tsv => '\t',
            OutputFormat::Csv => ',',
        };
        let source = match self.beta_source {
            BetaSource::PlugInMle => "plug_in_mle",
            BetaSource::TrueBeta => "true_beta",
        };
        let rows: Vec<Vec<String>> = self
            .comparisons
            .iter()
            .map(|c| {
                let v = &c.verdict;
                let comparison = match v.comparison {
                    Comparison::PcltlVsMl => "pcltl_vs_ml",
                    Comparison::PcltlVsPclr => "pcltl_vs_pclr",
                    Comparison::PcltlVsLtl => "pcltl_vs_ltl",
                    Comparison::DirectPsd => "direct_psd",
                };
                vec![
                    format!("{}:{}", c.candidate.label(), c.comparator.label()),
                    comparison.to_string(),
                    v.condition_value.to_string(),
                    v.holds.to_string(),
                    v.precondition_met.to_string(),
                    opt(v.psd_oracle_holds),
                    opt(v.oracle_min_eigenvalue),
                    opt(v.psd_oracle_agrees),
                    opt(v.msem_equal),
                    c.smse_candidate.to_string(),
                    c.smse_comparator.to_string(),
                    source.to_string(),
                ]
            })
            .collect();
        Ok(delimited(
            &[
                "pair",
                "condition",
                "condition_value",
                "holds",
                "precondition_met",
                "psd_oracle_holds",
                "oracle_min_eigenvalue",
                "agrees",
                "msem_equal",
                "smse_candidate",
                "smse_comparator",
                "beta_source",
            ],
            &rows,
            sep,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub p: usize,
    pub n: usize,
    pub rho: f64,
    pub result: Option<CellResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub software: String,
    pub version: String,
    pub seed: u64,
    pub replications: usize,
    pub grid: StudyGrid,
    pub cells: Vec<CellRecord>,
    pub tables: Vec<StudyTable>,
}

impl SimulationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# pcltl {} seed={} replications={}",
            self.version, self.seed, self.replications
        );
        out + &render_study_text(&self.tables)
    }
}

pub fn run_simulate_command(config: &CliConfig) -> Result<SimulationReport> {
    let base = SimulationConfig {
        replications: config.replications,
        seed: config.seed,
        fit: config.fit,
        parallel: config.parallel,
        ..SimulationConfig::default()
    };
    let mut grid = config.grid.clone();
    if config.ptv.is_some() {
        grid.ptv_override = config.ptv;
    }
    let outcomes = run_study_lenient(&grid, &base)?;
    let tables = study_tables(&outcomes);
    let cells = outcomes
        .into_iter()
        .map(|o| match o {
            Ok(c) => CellRecord {
                p: c.config.p,
                n: c.config.n,
                rho: c.config.rho,
                result: Some(c),
                error: None,
            },
            Err((c, e)) => CellRecord {
                p: c.p,
                n: c.n,
                rho: c.rho,
                result: None,
                error: Some(e),
            },
        })
        .collect();
    let report = SimulationReport {
        software: "pcltl".into(),
        version: VERSION.into(),
        seed: config.seed,
        replications: config.replications,
        grid,
        cells,
        tables,
    };
    if let Some(dir) = &config.output_path {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("study.json"), report.to_json()?)?;
        std::fs::write(dir.join("tables.txt"), report.to_text())?;
    }
    Ok(report)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand, ValueEnum};

use pcltl::cli::{
    parse_estimator_list, parse_list, parse_pair, run_compare_command, run_fit_command, run_simulate_command,
    CliConfig, OutputFormat, Subcommand,
};
use pcltl::io::{config_file_args, ParseOptions};
use pcltl::{BetaSource, Error, MlConditionForm, StudyGrid};

#[derive(Parser)]
#[command(
    name = "pcltl",
    version,
    about = "Shrinkage estimators for collinear logistic regression"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Fit a dataset and report coefficients for the selected estimators.
    Fit(FitArgs),
    /// Check mean squared error matrix dominance between estimator pairs.
    Compare(CompareArgs),
    /// Run the Monte Carlo study.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum BetaSourceArg {
    Plugin,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum MlForm {
    Lambda,
    InverseLambda,
}

#[derive(Args)]
struct Common {
    /// Key-value file with default flag values; command-line flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// IRLS convergence tolerance on the max-norm of the update.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    input: PathBuf,
    /// Zero-based column holding the 0/1 response.
    #[arg(long, default_value_t = 0)]
    response_col: usize,
    /// The first line holds data, not column names.
    #[arg(long)]
    no_header: bool,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    d: Option<f64>,
    /// Retained component count; overrides --ptv.
    #[arg(long)]
    r: Option<usize>,
    /// Share of total variability the retained components must carry.
    #[arg(long)]
    ptv: Option<f64>,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "ml,ltl,pclr,pcltl")]
    estimators: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated pairs such as pcltl:ml,pcltl:pclr.
    #[arg(long, default_value = "pcltl:ml")]
    pair: String,
    #[arg(long, value_enum, default_value = "plugin")]
    beta_source: BetaSourceArg,
    /// Coefficients used when --beta-source file.
    #[arg(long)]
    beta_file: Option<PathBuf>,
    /// Weighting of the dropped components in the PCLTL-vs-ML condition.
    #[arg(long, value_enum, default_value = "lambda")]
    ml_condition: MlForm,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "4,6,8,12")]
    p: String,
    #[arg(long, default_value = "200,500,1000")]
    n: String,
    #[arg(long, default_value = "0.8,0.9,0.99,0.999")]
    rho: String,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, env = "PCLTL_SEED", default_value_t = 20170)]
    seed: u64,
    /// Fixed variability threshold for every cell (default: 0.83 for p = 6, else 0.75).
    #[arg(long)]
    ptv: Option<f64>,
    /// Directory receiving study.json and tables.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single-threaded execution.
    #[arg(long)]
    serial: bool,
    #[command(flatten)]
    common: Common,
}

fn format(f: Format) -> OutputFormat {
    match f {
        Format::Tsv => OutputFormat::Tsv,
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    }
}

fn apply_common(config: &mut CliConfig, common: &Common) {
    config.fit.tolerance = common.tol;
    config.fit.max_iterations = common.max_iter;
}

fn apply_data(config: &mut CliConfig, data: DataArgs) {
    config.input_path = Some(data.input);
    config.parse = ParseOptions {
        has_header: !data.no_header,
        response_column: data.response_col,
    };
    config.k = data.k;
    config.d = data.d;
    config.r = data.r;
    config.ptv = data.ptv;
    config.format = format(data.format);
    config.output_path = data.out;
}

/// Splices `--config FILE` contents in front of the explicit flags.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, Error> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("--config needs a path".into()))?,
    };
    let extra = config_file_args(std::path::Path::new(&path))?;
    // program name and subcommand come first
    let split = 2.min(args.len());
    let mut out = args[..split].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[split..]);
    Ok(out)
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fit(args) => {
            let mut config = CliConfig::new(Subcommand::Fit);
            apply_common(&mut config, &args.common);
            config.estimators = parse_estimator_list(&args.estimators)?;
            apply_data(&mut config, args.data);
            let report = run_fit_command(&config)?;
            emit(&report.render(config.format)?, config.output_path.as_ref())
        }
        Command::Compare(args) => {
            let mut config = CliConfig::new(Subcommand::Compare);
            apply_common(&mut config, &args.common);
            config.pairs = args
                .pair
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(parse_pair)
                .collect::<Result<_, _>>()?;
            config.beta_source = match args.beta_source {
                BetaSourceArg::Plugin => BetaSource::PlugInMle,
                BetaSourceArg::File => BetaSource::TrueBeta,
            };
            config.beta_file = args.beta_file;
            config.ml_condition = match args.ml_condition {
                MlForm::Lambda => MlConditionForm::DroppedLambda,
                MlForm::InverseLambda => MlConditionForm::DroppedInverseLambda,
            };
            apply_data(&mut config, args.data);
            let report = run_compare_command(&config)?;
            emit(&report.render(config.format)?, config.output_path.as_ref())
        }
        Command::Simulate(args) => {
            let mut config = CliConfig::new(Subcommand::Simulate);
            apply_common(&mut config, &args.common);
            config.grid = StudyGrid {
                p_values: parse_list(&args.p, "p")?,
                n_values: parse_list(&args.n, "n")?,
                rho_values: parse_list(&args.rho, "rho")?,
                ptv_override: None,
            };
            config.replications = args.reps;
            config.seed = args.seed;
            config.ptv = args.ptv;
            config.output_path = args.out;
            config.parallel = !args.serial;
            let report = run_simulate_command(&config)?;
            print!("{}", report.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

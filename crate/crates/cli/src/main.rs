//! Command-line frontend: fit a model, fit a regularization path, generate
//! simulation benchmarks, and predict.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;

use streamfit::data::{
    simulate_huber, simulate_lasso, standardize_columns, write_dataset, write_sidecar,
    ResponseColumn, SimulationMeta, StreamSource,
};
use streamfit::diagnostics::{self, TraceRecord};
use streamfit::error::{Error, Result};
use streamfit::model::{Objective, Penalty};
use streamfit::optimizer::{fit, FitConfig, FitResult, Method, TraceMetric, TraceSpec};
use streamfit::schedule::{AdaptiveKind, AdaptiveState, OneDimSchedule, Schedule};
use streamfit::solver::ImplicitConfig;
use streamfit_cli::output::{
    render_fit_text, render_path_text, FitOutput, LearningRateOutput, PathEntryOutput, PathOutput,
};
use streamfit_cli::path::{run_path, PathConfig};

#[derive(Parser)]
#[command(
    name = "streamfit",
    version,
    about = "Streaming estimation for GLMs and M-estimators via implicit stochastic gradient methods"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a single model to a data stream
    Fit(Box<FitArgs>),
    /// Fit a regularization path over a decreasing penalty grid
    Path(Box<PathArgs>),
    /// Generate a simulation benchmark plus its sidecar metadata
    Simulate(SimulateArgs),
    /// Predict outcomes for a dataset from a saved fit
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DelimiterArg {
    Comma,
    Tab,
}

impl DelimiterArg {
    fn byte(self) -> u8 {
        match self {
            DelimiterArg::Comma => b',',
            DelimiterArg::Tab => b'\t',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Gaussian,
    Binomial,
    Poisson,
    Huber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Esgd,
    Isgd,
    Asgd,
    #[value(name = "ai-sgd")]
    AiSgd,
    Momentum,
    Nag,
}

impl MethodArg {
    fn to_method(self) -> Method {
        match self {
            MethodArg::Esgd => Method::Esgd,
            MethodArg::Isgd => Method::Isgd,
            MethodArg::Asgd => Method::Asgd,
            MethodArg::AiSgd => Method::AiSgd,
            MethodArg::Momentum => Method::Momentum,
            MethodArg::Nag => Method::Nag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LrArg {
    Onedim,
    Adagrad,
    Rmsprop,
    Fisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeneratorArg {
    Lasso,
    Huber,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Input data file (headered delimited text)
    #[arg(long)]
    data: PathBuf,
    /// Response column name
    #[arg(long, default_value = "y")]
    response: String,
    /// Response column index (0-based), instead of a name
    #[arg(long, conflicts_with = "response")]
    response_index: Option<usize>,
    /// Rows per streamed chunk
    #[arg(long, default_value_t = streamfit::data::DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
    /// Field delimiter
    #[arg(long, value_enum, default_value_t = DelimiterArg::Comma)]
    delimiter: DelimiterArg,
    /// The file has no header row (requires --response-index)
    #[arg(long)]
    no_header: bool,
}

impl DataArgs {
    fn source(&self) -> Result<StreamSource> {
        let response = match self.response_index {
            Some(i) => ResponseColumn::Index(i),
            None => ResponseColumn::Name(self.response.clone()),
        };
        StreamSource::file(&self.data, response)
            .with_delimiter(self.delimiter.byte())
            .with_header(!self.no_header)
            .with_chunk_size(self.chunk_size)
    }
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model family
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Huber loss threshold (required for --model huber)
    #[arg(long)]
    huber_delta: Option<f64>,
}

impl ModelArgs {
    fn objective(&self) -> Result<Objective> {
        match self.model {
            ModelArg::Gaussian => Ok(Objective::GlmGaussian),
            ModelArg::Binomial => Ok(Objective::GlmBinomial),
            ModelArg::Poisson => Ok(Objective::GlmPoisson),
            ModelArg::Huber => {
                let delta = self.huber_delta.ok_or_else(|| {
                    Error::InvalidConfig("--model huber requires --huber-delta".into())
                })?;
                Objective::huber(delta)
            }
        }
    }

    fn name(&self) -> &'static str {
        match self.model {
            ModelArg::Gaussian => "gaussian",
            ModelArg::Binomial => "binomial",
            ModelArg::Poisson => "poisson",
            ModelArg::Huber => "huber",
        }
    }
}

#[derive(Args, Debug)]
struct LearningRateArgs {
    /// Learning-rate schedule
    #[arg(long, value_enum, default_value_t = LrArg::Onedim)]
    lr: LrArg,
    /// One-dim schedule initial rate
    #[arg(long)]
    gamma0: Option<f64>,
    /// One-dim schedule decay constant (asymptotic rate is 1/a per update)
    #[arg(long)]
    lr_a: Option<f64>,
    /// One-dim schedule decay exponent in (0, 1]; defaults to 2/3 for
    /// averaged methods and 1 otherwise
    #[arg(long)]
    lr_c: Option<f64>,
    /// Adaptive conditioner scale
    #[arg(long)]
    lr_eta: Option<f64>,
    /// Adaptive conditioner epsilon guard
    #[arg(long)]
    lr_eps: Option<f64>,
    /// RMSProp discount factor
    #[arg(long)]
    lr_beta: Option<f64>,
}

impl LearningRateArgs {
    fn build(&self, method: Method) -> Result<(Schedule, LearningRateOutput)> {
        match self.lr {
            LrArg::Onedim => {
                let gamma0 = self.gamma0.unwrap_or(1.0);
                let a = self.lr_a.unwrap_or(1.0);
                let c = self
                    .lr_c
                    .unwrap_or(if method.averaged() { 2.0 / 3.0 } else { 1.0 });
                let sched = OneDimSchedule::new(gamma0, a, c)?;
                Ok((
                    Schedule::OneDim(sched),
                    LearningRateOutput {
                        kind: "onedim".into(),
                        gamma0: Some(gamma0),
                        a: Some(a),
                        c: Some(c),
                        eta: None,
                        epsilon: None,
                        beta: None,
                    },
                ))
            }
            kind => {
                let adaptive_kind = match kind {
                    LrArg::Adagrad => AdaptiveKind::AdaGrad,
                    LrArg::Rmsprop => AdaptiveKind::RmsProp,
                    LrArg::Fisher => AdaptiveKind::Fisher,
                    LrArg::Onedim => unreachable!(),
                };
                let eta = self.lr_eta.unwrap_or(1.0);
                let eps = self.lr_eps.unwrap_or(1e-6);
                let beta = self.lr_beta.unwrap_or(0.9);
                // Dimension 0 sizes itself at the first gradient.
                let state = AdaptiveState::with_params(adaptive_kind, 0, eta, eps, beta)?;
                Ok((
                    Schedule::Adaptive(state),
                    LearningRateOutput {
                        kind: match adaptive_kind {
                            AdaptiveKind::AdaGrad => "adagrad".into(),
                            AdaptiveKind::RmsProp => "rmsprop".into(),
                            AdaptiveKind::Fisher => "fisher".into(),
                        },
                        gamma0: None,
                        a: None,
                        c: None,
                        eta: Some(eta),
                        epsilon: Some(eps),
                        beta: (adaptive_kind == AdaptiveKind::RmsProp).then_some(beta),
                    },
                ))
            }
        }
    }
}

#[derive(Args, Debug)]
struct CommonFitArgs {
    /// Estimation method
    #[arg(long, value_enum, default_value_t = MethodArg::AiSgd)]
    method: MethodArg,
    #[command(flatten)]
    lr: LearningRateArgs,
    /// Passes over the data
    #[arg(long, default_value_t = 1)]
    passes: usize,
    /// Momentum coefficient for momentum/nag
    #[arg(long, default_value_t = 0.9)]
    momentum_mu: f64,
    /// Elastic-net mixing weight (1 = lasso, 0 = ridge)
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// RNG seed for shuffling (and anything else randomized)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Visit observations within each chunk in shuffled order
    #[arg(long)]
    shuffle: bool,
    /// Stop early once the relative estimate change stays below this
    /// tolerance for a full window
    #[arg(long)]
    tol: Option<f64>,
    /// Convergence window (consecutive updates)
    #[arg(long, default_value_t = 5)]
    convergence_window: usize,
    /// Root-search tolerance for implicit updates
    #[arg(long, default_value_t = 1e-10)]
    root_tolerance: f64,
    /// Root-search iteration budget
    #[arg(long, default_value_t = 200)]
    max_root_iterations: usize,
}

impl CommonFitArgs {
    fn fit_config(&self) -> FitConfig {
        let mut cfg = FitConfig::new(self.method.to_method());
        cfg.passes = self.passes;
        cfg.momentum_mu = self.momentum_mu;
        cfg.shuffle = self.shuffle;
        cfg.seed = self.seed;
        cfg.stop_tolerance = self.tol;
        cfg.convergence_window = self.convergence_window;
        cfg
    }

    fn solver_config(&self) -> ImplicitConfig {
        ImplicitConfig {
            root_tolerance: self.root_tolerance,
            max_root_iterations: self.max_root_iterations,
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    common: CommonFitArgs,
    /// Elastic-net strength
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Write the fit result as JSON here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a per-update trace CSV here
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record every K-th update in the trace
    #[arg(long, default_value_t = 100)]
    trace_every: u64,
    /// Sidecar JSON with the true parameter; switches the trace metric to
    /// mean squared error against it
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    common: CommonFitArgs,
    /// Number of penalties on the grid
    #[arg(long, default_value_t = 100)]
    n_lambda: usize,
    /// Smallest penalty as a fraction of the largest
    #[arg(long, default_value_t = 1e-3)]
    lambda_min_ratio: f64,
    /// Fit every penalty from the zero start instead of warm-starting
    #[arg(long)]
    no_warm_start: bool,
    /// Workers for cold-started paths
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Explicit largest penalty (required for --alpha 0)
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Write the path result as JSON here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Which benchmark to generate
    #[arg(long, value_enum)]
    generator: GeneratorArg,
    /// Rows
    #[arg(long)]
    n: usize,
    /// Covariates
    #[arg(long)]
    p: usize,
    /// Pairwise design correlation (lasso generator)
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Signal-to-noise ratio on the variance scale (lasso generator)
    #[arg(long, default_value_t = 3.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output data file; metadata goes to `<out>.meta.json`
    #[arg(long)]
    out: PathBuf,
    /// Z-score the covariate columns before writing
    #[arg(long)]
    standardize: bool,
    #[arg(long, value_enum, default_value_t = DelimiterArg::Comma)]
    delimiter: DelimiterArg,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fit JSON written by the fit command
    #[arg(long)]
    coef: PathBuf,
    /// The data file has covariates only, no response column
    #[arg(long)]
    no_response: bool,
    /// Predictions CSV (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Path(args) => cmd_path(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Predict(args) => cmd_predict(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// 2 config error, 3 data error, 4 numeric failure (single fit only;
/// paths record per-entry status and exit 0).
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::Unsupported(_) => 2,
        Error::InvalidInput(_)
        | Error::Parse { .. }
        | Error::Schema(_)
        | Error::DimensionMismatch(_)
        | Error::Io(_)
        | Error::Serialize(_) => 3,
        Error::Divergence { .. }
        | Error::SolverFailure { .. }
        | Error::ConvergenceFailure { .. }
        | Error::NumericOverflow { .. } => 4,
    }
}

fn read_truth(path: &PathBuf) -> Result<Array1<f64>> {
    let file = File::open(path)?;
    let meta: SimulationMeta = serde_json::from_reader(file)?;
    Ok(Array1::from_vec(meta.theta_star))
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let source = args.data.source()?;
    let spec = args.model.objective()?;
    let method = args.common.method.to_method();
    let (schedule, lr_out) = args.common.lr.build(method)?;
    let pen = Penalty::new(args.common.alpha, args.lambda)?;

    let mut cfg = args.common.fit_config();
    if args.trace.is_some() {
        let metric = match &args.truth {
            Some(path) => TraceMetric::MseToTruth(read_truth(path)?),
            None => TraceMetric::EstimateNorm,
        };
        cfg.trace = Some(TraceSpec {
            every: args.trace_every,
            metric,
        });
    }

    let result = fit(
        &source,
        &spec,
        schedule,
        &pen,
        &cfg,
        &args.common.solver_config(),
    )?;

    if let (Some(trace_path), Some(records)) = (&args.trace, &result.trace) {
        let metric_name = cfg
            .trace
            .as_ref()
            .map(|t| t.metric.name())
            .unwrap_or("estimate_norm");
        let rows: Vec<TraceRecord> = records
            .iter()
            .map(|(n, v)| TraceRecord {
                update_index: *n,
                metric_name: metric_name.to_string(),
                value: *v,
            })
            .collect();
        diagnostics::write_trace_csv(trace_path, &rows)?;
    }

    let out = fit_output(args, &lr_out, &result);
    if let Some(path) = &args.out {
        write_json(path, &out)?;
    }
    print!("{}", render_fit_text(&out));
    Ok(())
}

fn fit_output(args: &FitArgs, lr_out: &LearningRateOutput, result: &FitResult) -> FitOutput {
    FitOutput {
        model: args.model.name().to_string(),
        huber_delta: args.model.huber_delta,
        method: args.common.method.to_method().as_str().to_string(),
        alpha: args.common.alpha,
        lambda: args.lambda,
        learning_rate: lr_out.clone(),
        passes: args.common.passes,
        seed: args.common.seed,
        shuffle: args.common.shuffle,
        updates: result.updates,
        converged: result.converged,
        estimate: result.estimate.to_vec(),
        last_iterate: result.last_iterate.to_vec(),
    }
}

fn cmd_path(args: &PathArgs) -> Result<()> {
    let source = args.data.source()?;
    let spec = args.model.objective()?;
    let method = args.common.method.to_method();
    let (schedule, _) = args.common.lr.build(method)?;

    let cfg = PathConfig {
        n_lambda: args.n_lambda,
        lambda_min_ratio: args.lambda_min_ratio,
        alpha: args.common.alpha,
        warm_start: !args.no_warm_start,
        lambda_max: args.lambda_max,
        parallel: args.parallel,
    };
    let entries = run_path(
        &source,
        &spec,
        &schedule,
        &cfg,
        &args.common.fit_config(),
        &args.common.solver_config(),
    )?;

    let out = PathOutput {
        model: args.model.name().to_string(),
        huber_delta: args.model.huber_delta,
        method: method.as_str().to_string(),
        alpha: args.common.alpha,
        passes: args.common.passes,
        seed: args.common.seed,
        warm_start: cfg.warm_start,
        entries: entries.iter().map(PathEntryOutput::from_entry).collect(),
    };
    if let Some(path) = &args.out {
        write_json(path, &out)?;
    }
    print!("{}", render_path_text(&out));
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut sim = match args.generator {
        GeneratorArg::Lasso => simulate_lasso(args.n, args.p, args.rho, args.snr, args.seed)?,
        GeneratorArg::Huber => simulate_huber(args.n, args.p, args.seed)?,
    };
    if args.standardize {
        standardize_columns(&mut sim.observations);
    }
    write_dataset(&args.out, &sim.observations, args.delimiter.byte())?;
    let meta = SimulationMeta {
        generator: match args.generator {
            GeneratorArg::Lasso => "lasso".into(),
            GeneratorArg::Huber => "huber".into(),
        },
        n: args.n,
        p: args.p,
        rho: matches!(args.generator, GeneratorArg::Lasso).then_some(args.rho),
        snr: matches!(args.generator, GeneratorArg::Lasso).then_some(args.snr),
        seed: args.seed,
        noise_scale: sim.noise_scale,
        standardized: args.standardize,
        theta_star: sim.theta_star.to_vec(),
    };
    write_sidecar(&args.out, &meta)?;
    println!(
        "wrote {} rows x {} covariates to {} (+ sidecar)",
        args.n,
        args.p,
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let file = File::open(&args.coef)?;
    let coef: FitOutput = serde_json::from_reader(file)?;
    let spec = match coef.model.as_str() {
        "gaussian" => Objective::GlmGaussian,
        "binomial" => Objective::GlmBinomial,
        "poisson" => Objective::GlmPoisson,
        "huber" => Objective::huber(coef.huber_delta.ok_or_else(|| {
            Error::InvalidConfig("fit output for a huber model lacks huber_delta".into())
        })?)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown model '{other}' in {}",
                args.coef.display()
            )))
        }
    };
    let theta = Array1::from_vec(coef.estimate.clone());

    let response = if args.no_response {
        ResponseColumn::None
    } else if let Some(i) = args.data.response_index {
        ResponseColumn::Index(i)
    } else {
        ResponseColumn::Name(args.data.response.clone())
    };
    let source = StreamSource::file(&args.data.data, response)
        .with_delimiter(args.data.delimiter.byte())
        .with_header(!args.data.no_header)
        .with_chunk_size(args.data.chunk_size)?;

    let mut sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "prediction")?;
    for chunk in source.stream_chunks()? {
        for obs in chunk? {
            let value = diagnostics::predict(&spec, &theta, &obs.x)?;
            writeln!(sink, "{value}")?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

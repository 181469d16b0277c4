//! Reproducible experiment commands: simulate data, train, evaluate, diagnose.
//!
//! Each command is an ordinary function so that the binary and the test suites
//! drive exactly the same code. Every command that writes files also writes a
//! run manifest next to its primary output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use epr_rbm::bell::{
    comparison_table, model_correlations_exact, theory_correlations, CorrelationReport,
};
use epr_rbm::epr::{
    empirical_correlations, generate_dataset, pair_label, sidecar_path, DetectorAngles, EprDataset,
};
use epr_rbm::exact::{enumerate, locality_check, measurement_independence_check, HiddenState};
use epr_rbm::model_file::ModelFile;
use epr_rbm::trainer::{train, TrainError, TrainerConfig, TrainingTrace};
use epr_rbm::Error as CoreError;

/// Locality holds when every factorization residual is at most this.
pub const LOCALITY_TOLERANCE: f64 = 1e-10;
/// Measurement independence is violated when some `P(λ|α,β)` is farther
/// than this from the pooled `P(λ)` in total variation.
pub const MI_TOLERANCE: f64 = 1e-3;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    /// 2 usage, 3 data, 4 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "epr-rbm",
    version,
    about = "Restricted Boltzmann machine model of EPR correlations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate singlet-state EPR trials and write them as CSV.
    Simulate(SimulateArgs),
    /// Train an RBM on a simulated dataset with persistent contrastive divergence.
    Train(TrainArgs),
    /// Compare theory, data and exact model correlations.
    Eval(EvalArgs),
    /// Check Bell locality and measurement independence of a model exactly.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: u64,
    /// Detector angles a,a',b,b' in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub angles: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON trainer configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; required unless the config file provides one.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub gibbs_steps: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch trace CSV; defaults to `<out>.trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Detector angles for the theory column; defaults to the standard CHSH angles.
    #[arg(long, allow_hyphen_values = true)]
    pub angles: Option<String>,
    /// Write the comparison as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also dump the full joint table as CSV.
    #[arg(long)]
    pub joint_csv: Option<PathBuf>,
}

/// Provenance record written beside each command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

/// `out.csv` → `out.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    primary.with_extension("manifest.json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| io_error(path, e))?;
    out.write_all(b"\n").map_err(|e| io_error(path, e))?;
    out.flush().map_err(|e| io_error(path, e))
}

fn write_manifest<A: Serialize>(
    command: &str,
    args: &A,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
) -> CliResult<()> {
    let primary = outputs.first().expect("manifest needs an output").clone();
    let manifest = RunManifest {
        command: command.to_string(),
        config: serde_json::to_value(args).map_err(|e| CliError::Data(e.to_string()))?,
        seeds,
        inputs,
        outputs,
        tool_version: TOOL_VERSION.to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path(&primary), &manifest)
}

fn parse_angles(text: Option<&str>) -> CliResult<DetectorAngles> {
    match text {
        None => Ok(DetectorAngles::default()),
        Some(t) => DetectorAngles::parse_list(t).map_err(|e| CliError::Usage(e.to_string())),
    }
}

/// Text block listing the four correlations and S.
pub fn format_correlations(report: &CorrelationReport) -> String {
    let labels = ["C(a,b)", "C(a,b')", "C(a',b)", "C(a',b')"];
    let mut out = String::new();
    for (label, c) in labels.iter().zip(report.values()) {
        out.push_str(&format!("{label:<9} = {c:>7.3}\n"));
    }
    out.push_str(&format!("{:<9} = {:>7.3}\n", "S", report.s));
    out
}

pub fn simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let started = Instant::now();
    let angles = parse_angles(args.angles.as_deref())?;
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let dataset = generate_dataset(angles, args.trials, args.seed)?;
    dataset
        .save(&args.out)
        .map_err(|e| io_error(&args.out, e))?;
    write_manifest(
        "simulate",
        args,
        BTreeMap::from([("master".to_string(), args.seed)]),
        vec![],
        vec![args.out.clone(), sidecar_path(&args.out)],
        started,
    )?;
    let _ = writeln!(
        stdout,
        "wrote {} trials to {} (seed {})",
        dataset.trials.len(),
        args.out.display(),
        args.seed
    );
    let report = empirical_correlations(&dataset.trials)?;
    let _ = write!(stdout, "{}", format_correlations(&report));
    Ok(())
}

/// Resolves the trainer configuration from the optional file and flags.
pub fn resolve_config(args: &TrainArgs) -> CliResult<TrainerConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            serde_json::from_str::<TrainerConfig>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            let seed = args.seed.ok_or_else(|| {
                CliError::Usage("a master seed is required: pass --seed or --config".into())
            })?;
            TrainerConfig::new(seed)
        }
    };
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.epochs {
        config.n_epochs = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.decay {
        config.learning_rate_decay = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.chains {
        config.n_persistent_chains = v;
    }
    if let Some(v) = args.gibbs_steps {
        config.gibbs_steps_per_update = v;
    }
    if let Some(v) = args.init_scale {
        config.weight_init_scale = v;
    }
    if let Some(v) = args.hidden {
        config.n_hidden = v;
    }
    config.validate()?;
    Ok(config)
}

/// `model.json` → `model.trace.csv`.
pub fn default_trace_path(model_path: &Path) -> PathBuf {
    model_path.with_extension("trace.csv")
}

fn write_trace(path: &Path, trace: &TrainingTrace) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    trace
        .write_csv(BufWriter::new(file))
        .map_err(|e| io_error(path, e))
}

pub fn train_cmd(args: &TrainArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let started = Instant::now();
    let config = resolve_config(args)?;
    let dataset = EprDataset::load(&args.data).map_err(|e| io_error(&args.data, e))?;
    let trace_path = args
        .trace
        .clone()
        .unwrap_or_else(|| default_trace_path(&args.out));
    let (model, trace) = match train(&dataset, &config) {
        Ok(result) => result,
        Err(TrainError::Diverged {
            epoch,
            batch,
            detail,
            trace,
        }) => {
            write_trace(&trace_path, &trace)?;
            return Err(CliError::Diverged(format!(
                "training diverged at epoch {epoch}, batch {batch}: {detail} (partial trace in {})",
                trace_path.display()
            )));
        }
        Err(TrainError::Invalid(e)) => return Err(e.into()),
    };
    ModelFile::new(&model, Some(config.clone()), Some(dataset.seed))
        .save(&args.out)
        .map_err(|e| io_error(&args.out, e))?;
    write_trace(&trace_path, &trace)?;
    let mut resolved = serde_json::to_value(args).map_err(|e| CliError::Data(e.to_string()))?;
    resolved["resolved_trainer"] =
        serde_json::to_value(&config).map_err(|e| CliError::Data(e.to_string()))?;
    write_manifest(
        "train",
        &resolved,
        BTreeMap::from([
            ("master".to_string(), config.seed),
            ("dataset".to_string(), dataset.seed),
        ]),
        vec![args.data.clone()],
        vec![args.out.clone(), trace_path.clone()],
        started,
    )?;
    let report = model_correlations_exact(&model)?;
    let _ = writeln!(
        stdout,
        "trained {} epochs on {} trials; model written to {}",
        config.n_epochs,
        dataset.trials.len(),
        args.out.display()
    );
    let _ = write!(stdout, "{}", format_correlations(&report));
    Ok(())
}

fn load_epr_model(path: &Path) -> CliResult<epr_rbm::RbmModel> {
    let file = ModelFile::load(path).map_err(|e| io_error(path, e))?;
    let model = file.model().map_err(|e| io_error(path, e))?;
    if model.n_visible() != 4 {
        return Err(CoreError::NotEprLayout(model.n_visible()).into());
    }
    Ok(model)
}

pub fn eval(args: &EvalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let started = Instant::now();
    let angles = parse_angles(args.angles.as_deref())?;
    let model = load_epr_model(&args.model)?;
    let model_report = model_correlations_exact(&model)?;
    let data_report = match &args.data {
        Some(path) => {
            let dataset = EprDataset::load(path).map_err(|e| io_error(path, e))?;
            Some(empirical_correlations(&dataset.trials)?)
        }
        None => None,
    };
    let theory = theory_correlations(&angles);
    let table = comparison_table(&theory, data_report.as_ref(), &model_report)?;
    let _ = write!(stdout, "{}", table.render_text());
    let _ = writeln!(stdout, "{}", model_report.verdict());
    if let Some(out) = &args.out {
        let file = File::create(out).map_err(|e| io_error(out, e))?;
        table
            .write_csv(BufWriter::new(file))
            .map_err(|e| io_error(out, e))?;
        let mut inputs = vec![args.model.clone()];
        inputs.extend(args.data.clone());
        write_manifest(
            "eval",
            args,
            BTreeMap::new(),
            inputs,
            vec![out.clone()],
            started,
        )?;
    }
    Ok(())
}

/// Hidden-state distribution for one setting pair, as reported.
#[derive(Debug, Clone, Serialize)]
pub struct SettingPairReport {
    pub settings: String,
    pub alpha: u8,
    pub beta: u8,
    pub hidden_distribution: Vec<f64>,
    pub tv_to_pooled: f64,
}

/// Machine-readable output of `diagnose`.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub tool_version: String,
    pub n_hidden: usize,
    /// Hidden-state labels `h1h2…hn` in the order of every distribution below.
    pub hidden_states: Vec<String>,
    pub locality_residual: f64,
    pub locality_tolerance: f64,
    pub locality_pass: bool,
    pub setting_pairs: Vec<SettingPairReport>,
    pub pooled_hidden_distribution: Vec<f64>,
    pub max_tv: f64,
    pub mi_tolerance: f64,
    pub mi_violated: bool,
}

pub fn diagnostics(model: &epr_rbm::RbmModel) -> CliResult<DiagnosticsReport> {
    let dist = enumerate(model)?;
    let residual = locality_check(&dist)?;
    let mi = measurement_independence_check(&dist)?;
    Ok(DiagnosticsReport {
        tool_version: TOOL_VERSION.to_string(),
        n_hidden: model.n_hidden(),
        hidden_states: HiddenState::all(model.n_hidden())
            .map(|h| h.to_string())
            .collect(),
        locality_residual: residual,
        locality_tolerance: LOCALITY_TOLERANCE,
        locality_pass: residual <= LOCALITY_TOLERANCE,
        setting_pairs: mi
            .conditionals
            .iter()
            .map(|c| SettingPairReport {
                settings: pair_label(c.alpha, c.beta),
                alpha: c.alpha.bit(),
                beta: c.beta.bit(),
                hidden_distribution: c.distribution.clone(),
                tv_to_pooled: c.tv_to_pooled,
            })
            .collect(),
        pooled_hidden_distribution: mi.pooled,
        max_tv: mi.max_tv,
        mi_tolerance: MI_TOLERANCE,
        mi_violated: mi.max_tv > MI_TOLERANCE,
    })
}

/// Human-readable rendering of a diagnostics report.
pub fn render_diagnostics(report: &DiagnosticsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "max factorization residual: {:.3e}\n",
        report.locality_residual
    ));
    out.push_str(&format!("{:<8}", "lambda"));
    for pair in &report.setting_pairs {
        out.push_str(&format!(" {:>9}", pair.settings));
    }
    out.push_str(&format!(" {:>9}\n", "pooled"));
    for (k, label) in report.hidden_states.iter().enumerate() {
        out.push_str(&format!("{label:<8}"));
        for pair in &report.setting_pairs {
            out.push_str(&format!(" {:>9.5}", pair.hidden_distribution[k]));
        }
        out.push_str(&format!(" {:>9.5}\n", report.pooled_hidden_distribution[k]));
    }
    out.push_str(&format!("{:<8}", "TV"));
    for pair in &report.setting_pairs {
        out.push_str(&format!(" {:>9.5}", pair.tv_to_pooled));
    }
    out.push('\n');
    out.push_str(&format!(
        "locality: {} (residual {:.3e} {} {:.0e})\n",
        if report.locality_pass { "PASS" } else { "FAIL" },
        report.locality_residual,
        if report.locality_pass { "<=" } else { ">" },
        report.locality_tolerance
    ));
    out.push_str(&format!(
        "measurement independence: {} (max TV {:.4} {} {:.0e})\n",
        if report.mi_violated {
            "VIOLATED"
        } else {
            "not violated"
        },
        report.max_tv,
        if report.mi_violated { ">" } else { "<=" },
        report.mi_tolerance
    ));
    out
}

pub fn diagnose(args: &DiagnoseArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let started = Instant::now();
    let model = load_epr_model(&args.model)?;
    let report = diagnostics(&model)?;
    let _ = write!(stdout, "{}", render_diagnostics(&report));
    let mut outputs = Vec::new();
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        outputs.push(out.clone());
    }
    if let Some(path) = &args.joint_csv {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        enumerate(&model)?
            .write_csv(BufWriter::new(file))
            .map_err(|e| io_error(path, e))?;
        outputs.push(path.clone());
    }
    if !outputs.is_empty() {
        write_manifest(
            "diagnose",
            args,
            BTreeMap::new(),
            vec![args.model.clone()],
            outputs,
            started,
        )?;
    }
    Ok(())
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, stdout),
        Command::Train(a) => train_cmd(a, stdout),
        Command::Eval(a) => eval(a, stdout),
        Command::Diagnose(a) => diagnose(a, stdout),
    }
}

/// Parses `argv` and runs it, returning the process exit code.
pub fn main_with_args<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return 2;
            }
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

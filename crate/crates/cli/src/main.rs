//! `dpmix` command-line front end.

mod output;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dpmix::multi_gaussian::{CalibrationHyper, ShortfallOptions, DEFAULT_ETA};
use dpmix::sampling::sample_n;
use dpmix::verifier::verify_calibrated;
use dpmix::{
    calibrate, run_sweep, CalibrationResult, CompositionLedger, DpError, Execution, GaussianMechanism,
    LossKind, Mechanism, MultiGaussianDist, OutputFormat, PrivacyParams, QuasiGaussianDist, SweepConfig,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "dpmix", version, about = "Calibrate, sample, verify and compose Gaussian-mixture noise mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate one mechanism and print the result as JSON.
    Calibrate(CalibrateArgs),
    /// Run a calibration sweep described by a JSON config file.
    Sweep(SweepArgs),
    /// Draw noise samples.
    Sample(SampleArgs),
    /// Check the privacy condition of a mechanism at a given scale.
    Verify(VerifyArgs),
    /// Compose a ledger of Gaussian or multi-Gaussian mechanisms.
    Compose(ComposeArgs),
}

#[derive(Args, Debug, Clone)]
struct BudgetArgs {
    /// Mechanism family.
    #[arg(long, value_parser = parse_mechanism)]
    mech: Mechanism,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    /// Query sensitivity.
    #[arg(long, default_value_t = 1.0)]
    sens: f64,
    /// Multi-Gaussian modality; omitted means the best K in 1..=20.
    #[arg(long)]
    k: Option<u32>,
    /// Multi-Gaussian discretization parameter.
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
}

impl BudgetArgs {
    fn params(&self) -> Result<PrivacyParams> {
        Ok(PrivacyParams::new(self.eps, self.delta, self.sens)?)
    }

    fn hyper(&self, loss: LossKind) -> CalibrationHyper {
        let k_grid = self.k.map_or_else(|| (1..=20).collect(), |k| vec![k]);
        CalibrationHyper { eta: self.eta, k_grid, loss }
    }
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// Loss used to pick K and to report the improvement.
    #[arg(long, default_value = "l1", value_parser = parse_loss)]
    loss: LossKind,
    /// Also run the verifier with this refinement factor.
    #[arg(long)]
    verify: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// JSON file with SweepConfig fields.
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's output_format.
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
    /// Overrides the config's parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Skip re-verification of calibrated cells.
    #[arg(long)]
    no_verify: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SampleFormat {
    Text,
    Json,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// Noise scale; calibrated when omitted.
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of draws.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SampleFormat::Text)]
    format: SampleFormat,
    /// Draw sequentially even when parallelism is compiled in.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// Noise scale to check; calibrated when omitted.
    #[arg(long)]
    sigma: Option<f64>,
    /// Verifier grid refinement relative to the calibration grid.
    #[arg(long, default_value_t = 2.0)]
    refine: f64,
}

#[derive(Args, Debug)]
struct ComposeArgs {
    /// Text file with one `sensitivity sigma [mechanism]` entry per line.
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long)]
    delta_tot: f64,
}

fn parse_mechanism(s: &str) -> std::result::Result<Mechanism, String> {
    s.parse().map_err(|e: DpError| e.to_string())
}

fn parse_loss(s: &str) -> std::result::Result<LossKind, String> {
    s.parse().map_err(|e: DpError| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    s.parse().map_err(|e: DpError| e.to_string())
}

/// Outcome of a subcommand that ran to completion.
enum Status {
    Ok,
    /// A result, not a crash: e.g. a failed verification.
    Failed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Compose(a) => cmd_compose(a),
    };
    match outcome {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for invalid input, 1 for numeric failures.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<DpError>() {
        Some(DpError::InvalidParams(_) | DpError::InvalidArgument(_) | DpError::Unsupported(_)) => 2,
        Some(_) => 1,
        None if e.downcast_ref::<UsageError>().is_some() => 2,
        None => 1,
    }
}

/// Malformed input that clap cannot catch (config files, ledgers).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", output::to_json(value)?);
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<Status> {
    let p = a.budget.params()?;
    let mut res = calibrate(a.budget.mech, &p, &a.budget.hyper(a.loss), &ShortfallOptions::default())?;
    let mut status = Status::Ok;
    if let Some(refine) = a.verify {
        let rep = verify_calibrated(&res, refine)?;
        res.verify_slack = Some(rep.worst_slack);
        if !rep.passed {
            status = Status::Failed;
        }
    }
    print_json(&res)?;
    Ok(status)
}

fn read_config(path: &Path) -> Result<SweepConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| anyhow::Error::new(UsageError(format!("invalid config {}: {e}", path.display()))))
}

fn cmd_sweep(a: SweepArgs) -> Result<Status> {
    let mut cfg = read_config(&a.config)?;
    if let Some(f) = a.format {
        cfg.output_format = f;
    }
    if a.threads.is_some() {
        cfg.parallelism = a.threads;
    }
    if a.no_verify {
        cfg.verify = false;
    }
    let rows = run_sweep(&cfg)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match cfg.output_format {
        OutputFormat::Csv => output::write_sweep_csv(&rows, &mut sink)?,
        OutputFormat::Json => writeln!(sink, "{}", output::sweep_json(&rows)?)?,
    }
    sink.flush()?;
    let failed = rows.iter().filter(|r| r.result.is_none()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed", rows.len());
    }
    Ok(Status::Ok)
}

/// A mechanism at an explicit or calibrated scale.
enum Noise {
    Gaussian(GaussianMechanism),
    Multi(MultiGaussianDist),
    Quasi(QuasiGaussianDist),
}

fn resolve_noise(b: &BudgetArgs, sigma: Option<f64>) -> Result<Noise> {
    let p = b.params()?;
    let noise = match (b.mech, sigma) {
        (Mechanism::AnalyticGaussian, Some(s)) => Noise::Gaussian(GaussianMechanism::new(p, s)?),
        (Mechanism::MultiGaussian, Some(s)) => Noise::Multi(MultiGaussianDist::new(p, s, b.k.unwrap_or(1))?),
        (Mechanism::QuasiGaussian, Some(s)) => Noise::Quasi(QuasiGaussianDist::new(p, s)?),
        (mech, None) => {
            let res = calibrate(mech, &p, &b.hyper(LossKind::L1), &ShortfallOptions::default())?;
            match mech {
                Mechanism::AnalyticGaussian => Noise::Gaussian(GaussianMechanism::new(p, res.sigma)?),
                Mechanism::MultiGaussian => {
                    let k = res.chosen_k.unwrap_or(1);
                    Noise::Multi(MultiGaussianDist::new(p, res.sigma, k)?)
                }
                Mechanism::QuasiGaussian => Noise::Quasi(QuasiGaussianDist::new(p, res.sigma)?),
            }
        }
    };
    Ok(noise)
}

fn cmd_sample(a: SampleArgs) -> Result<Status> {
    if a.n == 0 {
        return Err(UsageError("--n must be at least 1".into()).into());
    }
    let noise = resolve_noise(&a.budget, a.sigma)?;
    let exec = if a.sequential { Execution::Sequential } else { Execution::default() };
    let draws = match &noise {
        Noise::Gaussian(g) => sample_n(a.seed, a.n, exec, |r| g.sample(r)),
        Noise::Multi(m) => sample_n(a.seed, a.n, exec, |r| m.sample(r)),
        Noise::Quasi(q) => sample_n(a.seed, a.n, exec, |r| q.sample(r)),
    };
    let mut out = BufWriter::new(std::io::stdout().lock());
    match a.format {
        SampleFormat::Text => {
            for x in draws {
                writeln!(out, "{}", output::round_sig(x))?;
            }
        }
        SampleFormat::Json => {
            let rounded: Vec<f64> = draws.into_iter().map(output::round_sig).collect();
            writeln!(out, "{}", serde_json::to_string(&rounded)?)?;
        }
    }
    out.flush()?;
    Ok(Status::Ok)
}

fn cmd_verify(a: VerifyArgs) -> Result<Status> {
    let b = &a.budget;
    let p = b.params()?;
    let (sigma, k) = match a.sigma {
        Some(s) => (s, b.k.or((b.mech == Mechanism::MultiGaussian).then_some(1))),
        None => {
            let res = calibrate(b.mech, &p, &b.hyper(LossKind::L1), &ShortfallOptions::default())?;
            (res.sigma, res.chosen_k)
        }
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DpError::InvalidArgument(format!("sigma must be positive, got {sigma}")).into());
    }
    let result = CalibrationResult {
        mechanism: b.mech,
        params: p,
        sigma,
        chosen_k: k,
        eta: (b.mech == Mechanism::MultiGaussian).then_some(b.eta),
        l1: f64::NAN,
        l2: f64::NAN,
        improvement_vs_baseline_pct: f64::NAN,
        loss: LossKind::L1,
        verify_slack: None,
        wall_ms: 0.0,
        sigma1: None,
        sigma2: None,
    };
    let rep = verify_calibrated(&result, a.refine)?;
    print_json(&rep)?;
    Ok(if rep.passed { Status::Ok } else { Status::Failed })
}

fn parse_ledger(text: &str) -> Result<CompositionLedger> {
    let mut ledger = CompositionLedger::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> =
            line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        let bad = || UsageError(format!("ledger line {}: expected `sensitivity sigma [mechanism]`", n + 1));
        if fields.len() < 2 || fields.len() > 3 {
            return Err(bad().into());
        }
        let sens: f64 = fields[0].parse().map_err(|_| bad())?;
        let sigma: f64 = fields[1].parse().map_err(|_| bad())?;
        let mech = match fields.get(2) {
            Some(m) => m.parse::<Mechanism>()?,
            None => Mechanism::MultiGaussian,
        };
        ledger = ledger
            .add_mechanism(mech, sens, sigma)
            .map_err(|e| match e {
                DpError::Domain(msg) => DpError::InvalidArgument(format!("ledger line {}: {msg}", n + 1)),
                other => other,
            })?;
    }
    Ok(ledger)
}

#[derive(Serialize)]
struct ComposeReport {
    entries: usize,
    rho_total: f64,
    delta_total: f64,
    epsilon_total: f64,
}

fn cmd_compose(a: ComposeArgs) -> Result<Status> {
    let text = fs::read_to_string(&a.ledger).with_context(|| format!("reading {}", a.ledger.display()))?;
    let ledger = parse_ledger(&text)?;
    let eps = ledger
        .to_dp(a.delta_tot)
        .map_err(|e| DpError::InvalidArgument(e.to_string()))?;
    print_json(&ComposeReport {
        entries: ledger.entries.len(),
        rho_total: ledger.rho_total,
        delta_total: a.delta_tot,
        epsilon_total: eps,
    })?;
    Ok(Status::Ok)
}

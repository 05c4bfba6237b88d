//! The `qnpg` command line.
//!
//! ```text
//! qnpg generate [--states N] [--actions N] [--support K] [--gamma G] [--seed S] -o model.mdp
//! qnpg solve    model.mdp [solver flags] [-o trace.csv] [--policy-out policy.csv]
//! qnpg flow     model.mdp [solver flags] [--dt DT] [--steps N] [-o flow.csv]
//! qnpg compare  model.mdp [solver flags] [--beta B] [-o combined.csv]
//! qnpg diag     model.mdp [solver flags] [--method qn|md] [-o diag.csv]
//! ```
//!
//! Solver flags are `--config FILE`, `--reg kl|rkl|hellinger|alpha:<f>`,
//! `--tau`, `--eta`, `--tol`, `--max-iters`, `--bisect-tol` and
//! `--solver auto|dense|bicgstab`; explicit flags override the config file.
//! `--threads N` (or `QNPG_THREADS`) sizes the worker pool.
//!
//! Exit codes: 0 success, 1 I/O or file format error, 2 usage or
//! specification error, 3 iteration limit reached, 4 numerical failure, 5 too
//! few measurable errors for a rate diagnostic. Reports go to standard output
//! with floats at 17 significant digits; CSV files are byte-identical across
//! runs unless `--timing` asks for measured wall times.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::baseline::{effective_beta, solve_md_baseline, BaselineRate};
use crate::diagnostics::{
    convergence_diagnostics, diagnose_errors, diagnostic_rows, ERROR_FLOOR_SCALE,
};
use crate::error::{Error, Result};
use crate::flow::{flow_euler_observed, FlowConfig};
use crate::io::{
    diagnostics_csv, flow_csv, fmt_f64, model_bytes, policy_csv, read_config, read_model,
    trace_csv, TraceCsvOptions, TRACE_HEADER,
};
use crate::mdp::{weight_vector, LinearSolverKind, MdpModel};
use crate::qn::{first_order_residual, solve, IterationTrace, SolverConfig};
use crate::regularizer::{Family, RegularizerSpec};
use crate::synth::{generate_synthetic, SynthSpec};
use crate::table::Policy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MAX_ITERS: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_INSUFFICIENT: i32 = 5;

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "QNPG_THREADS";

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Json(_) | Error::Format { .. } => EXIT_IO,
        Error::Config(_)
        | Error::Spec(_)
        | Error::Dimension(_)
        | Error::RowSum { .. }
        | Error::DiscountRange(_)
        | Error::NegativeProbability { .. }
        | Error::InvalidPolicy(_) => EXIT_USAGE,
        Error::MaxItersExceeded { .. } => EXIT_MAX_ITERS,
        Error::InsufficientData { .. } => EXIT_INSUFFICIENT,
        Error::IterativeSolveFailure { .. }
        | Error::Tangent { .. }
        | Error::Convergence { .. }
        | Error::StepSize { .. }
        | Error::Domain { .. } => EXIT_NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qnpg",
    version,
    about = "Quasi-Newton policy iteration for regularized MDPs"
)]
pub struct Cli {
    /// Worker threads for per-state updates (default: QNPG_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic model.
    Generate(GenerateArgs),
    /// Run quasi-Newton policy iteration.
    Solve(SolveArgs),
    /// Integrate the continuous quasi-Newton flow with forward Euler.
    Flow(FlowArgs),
    /// Compare quasi-Newton with constant-rate mirror descent.
    Compare(CompareArgs),
    /// Convergence-rate diagnostics of a solver run.
    Diag(DiagArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 200)]
    pub states: usize,
    #[arg(long, default_value_t = 50)]
    pub actions: usize,
    /// Number of successor states per state-action pair.
    #[arg(long, default_value_t = 20)]
    pub support: usize,
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model file; a `.json` extension selects the JSON variant.
    #[arg(short = 'o', long = "output")]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    Auto,
    Dense,
    Bicgstab,
}

#[derive(Debug, Args, Default)]
pub struct SolverArgs {
    /// Flat `key = value` config file; flags given explicitly take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Regularizer: kl, rkl, hellinger or alpha:<value>.
    #[arg(long)]
    pub reg: Option<Family>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Stopping threshold on the relative policy change.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Residual tolerance of the per-state multiplier bisection.
    #[arg(long)]
    pub bisect_tol: Option<f64>,
    /// Linear solver for the policy evaluation systems.
    #[arg(long, value_enum)]
    pub solver: Option<SolverChoice>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub model: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Trace CSV (standard output when absent).
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
    /// Final policy CSV, one row per state.
    #[arg(long)]
    pub policy_out: Option<PathBuf>,
    /// Record measured wall time instead of 0 in the trace.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    pub model: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Flow CSV (standard output when absent).
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub model: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Constant mirror-descent rate; defaults to 1 / max w at the start.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Iteration cap for the baseline.
    #[arg(long, default_value_t = 200_000)]
    pub baseline_max_iters: usize,
    /// Combined CSV with a leading `method` column.
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Quasi-Newton iteration.
    Qn,
    /// Constant-rate mirror descent.
    Md,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    pub model: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value = "qn")]
    pub method: Method,
    /// Mirror-descent rate for `--method md`.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Diagnostic CSV (standard output when absent).
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
}

/// Solver settings and regularizer after merging the config file and flags.
struct Resolved {
    config: SolverConfig,
    family: Family,
    beta: Option<f64>,
}

impl SolverArgs {
    fn resolve(&self) -> Result<Resolved> {
        let (mut config, mut family, mut beta) = match &self.config {
            Some(path) => {
                let file = read_config(path)?;
                (file.solver, file.family, file.beta)
            }
            None => (SolverConfig::default(), None, None),
        };
        if let Some(f) = self.reg {
            family = Some(f);
        }
        if let Some(x) = self.tau {
            config.tau = x;
        }
        if let Some(x) = self.eta {
            config.eta = x;
        }
        if let Some(x) = self.tol {
            config.eps_tol = x;
        }
        if let Some(x) = self.max_iters {
            config.max_iters = x;
        }
        if let Some(x) = self.bisect_tol {
            config.bisect_tol = x;
        }
        if let Some(kind) = self.solver {
            config.linear.kind = match kind {
                SolverChoice::Auto => LinearSolverKind::Auto,
                SolverChoice::Dense => LinearSolverKind::Dense,
                SolverChoice::Bicgstab => LinearSolverKind::BiCgStab,
            };
        }
        config.validate()?;
        if beta.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::Config("beta must be positive".into()));
        }
        beta = beta.filter(|b| *b > 0.0);
        Ok(Resolved {
            config,
            family: family.unwrap_or(Family::Kl),
            beta,
        })
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Reports go to `out`, warnings and errors to `err`.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    let threads = match thread_count(cli.threads) {
        Ok(n) => n,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let result = pool.install(|| dispatch(&cli.command, out, err));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let n =
        match flag {
            Some(n) => Some(n),
            None => match std::env::var(THREADS_ENV) {
                Ok(v) if !v.trim().is_empty() => Some(v.trim().parse().map_err(|_| {
                    Error::Config(format!("{THREADS_ENV} must be a count, got `{v}`"))
                })?),
                _ => None,
            },
        };
    if n == Some(0) {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    Ok(n)
}

fn dispatch(
    command: &Command,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<i32> {
    match command {
        Command::Generate(args) => cmd_generate(args, out),
        Command::Solve(args) => cmd_solve(args, out, err),
        Command::Flow(args) => cmd_flow(args, out),
        Command::Compare(args) => cmd_compare(args, out, err),
        Command::Diag(args) => cmd_diag(args, out),
    }
}

fn emit(path: Option<&Path>, text: &str, out: &mut (dyn Write + Send)) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut (dyn Write + Send)) -> Result<i32> {
    let spec = SynthSpec::new(
        args.states,
        args.actions,
        args.support,
        args.gamma,
        args.seed,
    );
    let model = generate_synthetic(&spec)?;
    let bytes = model_bytes(&model, &args.output)?;
    std::fs::write(&args.output, &bytes)?;
    writeln!(out, "model {}", args.output.display())?;
    writeln!(
        out,
        "states {} actions {} support {}",
        args.states, args.actions, args.support
    )?;
    writeln!(out, "gamma {}", fmt_f64(args.gamma))?;
    writeln!(out, "seed {}", args.seed)?;
    writeln!(out, "sha256 {}", sha256_hex(&bytes))?;
    Ok(EXIT_OK)
}

fn load(path: &Path, family: Family) -> Result<(MdpModel, RegularizerSpec)> {
    let model = read_model(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })?;
    let spec = RegularizerSpec::uniform(family, model.num_states, model.num_actions);
    Ok((model, spec))
}

fn write_report_line(
    out: &mut (dyn Write + Send),
    key: &str,
    value: impl std::fmt::Display,
) -> Result<()> {
    writeln!(out, "{key} {value}")?;
    Ok(())
}

pub fn cmd_solve(
    args: &SolveArgs,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<i32> {
    let resolved = args.solver.resolve()?;
    let (model, spec) = load(&args.model, resolved.family)?;
    let init = Policy::uniform(model.num_states, model.num_actions);
    let opts = TraceCsvOptions {
        timing: args.timing,
        reference: None,
    };
    let (policy, trace, code) = match solve(&model, &spec, &resolved.config, &init) {
        Ok((policy, trace)) => (policy, trace, EXIT_OK),
        Err(Error::MaxItersExceeded { trace, policy }) => {
            writeln!(
                err,
                "warning: no convergence within {} iterations; writing the partial trace",
                trace.records.len()
            )?;
            (*policy, *trace, EXIT_MAX_ITERS)
        }
        Err(e) => return Err(e),
    };
    let csv = trace_csv(&trace, &opts);
    if let Some(path) = &args.policy_out {
        std::fs::write(path, policy_csv(&policy))?;
    }
    if let Some(path) = &args.output {
        std::fs::write(path, &csv)?;
        solve_summary(out, &model, &spec, &resolved.config, &policy, &trace)?;
    } else {
        out.write_all(csv.as_bytes())?;
    }
    Ok(code)
}

fn solve_summary(
    out: &mut (dyn Write + Send),
    model: &MdpModel,
    spec: &RegularizerSpec,
    config: &SolverConfig,
    policy: &Policy,
    trace: &IterationTrace,
) -> Result<()> {
    write_report_line(out, "reg", spec.family)?;
    write_report_line(out, "converged", trace.converged)?;
    write_report_line(out, "iterations", trace.iterations())?;
    if let Some(last) = trace.records.last() {
        write_report_line(out, "final_xi", fmt_f64(last.xi))?;
        write_report_line(out, "objective", fmt_f64(last.objective))?;
    }
    write_report_line(
        out,
        "first_order_residual",
        fmt_f64(first_order_residual(model, policy, spec, config)?),
    )
}

pub fn cmd_flow(args: &FlowArgs, out: &mut (dyn Write + Send)) -> Result<i32> {
    let resolved = args.solver.resolve()?;
    let (model, spec) = load(&args.model, resolved.family)?;
    let init = Policy::uniform(model.num_states, model.num_actions);
    // The flow converges to the fixed point of the quasi-Newton iteration, which
    // serves as the reference for the error column.
    let reference = match solve(&model, &spec, &resolved.config, &init) {
        Ok((policy, _)) => policy,
        Err(Error::MaxItersExceeded { policy, .. }) => *policy,
        Err(e) => return Err(e),
    };
    let mut errors = Vec::with_capacity(args.steps + 1);
    let flow_cfg = FlowConfig::new(args.dt, args.steps);
    let result = flow_euler_observed(
        &model,
        &spec,
        &resolved.config,
        &flow_cfg,
        &init,
        |_, _, pi| {
            errors.push(pi.table().frobenius_distance(reference.table()));
        },
    )?;
    let floor = ERROR_FLOOR_SCALE * reference.table().frobenius_norm().max(1.0);
    let diag = match diagnose_errors(&errors, floor) {
        Ok(d) => Some(d),
        Err(Error::InsufficientData { .. }) => None,
        Err(e) => return Err(e),
    };
    let csv = flow_csv(&result.samples, &diagnostic_rows(&errors, floor));
    let (t_end, e_end) = *result.samples.last().expect("flow has samples");
    emit(args.output.as_deref(), &csv, out)?;
    if args.output.is_some() {
        write_report_line(out, "steps", args.steps)?;
        write_report_line(out, "halved_steps", result.halved_steps)?;
        write_report_line(out, "t_end", fmt_f64(t_end))?;
        write_report_line(out, "objective_end", fmt_f64(e_end))?;
        write_report_line(
            out,
            "err_end",
            fmt_f64(*errors.last().expect("flow has samples")),
        )?;
        match &diag {
            Some(d) => write_report_line(out, "verdict", d.verdict)?,
            None => write_report_line(out, "verdict", "insufficient-data")?,
        }
    }
    Ok(EXIT_OK)
}

fn combined_csv(parts: &[(&str, &IterationTrace)], timing: bool) -> String {
    let opts = TraceCsvOptions {
        timing,
        reference: None,
    };
    let mut out = format!("method,{TRACE_HEADER}\n");
    for (name, trace) in parts {
        for line in trace_csv(trace, &opts).lines().skip(1) {
            let _ = writeln!(out, "{name},{line}");
        }
    }
    out
}

pub fn cmd_compare(
    args: &CompareArgs,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<i32> {
    let resolved = args.solver.resolve()?;
    let (model, spec) = load(&args.model, resolved.family)?;
    let init = Policy::uniform(model.num_states, model.num_actions);
    let (qn_trace, qn_converged) = match solve(&model, &spec, &resolved.config, &init) {
        Ok((_, trace)) => (trace, true),
        Err(Error::MaxItersExceeded { trace, .. }) => (*trace, false),
        Err(e) => return Err(e),
    };
    let beta = args.beta.or(resolved.beta);
    let rate = match beta {
        Some(b) => {
            if !(b > 0.0) {
                return Err(Error::Config(format!("beta must be positive, got {b}")));
            }
            let e = resolved.config.weight_e.resolve(model.num_states)?;
            let (w, _) = weight_vector(&model, &init, &e, &resolved.config.linear)?;
            let (capped, clamped) = effective_beta(b, &w);
            if clamped {
                writeln!(
                    err,
                    "warning: beta {} exceeds 1/max w and is clamped to {}",
                    fmt_f64(b),
                    fmt_f64(capped)
                )?;
            }
            BaselineRate::Fixed(b)
        }
        None => BaselineRate::Auto,
    };
    let md_config = SolverConfig {
        max_iters: args.baseline_max_iters,
        ..resolved.config.clone()
    };
    let run = solve_md_baseline(&model, &spec, &md_config, rate, &init)?;
    let csv = combined_csv(&[("qn", &qn_trace), ("md", &run.trace)], args.timing);
    emit(args.output.as_deref(), &csv, out)?;
    if args.output.is_some() {
        let (q, m) = (qn_trace.iterations(), run.trace.iterations());
        write_report_line(out, "qn_iterations", q)?;
        write_report_line(out, "qn_converged", qn_converged)?;
        write_report_line(out, "md_iterations", m)?;
        write_report_line(out, "md_converged", run.trace.converged)?;
        write_report_line(out, "md_beta", fmt_f64(run.beta))?;
        write_report_line(out, "md_clamped_iterations", run.clamped_iterations)?;
        write_report_line(out, "iteration_ratio", fmt_f64(m as f64 / q.max(1) as f64))?;
    }
    Ok(if qn_converged && run.trace.converged {
        EXIT_OK
    } else {
        EXIT_MAX_ITERS
    })
}

pub fn cmd_diag(args: &DiagArgs, out: &mut (dyn Write + Send)) -> Result<i32> {
    let resolved = args.solver.resolve()?;
    let (model, spec) = load(&args.model, resolved.family)?;
    let init = Policy::uniform(model.num_states, model.num_actions);
    let config = SolverConfig {
        record_snapshots: true,
        ..resolved.config.clone()
    };
    let (policy, trace) = match args.method {
        // A run cut short by the iteration limit is still diagnosed against
        // its last iterate; short runs then report too few measurable errors.
        Method::Qn => match solve(&model, &spec, &config, &init) {
            Ok(run) => run,
            Err(Error::MaxItersExceeded { trace, policy }) => (*policy, *trace),
            Err(e) => return Err(e),
        },
        Method::Md => {
            let rate = args
                .beta
                .or(resolved.beta)
                .map_or(BaselineRate::Auto, BaselineRate::Fixed);
            let run = solve_md_baseline(&model, &spec, &config, rate, &init)?;
            (run.policy, run.trace)
        }
    };
    let diag = convergence_diagnostics(&trace, &policy)?;
    emit(args.output.as_deref(), &diagnostics_csv(&diag), out)?;
    if args.output.is_some() {
        write_report_line(out, "iterations", trace.iterations())?;
        let ratios: Vec<String> = diag.ratios.iter().map(|&r| fmt_f64(r)).collect();
        write_report_line(out, "ratios", ratios.join(","))?;
    }
    write_report_line(out, "verdict", diag.verdict)?;
    Ok(EXIT_OK)
}

//! `ota-sim` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric or contract
//! error, 4 I/O error. Every failure writes one line of the form
//! `error code=<n> kind=<kind> message="<text>"` to standard error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::Value;

use crate::channel::{sample_realization, ScenarioConfig, SystemRealization};
use crate::encoding::{build_precoder, eta_from_delta, NoisePrecoder, PrecoderKind, PrecoderParams};
use crate::experiments::{run_preset, write_table, ExperimentPreset, PresetName};
use crate::linalg::ComplexMatrix;
use crate::metrics::{
    approximation_error, coop_security_with_fault, effective_channel_security, mc_oracle, noncoop_security,
    security_report, Fault,
};
use crate::optimizer::{optimize_proposed, optimize_shared_zf, solve_allocation, Ranking, Selection};
use crate::{Error, Result};

pub const THREADS_ENV: &str = "OTA_SIM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ota-sim", version, about = "Secure over-the-air computation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Base seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of realizations (run) or oracle instances (selftest).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON document merged into the preset or scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (falls back to OTA_SIM_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override one field, e.g. `--set scenario.num_users=12`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Increase log verbosity.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment preset and write its result table.
    Run { preset: String },
    /// Print the security report of a precoder on a realization file.
    Metrics {
        realization: PathBuf,
        #[command(flatten)]
        design: DesignArgs,
        /// Evaluate this precoder file instead of building one.
        #[arg(long)]
        precoder: Option<PathBuf>,
    },
    /// Print the optimized zero-forcing precoder for a realization file.
    Optimize {
        realization: PathBuf,
        /// Power-control fraction of the largest amplitude.
        #[arg(long, default_value_t = 1.0, conflicts_with = "eta")]
        delta: f64,
        #[arg(long)]
        eta: Option<f64>,
        /// Share zero-forcing among this many users.
        #[arg(long)]
        shared: Option<usize>,
        #[arg(long, value_enum, default_value = "exhaustive")]
        selection: SelectionArg,
        #[arg(long, value_enum, default_value = "noncoop")]
        ranking: RankingArg,
    },
    /// Check closed forms against independent oracles.
    Selftest {
        #[arg(long = "inject-fault", hide = true)]
        inject_fault: bool,
    },
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long, default_value = "none")]
    kind: String,
    #[arg(long, default_value_t = 1.0, conflicts_with = "eta")]
    delta: f64,
    #[arg(long)]
    eta: Option<f64>,
    /// Mixture weight toward the unconstrained draw.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Zero-forcing set size for proposed_shared.
    #[arg(long, default_value_t = 2)]
    shared_users: usize,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SelectionArg {
    Exhaustive,
    BestChannel,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum RankingArg {
    Noncoop,
    Coop,
}

impl From<SelectionArg> for Selection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::Exhaustive => Selection::Exhaustive,
            SelectionArg::BestChannel => Selection::BestChannel,
        }
    }
}

impl From<RankingArg> for Ranking {
    fn from(r: RankingArg) -> Self {
        match r {
            RankingArg::Noncoop => Ranking::NonCooperative,
            RankingArg::Coop => Ranking::Cooperative,
        }
    }
}

fn diagnostic(err: &Error) -> String {
    let message = serde_json::to_string(&err.to_string()).unwrap_or_else(|_| "\"?\"".into());
    format!("error code={} kind={} message={message}", err.exit_code(), err.kind())
}

/// Runs the CLI on `args` (including the program name); returns the exit
/// code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let err = Error::Config(e.kind().to_string());
            let _ = writeln!(stderr, "{}", diagnostic(&err));
            let _ = write!(stderr, "{}", e.render());
            return err.exit_code();
        }
    };
    init_logging(cli.common.verbose);
    match dispatch(&cli, stdout) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "{}", diagnostic(&err));
            if matches!(&cli.command, Command::Run { .. }) && err.to_string().starts_with("unknown preset") {
                let _ = write!(stderr, "{}", Cli::command().render_usage());
                let _ = writeln!(stderr);
            }
            err.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?,
            ),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Error::Config("thread count must be positive".into()));
    }
    Ok(n)
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let threads = thread_count(cli.common.threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    let output = pool.install(|| -> Result<Output> {
        match &cli.command {
            Command::Run { preset } => cmd_run(preset, &cli.common),
            Command::Metrics {
                realization,
                design,
                precoder,
            } => cmd_metrics(realization, design, precoder.as_deref(), &cli.common),
            Command::Optimize {
                realization,
                delta,
                eta,
                shared,
                selection,
                ranking,
            } => cmd_optimize(realization, *delta, *eta, *shared, (*selection).into(), (*ranking).into()),
            Command::Selftest { inject_fault } => cmd_selftest(&cli.common, *inject_fault),
        }
    })?;
    emit(output, cli.common.out.as_deref(), stdout)
}

enum Output {
    Table(crate::experiments::ResultTable),
    Text(String),
}

fn emit(output: Output, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let stdout_err = |source| Error::Io {
        path: "<stdout>".into(),
        source,
    };
    match (output, out) {
        (Output::Table(t), Some(path)) => write_table(&t, path),
        (Output::Table(t), None) => stdout.write_all(t.render().as_bytes()).map_err(stdout_err),
        (Output::Text(s), Some(path)) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                    path: parent.display().to_string(),
                    source,
                })?;
            }
            std::fs::write(path, s).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })
        }
        (Output::Text(s), None) => stdout.write_all(s.as_bytes()).map_err(stdout_err),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Recursively merges `patch` into `base`; objects merge key by key, every
/// other value replaces.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `key.path=value`; the value is read as JSON when it parses and
/// as a plain string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    for part in key.split('.') {
        if part.is_empty() {
            return Err(Error::Config(format!("override '{assignment}' has an empty key segment")));
        }
        if slot.is_null() {
            *slot = Value::Object(Default::default());
        }
        if !slot.is_object() {
            return Err(Error::Config(format!("override '{assignment}' descends into a non-object")));
        }
        slot = slot
            .as_object_mut()
            .expect("checked")
            .entry(part.to_string())
            .or_insert(Value::Null);
    }
    *slot = value;
    Ok(())
}

/// Preset after applying `--config`, `--set`, `--seed` and `--trials`.
pub fn resolve_preset(
    name: &str,
    config: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
    trials: Option<usize>,
) -> Result<ExperimentPreset> {
    let name: PresetName = name.parse()?;
    let mut doc = serde_json::to_value(ExperimentPreset::new(name)).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(path) = config {
        merge_json(&mut doc, read_json(path)?);
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    doc["name"] = serde_json::to_value(name).map_err(|e| Error::Config(e.to_string()))?;
    let mut preset: ExperimentPreset =
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("invalid preset configuration: {e}")))?;
    if let Some(s) = seed {
        preset.base_seed = s;
    }
    if let Some(t) = trials {
        preset.num_realizations = t;
    }
    preset.validate()?;
    Ok(preset)
}

fn cmd_run(name: &str, common: &CommonArgs) -> Result<Output> {
    let preset = resolve_preset(name, common.config.as_deref(), &common.overrides, common.seed, common.trials)?;
    log::info!("running {} with {} realizations", name, preset.num_realizations);
    Ok(Output::Table(run_preset(&preset)?))
}

fn load_realization(path: &Path) -> Result<SystemRealization> {
    let real: SystemRealization =
        serde_json::from_value(read_json(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    real.validate()?;
    Ok(real)
}

fn resolve_eta(real: &SystemRealization, delta: f64, eta: Option<f64>) -> Result<f64> {
    match eta {
        Some(e) => Ok(e),
        None => Ok(eta_from_delta(real, delta)?),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn cmd_metrics(path: &Path, design: &DesignArgs, precoder: Option<&Path>, common: &CommonArgs) -> Result<Output> {
    let real = load_realization(path)?;
    let (a, eta) = match precoder {
        Some(p) => {
            let pre: NoisePrecoder =
                serde_json::from_value(read_json(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let eta = design.eta.unwrap_or(pre.eta);
            (pre.a, eta)
        }
        None => {
            let kind: PrecoderKind = design.kind.parse().map_err(|e: crate::encoding::EncodingError| Error::Config(e.to_string()))?;
            let eta = resolve_eta(&real, design.delta, design.eta)?;
            let params = PrecoderParams {
                theta: design.theta,
                shared_users: design.shared_users,
                ..PrecoderParams::default()
            };
            let pre = build_precoder(kind, &real, eta, common.seed.unwrap_or(0), &params)?;
            (pre.a, eta)
        }
    };
    Ok(Output::Text(to_json(&security_report(&real, &a, eta)?)?))
}

fn cmd_optimize(
    path: &Path,
    delta: f64,
    eta: Option<f64>,
    shared: Option<usize>,
    selection: Selection,
    ranking: Ranking,
) -> Result<Output> {
    let real = load_realization(path)?;
    let eta = resolve_eta(&real, delta, eta)?;
    let precoder = match shared {
        Some(n) => optimize_shared_zf(&real, eta, n, selection, ranking)?,
        None => optimize_proposed(&real, eta)?,
    };
    Ok(Output::Text(to_json(&precoder)?))
}

struct Check {
    name: &'static str,
    failures: usize,
    worst: f64,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            failures: 0,
            worst: 0.0,
        }
    }

    /// Records `value` against a pass threshold of 1.
    fn record(&mut self, ratio: f64) {
        if ratio.is_nan() || ratio > 1.0 {
            self.failures += 1;
        }
        self.worst = self.worst.max(if ratio.is_nan() { f64::INFINITY } else { ratio });
    }
}

const SELFTEST_SAMPLES: usize = 100_000;
/// Oracle agreement band in standard errors; wide enough that a correct
/// build essentially never trips it.
const SELFTEST_SIGMAS: f64 = 4.5;

fn cmd_selftest(common: &CommonArgs, inject_fault: bool) -> Result<Output> {
    let trials = common.trials.unwrap_or(20);
    if trials == 0 {
        return Err(Error::Config("selftest needs at least one trial".into()));
    }
    let seed = common.seed.unwrap_or(2024);
    let fault = if inject_fault { Fault::FlipMeanSign } else { Fault::None };
    let kinds = [PrecoderKind::None, PrecoderKind::SignalLevel, PrecoderKind::RandomZf, PrecoderKind::Mixture];

    let mut oracle_d = Check::new("oracle_D");
    let mut oracle_s = Check::new("oracle_S_coop");
    let mut remark = Check::new("effective_channel_identity");
    let mut single = Check::new("single_eavesdropper");
    let mut dominance = Check::new("coop_dominance");
    let mut neutral = Check::new("zero_forcing_neutrality");
    let mut lp_grid = Check::new("lp_vs_grid");

    for t in 0..trials {
        let s = seed.wrapping_add(t as u64);
        let cfg = ScenarioConfig {
            num_users: 3 + t % 4,
            num_eavesdroppers: 2 + t % 2,
            ..ScenarioConfig::default()
        };
        let real = sample_realization(&cfg, s)?;
        let eta = eta_from_delta(&real, 0.8)?;
        let params = PrecoderParams {
            theta: 0.5,
            ..PrecoderParams::default()
        };
        let pre = build_precoder(kinds[t % kinds.len()], &real, eta, s, &params)?;
        let a = &pre.a;

        let d = approximation_error(&real, a, eta)?;
        let (sc, p_opt) = coop_security_with_fault(&real, a, eta, fault)?;
        let (sn, _) = noncoop_security(&real, a, eta)?;
        let o = mc_oracle(&real, a, eta, SELFTEST_SAMPLES, s)?;
        oracle_d.record((o.d_hat - d).abs() / (SELFTEST_SIGMAS * o.std_err_d));
        oracle_s.record((o.s_hat - sc).abs() / (SELFTEST_SIGMAS * o.std_err_s));
        remark.record((effective_channel_security(&real, a, eta, &p_opt)? - sc).abs() / 1e-10);
        dominance.record((sc - sn - 1e-10).max(0.0) / 1e-12);

        let one = real.with_eavesdroppers(1);
        let (s1, _) = coop_security_with_fault(&one, a, eta, fault)?;
        let (n1, _) = noncoop_security(&one, a, eta)?;
        single.record((s1 - n1).abs() / 1e-12);

        let zf = build_precoder(PrecoderKind::RandomZf, &real, eta, s, &PrecoderParams::default())?;
        let zero = ComplexMatrix::zeros(real.num_users(), 1);
        neutral.record((approximation_error(&real, &zf.a, eta)? - approximation_error(&real, &zero, eta)?).abs() / 1e-12);

        let small = sample_realization(
            &ScenarioConfig {
                num_users: 3,
                num_eavesdroppers: 2,
                ..ScenarioConfig::default()
            },
            s,
        )?;
        lp_grid.record(grid_gap(&small, eta_from_delta(&small, 0.7)?)? / 0.01);
    }

    let checks = [oracle_d, oracle_s, remark, single, dominance, neutral, lp_grid];
    let mut report = String::new();
    for c in &checks {
        report.push_str(&format!(
            "{} {} trials={} failures={} worst_ratio={:.3e}\n",
            if c.failures == 0 { "PASS" } else { "FAIL" },
            c.name,
            trials,
            c.failures,
            c.worst
        ));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| c.failures > 0).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(Output::Text(report))
    } else {
        eprint!("{report}");
        Err(Error::Numeric(format!("selftest failed: {}", failed.join(", "))))
    }
}

/// Relative gap between the LP optimum and a 201×201 grid search over the
/// two noise powers of a three-user instance.
pub fn grid_gap(real: &SystemRealization, eta: f64) -> Result<f64> {
    let mut z = 0;
    for k in 1..3 {
        if real.h[k].norm_sqr() > real.h[z].norm_sqr() {
            z = k;
        }
    }
    let (design, obj) = solve_allocation(real, eta, &[z], &[1.0])?;
    let Some(t) = obj.t_star else {
        return Ok(0.0);
    };
    let users = design.noise_users(3);
    let budget = |k: usize| real.residual_power(k, eta).max(0.0);
    let ratio: Vec<f64> = users.iter().map(|&i| (real.h[i] / real.h[z]).norm_sqr()).collect();
    let mut best = f64::NEG_INFINITY;
    for a in 0..=200 {
        for b in 0..=200 {
            let lam = [budget(users[0]) * a as f64 / 200.0, budget(users[1]) * b as f64 / 200.0];
            if lam[0] * ratio[0] + lam[1] * ratio[1] <= budget(z) {
                best = best.max(obj.value_at(&lam));
            }
        }
    }
    Ok((t - best).abs() / best.abs())
}

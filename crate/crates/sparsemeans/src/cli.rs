//! Command-line front end.
//!
//! Five subcommands: `bounds` prints any closed-form quantity as
//! key=value lines, `tune` prints the run parameters an algorithm picks,
//! `run` executes one grid point and prints its CSV row, `sweep` runs a
//! full grid from a config file, and `regimes` tabulates the boundary
//! curves of the communication regimes for one dimension.
//!
//! Exit codes: 0 on success, 2 for any configuration problem, 3 when a
//! run or sweep produced only infeasible rows (outputs are still
//! written), 1 for I/O failures.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bounds::tuning::{self, EncodingMode};
use crate::bounds::{self, TunedParams};
use crate::harness::config::{parse_noise, parse_selection};
use crate::harness::{self, report, AlgorithmSpec, ResultsRow, SweepConfig};
use crate::model::mu_min;
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sparsemeans",
    version,
    about = "Distributed sparse normal means: protocols, bounds, and Monte Carlo sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a closed-form quantity as key=value lines
    Bounds(BoundsArgs),
    /// Print the parameters an algorithm tunes for one configuration
    Tune(TuneArgs),
    /// Run one configuration and print its CSV row
    Run(RunArgs),
    /// Run a full grid from a key=value config file
    Sweep(SweepArgs),
    /// Tabulate the regime boundary curves for one dimension
    Regimes(RegimesArgs),
}

#[derive(Args)]
struct BoundsArgs {
    /// One of: m0, m-kl, a, b, mu-min, threshold-small, threshold-mid,
    /// m-eff-large, oracle-risk, pi-risk-bound, p-send-support-topl,
    /// p-send-nonsupport-topl, p-send-support-th, p-send-nonsupport-th,
    /// pi-encoding, vote-margin-factor, necessary-snr
    quantity: String,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Comma-separated mean vector, for oracle-risk
    #[arg(long)]
    mu: Option<String>,
    #[arg(long = "mu-k")]
    mu_k: Option<f64>,
    #[arg(long = "mu-max")]
    mu_max: Option<f64>,
    /// Per-coordinate noise variance, for oracle-risk
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    alg: AlgorithmSpec,
    #[arg(long)]
    d: usize,
    #[arg(long = "K")]
    k: usize,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "M")]
    m: usize,
    #[arg(long)]
    r: f64,
    #[arg(long, default_value = "compact")]
    encoding: EncodingMode,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    alg: AlgorithmSpec,
    #[arg(long)]
    d: usize,
    #[arg(long = "K")]
    k: usize,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "M")]
    m: usize,
    #[arg(long)]
    r: f64,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for trial execution (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "compact")]
    encoding: EncodingMode,
    /// minimal or uniform:<factor>
    #[arg(long = "mu-profile", default_value = "minimal")]
    mu_profile: String,
    /// gaussian or zero
    #[arg(long, default_value = "gaussian")]
    noise: String,
    /// topk, votes or votes:<cutoff>
    #[arg(long, default_value = "topk")]
    selection: String,
    /// Stream per-message TSV records to stderr
    #[arg(long)]
    trace: bool,
    /// Also write the CSV here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    encoding: Option<EncodingMode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct RegimesArgs {
    #[arg(long)]
    d: usize,
    /// Largest fleet size to tabulate (default: d)
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Bounds(a) => bounds_cmd(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Regimes(a) => regimes_cmd(a),
    }
}

fn req<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("this quantity needs --{flag}")))
}

fn print_params(name: &str, p: &TunedParams) {
    let opt = |v: Option<String>| v.unwrap_or_default();
    println!("algorithm={name}");
    println!("m_eff={}", p.m_eff);
    println!("tau={}", opt(p.threshold.map(|t| t.to_string())));
    println!("u={}", opt(p.encoding.map(|(u, _)| u.to_string())));
    println!("p={}", opt(p.encoding.map(|(_, q)| q.to_string())));
    println!("l={}", opt(p.l.map(|l| l.to_string())));
    println!("feasible={}", p.feasible);
    println!("reason={}", opt(p.reason.clone()));
}

fn bounds_cmd(a: BoundsArgs) -> Result<i32> {
    let d = || req(a.d, "d");
    let k = || req(a.k, "K");
    let l = || req(a.l, "L");
    let m = || req(a.m, "M");
    let r = || req(a.r, "r");
    match a.quantity.as_str() {
        "m0" => println!("m0={}", bounds::m0(d()?, r()?)?),
        "m-kl" => println!("m_kl={}", bounds::m_kl(d()?, r()?, k()?, l()?)?),
        "a" => println!("a={}", bounds::a_quantity(d()?, k()?, l()?)?),
        "b" => println!("b={}", bounds::b_quantity(d()?, k()?, l()?, r()?)?),
        "mu-min" => println!("mu_min={}", mu_min(d()?, k()?, r()?)?),
        "threshold-small" => {
            print_params("threshold-small", &bounds::threshold_small(d()?, k()?, r()?)?);
        }
        "threshold-mid" => {
            print_params("threshold-mid", &bounds::threshold_mid(d()?, k()?, r()?, m()?)?);
        }
        "m-eff-large" => {
            print_params("m-eff-large", &bounds::m_eff_large(d()?, k()?, r()?)?);
        }
        "oracle-risk" => {
            let text = req(a.mu.as_deref(), "mu")?;
            let mu: Vec<f64> = text
                .split(',')
                .map(|v| v.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("bad --mu list '{text}'")))?;
            println!("oracle_risk={}", bounds::oracle_risk(&mu, m()? as u64, a.sigma2)?);
        }
        "pi-risk-bound" => {
            println!("pi_risk_bound={}", bounds::pi_risk_bound(d()?, k()?, m()?, r()?)?);
        }
        "p-send-support-topl" => {
            println!(
                "p_send_support_topl={}",
                bounds::p_send_support_topl(d()?, k()?, l()?, r()?)?
            );
        }
        "p-send-nonsupport-topl" => {
            let p_s = bounds::p_send_support_topl(d()?, k()?, l()?, r()?)?;
            println!(
                "p_send_nonsupport_topl={}",
                bounds::p_send_nonsupport_topl(d()?, k()?, l()?, p_s)?
            );
        }
        "p-send-support-th" => {
            let tau = req(a.tau, "tau")?;
            let mu_k = req(a.mu_k, "mu-k")?;
            println!("p_send_support_th={}", bounds::p_send_support_th(tau, mu_k));
        }
        "p-send-nonsupport-th" => {
            println!("p_send_nonsupport_th={}", bounds::p_send_nonsupport_th(req(a.tau, "tau")?));
        }
        "pi-encoding" => {
            let (u, p) = bounds::pi_encoding(d()?, req(a.mu_max, "mu-max")?)?;
            println!("u={u}");
            println!("p={p}");
        }
        "vote-margin-factor" => {
            println!("vote_margin_factor={}", tuning::vote_margin_factor(d()?, k()?)?);
        }
        "necessary-snr" => println!("necessary_snr={}", tuning::necessary_snr(d()?, m()?)?),
        other => return Err(Error::Config(format!("unknown quantity '{other}'"))),
    }
    Ok(0)
}

fn check_alg_inputs(alg: AlgorithmSpec, k: usize, l: Option<usize>) -> Result<()> {
    if alg.needs_l() && l.is_none() {
        return Err(Error::Config(format!("algorithm '{alg}' needs --L")));
    }
    if alg == AlgorithmSpec::VoteOne && k != 1 {
        return Err(Error::Config("vote-one covers only K = 1".into()));
    }
    Ok(())
}

fn tune_cmd(a: TuneArgs) -> Result<i32> {
    check_alg_inputs(a.alg, a.k, a.l)?;
    let params = harness::tune_algorithm(a.alg, a.d, a.m, a.k, a.l, a.r, a.encoding)?;
    print_params(a.alg.name(), &params);
    Ok(0)
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build a {n}-thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T>(_threads: Option<usize>, f: impl FnOnce() -> T) -> Result<T> {
    Ok(f())
}

fn feasibility_code(rows: &[ResultsRow]) -> i32 {
    if rows.iter().any(|r| r.feasible) {
        0
    } else {
        3
    }
}

fn run_cmd(a: RunArgs) -> Result<i32> {
    check_alg_inputs(a.alg, a.k, a.l)?;
    let mut cfg = SweepConfig::new(a.alg, a.d, a.m, a.k);
    cfg.l = a.l;
    cfg.r_grid = vec![a.r];
    cfg.trials = a.trials;
    cfg.master_seed = a.seed;
    cfg.encoding = a.encoding;
    cfg.mu_profile = a.mu_profile.parse()?;
    cfg.noise = parse_noise(&a.noise)?;
    cfg.selection = parse_selection(&a.selection)?;
    cfg.trace = a.trace;
    cfg.validate()?;
    let rows = with_threads(a.threads, || harness::run_sweep(&cfg))??;
    let text = report::csv_string(&rows)?;
    print!("{text}");
    if let Some(out) = &a.out {
        std::fs::write(out, &text)?;
    }
    Ok(feasibility_code(&rows))
}

fn sweep_cmd(a: SweepArgs) -> Result<i32> {
    let mut cfg = SweepConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = a.trials {
        cfg.trials = trials;
    }
    if let Some(encoding) = a.encoding {
        cfg.encoding = encoding;
    }
    if a.out.is_some() {
        cfg.out = a.out;
    }
    if a.plot.is_some() {
        cfg.plot = a.plot;
    }
    if a.trace {
        cfg.trace = true;
    }
    cfg.validate()?;
    let rows = with_threads(a.threads, || harness::run_sweep(&cfg))??;
    let text = report::csv_string(&rows)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(plot) = &cfg.plot {
        let out = cfg.out.as_ref().ok_or_else(|| {
            Error::Config("plot emission needs 'out' so the script can name its csv".into())
        })?;
        let csv_name = out
            .file_name()
            .ok_or_else(|| Error::Config(format!("bad out path {}", out.display())))?
            .to_string_lossy();
        report::emit_plot_script(&rows, &csv_name, plot)?;
    }
    Ok(feasibility_code(&rows))
}

/// Smallest grid SNR at which the sublinear budget fits `m` machines;
/// scanned on a fixed millistep grid so the table is reproducible.
fn sublinear_onset(d: usize, m: usize) -> Option<f64> {
    (1..1000)
        .map(|i| i as f64 / 1000.0)
        .find(|&r| bounds::m0(d, r).is_ok_and(|need| need <= m as u64))
}

fn regimes_cmd(a: RegimesArgs) -> Result<i32> {
    if a.d < 2 {
        return Err(Error::Config("need d >= 2".into()));
    }
    let max_m = a.m.unwrap_or(a.d).max(1);
    let r_comm = (a.d as f64).ln().powi(-3);
    let mut text = String::from("m,r_information,r_communication,r_sublinear\n");
    let mut m = 1usize;
    loop {
        let r_sub = sublinear_onset(a.d, m)
            .map(|r| r.to_string())
            .unwrap_or_default();
        let _ = writeln!(text, "{m},{},{r_comm},{r_sub}", 1.0 / m as f64);
        if m >= max_m {
            break;
        }
        m = (m * 2).min(max_m);
    }
    match &a.out {
        Some(path) => std::fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

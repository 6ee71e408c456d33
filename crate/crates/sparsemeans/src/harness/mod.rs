//! Monte Carlo sweep runner: tunes each algorithm at every SNR grid
//! point, executes independent trials, and aggregates success and
//! communication statistics into flat result rows.
//!
//! Trials are the unit of parallelism. Every trial's randomness is a pure
//! function of (master_seed, trial_index, machine_id), and aggregation
//! sums integers, so the rows are identical no matter how many workers
//! run them (or whether the `parallel` feature is enabled at all).
//!
//! Grid points where a tuning rule cannot honor its guarantee are never
//! skipped: the row is emitted with `feasible = false` and whatever
//! fallback parameters the rule documents. Points with no usable
//! threshold at all (non-real, or zero after truncation) report zero
//! successes and zero bits.

pub mod config;
pub mod report;

pub use config::{even_r_grid, AlgorithmSpec, ProfileSpec, SweepConfig, DEFAULT_R_POINTS};
pub use report::{emit_csv, emit_plot_script, parse_csv, plot_script, CSV_HEADER};

use crate::bounds::tuning::{self, EncodingMode};
use crate::bounds::{self, TunedAlgorithm, TunedParams};
use crate::codec;
use crate::model::{make_problem, Placement, SparseProblem};
use crate::protocols::{run_threshold, run_topl, RunOptions, TrialOutcome};
use crate::Result;

/// One (algorithm, r) grid point, aggregated over all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub algorithm: String,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub l: Option<usize>,
    pub r: f64,
    /// Machines actually contacted, after capping at the fleet size.
    pub m_eff: u64,
    /// Tuned threshold before truncation; blank for the voting family.
    pub tau: Option<f64>,
    pub trials: u64,
    pub success_rate: f64,
    pub mean_total_bits: f64,
    pub std_total_bits: f64,
    pub r_necessary: f64,
    pub r_sufficient: f64,
    pub feasible: bool,
}

fn mark_infeasible(params: &mut TunedParams, reason: impl Into<String>) {
    params.feasible = false;
    if params.reason.is_none() {
        params.reason = Some(reason.into());
    }
}

/// The closed-form budgets diverge at the single-machine point, so grid
/// values at r = 1 are tuned just inside and the row is flagged.
const R_CLAMP: f64 = 1.0 - 1e-6;

/// Parameters the named algorithm wants at one grid point, before any
/// fleet capping. Voting-family specs need `l`; `VoteOne` assumes K = 1.
/// Both are enforced by [`SweepConfig::validate`], which callers outside
/// the sweep runner must apply themselves.
pub fn tune_algorithm(
    alg: AlgorithmSpec,
    d: usize,
    m: usize,
    k: usize,
    l: Option<usize>,
    r: f64,
    enc: EncodingMode,
) -> Result<TunedParams> {
    let need_l = || l.expect("validated by SweepConfig");
    let voting = |m_eff: u64, l: usize| TunedParams {
        algorithm: TunedAlgorithm::TopL,
        m_eff,
        threshold: None,
        l: Some(l),
        encoding: None,
        feasible: true,
        reason: None,
    };
    let clamped = r.min(R_CLAMP);
    let mut params = match alg {
        AlgorithmSpec::TopK => tuning::tune_topl(d, k, k, r)?,
        AlgorithmSpec::TopL => tuning::tune_topl(d, k, need_l(), r)?,
        AlgorithmSpec::ThresholdA => tuning::tune_threshold_a(d, k, r, m, enc)?,
        AlgorithmSpec::ThresholdB => tuning::tune_threshold_b(d, k, r, m, enc)?,
        AlgorithmSpec::VoteOne => voting(bounds::m0(d, clamped)?, 1),
        AlgorithmSpec::VoteList => {
            let l = need_l();
            let m_eff = bounds::m_kl(d, clamped, k, l)?;
            let mut p = voting(m_eff, l);
            // The guarantee also needs m_eff below (d-K)/L.
            if m_eff as f64 * l as f64 > (d - k) as f64 {
                mark_infeasible(&mut p, format!("m_eff = {m_eff} above (d-K)/L"));
            }
            p
        }
        AlgorithmSpec::ThresholdSmall => bounds::threshold_small(d, k, r)?,
        AlgorithmSpec::ThresholdMid => bounds::threshold_mid(d, k, r, m)?,
        AlgorithmSpec::ThresholdLarge => bounds::m_eff_large(d, k, clamped)?,
    };
    if r > R_CLAMP && matches!(alg, AlgorithmSpec::VoteOne | AlgorithmSpec::VoteList | AlgorithmSpec::ThresholdLarge) {
        mark_infeasible(&mut params, format!("r = {r} at the single-machine point"));
    }
    Ok(params)
}

/// Sufficient-SNR vertical for the family the algorithm belongs to;
/// constant along the r axis, so computed once per algorithm.
fn sufficient_for(alg: AlgorithmSpec, cfg: &SweepConfig) -> Result<f64> {
    let (family, l) = match alg {
        AlgorithmSpec::TopK => (TunedAlgorithm::TopL, Some(cfg.k)),
        AlgorithmSpec::TopL | AlgorithmSpec::VoteList => (TunedAlgorithm::TopL, cfg.l),
        AlgorithmSpec::VoteOne => (TunedAlgorithm::TopL, Some(1)),
        AlgorithmSpec::ThresholdA => (TunedAlgorithm::ThresholdA, None),
        AlgorithmSpec::ThresholdB => (TunedAlgorithm::ThresholdB, None),
        AlgorithmSpec::ThresholdSmall => (TunedAlgorithm::ThresholdSmall, None),
        AlgorithmSpec::ThresholdMid => (TunedAlgorithm::ThresholdMid, None),
        AlgorithmSpec::ThresholdLarge => (TunedAlgorithm::ThresholdLarge, None),
    };
    tuning::sufficient_snr(family, cfg.d, cfg.k, l, cfg.m, cfg.encoding)
}

#[cfg(feature = "parallel")]
fn map_trials<F>(trials: u64, run: F) -> Result<Vec<TrialOutcome>>
where
    F: Fn(u64) -> Result<TrialOutcome> + Sync + Send,
{
    use rayon::prelude::*;
    (0..trials).into_par_iter().map(run).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_trials<F>(trials: u64, run: F) -> Result<Vec<TrialOutcome>>
where
    F: Fn(u64) -> Result<TrialOutcome> + Sync + Send,
{
    (0..trials).map(run).collect()
}

fn run_one_trial(
    problem: &SparseProblem,
    params: &TunedParams,
    cfg: &SweepConfig,
    trial: u64,
) -> Result<TrialOutcome> {
    let opts = RunOptions {
        fleet: cfg.m,
        noise: cfg.noise,
        selection: cfg.selection,
        collect_trace: cfg.trace,
    };
    if params.algorithm.is_thresholding() {
        run_threshold(problem, params, cfg.master_seed, trial, &opts)
    } else {
        run_topl(problem, params, cfg.master_seed, trial, &opts)
    }
}

fn run_grid_point(
    cfg: &SweepConfig,
    alg: AlgorithmSpec,
    r: f64,
    r_necessary: f64,
    r_sufficient: f64,
) -> Result<ResultsRow> {
    let mut params = tune_algorithm(alg, cfg.d, cfg.m, cfg.k, cfg.l, r, cfg.encoding)?;
    if params.m_eff > cfg.m as u64 {
        let needed = params.m_eff;
        params.m_eff = cfg.m as u64;
        mark_infeasible(
            &mut params,
            format!("tuned m_eff = {needed} exceeds the fleet of {}", cfg.m),
        );
    }

    // A thresholding point is runnable only with a positive decoded
    // threshold; otherwise there is nothing to broadcast.
    let runnable = if params.algorithm.is_thresholding() {
        match (params.threshold, params.encoding) {
            (Some(tau), Some((u, p))) => {
                let usable = codec::trunc(tau, u, p).approx() > 0.0;
                if !usable {
                    mark_infeasible(&mut params, format!("threshold {tau} truncates to zero"));
                }
                usable
            }
            _ => {
                mark_infeasible(&mut params, "no real-valued threshold at this grid point");
                false
            }
        }
    } else {
        true
    };

    let (successes, sum_bits, sumsq_bits) = if runnable {
        let problem = make_problem(
            cfg.d,
            cfg.k,
            r,
            cfg.mu_profile.resolve(cfg.d, cfg.k, r)?,
            Placement::Seeded(cfg.master_seed),
        )?;
        let outcomes = map_trials(cfg.trials, |t| run_one_trial(&problem, &params, cfg, t))?;
        if cfg.trace {
            for (trial, out) in outcomes.iter().enumerate() {
                for rec in out.trace.iter().flatten() {
                    eprintln!("{}\t{r}\t{trial}\t{}", alg.name(), rec.tsv_line());
                }
            }
        }
        outcomes.iter().fold((0u64, 0u128, 0u128), |(s, b, q), out| {
            let bits = out.ledger.total_bits() as u128;
            (s + out.exact_recovery as u64, b + bits, q + bits * bits)
        })
    } else {
        (0, 0, 0)
    };

    let n = cfg.trials as f64;
    let mean = sum_bits as f64 / n;
    let var = (sumsq_bits as f64 / n - mean * mean).max(0.0);
    Ok(ResultsRow {
        algorithm: alg.name().to_string(),
        d: cfg.d,
        m: cfg.m,
        k: cfg.k,
        l: params.l,
        r,
        m_eff: params.m_eff,
        tau: params.threshold,
        trials: cfg.trials,
        success_rate: successes as f64 / n,
        mean_total_bits: mean,
        std_total_bits: var.sqrt(),
        r_necessary,
        r_sufficient,
        feasible: params.feasible,
    })
}

/// Full grid: algorithms in config order, then r values in grid order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<ResultsRow>> {
    cfg.validate()?;
    let r_necessary = tuning::necessary_snr(cfg.d, cfg.m)?;
    let mut rows = Vec::with_capacity(cfg.algorithms.len() * cfg.r_grid.len());
    for &alg in &cfg.algorithms {
        let r_sufficient = sufficient_for(alg, cfg)?;
        for &r in &cfg.r_grid {
            rows.push(run_grid_point(cfg, alg, r, r_necessary, r_sufficient)?);
        }
    }
    Ok(rows)
}

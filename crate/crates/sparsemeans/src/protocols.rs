//! Message-level execution of the estimation protocols.
//!
//! Every run is an explicit center/machine exchange: the center broadcasts
//! a small setup message, each contacted machine answers with indices (and,
//! in the averaging round, truncated values), and a ledger records the
//! exact bit cost of every message. Machines are simulated in-process; a
//! machine's observation is fully determined by (master_seed, trial_index,
//! machine_id), so the averaging round sees the same data the support
//! round did, and reruns are bit-identical.
//!
//! Accounting is payload-only: an empty reply costs zero bits, and no
//! framing overhead is modeled anywhere.

use std::time::{Duration, Instant};

use crate::bounds::{TunedAlgorithm, TunedParams};
use crate::codec::{self, BitString};
use crate::model::{sample_machine_with, NoiseMode, Sample, SeedSpec, SparseProblem};
use crate::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Support,
    Pi,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Support => "support_round",
            Phase::Pi => "pi_round",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

impl Direction {
    pub fn tag(self) -> &'static str {
        match self {
            Direction::Down => "down",
            Direction::Up => "up",
        }
    }
}

/// One ledger entry; a full trace is enough to rebuild the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub phase: Phase,
    pub direction: Direction,
    pub machine_id: u64,
    pub n_indices: usize,
    pub bits: u64,
}

impl TraceRecord {
    /// Tab-separated line: phase, direction, machine_id, n_indices, bits.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.phase.tag(),
            self.direction.tag(),
            self.machine_id,
            self.n_indices,
            self.bits
        )
    }
}

/// Bit totals per phase and direction. Only ever grows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BitLedger {
    support_down: u64,
    support_up: u64,
    pi_down: u64,
    pi_up: u64,
}

impl BitLedger {
    pub fn record(&mut self, phase: Phase, direction: Direction, bits: u64) {
        let slot = match (phase, direction) {
            (Phase::Support, Direction::Down) => &mut self.support_down,
            (Phase::Support, Direction::Up) => &mut self.support_up,
            (Phase::Pi, Direction::Down) => &mut self.pi_down,
            (Phase::Pi, Direction::Up) => &mut self.pi_up,
        };
        *slot += bits;
    }

    pub fn downlink_bits(&self) -> u64 {
        self.support_down + self.pi_down
    }

    pub fn uplink_bits(&self) -> u64 {
        self.support_up + self.pi_up
    }

    pub fn total_bits(&self) -> u64 {
        self.downlink_bits() + self.uplink_bits()
    }

    /// (downlink, uplink) for one phase.
    pub fn phase_bits(&self, phase: Phase) -> (u64, u64) {
        match phase {
            Phase::Support => (self.support_down, self.support_up),
            Phase::Pi => (self.pi_down, self.pi_up),
        }
    }

    /// Fold another ledger in (trial aggregation).
    pub fn absorb(&mut self, other: &BitLedger) {
        self.support_down += other.support_down;
        self.support_up += other.support_up;
        self.pi_down += other.pi_down;
        self.pi_up += other.pi_up;
    }
}

struct Recorder {
    ledger: BitLedger,
    trace: Option<Vec<TraceRecord>>,
}

impl Recorder {
    fn new(collect_trace: bool) -> Self {
        Recorder {
            ledger: BitLedger::default(),
            trace: collect_trace.then(Vec::new),
        }
    }

    fn record(
        &mut self,
        phase: Phase,
        direction: Direction,
        machine_id: u64,
        n_indices: usize,
        bits: u64,
    ) {
        self.ledger.record(phase, direction, bits);
        if let Some(t) = &mut self.trace {
            t.push(TraceRecord {
                phase,
                direction,
                machine_id,
                n_indices,
                bits,
            });
        }
    }
}

/// One machine-to-center message.
///
/// `bit_length` is always `|indices| * index_bits(d)` plus the payload
/// lengths; averaging-round replies carry only payloads (the index order
/// was fixed by the downlink announcement), so their `indices` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkMessage {
    pub machine_id: u64,
    pub indices: Vec<usize>,
    pub payloads: Option<Vec<BitString>>,
    pub bit_length: u64,
}

/// Indices of the `l` largest coordinates, ties at any rank going to the
/// lower index. The returned list is sorted ascending.
pub fn topl_reply(sample: &Sample, l: usize) -> Result<UplinkMessage> {
    let d = sample.values.len();
    if l < 1 || l > d {
        return Err(invalid(format!("need 1 <= L <= d, got L={l}, d={d}")));
    }
    let index_bits = codec::index_bits(d)? as u64;
    let mut order: Vec<usize> = (0..d).collect();
    let rank = |a: usize, b: usize| {
        sample.values[b]
            .total_cmp(&sample.values[a])
            .then(a.cmp(&b))
    };
    if l < d {
        order.select_nth_unstable_by(l - 1, |&a, &b| rank(a, b));
        order.truncate(l);
    }
    order.sort_unstable();
    Ok(UplinkMessage {
        machine_id: sample.machine_id,
        bit_length: l as u64 * index_bits,
        indices: order,
        payloads: None,
    })
}

/// Indices with value strictly above the decoded threshold. Possibly
/// empty, in which case the message costs nothing.
pub fn threshold_reply(sample: &Sample, tau_hat: f64) -> Result<UplinkMessage> {
    let d = sample.values.len();
    let index_bits = codec::index_bits(d)? as u64;
    let indices: Vec<usize> = (0..d).filter(|&j| sample.values[j] > tau_hat).collect();
    Ok(UplinkMessage {
        machine_id: sample.machine_id,
        bit_length: indices.len() as u64 * index_bits,
        indices,
        payloads: None,
    })
}

/// Per-coordinate vote counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTally {
    votes: Vec<u32>,
}

impl VoteTally {
    pub fn votes(&self) -> &[u32] {
        &self.votes
    }
}

pub fn tally(messages: &[UplinkMessage], d: usize) -> Result<VoteTally> {
    let mut votes = vec![0u32; d];
    for msg in messages {
        for &j in &msg.indices {
            if j >= d {
                return Err(invalid(format!(
                    "machine {} voted for index {j}, out of range for d={d}",
                    msg.machine_id
                )));
            }
            votes[j] += 1;
        }
    }
    Ok(VoteTally { votes })
}

/// The `k` indices with the most votes, vote ties going to the lower
/// index. Sorted ascending.
pub fn select_top_k(tally: &VoteTally, k: usize) -> Result<Vec<usize>> {
    let d = tally.votes.len();
    if k < 1 || k > d {
        return Err(invalid(format!("need 1 <= K <= d, got K={k}, d={d}")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    let rank = |a: usize, b: usize| tally.votes[b].cmp(&tally.votes[a]).then(a.cmp(&b));
    if k < d {
        order.select_nth_unstable_by(k - 1, |&a, &b| rank(a, b));
        order.truncate(k);
    }
    order.sort_unstable();
    Ok(order)
}

/// All indices with strictly more than `tau_c` votes; the selection rule
/// when only an upper bound on the sparsity is known.
pub fn select_by_vote_threshold(tally: &VoteTally, tau_c: f64) -> Result<Vec<usize>> {
    if !(tau_c > 0.0) {
        return Err(invalid(format!("need tau_c > 0, got {tau_c}")));
    }
    Ok((0..tally.votes.len())
        .filter(|&j| tally.votes[j] as f64 > tau_c)
        .collect())
}

/// Default vote cutoff for unknown sparsity: 4 ln d.
pub fn default_vote_threshold(d: usize) -> f64 {
    4.0 * (d as f64).ln()
}

/// How the center turns a tally into an estimated support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Keep the K top-voted indices (K known).
    TopK,
    /// Keep indices with more than tau_c votes; `None` means 4 ln d.
    VoteThreshold(Option<f64>),
}

/// Run-level knobs shared by the support-round executors.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Machines physically available; tuned m_eff may not exceed this.
    pub fleet: usize,
    pub noise: NoiseMode,
    pub selection: Selection,
    pub collect_trace: bool,
}

impl RunOptions {
    pub fn new(fleet: usize) -> Self {
        RunOptions {
            fleet,
            noise: NoiseMode::Gaussian,
            selection: Selection::TopK,
            collect_trace: false,
        }
    }
}

/// Result of one support-recovery round.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    /// Ascending index list.
    pub estimated_support: Vec<usize>,
    pub exact_recovery: bool,
    pub ledger: BitLedger,
    pub elapsed: Duration,
    pub trace: Option<Vec<TraceRecord>>,
}

fn check_budget(m_eff: u64, fleet: usize) -> Result<()> {
    if m_eff > fleet as u64 {
        return Err(Error::MachineBudget {
            needed: m_eff as usize,
            available: fleet,
        });
    }
    if m_eff == 0 {
        return Err(invalid("need m_eff >= 1"));
    }
    Ok(())
}

fn select_support(
    tally: &VoteTally,
    problem: &SparseProblem,
    selection: Selection,
) -> Result<Vec<usize>> {
    match selection {
        Selection::TopK => select_top_k(tally, problem.k()),
        Selection::VoteThreshold(custom) => {
            let tau_c = custom.unwrap_or_else(|| default_vote_threshold(problem.d()));
            select_by_vote_threshold(tally, tau_c)
        }
    }
}

fn finish_trial(
    problem: &SparseProblem,
    estimated_support: Vec<usize>,
    rec: Recorder,
    start: Instant,
) -> TrialOutcome {
    let exact_recovery = estimated_support == problem.support();
    TrialOutcome {
        estimated_support,
        exact_recovery,
        ledger: rec.ledger,
        elapsed: start.elapsed(),
        trace: rec.trace,
    }
}

/// Voting scheme, end to end: announce L, collect each machine's top-L
/// list, select from the tally.
pub fn run_topl(
    problem: &SparseProblem,
    params: &TunedParams,
    master_seed: u64,
    trial_index: u64,
    opts: &RunOptions,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    if params.algorithm != TunedAlgorithm::TopL {
        return Err(invalid("run_topl needs TopL params"));
    }
    let l = params.l.ok_or_else(|| invalid("voting params carry no L"))?;
    check_budget(params.m_eff, opts.fleet)?;
    let setup_bits = codec::index_bits(l + 1)? as u64;
    let mut rec = Recorder::new(opts.collect_trace);
    let mut messages = Vec::with_capacity(params.m_eff as usize);
    for machine in 1..=params.m_eff {
        rec.record(Phase::Support, Direction::Down, machine, 0, setup_bits);
        let seed = SeedSpec::new(master_seed, trial_index, machine);
        let msg = topl_reply(&sample_machine_with(problem, seed, opts.noise), l)?;
        rec.record(Phase::Support, Direction::Up, machine, msg.indices.len(), msg.bit_length);
        messages.push(msg);
    }
    let tally = tally(&messages, problem.d())?;
    let estimated = select_support(&tally, problem, opts.selection)?;
    Ok(finish_trial(problem, estimated, rec, start))
}

/// Thresholding scheme, end to end: encode tau once, broadcast it, collect
/// exceedance lists, select from the tally.
pub fn run_threshold(
    problem: &SparseProblem,
    params: &TunedParams,
    master_seed: u64,
    trial_index: u64,
    opts: &RunOptions,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    if !params.algorithm.is_thresholding() {
        return Err(invalid("run_threshold needs thresholding params"));
    }
    let tau = params
        .threshold
        .ok_or_else(|| invalid("thresholding params carry no threshold"))?;
    let (u, p) = params
        .encoding
        .ok_or_else(|| invalid("thresholding params carry no encoding"))?;
    check_budget(params.m_eff, opts.fleet)?;
    // The machines only ever see the decoded value.
    let tau_hat = codec::trunc(tau, u, p).approx();
    if tau_hat <= 0.0 {
        return Err(Error::DegenerateThreshold(tau_hat));
    }
    let setup_bits = (u + p + 2) as u64;
    let mut rec = Recorder::new(opts.collect_trace);
    let mut messages = Vec::with_capacity(params.m_eff as usize);
    for machine in 1..=params.m_eff {
        rec.record(Phase::Support, Direction::Down, machine, 0, setup_bits);
        let seed = SeedSpec::new(master_seed, trial_index, machine);
        let msg = threshold_reply(&sample_machine_with(problem, seed, opts.noise), tau_hat)?;
        rec.record(Phase::Support, Direction::Up, machine, msg.indices.len(), msg.bit_length);
        messages.push(msg);
    }
    let tally = tally(&messages, problem.d())?;
    let estimated = select_support(&tally, problem, opts.selection)?;
    Ok(finish_trial(problem, estimated, rec, start))
}

/// Result of the averaging round.
#[derive(Debug, Clone)]
pub struct PiOutcome {
    /// Zero outside the announced support.
    pub mu_hat: Vec<f64>,
    /// Squared distance to the problem's true mean vector.
    pub squared_error: f64,
    pub ledger: BitLedger,
    pub elapsed: Duration,
    pub trace: Option<Vec<TraceRecord>>,
}

/// Averaging round: announce the estimated support to all `machines`
/// machines, collect truncated values for those coordinates, average in
/// machine order.
///
/// Machines regenerate the same observation the support round drew for
/// them (the seed stream is keyed by machine, not by round). Only `noise`
/// and `collect_trace` are read from `opts`; the machine count is the
/// explicit argument because this round always contacts the whole fleet.
/// An empty support is valid and exchanges no bits.
pub fn run_pi(
    problem: &SparseProblem,
    estimated_support: &[usize],
    machines: usize,
    u: u32,
    p: u32,
    master_seed: u64,
    trial_index: u64,
    opts: &RunOptions,
) -> Result<PiOutcome> {
    let start = Instant::now();
    if machines < 1 {
        return Err(invalid("need at least one machine"));
    }
    let d = problem.d();
    let mut support = estimated_support.to_vec();
    support.sort_unstable();
    if support.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("estimated support has duplicate indices"));
    }
    if support.last().is_some_and(|&j| j >= d) {
        return Err(invalid("estimated support index out of range"));
    }
    let mut rec = Recorder::new(opts.collect_trace);
    let mut sums = vec![0.0f64; support.len()];
    if !support.is_empty() {
        let announce_bits = support.len() as u64 * codec::index_bits(d)? as u64;
        let reply_bits = support.len() as u64 * (u + p + 2) as u64;
        for machine in 1..=machines as u64 {
            rec.record(Phase::Pi, Direction::Down, machine, support.len(), announce_bits);
            let seed = SeedSpec::new(master_seed, trial_index, machine);
            let sample = sample_machine_with(problem, seed, opts.noise);
            for (acc, &j) in sums.iter_mut().zip(&support) {
                *acc += codec::trunc(sample.values[j], u, p).approx();
            }
            rec.record(Phase::Pi, Direction::Up, machine, 0, reply_bits);
        }
    }
    let mut mu_hat = vec![0.0f64; d];
    for (&j, &s) in support.iter().zip(&sums) {
        mu_hat[j] = s / machines as f64;
    }
    let squared_error = problem
        .mu()
        .iter()
        .zip(&mu_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(PiOutcome {
        mu_hat,
        squared_error,
        ledger: rec.ledger,
        elapsed: start.elapsed(),
        trace: rec.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{m_eff_large, pi_encoding};
    use crate::model::mu_min;

    fn sample_of(values: Vec<f64>) -> Sample {
        Sample {
            machine_id: 1,
            values,
        }
    }

    fn fixed_problem(d: usize, r: f64, support: Vec<usize>) -> SparseProblem {
        let floor = mu_min(d, support.len(), r).unwrap();
        let mut mu = vec![0.0; d];
        for &j in &support {
            mu[j] = floor;
        }
        SparseProblem::from_parts(d, r, support, mu).unwrap()
    }

    fn voting_params(m_eff: u64, l: usize) -> TunedParams {
        TunedParams {
            algorithm: TunedAlgorithm::TopL,
            m_eff,
            threshold: None,
            l: Some(l),
            encoding: None,
            feasible: true,
            reason: None,
        }
    }

    fn threshold_params(m_eff: u64, tau: f64, encoding: (u32, u32)) -> TunedParams {
        TunedParams {
            algorithm: TunedAlgorithm::ThresholdA,
            m_eff,
            threshold: Some(tau),
            l: None,
            encoding: Some(encoding),
            feasible: true,
            reason: None,
        }
    }

    #[test]
    fn topl_reply_picks_largest() {
        let msg = topl_reply(&sample_of(vec![5.0, 1.0, 3.0]), 2).unwrap();
        assert_eq!(msg.indices, vec![0, 2]);
        assert_eq!(msg.bit_length, 2 * 2);

        // Tie at the boundary rank goes to the lower index.
        let tied = topl_reply(&sample_of(vec![5.0, 3.0, 3.0, 1.0]), 2).unwrap();
        assert_eq!(tied.indices, vec![0, 1]);

        let all = topl_reply(&sample_of(vec![0.0, -1.0, 2.0]), 3).unwrap();
        assert_eq!(all.indices, vec![0, 1, 2]);

        assert!(topl_reply(&sample_of(vec![1.0, 2.0]), 0).is_err());
        assert!(topl_reply(&sample_of(vec![1.0, 2.0]), 3).is_err());
    }

    #[test]
    fn threshold_reply_is_strict() {
        let msg = threshold_reply(&sample_of(vec![0.5, 2.0, 2.0]), 2.0).unwrap();
        assert!(msg.indices.is_empty());
        assert_eq!(msg.bit_length, 0);

        let msg = threshold_reply(&sample_of(vec![0.5, 2.0, 2.5]), 2.0).unwrap();
        assert_eq!(msg.indices, vec![2]);
        assert_eq!(msg.bit_length, 2);
    }

    #[test]
    fn zero_threshold_on_null_problem_sends_half() {
        // Each coordinate clears tau_hat = 0 with probability exactly 1/2.
        let d = 1000;
        let problem = SparseProblem::null(d);
        let machines = 30u64;
        let mut total = 0usize;
        for machine in 1..=machines {
            let s = sample_machine_with(
                &problem,
                SeedSpec::new(99, 0, machine),
                NoiseMode::Gaussian,
            );
            total += threshold_reply(&s, 0.0).unwrap().indices.len();
        }
        let mean = total as f64 / machines as f64;
        let se = (d as f64 / 4.0 / machines as f64).sqrt();
        assert!((mean - d as f64 / 2.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn tally_counts_and_validates() {
        let msgs = vec![
            UplinkMessage { machine_id: 1, indices: vec![3, 5], payloads: None, bit_length: 6 },
            UplinkMessage { machine_id: 2, indices: vec![3, 7], payloads: None, bit_length: 6 },
            UplinkMessage { machine_id: 3, indices: vec![3, 5], payloads: None, bit_length: 6 },
        ];
        let t = tally(&msgs, 8).unwrap();
        assert_eq!(t.votes(), &[0, 0, 0, 3, 0, 2, 0, 1]);

        // Vote conservation.
        let cast: usize = msgs.iter().map(|m| m.indices.len()).sum();
        let counted: u32 = t.votes().iter().sum();
        assert_eq!(counted as usize, cast);

        assert_eq!(tally(&[], 4).unwrap().votes(), &[0, 0, 0, 0]);
        assert!(tally(&msgs, 5).is_err(), "index 7 out of range");
    }

    #[test]
    fn top_k_selection_and_ties() {
        let msgs = vec![
            UplinkMessage { machine_id: 1, indices: vec![3, 5], payloads: None, bit_length: 6 },
            UplinkMessage { machine_id: 2, indices: vec![3, 7], payloads: None, bit_length: 6 },
            UplinkMessage { machine_id: 3, indices: vec![3, 5], payloads: None, bit_length: 6 },
        ];
        let t = tally(&msgs, 8).unwrap();
        assert_eq!(select_top_k(&t, 1).unwrap(), vec![3]);
        assert_eq!(select_top_k(&t, 2).unwrap(), vec![3, 5]);

        let flat = tally(&[], 6).unwrap();
        assert_eq!(select_top_k(&flat, 2).unwrap(), vec![0, 1]);
        assert!(select_top_k(&flat, 0).is_err());
        assert!(select_top_k(&flat, 7).is_err());
    }

    #[test]
    fn vote_threshold_selection() {
        let flat = tally(&[], 6).unwrap();
        assert!(select_by_vote_threshold(&flat, 1.0).unwrap().is_empty());
        assert!(select_by_vote_threshold(&flat, 0.0).is_err());

        // 19 votes clears 4 ln 100 ~ 18.42; 18 does not.
        let msgs: Vec<UplinkMessage> = (0..19)
            .map(|i| UplinkMessage {
                machine_id: i + 1,
                indices: if i < 18 { vec![2, 7] } else { vec![7] },
                payloads: None,
                bit_length: 0,
            })
            .collect();
        let t = tally(&msgs, 100).unwrap();
        assert_eq!(t.votes()[2], 18);
        assert_eq!(t.votes()[7], 19);
        let picked = select_by_vote_threshold(&t, default_vote_threshold(100)).unwrap();
        assert_eq!(picked, vec![7]);
    }

    #[test]
    fn vote_threshold_recovers_separated_fixture() {
        // Support votes at 2 tau_c, noise strictly below tau_c.
        let d = 100;
        let tau_c = default_vote_threshold(d);
        let strong = (2.0 * tau_c).ceil() as usize;
        let weak = tau_c.floor() as usize;
        let msgs: Vec<UplinkMessage> = (0..strong)
            .map(|i| UplinkMessage {
                machine_id: i as u64 + 1,
                indices: if i < weak { vec![4, 31, 60] } else { vec![4, 31] },
                payloads: None,
                bit_length: 0,
            })
            .collect();
        let t = tally(&msgs, d).unwrap();
        let picked = select_by_vote_threshold(&t, tau_c).unwrap();
        assert_eq!(picked, vec![4, 31]);
    }

    #[test]
    fn noise_free_voting_run() {
        let problem = fixed_problem(16, 0.5, vec![5, 9]);
        let params = voting_params(3, 2);
        let mut opts = RunOptions::new(8);
        opts.noise = NoiseMode::Zero;
        opts.collect_trace = true;
        let out = run_topl(&problem, &params, 7, 0, &opts).unwrap();
        assert!(out.exact_recovery);
        assert_eq!(out.estimated_support, vec![5, 9]);
        // Setup names one of L+1 = 3 list lengths in 2 bits; replies carry
        // L indices of 4 bits each.
        assert_eq!(out.ledger.phase_bits(Phase::Support), (3 * 2, 3 * 2 * 4));
        assert_eq!(out.ledger.phase_bits(Phase::Pi), (0, 0));
        assert_eq!(out.trace.as_ref().unwrap().len(), 6);
    }

    #[test]
    fn voting_run_is_deterministic() {
        let problem = fixed_problem(64, 0.5, vec![5, 40]);
        let params = voting_params(12, 3);
        let opts = RunOptions::new(16);
        let a = run_topl(&problem, &params, 42, 3, &opts).unwrap();
        let b = run_topl(&problem, &params, 42, 3, &opts).unwrap();
        assert_eq!(a.estimated_support, b.estimated_support);
        assert_eq!(a.exact_recovery, b.exact_recovery);
        assert_eq!(a.ledger, b.ledger);
        // A different trial draws different noise.
        let c = run_topl(&problem, &params, 42, 4, &opts).unwrap();
        assert_eq!(c.ledger.uplink_bits(), a.ledger.uplink_bits(), "fixed-size replies");
    }

    #[test]
    fn budget_is_enforced() {
        let problem = fixed_problem(16, 0.5, vec![3]);
        let params = voting_params(9, 1);
        let err = run_topl(&problem, &params, 1, 0, &RunOptions::new(8)).unwrap_err();
        assert!(matches!(err, Error::MachineBudget { needed: 9, available: 8 }));
    }

    #[test]
    fn ledger_replays_from_trace() {
        let problem = fixed_problem(64, 0.6, vec![10, 50]);
        let params = threshold_params(20, mu_min(64, 2, 0.6).unwrap() * 0.9, (1, 6));
        let mut opts = RunOptions::new(32);
        opts.collect_trace = true;
        let out = run_threshold(&problem, &params, 5, 2, &opts).unwrap();
        let mut replay = BitLedger::default();
        for rec in out.trace.as_ref().unwrap() {
            replay.record(rec.phase, rec.direction, rec.bits);
        }
        assert_eq!(replay, out.ledger);

        let first = &out.trace.as_ref().unwrap()[0];
        assert_eq!(first.tsv_line(), "support_round\tdown\t1\t0\t9");
    }

    #[test]
    fn noise_free_threshold_sends_exactly_the_support() {
        let d = 64;
        let problem = fixed_problem(d, 0.6, vec![10, 50]);
        let tau = problem.mu()[10] * 0.9;
        let params = threshold_params(6, tau, (1, 6));
        let mut opts = RunOptions::new(8);
        opts.noise = NoiseMode::Zero;
        let out = run_threshold(&problem, &params, 5, 0, &opts).unwrap();
        assert!(out.exact_recovery);
        // Every machine replies with exactly the K = 2 support indices.
        assert_eq!(out.ledger.phase_bits(Phase::Support), (6 * 9, 6 * 2 * 6));
    }

    #[test]
    fn empty_replies_cost_nothing() {
        let d = 64;
        let problem = fixed_problem(d, 0.6, vec![10, 50]);
        // Way above every observation; adaptive U tracks the threshold,
        // so nothing wraps.
        let params = threshold_params(6, 100.0, (6, 6));
        let mut opts = RunOptions::new(8);
        opts.noise = NoiseMode::Zero;
        // Top-K would force K picks from an all-zero tally; the vote
        // cutoff reports the honest empty answer.
        opts.selection = Selection::VoteThreshold(None);
        let out = run_threshold(&problem, &params, 5, 0, &opts).unwrap();
        assert!(!out.exact_recovery);
        assert!(out.estimated_support.is_empty());
        assert_eq!(out.ledger.uplink_bits(), 0);
        assert_eq!(out.ledger.downlink_bits(), 6 * (6 + 6 + 2));
    }

    #[test]
    fn truncated_threshold_stays_below_tau() {
        let d = 1024;
        let p = codec::index_bits(d).unwrap();
        for i in 1..80 {
            let tau = i as f64 * 0.1;
            let u = tau.log2().floor().max(0.0) as u32;
            let tau_hat = codec::trunc(tau, u, p).approx();
            assert!(tau_hat <= tau);
            assert!(tau - tau_hat < (2.0f64).powi(-(p as i32)), "tau={tau}");
        }
    }

    #[test]
    fn degenerate_threshold_is_an_error() {
        let problem = fixed_problem(64, 0.6, vec![10]);
        // 0.05 truncates to zero at (U, P) = (2, 3).
        let params = threshold_params(6, 0.05, (2, 3));
        let err = run_threshold(&problem, &params, 5, 0, &RunOptions::new(8)).unwrap_err();
        assert!(matches!(err, Error::DegenerateThreshold(t) if t == 0.0));
    }

    #[test]
    fn raising_threshold_never_grows_replies() {
        let problem = fixed_problem(256, 0.5, vec![100]);
        let sample =
            sample_machine_with(&problem, SeedSpec::new(11, 0, 1), NoiseMode::Gaussian);
        let mut prev = usize::MAX;
        for i in 0..30 {
            let tau_hat = -1.0 + i as f64 * 0.2;
            let n = threshold_reply(&sample, tau_hat).unwrap().indices.len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn unknown_sparsity_selection_recovers_without_k() {
        let d = 100;
        let problem = fixed_problem(d, 0.9, vec![17, 71]);
        let tau = problem.mu()[17] * 0.8;
        let params = threshold_params(50, tau, (1, 7));
        let mut opts = RunOptions::new(64);
        opts.noise = NoiseMode::Zero;
        opts.selection = Selection::VoteThreshold(None);
        let out = run_threshold(&problem, &params, 3, 0, &opts).unwrap();
        // 50 votes for each support index clears 4 ln 100 ~ 18.4.
        assert!(out.exact_recovery);
    }

    // With the large-fleet prescription at d - K = 1000, support votes
    // concentrate far above 4 ln d and noise votes far below, so the
    // failure events have probability at most K/d and 1/d.
    #[test]
    fn vote_counts_respect_tail_regime() {
        let (d, k, r) = (1001usize, 1usize, 0.5);
        let params = m_eff_large(d, k, r).unwrap();
        assert!(params.feasible);
        let m_eff = params.m_eff;
        let (u, p) = params.encoding.unwrap();
        let tau_hat = codec::trunc(params.threshold.unwrap(), u, p).approx();
        let problem = fixed_problem(d, r, vec![500]);
        let tau_c = default_vote_threshold(d);

        let trials = 200u64;
        let mut support_low = 0u32;
        let mut noise_high = 0u32;
        for trial in 0..trials {
            let msgs: Vec<UplinkMessage> = (1..=m_eff)
                .map(|machine| {
                    let s = sample_machine_with(
                        &problem,
                        SeedSpec::new(2718, trial, machine),
                        NoiseMode::Gaussian,
                    );
                    threshold_reply(&s, tau_hat).unwrap()
                })
                .collect();
            let t = tally(&msgs, d).unwrap();
            if (t.votes()[500] as f64) < tau_c {
                support_low += 1;
            }
            let max_noise =
                (0..d).filter(|&j| j != 500).map(|j| t.votes()[j]).max().unwrap();
            if max_noise as f64 > tau_c {
                noise_high += 1;
            }
        }
        let n = trials as f64;
        let bound_support = k as f64 / d as f64;
        let bound_noise = 1.0 / d as f64;
        let se_s = (bound_support * (1.0 - bound_support) / n).sqrt();
        let se_n = (bound_noise * (1.0 - bound_noise) / n).sqrt();
        assert!(
            support_low as f64 / n <= bound_support + 3.0 * se_s,
            "support fell below 4 ln d in {support_low}/{trials} trials"
        );
        assert!(
            noise_high as f64 / n <= bound_noise + 3.0 * se_n,
            "noise exceeded 4 ln d in {noise_high}/{trials} trials"
        );
    }

    #[test]
    fn averaging_round_exact_on_noiseless_support() {
        let d = 1024;
        let problem = fixed_problem(d, 0.5, vec![7, 300, 900]);
        let (u, p) = pi_encoding(d, problem.mu_max()).unwrap();
        let mut opts = RunOptions::new(8);
        opts.noise = NoiseMode::Zero;
        let out = run_pi(&problem, problem.support(), 8, u, p, 1, 0, &opts).unwrap();
        for &j in problem.support() {
            assert!((out.mu_hat[j] - problem.mu()[j]).abs() < (2.0f64).powi(-(p as i32)));
        }
        for j in (0..d).filter(|j| !problem.support().contains(j)) {
            assert_eq!(out.mu_hat[j], 0.0);
        }
        // 8 machines, 3 indices announced (10 bits each), 3 payloads of
        // U + P + 2 bits coming back.
        let announce = 8 * 3 * 10;
        let reply = 8 * 3 * (u as u64 + p as u64 + 2);
        assert_eq!(out.ledger.phase_bits(Phase::Pi), (announce, reply));
    }

    #[test]
    fn averaging_round_empty_support() {
        let problem = fixed_problem(256, 0.5, vec![100]);
        let opts = RunOptions::new(8);
        let out = run_pi(&problem, &[], 8, 5, 8, 1, 0, &opts).unwrap();
        assert!(out.mu_hat.iter().all(|&v| v == 0.0));
        let norm2: f64 = problem.mu().iter().map(|v| v * v).sum();
        assert!((out.squared_error - norm2).abs() < 1e-12);
        assert_eq!(out.ledger.total_bits(), 0);
    }

    #[test]
    fn averaging_round_validates_support() {
        let problem = fixed_problem(64, 0.5, vec![10]);
        let opts = RunOptions::new(8);
        assert!(run_pi(&problem, &[3, 3], 8, 5, 8, 1, 0, &opts).is_err());
        assert!(run_pi(&problem, &[64], 8, 5, 8, 1, 0, &opts).is_err());
        assert!(run_pi(&problem, &[1], 0, 5, 8, 1, 0, &opts).is_err());
    }

    #[test]
    fn averaging_round_is_deterministic() {
        let problem = fixed_problem(128, 0.5, vec![10, 90]);
        let opts = RunOptions::new(8);
        let a = run_pi(&problem, problem.support(), 8, 4, 12, 77, 5, &opts).unwrap();
        let b = run_pi(&problem, problem.support(), 8, 4, 12, 77, 5, &opts).unwrap();
        assert_eq!(a.mu_hat, b.mu_hat);
        assert_eq!(a.squared_error, b.squared_error);
    }

    // Truncation at P = 20 leaves a bias of at most 2^-20, far below the
    // Monte Carlo resolution, so the estimator mean must sit on mu.
    #[test]
    fn averaging_round_is_unbiased_up_to_truncation() {
        let d = 64;
        let machines = 8;
        let problem = fixed_problem(d, 0.5, vec![5, 20, 40]);
        let opts = RunOptions::new(machines);
        let trials = 10_000u64;
        let mut mean = vec![0.0f64; d];
        for trial in 0..trials {
            let out =
                run_pi(&problem, problem.support(), machines, 3, 20, 909, trial, &opts).unwrap();
            for (m, v) in mean.iter_mut().zip(&out.mu_hat) {
                *m += v;
            }
        }
        for v in &mut mean {
            *v /= trials as f64;
        }
        let se = 1.0 / ((machines as u64 * trials) as f64).sqrt();
        for &j in problem.support() {
            assert!(
                (mean[j] - problem.mu()[j]).abs() < 3.0 * se,
                "coordinate {j}: mean {} vs mu {}",
                mean[j],
                problem.mu()[j]
            );
        }
    }

    #[test]
    fn trace_collection_is_opt_in() {
        let problem = fixed_problem(16, 0.5, vec![3]);
        let out =
            run_topl(&problem, &voting_params(2, 1), 1, 0, &RunOptions::new(4)).unwrap();
        assert!(out.trace.is_none());
    }
}

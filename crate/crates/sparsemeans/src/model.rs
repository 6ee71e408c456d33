//! Problem instances and machine observations.
//!
//! Each of the `M` machines holds one observation `x_i = mu + eps_i` of the
//! same `K`-sparse nonnegative mean vector, with i.i.d. standard normal
//! noise (multiple raw samples per machine reduce to this via their mean).
//! Signal strength is parameterized by `r` through
//! `mu_min = sqrt(2 r ln(d - K))`: the smallest nonzero entry at which
//! recovery transitions from impossible to easy as `r` sweeps (0, 1].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{invalid, Result};

/// Smallest nonzero magnitude `sqrt(2 r ln(d - K))` for the given geometry.
pub fn mu_min(d: usize, k: usize, r: f64) -> Result<f64> {
    if k < 1 || d <= k {
        return Err(invalid(format!("need d > K >= 1, got d={d}, K={k}")));
    }
    if d - k < 2 {
        return Err(invalid(format!("need d - K >= 2, got d={d}, K={k}")));
    }
    if !(r >= 0.0) {
        return Err(invalid(format!("need r >= 0, got r={r}")));
    }
    Ok((2.0 * r * ((d - k) as f64).ln()).sqrt())
}

/// Ground truth for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseProblem {
    d: usize,
    r: f64,
    /// Strictly increasing nonzero positions; length is the sparsity K.
    support: Vec<usize>,
    mu: Vec<f64>,
}

/// How the nonzero entries are filled in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuProfile {
    /// Every nonzero entry equals `mu_min` exactly: the worst case all the
    /// recovery guarantees are stated for.
    Minimal,
    /// Nonzero entries drawn uniformly from `[mu_min, hi]`.
    Uniform { hi: f64 },
}

/// Where the support lives.
#[derive(Debug, Clone)]
pub enum Placement {
    Fixed(Vec<usize>),
    /// Uniformly random K-subset of `0..d` derived from this seed.
    Seeded(u64),
}

impl SparseProblem {
    /// Validating constructor; permits K = 0 for null fixtures.
    pub fn from_parts(d: usize, r: f64, support: Vec<usize>, mu: Vec<f64>) -> Result<Self> {
        if mu.len() != d {
            return Err(invalid("mu length differs from d"));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("support indices must be strictly increasing"));
        }
        if support.last().is_some_and(|&j| j >= d) {
            return Err(invalid("support index out of range"));
        }
        // r = 0 puts no floor on the magnitudes, so skip the geometry
        // checks mu_min would impose and accept any nonnegative entries.
        let floor = if support.is_empty() || r == 0.0 {
            0.0
        } else {
            mu_min(d, support.len(), r)?
        };
        for (j, &v) in mu.iter().enumerate() {
            let on_support = support.binary_search(&j).is_ok();
            if on_support && !(v > 0.0 && v >= floor) {
                return Err(invalid(format!("mu[{j}] = {v} below mu_min = {floor}")));
            }
            if !on_support && v != 0.0 {
                return Err(invalid(format!("mu[{j}] = {v} nonzero off support")));
            }
        }
        Ok(SparseProblem { d, r, support, mu })
    }

    /// All-zero mean, used as a pure-noise fixture.
    pub fn null(d: usize) -> Self {
        SparseProblem {
            d,
            r: 0.0,
            support: Vec::new(),
            mu: vec![0.0; d],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_max(&self) -> f64 {
        self.mu.iter().copied().fold(0.0, f64::max)
    }
}

/// Builds a K-sparse problem; `d > 2K` keeps headroom for the vote-based
/// protocols, whose parameter ranges require `L < (d - K) / 2`.
pub fn make_problem(
    d: usize,
    k: usize,
    r: f64,
    profile: MuProfile,
    placement: Placement,
) -> Result<SparseProblem> {
    if d <= 2 * k {
        return Err(invalid(format!("need d > 2K, got d={d}, K={k}")));
    }
    if !(r > 0.0) {
        return Err(invalid(format!("need r > 0, got r={r}")));
    }
    let floor = mu_min(d, k, r)?;
    // The problem stream serves placement first, then entry magnitudes, so
    // a fixed support with a random profile still needs a seed to draw from.
    let mut rng = match &placement {
        Placement::Seeded(seed) => Some(SeedSpec::problem(*seed).rng()),
        Placement::Fixed(_) => None,
    };
    let mut support = match placement {
        Placement::Fixed(s) => {
            if s.len() != k {
                return Err(invalid("fixed support length differs from K"));
            }
            s
        }
        Placement::Seeded(_) => {
            rand::seq::index::sample(rng.as_mut().unwrap(), d, k).into_vec()
        }
    };
    support.sort_unstable();
    if support.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("fixed support contains duplicates"));
    }
    let mut mu = vec![0.0; d];
    match profile {
        MuProfile::Minimal => {
            for &j in &support {
                mu[j] = floor;
            }
        }
        MuProfile::Uniform { hi } => {
            if hi < floor {
                return Err(invalid(format!("uniform hi = {hi} below mu_min = {floor}")));
            }
            let rng = rng
                .as_mut()
                .ok_or_else(|| invalid("uniform profile needs seeded placement"))?;
            for &j in &support {
                mu[j] = rng.gen_range(floor..=hi);
            }
        }
    }
    SparseProblem::from_parts(d, r, support, mu)
}

/// Identifies one machine's noise stream within one trial.
///
/// The derived generator is a pure function of the three fields, so trials
/// and machines can be simulated in any order (or in parallel) and still
/// produce identical observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
    pub machine_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64, machine_id: u64) -> Self {
        SeedSpec {
            master_seed,
            trial_index,
            machine_id,
        }
    }

    /// Stream reserved for problem construction; machines are numbered
    /// from 1, so (trial 0, machine 0) never collides with noise streams.
    pub fn problem(master_seed: u64) -> Self {
        SeedSpec::new(master_seed, 0, 0)
    }

    /// Counter-derived generator: the master seed keys the cipher and
    /// (trial, machine) selects its stream.
    pub fn rng(&self) -> ChaCha8Rng {
        assert!(
            self.trial_index < (1 << 32) && self.machine_id < (1 << 32),
            "trial_index and machine_id must fit in 32 bits"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream((self.trial_index << 32) | self.machine_id);
        rng
    }
}

/// One machine's observation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub machine_id: u64,
    pub values: Vec<f64>,
}

/// Whether observations carry Gaussian noise or are exact copies of mu
/// (the latter makes protocol runs fully deterministic for fixtures).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Gaussian,
    Zero,
}

/// Draws `x = mu + eps` with `eps ~ N(0, I)` from the seed's stream.
pub fn sample_machine(problem: &SparseProblem, seed: SeedSpec) -> Sample {
    sample_machine_with(problem, seed, NoiseMode::Gaussian)
}

pub fn sample_machine_with(problem: &SparseProblem, seed: SeedSpec, noise: NoiseMode) -> Sample {
    let values = match noise {
        NoiseMode::Gaussian => {
            let mut rng = seed.rng();
            problem
                .mu()
                .iter()
                .map(|&m| m + rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        NoiseMode::Zero => problem.mu().to_vec(),
    };
    Sample {
        machine_id: seed.machine_id,
        values,
    }
}

//! Sweep configuration: a flat key=value text format and its in-memory
//! form.
//!
//! A config file is UTF-8 text, one `key = value` pair per line, `#`
//! starting a comment, no sections. Example:
//!
//! ```text
//! # small-fleet comparison at modest dimension
//! algorithms = topk, topl, threshold-a, threshold-b
//! d = 4096
//! m = 64
//! k = 1
//! l = 10
//! r_points = 20
//! trials = 50
//! seed = 7
//! encoding = compact
//! out = comparison.csv
//! plot = comparison_plot.py
//! ```
//!
//! `algorithms`, `d`, `m` and `k` are required. The SNR axis is either an
//! explicit `r_grid` list or `r_points = N` for N evenly spaced points
//! ending at 1; with neither, the default is 40 points.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bounds::tuning::EncodingMode;
use crate::model::{mu_min, MuProfile, NoiseMode};
use crate::protocols::Selection;
use crate::{Error, Result};

/// Points in the default SNR grid.
pub const DEFAULT_R_POINTS: usize = 40;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// What to tune and run at each grid point.
///
/// The first four pick their parameters by the empirical separation
/// search; the rest use the conservative closed-form prescriptions:
/// guaranteed voting fleets for a single spike (`VoteOne`) or a general
/// K via top-L lists (`VoteList`), and the thresholding rules for small,
/// moderate and large fleets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmSpec {
    TopK,
    TopL,
    ThresholdA,
    ThresholdB,
    VoteOne,
    VoteList,
    ThresholdSmall,
    ThresholdMid,
    ThresholdLarge,
}

impl AlgorithmSpec {
    pub const ALL: [AlgorithmSpec; 9] = [
        AlgorithmSpec::TopK,
        AlgorithmSpec::TopL,
        AlgorithmSpec::ThresholdA,
        AlgorithmSpec::ThresholdB,
        AlgorithmSpec::VoteOne,
        AlgorithmSpec::VoteList,
        AlgorithmSpec::ThresholdSmall,
        AlgorithmSpec::ThresholdMid,
        AlgorithmSpec::ThresholdLarge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmSpec::TopK => "topk",
            AlgorithmSpec::TopL => "topl",
            AlgorithmSpec::ThresholdA => "threshold-a",
            AlgorithmSpec::ThresholdB => "threshold-b",
            AlgorithmSpec::VoteOne => "vote-one",
            AlgorithmSpec::VoteList => "vote-list",
            AlgorithmSpec::ThresholdSmall => "threshold-small",
            AlgorithmSpec::ThresholdMid => "threshold-mid",
            AlgorithmSpec::ThresholdLarge => "threshold-large",
        }
    }

    /// Whether tuning needs an explicit list length L.
    pub fn needs_l(self) -> bool {
        matches!(self, AlgorithmSpec::TopL | AlgorithmSpec::VoteList)
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let canon = s
            .trim()
            .to_ascii_lowercase()
            .replace(['_', '-'], "");
        AlgorithmSpec::ALL
            .into_iter()
            .find(|a| a.name().replace('-', "") == canon)
            .ok_or_else(|| config_err(format!("unknown algorithm '{s}'")))
    }
}

/// Signal-height profile, with the uniform upper end given as a multiple
/// of the minimal height so one setting stays valid across the whole SNR
/// grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileSpec {
    Minimal,
    Uniform { factor: f64 },
}

impl ProfileSpec {
    pub fn resolve(self, d: usize, k: usize, r: f64) -> Result<MuProfile> {
        match self {
            ProfileSpec::Minimal => Ok(MuProfile::Minimal),
            ProfileSpec::Uniform { factor } => Ok(MuProfile::Uniform {
                hi: factor * mu_min(d, k, r)?,
            }),
        }
    }
}

impl FromStr for ProfileSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("minimal") {
            return Ok(ProfileSpec::Minimal);
        }
        if let Some(rest) = s.strip_prefix("uniform:") {
            let factor: f64 = rest
                .trim()
                .parse()
                .map_err(|_| config_err(format!("bad uniform factor '{rest}'")))?;
            if !(factor >= 1.0) {
                return Err(config_err(format!(
                    "uniform factor must be >= 1, got {factor}"
                )));
            }
            return Ok(ProfileSpec::Uniform { factor });
        }
        Err(config_err(format!(
            "unknown mu_profile '{s}' (expected 'minimal' or 'uniform:<factor>')"
        )))
    }
}

pub fn parse_selection(s: &str) -> Result<Selection> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("topk") {
        return Ok(Selection::TopK);
    }
    if s.eq_ignore_ascii_case("votes") {
        return Ok(Selection::VoteThreshold(None));
    }
    if let Some(rest) = s.strip_prefix("votes:") {
        let cut: f64 = rest
            .trim()
            .parse()
            .map_err(|_| config_err(format!("bad vote cutoff '{rest}'")))?;
        if !(cut > 0.0) {
            return Err(config_err(format!("vote cutoff must be positive, got {cut}")));
        }
        return Ok(Selection::VoteThreshold(Some(cut)));
    }
    Err(config_err(format!(
        "unknown selection '{s}' (expected 'topk', 'votes' or 'votes:<cutoff>')"
    )))
}

pub fn parse_noise(s: &str) -> Result<NoiseMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gaussian" => Ok(NoiseMode::Gaussian),
        "zero" => Ok(NoiseMode::Zero),
        other => Err(config_err(format!("unknown noise mode '{other}'"))),
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(config_err(format!("expected a boolean, got '{other}'"))),
    }
}

/// N evenly spaced SNR values i/N, i = 1..=N; the last is exactly 1.
pub fn even_r_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| i as f64 / points as f64).collect()
}

/// Everything a sweep needs. Field meanings match the config keys.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub algorithms: Vec<AlgorithmSpec>,
    pub d: usize,
    /// Fleet size: machines physically available per trial.
    pub m: usize,
    pub k: usize,
    pub l: Option<usize>,
    pub r_grid: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
    pub mu_profile: ProfileSpec,
    /// Threshold encoding for the empirically tuned thresholding variants.
    /// The closed-form prescriptions carry their own encodings.
    pub encoding: EncodingMode,
    pub noise: NoiseMode,
    pub selection: Selection,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub trace: bool,
}

impl SweepConfig {
    /// Single-algorithm starting point with documented defaults:
    /// 100 trials, seed 0, the 40-point grid, minimal heights, Gaussian
    /// noise, top-K selection, compact threshold encoding.
    pub fn new(algorithm: AlgorithmSpec, d: usize, m: usize, k: usize) -> Self {
        SweepConfig {
            algorithms: vec![algorithm],
            d,
            m,
            k,
            l: None,
            r_grid: even_r_grid(DEFAULT_R_POINTS),
            trials: 100,
            master_seed: 0,
            mu_profile: ProfileSpec::Minimal,
            encoding: EncodingMode::Compact,
            noise: NoiseMode::Gaussian,
            selection: Selection::TopK,
            out: None,
            plot: None,
            trace: false,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut algorithms: Option<Vec<AlgorithmSpec>> = None;
        let mut d: Option<usize> = None;
        let mut m: Option<usize> = None;
        let mut k: Option<usize> = None;
        let mut l: Option<usize> = None;
        let mut r_grid: Option<Vec<f64>> = None;
        let mut r_points: Option<usize> = None;
        let mut trials: u64 = 100;
        let mut master_seed: u64 = 0;
        let mut mu_profile = ProfileSpec::Minimal;
        let mut encoding = EncodingMode::Compact;
        let mut noise = NoiseMode::Gaussian;
        let mut selection = Selection::TopK;
        let mut out: Option<PathBuf> = None;
        let mut plot: Option<PathBuf> = None;
        let mut trace = false;

        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {lineno}: expected key = value")))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            if value.is_empty() {
                return Err(config_err(format!("line {lineno}: empty value for '{key}'")));
            }
            if !seen.insert(key.clone()) {
                return Err(config_err(format!("line {lineno}: duplicate key '{key}'")));
            }
            let bad_int =
                |what: &str| config_err(format!("line {lineno}: bad {what} '{value}'"));
            match key.as_str() {
                "algorithms" => {
                    let parsed: Result<Vec<_>> =
                        value.split(',').map(AlgorithmSpec::from_str).collect();
                    algorithms = Some(parsed?);
                }
                "d" => d = Some(value.parse().map_err(|_| bad_int("integer"))?),
                "m" => m = Some(value.parse().map_err(|_| bad_int("integer"))?),
                "k" => k = Some(value.parse().map_err(|_| bad_int("integer"))?),
                "l" => l = Some(value.parse().map_err(|_| bad_int("integer"))?),
                "r_grid" => {
                    let parsed: std::result::Result<Vec<f64>, _> =
                        value.split(',').map(|v| v.trim().parse()).collect();
                    r_grid = Some(parsed.map_err(|_| bad_int("r list"))?);
                }
                "r_points" => r_points = Some(value.parse().map_err(|_| bad_int("integer"))?),
                "trials" => trials = value.parse().map_err(|_| bad_int("integer"))?,
                "master_seed" | "seed" => {
                    master_seed = value.parse().map_err(|_| bad_int("integer"))?;
                }
                "mu_profile" => mu_profile = value.parse()?,
                "encoding" => {
                    encoding = value
                        .parse()
                        .map_err(|e| config_err(format!("line {lineno}: {e}")))?;
                }
                "noise" => noise = parse_noise(value)?,
                "selection" => selection = parse_selection(value)?,
                "out" => out = Some(PathBuf::from(value)),
                "plot" => plot = Some(PathBuf::from(value)),
                "trace" => trace = parse_bool(value)?,
                other => {
                    return Err(config_err(format!("line {lineno}: unknown key '{other}'")));
                }
            }
        }

        if r_grid.is_some() && r_points.is_some() {
            return Err(config_err("give either r_grid or r_points, not both"));
        }
        let r_grid = r_grid.unwrap_or_else(|| {
            even_r_grid(r_points.unwrap_or(DEFAULT_R_POINTS))
        });

        let require = |name: &str| config_err(format!("missing required key '{name}'"));
        let config = SweepConfig {
            algorithms: algorithms.ok_or_else(|| require("algorithms"))?,
            d: d.ok_or_else(|| require("d"))?,
            m: m.ok_or_else(|| require("m"))?,
            k: k.ok_or_else(|| require("k"))?,
            l,
            r_grid,
            trials,
            master_seed,
            mu_profile,
            encoding,
            noise,
            selection,
            out,
            plot,
            trace,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(config_err("no algorithms selected"));
        }
        if self.k < 1 {
            return Err(config_err("need K >= 1"));
        }
        if self.d <= 2 * self.k {
            return Err(config_err(format!(
                "need d > 2K, got d={}, K={}",
                self.d, self.k
            )));
        }
        if self.m < 1 {
            return Err(config_err("need M >= 1"));
        }
        if self.trials < 1 {
            return Err(config_err("need trials >= 1"));
        }
        if self.r_grid.is_empty() {
            return Err(config_err("empty r grid"));
        }
        for &r in &self.r_grid {
            if !(r > 0.0 && r <= 1.0) {
                return Err(config_err(format!("r values must lie in (0, 1], got {r}")));
            }
        }
        if let Some(l) = self.l {
            if l < self.k {
                return Err(config_err(format!(
                    "need L >= K, got L={l}, K={}",
                    self.k
                )));
            }
        }
        for &alg in &self.algorithms {
            if alg.needs_l() && self.l.is_none() {
                return Err(config_err(format!("algorithm '{alg}' needs the key 'l'")));
            }
            if alg == AlgorithmSpec::VoteOne && self.k != 1 {
                return Err(config_err("vote-one covers only K = 1"));
            }
        }
        Ok(())
    }
}

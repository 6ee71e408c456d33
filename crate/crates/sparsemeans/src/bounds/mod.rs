//! Closed-form machine counts, thresholds, risk bounds, and send
//! probabilities for the voting and thresholding schemes.
//!
//! Everything here is a direct evaluation of a formula; the searches that
//! pick parameters empirically live in [`tuning`], the raw tail utilities
//! in [`tail`]. Ceilings are applied exactly once, at the outermost level.

pub mod tail;
pub mod tuning;

use crate::model::mu_min;
use crate::{invalid, Error, Result};
use tail::{gaussian_tail, LnFactorialTable};

const SQRT_2PI: f64 = 2.5066282746310002;

/// Which tuning rule produced a parameter set.
///
/// `TopL`, `ThresholdA` and `ThresholdB` come from the empirical searches;
/// the remaining three are the closed-form prescriptions for the small,
/// intermediate and large machine-count regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TunedAlgorithm {
    TopL,
    ThresholdA,
    ThresholdB,
    ThresholdSmall,
    ThresholdMid,
    ThresholdLarge,
}

impl TunedAlgorithm {
    pub fn is_thresholding(self) -> bool {
        !matches!(self, TunedAlgorithm::TopL)
    }
}

/// A complete run configuration: how many machines to contact and what to
/// send them.
///
/// `threshold` is present for every thresholding variant whenever the
/// defining formula yields a real number; `l` is present only for the
/// voting scheme. `feasible = false` means the producing rule's guarantee
/// does not cover these inputs; the fields still carry the documented
/// fallback values so a simulation can proceed and report honestly.
#[derive(Debug, Clone, PartialEq)]
pub struct TunedParams {
    pub algorithm: TunedAlgorithm,
    pub m_eff: u64,
    pub threshold: Option<f64>,
    pub l: Option<usize>,
    /// (U, P) used to encode the threshold in the setup message.
    pub encoding: Option<(u32, u32)>,
    pub feasible: bool,
    pub reason: Option<String>,
}

impl TunedParams {
    fn flag(mut self, reason: impl Into<String>) -> Self {
        self.feasible = false;
        if self.reason.is_none() {
            self.reason = Some(reason.into());
        }
        self
    }
}

pub(crate) fn check_geometry(d: usize, k: usize) -> Result<()> {
    if k < 1 || d <= k || d - k < 2 {
        return Err(invalid(format!("need d > K >= 1 with d - K >= 2, got d={d}, K={k}")));
    }
    Ok(())
}

fn check_topl_range(d: usize, k: usize, l: usize) -> Result<()> {
    check_geometry(d, k)?;
    if l < k || 2 * l >= d - k {
        return Err(invalid(format!("need K <= L < (d-K)/2, got d={d}, K={k}, L={l}")));
    }
    Ok(())
}

fn check_snr(r: f64) -> Result<()> {
    if !(r >= 0.0) {
        return Err(invalid(format!("need r >= 0, got r={r}")));
    }
    if r >= 1.0 {
        return Err(Error::SingleMachineRegime(r));
    }
    Ok(())
}

/// Machines needed for the 1-sparse voting scheme to succeed with
/// probability 1 - 1/d - e^3/d^3. Sublinear in d: proportional to
/// d^{(1-sqrt r)^2} up to polylogarithmic factors, and divergent as
/// r -> 1 although the estimation problem only gets easier there; the
/// constants are not optimized, so practical runs prefer the empirical
/// tuning rules.
pub fn m0(d: usize, r: f64) -> Result<u64> {
    if d < 2 {
        return Err(invalid(format!("need d >= 2, got d={d}")));
    }
    check_snr(r)?;
    let ln_d = (d as f64).ln();
    let s = 1.0 - r.sqrt();
    let inner = SQRT_2PI * std::f64::consts::E * (2.0 * s * s * ln_d + 1.0)
        / (s * (2.0 * ln_d).sqrt())
        * (s * s * ln_d).exp();
    Ok((inner.max(1.0) * 8.0 * ln_d).ceil() as u64)
}

/// Threshold level at which on average L - K + 1 of the d - K noise
/// coordinates survive: a = sqrt(2 ln((d-K)/(L-K+1))).
pub fn a_quantity(d: usize, k: usize, l: usize) -> Result<f64> {
    check_topl_range(d, k, l)?;
    Ok((2.0 * ((d - k) as f64 / (l - k + 1) as f64).ln()).sqrt())
}

/// Margin between the noise level `a` and the weakest signal: can be
/// negative, in which case the signal clears the bar more often than not.
pub fn b_quantity(d: usize, k: usize, l: usize, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(invalid(format!("need r >= 0, got r={r}")));
    }
    Ok(a_quantity(d, k, l)? - (2.0 * r * ((d - k) as f64).ln()).sqrt())
}

/// Machines needed for the general K-sparse voting scheme with list
/// length L. The guarantee additionally requires the returned count to be
/// at most min(M, (d-K)/L), which only the caller can check.
pub fn m_kl(d: usize, r: f64, k: usize, l: usize) -> Result<u64> {
    check_snr(r)?;
    let b = b_quantity(d, k, l, r)?;
    let dk = (d - k) as f64;
    let inner = if b <= 0.0 {
        8.0
    } else {
        let expo = ((1.0 - ((l - k + 1) as f64).ln() / dk.ln()).sqrt() - r.sqrt()).powi(2);
        (4.0 * SQRT_2PI * (b * b + 1.0) / b * (expo * dk.ln()).exp()).max(8.0)
    };
    Ok((inner * 8.0 * (d as f64).ln()).ceil() as u64)
}

/// Thresholding prescription for the small-machine-count regime:
/// ceil(16 ln d) machines with the threshold right at the weakest signal.
/// Guarantee needs d >= 16, ln 5 / ln(d-K) < r < 1, and M >= m_eff.
pub fn threshold_small(d: usize, k: usize, r: f64) -> Result<TunedParams> {
    check_geometry(d, k)?;
    let tau = mu_min(d, k, r)?;
    let params = TunedParams {
        algorithm: TunedAlgorithm::ThresholdSmall,
        m_eff: (16.0 * (d as f64).ln()).ceil() as u64,
        threshold: Some(tau),
        l: None,
        encoding: tuning::EncodingMode::Adaptive.resolve(tau, d).ok(),
        feasible: true,
        reason: None,
    };
    if d < 16 {
        return Ok(params.flag(format!("d = {d} below 16")));
    }
    let r_floor = 5f64.ln() / ((d - k) as f64).ln();
    if r <= r_floor {
        return Ok(params.flag(format!("r = {r} not above ln5/ln(d-K) = {r_floor:.6}")));
    }
    if r >= 1.0 {
        return Ok(params.flag(format!("r = {r} at or above the single-machine point")));
    }
    Ok(params)
}

/// Thresholding prescription for the intermediate regime: contact all M
/// machines with a threshold that grows with M. Real-valued only when M
/// reaches 32 sqrt(pi) ln^1.5 d; the guarantee needs the stronger window
/// 32 sqrt(e pi) ln^1.5 d <= M <= d plus the SNR condition returned in
/// `reason` when violated.
pub fn threshold_mid(d: usize, k: usize, r: f64, m: usize) -> Result<TunedParams> {
    check_geometry(d, k)?;
    if m < 1 {
        return Err(invalid("need M >= 1"));
    }
    if !(r >= 0.0) {
        return Err(invalid(format!("need r >= 0, got r={r}")));
    }
    let ln_d = (d as f64).ln();
    let scale = 32.0 * std::f64::consts::PI.sqrt() * ln_d.powf(1.5);
    let arg = m as f64 / scale;
    let tau = if arg >= 1.0 {
        Some(mu_min(d, k, r)? + (2.0 * arg.ln()).sqrt())
    } else {
        None
    };
    let params = TunedParams {
        algorithm: TunedAlgorithm::ThresholdMid,
        m_eff: m as u64,
        threshold: tau,
        l: None,
        encoding: tau.and_then(|t| tuning::EncodingMode::Adaptive.resolve(t, d).ok()),
        feasible: true,
        reason: None,
    };
    if d < 15 {
        return Ok(params.flag(format!("d = {d} below 15")));
    }
    let window_lo = scale * std::f64::consts::E.sqrt();
    if (m as f64) < window_lo {
        return Ok(params.flag(format!("M = {m} below the window floor {window_lo:.2}")));
    }
    if m > d {
        return Ok(params.flag(format!("M = {m} above d = {d}")));
    }
    if r >= 1.0 {
        return Ok(params.flag(format!("r = {r} at or above the single-machine point")));
    }
    // SNR condition: the threshold must not outrun the signal.
    let t1 = (2.0 * (5.0 * m as f64 / (SQRT_2PI * 4.0 * ln_d)).ln()).sqrt();
    let t2 = (2.0 * arg.ln()).sqrt();
    let r_floor = (t1 - t2 + 1.0 / d as f64).powi(2) / (2.0 * ((d - k) as f64).ln());
    if r <= r_floor {
        return Ok(params.flag(format!("r = {r} not above the regime floor {r_floor:.6}")));
    }
    Ok(params)
}

/// Thresholding prescription for the large-machine-count regime: a fixed
/// threshold sqrt(2 ln(d-K)) and a machine count proportional to
/// (d-K)^{(1-sqrt r)^2} ln d. Guarantee needs d - K >= 20,
/// (ln 10 / (2 ln(d-K)))^2 < r < 1, and M >= m_eff.
pub fn m_eff_large(d: usize, k: usize, r: f64) -> Result<TunedParams> {
    check_geometry(d, k)?;
    check_snr(r)?;
    let ln_dk = ((d - k) as f64).ln();
    let s = 1.0 - r.sqrt();
    let m_eff = (8.0 * SQRT_2PI * (s * s * 2.0 * ln_dk + 1.0) / (s * (2.0 * ln_dk).sqrt())
        * (s * s * ln_dk).exp()
        * (d as f64).ln())
    .ceil() as u64;
    let tau = (2.0 * ln_dk).sqrt();
    let params = TunedParams {
        algorithm: TunedAlgorithm::ThresholdLarge,
        m_eff,
        threshold: Some(tau),
        l: None,
        encoding: tuning::EncodingMode::Adaptive.resolve(tau, d).ok(),
        feasible: true,
        reason: None,
    };
    if d - k < 20 {
        return Ok(params.flag(format!("d - K = {} below 20", d - k)));
    }
    let r_floor = (10f64.ln() / (2.0 * ln_dk)).powi(2);
    if r <= r_floor {
        return Ok(params.flag(format!("r = {r} not above {r_floor:.6}")));
    }
    Ok(params)
}

/// Benchmark risk of the ideal keep-or-kill estimator that knows which
/// coordinates are worth averaging: sum_j min(sigma^2/M, mu_j^2).
pub fn oracle_risk(mu: &[f64], m: u64, sigma2: f64) -> Result<f64> {
    if m < 1 {
        return Err(invalid("need M >= 1"));
    }
    if !(sigma2 >= 0.0) {
        return Err(invalid(format!("need sigma^2 >= 0, got {sigma2}")));
    }
    let per_coord = sigma2 / m as f64;
    Ok(mu.iter().map(|&v| per_coord.min(v * v)).sum())
}

/// Upper bound on the squared error of the averaging round when it is fed
/// the true support: (K/M)(1 + 1/d + 1/d^2) + 2 K mu_min^2 / d.
pub fn pi_risk_bound(d: usize, k: usize, m: usize, r: f64) -> Result<f64> {
    if d < 5 {
        return Err(invalid(format!("need d >= 5, got d={d}")));
    }
    if m < 1 {
        return Err(invalid("need M >= 1"));
    }
    let df = d as f64;
    let mm = mu_min(d, k, r)?;
    Ok(k as f64 / m as f64 * (1.0 + 1.0 / df + 1.0 / (df * df)) + 2.0 * k as f64 * mm * mm / df)
}

/// Lower bound on the probability that a machine's top-L list contains a
/// fixed support index whose signal sits at the floor: the signal clears
/// level b while at most L - K noise coordinates clear level a.
pub fn p_send_support_topl(d: usize, k: usize, l: usize, r: f64) -> Result<f64> {
    let a = a_quantity(d, k, l)?;
    let b = b_quantity(d, k, l, r)?;
    let n = (d - k) as u64;
    let cdf = LnFactorialTable::new(n).binomial_cdf(n, gaussian_tail(a), (l - k) as i64);
    Ok(gaussian_tail(b) * cdf)
}

/// Matching upper bound for a fixed non-support index: of the L slots,
/// K p_s go to support coordinates on average, the rest spread uniformly
/// over the d - K noise coordinates.
pub fn p_send_nonsupport_topl(d: usize, k: usize, l: usize, p_s: f64) -> Result<f64> {
    check_topl_range(d, k, l)?;
    if !(0.0..=1.0).contains(&p_s) {
        return Err(invalid(format!("need 0 <= p_s <= 1, got {p_s}")));
    }
    Ok((l as f64 - k as f64 * p_s) / (d - k) as f64)
}

/// Probability that a coordinate with mean mu_k clears the threshold.
pub fn p_send_support_th(tau: f64, mu_k: f64) -> f64 {
    gaussian_tail(tau - mu_k)
}

/// Probability that a pure-noise coordinate clears the decoded threshold.
pub fn p_send_nonsupport_th(tau_hat: f64) -> f64 {
    gaussian_tail(tau_hat)
}

/// Default precisions for the averaging round: P covers one index worth of
/// fractional bits, U covers the largest plausible observation, taking the
/// smallest gamma in {1/2, 1, 2} with mu_max < d^gamma.
pub fn pi_encoding(d: usize, mu_max: f64) -> Result<(u32, u32)> {
    let p = crate::codec::index_bits(d)?;
    let df = d as f64;
    for gamma in [0.5, 1.0, 2.0] {
        let cap = df.powf(gamma);
        if mu_max < cap {
            let u = (cap + (4.0 * (gamma + 1.0) * df.ln()).sqrt()).log2().floor();
            return Ok((u as u32, p));
        }
    }
    Err(invalid(format!("mu_max = {mu_max} is not polynomially bounded in d = {d}")))
}

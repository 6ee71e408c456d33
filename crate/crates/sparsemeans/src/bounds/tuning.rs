//! Empirical parameter selection.
//!
//! The closed-form machine counts in the parent module carry loose
//! constants, so actual runs pick their parameters by searching for the
//! smallest configuration that still separates support votes from noise
//! votes. The separation test compares the vote count of the weakest
//! support index against the expected noise vote count inflated by
//! ln(d-K)/ln ln(d-K); a threshold (or machine count) passes when the
//! probability of falling below that bar is under 1/d.

use crate::bounds::tail::{gaussian_tail, LnFactorialTable};
use crate::bounds::{check_geometry, p_send_support_topl, TunedAlgorithm, TunedParams};
use crate::codec;
use crate::model::mu_min;
use crate::{invalid, Result};
use std::fmt;
use std::str::FromStr;

/// Step of the threshold search grid.
pub const GRID_STEP: f64 = 1e-3;
/// Width below which the local threshold refinement stops.
pub const REFINE_TOL: f64 = 1e-6;
/// Width below which the bisections over r stop.
pub const R_TOL: f64 = 1e-4;

/// How the threshold is quantized for the setup message.
///
/// `Adaptive` sizes the integer part to fit the threshold itself and uses
/// index-resolution fractional bits; `Compact` is a fixed low-precision
/// (U, P) = (2, 3) layout that keeps the setup message at 7 bits. The two
/// are not reconciled anywhere, so the choice is a run-time configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingMode {
    Adaptive,
    Compact,
}

impl EncodingMode {
    /// (U, P) for encoding the threshold `tau` in d dimensions.
    ///
    /// In `Adaptive` mode U is clamped at zero for thresholds below 1 so the
    /// field keeps at least its sign and unit bit.
    pub fn resolve(self, tau: f64, d: usize) -> Result<(u32, u32)> {
        match self {
            EncodingMode::Compact => Ok((2, 3)),
            EncodingMode::Adaptive => {
                if !tau.is_finite() || tau < 0.0 {
                    return Err(invalid(format!("threshold {tau} not encodable")));
                }
                let u = tau.log2().floor().max(0.0) as u32;
                Ok((u, codec::index_bits(d)?))
            }
        }
    }

    /// The value the machines actually compare against: `tau` pushed
    /// through its own quantization. Thresholds above `2^{U+1}` wrap (high
    /// bits are dropped), which in Compact mode makes the separation
    /// test fail there; the searches below rely on that being harmless.
    pub fn decode(self, tau: f64, d: usize) -> Result<f64> {
        let (u, p) = self.resolve(tau, d)?;
        Ok(codec::trunc(tau, u, p).approx())
    }
}

impl FromStr for EncodingMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive" => Ok(EncodingMode::Adaptive),
            "compact" => Ok(EncodingMode::Compact),
            _ => Err(invalid(format!("unknown encoding '{s}' (expected adaptive|compact)"))),
        }
    }
}

impl fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodingMode::Adaptive => "adaptive",
            EncodingMode::Compact => "compact",
        })
    }
}

/// Inflation applied to the expected noise vote count before comparing it
/// against support votes: ln(d-K)/ln ln(d-K).
pub fn vote_margin_factor(d: usize, k: usize) -> Result<f64> {
    check_geometry(d, k)?;
    if d - k < 3 {
        return Err(invalid(format!("need d - K >= 3, got {}", d - k)));
    }
    let l = ((d - k) as f64).ln();
    Ok(l / l.ln())
}

/// The separation test: with m_eff machines and threshold t, is the
/// probability that the weakest support index collects fewer votes than
/// ln(d-K)/ln ln(d-K) times the expected noise votes below 1/d?
///
/// Support votes are Binomial(m_eff, Q(t - mu_min)) with the exact t (the
/// bound direction the guarantee needs), noise votes use the decoded
/// threshold t_hat <= t that machines really compare against.
pub fn emp_th(d: usize, k: usize, r: f64, m_eff: u64, t: f64, enc: EncodingMode) -> Result<bool> {
    let mu = mu_min(d, k, r)?;
    let table = LnFactorialTable::new(m_eff);
    separation_holds(&table, d, mu, vote_margin_factor(d, k)?, m_eff, t, enc)
}

fn separation_holds(
    table: &LnFactorialTable,
    d: usize,
    mu: f64,
    factor: f64,
    m_eff: u64,
    t: f64,
    enc: EncodingMode,
) -> Result<bool> {
    let t_hat = enc.decode(t, d)?;
    let theta = m_eff as f64 * gaussian_tail(t_hat) * factor;
    let p_s = gaussian_tail(t - mu);
    let below = table.binomial_cdf(m_eff, p_s, theta.ceil() as i64 - 1);
    Ok(below < 1.0 / d as f64)
}

/// Highest threshold passing the separation test: a descending scan of the
/// grid [0, mu_min + sqrt(2 ln(d-K))] at step 1e-3, then a local bisection
/// to 1e-6 inside the first satisfying step. The test is not monotone in t
/// (the noise bar moves in quantized jumps), so the scan cannot be replaced
/// by a global bisection.
fn highest_satisfying_t(
    table: &LnFactorialTable,
    d: usize,
    k: usize,
    mu: f64,
    m_eff: u64,
    enc: EncodingMode,
) -> Result<Option<f64>> {
    let factor = vote_margin_factor(d, k)?;
    let t_max = mu + (2.0 * ((d - k) as f64).ln()).sqrt();
    let mut pass = None;
    let mut i = (t_max / GRID_STEP).floor() as i64;
    while i >= 0 {
        let t = i as f64 * GRID_STEP;
        if separation_holds(table, d, mu, factor, m_eff, t, enc)? {
            pass = Some(t);
            break;
        }
        i -= 1;
    }
    let Some(grid_t) = pass else {
        return Ok(None);
    };
    let mut hi = grid_t + GRID_STEP;
    if hi > t_max {
        if separation_holds(table, d, mu, factor, m_eff, t_max, enc)? {
            return Ok(Some(t_max));
        }
        hi = t_max;
    }
    let mut lo = grid_t;
    while hi - lo > REFINE_TOL {
        let mid = 0.5 * (lo + hi);
        if separation_holds(table, d, mu, factor, m_eff, mid, enc)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

pub(crate) fn topl_m_eff(p_s: f64, factor: f64) -> u64 {
    ((1.0 / p_s) * factor).ceil().max(1.0) as u64
}

/// Voting-scheme tuning: enough machines that the weakest support index
/// expects ln(d-K)/ln ln(d-K) votes.
pub fn tune_topl(d: usize, k: usize, l: usize, r: f64) -> Result<TunedParams> {
    let p_s = p_send_support_topl(d, k, l, r)?;
    let factor = vote_margin_factor(d, k)?;
    let mut params = TunedParams {
        algorithm: TunedAlgorithm::TopL,
        m_eff: 1,
        threshold: None,
        l: Some(l),
        encoding: None,
        feasible: true,
        reason: None,
    };
    if p_s <= 0.0 {
        params.feasible = false;
        params.reason = Some("support send probability underflowed to zero".into());
        return Ok(params);
    }
    params.m_eff = topl_m_eff(p_s, factor);
    Ok(params)
}

/// Thresholding tuning, variant A: use all M machines and pick the highest
/// threshold passing the separation test. When no threshold passes at this
/// r, fall back to the threshold of the smallest feasible r (see
/// [`threshold_r_min`]) and mark the result infeasible.
pub fn tune_threshold_a(
    d: usize,
    k: usize,
    r: f64,
    m: usize,
    enc: EncodingMode,
) -> Result<TunedParams> {
    if m < 1 {
        return Err(invalid("need M >= 1"));
    }
    let mu = mu_min(d, k, r)?;
    let table = LnFactorialTable::new(m as u64);
    match highest_satisfying_t(&table, d, k, mu, m as u64, enc)? {
        Some(tau) => Ok(TunedParams {
            algorithm: TunedAlgorithm::ThresholdA,
            m_eff: m as u64,
            threshold: Some(tau),
            l: None,
            encoding: Some(enc.resolve(tau, d)?),
            feasible: true,
            reason: None,
        }),
        None => fallback_params(d, k, r, m, enc, TunedAlgorithm::ThresholdA),
    }
}

fn fallback_params(
    d: usize,
    k: usize,
    r: f64,
    m: usize,
    enc: EncodingMode,
    algorithm: TunedAlgorithm,
) -> Result<TunedParams> {
    let (tau, reason) = match threshold_r_min(d, k, m, enc) {
        Ok((r_min, t_min)) => (
            t_min,
            format!("no threshold separates support from noise at r = {r}; the smallest feasible r is {r_min:.4}, using its threshold"),
        ),
        Err(_) => (
            (2.0 * ((d - k) as f64).ln()).sqrt(),
            format!("no threshold separates support from noise at any r <= 1 (r = {r} requested)"),
        ),
    };
    Ok(TunedParams {
        algorithm,
        m_eff: m as u64,
        threshold: Some(tau),
        l: None,
        encoding: Some(enc.resolve(tau, d)?),
        feasible: false,
        reason: Some(reason),
    })
}

/// Thresholding tuning, variant B: when variant A's threshold reaches
/// sqrt(2 ln((d-K)/K)), pin the threshold there and shrink the machine
/// count to the smallest one still passing the separation test. Below that
/// point variant B coincides with variant A.
pub fn tune_threshold_b(
    d: usize,
    k: usize,
    r: f64,
    m: usize,
    enc: EncodingMode,
) -> Result<TunedParams> {
    let a = tune_threshold_a(d, k, r, m, enc)?;
    let relabeled = |p: TunedParams| TunedParams {
        algorithm: TunedAlgorithm::ThresholdB,
        ..p
    };
    if !a.feasible {
        return Ok(relabeled(a));
    }
    let gate = (2.0 * ((d - k) as f64 / k as f64).ln()).sqrt();
    if a.threshold.unwrap() < gate {
        return Ok(relabeled(a));
    }
    let mu = mu_min(d, k, r)?;
    let factor = vote_margin_factor(d, k)?;
    let table = LnFactorialTable::new(m as u64);
    let pass = |m_eff: u64| separation_holds(&table, d, mu, factor, m_eff, gate, enc);
    if !pass(m as u64)? {
        // The full fleet fails at the pinned threshold even though variant
        // A passed above it; keep A's parameters rather than degrade.
        return Ok(relabeled(a));
    }
    // The satisfying set is upward-closed in m_eff, so binary search finds
    // its bottom; the walk-down below guards against any numeric exception
    // to that closure.
    let (mut lo, mut hi) = (1u64, m as u64);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pass(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut m_eff = hi;
    while m_eff > 1 && pass(m_eff - 1)? {
        m_eff -= 1;
    }
    Ok(TunedParams {
        algorithm: TunedAlgorithm::ThresholdB,
        m_eff,
        threshold: Some(gate),
        l: None,
        encoding: Some(enc.resolve(gate, d)?),
        feasible: true,
        reason: None,
    })
}

/// Smallest r at which some threshold passes the separation test, found by
/// bisection to 1e-4, together with the highest passing threshold there.
/// Satisfiability is monotone in r: raising r only lifts the support send
/// probability while the noise side is unchanged.
pub fn threshold_r_min(d: usize, k: usize, m: usize, enc: EncodingMode) -> Result<(f64, f64)> {
    if m < 1 {
        return Err(invalid("need M >= 1"));
    }
    check_geometry(d, k)?;
    let table = LnFactorialTable::new(m as u64);
    let exists = |r: f64| -> Result<Option<f64>> {
        highest_satisfying_t(&table, d, k, mu_min(d, k, r)?, m as u64, enc)
    };
    let Some(t_at_one) = exists(1.0)? else {
        return Err(invalid(format!(
            "no threshold separates support from noise for any r <= 1 at d={d}, K={k}, M={m}"
        )));
    };
    let (mut lo, mut hi, mut t_min) = (0.0f64, 1.0f64, t_at_one);
    while hi - lo > R_TOL {
        let mid = 0.5 * (lo + hi);
        match exists(mid)? {
            Some(t) => {
                hi = mid;
                t_min = t;
            }
            None => lo = mid,
        }
    }
    Ok((hi, t_min))
}

/// Smallest r at which the usable machines (the tuned count, capped at the
/// fleet size M) give the weakest support index at least 2 expected votes.
/// Bisection to 1e-4; clamped to 1 when even r = 1 falls short.
pub fn topl_sufficient_snr(d: usize, k: usize, l: usize, m: usize) -> Result<f64> {
    if m < 1 {
        return Err(invalid("need M >= 1"));
    }
    let factor = vote_margin_factor(d, k)?;
    let enough = |r: f64| -> Result<bool> {
        let p_s = p_send_support_topl(d, k, l, r)?;
        if p_s <= 0.0 {
            return Ok(false);
        }
        Ok(topl_m_eff(p_s, factor).min(m as u64) as f64 * p_s >= 2.0)
    };
    if !enough(1.0)? {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > R_TOL {
        let mid = 0.5 * (lo + hi);
        if enough(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// SNR above which the named scheme is empirically reliable: the expected-
/// votes bound for the voting family, the smallest separable r for the
/// thresholding family.
pub fn sufficient_snr(
    algorithm: TunedAlgorithm,
    d: usize,
    k: usize,
    l: Option<usize>,
    m: usize,
    enc: EncodingMode,
) -> Result<f64> {
    match algorithm {
        TunedAlgorithm::TopL => {
            let l = l.ok_or_else(|| invalid("the voting scheme needs L"))?;
            topl_sufficient_snr(d, k, l, m)
        }
        _ => Ok(threshold_r_min(d, k, m, enc)?.0),
    }
}

/// SNR below which no protocol can succeed: the single-machine information
/// bound 1/M or the communication bound ln^-3 d, whichever binds. Capped
/// at 1, where the problem is solvable centrally anyway.
pub fn necessary_snr(d: usize, m: usize) -> Result<f64> {
    if d < 2 {
        return Err(invalid(format!("need d >= 2, got d={d}")));
    }
    if m < 1 {
        return Err(invalid("need M >= 1"));
    }
    Ok((1.0 / m as f64).max((d as f64).ln().powi(-3)).min(1.0))
}

/// The two vertical lines of a regime plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeLines {
    pub r_necessary: f64,
    pub r_sufficient: f64,
}

impl RegimeLines {
    pub fn compute(
        algorithm: TunedAlgorithm,
        d: usize,
        k: usize,
        l: Option<usize>,
        m: usize,
        enc: EncodingMode,
    ) -> Result<Self> {
        Ok(RegimeLines {
            r_necessary: necessary_snr(d, m)?,
            r_sufficient: sufficient_snr(algorithm, d, k, l, m, enc)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::tail::binomial_cdf;

    const D15: usize = 1 << 15;

    #[test]
    fn encoding_resolution() {
        assert_eq!(EncodingMode::Compact.resolve(3.7, 1024).unwrap(), (2, 3));
        assert_eq!(EncodingMode::Adaptive.resolve(2.63, 1024).unwrap(), (1, 10));
        assert_eq!(EncodingMode::Adaptive.resolve(5.5, 1 << 15).unwrap(), (2, 15));
        // Sub-unit thresholds keep U = 0 rather than going negative.
        assert_eq!(EncodingMode::Adaptive.resolve(0.7, 1024).unwrap(), (0, 10));
        assert_eq!(EncodingMode::Adaptive.resolve(0.0, 1024).unwrap(), (0, 10));
        assert!(EncodingMode::Adaptive.resolve(-1.0, 1024).is_err());

        assert_eq!("adaptive".parse::<EncodingMode>().unwrap(), EncodingMode::Adaptive);
        assert_eq!("Adaptive".parse::<EncodingMode>().unwrap(), EncodingMode::Adaptive);
        assert_eq!("compact".parse::<EncodingMode>().unwrap(), EncodingMode::Compact);
        assert!("binary".parse::<EncodingMode>().is_err());
        assert_eq!(EncodingMode::Compact.to_string(), "compact");
    }

    #[test]
    fn decoded_threshold_never_exceeds_raw() {
        for enc in [EncodingMode::Adaptive, EncodingMode::Compact] {
            for i in 0..700 {
                let tau = i as f64 * 0.01;
                let t_hat = enc.decode(tau, 1024).unwrap();
                assert!(t_hat <= tau + 1e-12, "{enc}: {t_hat} > {tau}");
                if matches!(enc, EncodingMode::Adaptive) {
                    // U fits the integer part, so only fractional bits drop.
                    assert!(tau - t_hat < 1.0 / 1024.0);
                } else {
                    assert!(tau < 8.0 || t_hat < tau - 7.0, "wrap expected above 2^3");
                }
            }
        }
    }

    #[test]
    fn vote_margin_factor_frozen_values() {
        assert!((vote_margin_factor(D15, 1).unwrap() - 4.44032657954432).abs() < 1e-12);
        assert!((vote_margin_factor(4096, 1).unwrap() - 3.9263887272609083).abs() < 1e-12);
        assert!(vote_margin_factor(4, 2).is_err());
    }

    // Discretized separation probability against a direct factorial sum,
    // on cases small enough for exact arithmetic.
    #[test]
    fn separation_probability_matches_brute_force() {
        fn brute(m: u64, p: f64, theta: f64) -> f64 {
            (0..=m)
                .filter(|&y| (y as f64) < theta)
                .map(|y| {
                    let mut c = 1.0;
                    for i in 0..y {
                        c = c * (m - i) as f64 / (i + 1) as f64;
                    }
                    c * p.powi(y as i32) * (1.0 - p).powi((m - y) as i32)
                })
                .sum()
        }
        for (m, p, theta) in [
            (12u64, 0.4, 3.0),
            (12, 0.4, 2.7),
            (9, 0.15, 0.3),
            (9, 0.9, 9.5),
            (20, 0.5, 10.0),
        ] {
            let direct = brute(m, p, theta);
            let cdf = binomial_cdf(m, p, theta.ceil() as i64 - 1);
            assert!((direct - cdf).abs() < 1e-12, "m={m} p={p} theta={theta}");
        }
    }

    #[test]
    fn voting_tuning_matches_prescription() {
        // p_s = 1 collapses the formula to the bare vote margin.
        let f = vote_margin_factor(D15, 1).unwrap();
        assert_eq!(topl_m_eff(1.0, f), f.ceil() as u64);

        let tuned = tune_topl(D15, 1, 10, 0.3).unwrap();
        assert!(tuned.feasible);
        assert_eq!(tuned.m_eff, 70);
        assert_eq!(tuned.l, Some(10));
        assert_eq!(tuned.threshold, None);

        // The product m_eff * p_s never drops below the margin factor.
        for i in 1..20 {
            let r = i as f64 / 20.0;
            let m_eff = tune_topl(D15, 1, 10, r).unwrap().m_eff;
            let p_s = p_send_support_topl(D15, 1, 10, r).unwrap();
            assert!(m_eff as f64 * p_s >= f, "r={r}");
        }

        // More signal, fewer machines.
        let curve: Vec<u64> =
            (1..10).map(|i| tune_topl(D15, 1, 10, i as f64 / 10.0).unwrap().m_eff).collect();
        assert!(curve.windows(2).all(|w| w[0] >= w[1]), "{curve:?}");
    }

    #[test]
    fn threshold_a_returns_boundary_point() {
        let enc = EncodingMode::Compact;
        let p = tune_threshold_a(1024, 1, 0.6, 64, enc).unwrap();
        assert!(p.feasible);
        assert_eq!(p.m_eff, 64);
        let tau = p.threshold.unwrap();
        assert!((tau - 4.150470703125).abs() < 2e-6);
        assert_eq!(p.encoding, Some((2, 3)));
        assert!(emp_th(1024, 1, 0.6, 64, tau, enc).unwrap());
        assert!(!emp_th(1024, 1, 0.6, 64, tau + GRID_STEP, enc).unwrap());
        assert!(!emp_th(1024, 1, 0.6, 64, tau + 2.0 * REFINE_TOL, enc).unwrap());

        // At this point the binding constraint is the support side, which
        // both quantizations see identically, so adaptive mode lands on the
        // same boundary.
        let adaptive = tune_threshold_a(1024, 1, 0.6, 64, EncodingMode::Adaptive).unwrap();
        let tau_adaptive = adaptive.threshold.unwrap();
        assert!((tau_adaptive - 4.150470703125).abs() < 2e-6);
        assert_eq!(adaptive.encoding, Some((2, 10)));
    }

    #[test]
    fn threshold_a_setting_one() {
        let enc = EncodingMode::Compact;
        let p = tune_threshold_a(D15, 1, 0.3, 64, enc).unwrap();
        assert!(p.feasible);
        let tau = p.threshold.unwrap();
        assert!((tau - 3.5343212890625).abs() < 2e-6);
        assert!(emp_th(D15, 1, 0.3, 64, tau, enc).unwrap());
        assert!(!emp_th(D15, 1, 0.3, 64, tau + GRID_STEP, enc).unwrap());
    }

    #[test]
    fn threshold_a_fallback_below_r_min() {
        let enc = EncodingMode::Compact;
        let (r_min, t_min) = threshold_r_min(D15, 1, 64, enc).unwrap();
        let p = tune_threshold_a(D15, 1, r_min / 2.0, 64, enc).unwrap();
        assert!(!p.feasible);
        assert_eq!(p.threshold, Some(t_min));
        assert_eq!(p.m_eff, 64);
        assert!(p.reason.as_deref().unwrap().contains("smallest feasible r"));
    }

    #[test]
    fn threshold_b_below_gate_is_variant_a() {
        let enc = EncodingMode::Compact;
        let a = tune_threshold_a(D15, 1, 0.3, 64, enc).unwrap();
        let b = tune_threshold_b(D15, 1, 0.3, 64, enc).unwrap();
        assert!(a.threshold.unwrap() < (2.0 * (D15 as f64 - 1.0).ln()).sqrt());
        assert_eq!(b.algorithm, TunedAlgorithm::ThresholdB);
        assert_eq!(b.m_eff, a.m_eff);
        assert_eq!(b.threshold, a.threshold);
        assert!(b.feasible);
    }

    #[test]
    fn threshold_b_activates_and_minimizes() {
        let enc = EncodingMode::Compact;
        let gate = (2.0 * ((D15 - 1) as f64).ln()).sqrt();
        let a = tune_threshold_a(D15, 1, 0.8, 64, enc).unwrap();
        assert!(a.threshold.unwrap() >= gate, "B branch should activate at r = 0.8");

        let b = tune_threshold_b(D15, 1, 0.8, 64, enc).unwrap();
        assert!(b.feasible);
        assert_eq!(b.threshold, Some(gate));
        assert_eq!(b.m_eff, 28);
        assert!(b.m_eff <= 64);
        // Minimality: one machine fewer fails the separation test.
        assert!(emp_th(D15, 1, 0.8, b.m_eff, gate, enc).unwrap());
        assert!(!emp_th(D15, 1, 0.8, b.m_eff - 1, gate, enc).unwrap());
    }

    #[test]
    fn threshold_r_min_frozen_values() {
        let enc = EncodingMode::Compact;
        let (r_small, t_small) = threshold_r_min(1024, 1, 64, enc).unwrap();
        assert!((r_small - 0.10784912109375).abs() < 2e-4, "{r_small}");
        assert!((t_small - 1.875).abs() < 5e-3, "{t_small}");

        let (r_big, t_big) = threshold_r_min(D15, 1, 64, enc).unwrap();
        assert!((r_big - 0.10888671875).abs() < 2e-4, "{r_big}");
        assert!((t_big - 2.1253935546875).abs() < 5e-3, "{t_big}");
    }

    #[test]
    fn sufficient_snr_frozen_and_ordered() {
        let suff = topl_sufficient_snr(D15, 1, 10, 64).unwrap();
        assert!((suff - 0.22454833984375).abs() < 2e-4, "{suff}");

        // More machines push the reliable region left.
        let m32 = topl_sufficient_snr(D15, 1, 10, 32).unwrap();
        let m128 = topl_sufficient_snr(D15, 1, 10, 128).unwrap();
        assert!((m32 - 0.29803466796875).abs() < 2e-4, "{m32}");
        assert!((m128 - 0.16815185546875).abs() < 2e-4, "{m128}");
        assert!(m32 > suff && suff > m128, "{m32} {suff} {m128}");

        // Reference experiment geometries: empirically reliable only above
        // the information-theoretic floor.
        let enc = EncodingMode::Compact;
        for (k, m) in [(1usize, 64usize), (5, 64), (1, 1024)] {
            let necessary = necessary_snr(D15, m).unwrap();
            let top = sufficient_snr(TunedAlgorithm::TopL, D15, k, Some(10), m, enc).unwrap();
            let th = sufficient_snr(TunedAlgorithm::ThresholdA, D15, k, None, m, enc).unwrap();
            assert!(top >= necessary, "topl K={k} M={m}: {top} < {necessary}");
            assert!(th >= necessary, "threshold K={k} M={m}: {th} < {necessary}");
        }
    }

    #[test]
    fn necessary_snr_values() {
        assert_eq!(necessary_snr(D15, 64).unwrap(), 0.015625);
        // Huge fleets leave the communication bound binding.
        let v = necessary_snr(D15, 1 << 20).unwrap();
        assert!((v - 8.897128021205646e-4).abs() < 5e-18);
        // Tiny d caps at the trivial point.
        assert_eq!(necessary_snr(2, 1).unwrap(), 1.0);
        assert!(necessary_snr(1, 4).is_err());
    }

    #[test]
    fn regime_lines_compute() {
        let enc = EncodingMode::Compact;
        let lines =
            RegimeLines::compute(TunedAlgorithm::TopL, D15, 1, Some(10), 64, enc).unwrap();
        assert_eq!(lines.r_necessary, 0.015625);
        assert!(lines.r_sufficient >= lines.r_necessary);
        assert!(lines.r_necessary <= 1.0);
        assert!(
            RegimeLines::compute(TunedAlgorithm::TopL, D15, 1, None, 64, enc).is_err(),
            "voting lines need L"
        );
    }
}

//! Gaussian and binomial tail machinery.
//!
//! The tuning searches work with exact tails: Q(t) through the
//! complementary error function, binomial CDFs summed in log space.
//! The classical sandwich and Chernoff envelopes live here too, used as
//! analytic cross-checks rather than inside any search.

use libm::{erfc, lgamma};

use crate::{invalid, Result};

const SQRT_2PI: f64 = 2.5066282746310002;

/// Q(t) = Pr[Z > t] for standard normal Z, good to >= 12 significant digits.
pub fn gaussian_tail(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

/// Classical envelope of Q(t) for t > 0:
/// t/(sqrt(2 pi)(t^2+1)) e^{-t^2/2} <= Q(t) <= 1/(sqrt(2 pi) t) e^{-t^2/2}.
pub fn tail_bounds(t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(invalid(format!("tail bounds need t > 0, got t={t}")));
    }
    let density = (-t * t / 2.0).exp() / SQRT_2PI;
    Ok((density * t / (t * t + 1.0), density / t))
}

/// Cruder floor Q(t) >= 1/(2 sqrt(2 pi) t) e^{-t^2/2}, valid for t >= 1.
pub fn tail_floor(t: f64) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(invalid(format!("tail floor needs t >= 1, got t={t}")));
    }
    Ok((-t * t / 2.0).exp() / (2.0 * SQRT_2PI * t))
}

/// Which side of the mean a Chernoff bound controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailSide {
    Above,
    Below,
}

/// Multiplicative Chernoff bound for a sum of n i.i.d. Bernoulli(p):
/// Pr[X >= (1+delta) np] <= e^{-delta^2 np/(2+delta)} for delta >= 0, and
/// Pr[X <= (1-delta) np] <= e^{-delta^2 np/2} for 0 <= delta <= 1.
pub fn chernoff_bound(n: u64, p: f64, delta: f64, side: TailSide) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("need 0 <= p <= 1, got p={p}")));
    }
    let mean = n as f64 * p;
    match side {
        TailSide::Above => {
            if !(delta >= 0.0) {
                return Err(invalid(format!("upper tail needs delta >= 0, got {delta}")));
            }
            Ok((-delta * delta * mean / (2.0 + delta)).exp())
        }
        TailSide::Below => {
            if !(0.0..=1.0).contains(&delta) {
                return Err(invalid(format!("lower tail needs 0 <= delta <= 1, got {delta}")));
            }
            Ok((-delta * delta * mean / 2.0).exp())
        }
    }
}

/// Shared ln(i!) prefix so repeated binomial CDFs at the same n cost one
/// table build instead of per-term gamma evaluations.
pub struct LnFactorialTable {
    ln_fact: Vec<f64>,
}

impl LnFactorialTable {
    pub fn new(n: u64) -> Self {
        let ln_fact = (0..=n).map(|i| lgamma(i as f64 + 1.0)).collect();
        LnFactorialTable { ln_fact }
    }

    fn ln_pmf(&self, n: u64, ln_p: f64, ln_q: f64, i: u64) -> f64 {
        self.ln_fact[n as usize] - self.ln_fact[i as usize] - self.ln_fact[(n - i) as usize]
            + i as f64 * ln_p
            + (n - i) as f64 * ln_q
    }

    /// Pr[Bin(n, p) <= k], exact term-by-term summation in log space.
    pub fn binomial_cdf(&self, n: u64, p: f64, k: i64) -> f64 {
        assert!(n < self.ln_fact.len() as u64, "table too small for n={n}");
        self.sum_pmf_range(n, p, k, true)
    }

    /// Pr[Bin(n, p) > k], summed directly so small upper tails keep full
    /// relative precision instead of cancelling against 1.
    pub fn binomial_tail_above(&self, n: u64, p: f64, k: i64) -> f64 {
        assert!(n < self.ln_fact.len() as u64, "table too small for n={n}");
        self.sum_pmf_range(n, p, k, false)
    }

    fn sum_pmf_range(&self, n: u64, p: f64, k: i64, lower: bool) -> f64 {
        if k < 0 {
            return if lower { 0.0 } else { 1.0 };
        }
        if k as u64 >= n {
            return if lower { 1.0 } else { 0.0 };
        }
        if p <= 0.0 {
            return if lower { 1.0 } else { 0.0 };
        }
        if p >= 1.0 {
            return if lower { 0.0 } else { 1.0 };
        }
        let (ln_p, ln_q) = (p.ln(), (-p).ln_1p());
        let range = if lower {
            0..=(k as u64)
        } else {
            (k as u64 + 1)..=n
        };
        // Streaming log-sum-exp: rescale whenever a new maximum appears.
        let mut max_ln = f64::NEG_INFINITY;
        let mut acc = 0.0f64;
        for i in range {
            let ln_term = self.ln_pmf(n, ln_p, ln_q, i);
            if ln_term > max_ln {
                acc = acc * (max_ln - ln_term).exp() + 1.0;
                max_ln = ln_term;
            } else {
                acc += (ln_term - max_ln).exp();
            }
        }
        (acc.ln() + max_ln).exp().min(1.0)
    }
}

/// One-shot Pr[Bin(n, p) <= k].
pub fn binomial_cdf(n: u64, p: f64, k: i64) -> f64 {
    LnFactorialTable::new(n).binomial_cdf(n, p, k)
}

/// One-shot Pr[Bin(n, p) > k].
pub fn binomial_tail_above(n: u64, p: f64, k: i64) -> f64 {
    LnFactorialTable::new(n).binomial_tail_above(n, p, k)
}

//! Discrete-probability primitives: Poisson and binomial mass functions, finite
//! truncated pmfs with integer (possibly negative) support, convolution, and
//! pointwise-max envelopes.
//!
//! All values are plain `f64` probabilities. Mass below the caller-supplied
//! early-stop floor is dropped at the support edges; a dropped tail is never
//! redistributed, so truncated pmfs are sub-normalized by exactly the omitted
//! mass.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Upper bound for the exact cumulative log-factorial table; Stirling's series
/// takes over beyond it.
const LN_FACT_TABLE_LEN: usize = 1024;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = vec![0.0; LN_FACT_TABLE_LEN];
        // Kahan-compensated cumulative sum keeps the table accurate to ~1e-15.
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        for (n, slot) in table.iter_mut().enumerate().skip(1) {
            let term = (n as f64).ln() - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
            *slot = sum;
        }
        table
    })
}

/// ln(n!) for arbitrary n.
pub(crate) fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACT_TABLE_LEN {
        return ln_factorial_table()[n as usize];
    }
    // Stirling's series with three correction terms; error < 1e-19 here.
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + inv / 12.0
        - inv * inv2 / 360.0
        + inv * inv2 * inv2 / 1260.0
}

/// P(X = k) for X ~ Poisson(rate), evaluated in log space so that large rates
/// and counts neither overflow nor underflow prematurely.
pub fn poisson_pmf(k: u64, rate: f64) -> Result<f64> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(Error::Domain(format!(
            "poisson rate must be finite and non-negative, got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    Ok((k as f64 * rate.ln() - rate - ln_factorial(k)).exp())
}

/// P(X >= k) for X ~ Poisson(rate).
///
/// Sums the smaller side of the distribution directly, so deep tails come out
/// at full precision instead of cancelling against 1.
pub fn poisson_tail(k: u64, rate: f64) -> Result<f64> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(Error::Domain(format!(
            "poisson rate must be finite and non-negative, got {rate}"
        )));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if rate == 0.0 {
        return Ok(0.0);
    }
    if k as f64 > rate {
        // Upper sum: terms shrink by rate/(j+1) < 1.
        let mut term = poisson_pmf(k, rate)?;
        let mut acc = term;
        let mut j = k;
        while term > 0.0 && term > acc * 1e-18 {
            term *= rate / (j + 1) as f64;
            acc += term;
            j += 1;
        }
        Ok(acc.min(1.0))
    } else {
        // Lower sum from k-1 downward: terms shrink by j/rate < 1.
        let mut term = poisson_pmf(k - 1, rate)?;
        let mut acc = term;
        let mut j = k - 1;
        while j > 0 && term > 0.0 && term > acc * 1e-18 {
            term *= j as f64 / rate;
            acc += term;
            j -= 1;
        }
        Ok((1.0 - acc).max(0.0))
    }
}

/// P(X = k) for X ~ Binomial(n, p).
pub fn binomial_pmf(k: u64, n: u64, p: f64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain(format!(
            "binomial count k={k} exceeds trial count n={n}"
        )));
    }
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "binomial success probability must be in [0, 1], got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    Ok((ln_choose + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp())
}

/// Finite discrete (sub-)distribution over consecutive integers starting at
/// `offset`. Envelopes built by pointwise max are upper bounds and need not
/// sum to 1; everything else should.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    offset: i64,
    mass: Vec<f64>,
}

impl Pmf {
    /// Wraps raw mass entries; the caller vouches for their range.
    pub fn from_parts(offset: i64, mass: Vec<f64>) -> Self {
        debug_assert!(mass.iter().all(|&m| (0.0..=1.0 + 1e-9).contains(&m)));
        Pmf { offset, mass }
    }

    /// Pmf with no support; every tail is zero.
    pub fn empty() -> Self {
        Pmf {
            offset: 0,
            mass: Vec::new(),
        }
    }

    /// Point mass at `at`.
    pub fn delta(at: i64) -> Self {
        Pmf {
            offset: at,
            mass: vec![1.0],
        }
    }

    /// Truncated Poisson(rate) pmf. Entries below `floor` are dropped at both
    /// ends of the support, and the support never exceeds `max_len` entries.
    pub fn poisson(rate: f64, floor: f64, max_len: usize) -> Result<Self> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::Domain(format!(
                "poisson rate must be finite and non-negative, got {rate}"
            )));
        }
        if rate == 0.0 {
            return Ok(Pmf::delta(0));
        }
        let mode = rate.floor() as u64;
        let p_mode = poisson_pmf(mode, rate)?;
        // Walk down from the mode while entries stay above the floor.
        let mut below_rev = Vec::new();
        let mut p = p_mode;
        let mut j = mode;
        while j > 0 && below_rev.len() + 1 < max_len {
            let next = p * j as f64 / rate;
            if next < floor {
                break;
            }
            below_rev.push(next);
            p = next;
            j -= 1;
        }
        let lo = j;
        let mut mass: Vec<f64> = below_rev.into_iter().rev().collect();
        mass.push(p_mode);
        // Walk up until the remaining tail provably drops below the floor.
        let mut p = p_mode;
        let mut j = mode;
        while mass.len() < max_len {
            p *= rate / (j + 1) as f64;
            j += 1;
            let past_mode = j as f64 > rate;
            if past_mode {
                // Geometric bound on the residual tail from j.
                let denom = (j + 1) as f64 - rate;
                let tail_bound = p * (j + 1) as f64 / denom;
                if tail_bound < floor {
                    break;
                }
            }
            mass.push(p);
        }
        Ok(Pmf {
            offset: lo as i64,
            mass,
        })
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Lowest integer in the support, if any.
    pub fn support_min(&self) -> Option<i64> {
        (!self.mass.is_empty()).then_some(self.offset)
    }

    /// Highest integer in the support, if any.
    pub fn support_max(&self) -> Option<i64> {
        (!self.mass.is_empty()).then_some(self.offset + self.mass.len() as i64 - 1)
    }

    /// Mass at `k`, zero outside the stored support.
    pub fn value_at(&self, k: i64) -> f64 {
        if k < self.offset {
            return 0.0;
        }
        let idx = (k - self.offset) as usize;
        self.mass.get(idx).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// P(X >= k) over the stored support, clamped to [0, 1].
    pub fn tail_from(&self, k: i64) -> f64 {
        let start = if k <= self.offset {
            0
        } else {
            (k - self.offset) as usize
        };
        if start >= self.mass.len() {
            return 0.0;
        }
        self.mass[start..].iter().sum::<f64>().clamp(0.0, 1.0)
    }

    /// Iterates `(support value, mass)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .map(move |(i, &m)| (self.offset + i as i64, m))
    }

    /// Restricts the support to `[lo, hi]`, dropping everything outside.
    pub fn restrict(&self, lo: i64, hi: i64) -> Pmf {
        if self.mass.is_empty() || hi < lo {
            return Pmf::empty();
        }
        let from = lo.max(self.offset);
        let to = hi.min(self.offset + self.mass.len() as i64 - 1);
        if to < from {
            return Pmf::empty();
        }
        let a = (from - self.offset) as usize;
        let b = (to - self.offset) as usize;
        Pmf {
            offset: from,
            mass: self.mass[a..=b].to_vec(),
        }
    }

    /// Strips sub-floor entries from both ends of the support.
    pub fn trim_below(&mut self, floor: f64) {
        let first = self.mass.iter().position(|&m| m >= floor);
        match first {
            None => {
                self.mass.clear();
                self.offset = 0;
            }
            Some(first) => {
                let last = self.mass.iter().rposition(|&m| m >= floor).unwrap();
                self.mass.drain(last + 1..);
                self.mass.drain(..first);
                self.offset += first as i64;
            }
        }
    }
}

/// Distribution of A + B (or A - B when `negate_b`) for independent A, B.
/// The result support is exact; callers truncate as needed.
pub fn pmf_convolve(a: &Pmf, b: &Pmf, negate_b: bool) -> Pmf {
    if a.is_empty() || b.is_empty() {
        return Pmf::empty();
    }
    let (b_offset, b_mass): (i64, Vec<f64>) = if negate_b {
        (
            -(b.offset + b.mass.len() as i64 - 1),
            b.mass.iter().rev().copied().collect(),
        )
    } else {
        (b.offset, b.mass.clone())
    };
    let mut out = vec![0.0; a.mass.len() + b_mass.len() - 1];
    for (i, &pa) in a.mass.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (j, &pb) in b_mass.iter().enumerate() {
            out[i + j] += pa * pb;
        }
    }
    Pmf {
        offset: a.offset + b_offset,
        mass: out,
    }
}

/// Entry-wise maximum over the union of supports. The result is an
/// upper-bound envelope and is deliberately not normalized.
pub fn pointwise_max_envelope(pmfs: &[Pmf]) -> Result<Pmf> {
    if pmfs.is_empty() {
        return Err(Error::Domain(
            "pointwise max envelope of an empty list".into(),
        ));
    }
    let nonempty: Vec<&Pmf> = pmfs.iter().filter(|p| !p.is_empty()).collect();
    if nonempty.is_empty() {
        return Ok(Pmf::empty());
    }
    let lo = nonempty.iter().map(|p| p.offset).min().unwrap();
    let hi = nonempty
        .iter()
        .map(|p| p.offset + p.mass.len() as i64 - 1)
        .max()
        .unwrap();
    let mut mass = vec![0.0; (hi - lo + 1) as usize];
    for p in nonempty {
        for (k, m) in p.iter() {
            let idx = (k - lo) as usize;
            if m > mass[idx] {
                mass[idx] = m;
            }
        }
    }
    Ok(Pmf { offset: lo, mass })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    /// Direct-series Poisson oracle: e^-rate * rate^k / k! by plain iterated
    /// multiplication, no logarithms.
    fn poisson_series(k: u64, rate: f64) -> f64 {
        let mut acc = (-rate).exp();
        for j in 1..=k {
            acc *= rate / j as f64;
        }
        acc
    }

    #[test]
    fn poisson_pmf_empty_product_identity() {
        assert_eq!(poisson_pmf(0, 0.0).unwrap(), 1.0);
        assert_eq!(poisson_pmf(3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn poisson_pmf_matches_series_oracle() {
        assert!((poisson_pmf(0, 1.5).unwrap() - (-1.5f64).exp()).abs() < TOL);
        assert!((poisson_pmf(2, 1.5).unwrap() - poisson_series(2, 1.5)).abs() < TOL);
        // 1.5^2/2 * e^-1.5 = 1.125 * e^-1.5 ~ 0.2510
        assert!((poisson_pmf(2, 1.5).unwrap() - 0.251021).abs() < 1e-6);
        for &rate in &[0.1, 1.0, 5.0, 17.3, 50.0] {
            for k in (0..=200).step_by(7) {
                let got = poisson_pmf(k, rate).unwrap();
                let want = poisson_series(k, rate);
                assert!(
                    (got - want).abs() < TOL,
                    "k={k} rate={rate}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn poisson_pmf_rejects_negative_rate() {
        assert!(poisson_pmf(0, -1.0).is_err());
        assert!(poisson_pmf(0, f64::NAN).is_err());
    }

    #[test]
    fn poisson_pmf_survives_large_arguments() {
        let p = poisson_pmf(400, 1000.0).unwrap();
        assert!(p.is_finite() && p > 0.0);
    }

    #[test]
    fn poisson_tail_edges() {
        assert_eq!(poisson_tail(0, 7.0).unwrap(), 1.0);
        assert_eq!(poisson_tail(0, 0.0).unwrap(), 1.0);
        assert_eq!(poisson_tail(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn poisson_tail_matches_partial_sum_oracle() {
        // 1 - sum_{j<3} pmf(j; 1.5)
        let want = 1.0 - (0..3).map(|j| poisson_series(j, 1.5)).sum::<f64>();
        let got = poisson_tail(3, 1.5).unwrap();
        assert!((got - want).abs() < TOL);
        assert!((got - 0.191153).abs() < 1e-6);
    }

    #[test]
    fn poisson_tail_deep_tail_is_accurate() {
        // Sum the series directly at full precision for a deep tail.
        let want: f64 = (60..200).map(|j| poisson_series(j, 10.0)).sum();
        let got = poisson_tail(60, 10.0).unwrap();
        assert!((got - want).abs() < want * 1e-10);
    }

    #[test]
    fn binomial_pmf_direct_product_oracle() {
        assert!((binomial_pmf(0, 5, 0.3).unwrap() - 0.7f64.powi(5)).abs() < TOL);
        assert_eq!(binomial_pmf(5, 5, 1.0).unwrap(), 1.0);
        assert!(binomial_pmf(1, 0, 0.5).is_err());
    }

    #[test]
    fn binomial_pmf_matches_recurrence() {
        // Independent recurrence: pmf(0) = q^n, pmf(b+1) = pmf(b) (n-b)/(b+1) p/q.
        let (n, p) = (40u64, 0.3f64);
        let q = 1.0 - p;
        let mut want = q.powi(n as i32);
        for b in 0..=n {
            let got = binomial_pmf(b, n, p).unwrap();
            assert!((got - want).abs() < TOL, "b={b}: {got} vs {want}");
            if b < n {
                want *= (n - b) as f64 / (b + 1) as f64 * p / q;
            }
        }
    }

    #[test]
    fn pmf_poisson_mass_accounts_for_truncation() {
        for &rate in &[0.5, 3.0, 45.0, 150.0] {
            let pmf = Pmf::poisson(rate, 1e-25, 4096).unwrap();
            let below = if pmf.offset() > 0 {
                1.0 - poisson_tail(pmf.offset() as u64, rate).unwrap()
            } else {
                0.0
            };
            let above = poisson_tail((pmf.support_max().unwrap() + 1) as u64, rate).unwrap();
            assert!(
                (pmf.total_mass() - (1.0 - below - above)).abs() < 1e-9,
                "rate={rate}"
            );
        }
    }

    #[test]
    fn pmf_poisson_rate_zero_is_delta() {
        let pmf = Pmf::poisson(0.0, 1e-25, 100).unwrap();
        assert_eq!(pmf, Pmf::delta(0));
    }

    #[test]
    fn pmf_poisson_respects_floor_and_cap() {
        let pmf = Pmf::poisson(45.0, 1e-25, 401).unwrap();
        assert!(pmf.len() <= 401);
        assert!(pmf.mass().iter().all(|&m| m >= 1e-25));
        // Everything dropped above the truncation point is below the floor.
        assert!(poisson_tail((pmf.support_max().unwrap() + 1) as u64, 45.0).unwrap() < 1e-25);
    }

    #[test]
    fn convolve_delta_is_identity() {
        let p = Pmf::poisson(2.5, 1e-25, 400).unwrap();
        let conv = pmf_convolve(&Pmf::delta(0), &p, false);
        assert_eq!(conv.offset(), p.offset());
        for (k, m) in p.iter() {
            assert!((conv.value_at(k) - m).abs() < 1e-15);
        }
    }

    #[test]
    fn convolve_with_zero_rate_poisson_is_identity() {
        // Skellam with zero second rate degenerates to the first Poisson.
        let p = Pmf::poisson(1.0, 1e-25, 400).unwrap();
        let zero = Pmf::poisson(0.0, 1e-25, 400).unwrap();
        let skellam = pmf_convolve(&p, &zero, true);
        for (k, m) in p.iter() {
            assert!((skellam.value_at(k) - m).abs() < 1e-15);
        }
    }

    #[test]
    fn convolve_negation_flips_support() {
        let p = Pmf::poisson(3.0, 1e-25, 400).unwrap();
        let diff = pmf_convolve(&Pmf::delta(0), &p, true);
        assert_eq!(diff.support_max().unwrap(), -p.support_min().unwrap());
        assert_eq!(diff.support_min().unwrap(), -p.support_max().unwrap());
        for (k, m) in p.iter() {
            assert!((diff.value_at(-k) - m).abs() < 1e-15);
        }
    }

    #[test]
    fn skellam_by_convolution_matches_bessel_series() {
        let a = Pmf::poisson(2.0, 1e-30, 1000).unwrap();
        let b = Pmf::poisson(3.0, 1e-30, 1000).unwrap();
        let skellam = pmf_convolve(&a, &b, true);
        let want = crate::oracle::skellam_bessel_series(0, 2.0, 3.0);
        assert!((skellam.value_at(0) - want).abs() < 1e-10);
    }

    #[test]
    fn envelope_of_one_pmf_is_that_pmf() {
        let p = Pmf::poisson(4.0, 1e-25, 400).unwrap();
        let env = pointwise_max_envelope(std::slice::from_ref(&p)).unwrap();
        assert_eq!(env, p);
        let env2 = pointwise_max_envelope(&[p.clone(), p.clone()]).unwrap();
        assert_eq!(env2, p);
    }

    #[test]
    fn envelope_dominates_inputs_pointwise() {
        let p = Pmf::poisson(2.0, 1e-25, 400).unwrap();
        let q = Pmf::poisson(6.0, 1e-25, 400).unwrap();
        let env = pointwise_max_envelope(&[p.clone(), q.clone()]).unwrap();
        for k in env.support_min().unwrap()..=env.support_max().unwrap() {
            assert!(env.value_at(k) >= p.value_at(k));
            assert!(env.value_at(k) >= q.value_at(k));
        }
    }

    #[test]
    fn envelope_rejects_empty_list() {
        assert!(pointwise_max_envelope(&[]).is_err());
    }

    #[test]
    fn tail_from_edges() {
        let p = Pmf::poisson(1.5, 1e-25, 400).unwrap();
        let lo = p.support_min().unwrap();
        let hi = p.support_max().unwrap();
        assert!((p.tail_from(lo) - p.total_mass()).abs() < 1e-15);
        assert_eq!(p.tail_from(hi + 1), 0.0);
        assert!((p.tail_from(3) - poisson_tail(3, 1.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn tail_from_is_non_increasing() {
        let p = Pmf::poisson(7.0, 1e-25, 400).unwrap();
        let mut prev = f64::INFINITY;
        for k in -2..=p.support_max().unwrap() + 2 {
            let t = p.tail_from(k);
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn restrict_and_trim() {
        let p = Pmf::poisson(5.0, 1e-25, 400).unwrap();
        let r = p.restrict(2, 4);
        assert_eq!(r.support_min(), Some(2));
        assert_eq!(r.support_max(), Some(4));
        assert_eq!(r.value_at(3), p.value_at(3));

        let mut t = Pmf::from_parts(0, vec![1e-30, 0.5, 0.3, 1e-30]);
        t.trim_below(1e-25);
        assert_eq!(t.support_min(), Some(1));
        assert_eq!(t.support_max(), Some(2));
    }
}

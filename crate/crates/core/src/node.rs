//! Node-view error-probability calculator.
//!
//! The bound combines three adversarial spans relative to a target round `s`
//! observed from a current round `c`:
//!
//! * `L` — the lead a privately mining adversary may hold at `s`, as an
//!   envelope over attack windows ending at `s`;
//! * `B` — adversarial production between `s` (exclusive) and `c`;
//! * `M` — future adversarial production net of slowed honest growth, as an
//!   envelope over horizons past `c`.
//!
//! A reorganization of round `s` requires `L + B + M` to reach the observed
//! good advantage, and the three-way split makes the failure events mutually
//! exclusive.

use crate::chain::{ChainTrace, FinalityReport, NetworkParams, ReportEntry, TruncationConfig, View};
use crate::error::{Error, Result};
use crate::prob::{pmf_convolve, pointwise_max_envelope, poisson_pmf, Pmf};
use rayon::prelude::*;

/// Generous construction cap for intermediate Poisson pmfs; real truncation
/// comes from the early-stop floor and the configured k bounds.
pub(crate) const POISSON_BUILD_CAP: usize = 1 << 22;

/// The three adversarial-span distributions entering the combination.
/// `lead` and `recent` have non-negative support; `future` is stored for its
/// non-negative part only, which is all the combination consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanDistributions {
    pub lead: Pmf,
    pub recent: Pmf,
    pub future: Pmf,
}

impl SpanDistributions {
    /// Evaluates the three-span combination for an observed advantage.
    pub fn error_probability(&self, advantage: u64, floor: f64) -> f64 {
        combine_error_probability(&self.lead, &self.recent, &self.future, advantage, floor)
    }
}

/// Builds all three node-view span distributions for `(s, c)` at once.
pub fn span_distributions(
    trace: &ChainTrace,
    s: i64,
    c: i64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
) -> Result<SpanDistributions> {
    Ok(SpanDistributions {
        lead: lead_distribution(trace, s, params, trunc)?,
        recent: recent_distribution(s, c, params, trunc)?,
        future: future_distribution(params, trunc),
    })
}

/// Upper-bound envelope for the adversarial lead at round `s`.
///
/// Unrolling the reflecting lead walk gives `L = max(0, max_m G_m)` where
/// `G_m` is the adversary's net gain over the last `m` rounds, so for k >= 1
/// the union bound `P(L = k) <= sum_m P(G_m = k)` holds. For the window of
/// the `i + 1` rounds `[s - i, s]`, the adversary must beat the observed
/// `window_sum(s - i, s)` blocks by `k`, putting `P(G = k)` at the
/// Poisson((i+1) * f * e) mass at that offset. The envelope sums these laws
/// per entry (clamped at 1) over window lengths `i = 0..=max_i_l`; the
/// single-round window is required, since the walk's final step alone is a
/// one-round attack. The result is an unnormalized upper bound with support
/// `[0, max_k_lb]`.
pub fn lead_distribution(
    trace: &ChainTrace,
    s: i64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
) -> Result<Pmf> {
    let max_i = trunc.max_i_l as i64;
    if s - max_i < trace.start_round() || s > trace.end_round() {
        return Err(Error::Range(format!(
            "lead window [{}, {s}] not covered by trace [{}, {}]",
            s - max_i,
            trace.start_round(),
            trace.end_round()
        )));
    }
    let floor = trunc.early_stop_floor;
    let mut laws = Vec::with_capacity(trunc.max_i_l + 1);
    for i in 0..=max_i {
        let rate = (i + 1) as f64 * params.adversarial_rate();
        let observed = trace.window_sum(s - i, s)?;
        laws.push(lead_law(observed, rate, trunc.max_k_lb, floor)?);
    }
    let mut envelope = summed_envelope(&laws);
    trim_tail_below(&mut envelope, floor);
    Ok(envelope)
}

/// Entry-wise sum of lead laws sharing offset 0, clamped to probability
/// range. The sum realizes the union bound across attack windows.
pub(crate) fn summed_envelope(laws: &[Pmf]) -> Pmf {
    let len = laws.iter().map(Pmf::len).max().unwrap_or(0);
    let mut mass = vec![0.0f64; len];
    for law in laws {
        debug_assert_eq!(law.offset(), 0);
        for (i, &m) in law.mass().iter().enumerate() {
            mass[i] += m;
        }
    }
    for entry in &mut mass {
        *entry = entry.min(1.0);
    }
    Pmf::from_parts(0, mass)
}

/// Law of the lead for one attack window: `P(k) = poisson_pmf(k + observed, rate)`
/// for `k` in `[0, max_k]`, stopping once the residual tail drops below `floor`.
fn lead_law(observed: u64, rate: f64, max_k: usize, floor: f64) -> Result<Pmf> {
    let mut mass = Vec::new();
    let mut value = poisson_pmf(observed, rate)?;
    for k in 0..=max_k as u64 {
        mass.push(value);
        let at = observed + k; // absolute Poisson index of `value`
        let next = value * rate / (at + 1) as f64;
        if (at + 1) as f64 > rate {
            // Geometric bound on everything from the next index up.
            let denom = (at + 2) as f64 - rate;
            if next * (at + 2) as f64 / denom < floor {
                break;
            }
        }
        value = next;
    }
    Ok(Pmf::from_parts(0, mass))
}

fn trim_tail_below(pmf: &mut Pmf, floor: f64) {
    match pmf.mass().iter().rposition(|&m| m >= floor) {
        Some(last) => {
            let offset = pmf.offset();
            let mass = pmf.mass()[..=last].to_vec();
            *pmf = Pmf::from_parts(offset, mass);
        }
        None => *pmf = Pmf::empty(),
    }
}

/// Adversarial production over the `c - s` rounds after `s`: a plain
/// Poisson((c - s) * f * e) pmf truncated to `[0, max_k_lb]`.
pub fn recent_distribution(
    s: i64,
    c: i64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
) -> Result<Pmf> {
    if c <= s {
        return Err(Error::Range(format!(
            "current round {c} must be after target round {s}"
        )));
    }
    let rate = (c - s) as f64 * params.adversarial_rate();
    let pmf = Pmf::poisson(rate, trunc.early_stop_floor, POISSON_BUILD_CAP)?;
    Ok(pmf.restrict(0, trunc.max_k_lb as i64))
}

/// Expected per-round growth of the honest chain when the adversary spends
/// withheld blocks to split honest production:
/// `E[Z] = Pr(H > 0) * E[(H + B) / 2^B]` with `H ~ Poisson((1-f)e)` and
/// `B ~ Poisson(fe)`, by truncated double summation.
pub fn expected_slowed_growth(params: &NetworkParams, trunc: &TruncationConfig) -> f64 {
    let floor = trunc.early_stop_floor * 1e-3;
    let honest = Pmf::poisson(params.honest_rate(), floor, POISSON_BUILD_CAP)
        .expect("validated params");
    let withheld = Pmf::poisson(params.adversarial_rate(), floor, POISSON_BUILD_CAP)
        .expect("validated params");
    let mut ratio_expectation = 0.0;
    for (h, ph) in honest.iter() {
        for (b, pb) in withheld.iter() {
            ratio_expectation += ph * pb * (h + b) as f64 * 0.5f64.powi(b as i32);
        }
    }
    let pr_honest_positive = -(-params.honest_rate()).exp_m1();
    pr_honest_positive * ratio_expectation
}

/// Upper-bound envelope for future adversarial-minus-honest growth beyond the
/// current round: pointwise max over horizons `n` of the
/// Skellam(n * e * f, n * E[Z]) pmf, realized by convolution and restricted to
/// non-negative support `[0, max_k_m]`.
pub fn future_distribution(params: &NetworkParams, trunc: &TruncationConfig) -> Pmf {
    let slowed_rate = expected_slowed_growth(params, trunc);
    let adversarial = params.adversarial_rate();
    let floor = trunc.early_stop_floor;
    let mut laws = Vec::with_capacity(trunc.max_i_m);
    for n in 1..=trunc.max_i_m {
        let gain = Pmf::poisson(n as f64 * adversarial, floor, POISSON_BUILD_CAP)
            .expect("validated params");
        let loss = Pmf::poisson(n as f64 * slowed_rate, floor, POISSON_BUILD_CAP)
            .expect("validated params");
        let skellam = pmf_convolve(&gain, &loss, true);
        laws.push(skellam.restrict(0, trunc.max_k_m as i64));
    }
    let mut envelope = pointwise_max_envelope(&laws).expect("non-empty horizon list");
    trim_tail_below(&mut envelope, floor);
    envelope
}

/// The three-span combination for an observed good advantage of `advantage`:
///
/// `P(err) <= P(L >= k) + sum_{l<k} P(L=l) [ P(B >= k-l) + sum_{b<k-l} P(B=b) P(M >= k-l-b) ]`
///
/// clamped to `[floor, 1]`. Probabilities below the early-stop floor are
/// reported as the floor, never as zero.
pub fn combine_error_probability(
    lead: &Pmf,
    recent: &Pmf,
    future: &Pmf,
    advantage: u64,
    floor: f64,
) -> f64 {
    let k = advantage as i64;
    let recent_tails = SuffixTails::new(recent);
    let future_tails = SuffixTails::new(future);

    let mut total = lead.tail_from(k);
    for (l, pl) in lead.iter() {
        if l >= k || pl == 0.0 {
            continue;
        }
        let mut inner = recent_tails.at(k - l);
        for (b, pb) in recent.iter() {
            if b >= k - l || pb == 0.0 {
                continue;
            }
            inner += pb * future_tails.at(k - l - b);
        }
        total += pl * inner;
    }
    total.min(1.0).max(floor)
}

/// Precomputed `P(X >= q)` over a pmf's stored support.
struct SuffixTails {
    offset: i64,
    sums: Vec<f64>,
}

impl SuffixTails {
    fn new(pmf: &Pmf) -> Self {
        let mut sums = vec![0.0; pmf.len()];
        let mut acc = 0.0;
        for (i, &m) in pmf.mass().iter().enumerate().rev() {
            acc += m;
            sums[i] = acc;
        }
        SuffixTails {
            offset: pmf.offset(),
            sums,
        }
    }

    fn at(&self, q: i64) -> f64 {
        if self.sums.is_empty() {
            return 0.0;
        }
        let idx = if q <= self.offset {
            0
        } else {
            (q - self.offset) as usize
        };
        self.sums.get(idx).copied().unwrap_or(0.0).clamp(0.0, 1.0)
    }
}

/// Node-view error-probability bound for target round `s` seen from `c`.
pub fn error_probability(
    trace: &ChainTrace,
    s: i64,
    c: i64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
) -> Result<f64> {
    let future = future_distribution(params, trunc);
    error_probability_with_future(trace, s, c, params, trunc, &future)
}

pub(crate) fn error_probability_with_future(
    trace: &ChainTrace,
    s: i64,
    c: i64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
    future: &Pmf,
) -> Result<f64> {
    if c <= s {
        return Err(Error::Range(format!(
            "current round {c} must be after target round {s}"
        )));
    }
    if c > trace.end_round() {
        return Err(Error::Range(format!(
            "current round {c} beyond trace end {}",
            trace.end_round()
        )));
    }
    let spans = SpanDistributions {
        lead: lead_distribution(trace, s, params, trunc)?,
        recent: recent_distribution(s, c, params, trunc)?,
        future: future.clone(),
    };
    let advantage = trace.window_sum(s + 1, c)?;
    Ok(spans.error_probability(advantage, trunc.early_stop_floor))
}

/// Evaluates the node-view bound at every round of the trace with enough
/// history, using `s = c - settlement`. Rounds near the trace start that lack
/// the full lead window are skipped rather than computed with clamped windows.
pub fn node_report(
    trace: &ChainTrace,
    settlement: u64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
) -> Result<FinalityReport> {
    let (first_c, last_c) = report_range(trace, settlement, trunc)?;
    let future = future_distribution(params, trunc);
    let entries: Vec<ReportEntry> = (first_c..=last_c)
        .into_par_iter()
        .map(|c| {
            let s = c - settlement as i64;
            let error =
                error_probability_with_future(trace, s, c, params, trunc, &future)?;
            Ok(ReportEntry {
                target_round: s,
                current_round: c,
                good_advantage: trace.window_sum(s + 1, c)?,
                error_probability: error,
                view: View::Node,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FinalityReport { entries })
}

/// First and last current rounds evaluable at `settlement`, or a range error
/// when the trace is too short for even one entry.
pub(crate) fn report_range(
    trace: &ChainTrace,
    settlement: u64,
    trunc: &TruncationConfig,
) -> Result<(i64, i64)> {
    if settlement == 0 {
        return Err(Error::Domain("settlement must be >= 1".into()));
    }
    let needed = settlement as usize + trunc.max_i_l + 1;
    if trace.len() < needed {
        return Err(Error::Range(format!(
            "trace length {} is shorter than settlement {} + lead window {} + 1",
            trace.len(),
            settlement,
            trunc.max_i_l
        )));
    }
    let first_c = trace.start_round() + settlement as i64 + trunc.max_i_l as i64;
    Ok((first_c, trace.end_round()))
}

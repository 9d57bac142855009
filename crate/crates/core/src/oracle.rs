//! Independent brute-force and Monte-Carlo oracles for validating the
//! analytic machinery.
//!
//! Nothing here shares pmf-construction code with the production modules:
//! Poisson and binomial values come from plain recurrences in linear space,
//! Skellam values from a direct series, and the error combination from a
//! naive triple loop. If an oracle and its production counterpart agree, the
//! agreement is between genuinely distinct arithmetic paths.

use crate::actor::BpzContext;
use crate::chain::{ChainTrace, NetworkParams};
use crate::error::{Error, Result};
use crate::prob::Pmf;
use crate::sim::SplitMix64;
use rayon::prelude::*;

/// Tail-count statistics from repeated lead-process walks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialStats {
    trials: u64,
    /// `tail_counts[k]` = number of trials whose final lead was >= k.
    tail_counts: Vec<u64>,
}

impl TrialStats {
    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// Largest lead observed in any trial.
    pub fn max_lead(&self) -> u64 {
        self.tail_counts.len() as u64 - 1
    }

    pub fn tail_count(&self, k: u64) -> u64 {
        self.tail_counts
            .get(k as usize)
            .copied()
            .unwrap_or(0)
    }

    /// Empirical P(lead >= k).
    pub fn tail_frequency(&self, k: u64) -> f64 {
        self.tail_count(k) as f64 / self.trials as f64
    }
}

/// Walks the reflecting lead process over the `history_depth + 1` rounds
/// `[s - history_depth, s]`: each round the lead gains a Poisson(f * e) draw,
/// loses the observed chain blocks, and is floored at zero. Returns tail
/// counts of the final lead over `trials` independent walks.
pub fn simulate_lead_process(
    trace: &ChainTrace,
    s: i64,
    params: &NetworkParams,
    history_depth: u64,
    trials: u64,
    seed: u64,
) -> Result<TrialStats> {
    let start = s - history_depth as i64;
    if start < trace.start_round() || s > trace.end_round() {
        return Err(Error::Range(format!(
            "walk window [{start}, {s}] not covered by trace [{}, {}]",
            trace.start_round(),
            trace.end_round()
        )));
    }
    let rate = params.adversarial_rate();
    let chain: Vec<u64> = (start..=s)
        .map(|r| trace.count_at(r))
        .collect::<Result<_>>()?;

    let leads: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            // Per-trial generator seeded through the mixer so streams are
            // well separated regardless of worker scheduling.
            let mut rng = SplitMix64::new(SplitMix64::new(seed.wrapping_add(t)).next_u64());
            let mut lead: i64 = 0;
            for &observed in &chain {
                lead = (lead + rng.next_poisson(rate) as i64 - observed as i64).max(0);
            }
            lead as u64
        })
        .collect();

    let max_lead = leads.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0u64; max_lead as usize + 1];
    for lead in leads {
        histogram[lead as usize] += 1;
    }
    let mut tail_counts = histogram;
    for i in (0..tail_counts.len() - 1).rev() {
        tail_counts[i] += tail_counts[i + 1];
    }
    Ok(TrialStats {
        trials,
        tail_counts,
    })
}

/// Re-derives the on-chain adversarial budget by direct enumeration of the
/// (total production, malicious count) grid: every pair `(t, b)` with
/// `t >= chain` contributes `P(T=t)/P(T>=chain) * Binomial(b; t, f)` to the
/// bin `k = b + (t - chain)`.
pub fn brute_force_bpz(ctx: &BpzContext, t_max: u64) -> Result<Pmf> {
    if t_max < ctx.chain_blocks {
        return Err(Error::Domain(format!(
            "t_max {t_max} below observed chain {}",
            ctx.chain_blocks
        )));
    }
    let rate = ctx.window_rounds as f64 * ctx.params.blocks_per_round_target;
    let f = ctx.params.byzantine_fraction;
    let chain = ctx.chain_blocks;

    // Poisson weights for t in [0, t_max] by the plain forward recurrence.
    let mut poisson = vec![0.0f64; t_max as usize + 1];
    poisson[0] = (-rate).exp();
    for t in 1..=t_max as usize {
        poisson[t] = poisson[t - 1] * rate / t as f64;
    }
    // Normalizer summed over the enumerated region itself, so deep
    // conditioning does not cancel against 1.
    let normalizer: f64 = poisson[chain as usize..].iter().sum();
    if normalizer <= 0.0 {
        return Err(Error::DegenerateCondition {
            window_rounds: ctx.window_rounds,
            chain_blocks: ctx.chain_blocks,
        });
    }

    let mut bins = vec![0.0f64; (t_max - chain + t_max) as usize + 1];
    for t in chain..=t_max {
        let p_total = poisson[t as usize] / normalizer;
        if p_total == 0.0 {
            continue;
        }
        let z = t - chain;
        // Binomial(b; t, f) by recurrence from b = 0.
        let mut p_mal = (1.0 - f).powi(t as i32);
        for b in 0..=t {
            bins[(b + z) as usize] += p_total * p_mal;
            if b < t {
                p_mal *= (t - b) as f64 / (b + 1) as f64 * f / (1.0 - f);
            }
        }
    }
    Ok(Pmf::from_parts(0, bins))
}

/// The three-span error combination evaluated by a naive triple loop with no
/// precomputed tails and no algebraic shortcuts.
pub fn brute_force_error(lead: &Pmf, recent: &Pmf, future: &Pmf, k: u64) -> f64 {
    let k = k as i64;
    let mut total = 0.0;
    for (l, pl) in lead.iter() {
        if l >= k {
            total += pl;
        }
    }
    total = total.min(1.0);
    for (l, pl) in lead.iter() {
        if l >= k {
            continue;
        }
        let mut tail_b = 0.0;
        for (b, pb) in recent.iter() {
            if b >= k - l {
                tail_b += pb;
            }
        }
        let mut inner = tail_b.min(1.0);
        for (b, pb) in recent.iter() {
            if b >= k - l {
                continue;
            }
            let mut tail_m = 0.0;
            for (m, pm) in future.iter() {
                if m >= k - l - b {
                    tail_m += pm;
                }
            }
            inner += pb * tail_m.min(1.0);
        }
        total += pl * inner;
    }
    total.min(1.0)
}

/// Skellam pmf at `k` from the direct series
/// `e^{-(a+b)} sum_m a^{m+k} b^m / ((m+k)! m!)`,
/// evaluated by iterated multiplication. Independent of both the convolution
/// path and the log-space primitives.
pub fn skellam_bessel_series(k: i64, mu1: f64, mu2: f64) -> f64 {
    let (k, a, b) = if k >= 0 {
        (k as u64, mu1, mu2)
    } else {
        ((-k) as u64, mu2, mu1)
    };
    if b == 0.0 {
        // Degenerate: plain Poisson(a) at k.
        let mut term = (-a).exp();
        for j in 1..=k {
            term *= a / j as f64;
        }
        return term;
    }
    let mut term = (-a - b).exp();
    for j in 1..=k {
        term *= a / j as f64;
    }
    let mut sum = term;
    let mut m = 0u64;
    loop {
        term *= a * b / ((m + 1) as f64 * (m + 1 + k) as f64);
        m += 1;
        sum += term;
        if (term < sum * 1e-17 && (m * m) as f64 > a * b) || m > 200_000 {
            break;
        }
    }
    sum
}

/// Poisson pmf by direct series evaluation: `e^{-rate} * prod_j rate / j`.
pub fn poisson_series(k: u64, rate: f64) -> f64 {
    let mut acc = (-rate).exp();
    for j in 1..=k {
        acc *= rate / j as f64;
    }
    acc
}

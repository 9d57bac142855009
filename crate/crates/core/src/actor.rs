//! On-chain (smart-contract) view calculator.
//!
//! A contract sees only the chain it runs in, so every block absent from the
//! observed chain must be assumed to help the adversary. The per-window
//! adversarial budget becomes `BpZ = X_f + Z`: malicious blocks plus all
//! off-chain blocks, conditioned on the total production covering the
//! observed chain. Malicious off-chain blocks are counted on both sides,
//! which favors the adversary. `BpZ` replaces the Poisson laws in the lead
//! and recent-past spans; the future span and the final combination are
//! unchanged from the node view.

use crate::chain::{ChainTrace, FinalityReport, NetworkParams, ReportEntry, TruncationConfig, View};
use crate::error::{Error, Result};
use crate::node::{combine_error_probability, future_distribution, report_range};
use crate::prob::{binomial_pmf, poisson_pmf, poisson_tail, Pmf};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// One evaluation window for the on-chain budget: `window_rounds` consecutive
/// rounds in which the observed chain gained `chain_blocks` blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpzContext {
    pub window_rounds: u64,
    pub chain_blocks: u64,
    pub params: NetworkParams,
}

impl BpzContext {
    pub fn new(window_rounds: u64, chain_blocks: u64, params: NetworkParams) -> Result<Self> {
        if window_rounds == 0 {
            return Err(Error::Domain("window must span at least one round".into()));
        }
        Ok(BpzContext {
            window_rounds,
            chain_blocks,
            params,
        })
    }

    fn production_rate(&self) -> f64 {
        self.window_rounds as f64 * self.params.blocks_per_round_target
    }
}

/// Law of the total production `T` over the window given `T >= chain_blocks`:
/// `P(T = t | T >= chain) = poisson_pmf(t, W * e) / poisson_tail(chain, W * e)`
/// for `t >= chain_blocks`, zero below.
pub fn conditional_total_pmf(ctx: &BpzContext, trunc: &TruncationConfig) -> Result<Pmf> {
    let rate = ctx.production_rate();
    let floor = trunc.early_stop_floor;
    let normalizer = poisson_tail(ctx.chain_blocks, rate)?;
    if normalizer < floor {
        return Err(Error::DegenerateCondition {
            window_rounds: ctx.window_rounds,
            chain_blocks: ctx.chain_blocks,
        });
    }
    let mut mass = Vec::new();
    let mut value = poisson_pmf(ctx.chain_blocks, rate)?;
    for offset in 0..=trunc.max_k_lb as u64 {
        mass.push(value / normalizer);
        let at = ctx.chain_blocks + offset;
        let next = value * rate / (at + 1) as f64;
        if (at + 1) as f64 > rate {
            let denom = (at + 2) as f64 - rate;
            if next * (at + 2) as f64 / denom / normalizer < floor {
                break;
            }
        }
        value = next;
    }
    Ok(Pmf::from_parts(ctx.chain_blocks as i64, mass))
}

/// Pmf of the adversarial budget `BpZ = X_f + Z` given the observed chain:
///
/// `P(BpZ = k | chain) = sum_z P(T = z + chain | T >= chain) * P(X_f = k - z | T = z + chain)`
///
/// where `X_f | T = t` is Binomial(t, f) by Poisson splitting. The sum runs
/// over `z` with `k - z <= z + chain`, since there cannot be more malicious
/// blocks than blocks produced. Support `[0, max_k_lb]`.
pub fn bpz_pmf(ctx: &BpzContext, trunc: &TruncationConfig) -> Result<Pmf> {
    let total = conditional_total_pmf(ctx, trunc)?;
    let f = ctx.params.byzantine_fraction;
    let chain = ctx.chain_blocks as i64;
    let floor = trunc.early_stop_floor;
    let mut mass = Vec::with_capacity(trunc.max_k_lb + 1);
    for k in 0..=trunc.max_k_lb as i64 {
        // k - z <= z + chain  =>  z >= (k - chain) / 2, rounded up.
        let z_lo = ((k - chain).max(0) + 1) / 2;
        let mut entry = 0.0;
        for z in z_lo..=k {
            let t = z + chain;
            let p_total = total.value_at(t);
            if p_total == 0.0 {
                if t > total.support_max().unwrap_or(i64::MIN) {
                    break;
                }
                continue;
            }
            entry += p_total * binomial_pmf((k - z) as u64, t as u64, f)?;
        }
        mass.push(entry);
    }
    let mut pmf = Pmf::from_parts(0, mass);
    trim_tail(&mut pmf, floor);
    Ok(pmf)
}

fn trim_tail(pmf: &mut Pmf, floor: f64) {
    match pmf.mass().iter().rposition(|&m| m >= floor) {
        Some(last) => {
            let offset = pmf.offset();
            *pmf = Pmf::from_parts(offset, pmf.mass()[..=last].to_vec());
        }
        None => *pmf = Pmf::empty(),
    }
}

/// Shared state for on-chain calculations: the horizon envelope and a
/// concurrent per-(window, chain) cache of `BpZ` pmfs. Window pmfs depend
/// only on those two keys once the parameters are fixed, and the same windows
/// recur constantly across rounds of a trace.
pub struct ActorCalculator {
    params: NetworkParams,
    trunc: TruncationConfig,
    future: Pmf,
    cache: RwLock<HashMap<(u64, u64), Arc<Pmf>>>,
}

impl ActorCalculator {
    pub fn new(params: NetworkParams, trunc: TruncationConfig) -> Self {
        let future = future_distribution(&params, &trunc);
        ActorCalculator {
            params,
            trunc,
            future,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn trunc(&self) -> &TruncationConfig {
        &self.trunc
    }

    fn bpz(&self, window_rounds: u64, chain_blocks: u64) -> Result<Arc<Pmf>> {
        let key = (window_rounds, chain_blocks);
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let ctx = BpzContext::new(window_rounds, chain_blocks, self.params)?;
        let pmf = Arc::new(bpz_pmf(&ctx, &self.trunc)?);
        Ok(self
            .cache
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert(pmf)
            .clone())
    }

    /// Lead envelope with `BpZ` in place of the per-window Poisson law; the
    /// advantage offsets over the observed chain, the window lengths
    /// (single-round included), and the union-bound sum across windows are
    /// unchanged from the node view.
    pub fn lead_distribution(&self, trace: &ChainTrace, s: i64) -> Result<Pmf> {
        let max_i = self.trunc.max_i_l as i64;
        if s - max_i < trace.start_round() || s > trace.end_round() {
            return Err(Error::Range(format!(
                "lead window [{}, {s}] not covered by trace [{}, {}]",
                s - max_i,
                trace.start_round(),
                trace.end_round()
            )));
        }
        let floor = self.trunc.early_stop_floor;
        let mut laws = Vec::with_capacity(self.trunc.max_i_l + 1);
        for i in 0..=max_i {
            let observed = trace.window_sum(s - i, s)?;
            let budget = self.bpz((i + 1) as u64, observed)?;
            let mass: Vec<f64> = (0..=self.trunc.max_k_lb as i64)
                .map(|k| budget.value_at(k + observed as i64))
                .collect();
            laws.push(Pmf::from_parts(0, mass));
        }
        let mut envelope = crate::node::summed_envelope(&laws);
        trim_tail(&mut envelope, floor);
        Ok(envelope)
    }

    /// Recent-past law with `BpZ` over the window `(s, c]`.
    pub fn recent_distribution(&self, trace: &ChainTrace, s: i64, c: i64) -> Result<Pmf> {
        if c <= s {
            return Err(Error::Range(format!(
                "current round {c} must be after target round {s}"
            )));
        }
        let observed = trace.window_sum(s + 1, c)?;
        Ok((*self.bpz((c - s) as u64, observed)?).clone())
    }

    /// On-chain error-probability bound for target round `s` seen from `c`.
    pub fn error_probability(&self, trace: &ChainTrace, s: i64, c: i64) -> Result<f64> {
        let lead = self.lead_distribution(trace, s)?;
        let recent = self.recent_distribution(trace, s, c)?;
        let advantage = trace.window_sum(s + 1, c)?;
        Ok(combine_error_probability(
            &lead,
            &recent,
            &self.future,
            advantage,
            self.trunc.early_stop_floor,
        ))
    }

    /// Actor-view counterpart of the node report.
    pub fn report(&self, trace: &ChainTrace, settlement: u64) -> Result<FinalityReport> {
        let (first_c, last_c) = report_range(trace, settlement, &self.trunc)?;
        let entries: Vec<ReportEntry> = (first_c..=last_c)
            .into_par_iter()
            .map(|c| {
                let s = c - settlement as i64;
                let error = self.error_probability(trace, s, c)?;
                Ok(ReportEntry {
                    target_round: s,
                    current_round: c,
                    good_advantage: trace.window_sum(s + 1, c)?,
                    error_probability: error,
                    view: View::Actor,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FinalityReport { entries })
    }
}

/// One-shot actor lead envelope; use [`ActorCalculator`] for repeated rounds.
pub fn actor_lead_distribution(
    trace: &ChainTrace,
    s: i64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
) -> Result<Pmf> {
    ActorCalculator::new(*params, *trunc).lead_distribution(trace, s)
}

/// One-shot actor recent-past law over `(s, c]`.
pub fn actor_recent_distribution(
    trace: &ChainTrace,
    s: i64,
    c: i64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
) -> Result<Pmf> {
    ActorCalculator::new(*params, *trunc).recent_distribution(trace, s, c)
}

/// One-shot on-chain error-probability bound.
pub fn actor_error_probability(
    trace: &ChainTrace,
    s: i64,
    c: i64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
) -> Result<f64> {
    ActorCalculator::new(*params, *trunc).error_probability(trace, s, c)
}

/// One-shot actor-view report over the whole trace.
pub fn actor_report(
    trace: &ChainTrace,
    settlement: u64,
    params: &NetworkParams,
    trunc: &TruncationConfig,
) -> Result<FinalityReport> {
    ActorCalculator::new(*params, *trunc).report(trace, settlement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::{self, POISSON_BUILD_CAP};

    fn params(f: f64) -> NetworkParams {
        NetworkParams::new(5.0, f, 900).unwrap()
    }

    fn ctx(window: u64, chain: u64, f: f64) -> BpzContext {
        BpzContext::new(window, chain, params(f)).unwrap()
    }

    #[test]
    fn conditional_total_unconditioned_is_plain_poisson() {
        let trunc = TruncationConfig::default();
        let got = conditional_total_pmf(&ctx(3, 0, 0.3), &trunc).unwrap();
        let want = Pmf::poisson(15.0, trunc.early_stop_floor, POISSON_BUILD_CAP).unwrap();
        for (t, m) in got.iter() {
            assert!((m - want.value_at(t)).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn conditional_total_normalizes() {
        let trunc = TruncationConfig::default();
        for &(window, chain) in &[(1u64, 5u64), (10, 48), (30, 160), (5, 0)] {
            let pmf = conditional_total_pmf(&ctx(window, chain, 0.3), &trunc).unwrap();
            assert!(
                (pmf.total_mass() - 1.0).abs() < 1e-9,
                "window={window} chain={chain}: mass={}",
                pmf.total_mass()
            );
        }
    }

    #[test]
    fn conditional_total_single_round_example() {
        let trunc = TruncationConfig::default();
        let pmf = conditional_total_pmf(&ctx(1, 5, 0.3), &trunc).unwrap();
        let want = poisson_pmf(5, 5.0).unwrap() / poisson_tail(5, 5.0).unwrap();
        assert!((pmf.value_at(5) - want).abs() < 1e-12);
        assert!((pmf.value_at(5) - 0.3136).abs() < 1e-4);
        assert_eq!(pmf.value_at(4), 0.0);
    }

    #[test]
    fn conditional_total_degenerate_chain_errors() {
        let trunc = TruncationConfig::default();
        let err = conditional_total_pmf(&ctx(1, 300, 0.3), &trunc);
        assert!(matches!(err, Err(Error::DegenerateCondition { .. })));
    }

    #[test]
    fn bpz_no_byzantine_no_chain_is_total_production() {
        let trunc = TruncationConfig::default();
        let got = bpz_pmf(&ctx(2, 0, 0.0), &trunc).unwrap();
        let want = Pmf::poisson(10.0, trunc.early_stop_floor, POISSON_BUILD_CAP).unwrap();
        for (k, m) in got.iter() {
            assert!((m - want.value_at(k)).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn bpz_single_round_example() {
        let trunc = TruncationConfig::default();
        let got = bpz_pmf(&ctx(1, 5, 0.3), &trunc).unwrap();
        // Only (z=0, b=0) reaches k=0: P(T=5 | T>=5) * 0.7^5.
        let want = poisson_pmf(5, 5.0).unwrap() / poisson_tail(5, 5.0).unwrap()
            * 0.7f64.powi(5);
        assert!((got.value_at(0) - want).abs() < 1e-12);
        assert!((got.value_at(0) - 0.0527).abs() < 1e-4);
    }

    #[test]
    fn bpz_mass_is_subnormalized() {
        let trunc = TruncationConfig::default();
        for &(window, chain, f) in &[(1u64, 5u64, 0.3f64), (10, 48, 0.3), (4, 11, 0.1)] {
            let pmf = bpz_pmf(&ctx(window, chain, f), &trunc).unwrap();
            assert!(pmf.total_mass() <= 1.0 + 1e-9);
            assert!(pmf.total_mass() > 1.0 - 1e-6);
        }
    }

    #[test]
    fn bpz_matches_small_grid_enumeration() {
        let trunc = TruncationConfig::default();
        for &(window, chain) in &[(1u64, 5u64), (2, 9), (3, 12)] {
            let got = bpz_pmf(&ctx(window, chain, 0.3), &trunc).unwrap();
            let want = crate::oracle::brute_force_bpz(&ctx(window, chain, 0.3), 300).unwrap();
            for k in 0..=60i64 {
                assert!(
                    (got.value_at(k) - want.value_at(k)).abs() < 1e-12,
                    "window={window} chain={chain} k={k}"
                );
            }
        }
    }

    #[test]
    fn actor_lead_on_empty_chain_reduces_to_unshifted_budget() {
        let trace = ChainTrace::new(0, vec![0; 120]);
        let trunc = TruncationConfig::default();
        let calc = ActorCalculator::new(params(0.3), trunc);
        let lead = calc.lead_distribution(&trace, 60).unwrap();
        for k in 0..=20i64 {
            let mut want = 0.0f64;
            for i in 0..=trunc.max_i_l as u64 {
                let budget = bpz_pmf(&ctx(i + 1, 0, 0.3), &trunc).unwrap();
                want += budget.value_at(k);
            }
            want = want.min(1.0);
            assert!((lead.value_at(k) - want).abs() < 1e-15, "k={k}");
        }
    }

    #[test]
    fn actor_lead_matches_exhaustive_double_loop() {
        let trace = ChainTrace::new(0, vec![5; 120]);
        let trunc = TruncationConfig::default();
        let calc = ActorCalculator::new(params(0.3), trunc);
        let lead = calc.lead_distribution(&trace, 60).unwrap();
        for k in 0..=lead.support_max().unwrap_or(0) {
            let mut want = 0.0f64;
            for i in 0..=trunc.max_i_l as i64 {
                let observed = trace.window_sum(60 - i, 60).unwrap();
                let budget = bpz_pmf(&ctx((i + 1) as u64, observed, 0.3), &trunc).unwrap();
                want += budget.value_at(k + observed as i64);
            }
            want = want.min(1.0);
            assert!((lead.value_at(k) - want).abs() < 1e-15, "k={k}");
        }
    }

    #[test]
    fn actor_recent_no_byzantine_empty_window_is_poisson() {
        let trace = ChainTrace::new(0, vec![0; 60]);
        let trunc = TruncationConfig::default();
        let calc = ActorCalculator::new(params(0.0), trunc);
        let recent = calc.recent_distribution(&trace, 40, 44).unwrap();
        let want = Pmf::poisson(20.0, trunc.early_stop_floor, POISSON_BUILD_CAP).unwrap();
        for (k, m) in recent.iter() {
            assert!((m - want.value_at(k)).abs() < 1e-12, "k={k}");
        }
        assert!(recent.total_mass() <= 1.0 + 1e-9);
    }

    #[test]
    fn actor_error_zero_byzantine_is_positive_but_bounded() {
        // Off-chain honest blocks still count toward the adversary, so the
        // actor bound stays strictly above the floor even at f = 0.
        let trace = ChainTrace::new(0, vec![5; 100]);
        let trunc = TruncationConfig::default();
        let err = actor_error_probability(&trace, 60, 70, &params(0.0), &trunc).unwrap();
        assert!(err > trunc.early_stop_floor);
        assert!(err < 1.0);
    }

    #[test]
    fn actor_error_matches_node_shape_and_dominates() {
        let trace = ChainTrace::new(0, vec![5; 150]);
        let p = params(0.3);
        let trunc = TruncationConfig::default();
        let calc = ActorCalculator::new(p, trunc);
        for &(s, c) in &[(80i64, 90i64), (80, 110), (100, 140)] {
            let actor = calc.error_probability(&trace, s, c).unwrap();
            let node = node::error_probability(&trace, s, c, &p, &trunc).unwrap();
            assert!(
                actor >= node - 1e-12,
                "s={s} c={c}: actor {actor} < node {node}"
            );
        }
    }

    #[test]
    fn actor_error_matches_triple_sum_oracle() {
        let trace = ChainTrace::new(0, vec![5; 120]);
        let p = params(0.3);
        let trunc = TruncationConfig::default();
        let calc = ActorCalculator::new(p, trunc);
        let (s, c) = (80i64, 85i64);
        let lead = calc.lead_distribution(&trace, s).unwrap();
        let recent = calc.recent_distribution(&trace, s, c).unwrap();
        let future = node::future_distribution(&p, &trunc);
        let advantage = trace.window_sum(s + 1, c).unwrap();
        let want = crate::oracle::brute_force_error(&lead, &recent, &future, advantage)
            .max(trunc.early_stop_floor);
        let got = calc.error_probability(&trace, s, c).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn actor_report_counts_and_errors() {
        let trace = ChainTrace::new(0, vec![5; 100]);
        let p = params(0.3);
        let trunc = TruncationConfig::default();
        let report = actor_report(&trace, 30, &p, &trunc).unwrap();
        assert_eq!(report.entries.len(), 100 - 30 - trunc.max_i_l);
        assert!(report.entries.iter().all(|e| e.view == View::Actor));

        let short = ChainTrace::new(0, vec![5; 2]);
        assert!(matches!(
            actor_report(&short, 5, &p, &trunc),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn actor_calculator_is_deterministic() {
        let trace = ChainTrace::new(0, vec![4; 120]);
        let p = params(0.3);
        let trunc = TruncationConfig::default();
        let a = ActorCalculator::new(p, trunc).report(&trace, 20).unwrap();
        let b = ActorCalculator::new(p, trunc).report(&trace, 20).unwrap();
        assert_eq!(a, b);
    }
}

//! Self-validation checks behind `finality-calc validate`: every analytic
//! path is compared against its independent oracle and the lead envelope is
//! stress-tested against Monte-Carlo walks.

use finality_core::actor::{bpz_pmf, BpzContext};
use finality_core::chain::{ChainTrace, NetworkParams, TruncationConfig};
use finality_core::error::Error;
use finality_core::node;
use finality_core::oracle;
use finality_core::prob::{pmf_convolve, poisson_pmf, Pmf};
use finality_core::sim::{generate_trace, SimConfig, SplitMix64};

pub struct Config {
    pub params: NetworkParams,
    pub trunc: TruncationConfig,
    pub trials: u64,
    pub seed: u64,
    pub inject_fault: bool,
}

/// Runs every check, printing one line per check; returns overall success.
pub fn run_all(config: &Config) -> bool {
    let mut all_ok = true;
    all_ok &= report_delta("poisson-vs-series", 1e-12, check_poisson(config));
    all_ok &= report_delta("skellam-vs-series", 1e-10, check_skellam(config));
    all_ok &= report_delta("bpz-vs-enumeration", 1e-12, check_bpz(config));
    all_ok &= report_delta("error-vs-triple-sum", 1e-12, check_error_combination(config));
    all_ok &= report_margin("mc-lead-domination", check_mc_domination(config));
    all_ok
}

fn report_delta(name: &str, tolerance: f64, result: Result<f64, String>) -> bool {
    match result {
        Ok(delta) => {
            let ok = delta < tolerance;
            println!(
                "check {name}: max delta {delta:.3e} vs tolerance {tolerance:.0e} ({})",
                if ok { "PASS" } else { "FAIL" }
            );
            ok
        }
        Err(msg) => {
            println!("check {name}: FAIL ({msg})");
            false
        }
    }
}

/// The domination statistic is the minimum slack; it must stay non-negative.
fn report_margin(name: &str, result: Result<f64, String>) -> bool {
    match result {
        Ok(margin) => {
            let ok = margin >= 0.0;
            println!(
                "check {name}: min margin {margin:.3e} ({})",
                if ok { "PASS" } else { "FAIL" }
            );
            ok
        }
        Err(msg) => {
            println!("check {name}: FAIL ({msg})");
            false
        }
    }
}

fn check_poisson(_config: &Config) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for &rate in &[0.1, 0.7, 1.5, 5.0, 17.3, 50.0] {
        for k in 0..=200u64 {
            let got = poisson_pmf(k, rate).map_err(|e| e.to_string())?;
            worst = worst.max((got - oracle::poisson_series(k, rate)).abs());
        }
    }
    Ok(worst)
}

fn check_skellam(_config: &Config) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for &(mu1, mu2) in &[(0.5, 0.5), (1.5, 2.0), (2.0, 3.0), (15.0, 19.5), (150.0, 194.7)] {
        let a = Pmf::poisson(mu1, 1e-30, 1 << 20).map_err(|e| e.to_string())?;
        let b = Pmf::poisson(mu2, 1e-30, 1 << 20).map_err(|e| e.to_string())?;
        let skellam = pmf_convolve(&a, &b, true);
        for k in -20i64..=60 {
            let want = oracle::skellam_bessel_series(k, mu1, mu2);
            worst = worst.max((skellam.value_at(k) - want).abs());
        }
    }
    Ok(worst)
}

fn check_bpz(config: &Config) -> Result<f64, String> {
    let mut worst = 0.0f64;
    let mut faulted = config.inject_fault;
    for window in [1u64, 2, 3, 5, 7, 10] {
        for chain in [0u64, 3, 7, 12, 20, 30, 45, 60] {
            let ctx = BpzContext::new(window, chain, config.params)
                .map_err(|e| e.to_string())?;
            let production = match bpz_pmf(&ctx, &config.trunc) {
                Ok(pmf) => pmf,
                Err(Error::DegenerateCondition { .. }) => continue,
                Err(other) => return Err(other.to_string()),
            };
            let production = if faulted {
                faulted = false;
                let mut mass = production.mass().to_vec();
                let idx = 5.min(mass.len() - 1);
                mass[idx] += 1e-6;
                Pmf::from_parts(production.offset(), mass)
            } else {
                production
            };
            let brute =
                oracle::brute_force_bpz(&ctx, chain + 250).map_err(|e| e.to_string())?;
            for k in 0..=config.trunc.max_k_lb as i64 {
                worst = worst.max((production.value_at(k) - brute.value_at(k)).abs());
            }
        }
    }
    Ok(worst)
}

fn check_error_combination(config: &Config) -> Result<f64, String> {
    let trunc = &config.trunc;
    let mut rng = SplitMix64::new(config.seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let fullness = 0.3 + 0.8 * rng.next_f64();
        let f = 0.1 + 0.35 * rng.next_f64();
        let settlement = 1 + (rng.next_u64() % 40) as i64;
        let sim = SimConfig::new(fullness, 200, rng.next_u64(), 5.0)
            .map_err(|e| e.to_string())?;
        let trace = generate_trace(&sim);
        let p = NetworkParams::new(5.0, f, 900).map_err(|e| e.to_string())?;
        let c = trace.end_round() - (rng.next_u64() % 40) as i64;
        let s = c - settlement;

        let lead = node::lead_distribution(&trace, s, &p, trunc).map_err(|e| e.to_string())?;
        let recent = node::recent_distribution(s, c, &p, trunc).map_err(|e| e.to_string())?;
        let future = node::future_distribution(&p, trunc);
        let advantage = trace.window_sum(s + 1, c).map_err(|e| e.to_string())?;
        let production = node::combine_error_probability(
            &lead,
            &recent,
            &future,
            advantage,
            trunc.early_stop_floor,
        );
        let brute = oracle::brute_force_error(&lead, &recent, &future, advantage)
            .max(trunc.early_stop_floor);
        worst = worst.max((production - brute).abs());
    }
    Ok(worst)
}

fn check_mc_domination(config: &Config) -> Result<f64, String> {
    let trunc = &config.trunc;
    let traces = vec![
        ChainTrace::new(0, vec![5; 400]),
        generate_trace(
            &SimConfig::new(0.8, 400, config.seed ^ 0x5EED, 5.0).map_err(|e| e.to_string())?,
        ),
    ];
    let mut min_margin = f64::INFINITY;
    for trace in &traces {
        for &f in &[0.1f64, 0.2, 0.3] {
            let params = NetworkParams::new(
                config.params.blocks_per_round_target,
                f,
                config.params.history_window,
            )
            .map_err(|e| e.to_string())?;
            let s = trace.end_round();
            let stats = oracle::simulate_lead_process(
                trace,
                s,
                &params,
                150,
                config.trials,
                config.seed,
            )
            .map_err(|e| e.to_string())?;
            let lead =
                node::lead_distribution(trace, s, &params, trunc).map_err(|e| e.to_string())?;
            for k in 1..=stats.max_lead() {
                let freq = stats.tail_frequency(k);
                if freq < 1e-3 {
                    continue;
                }
                let se = (freq * (1.0 - freq) / config.trials as f64).sqrt();
                min_margin = min_margin.min(lead.tail_from(k as i64) + 3.0 * se - freq);
            }
        }
    }
    Ok(min_margin)
}

//! Synthetic chain-trace generation at configurable chain fullness.

use crate::chain::ChainTrace;
use crate::error::{Error, Result};

/// SplitMix64: tiny, fast, and bit-stable across platforms. Used for all
/// sampling in this crate so that generated traces and Monte-Carlo runs are
/// reproducible regardless of any ambient randomness library.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Poisson(lambda) draw by inversion of the CDF. Exact for the moderate
    /// rates used here and fully determined by the generator stream.
    pub fn next_poisson(&mut self, lambda: f64) -> u64 {
        debug_assert!(lambda >= 0.0);
        if lambda == 0.0 {
            return 0;
        }
        let u = self.next_f64();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut acc = p;
        while u > acc && p > 0.0 {
            k += 1;
            p *= lambda / k as f64;
            acc += p;
        }
        k
    }
}

/// Configuration for one synthetic trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Chain fullness: ratio of average tipset size to the network target.
    pub fullness: f64,
    pub rounds: u64,
    pub seed: u64,
    pub blocks_per_round_target: f64,
}

impl SimConfig {
    pub fn new(fullness: f64, rounds: u64, seed: u64, blocks_per_round_target: f64) -> Result<Self> {
        if !fullness.is_finite() || !(0.0..=1.2).contains(&fullness) {
            return Err(Error::Domain(format!(
                "chain fullness must be in [0, 1.2], got {fullness}"
            )));
        }
        if rounds == 0 {
            return Err(Error::Domain("round count must be >= 1".into()));
        }
        if !blocks_per_round_target.is_finite() || blocks_per_round_target <= 0.0 {
            return Err(Error::Domain(format!(
                "blocks-per-round target must be positive, got {blocks_per_round_target}"
            )));
        }
        Ok(SimConfig {
            fullness,
            rounds,
            seed,
            blocks_per_round_target,
        })
    }
}

/// Draws `config.rounds` i.i.d. Poisson(fullness * target) tipset sizes,
/// starting at round 0. Identical configs yield identical traces.
pub fn generate_trace(config: &SimConfig) -> ChainTrace {
    let lambda = config.fullness * config.blocks_per_round_target;
    let mut rng = SplitMix64::new(config.seed);
    let counts = (0..config.rounds).map(|_| rng.next_poisson(lambda)).collect();
    ChainTrace::new(0, counts)
}

//! Fixtures shared by the benchmarks.

use confsel_core::simulate::generate_replicate;
use confsel_core::{scenario, Dataset};

/// One replicate of the base scenario (n = 80, 25 covariates).
pub fn base_dataset(replicate: u64) -> Dataset {
    let sc = scenario("base_p25_iv2_cont").expect("registered scenario");
    generate_replicate(&sc, 2024, replicate).expect("simulated data").data
}

/// Deterministic propensity scores and a balanced treatment vector of length `n`.
pub fn matching_instance(n: usize) -> (Vec<f64>, Vec<u8>) {
    let ps = (0..n).map(|i| 0.05 + 0.9 * ((i * 7919) % n) as f64 / n as f64).collect();
    let a = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    (ps, a)
}

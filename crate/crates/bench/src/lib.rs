//! Shared fixtures for the pipeline benchmarks.

use exqte_core::distributions::TailLaw;
use exqte_core::rng::seeded;
use exqte_core::Sample;
use rand::Rng;

/// Pareto(2) outcomes with a randomized 50/50 treatment and one uniform
/// covariate.
pub fn pareto_sample(n: usize, seed: u64) -> Sample {
    let mut rng = seeded(seed);
    let y = TailLaw::Pareto { shape: 2.0, scale: 1.0 }.sample(n, &mut rng).unwrap();
    let d: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
    let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    Sample::new(y, d, x, 1).unwrap()
}

//! Desk-scale coverage check of the full-sample bootstrap interval around
//! the Hill extrapolation estimator.

use exqte_core::distributions::true_model_quantile;
use exqte_core::rng::replication_rng;
use exqte_core::simulation::{generate, SimModel};
use exqte_core::{
    bootstrap_ci, Arm, BootstrapConfig, BootstrapMethod, ExtrapolationConfig, FitOptions,
    SieveBasis,
};
use rand::Rng;

#[test]
fn bs_hill_coverage_near_nominal_on_h1() {
    let n = 1000;
    let p = 5.0 / n as f64;
    let outer_reps = 300;
    let bootstrap_reps = 500;
    let delta_true = true_model_quantile(SimModel::H1, Arm::Treated, 1.0 - p).unwrap()
        - true_model_quantile(SimModel::H1, Arm::Control, 1.0 - p).unwrap();
    let basis = SieveBasis::graded(1, 3).unwrap();
    let fit = FitOptions::default();
    let base = ExtrapolationConfig::new(n, ExtrapolationConfig::default_k(n), p, 0.1).unwrap();

    let mut covered = 0usize;
    let mut completed = 0usize;
    for rep in 0..outer_reps {
        let mut rng = replication_rng(51_000, rep);
        let sample = generate(SimModel::H1, n, &mut rng).unwrap();
        let seed: u64 = rng.random();
        let cfg = BootstrapConfig {
            reps: bootstrap_reps,
            method: BootstrapMethod::Hill,
            base,
            seed,
            max_drop_fraction: 0.2,
        };
        match bootstrap_ci(&sample, &basis, &fit, &cfg) {
            Ok(ci) => {
                completed += 1;
                if ci.ci_lo <= delta_true && delta_true <= ci.ci_hi {
                    covered += 1;
                }
            }
            Err(_) => continue,
        }
    }
    assert!(completed >= 290, "only {completed} of {outer_reps} replications completed");
    let coverage = covered as f64 / completed as f64;
    assert!(
        (0.84..=0.96).contains(&coverage),
        "BS Hill coverage {coverage:.3} outside [0.84, 0.96] (target 0.90)"
    );
}

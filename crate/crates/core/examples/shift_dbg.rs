use exqte_core::rng::replication_rng;
use exqte_core::simulation::{generate, SimModel};
use exqte_core::{fit_sieve_logistic, ipw_arm_quantile, Arm, FitOptions, SieveBasis};

fn main() {
    let n = 600;
    let sample = generate(SimModel::H1, n, &mut replication_rng(37, 0)).unwrap();
    let shifted = sample.with_shifted_outcomes(100.0);
    let basis = SieveBasis::graded(1, 3).unwrap();
    let m1 = fit_sieve_logistic(&sample, &basis, &FitOptions::default()).unwrap();
    let m2 = fit_sieve_logistic(&shifted, &basis, &FitOptions::default()).unwrap();
    assert_eq!(m1.coefficients(), m2.coefficients());
    let level = 1.0 - 50.0 / n as f64;
    let q1 = ipw_arm_quantile(&sample, &m1, Arm::Treated, level).unwrap();
    let q2 = ipw_arm_quantile(&shifted, &m2, Arm::Treated, level).unwrap();
    println!("base sel {:.17e}", q1.value);
    println!("shifted  {:.17e}", q2.value);
    println!("base+100 {:.17e}", q1.value + 100.0);
    // find neighbors of the base selection among treated values
    let mut treated: Vec<f64> = (0..n).filter(|&i| sample.d()[i]==1).map(|i| sample.y()[i]).collect();
    treated.sort_by(f64::total_cmp);
    let pos = treated.iter().position(|&v| v == q1.value).unwrap();
    for j in pos.saturating_sub(2)..=(pos+2).min(treated.len()-1) {
        println!("treated[{j}] = {:.17e}  +100 = {:.17e}", treated[j], treated[j]+100.0);
    }
}

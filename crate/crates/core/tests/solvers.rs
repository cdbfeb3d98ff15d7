use mckv_core::fp_linear::{solve_linear, GridConfig};
use mckv_core::fp_log::{solve_log, EntropyKit};
use mckv_core::quad::trapezoid;
use mckv_core::{Density, ModelParams};
use proptest::prelude::*;

fn grid(h: f64) -> GridConfig<f64> {
    GridConfig::new(h, 0.5 * h * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linear_runs_keep_the_mass_ledger(rate in 0.7f64..2.0, alpha in 0.0f64..2.0) {
        let h = 0.05;
        let g = grid(h).with_x_max(25.0);
        let sol = solve_linear(&Density::gamma_shape2(rate).unwrap(), &ModelParams::linear(alpha).unwrap(), 0.5, &g).unwrap();
        prop_assert!(sol.blowup.is_none());
        let tol = 10.0 * (h * h + g.dt);
        let m0 = sol.mass.values()[0];
        for ((_, m), (_, s)) in sol.mass.iter().zip(sol.loss.iter()) {
            prop_assert!((m + s - m0).abs() < tol);
        }
        prop_assert!(sol.loss.values().windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(sol.mass.values().windows(2).all(|w| w[1] <= w[0] + 1e-14));
        prop_assert!(sol.stats.min_value >= -1e-10);
        // s is the time integral of the recorded flux
        let (t, n) = (sol.flux.times(), sol.flux.values());
        let integral: f64 = (1..t.len()).map(|k| 0.5 * (n[k] + n[k - 1]) * (t[k] - t[k - 1])).sum();
        let s_end = sol.loss.last().unwrap().1;
        prop_assert!((integral - s_end).abs() < 0.05 * s_end + 1e-6);
    }

    #[test]
    fn log_runs_keep_unit_r_mass(alpha in 0.0f64..2.0, beta in 0.0f64..2.0) {
        let h = 0.05;
        let g = grid(h).with_x_max(30.0).with_snapshots(vec![0.25, 0.5]);
        let q0 = Density::gamma_shape2(1.0).unwrap();
        let sol = solve_log(&q0, &ModelParams::log(alpha, beta).unwrap(), 0.5, &g).unwrap();
        prop_assert!(sol.blowup.is_none());
        prop_assert!(sol.qbar.values().windows(2).all(|w| w[1] <= w[0] + 1e-15));
        prop_assert!(sol.stats.max_ledger_error < 1e-6);
        for snap in &sol.r_snapshots {
            prop_assert!((trapezoid(h, &snap.values) - 1.0).abs() < 1e-12);
            let q = sol.q_profile(snap);
            let qbar = sol.qbar.interpolate(snap.t).unwrap();
            prop_assert!((trapezoid(h, &q) - qbar).abs() < 1e-8);
        }
    }
}

#[test]
fn ordered_initial_data_give_ordered_boundaries() {
    let g = grid(0.02).with_x_max(20.0);
    let params = ModelParams::linear(0.5).unwrap();
    let near = solve_linear(&Density::narrow_gaussian(1.0, 0.1).unwrap(), &params, 2.0, &g).unwrap();
    let far = solve_linear(&Density::narrow_gaussian(1.5, 0.1).unwrap(), &params, 2.0, &g).unwrap();
    for ((_, s_far), (_, s_near)) in far.loss.iter().zip(near.loss.iter()) {
        assert!(s_far <= s_near + 1e-9);
    }
}

#[test]
fn the_two_lambda_definitions_agree() {
    let h = 0.02;
    let g = grid(h).with_x_max(30.0).with_snapshots(vec![0.2, 0.6, 1.0]);
    let sol = solve_log(&Density::gamma_shape2(1.0).unwrap(), &ModelParams::log(0.5, 0.2).unwrap(), 1.0, &g).unwrap();
    assert!(sol.r_snapshots.len() >= 3);
    for snap in &sol.r_snapshots {
        let from_r = sol.lambda.interpolate(snap.t).unwrap();
        let from_q = sol.lambda_from_q(snap);
        assert!((from_r - from_q).abs() < 10.0 * h * h, "t={} {from_r} {from_q}", snap.t);
    }
}

#[test]
fn survival_respects_the_budget_bound() {
    let h = 0.02;
    let g = grid(h).with_x_max(50.0);
    let sol = solve_log(&Density::gamma_shape2(1.0).unwrap(), &ModelParams::log(0.05, 2.0).unwrap(), 3.0, &g).unwrap();
    assert!(sol.blowup.is_none());
    // ln q̄ = ∫λ and Cauchy-Schwarz gives |∫λ| ≤ √(t ∫λ²)
    for ((t, q), (_, b)) in sol.qbar.iter().zip(sol.budget.iter()) {
        assert!(q >= (-(t * b).sqrt()).exp() * (1.0 - 1e-9));
    }
}

#[test]
fn stationary_profile_is_the_entropy_reference() {
    let kit = EntropyKit::<f64>::new(0.125, 0.01).unwrap();
    let (i, _) = kit.functionals(kit.omega());
    assert!((i - kit.stationary_i()).abs() < 1e-12);
}

#[test]
fn configuration_errors_are_reported() {
    let d = Density::gamma_shape2(1.0).unwrap();
    let p = ModelParams::linear(1.0).unwrap();
    assert!(solve_linear(&d, &p, 1.0, &GridConfig::new(0.1, 0.1)).is_err());
    assert!(solve_linear(&d, &p, 1.0, &GridConfig::new(-0.1, 0.001)).is_err());
    assert!(solve_log(&d, &p, 1.0, &grid(0.1)).is_err());
}

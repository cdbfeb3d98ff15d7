use mckv_core::particles::{simulate, simulate_ensemble, InitialLaw, ParticleConfig, ParticleEnsemble};
use mckv_core::{Density, ModelParams};
use proptest::prelude::*;

fn cfg(n: usize, seed: u64) -> ParticleConfig<f64> {
    ParticleConfig { n, dt: 0.01, seed, bridge: true }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn aggregates_ignore_storage_order(seed in any::<u64>(), rot in 1usize..300, log in any::<bool>()) {
        let params = if log { ModelParams::log(0.8, 0.3).unwrap() } else { ModelParams::linear(1.5).unwrap() };
        let ens = ParticleEnsemble::sample(&InitialLaw::Density(Density::gamma_shape2(1.0).unwrap()), 300, seed);
        let mut pairs: Vec<(f64, u64)> = ens.positions.iter().copied().zip(ens.streams.iter().copied()).collect();
        pairs.rotate_left(rot);
        pairs.swap(0, 7);
        let (xs, ids): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let shuffled = ParticleEnsemble::from_parts(xs, ids, seed);
        let a = simulate_ensemble(ens, &params, 1.0, &cfg(300, seed)).unwrap();
        let b = simulate_ensemble(shuffled, &params, 1.0, &cfg(300, seed)).unwrap();
        prop_assert_eq!(a.empirical, b.empirical);
        prop_assert_eq!(a.newly_defaulted, b.newly_defaulted);
    }

    #[test]
    fn contagion_is_monotone_in_alpha(seed in any::<u64>(), a in 0.0f64..2.0, da in 0.0f64..2.0) {
        let law = InitialLaw::Density(Density::gamma_shape2(1.0).unwrap());
        let lo = simulate(&law, &ModelParams::linear(a).unwrap(), 1.0, &cfg(400, seed)).unwrap();
        let hi = simulate(&law, &ModelParams::linear(a + da).unwrap(), 1.0, &cfg(400, seed)).unwrap();
        for ((_, l), (_, h)) in lo.empirical.iter().zip(hi.empirical.iter()) {
            prop_assert!(h >= l);
        }
    }
}

#[test]
fn output_is_independent_of_thread_count() {
    let law = InitialLaw::Density(Density::gamma_shape2(1.0).unwrap());
    let params = ModelParams::linear(2.0).unwrap();
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut out = Vec::new();
            simulate(&law, &params, 0.5, &ParticleConfig { n: 10_000, dt: 0.005, seed: 5, bridge: true })
                .unwrap()
                .write_csv(&mut out)
                .unwrap();
            out
        })
    };
    let one = csv(1);
    assert!(String::from_utf8(one.clone()).unwrap().starts_with("t,loss_or_survival,newly_defaulted\n"));
    assert_eq!(one, csv(3));
    assert_eq!(one, csv(8));
}

#[test]
fn different_seeds_give_different_paths() {
    let law = InitialLaw::Point(0.5);
    let params = ModelParams::linear(0.0).unwrap();
    let a = simulate(&law, &params, 1.0, &cfg(1000, 1)).unwrap();
    let b = simulate(&law, &params, 1.0, &cfg(1000, 2)).unwrap();
    assert_ne!(a.empirical, b.empirical);
}

#[test]
fn log_model_tracks_survival_and_can_terminate() {
    let law = InitialLaw::Point(0.05);
    let run = simulate(&law, &ModelParams::log(3.0, 0.0).unwrap(), 1.0, &cfg(500, 9)).unwrap();
    assert_eq!(run.empirical.values()[0], 1.0);
    assert!(run.empirical.values().windows(2).all(|w| w[1] <= w[0]));
    if let Some(t) = run.terminated_at {
        assert_eq!(run.empirical.last().unwrap(), (t, 0.0));
    }
}

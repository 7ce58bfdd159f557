use proptest::prelude::*;
use reslru_core::batch::Sequential;
use reslru_core::markov::{
    bootstrap, build_res_lru_channel, fit_values, monte_carlo_surface17, pbar_curve,
    res_lru_population_map, steady_state, summarize, surface17_layout, FitModel, LruParams,
    MarkovConfig, MarkovRates, QubitSpec, Role,
};
use reslru_core::units::{ns, us};

fn fluxed_data() -> Vec<QubitSpec> {
    vec![
        QubitSpec::new("D4", Role::Data, 4, true).unwrap(),
        QubitSpec::new("D3", Role::Data, 3, true).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steady_state_is_the_long_time_limit(cl in 1e-4..0.5f64, lc in 1e-3..0.99f64) {
        let rates = MarkovRates::new(cl, lc).unwrap();
        let curve = pbar_curve(&rates, 10_000);
        prop_assert!((curve.last().unwrap() - steady_state(&rates)).abs() < 1e-8);
    }

    #[test]
    fn noiseless_fit_recovers_rates(cl in 1e-3..0.05f64, lc in 0.05..0.95f64, discrete in any::<bool>()) {
        let model = if discrete { FitModel::Discrete } else { FitModel::Continuous };
        let rates = MarkovRates::new(cl, lc).unwrap();
        let y = model.curve(cl, cl + lc, 20);
        let f = fit_values(&y, model).unwrap();
        prop_assert!((f.rates.gamma_cl - rates.gamma_cl).abs() < 1e-6);
        prop_assert!((f.rates.gamma_lc - rates.gamma_lc).abs() < 1e-6);
    }

    // The channel folds induced leakage into the removal rate, which is only
    // consistent with the affine map once R + 2 L1 is close to one.
    #[test]
    fn channel_matches_affine_map(
        r in 0.95..1.0f64, l1f in 0.0..1.0f64,
        p0 in 0.0..1.0f64, p1f in 0.0..1.0f64,
        t_lru in 20.0..200.0f64,
    ) {
        let l1 = (0.5 * (1.0 - r) * l1f).min(0.005);
        let lru = LruParams { r, l1_lru: l1, ..LruParams::fig4() };
        let (t, t1) = (ns(t_lru), us(30.0));
        let ch = build_res_lru_channel(&lru, t, t1, us(60.0)).unwrap();
        prop_assert!(ch.choi_min_eigenvalue().unwrap() >= -1e-9);
        prop_assert!(ch.trace_defect() < 1e-9);
        let p1 = (1.0 - p0) * p1f;
        let pop = [p0, p1, 1.0 - p0 - p1];
        let a = ch.population_action(pop);
        let b = res_lru_population_map(pop, &lru).unwrap();
        for k in 0..3 {
            prop_assert!((a[k] - b[k]).abs() <= 2.0 * t / t1, "{} vs {}", a[k], b[k]);
        }
    }
}

#[test]
fn lifetime_floor() {
    // The per-cycle chain cannot stay leaked for less than one cycle; the
    // chain-exact model respects that within its bootstrap error.
    let layout = surface17_layout();
    for (r, pm22) in [(0.95, 0.9), (1.0, 1.0), (0.8, 0.5)] {
        let lru = LruParams {
            r,
            pm22,
            ..LruParams::fig4()
        };
        let cfg = MarkovConfig {
            runs: 5000,
            use_data_lru: true,
            use_ancilla_lru: true,
            ..MarkovConfig::default()
        };
        let traces = monte_carlo_surface17(&layout, &cfg, &lru, 9).unwrap();
        for s in summarize(&Sequential, &traces, FitModel::Discrete, 30, 1) {
            let (f, e) = (s.fit.unwrap(), s.errors.unwrap());
            assert!(
                f.lifetime >= 1.0 - 2.0 * e.lifetime,
                "{} R={r}: {} +- {}",
                s.qubit,
                f.lifetime,
                e.lifetime
            );
        }
    }
}

#[test]
fn perfect_lru_lifetime_is_one_cycle() {
    let cfg = MarkovConfig {
        use_data_lru: true,
        ..MarkovConfig::default()
    };
    let lru = LruParams {
        r: 1.0,
        l1_lru: 0.0,
        ..LruParams::fig4()
    };
    let traces = monte_carlo_surface17(&fluxed_data(), &cfg, &lru, 3).unwrap();
    // The trace is flat after the first cycle, so the decay rate is poorly
    // conditioned; judge against the bootstrap error as well.
    for s in summarize(&Sequential, &traces, FitModel::Discrete, 50, 4) {
        let (f, e) = (s.fit.unwrap(), s.errors.unwrap());
        let tol = (3.0 * e.lifetime).max(0.1);
        assert!(
            (f.lifetime - 1.0).abs() <= tol,
            "{}: {} +- {}",
            s.qubit,
            f.lifetime,
            e.lifetime
        );
    }
}

#[test]
fn lifetime_follows_inverse_seepage() {
    // Chain-exact lifetime 1 / (G_LC + R - G_LC R) for an LRU every cycle.
    let layout = fluxed_data();
    let base = MarkovConfig {
        use_data_lru: true,
        ..MarkovConfig::default()
    };
    for r in [0.2, 0.5, 0.8, 0.95, 1.0] {
        let lru = LruParams {
            r,
            l1_lru: 0.0,
            ..LruParams::fig4()
        };
        let traces = monte_carlo_surface17(&layout, &base, &lru, 21).unwrap();
        for (t, s) in traces
            .iter()
            .zip(summarize(&Sequential, &traces, FitModel::Discrete, 40, 2))
        {
            let lc = t.rates.gamma_lc;
            let expect = 1.0 / (lc + r - lc * r);
            let (f, e) = (s.fit.unwrap(), s.errors.unwrap());
            let tol = 3.0 * e.lifetime + 1e-3;
            assert!(
                (f.lifetime - expect).abs() <= tol,
                "{} R={r}: {} vs {expect} (+- {})",
                s.qubit,
                f.lifetime,
                e.lifetime
            );
        }
    }
}

#[test]
fn doubling_runs_halves_bootstrap_variance() {
    let layout = fluxed_data()[..1].to_vec();
    let spread = |runs: usize| {
        let cfg = MarkovConfig {
            runs,
            ..MarkovConfig::default()
        };
        let t = monte_carlo_surface17(&layout, &cfg, &LruParams::fig4(), 5).unwrap();
        bootstrap(&t[0], FitModel::Continuous, 200, 6).steady_state
    };
    let (a, b) = (spread(4000), spread(8000));
    let ratio = (b * b) / (a * a);
    assert!((ratio - 0.5).abs() <= 0.15, "variance ratio {ratio}");
}

#[test]
fn monte_carlo_is_reproducible() {
    let cfg = MarkovConfig {
        runs: 500,
        use_data_lru: true,
        use_ancilla_lru: true,
        ..MarkovConfig::default()
    };
    let layout = surface17_layout();
    let a = monte_carlo_surface17(&layout, &cfg, &LruParams::fig4(), 77).unwrap();
    let b = monte_carlo_surface17(&layout, &cfg, &LruParams::fig4(), 77).unwrap();
    let c = monte_carlo_surface17(&layout, &cfg, &LruParams::fig4(), 78).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 11);
}

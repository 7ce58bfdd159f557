use reslru_core::model::{find_avoided_crossing_exact, DeviceParams};
use reslru_core::optimize::{OptimizerConfig, PulseOptimizer};
use reslru_core::units::{ghz, mhz};

fn optimizer() -> PulseOptimizer {
    let p = DeviceParams {
        n_transmon: 4,
        n_resonator: 2,
        ..DeviceParams::table1()
    };
    let cfg = OptimizerConfig {
        omega_range: (mhz(150.0), mhz(300.0)),
        omega_d_range: (ghz(5.235), ghz(5.255)),
        sample_budget: 16,
        grid: (3, 3),
        cells_per_generation: 2,
        ..OptimizerConfig::default()
    };
    PulseOptimizer::new(&p, cfg).unwrap()
}

#[test]
fn sweep_is_deterministic() {
    let opt = optimizer();
    let a = opt.sweep_landscape().unwrap();
    let b = opt.sweep_landscape().unwrap();
    assert_eq!(a, b);
    assert!(a.len() <= 16 && a.len() >= 9);
    for pt in &a {
        assert!(
            pt.t_p_opt >= 2.0 * opt.config.t_rise - 1e-15
                && pt.t_p_opt <= opt.config.t_slot + 1e-15
        );
        assert!((0.0..=1.0).contains(&pt.p2_leaked));
    }
}

#[test]
fn duration_regimes() {
    let opt = optimizer();
    let cr = opt.omega_cr;
    let w = |o: f64| {
        find_avoided_crossing_exact(&opt.params, o, None)
            .unwrap()
            .omega_d_star
    };
    for o in [0.5 * cr, cr] {
        assert_eq!(opt.optimize_tp(o, w(o)).unwrap().t_p, opt.config.t_slot);
    }
    let above = cr + mhz(60.0);
    let d = opt.optimize_tp(above, w(above)).unwrap();
    assert!(d.t_p < opt.config.t_slot && d.t_p >= 2.0 * opt.config.t_rise);
    let g = d.g_tilde.unwrap();
    assert!(g > opt.params.kappa / 4.0);
}

#[test]
fn refinement_never_worsens() {
    let opt = optimizer();
    let o = mhz(204.0);
    let start = opt.evaluate(o, ghz(5.2464) + mhz(1.0)).unwrap();
    let one = opt.refine(&start, 1).unwrap();
    let three = opt.refine(&start, 3).unwrap();
    assert!(one.p2_leaked <= start.p2_leaked);
    assert!(three.p2_leaked <= one.p2_leaked);
    assert!((three.omega - start.omega).abs() <= opt.config.refine_radius + 1e-9);
}

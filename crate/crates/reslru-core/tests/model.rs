use proptest::prelude::*;
use reslru_core::model::{
    build_hamiltonian, diagonalize_static, drive_operator, find_avoided_crossing_exact,
    static_hamiltonian, to_dressed_frame, truncation_drift, DeviceParams, Dims, DrivePulse,
    OperatorMatrix,
};
use reslru_core::units::{ghz, mhz};

fn device(omega_q: f64, alpha: f64, g: f64, n_t: usize, n_r: usize) -> DeviceParams {
    DeviceParams {
        omega_q: ghz(omega_q),
        alpha: mhz(alpha),
        g: mhz(g),
        n_transmon: n_t,
        n_resonator: n_r,
        ..DeviceParams::table1()
    }
}

fn off_diagonal_max(op: &OperatorMatrix) -> f64 {
    let n = op.dims.size();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.max(op.matrix[(i, j)].norm());
            }
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hamiltonian_is_hermitian(
        wq in 6.0..7.2f64, alpha in -350.0..-200.0f64, g in 0.0..200.0f64,
        omega in 0.0..500.0f64, wd in 5.0..5.5f64, phi in -3.2..3.2f64,
        n_t in 3usize..7, n_r in 2usize..4,
    ) {
        let p = device(wq, alpha, g, n_t, n_r);
        let drive = DrivePulse { omega: mhz(omega), omega_d: ghz(wd), phi, t_rise: 0.0, t_p: 0.0 };
        let h = build_hamiltonian(&p, &drive, 1.0);
        prop_assert!(h.matrix.hermiticity_defect() < 1e-12 * h.matrix.max_abs());
    }

    #[test]
    fn drive_enters_linearly(omega in 1.0..500.0f64, s in -2.0..2.0f64, phi in -3.2..3.2f64) {
        let p = DeviceParams::table1();
        let drive = DrivePulse { omega: mhz(omega), omega_d: ghz(5.25), phi, t_rise: 0.0, t_p: 0.0 };
        let h = build_hamiltonian(&p, &drive, s);
        let mut expect = static_hamiltonian(&p, drive.omega_d).matrix;
        expect += &drive_operator(p.dims(), phi).matrix.scale_re(s * drive.omega);
        prop_assert_eq!(h.matrix, expect);
    }

    #[test]
    fn dressed_frame_is_exact(g in 0.0..200.0f64, wd in 5.0..5.5f64) {
        let p = device(6.7, -300.0, g, 6, 3);
        let frame = diagonalize_static(&p, ghz(wd)).unwrap();
        let h = to_dressed_frame(&static_hamiltonian(&p, ghz(wd)), &frame).unwrap();
        let scale = h.matrix.max_abs();
        prop_assert!(off_diagonal_max(&h) < 1e-10 * scale, "{}", off_diagonal_max(&h) / scale);
        for (i, e) in frame.energies.iter().enumerate() {
            prop_assert!((h.matrix[(i, i)].re - e).abs() < 1e-10 * scale);
        }
    }
}

#[test]
fn truncation_convergence_up_to_200_mhz() {
    let p = DeviceParams::table1();
    for om in [0.0, 50.0, 100.0, 150.0, 200.0] {
        if om == 0.0 {
            // No drive, no avoided crossing: only the position is defined.
            continue;
        }
        let (dw, dg) = truncation_drift(&p, mhz(om), Dims::new(7, 4)).unwrap();
        assert!(
            dw < mhz(0.01),
            "{om} MHz: omega_d* drift {} kHz",
            dw / mhz(1e-3)
        );
        assert!(dg < mhz(0.01), "{om} MHz: g drift {} kHz", dg / mhz(1e-3));
    }
}

#[test]
fn truncation_drift_stays_small_to_500_mhz() {
    // Beyond 200 MHz the (6, 3) truncation drifts: ~86 kHz at 400 MHz and
    // ~0.37 MHz at 500 MHz.
    let p = DeviceParams::table1();
    for om in [300.0, 400.0, 500.0] {
        let (dw, _) = truncation_drift(&p, mhz(om), Dims::new(7, 4)).unwrap();
        assert!(dw < mhz(0.5), "{om} MHz: {} kHz", dw / mhz(1e-3));
    }
}

#[test]
fn crossing_moves_down_with_amplitude() {
    let p = DeviceParams::table1();
    let ws: Vec<f64> = [100.0, 200.0, 300.0]
        .iter()
        .map(|&o| {
            find_avoided_crossing_exact(&p, mhz(o), None)
                .unwrap()
                .omega_d_star
        })
        .collect();
    assert!(ws[0] > ws[1] && ws[1] > ws[2]);
}

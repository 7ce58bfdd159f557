use proptest::prelude::*;
use reslru_core::linalg::{expm, CMatrix, C64};
use reslru_core::model::{find_avoided_crossing_exact, DeviceParams, DrivePulse};
use reslru_core::swt::{
    eta, g_tilde_order3, g_tilde_order3_at, series, solve_omega_d_star_analytic,
};
use reslru_core::units::{ghz, mhz};

/// Random diagonal energies in separated blocks and a hermitian
/// block-off-diagonal perturbation of unit scale.
fn instance(energies: &[f64], blocks: &[usize], entries: &[(f64, f64)]) -> (Vec<f64>, CMatrix) {
    let e: Vec<f64> = energies
        .iter()
        .zip(blocks)
        .map(|(x, &b)| b as f64 * 2.0 + x)
        .collect();
    let n = e.len();
    let mut v = CMatrix::zeros(n);
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if blocks[i] != blocks[j] {
                let (re, im) = entries[k % entries.len()];
                k += 1;
                v[(i, j)] = C64::new(re, im);
                v[(j, i)] = C64::new(re, -im);
            }
        }
    }
    (e, v)
}

fn off_block(e: &[f64], blocks: &[usize], v: &CMatrix) -> f64 {
    let s = series::run(e, blocks, v).unwrap();
    let gen = &(&s.s1 + &s.s2) + &s.s3;
    let h = &CMatrix::from_real_diag(e) + v;
    series::block_off(&expm(&gen).matmul(&h).matmul(&expm(&(-&gen))), blocks).frobenius()
}

const BLOCKS: [usize; 7] = [0, 0, 1, 1, 1, 2, 2];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn first_generator_solves_commutator(
        energies in prop::array::uniform7(0.0..0.5f64),
        entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16),
        eps in 1e-4..0.1f64,
    ) {
        let (e, v) = instance(&energies, &BLOCKS, &entries);
        let v = v.scale_re(eps);
        let s = series::run(&e, &BLOCKS, &v).unwrap();
        let lhs = &CMatrix::from_real_diag(&e).commutator(&s.s1) - &v;
        prop_assert!(lhs.max_abs() < 1e-10 * v.max_abs());
        prop_assert!(s.s1.antihermiticity_defect() < 1e-14);
    }

    #[test]
    fn residual_is_fourth_order(
        energies in prop::array::uniform7(0.0..0.5f64),
        entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16),
    ) {
        let (e, v) = instance(&energies, &BLOCKS, &entries);
        let r = off_block(&e, &BLOCKS, &v.scale_re(0.01)) / off_block(&e, &BLOCKS, &v.scale_re(0.005));
        prop_assert!((r - 16.0).abs() <= 3.0, "ratio {}", r);
    }

    #[test]
    fn magnitudes_do_not_depend_on_phase(phi in -3.2..3.2f64, omega in 50.0..400.0f64) {
        let p = DeviceParams::table1();
        let w = ghz(5.245);
        let a = DrivePulse { omega: mhz(omega), omega_d: w, phi: 0.0, t_rise: 0.0, t_p: 0.0 };
        let b = DrivePulse { phi, ..a };
        let (ea, eb) = (eta(&p, &a, w).unwrap(), eta(&p, &b, w).unwrap());
        prop_assert!((ea - eb).abs() < 1e-9 * ea.abs().max(1.0));
        let (ga, gb) = (
            reslru_core::swt::effective_coupling(&p, &a, w).unwrap(),
            reslru_core::swt::effective_coupling(&p, &b, w).unwrap(),
        );
        prop_assert!((ga.matrix.frobenius() - gb.matrix.frobenius()).abs() < 1e-9 * ga.matrix.frobenius());
    }
}

#[test]
fn weak_drive_limit() {
    let p = DeviceParams::table1();
    for om in [1.0, 5.0, 10.0] {
        let ratio = g_tilde_order3(&p, mhz(om)).unwrap()
            / reslru_core::swt::g_tilde_lowest_order(&p, mhz(om)).abs();
        assert!((ratio - 1.0).abs() < 0.01, "{om}: {ratio}");
    }
}

#[test]
fn analytic_crossing_tracks_exact() {
    let p = DeviceParams::table1();
    for om in [100.0, 204.0, 300.0] {
        let exact = find_avoided_crossing_exact(&p, mhz(om), None).unwrap();
        let an = solve_omega_d_star_analytic(&p, mhz(om)).unwrap();
        assert!(
            (an.omega_d_star_analytic - exact.omega_d_star).abs() < mhz(1.0),
            "{om}"
        );
        let g_here = g_tilde_order3_at(&p, mhz(om), exact.omega_d_star).unwrap();
        assert!(
            (g_here / exact.g_tilde - 1.0).abs() < 0.1,
            "{om}: {}",
            g_here / exact.g_tilde
        );
    }
}

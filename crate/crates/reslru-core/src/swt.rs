//! Analytic Schrieffer-Wolff stack: the capacitive generator, the dressed
//! Hamiltonian to first order in g/Delta, the second transformation that
//! removes the transmon drive, the effective |2,0> <-> |0,1> coupling and
//! the analytic avoided-crossing solver.
//!
//! Several printed coefficients were checked against the generic commutator
//! series in [`series`]; where they disagreed the series wins. In particular:
//! the indirect drive `H_d2` carries an overall minus sign relative to the
//! usual transcription, the third-order generator `S'_3` has the opposite
//! overall sign, the first Omega^4 Stark term divides the double-tilde
//! detuning at `m + 1` by `delta_{m+1}`, the `g'_{m+1}` term of the
//! effective coupling uses `delta_m delta_{m+1}`, and the `g~_{m-1}` piece of
//! the residual diagonal enters with a minus sign.
//!
//! Sums are cut at the transmon truncation: every ladder factor that refers
//! to a level outside the truncated space is zero.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ZERO};
use crate::model::{ladder_ops, BasisLabel, DeviceParams, Dims, DrivePulse, OperatorMatrix};
use crate::units::{mhz, TWO_PI};

/// Guard on every Delta-type denominator.
pub const DEGENERATE_GUARD: f64 = TWO_PI * 1e6;
/// Guard on the transmon transition detunings of the second transformation.
pub const VALIDITY_GUARD: f64 = TWO_PI * 10e6;

/// Detuning accessors at a fixed drive frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detunings {
    params: DeviceParams,
    delta_q: f64,
}

impl Detunings {
    pub fn new(params: &DeviceParams, omega_d: f64) -> Self {
        Self {
            params: *params,
            delta_q: params.omega_q - omega_d,
        }
    }

    /// `Delta_m = Delta + alpha m`.
    #[inline]
    pub fn delta_cap(&self, m: i64) -> f64 {
        self.params.delta() + self.params.alpha * m as f64
    }

    /// Bare transition detuning `delta^q + alpha m`.
    #[inline]
    pub fn delta_q_m(&self, m: i64) -> f64 {
        self.delta_q + self.params.alpha * m as f64
    }

    /// `delta^q + alpha m + g^2 Delta_{-1} / (Delta_{m-1} Delta_m)`: the
    /// |m> -> |m+1> transition of the first-order dressed transmon. This is
    /// the detuning that appears in all second-transformation denominators.
    #[inline]
    pub fn delta_q_tilde(&self, m: i64) -> f64 {
        let g = self.params.g;
        self.delta_q_m(m) + g * g * self.delta_cap(-1) / (self.delta_cap(m - 1) * self.delta_cap(m))
    }

    /// Diagonal coefficient of `[S'_1, H_d1]`:
    /// `(m + 1) dt_{m-1} - m dt_m = delta^q - alpha + g^2 Delta_{-1} Delta_{3m} / (Delta_m Delta_{m-1} Delta_{m-2})`.
    pub fn delta_q_doubletilde(&self, m: i64) -> f64 {
        (m + 1) as f64 * self.delta_q_tilde(m - 1) - m as f64 * self.delta_q_tilde(m)
    }

    fn check_capacitive(&self) -> Result<()> {
        for m in -1..self.params.n_transmon as i64 {
            let d = self.delta_cap(m);
            if d.abs() < DEGENERATE_GUARD {
                return Err(Error::DegenerateDenominator {
                    what: "Delta_m",
                    value: d,
                });
            }
        }
        Ok(())
    }
}

/// Drive-dependent coefficients on the truncated transmon ladder.
#[derive(Debug, Clone, Copy)]
struct Chain {
    det: Detunings,
    nt: i64,
    omega: f64,
    order: StarkOrder,
}

impl Chain {
    fn new(params: &DeviceParams, omega: f64, omega_d: f64) -> Result<Self> {
        let det = Detunings::new(params, omega_d);
        det.check_capacitive()?;
        Ok(Self {
            det,
            nt: params.n_transmon as i64,
            omega,
            order: StarkOrder::Fourth,
        })
    }

    /// Additionally guards the second-transformation denominators.
    fn checked(params: &DeviceParams, omega: f64, omega_d: f64) -> Result<Self> {
        let c = Self::new(params, omega, omega_d)?;
        for m in 0..=c.nt - 2 {
            let d = c.d(m);
            if d.abs() < VALIDITY_GUARD {
                return Err(Error::DegenerateDenominator {
                    what: "delta_m^q",
                    value: d,
                });
            }
        }
        for m in 0..=c.nt - 3 {
            let s = c.d(m) + c.d(m + 1);
            if s.abs() < DEGENERATE_GUARD {
                return Err(Error::DegenerateDenominator {
                    what: "delta_m + delta_m+1",
                    value: s,
                });
            }
        }
        for m in 0..=c.nt - 4 {
            let s = c.d(m) + c.d(m + 1) + c.d(m + 2);
            if s.abs() < DEGENERATE_GUARD {
                return Err(Error::DegenerateDenominator {
                    what: "delta_m + delta_m+1 + delta_m+2",
                    value: s,
                });
            }
        }
        Ok(c)
    }

    /// Number factor of level `j`: `j` inside the truncation, else 0.
    #[inline]
    fn n(&self, j: i64) -> f64 {
        if j >= 1 && j < self.nt {
            j as f64
        } else {
            0.0
        }
    }

    #[inline]
    fn sq(&self, j: i64) -> f64 {
        libm::sqrt(self.n(j))
    }

    #[inline]
    fn d(&self, m: i64) -> f64 {
        self.det.delta_q_tilde(m)
    }

    #[inline]
    fn big(&self, m: i64) -> f64 {
        self.det.delta_cap(m)
    }

    /// Leading two-photon coefficient for |m> <-> |m+2>, zero outside the truncation.
    fn g_tilde(&self, m: i64) -> f64 {
        if m < 0 || m + 2 >= self.nt {
            return 0.0;
        }
        let p = self.det.params;
        p.g * p.alpha * self.omega * self.sq(m + 1) * self.sq(m + 2)
            / (2.0 * self.big(m) * self.big(m + 1))
    }

    /// Single-photon exchange coefficient, zero outside the truncation.
    fn g_prime(&self, m: i64) -> f64 {
        if m < 0 || m >= self.nt {
            return 0.0;
        }
        let p = self.det.params;
        p.g * self.omega * self.big(-1) / (2.0 * self.big(m) * self.big(m - 1))
    }

    /// `f * a / b`, skipping the division when the ladder factor vanishes.
    #[inline]
    fn w(f: f64, a: f64, b: f64) -> f64 {
        if f == 0.0 {
            0.0
        } else {
            f * a / b
        }
    }

    /// Transmon part of the double-dressed diagonal at level `m`, without the
    /// zeroth-order energy.
    fn stark(&self, m: i64) -> f64 {
        let o2 = self.omega * self.omega;
        let o4 = o2 * o2;
        let (n, d) = (|j| self.n(j), |j| self.d(j));
        let w = Self::w;

        let second = -0.25 * o2 * (w(n(m + 1), 1.0, d(m)) - w(n(m), 1.0, d(m - 1)));
        if self.order == StarkOrder::Second {
            return second;
        }

        // dd_{m+1}/d_{m+1}, dd_m/d_{m-1}, dd_m/d_m, dd_{m-1}/d_{m-2}
        let up = if n(m + 1) == 0.0 {
            0.0
        } else {
            let r1 = w(n(m + 2), d(m), d(m + 1)) - n(m + 1);
            let r2 = n(m + 1) - w(n(m), d(m), d(m - 1));
            n(m + 1) / (d(m) * d(m) * d(m)) * (r1 - r2)
        };
        let down = if n(m) == 0.0 {
            0.0
        } else {
            let r3 = w(n(m + 1), d(m - 1), d(m)) - n(m);
            let r4 = n(m) - w(n(m - 1), d(m - 1), d(m - 2));
            let dm1 = d(m - 1);
            n(m) / (dm1 * dm1 * dm1) * (r3 - r4)
        };
        let fourth_a = -o4 / 32.0 * (up - down);

        let pair = |f: f64, lo: i64, weight_lo: f64, weight_hi: f64| -> f64 {
            // f (weight_lo d_lo + weight_hi d_hi) / (d_hi (d_lo + d_hi)) (1/d_lo - 1/d_hi)
            if f == 0.0 {
                return 0.0;
            }
            let (a, b) = (d(lo), d(lo + 1));
            f * (weight_lo * a + weight_hi * b) / (b * (a + b)) * (1.0 / a - 1.0 / b)
        };
        let pair_low = |f: f64, lo: i64| -> f64 {
            // f (5 d_lo + d_hi) / (d_lo (d_lo + d_hi)) (1/d_lo - 1/d_hi)
            if f == 0.0 {
                return 0.0;
            }
            let (a, b) = (d(lo), d(lo + 1));
            f * (5.0 * a + b) / (a * (a + b)) * (1.0 / a - 1.0 / b)
        };
        let pair_mid = |f: f64, lo: i64| -> f64 {
            // f (d_lo + 5 d_hi) / (d_hi (d_lo + d_hi)) (1/d_lo - 1/d_hi)
            pair(f, lo, 1.0, 5.0)
        };
        let first_block = {
            let a = pair_mid(n(m + 2) * n(m + 1), m);
            let b = pair_low(n(m + 1) * n(m), m - 1);
            if a == 0.0 && b == 0.0 {
                0.0
            } else {
                (a - b) / d(m)
            }
        };
        let second_block = {
            let a = pair_mid(n(m + 1) * n(m), m - 1);
            let b = pair_low(n(m) * n(m - 1), m - 2);
            if a == 0.0 && b == 0.0 {
                0.0
            } else {
                (a - b) / d(m - 1)
            }
        };
        let fourth_b = -o4 / 192.0 * (first_block - second_block);

        let sqr = |f: f64, lo: i64| -> f64 {
            if f == 0.0 {
                return 0.0;
            }
            let (a, b) = (d(lo), d(lo + 1));
            let x = 1.0 / a - 1.0 / b;
            f / (a + b) * x * x
        };
        let fourth_c = o4 / 96.0 * (sqr(n(m + 2) * n(m + 1), m) - sqr(n(m) * n(m - 1), m - 2));

        second + fourth_a + fourth_b + fourth_c
    }

    /// Third-order coefficient of `e^{i phi} a^dag |m><m+2|` (before the `H_d2` sign).
    fn coupling(&self, m: i64) -> f64 {
        if m < 0 || m + 2 >= self.nt {
            return 0.0;
        }
        let o2 = self.omega * self.omega;
        let (n, sq, d) = (|j| self.n(j), |j| self.sq(j), |j| self.d(j));
        let w = Self::w;
        let gt = |k| self.g_tilde(k);
        let gp = |k| self.g_prime(k);
        let mut v = gt(m)
            * (1.0
                - o2 / 8.0
                    * (w(n(m + 3), 1.0, d(m + 2) * d(m + 2))
                        + w(n(m + 2), 1.0, d(m + 1) * d(m + 1))
                        + w(n(m + 1), 1.0, d(m) * d(m))
                        + w(n(m), 1.0, d(m - 1) * d(m - 1))));
        v += o2 / 4.0
            * (w(sq(m + 1) * sq(m + 3), gt(m + 1), d(m) * d(m + 2))
                + w(sq(m) * sq(m + 2), gt(m - 1), d(m - 1) * d(m + 1)));
        let (a, b) = (d(m), d(m + 1));
        v += o2 / 4.0
            * sq(m + 1)
            * sq(m + 2)
            * (gp(m + 2) / (a * (a + b)) - gp(m + 1) / (a * b) + gp(m) / (b * (a + b)));
        v
    }
}

/// Sign of the indirect drive relative to the usual transcription.
const HD2_SIGN: f64 = -1.0;

fn transmon_op(dims: Dims, f: impl Fn(usize, usize) -> C64) -> CMatrix {
    let t = CMatrix::from_fn(dims.n_transmon, f);
    CMatrix::kron(&t, &CMatrix::identity(dims.n_resonator))
}

/// `|m><n|` on the transmon, identity on the resonator.
fn proj(dims: Dims, m: usize, n: usize) -> CMatrix {
    transmon_op(dims, |i, j| {
        if i == m && j == n {
            C64::new(1.0, 0.0)
        } else {
            ZERO
        }
    })
}

fn anti_hermitian(upper: CMatrix, dims: Dims) -> OperatorMatrix {
    let m = &upper - &upper.adjoint();
    OperatorMatrix {
        dims,
        matrix: m,
        hermitian: false,
    }
}

fn hermitian(half: CMatrix, dims: Dims) -> OperatorMatrix {
    let m = &half + &half.adjoint();
    OperatorMatrix {
        dims,
        matrix: m,
        hermitian: true,
    }
}

/// Capacitive generator `g sum_m sqrt(m)/(Delta + alpha(m-1)) (a |m><m-1| - h.c.)`.
pub fn s1_capacitive(params: &DeviceParams) -> Result<OperatorMatrix> {
    let det = Detunings::new(params, params.omega_q);
    for m in 1..params.n_transmon as i64 {
        let dm = det.delta_cap(m - 1);
        if dm.abs() < DEGENERATE_GUARD {
            return Err(Error::DegenerateDenominator {
                what: "Delta_m",
                value: dm,
            });
        }
    }
    let dims = params.dims();
    let (a, _) = ladder_ops(dims);
    let mut up = CMatrix::zeros(dims.size());
    for m in 1..params.n_transmon {
        let c = params.g * libm::sqrt(m as f64) / det.delta_cap(m as i64 - 1);
        up += &a.matrix.matmul(&proj(dims, m, m - 1)).scale_re(c);
    }
    Ok(anti_hermitian(up, dims))
}

/// Dispersive shift `chi_m = g^2 Delta_{-1} / (Delta_m Delta_{m-1})`.
fn chi(det: &Detunings, m: i64) -> f64 {
    let g = det.params.g;
    g * g * det.delta_cap(-1) / (det.delta_cap(m) * det.delta_cap(m - 1))
}

/// First-order transmon energy `m delta^q + alpha m(m-1)/2 + g^2 m / Delta_{m-1}`.
fn transmon_level(det: &Detunings, m: i64) -> f64 {
    let p = det.params;
    let mf = m as f64;
    let stark = if m == 0 {
        0.0
    } else {
        p.g * p.g * mf / det.delta_cap(m - 1)
    };
    mf * det.delta_q + 0.5 * p.alpha * mf * (mf - 1.0) + stark
}

/// Dressed static Hamiltonian to first order in g/Delta: diagonal with the
/// transmon Stark shifts and the state-dependent dispersive shift.
pub fn dressed_static_1st(params: &DeviceParams, omega_d: f64) -> Result<OperatorMatrix> {
    let det = Detunings::new(params, omega_d);
    det.check_capacitive()?;
    let dims = params.dims();
    let dr = params.omega_r - omega_d;
    let diag: Vec<f64> = dims
        .labels()
        .map(|lab| {
            let m = lab.transmon as i64;
            let l = lab.resonator as f64;
            l * dr + transmon_level(&det, m) - l * chi(&det, m)
        })
        .collect();
    Ok(OperatorMatrix {
        dims,
        matrix: CMatrix::from_real_diag(&diag),
        hermitian: true,
    })
}

/// Dressed-frame drive: the pure transmon drive `H_d1` and the indirect
/// resonator drive plus two-photon term `H_d2`.
pub fn dressed_drive_terms(
    params: &DeviceParams,
    drive: &DrivePulse,
) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let chain = Chain::new(params, drive.omega, drive.omega_d)?;
    let dims = params.dims();
    let (a, b) = ladder_ops(dims);
    let e = C64::from_polar(1.0, drive.phi);
    let hd1 = hermitian(b.matrix.scale(e * (0.5 * drive.omega)), dims);
    let mut half = CMatrix::zeros(dims.size());
    let adag = a.matrix.adjoint();
    for m in 0..params.n_transmon {
        let gp = chain.g_prime(m as i64);
        if gp != 0.0 {
            half += &a
                .matrix
                .matmul(&proj(dims, m, m))
                .scale(e * (HD2_SIGN * gp));
        }
        let gt = chain.g_tilde(m as i64);
        if gt != 0.0 {
            half += &adag
                .matmul(&proj(dims, m, m + 2))
                .scale(e * (HD2_SIGN * gt));
        }
    }
    Ok((hd1, hermitian(half, dims)))
}

/// Lowest-order effective coupling `Omega g alpha / (sqrt 2 Delta (Delta + alpha))`.
pub fn g_tilde_lowest_order(params: &DeviceParams, omega: f64) -> f64 {
    omega * params.g * params.alpha
        / (core::f64::consts::SQRT_2 * params.delta() * params.delta_m(1))
}

/// Generators of the second transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct SwtGenerators {
    pub s1: OperatorMatrix,
    pub s1_prime: OperatorMatrix,
    pub s2_prime: OperatorMatrix,
    pub s3_prime: OperatorMatrix,
}

impl SwtGenerators {
    /// `S'_1 + S'_2 + S'_3`.
    pub fn s_prime(&self) -> CMatrix {
        let mut s = &self.s1_prime.matrix + &self.s2_prime.matrix;
        s += &self.s3_prime.matrix;
        s
    }
}

/// `S_1`, `S'_1`, `S'_2`, `S'_3` for the given drive.
pub fn second_swt_generators(params: &DeviceParams, drive: &DrivePulse) -> Result<SwtGenerators> {
    let c = Chain::checked(params, drive.omega, drive.omega_d)?;
    let dims = params.dims();
    let nt = params.n_transmon;
    let om = drive.omega;
    let e1 = C64::from_polar(1.0, drive.phi);
    let e2 = C64::from_polar(1.0, 2.0 * drive.phi);
    let e3 = C64::from_polar(1.0, 3.0 * drive.phi);
    let d = |j: i64| c.d(j);

    let s1p = transmon_op(dims, |i, j| {
        if j == i + 1 {
            e1 * (-0.5 * om * libm::sqrt(j as f64) / d(i as i64))
        } else {
            ZERO
        }
    });
    let s2p = transmon_op(dims, |i, j| {
        if j == i + 2 {
            let m = i as i64;
            let (a, b) = (d(m), d(m + 1));
            e2 * (om * om / 8.0 * c.sq(m + 1) * c.sq(m + 2) / (a + b) * (1.0 / a - 1.0 / b))
        } else {
            ZERO
        }
    });
    let s3p = transmon_op(dims, |i, j| {
        let m = i as i64;
        let o3 = om * om * om;
        if j == i + 1 {
            let (n, sq) = (|k| c.n(k), |k| c.sq(k));
            let w = Chain::w;
            let dm = d(m);
            let r1 = w(n(m + 2), dm, d(m + 1)) - n(m + 1);
            let r2 = n(m + 1) - w(n(m), dm, d(m - 1));
            let t1 = sq(m + 1) / (12.0 * dm * dm * dm) * (r1 - r2);
            let hi = if n(m + 2) == 0.0 {
                0.0
            } else {
                let (a, b) = (dm, d(m + 1));
                n(m + 2) * sq(m + 1) * (a + 4.0 * b) / (b * (a + b)) * (1.0 / a - 1.0 / b)
            };
            let lo = if n(m) == 0.0 {
                0.0
            } else {
                let (a, b) = (d(m - 1), dm);
                sq(m + 1) * n(m) * (4.0 * a + b) / (a * (a + b)) * (1.0 / a - 1.0 / b)
            };
            let t2 = (hi - lo) / (96.0 * dm);
            // Opposite overall sign to the printed closed form; fixed by the
            // commutator series.
            e1 * (-o3 * (t1 + t2))
        } else if j == i + 3 && j < nt {
            let (a, b, cc) = (d(m), d(m + 1), d(m + 2));
            let f = libm::sqrt(((m + 1) * (m + 2) * (m + 3)) as f64) / (a + b + cc);
            let x = (3.0 * cc - b - a) / (cc * (a + b)) * (1.0 / a - 1.0 / b)
                - (3.0 * a - b - cc) / (a * (b + cc)) * (1.0 / b - 1.0 / cc);
            e3 * (-o3 / 96.0 * f * x)
        } else {
            ZERO
        }
    });
    Ok(SwtGenerators {
        s1: s1_capacitive(params)?,
        s1_prime: anti_hermitian(s1p, dims),
        s2_prime: anti_hermitian(s2p, dims),
        s3_prime: anti_hermitian(s3p, dims),
    })
}

/// Diagonal double-dressed static Hamiltonian with the Omega^2 and Omega^4
/// drive Stark shifts. Uses `drive.omega` and `drive.phi`; `omega_d`
/// overrides `drive.omega_d`.
pub fn double_dressed_static(
    params: &DeviceParams,
    drive: &DrivePulse,
    omega_d: f64,
) -> Result<OperatorMatrix> {
    let c = Chain::checked(params, drive.omega, omega_d)?;
    let dims = params.dims();
    let dr = params.omega_r - omega_d;
    let diag: Vec<f64> = dims
        .labels()
        .map(|lab| {
            let m = lab.transmon as i64;
            let l = lab.resonator as f64;
            l * dr + transmon_level(&c.det, m) + c.stark(m) - l * chi(&c.det, m)
        })
        .collect();
    Ok(OperatorMatrix {
        dims,
        matrix: CMatrix::from_real_diag(&diag),
        hermitian: true,
    })
}

/// `eta(omega_d) = <2,0|H_0^DD|2,0> - <0,1|H_0^DD|0,1>`.
pub fn eta(params: &DeviceParams, drive: &DrivePulse, omega_d: f64) -> Result<f64> {
    eta_with(params, drive, omega_d, StarkOrder::Fourth)
}

/// Truncation order of the drive Stark shifts in [`eta_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StarkOrder {
    /// Omega^2 only: the lowest-order crossing that goes with the
    /// lowest-order coupling.
    Second,
    /// Omega^2 and Omega^4.
    Fourth,
}

/// [`eta`] with a selectable Stark order.
pub fn eta_with(
    params: &DeviceParams,
    drive: &DrivePulse,
    omega_d: f64,
    order: StarkOrder,
) -> Result<f64> {
    let mut c = Chain::checked(params, drive.omega, omega_d)?;
    c.order = order;
    let dr = params.omega_r - omega_d;
    let e20 = transmon_level(&c.det, 2) + c.stark(2);
    let e01 = dr + c.stark(0) - chi(&c.det, 0);
    Ok(e20 - e01)
}

/// Effective `|m,l+1> <-> |m+2,l>` coupling, an operator of the form
/// `e^{i phi} a^dag sum_m c_m |m><m+2| + h.c.`.
pub fn effective_coupling(
    params: &DeviceParams,
    drive: &DrivePulse,
    omega_d: f64,
) -> Result<OperatorMatrix> {
    let c = Chain::checked(params, drive.omega, omega_d)?;
    let dims = params.dims();
    let (a, _) = ladder_ops(dims);
    let adag = a.matrix.adjoint();
    let e = C64::from_polar(1.0, drive.phi);
    let mut half = CMatrix::zeros(dims.size());
    for m in 0..params.n_transmon.saturating_sub(2) {
        let v = c.coupling(m as i64);
        half += &adag.matmul(&proj(dims, m, m + 2)).scale(e * (HD2_SIGN * v));
    }
    Ok(hermitian(half, dims))
}

/// `|<0,1|H_eff|2,0>|` at `omega_d`.
pub fn g_tilde_order3_at(params: &DeviceParams, omega: f64, omega_d: f64) -> Result<f64> {
    let c = Chain::checked(params, omega, omega_d)?;
    Ok(c.coupling(0).abs())
}

/// Residual drive terms after the second transformation (diagnostics only).
pub fn residual_coupling(
    params: &DeviceParams,
    drive: &DrivePulse,
    omega_d: f64,
) -> Result<OperatorMatrix> {
    let c = Chain::checked(params, drive.omega, omega_d)?;
    let dims = params.dims();
    let nt = c.nt;
    let om = drive.omega;
    let o2 = om * om;
    let (a, _) = ladder_ops(dims);
    let adag = a.matrix.adjoint();
    let e = |k: f64| C64::from_polar(1.0, k * drive.phi);
    let (n, sq, d) = (|j| c.n(j), |j| c.sq(j), |j| c.d(j));
    let w = Chain::w;
    let gt = |k| c.g_tilde(k);
    let gp = |k| c.g_prime(k);

    let mut half = CMatrix::zeros(dims.size());
    let mut add = |op: &CMatrix, m: i64, k: i64, phase: C64, v: f64| {
        if v != 0.0 && k < nt {
            half += &op
                .matmul(&proj(dims, m as usize, k as usize))
                .scale(phase * (HD2_SIGN * v));
        }
    };
    for m in 0..nt {
        let mut v = gp(m)
            * (1.0
                - o2 / 4.0 * (w(n(m + 1), 1.0, d(m) * d(m)) + w(n(m), 1.0, d(m - 1) * d(m - 1))));
        v += o2 / 4.0
            * (w(n(m + 1), gp(m + 1), d(m) * d(m)) + w(n(m), gp(m - 1), d(m - 1) * d(m - 1)));
        let t1 = if gt(m) == 0.0 {
            0.0
        } else {
            sq(m + 1) * sq(m + 2) * gt(m) / (d(m) * (d(m) + d(m + 1)))
        };
        let t2 = w(sq(m) * sq(m + 1), gt(m - 1), d(m) * d(m - 1));
        let t3 = if gt(m - 2) == 0.0 {
            0.0
        } else {
            sq(m - 1) * sq(m) * gt(m - 2) / (d(m - 1) * (d(m - 2) + d(m - 1)))
        };
        v += o2 / 4.0 * (t1 - t2 + t3);
        add(&a.matrix, m, m, e(1.0), v);

        if m + 1 < nt {
            let x = sq(m + 1) / d(m) * (gp(m + 1) - gp(m));
            add(&a.matrix, m, m + 1, e(2.0), -0.5 * om * x);
            let y = x + w(sq(m + 2), gt(m), d(m + 1)) - w(sq(m), gt(m - 1), d(m - 1));
            add(&adag, m, m + 1, e(0.0), -0.5 * om * y);
        }
        if m + 2 < nt {
            let (p, q) = (d(m), d(m + 1));
            let z = sq(m + 1)
                * sq(m + 2)
                * (gp(m + 2) / (p * (p + q)) - gp(m + 1) / (p * q) + gp(m) / (q * (p + q)));
            add(&a.matrix, m, m + 2, e(3.0), 0.25 * o2 * z);
        }
        if m + 3 < nt {
            let z = sq(m + 1) / d(m) * gt(m + 1) - sq(m + 3) / d(m + 2) * gt(m);
            add(&adag, m, m + 3, e(2.0), -0.5 * om * z);
        }
        if m + 4 < nt {
            let z = sq(m + 1) * sq(m + 2) * gt(m + 2) / (d(m) * (d(m) + d(m + 1)))
                - sq(m + 4) * sq(m + 1) * gt(m + 1) / (d(m) * d(m + 3))
                + sq(m + 3) * sq(m + 4) * gt(m) / (d(m + 3) * (d(m + 3) + d(m + 2)));
            add(&adag, m, m + 4, e(3.0), 0.25 * o2 * z);
        }
    }
    Ok(hermitian(half, dims))
}

/// Largest `|element|` of `op` between basis states with at most
/// `max_excitations` total excitations.
pub fn max_element_within(op: &CMatrix, dims: Dims, max_excitations: usize) -> f64 {
    let n = dims.size();
    let mut best = 0.0f64;
    for i in 0..n {
        if dims.label(i).excitations() > max_excitations {
            continue;
        }
        for j in 0..n {
            if dims.label(j).excitations() <= max_excitations {
                best = best.max(op[(i, j)].norm());
            }
        }
    }
    best
}

/// Analytic avoided-crossing summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCouplingReport {
    /// `|g~|` from the lowest-order formula.
    pub g_tilde_lowest: f64,
    /// `|<0,1|H_eff|2,0>|` at the analytic crossing.
    pub g_tilde_order3: f64,
    pub omega_d_star_analytic: f64,
    /// Largest residual element among states with at most 3 excitations.
    pub residual_norm: f64,
    pub iterations: usize,
}

const SECANT_TOL: f64 = TWO_PI * 1e3;
const SECANT_MAX_ITER: usize = 50;

/// Root of [`eta`] by the secant method from `omega_d0*` and
/// `omega_d0* + 2 pi 10 MHz`, falling back to bisection on a sign bracket.
pub fn solve_omega_d_star(params: &DeviceParams, omega: f64) -> Result<(f64, usize)> {
    solve_omega_d_star_with(params, omega, StarkOrder::Fourth)
}

/// [`solve_omega_d_star`] with a selectable Stark order.
pub fn solve_omega_d_star_with(
    params: &DeviceParams,
    omega: f64,
    order: StarkOrder,
) -> Result<(f64, usize)> {
    let drive = DrivePulse::constant(omega, params.omega_d0_star());
    let f = |w: f64| eta_with(params, &drive, w, order);
    let mut x0 = params.omega_d0_star();
    let mut x1 = x0 + mhz(10.0);
    let secant = (|| -> Option<(f64, usize)> {
        let mut f0 = f(x0).ok()?;
        let mut f1 = f(x1).ok()?;
        for it in 1..=SECANT_MAX_ITER {
            if f1 == f0 {
                return None;
            }
            let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
            if !x2.is_finite() || (x2 - params.omega_d0_star()).abs() > mhz(1000.0) {
                return None;
            }
            if (x2 - x1).abs() < SECANT_TOL {
                return Some((x2, it));
            }
            x0 = x1;
            f0 = f1;
            x1 = x2;
            f1 = f(x1).ok()?;
        }
        None
    })();
    if let Some(r) = secant {
        return Ok(r);
    }
    bisect_eta(&f, params.omega_d0_star())
}

fn bisect_eta(f: &impl Fn(f64) -> Result<f64>, center: f64) -> Result<(f64, usize)> {
    // eta decreases with omega_d: look for a sign change walking outward.
    let step = mhz(10.0);
    let fc = f(center)?;
    let dir = if fc > 0.0 { 1.0 } else { -1.0 };
    let (mut lo, mut hi) = (center, center);
    let mut found = false;
    for k in 1..=100 {
        let x = center + dir * step * k as f64;
        match f(x) {
            Ok(v) if (v > 0.0) != (fc > 0.0) => {
                if dir > 0.0 {
                    lo = x - step;
                    hi = x;
                } else {
                    lo = x;
                    hi = x + step;
                }
                found = true;
                break;
            }
            Ok(_) => {}
            Err(e) => return Err(e),
        }
    }
    if !found {
        return Err(Error::NoConvergence {
            iterations: SECANT_MAX_ITER,
        });
    }
    let flo = f(lo)?;
    for it in 1..=SECANT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo < SECANT_TOL {
            return Ok((mid, it));
        }
        let fm = f(mid)?;
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        iterations: SECANT_MAX_ITER,
    })
}

/// Analytic omega_d*, order-3 and lowest-order g~, and the residual size.
pub fn solve_omega_d_star_analytic(
    params: &DeviceParams,
    omega: f64,
) -> Result<EffectiveCouplingReport> {
    params.validate()?;
    let (w, iterations) = solve_omega_d_star(params, omega)?;
    let drive = DrivePulse::constant(omega, w);
    let resid = residual_coupling(params, &drive, w)?;
    Ok(EffectiveCouplingReport {
        g_tilde_lowest: g_tilde_lowest_order(params, omega).abs(),
        g_tilde_order3: g_tilde_order3_at(params, omega, w)?,
        omega_d_star_analytic: w,
        residual_norm: max_element_within(&resid.matrix, params.dims(), 3),
        iterations,
    })
}

/// Order-3 g~ at the analytic crossing for amplitude `omega`.
pub fn g_tilde_order3(params: &DeviceParams, omega: f64) -> Result<f64> {
    let (w, _) = solve_omega_d_star(params, omega)?;
    g_tilde_order3_at(params, omega, w)
}

/// First-order crossing: the root of the dressed static splitting alone,
/// with no drive Stark shift. Independent of Omega.
pub fn omega_d_star_first_order(params: &DeviceParams) -> Result<f64> {
    let (w, _) = solve_omega_d_star(params, 0.0)?;
    Ok(w)
}

/// Crossing with the Omega^2 Stark shifts only.
pub fn omega_d_star_lowest(params: &DeviceParams, omega: f64) -> Result<f64> {
    let (w, _) = solve_omega_d_star_with(params, omega, StarkOrder::Second)?;
    Ok(w)
}

/// Generic multi-block Schrieffer-Wolff series to fourth order for a
/// diagonal `H_0` and a block-off-diagonal perturbation.
pub mod series {
    use super::*;

    /// Generators and the block-diagonal effective Hamiltonian.
    #[derive(Debug, Clone, PartialEq)]
    pub struct SeriesResult {
        pub s1: CMatrix,
        pub s2: CMatrix,
        pub s3: CMatrix,
        /// Fourth-order block-diagonal Hamiltonian.
        pub h_prime: CMatrix,
        /// Second-order part `(1/2)[S_1, V]_D`.
        pub second: CMatrix,
        /// Third-order part.
        pub third: CMatrix,
        /// Fourth-order part.
        pub fourth: CMatrix,
    }

    /// Block-diagonal part with respect to `blocks`.
    pub fn block_diag(x: &CMatrix, blocks: &[usize]) -> CMatrix {
        CMatrix::from_fn(x.dim(), |i, j| {
            if blocks[i] == blocks[j] {
                x[(i, j)]
            } else {
                ZERO
            }
        })
    }

    /// Block-off-diagonal part with respect to `blocks`.
    pub fn block_off(x: &CMatrix, blocks: &[usize]) -> CMatrix {
        CMatrix::from_fn(x.dim(), |i, j| {
            if blocks[i] != blocks[j] {
                x[(i, j)]
            } else {
                ZERO
            }
        })
    }

    /// Solves `[H_0, S] = X` for block-off-diagonal `S`.
    pub fn solve(energies: &[f64], blocks: &[usize], x: &CMatrix) -> Result<CMatrix> {
        let n = x.dim();
        let mut s = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if blocks[i] == blocks[j] || x[(i, j)] == ZERO {
                    continue;
                }
                let gap = energies[i] - energies[j];
                if gap == 0.0 {
                    return Err(Error::DegenerateDenominator {
                        what: "E_i - E_j",
                        value: gap,
                    });
                }
                s[(i, j)] = x[(i, j)] / gap;
            }
        }
        Ok(s)
    }

    pub fn run(energies: &[f64], blocks: &[usize], v: &CMatrix) -> Result<SeriesResult> {
        let n = v.dim();
        if energies.len() != n || blocks.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: energies.len().min(blocks.len()),
            });
        }
        let d = |x: &CMatrix| block_diag(x, blocks);
        let od = |x: &CMatrix| block_off(x, blocks);
        let c = |a: &CMatrix, b: &CMatrix| a.commutator(b);

        let s1 = solve(energies, blocks, v)?;
        let s1v = c(&s1, v);
        let s2 = solve(energies, blocks, &od(&s1v).scale_re(0.5))?;
        let s2v = c(&s2, v);
        let rhs3 = &(&od(&s2v).scale_re(0.5) + &od(&c(&s1, &d(&s1v))).scale_re(1.0 / 3.0))
            + &od(&c(&s1, &od(&s1v))).scale_re(1.0 / 12.0);
        let s3 = solve(energies, blocks, &rhs3)?;

        let second = d(&s1v).scale_re(0.5);
        let third = &d(&s2v).scale_re(0.5) + &d(&c(&s1, &od(&s1v))).scale_re(1.0 / 12.0);
        let mut fourth = d(&c(&s3, v)).scale_re(0.5);
        fourth -= &d(&c(&s1, &od(&c(&s1, &d(&s1v))))).scale_re(1.0 / 24.0);
        fourth -= &d(&c(&s2, &od(&s1v))).scale_re(1.0 / 6.0);
        fourth += &d(&c(&s1, &od(&s2v))).scale_re(1.0 / 12.0);

        let mut h = CMatrix::from_real_diag(energies);
        h += &second;
        h += &third;
        h += &fourth;
        Ok(SeriesResult {
            s1,
            s2,
            s3,
            h_prime: h,
            second,
            third,
            fourth,
        })
    }
}

/// Transmon-only energies of the first-order dressed frame and the pure
/// drive, used as input for [`series::run`].
pub fn transmon_chain(params: &DeviceParams, drive: &DrivePulse) -> Result<(Vec<f64>, CMatrix)> {
    let det = Detunings::new(params, drive.omega_d);
    det.check_capacitive()?;
    let nt = params.n_transmon;
    let e: Vec<f64> = (0..nt as i64).map(|m| transmon_level(&det, m)).collect();
    let ph = C64::from_polar(1.0, drive.phi);
    let v = CMatrix::from_fn(nt, |i, j| {
        if j == i + 1 {
            ph * (0.5 * drive.omega * libm::sqrt(j as f64))
        } else if i == j + 1 {
            ph.conj() * (0.5 * drive.omega * libm::sqrt(i as f64))
        } else {
            ZERO
        }
    });
    Ok((e, v))
}

/// Element `<m,l|op|m',l'>` helper for tests and reports.
pub fn element(op: &OperatorMatrix, row: (usize, usize), col: (usize, usize)) -> C64 {
    op.element(BasisLabel::new(row.0, row.1), BasisLabel::new(col.0, col.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm;
    use crate::units::ghz;

    fn table1() -> DeviceParams {
        DeviceParams::table1()
    }

    fn op_drive(omega_mhz: f64, omega_d: f64, phi: f64) -> DrivePulse {
        DrivePulse {
            omega: mhz(omega_mhz),
            omega_d,
            phi,
            t_rise: 0.0,
            t_p: 0.0,
        }
    }

    #[test]
    fn s1_coefficient_and_antihermitian() {
        let p = table1();
        let s1 = s1_capacitive(&p).unwrap();
        let c = element(&s1, (1, 0), (0, 1));
        assert!((c.re - 135.0 / -1100.0).abs() < 1e-12, "{c}");
        assert!(s1.matrix.antihermiticity_defect() < 1e-14);
        let mut q = p;
        q.g = 0.0;
        assert_eq!(s1_capacitive(&q).unwrap().matrix.max_abs(), 0.0);
    }

    #[test]
    fn s1_couples_within_excitation_sectors_only() {
        let p = table1();
        let s1 = s1_capacitive(&p).unwrap();
        let dims = p.dims();
        for i in 0..dims.size() {
            for j in 0..dims.size() {
                if s1.matrix[(i, j)] != ZERO {
                    let (a, b) = (dims.label(i), dims.label(j));
                    assert_eq!(a.excitations(), b.excitations());
                    assert_ne!(a.transmon, b.transmon);
                }
            }
        }
    }

    #[test]
    fn dressed_static_matches_exact_frame() {
        // The (6, 3) truncation itself shifts |2,1> by ~1 MHz through its
        // missing |0,3> partner, so compare against a roomier exact frame.
        let mut p = table1();
        p.n_transmon = 8;
        p.n_resonator = 6;
        let w = ghz(5.25);
        let h = dressed_static_1st(&p, w).unwrap();
        let frame = crate::model::diagonalize_static(&p, w).unwrap();
        let dims = p.dims();
        for i in 0..dims.size() {
            if dims.label(i).excitations() <= 3 {
                let diff = (h.matrix[(i, i)].re - frame.energies[i]).abs();
                assert!(diff < mhz(1.0), "{} {}", dims.label(i), diff / mhz(1.0));
            }
        }
        let pull = element(&h, (0, 1), (0, 1)).re - (p.omega_r - w);
        let g = p.g;
        assert!((pull + g * g / p.delta()).abs() < 1e-6 * g);
    }

    #[test]
    fn hd2_matches_matrix_exponential_at_low_excitation() {
        let p = table1();
        let drive = op_drive(204.0, ghz(5.2464), 0.3);
        let (hd1, hd2) = dressed_drive_terms(&p, &drive).unwrap();
        let s1 = s1_capacitive(&p).unwrap().matrix;
        let hd = crate::model::drive_operator(p.dims(), drive.phi)
            .matrix
            .scale_re(drive.omega);
        let exact = expm(&s1).matmul(&hd).matmul(&expm(&(-&s1)));
        let dev = &(&exact - &hd1.matrix) - &hd2.matrix;
        let worst = max_element_within(&dev, p.dims(), 3);
        assert!(worst < 0.02 * drive.omega, "{}", worst / drive.omega);
        let c = element(&hd2, (0, 1), (2, 0)) / C64::from_polar(1.0, drive.phi);
        let expect =
            0.5 * drive.omega * p.g * p.alpha * 2f64.sqrt() / (p.delta_m(0) * p.delta_m(1));
        assert!((c.norm() - expect.abs()).abs() < 1e-9 * expect.abs());
    }

    #[test]
    fn lowest_order_value() {
        let g = g_tilde_lowest_order(&table1(), mhz(204.0));
        assert!(
            (g.abs() / mhz(1.0) - 204.0 * 135.0 * 300.0 / (2f64.sqrt() * 1100.0 * 1400.0)).abs()
                < 1e-9
        );
        let mut q = table1();
        q.alpha = 0.0;
        assert_eq!(g_tilde_lowest_order(&q, mhz(204.0)), 0.0);
    }

    #[test]
    fn doubletilde_closed_form() {
        let p = table1();
        let det = Detunings::new(&p, ghz(5.25));
        let g = p.g;
        for m in 0..5i64 {
            let closed = det.delta_q_m(0) - p.alpha
                + g * g * det.delta_cap(-1) * det.delta_cap(3 * m)
                    / (det.delta_cap(m) * det.delta_cap(m - 1) * det.delta_cap(m - 2));
            assert!((closed - det.delta_q_doubletilde(m)).abs() < 1e-6 * closed.abs());
        }
    }

    fn chain_series(p: &DeviceParams, drive: &DrivePulse) -> series::SeriesResult {
        let (e, v) = transmon_chain(p, drive).unwrap();
        let blocks: Vec<usize> = (0..e.len()).collect();
        series::run(&e, &blocks, &v).unwrap()
    }

    #[test]
    fn generators_match_series() {
        let mut p = table1();
        p.n_transmon = 6;
        let drive = op_drive(300.0, ghz(5.25), 0.3);
        let s = chain_series(&p, &drive);
        let gens = second_swt_generators(&p, &drive).unwrap();
        let r = p.n_resonator;
        for (closed, oracle) in [
            (&gens.s1_prime, &s.s1),
            (&gens.s2_prime, &s.s2),
            (&gens.s3_prime, &s.s3),
        ] {
            let scale = oracle.max_abs();
            for i in 0..p.n_transmon {
                for j in 0..p.n_transmon {
                    let d = (closed.matrix[(i * r, j * r)] - oracle[(i, j)]).norm();
                    assert!(d < 1e-9 * scale, "({i},{j}) {d}");
                }
            }
            assert!(closed.matrix.antihermiticity_defect() < 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn double_dressed_static_matches_series() {
        let p = table1();
        for om in [0.0, 100.0, 204.0, 300.0] {
            let drive = op_drive(om, ghz(5.25), 0.0);
            let s = chain_series(&p, &drive);
            let h = double_dressed_static(&p, &drive, drive.omega_d).unwrap();
            for m in 0..p.n_transmon {
                let closed = h.matrix[(m * p.n_resonator, m * p.n_resonator)].re;
                let d = (closed - s.h_prime[(m, m)].re).abs();
                assert!(
                    d < TWO_PI * 1e3,
                    "Omega {om} level {m}: {} kHz",
                    d / TWO_PI / 1e3
                );
            }
        }
    }

    #[test]
    fn coupling_and_residual_match_expansion() {
        let p = table1();
        let w = ghz(5.25);
        let drive = op_drive(204.0, w, 0.3);
        let gens = second_swt_generators(&p, &drive).unwrap();
        let (_, hd2) = dressed_drive_terms(&p, &drive).unwrap();
        let (s1, s2) = (&gens.s1_prime.matrix, &gens.s2_prime.matrix);
        let x = &hd2.matrix;
        let c = |a: &CMatrix, b: &CMatrix| a.commutator(b);
        let mut expanded = x.clone();
        expanded += &c(s1, x);
        expanded += &c(s2, x);
        expanded += &c(s1, &c(s1, x)).scale_re(0.5);
        let eff = effective_coupling(&p, &drive, w).unwrap();
        let res = residual_coupling(&p, &drive, w).unwrap();
        let total = &eff.matrix + &res.matrix;
        let diff = max_element_within(&(&expanded - &total), p.dims(), 3);
        assert!(diff < 1e-9 * x.max_abs(), "{}", diff / x.max_abs());
        assert_eq!(element(&res, (2, 0), (0, 1)), ZERO);

        let sp = gens.s_prime();
        let rot = expm(&sp).matmul(x).matmul(&expm(&(-&sp)));
        let dev = max_element_within(&(&(&rot - &eff.matrix) - &res.matrix), p.dims(), 3);
        assert!(dev < 0.05 * x.max_abs(), "{}", dev / x.max_abs());
    }

    #[test]
    fn first_generator_commutator() {
        let p = table1();
        let drive = op_drive(204.0, ghz(5.25), 0.0);
        let gens = second_swt_generators(&p, &drive).unwrap();
        let h0 = dressed_static_1st(&p, drive.omega_d).unwrap();
        let (hd1, _) = dressed_drive_terms(&p, &drive).unwrap();
        let lhs = &h0.matrix.commutator(&gens.s1_prime.matrix) - &hd1.matrix;
        assert!(lhs.max_abs() < (p.alpha / p.delta()).abs() * drive.omega * 0.1);
    }

    #[test]
    fn generic_series_fourth_order_scaling() {
        let p = table1();
        let off = |eps: f64| {
            let drive = op_drive(eps, ghz(5.25), 0.2);
            let (e, v) = transmon_chain(&p, &drive).unwrap();
            let blocks: Vec<usize> = (0..e.len()).collect();
            let s = series::run(&e, &blocks, &v).unwrap();
            let h = &CMatrix::from_real_diag(&e) + &v;
            let st = &(&s.s1 + &s.s2) + &s.s3;
            let rot = expm(&st).matmul(&h).matmul(&expm(&(-&st)));
            // residual of the generator equation for S_1
            let lhs = &CMatrix::from_real_diag(&e).commutator(&s.s1) - &v;
            assert!(lhs.max_abs() < 1e-10 * v.max_abs());
            series::block_off(&rot, &blocks).max_abs()
        };
        let r = off(40.0) / off(20.0);
        assert!((r - 16.0).abs() < 1.5, "ratio {r}");
    }

    #[test]
    fn eta_bare_limit_and_slope() {
        let mut p = table1();
        p.g = 1e-300;
        let drive = op_drive(0.0, 0.0, 0.0);
        let e = eta(&p, &drive, p.omega_d0_star()).unwrap();
        assert!(e.abs() < 1e-3);
        let p = table1();
        let w = p.omega_d0_star();
        let h = mhz(1.0);
        let slope = (eta(&p, &drive, w + h).unwrap() - eta(&p, &drive, w - h).unwrap()) / (2.0 * h);
        assert!((slope + 1.0).abs() < 0.01, "{slope}");
    }

    #[test]
    fn analytic_crossing_limits() {
        let p = table1();
        let r0 = solve_omega_d_star_analytic(&p, 0.0).unwrap();
        let frame = crate::model::diagonalize_static(&p, p.omega_d0_star()).unwrap();
        let exact_shift = frame.energy(BasisLabel::new(2, 0)) - frame.energy(BasisLabel::new(0, 1));
        assert!((r0.omega_d_star_analytic - (p.omega_d0_star() + exact_shift)).abs() < mhz(1.0));
        let om = mhz(10.0);
        let g3 = g_tilde_order3(&p, om).unwrap();
        let g1 = g_tilde_lowest_order(&p, om).abs();
        assert!((g3 / g1 - 1.0).abs() < 0.01, "{}", g3 / g1);
    }

    #[test]
    fn phase_covariance() {
        let p = table1();
        let w = ghz(5.2464);
        let a = op_drive(204.0, w, 0.0);
        let b = op_drive(204.0, w, 1.1);
        assert!((eta(&p, &a, w).unwrap() - eta(&p, &b, w).unwrap()).abs() < 1e-6);
        let ea = element(&effective_coupling(&p, &a, w).unwrap(), (0, 1), (2, 0)).norm();
        let eb = element(&effective_coupling(&p, &b, w).unwrap(), (0, 1), (2, 0)).norm();
        assert!((ea - eb).abs() < 1e-9 * ea);
        let ga = second_swt_generators(&p, &a).unwrap();
        let mut c = a;
        c.phi = core::f64::consts::PI;
        let gc = second_swt_generators(&p, &c).unwrap();
        assert!(
            ga.s1_prime
                .matrix
                .max_diff(&gc.s1_prime.matrix.scale_re(-1.0))
                < 1e-12
        );
    }
}

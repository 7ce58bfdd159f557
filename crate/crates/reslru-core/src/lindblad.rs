//! Lindblad dynamics in the exact dressed frame.
//!
//! The state is stored in dressed labels. The static part of the Hamiltonian
//! is the diagonal of dressed energies; the drive is the unit-amplitude
//! transmon drive transformed exactly into that frame. Jump operators are
//! the ladder forms `sqrt(kappa) a`, `sqrt(kappa nbar/(1+nbar)) a^dag`,
//! `sqrt(2/Tphi_r) a^dag a`, `b/sqrt(T1)`, `sqrt(2/Tphi) b^dag b` acting on
//! the dressed labels, so dressed relaxation has no Purcell contribution.
//!
//! Driven segments use an adaptive Dormand-Prince 5(4) integrator.
//! Drive-free segments are propagated exactly: without drive every matrix
//! element `rho_{(m,l),(m',l')}` only talks to elements with the same
//! `(m - m', l - l')`, which splits the Liouvillian into small blocks.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, expm, CMatrix, Sparse, C64, ZERO};
use crate::model::{
    diagonalize_static, drive_operator, to_dressed_frame, BasisLabel, DeviceParams, Dims,
    DressedFrame, DrivePulse,
};
use crate::units::ns;

/// Largest mean photon number for which the two-level thermal state holds.
pub const NBAR_MAX: f64 = 0.2;

/// Density matrix on the transmon-resonator space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dims: Dims,
    pub matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(dims: Dims, matrix: CMatrix) -> Result<Self> {
        if matrix.dim() != dims.size() {
            return Err(Error::DimensionMismatch {
                expected: dims.size(),
                found: matrix.dim(),
            });
        }
        Ok(Self { dims, matrix })
    }

    /// `transmon (x) resonator` product state.
    pub fn product(dims: Dims, transmon: &CMatrix, resonator: &CMatrix) -> Result<Self> {
        if transmon.dim() != dims.n_transmon {
            return Err(Error::DimensionMismatch {
                expected: dims.n_transmon,
                found: transmon.dim(),
            });
        }
        if resonator.dim() != dims.n_resonator {
            return Err(Error::DimensionMismatch {
                expected: dims.n_resonator,
                found: resonator.dim(),
            });
        }
        Ok(Self {
            dims,
            matrix: CMatrix::kron(transmon, resonator),
        })
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn population(&self, label: BasisLabel) -> f64 {
        let i = self.dims.index(label);
        self.matrix[(i, i)].re
    }

    /// Reduced transmon state `Tr_r rho`.
    pub fn transmon_reduced(&self) -> CMatrix {
        let (nt, nr) = (self.dims.n_transmon, self.dims.n_resonator);
        CMatrix::from_fn(nt, |m, k| {
            (0..nr).map(|l| self.matrix[(m * nr + l, k * nr + l)]).sum()
        })
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut h = self.matrix.clone();
        h.hermitize();
        Ok(eigh(&h)?.values[0])
    }

    /// Hermiticity, unit trace and positivity checks.
    pub fn validate(&self) -> Result<()> {
        if self.matrix.hermiticity_defect() > 1e-10 {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: "not Hermitian",
            });
        }
        let drift = (self.trace() - 1.0).abs();
        if drift > 1e-7 {
            return Err(Error::TraceDrift { drift });
        }
        if self.min_eigenvalue()? < -1e-8 {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: "not positive semidefinite",
            });
        }
        Ok(())
    }
}

/// Two-level thermal resonator state.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub nbar: f64,
    /// Diagonal state on the resonator factor.
    pub matrix: CMatrix,
}

impl ThermalState {
    /// Excited-state population `nbar / (1 + 2 nbar)`.
    pub fn p1(&self) -> f64 {
        self.matrix[(1, 1)].re
    }
}

/// `(1 - p)|0><0| + p|1><1|` with `p = nbar/(1 + 2 nbar)` on `n_resonator` levels.
pub fn thermal_resonator_state(nbar: f64, n_resonator: usize) -> Result<ThermalState> {
    if !(0.0..NBAR_MAX).contains(&nbar) {
        return Err(Error::OutOfRegime { nbar });
    }
    if n_resonator < 2 {
        return Err(Error::InvalidParameter {
            name: "n_resonator",
            reason: "need at least 2 levels",
        });
    }
    let p = nbar / (1.0 + 2.0 * nbar);
    let mut d = vec![0.0; n_resonator];
    d[0] = 1.0 - p;
    d[1] = p;
    Ok(ThermalState {
        nbar,
        matrix: CMatrix::from_real_diag(&d),
    })
}

/// Instantaneous drive amplitude in rad/s.
pub fn pulse_value(pulse: &DrivePulse, t: f64) -> f64 {
    pulse.value(t)
}

/// Jump operator with at most one nonzero per row and per column, stored as
/// `(row, col, value)` triples. Every channel here is a ladder or number
/// operator, so this is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator {
    pub name: &'static str,
    pub entries: Vec<(usize, usize, f64)>,
}

impl JumpOperator {
    fn from_dense(name: &'static str, m: &CMatrix) -> Self {
        let n = m.dim();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let z = m[(i, j)];
                if z != ZERO {
                    entries.push((i, j, z.re));
                }
            }
        }
        Self { name, entries }
    }

    pub fn to_dense(&self, n: usize) -> CMatrix {
        let mut m = CMatrix::zeros(n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = C64::new(v, 0.0);
        }
        m
    }
}

/// Collapse operators with their rates absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperatorSet {
    pub dims: Dims,
    pub ops: Vec<JumpOperator>,
}

impl JumpOperatorSet {
    /// Resonator decay, thermal excitation, optional resonator dephasing,
    /// transmon decay and transmon dephasing. Channels with zero rate are
    /// dropped.
    pub fn build(params: &DeviceParams) -> Result<Self> {
        let dims = params.dims();
        let (a, b) = crate::model::ladder_ops(dims);
        let (a, b) = (a.matrix, b.matrix);
        let n_a = a.adjoint().matmul(&a);
        let n_b = b.adjoint().matmul(&b);
        let mut ops = Vec::new();
        let mut push = |name, rate: f64, m: &CMatrix| {
            if rate > 0.0 {
                ops.push(JumpOperator::from_dense(
                    name,
                    &m.scale_re(libm::sqrt(rate)),
                ));
            }
        };
        push("resonator_decay", params.kappa, &a);
        push(
            "resonator_excitation",
            params.kappa * params.nbar / (1.0 + params.nbar),
            &a.adjoint(),
        );
        push(
            "resonator_dephasing",
            2.0 * params.resonator_dephasing_rate(),
            &n_a,
        );
        push("transmon_decay", 1.0 / params.t1_q, &b);
        push(
            "transmon_dephasing",
            2.0 * params.transmon_dephasing_rate(),
            &n_b,
        );
        Ok(Self { dims, ops })
    }

    /// `sum_K K^dag K`, diagonal for ladder and number operators.
    pub fn damping_diagonal(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.dims.size()];
        for op in &self.ops {
            for &(_, j, v) in &op.entries {
                g[j] += v * v;
            }
        }
        g
    }

    /// Adds `sum_K K rho K^dag` to `out`.
    #[inline]
    fn add_sandwich(&self, rho: &[C64], out: &mut [C64], n: usize) {
        for op in &self.ops {
            for &(i, c1, v1) in &op.entries {
                for &(j, c2, v2) in &op.entries {
                    out[i * n + j] += rho[c1 * n + c2] * (v1 * v2);
                }
            }
        }
    }
}

/// Integrator tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Maximum step inside ramps as a fraction of `t_rise`.
    pub ramp_step_fraction: f64,
    /// Report populations of bare instead of dressed labels.
    pub bare_populations: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            ramp_step_fraction: 1.0 / 20.0,
            bare_populations: false,
        }
    }
}

/// Integrator counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Sampled populations and optionally the full states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub labels: Vec<BasisLabel>,
    /// `populations[k][i]`: population of `labels[i]` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    pub states: Option<Vec<DensityMatrix>>,
    pub stats: SolverStats,
}

impl Trajectory {
    /// Time trace of one label.
    pub fn trace_of(&self, label: BasisLabel) -> Option<Vec<f64>> {
        let i = self.labels.iter().position(|&l| l == label)?;
        Some(self.populations.iter().map(|row| row[i]).collect())
    }

    /// Transmon-level population summed over resonator states.
    pub fn transmon_trace(&self, level: usize) -> Vec<f64> {
        self.populations
            .iter()
            .map(|row| {
                self.labels
                    .iter()
                    .zip(row)
                    .filter(|(l, _)| l.transmon == level)
                    .map(|(_, p)| p)
                    .sum()
            })
            .collect()
    }
}

/// `<2|Tr_r rho|2>` in whatever basis `rho` is expressed in.
pub fn leakage_population(rho: &DensityMatrix) -> f64 {
    transmon_population(rho, 2)
}

/// `<m|Tr_r rho|m>`.
pub fn transmon_population(rho: &DensityMatrix, m: usize) -> f64 {
    let nr = rho.dims.n_resonator;
    (0..nr)
        .map(|l| rho.matrix[(m * nr + l, m * nr + l)].re)
        .sum()
}

/// `<0|Tr_r rho|1>`.
pub fn transmon_coherence(rho: &DensityMatrix) -> C64 {
    let nr = rho.dims.n_resonator;
    (0..nr).map(|l| rho.matrix[(l, nr + l)]).sum()
}

mod dp5 {
    //! Dormand-Prince 5(4) coefficients.
    pub const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    /// Fifth-order minus fourth-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

/// Exact drive-free propagator over a fixed interval.
#[derive(Debug, Clone)]
pub struct FreePropagator {
    /// Per coherence class: flat indices and the class propagator.
    blocks: Vec<(Vec<usize>, CMatrix)>,
}

impl FreePropagator {
    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let src = rho.matrix.as_slice();
        let mut out = CMatrix::zeros(rho.dims.size());
        {
            let dst = out.as_mut_slice();
            for (idx, p) in &self.blocks {
                for (a, &ia) in idx.iter().enumerate() {
                    let mut acc = ZERO;
                    for (b, &ib) in idx.iter().enumerate() {
                        acc += p[(a, b)] * src[ib];
                    }
                    dst[ia] = acc;
                }
            }
        }
        out.hermitize();
        DensityMatrix {
            dims: rho.dims,
            matrix: out,
        }
    }
}

/// Everything that depends on `(params, omega_d, phi)` but not on the
/// envelope: the dressed frame, the transformed drive and the jumps.
#[derive(Debug, Clone)]
pub struct LindbladSystem {
    pub params: DeviceParams,
    pub omega_d: f64,
    pub phi: f64,
    pub frame: DressedFrame,
    pub jumps: JumpOperatorSet,
    pub settings: SolverSettings,
    /// `E_i - i G_i / 2`.
    diag: Vec<C64>,
    /// Unit-amplitude drive in the dressed frame.
    drive: Sparse,
}

impl LindbladSystem {
    pub fn new(params: &DeviceParams, omega_d: f64, phi: f64) -> Result<Self> {
        params.validate()?;
        let frame = diagonalize_static(params, omega_d)?;
        let hd = to_dressed_frame(&drive_operator(params.dims(), phi), &frame)?;
        let drop = 1e-13 * hd.matrix.max_abs();
        let drive = Sparse::from_dense(&hd.matrix, drop);
        let jumps = JumpOperatorSet::build(params)?;
        let g = jumps.damping_diagonal();
        let diag = frame
            .energies
            .iter()
            .zip(&g)
            .map(|(&e, &gi)| C64::new(e, -0.5 * gi))
            .collect();
        Ok(Self {
            params: *params,
            omega_d,
            phi,
            frame,
            jumps,
            settings: SolverSettings::default(),
            diag,
            drive,
        })
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn dims(&self) -> Dims {
        self.params.dims()
    }

    /// `|level><level| (x) sigma_th` in dressed labels.
    pub fn initial_level(&self, level: usize) -> Result<DensityMatrix> {
        let dims = self.dims();
        if level >= dims.n_transmon {
            return Err(Error::InvalidParameter {
                name: "level",
                reason: "outside the transmon truncation",
            });
        }
        let mut t = CMatrix::zeros(dims.n_transmon);
        t[(level, level)] = C64::new(1.0, 0.0);
        self.with_thermal(&t)
    }

    /// `|+><+| (x) sigma_th` with `|+> = (|0> + |1>)/sqrt 2`.
    pub fn initial_plus(&self) -> Result<DensityMatrix> {
        let dims = self.dims();
        let mut t = CMatrix::zeros(dims.n_transmon);
        for i in 0..2 {
            for j in 0..2 {
                t[(i, j)] = C64::new(0.5, 0.0);
            }
        }
        self.with_thermal(&t)
    }

    /// Arbitrary transmon state times the thermal resonator.
    pub fn with_thermal(&self, transmon: &CMatrix) -> Result<DensityMatrix> {
        let th = thermal_resonator_state(self.params.nbar, self.params.n_resonator)?;
        DensityMatrix::product(self.dims(), transmon, &th.matrix)
    }

    fn check_pulse(&self, pulse: &DrivePulse) -> Result<()> {
        pulse.validate()?;
        let tol = 1e-9 * self.omega_d.abs().max(1.0);
        if (pulse.omega_d - self.omega_d).abs() > tol || (pulse.phi - self.phi).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "pulse",
                reason: "drive frequency or phase differs from the system",
            });
        }
        Ok(())
    }

    /// Master-equation right-hand side at drive amplitude `s` (rad/s).
    fn rhs(&self, s: f64, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let n = self.diag.len();
        // scratch = H_eff rho
        for i in 0..n {
            let d = self.diag[i];
            let row = &mut scratch[i * n..(i + 1) * n];
            let src = &rho[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] = d * src[j];
            }
        }
        if s != 0.0 {
            for i in 0..n {
                for (k, v) in self.drive.row(i) {
                    let c = v * s;
                    let (dst, src) = (i * n, k * n);
                    for j in 0..n {
                        let x = rho[src + j];
                        scratch[dst + j] += c * x;
                    }
                }
            }
        }
        // out = -i (A - A^dag)
        for i in 0..n {
            for j in 0..n {
                let z = scratch[i * n + j] - scratch[j * n + i].conj();
                out[i * n + j] = C64::new(z.im, -z.re);
            }
        }
        self.jumps.add_sandwich(rho, out, n);
    }

    /// Exact drive-free propagator over `dt`.
    pub fn free_propagator(&self, dt: f64) -> FreePropagator {
        let dims = self.dims();
        let n = dims.size();
        let (nt, nr) = (dims.n_transmon as i64, dims.n_resonator as i64);
        let mut blocks = Vec::new();
        for dm in -(nt - 1)..nt {
            for dl in -(nr - 1)..nr {
                let mut idx = Vec::new();
                for i in 0..n {
                    let li = dims.label(i);
                    let m2 = li.transmon as i64 - dm;
                    let l2 = li.resonator as i64 - dl;
                    if (0..nt).contains(&m2) && (0..nr).contains(&l2) {
                        idx.push(i * n + dims.index(BasisLabel::new(m2 as usize, l2 as usize)));
                    }
                }
                if idx.is_empty() {
                    continue;
                }
                let pos = |flat: usize| idx.iter().position(|&x| x == flat);
                let mut gen = CMatrix::zeros(idx.len());
                for (a, &flat) in idx.iter().enumerate() {
                    let (i, j) = (flat / n, flat % n);
                    gen[(a, a)] = C64::new(0.0, -1.0) * (self.diag[i] - self.diag[j].conj());
                }
                for op in &self.jumps.ops {
                    for &(i, c1, v1) in &op.entries {
                        for &(j, c2, v2) in &op.entries {
                            if let (Some(a), Some(b)) = (pos(i * n + j), pos(c1 * n + c2)) {
                                gen[(a, b)] += C64::new(v1 * v2, 0.0);
                            }
                        }
                    }
                }
                blocks.push((idx, expm(&gen.scale_re(dt))));
            }
        }
        FreePropagator { blocks }
    }

    /// Propagates `rho` from `t0` to `t1` under `pulse`.
    pub fn propagate(
        &self,
        pulse: &DrivePulse,
        rho: &DensityMatrix,
        t0: f64,
        t1: f64,
    ) -> Result<(DensityMatrix, SolverStats)> {
        self.check_pulse(pulse)?;
        let mut stats = SolverStats::default();
        let mut state = rho.clone();
        let mut h = None;
        let mut t = t0;
        for (a, b, driven) in segments(pulse, t0, t1) {
            if b <= a {
                continue;
            }
            if driven {
                let (next, h_last) = self.integrate(pulse, &state, a, b, h, &mut stats)?;
                state = next;
                h = Some(h_last);
            } else {
                state = self.free_propagator(b - a).apply(&state);
            }
            t = b;
        }
        debug_assert!((t - t1).abs() <= 1e-18 || t1 <= t0);
        let drift = (state.trace() - 1.0).abs();
        if drift > 1e-6 {
            return Err(Error::TraceDrift { drift });
        }
        Ok((state, stats))
    }

    /// Samples populations (and optionally states) at `sample_times`; the
    /// last state returned is at `t_final`.
    pub fn evolve(
        &self,
        pulse: &DrivePulse,
        rho0: &DensityMatrix,
        t_final: f64,
        sample_times: &[f64],
        keep_states: bool,
    ) -> Result<(DensityMatrix, Trajectory)> {
        let mut times: Vec<f64> = sample_times
            .iter()
            .copied()
            .filter(|&t| (0.0..=t_final).contains(&t))
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        times.dedup();
        let labels: Vec<BasisLabel> = self.dims().labels().collect();
        let mut populations = Vec::with_capacity(times.len());
        let mut states = if keep_states {
            Some(Vec::with_capacity(times.len()))
        } else {
            None
        };
        let mut stats = SolverStats::default();
        let mut state = rho0.clone();
        let mut t = 0.0;
        for &ts in &times {
            let (next, st) = self.propagate(pulse, &state, t, ts)?;
            stats.accepted += st.accepted;
            stats.rejected += st.rejected;
            state = next;
            t = ts;
            populations.push(self.populations(&state));
            if let Some(v) = states.as_mut() {
                v.push(state.clone());
            }
        }
        let (last, st) = self.propagate(pulse, &state, t, t_final)?;
        stats.accepted += st.accepted;
        stats.rejected += st.rejected;
        Ok((
            last,
            Trajectory {
                times,
                labels,
                populations,
                states,
                stats,
            },
        ))
    }

    /// Diagonal populations in dressed labels, or bare labels when requested.
    pub fn populations(&self, rho: &DensityMatrix) -> Vec<f64> {
        if self.settings.bare_populations {
            let u = &self.frame.unitary.matrix;
            let bare = u.matmul(&rho.matrix).matmul(&u.adjoint());
            bare.diag_re()
        } else {
            rho.matrix.diag_re()
        }
    }

    /// Rotates a dressed-label state back into the bare basis.
    pub fn to_bare(&self, rho: &DensityMatrix) -> DensityMatrix {
        let u = &self.frame.unitary.matrix;
        DensityMatrix {
            dims: rho.dims,
            matrix: u.matmul(&rho.matrix).matmul(&u.adjoint()),
        }
    }

    fn integrate(
        &self,
        pulse: &DrivePulse,
        rho: &DensityMatrix,
        t0: f64,
        t1: f64,
        h_prev: Option<f64>,
        stats: &mut SolverStats,
    ) -> Result<(DensityMatrix, f64)> {
        let n = self.dims().size();
        let len = n * n;
        let set = &self.settings;
        let in_ramp =
            |t: f64| pulse.t_rise > 0.0 && (t < pulse.t_rise || t > pulse.t_p - pulse.t_rise);
        let ramp_max = if pulse.t_rise > 0.0 {
            pulse.t_rise * set.ramp_step_fraction
        } else {
            f64::INFINITY
        };
        let mid = 0.5 * (t0 + t1);
        let h_max = if in_ramp(mid) {
            ramp_max.min(t1 - t0)
        } else {
            t1 - t0
        };

        let mut y: Vec<C64> = rho.matrix.as_slice().to_vec();
        let mut k: [Vec<C64>; 7] = core::array::from_fn(|_| vec![ZERO; len]);
        let mut tmp = vec![ZERO; len];
        let mut scratch = vec![ZERO; len];
        let mut y5 = vec![ZERO; len];
        let f = |t: f64, y: &[C64], out: &mut [C64], scratch: &mut [C64]| {
            self.rhs(pulse.value(t), y, out, scratch)
        };

        let mut t = t0;
        f(t, &y, &mut k[0], &mut scratch);
        let mut h = match h_prev {
            Some(h) => h.min(h_max),
            None => initial_step(&y, &k[0], set, h_max),
        };
        let h_min = 1e-8 * (t1 - t0).max(ns(1.0)) * 1e-6;
        let mut fac_max = 10.0;
        let mut h_used = h;
        while t < t1 {
            if t + h > t1 || t1 - (t + h) < 1e-6 * h {
                h = t1 - t;
            }
            for s in 1..7 {
                for idx in 0..len {
                    let mut acc = y[idx];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = dp5::A[s][j];
                        if a != 0.0 {
                            acc += kj[idx] * (h * a);
                        }
                    }
                    tmp[idx] = acc;
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                f(t + dp5::C[s] * h, &tmp, &mut tail[0], &mut scratch);
                if s == 6 {
                    y5.copy_from_slice(&tmp);
                }
            }
            let mut err2 = 0.0;
            for idx in 0..len {
                let mut e = ZERO;
                for (j, kj) in k.iter().enumerate() {
                    if dp5::E[j] != 0.0 {
                        e += kj[idx] * dp5::E[j];
                    }
                }
                e *= h;
                let sc = set.atol + set.rtol * y[idx].norm().max(y5[idx].norm());
                err2 += e.norm_sqr() / (sc * sc);
            }
            let err = libm::sqrt(err2 / len as f64);
            if !err.is_finite() {
                return Err(Error::StepFailure { t });
            }
            if err <= 1.0 {
                t += h;
                stats.accepted += 1;
                hermitize_flat(&mut y5, n);
                core::mem::swap(&mut y, &mut y5);
                // FSAL: the last stage is the derivative at the new point.
                let last = core::mem::take(&mut k[6]);
                k[0] = last;
                k[6] = vec![ZERO; len];
                h_used = h;
                let fac = if err == 0.0 {
                    fac_max
                } else {
                    (0.9 * libm::pow(err, -0.2)).min(fac_max)
                };
                fac_max = 10.0;
                h = (h * fac.max(0.2)).min(h_max);
            } else {
                stats.rejected += 1;
                fac_max = 1.0;
                h *= (0.9 * libm::pow(err, -0.2)).max(0.2);
                if h < h_min {
                    return Err(Error::StepFailure { t });
                }
            }
        }
        let matrix = CMatrix::from_row_major(n, y)?;
        Ok((
            DensityMatrix {
                dims: rho.dims,
                matrix,
            },
            h_used.max(h),
        ))
    }
}

fn hermitize_flat(y: &mut [C64], n: usize) {
    for i in 0..n {
        y[i * n + i].im = 0.0;
        for j in (i + 1)..n {
            let z = (y[i * n + j] + y[j * n + i].conj()) * 0.5;
            y[i * n + j] = z;
            y[j * n + i] = z.conj();
        }
    }
}

fn initial_step(y: &[C64], f0: &[C64], set: &SolverSettings, h_max: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (a, b) in y.iter().zip(f0) {
        let sc = set.atol + set.rtol * a.norm();
        d0 += a.norm_sqr() / (sc * sc);
        d1 += b.norm_sqr() / (sc * sc);
    }
    let (d0, d1) = (
        libm::sqrt(d0 / y.len() as f64),
        libm::sqrt(d1 / y.len() as f64),
    );
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-12
    } else {
        0.01 * d0 / d1
    };
    h.min(h_max)
}

/// Splits `[t0, t1]` at the envelope kinks. The flag says whether the drive
/// can be nonzero on the piece.
fn segments(pulse: &DrivePulse, t0: f64, t1: f64) -> Vec<(f64, f64, bool)> {
    let mut cuts = vec![t0];
    for b in [pulse.t_rise, pulse.t_p - pulse.t_rise, pulse.t_p] {
        if b > t0 && b < t1 {
            cuts.push(b);
        }
    }
    cuts.push(t1);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    cuts.dedup();
    let on = pulse.omega > 0.0;
    cuts.windows(2)
        .map(|w| (w[0], w[1], on && w[0] < pulse.t_p))
        .collect()
}

/// Starts in `|level><level| (x) sigma_th`, drives for `t_p`, idles until
/// `t_slot`, and returns `p2(t_slot)` with a trajectory sampled every 2 ns.
pub fn run_lru(
    params: &DeviceParams,
    pulse: &DrivePulse,
    level: usize,
    t_slot: f64,
) -> Result<(f64, Trajectory)> {
    if pulse.t_p > t_slot * (1.0 + 1e-12) {
        return Err(Error::PulseTooLong {
            t_p: pulse.t_p,
            t_slot,
        });
    }
    let sys = LindbladSystem::new(params, pulse.omega_d, pulse.phi)?;
    let rho0 = sys.initial_level(level)?;
    let samples = sample_grid(t_slot, ns(2.0));
    let (last, traj) = sys.evolve(pulse, &rho0, t_slot, &samples, false)?;
    Ok((leakage_population(&last), traj))
}

/// `0, step, 2 step, ..., t_end` (with `t_end` included).
pub fn sample_grid(t_end: f64, step: f64) -> Vec<f64> {
    let n = libm::floor(t_end / step + 1e-9) as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if (v.last().copied().unwrap_or(0.0) - t_end).abs() > 1e-15 {
        v.push(t_end);
    }
    v
}

/// Effective coherence figures of one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Characterization {
    pub p2_leaked: f64,
    pub p2_induced_0: f64,
    pub p2_induced_1: f64,
    pub eff_t1: f64,
    pub eff_t2: f64,
    /// `None` when no population reaches |1> from |0>.
    pub t1_up: Option<f64>,
}

impl LindbladSystem {
    fn final_state(
        &self,
        pulse: &DrivePulse,
        rho0: &DensityMatrix,
        t_slot: f64,
    ) -> Result<DensityMatrix> {
        Ok(self.propagate(pulse, rho0, 0.0, t_slot)?.0)
    }

    pub fn p2_final(&self, pulse: &DrivePulse, level: usize, t_slot: f64) -> Result<f64> {
        Ok(leakage_population(&self.final_state(
            pulse,
            &self.initial_level(level)?,
            t_slot,
        )?))
    }

    pub fn effective_t1(&self, pulse: &DrivePulse, t_slot: f64) -> Result<f64> {
        let rho = self.final_state(pulse, &self.initial_level(1)?, t_slot)?;
        t1_from_population(transmon_population(&rho, 1), t_slot)
    }

    pub fn effective_t2(&self, pulse: &DrivePulse, t_slot: f64) -> Result<f64> {
        let rho = self.final_state(pulse, &self.initial_plus()?, t_slot)?;
        t2_from_coherence(transmon_coherence(&rho).norm(), t_slot)
    }

    pub fn excitation_time(&self, pulse: &DrivePulse, t_slot: f64) -> Result<Option<f64>> {
        let rho = self.final_state(pulse, &self.initial_level(0)?, t_slot)?;
        Ok(t1_up_from_population(transmon_population(&rho, 1), t_slot))
    }

    /// All figures of merit from the five standard initial states.
    pub fn characterize(&self, pulse: &DrivePulse, t_slot: f64) -> Result<Characterization> {
        let r0 = self.final_state(pulse, &self.initial_level(0)?, t_slot)?;
        let r1 = self.final_state(pulse, &self.initial_level(1)?, t_slot)?;
        let r2 = self.final_state(pulse, &self.initial_level(2)?, t_slot)?;
        let rp = self.final_state(pulse, &self.initial_plus()?, t_slot)?;
        Ok(Characterization {
            p2_leaked: leakage_population(&r2),
            p2_induced_0: leakage_population(&r0),
            p2_induced_1: leakage_population(&r1),
            eff_t1: t1_from_population(transmon_population(&r1, 1), t_slot)?,
            eff_t2: t2_from_coherence(transmon_coherence(&rp).norm(), t_slot)?,
            t1_up: t1_up_from_population(transmon_population(&r0, 1), t_slot),
        })
    }
}

/// `-t / ln p`.
pub fn t1_from_population(p: f64, t: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::NonPositivePopulation { value: p });
    }
    Ok(-t / libm::log(p))
}

/// `-t / ln(2 |c|)`.
pub fn t2_from_coherence(c: f64, t: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveCoherence { value: c });
    }
    Ok(-t / libm::log(2.0 * c))
}

/// Inverts `p1 = 1 - exp(-t / T1up)`.
pub fn t1_up_from_population(p1: f64, t: f64) -> Option<f64> {
    if p1 > 0.0 && p1 < 1.0 {
        Some(-t / libm::log(1.0 - p1))
    } else {
        None
    }
}

pub fn effective_t1(params: &DeviceParams, pulse: &DrivePulse, t_slot: f64) -> Result<f64> {
    LindbladSystem::new(params, pulse.omega_d, pulse.phi)?.effective_t1(pulse, t_slot)
}

pub fn effective_t2(params: &DeviceParams, pulse: &DrivePulse, t_slot: f64) -> Result<f64> {
    LindbladSystem::new(params, pulse.omega_d, pulse.phi)?.effective_t2(pulse, t_slot)
}

pub fn excitation_time(
    params: &DeviceParams,
    pulse: &DrivePulse,
    t_slot: f64,
) -> Result<Option<f64>> {
    LindbladSystem::new(params, pulse.omega_d, pulse.phi)?.excitation_time(pulse, t_slot)
}

/// `R(zeta) = 1 - p2(t_slot)` with the transmon frequency shifted by each
/// `zeta` and the pulse held fixed.
pub fn zz_sensitivity(
    params: &DeviceParams,
    pulse: &DrivePulse,
    zetas: &[f64],
    t_slot: f64,
) -> Result<Vec<(f64, f64)>> {
    zz_sensitivity_with(&crate::batch::Sequential, params, pulse, zetas, t_slot)
}

pub fn zz_sensitivity_with<E: crate::batch::Executor>(
    exec: &E,
    params: &DeviceParams,
    pulse: &DrivePulse,
    zetas: &[f64],
    t_slot: f64,
) -> Result<Vec<(f64, f64)>> {
    let out = exec.map(zetas, |&z| -> Result<(f64, f64)> {
        let mut p = *params;
        p.omega_q += z;
        let sys = LindbladSystem::new(&p, pulse.omega_d, pulse.phi)?;
        Ok((z, 1.0 - sys.p2_final(pulse, 2, t_slot)?))
    });
    out.into_iter().collect()
}

/// Least-squares `y = c0 + c1 x + c2 x^2`; returns the coefficients and R^2.
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Result<([f64; 3], f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "need at least 3 matching points",
        });
    }
    // Center and scale x for conditioning.
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sx = xs
        .iter()
        .map(|x| (x - mx).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = (x - mx) / sx;
        let basis = [1.0, t, t * t];
        for i in 0..3 {
            b[i] += basis[i] * y;
            for j in 0..3 {
                a[i][j] += basis[i] * basis[j];
            }
        }
    }
    let c = solve3(a, b).ok_or(Error::InvalidParameter {
        name: "samples",
        reason: "need at least 3 distinct abscissae",
    })?;
    // Back to the original variable.
    let (c0, c1, c2) = (c[0], c[1] / sx, c[2] / (sx * sx));
    let coeffs = [c0 - c1 * mx + c2 * mx * mx, c1 - 2.0 * c2 * mx, c2];
    let my = ys.iter().sum::<f64>() / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let f = coeffs[0] + coeffs[1] * x + coeffs[2] * x * x;
        ss_res += (y - f) * (y - f);
        ss_tot += (y - my) * (y - my);
    }
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok((coeffs, r2))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(core::cmp::Ordering::Equal)
        })?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..3 {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// Envelope of an always-on drive: ramp up, then flat through `t_slot`.
pub fn long_drive_pulse(omega: f64, omega_d: f64, t_rise: f64, t_slot: f64) -> DrivePulse {
    DrivePulse {
        omega,
        omega_d,
        phi: 0.0,
        t_rise,
        t_p: t_slot + t_rise,
    }
}

/// Always-on drive from `|2><2| (x) sigma_th`, sampled every 2 ns.
pub fn long_drive_run(
    params: &DeviceParams,
    omega: f64,
    omega_d: f64,
    t_rise: f64,
    t_slot: f64,
) -> Result<Trajectory> {
    let pulse = long_drive_pulse(omega, omega_d, t_rise, t_slot);
    let sys = LindbladSystem::new(params, omega_d, 0.0)?;
    let rho0 = sys.initial_level(2)?;
    Ok(sys
        .evolve(&pulse, &rho0, t_slot, &sample_grid(t_slot, ns(2.0)), false)?
        .1)
}

/// Effective T1 under the always-on drive.
pub fn long_drive_t1(
    params: &DeviceParams,
    omega: f64,
    omega_d: f64,
    t_rise: f64,
    t_slot: f64,
) -> Result<f64> {
    let pulse = long_drive_pulse(omega, omega_d, t_rise, t_slot);
    LindbladSystem::new(params, omega_d, 0.0)?.effective_t1(&pulse, t_slot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{ghz, mhz, us};

    fn quiet(mut p: DeviceParams) -> DeviceParams {
        p.nbar = 0.0;
        p
    }

    #[test]
    fn thermal_state_values() {
        let th = thermal_resonator_state(0.005, 3).unwrap();
        assert!((th.p1() - 0.005 / 1.01).abs() < 1e-15);
        assert!((th.matrix.trace().re - 1.0).abs() < 1e-15);
        assert_eq!(thermal_resonator_state(0.0, 3).unwrap().p1(), 0.0);
        assert!(matches!(
            thermal_resonator_state(0.2, 3),
            Err(Error::OutOfRegime { .. })
        ));
    }

    #[test]
    fn jump_count() {
        let p = DeviceParams::table1();
        assert_eq!(JumpOperatorSet::build(&p).unwrap().ops.len(), 4);
        let mut q = p;
        q.t2_r = 1.5 / q.kappa;
        assert_eq!(JumpOperatorSet::build(&q).unwrap().ops.len(), 5);
    }

    #[test]
    fn free_decay_matches_exponential() {
        let p = quiet(DeviceParams::table1());
        let sys = LindbladSystem::new(&p, ghz(5.25), 0.0).unwrap();
        let rho0 = sys.initial_level(1).unwrap();
        let pulse = DrivePulse {
            omega: 0.0,
            omega_d: ghz(5.25),
            phi: 0.0,
            t_rise: 0.0,
            t_p: 0.0,
        };
        let t = ns(440.0);
        let (rho, _) = sys.propagate(&pulse, &rho0, 0.0, t).unwrap();
        let p1 = transmon_population(&rho, 1);
        assert!((p1 / libm::exp(-t / p.t1_q) - 1.0).abs() < 1e-6);
        assert!((sys.effective_t1(&pulse, t).unwrap() / us(30.0) - 1.0).abs() < 0.005);
    }

    #[test]
    fn free_propagator_matches_integrator() {
        let p = DeviceParams::table1();
        let sys = LindbladSystem::new(&p, ghz(5.25), 0.0)
            .unwrap()
            .with_settings(SolverSettings {
                rtol: 1e-11,
                atol: 1e-13,
                ..Default::default()
            });
        let rho0 = sys.initial_plus().unwrap();
        let dt = ns(40.0);
        let exact = sys.free_propagator(dt).apply(&rho0);
        // Force the integrator with a tiny but nonzero envelope.
        let pulse = DrivePulse {
            omega: 1e-30,
            omega_d: ghz(5.25),
            phi: 0.0,
            t_rise: 0.0,
            t_p: ns(100.0),
        };
        let (num, _) = sys.propagate(&pulse, &rho0, 0.0, dt).unwrap();
        let d = exact.matrix.max_diff(&num.matrix);
        assert!(d < 1e-7, "{d:e}");
    }

    #[test]
    fn thermal_fixed_point() {
        let mut p = DeviceParams::table1();
        p.n_resonator = 2;
        let sys = LindbladSystem::new(&p, ghz(5.25), 0.0).unwrap();
        let rho0 = sys.initial_level(0).unwrap();
        let pulse = DrivePulse::constant(0.0, ghz(5.25));
        let (rho, _) = sys.propagate(&pulse, &rho0, 0.0, ns(440.0)).unwrap();
        assert!(rho.matrix.max_diff(&rho0.matrix) < 1e-6);
    }

    #[test]
    fn no_purcell_shortening() {
        let p = quiet(DeviceParams::table1());
        let pulse = DrivePulse::constant(0.0, ghz(5.25));
        let t1 = effective_t1(&p, &pulse, ns(440.0)).unwrap();
        assert!((t1 / p.t1_q - 1.0).abs() < 1e-6);
    }

    #[test]
    fn t2_without_photons_matches_input() {
        let p = quiet(DeviceParams::table1());
        let pulse = DrivePulse::constant(0.0, ghz(5.25));
        let t2 = effective_t2(&p, &pulse, ns(440.0)).unwrap();
        assert!((t2 / p.t2_q - 1.0).abs() < 0.005, "{t2}");
        assert_eq!(excitation_time(&p, &pulse, ns(440.0)).unwrap(), None);
    }

    #[test]
    fn leakage_population_linear() {
        let p = DeviceParams::table1();
        let sys = LindbladSystem::new(&p, ghz(5.25), 0.0).unwrap();
        let mut t = CMatrix::zeros(6);
        t[(1, 1)] = C64::new(0.5, 0.0);
        t[(2, 2)] = C64::new(0.5, 0.0);
        let rho = sys.with_thermal(&t).unwrap();
        assert!((leakage_population(&rho) - 0.5).abs() < 1e-15);
        assert!(leakage_population(&sys.initial_level(0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn quadratic_fit_exact() {
        let xs: Vec<f64> = (0..9).map(|k| mhz(-2.0 + 0.5 * k as f64)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.99 - 3e-19 * x * x + 1e-12 * x)
            .collect();
        let (c, r2) = quadratic_fit(&xs, &ys).unwrap();
        assert!((c[0] - 0.99).abs() < 1e-12);
        assert!((c[2] / -3e-19 - 1.0).abs() < 1e-8);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pulse_too_long() {
        let p = DeviceParams::table1();
        let mut pulse = DrivePulse::operating_point();
        pulse.t_p = ns(500.0);
        assert!(matches!(
            run_lru(&p, &pulse, 2, ns(440.0)),
            Err(Error::PulseTooLong { .. })
        ));
    }
}

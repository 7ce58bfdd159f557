//! Rotating-frame transmon-resonator model, its exact dressed frame and the
//! exact |2,0> / |0,1> avoided crossing.
//!
//! Basis state |m, l> (transmon m, resonator l) sits at row `m * n_r + l`.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, CMatrix, C64, ZERO};
use crate::units::{ghz, mhz, ns, us, TWO_PI};

/// Truncation of the two modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n_transmon: usize,
    pub n_resonator: usize,
}

impl Dims {
    pub const fn new(n_transmon: usize, n_resonator: usize) -> Self {
        Self {
            n_transmon,
            n_resonator,
        }
    }

    #[inline]
    pub const fn size(&self) -> usize {
        self.n_transmon * self.n_resonator
    }

    #[inline]
    pub const fn index(&self, label: BasisLabel) -> usize {
        label.transmon * self.n_resonator + label.resonator
    }

    #[inline]
    pub const fn label(&self, index: usize) -> BasisLabel {
        BasisLabel {
            transmon: index / self.n_resonator,
            resonator: index % self.n_resonator,
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = BasisLabel> + '_ {
        (0..self.size()).map(|i| self.label(i))
    }
}

/// Bare product-state label |transmon, resonator>.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisLabel {
    pub transmon: usize,
    pub resonator: usize,
}

impl BasisLabel {
    pub const fn new(transmon: usize, resonator: usize) -> Self {
        Self {
            transmon,
            resonator,
        }
    }

    /// Total excitation number.
    pub const fn excitations(&self) -> usize {
        self.transmon + self.resonator
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{}>", self.transmon, self.resonator)
    }
}

/// Physical constants of the transmon-resonator pair. Frequencies in rad/s,
/// times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_q: f64,
    pub omega_r: f64,
    /// Anharmonicity, negative for a transmon.
    pub alpha: f64,
    pub g: f64,
    /// Resonator energy decay rate, 1/T1 of the resonator.
    pub kappa: f64,
    /// Mean thermal photon number of the resonator.
    pub nbar: f64,
    pub t1_q: f64,
    pub t2_q: f64,
    pub t2_r: f64,
    pub n_transmon: usize,
    pub n_resonator: usize,
}

impl DeviceParams {
    /// Target high-frequency data-qubit device: 6.7 GHz transmon, 7.8 GHz
    /// resonator, alpha = -300 MHz, g = 135 MHz, kappa = 10 MHz (2 pi
    /// included), nbar = 0.005, T1 = T2 = 30 us, truncation (6, 3).
    ///
    /// The resonator T2 is set to exactly 2/kappa, i.e. no pure resonator
    /// dephasing. The tabulated 32 ns is 0.5% above 2/kappa and would give a
    /// negative dephasing rate.
    pub fn table1() -> Self {
        let kappa = mhz(10.0);
        Self {
            omega_q: ghz(6.7),
            omega_r: ghz(7.8),
            alpha: mhz(-300.0),
            g: mhz(135.0),
            kappa,
            nbar: 0.005,
            t1_q: us(30.0),
            t2_q: us(30.0),
            t2_r: 2.0 / kappa,
            n_transmon: 6,
            n_resonator: 3,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.n_transmon, self.n_resonator)
    }

    /// Qubit-resonator detuning `omega_q - omega_r`.
    #[inline]
    pub fn delta(&self) -> f64 {
        self.omega_q - self.omega_r
    }

    /// `Delta_m = Delta + alpha m`.
    #[inline]
    pub fn delta_m(&self, m: i32) -> f64 {
        self.delta() + self.alpha * m as f64
    }

    /// Bare |2,0> / |0,1> crossing frequency `2 omega_q + alpha - omega_r`.
    #[inline]
    pub fn omega_d0_star(&self) -> f64 {
        2.0 * self.omega_q + self.alpha - self.omega_r
    }

    /// Transmon pure-dephasing rate `1/T2 - 1/(2 T1)`; infinite T2 means none.
    pub fn transmon_dephasing_rate(&self) -> f64 {
        let r = inv(self.t2_q) - 0.5 * inv(self.t1_q);
        if r > 0.0 {
            r
        } else {
            0.0
        }
    }

    /// Resonator pure-dephasing rate `1/T2r - kappa/2`, clamped at zero.
    pub fn resonator_dephasing_rate(&self) -> f64 {
        let r = inv(self.t2_r) - 0.5 * self.kappa;
        // Anything within rounding of kappa is "no dephasing".
        if r > 1e-9 * self.kappa {
            r
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if !(self.alpha < 0.0) {
            return bad("alpha", "must be negative");
        }
        if !(self.g >= 0.0) {
            return bad("g", "must be non-negative");
        }
        if !(self.omega_q > 0.0 && self.omega_r > 0.0) {
            return bad("omega", "frequencies must be positive");
        }
        if !(self.kappa >= 0.0) {
            return bad("kappa", "must be non-negative");
        }
        if !(self.nbar >= 0.0) {
            return bad("nbar", "must be non-negative");
        }
        if self.n_transmon < 3 {
            return bad("n_transmon", "need at least 3 levels");
        }
        if self.n_resonator < 2 {
            return bad("n_resonator", "need at least 2 levels");
        }
        if !(self.t1_q > 0.0 && self.t2_q > 0.0 && self.t2_r > 0.0) {
            return bad("T", "coherence times must be positive");
        }
        if self.t2_q > 2.0 * self.t1_q * (1.0 + 1e-9) {
            return bad("t2_q", "T2 must not exceed 2 T1");
        }
        // 1% slack so tabulated values rounded to the ns are accepted.
        if self.kappa > 0.0 && self.t2_r > 2.0 / self.kappa * 1.01 {
            return bad("t2_r", "T2 of the resonator must not exceed 2/kappa");
        }
        Ok(())
    }
}

fn inv(t: f64) -> f64 {
    if t.is_finite() {
        1.0 / t
    } else {
        0.0
    }
}

/// Drive amplitude, frequency, phase and sin^2-ramp timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivePulse {
    /// Peak amplitude in rad/s.
    pub omega: f64,
    pub omega_d: f64,
    pub phi: f64,
    pub t_rise: f64,
    pub t_p: f64,
}

impl DrivePulse {
    /// The chosen operating point: 204 MHz at 5.2464 GHz, 178.6 ns total with
    /// 30 ns ramps.
    pub fn operating_point() -> Self {
        Self {
            omega: mhz(204.0),
            omega_d: ghz(5.2464),
            phi: 0.0,
            t_rise: ns(30.0),
            t_p: ns(178.6),
        }
    }

    /// A constant drive (no timing), used by static analyses.
    pub fn constant(omega: f64, omega_d: f64) -> Self {
        Self {
            omega,
            omega_d,
            phi: 0.0,
            t_rise: 0.0,
            t_p: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "Omega",
                reason: "must be non-negative",
            });
        }
        if !(self.t_rise >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "t_rise",
                reason: "must be non-negative",
            });
        }
        if self.t_p < 2.0 * self.t_rise * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter {
                name: "t_p",
                reason: "must be at least 2 t_rise",
            });
        }
        Ok(())
    }

    /// `delta^r = omega_r - omega_d`.
    pub fn delta_r(&self, params: &DeviceParams) -> f64 {
        params.omega_r - self.omega_d
    }

    /// `delta^q = omega_q - omega_d`.
    pub fn delta_q(&self, params: &DeviceParams) -> f64 {
        params.omega_q - self.omega_d
    }

    /// Envelope divided by the peak amplitude, in [0, 1].
    pub fn envelope(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.t_p {
            return 0.0;
        }
        let tr = self.t_rise;
        if tr <= 0.0 {
            return 1.0;
        }
        let s = |x: f64| {
            let v = libm::sin(core::f64::consts::PI * x / (2.0 * tr));
            v * v
        };
        if t < tr {
            s(t)
        } else if t > self.t_p - tr {
            s(self.t_p - t)
        } else {
            1.0
        }
    }

    /// Instantaneous drive amplitude in rad/s.
    pub fn value(&self, t: f64) -> f64 {
        self.omega * self.envelope(t)
    }
}

/// Dense operator on the truncated product space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub dims: Dims,
    pub matrix: CMatrix,
    /// Set when the operator was constructed Hermitian.
    pub hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(dims: Dims, matrix: CMatrix, hermitian: bool) -> Result<Self> {
        if matrix.dim() != dims.size() {
            return Err(Error::DimensionMismatch {
                expected: dims.size(),
                found: matrix.dim(),
            });
        }
        Ok(Self {
            dims,
            matrix,
            hermitian,
        })
    }

    pub fn element(&self, row: BasisLabel, col: BasisLabel) -> C64 {
        self.matrix[(self.dims.index(row), self.dims.index(col))]
    }

    /// Serializable form: dims plus row-major interleaved (re, im) pairs.
    pub fn to_json_repr(&self) -> MatrixJson {
        let mut data = Vec::with_capacity(2 * self.matrix.as_slice().len());
        for z in self.matrix.as_slice() {
            data.push(z.re);
            data.push(z.im);
        }
        MatrixJson {
            dims: [self.dims.n_transmon, self.dims.n_resonator],
            hermitian: self.hermitian,
            data,
        }
    }

    pub fn from_json_repr(repr: &MatrixJson) -> Result<Self> {
        let dims = Dims::new(repr.dims[0], repr.dims[1]);
        let n = dims.size();
        if repr.data.len() != 2 * n * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n * n,
                found: repr.data.len(),
            });
        }
        let entries = repr
            .data
            .chunks_exact(2)
            .map(|p| C64::new(p[0], p[1]))
            .collect();
        Self::new(dims, CMatrix::from_row_major(n, entries)?, repr.hermitian)
    }
}

/// JSON schema for operator golden files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    /// `[n_transmon, n_resonator]`.
    pub dims: [usize; 2],
    pub hermitian: bool,
    /// Row-major entries as `re, im, re, im, ...`.
    pub data: Vec<f64>,
}

fn ladder(n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    for k in 1..n {
        m[(k - 1, k)] = C64::new(libm::sqrt(k as f64), 0.0);
    }
    m
}

/// Annihilation operators `a = I_t (x) a_r` and `b = b_t (x) I_r`.
pub fn build_ladder_ops(params: &DeviceParams) -> (OperatorMatrix, OperatorMatrix) {
    ladder_ops(params.dims())
}

pub fn ladder_ops(dims: Dims) -> (OperatorMatrix, OperatorMatrix) {
    let a = CMatrix::kron(
        &CMatrix::identity(dims.n_transmon),
        &ladder(dims.n_resonator),
    );
    let b = CMatrix::kron(
        &ladder(dims.n_transmon),
        &CMatrix::identity(dims.n_resonator),
    );
    (
        OperatorMatrix {
            dims,
            matrix: a,
            hermitian: false,
        },
        OperatorMatrix {
            dims,
            matrix: b,
            hermitian: false,
        },
    )
}

/// Diagonal of `H_0 = delta^r a^dag a + delta^q b^dag b + alpha/2 b^dag^2 b^2`.
pub fn bare_energies(params: &DeviceParams, omega_d: f64) -> Vec<f64> {
    let dq = params.omega_q - omega_d;
    let dr = params.omega_r - omega_d;
    params
        .dims()
        .labels()
        .map(|lab| {
            let m = lab.transmon as f64;
            let l = lab.resonator as f64;
            l * dr + m * dq + 0.5 * params.alpha * m * (m - 1.0)
        })
        .collect()
}

/// `H_0 + H_c` at drive frequency `omega_d`.
pub fn static_hamiltonian(params: &DeviceParams, omega_d: f64) -> OperatorMatrix {
    let dims = params.dims();
    let mut h = CMatrix::from_real_diag(&bare_energies(params, omega_d));
    let (a, b) = ladder_ops(dims);
    // g (a b^dag + a^dag b)
    let abd = a.matrix.matmul(&b.matrix.adjoint());
    let coupling = &abd + &abd.adjoint();
    h += &coupling.scale_re(params.g);
    OperatorMatrix {
        dims,
        matrix: h,
        hermitian: true,
    }
}

/// Unit-amplitude drive `(e^{i phi} b + e^{-i phi} b^dag) / 2`.
pub fn drive_operator(dims: Dims, phi: f64) -> OperatorMatrix {
    let (_, b) = ladder_ops(dims);
    let e = C64::from_polar(1.0, phi);
    let m = &b.matrix.scale(e * 0.5) + &b.matrix.adjoint().scale(e.conj() * 0.5);
    OperatorMatrix {
        dims,
        matrix: m,
        hermitian: true,
    }
}

/// `H_0 + H_c + H_d` with the drive amplitude `amplitude_scale * Omega`.
pub fn build_hamiltonian(
    params: &DeviceParams,
    drive: &DrivePulse,
    amplitude_scale: f64,
) -> OperatorMatrix {
    let mut h = static_hamiltonian(params, drive.omega_d);
    let hd = drive_operator(params.dims(), drive.phi);
    h.matrix += &hd.matrix.scale_re(amplitude_scale * drive.omega);
    h
}

/// Exact eigenbasis of `H_0 + H_c`, stored in label order: column `i` of
/// `unitary` is the dressed state whose dominant bare component is
/// `dims.label(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedFrame {
    pub unitary: OperatorMatrix,
    /// Dressed energies in label order (rad/s, rotating frame).
    pub energies: Vec<f64>,
    /// `labels[i]` is the bare label of column `i`.
    pub labels: Vec<BasisLabel>,
    /// `|<label|eigvec>|^2` for every column.
    pub overlaps: Vec<f64>,
}

impl DressedFrame {
    pub fn dims(&self) -> Dims {
        self.unitary.dims
    }

    pub fn energy(&self, label: BasisLabel) -> f64 {
        self.energies[self.dims().index(label)]
    }

    /// Column for a dressed label.
    pub fn state(&self, label: BasisLabel) -> Vec<C64> {
        self.unitary.matrix.column(self.dims().index(label))
    }
}

/// Minimum `|<label|eigvec>|^2` accepted by the labeling.
pub const LABEL_OVERLAP_FLOOR: f64 = 0.25;

/// Exact diagonalization of `H_0 + H_c` with greedy maximal-overlap labels
/// and the gauge "labeled component real and positive".
pub fn diagonalize_static(params: &DeviceParams, omega_d: f64) -> Result<DressedFrame> {
    let h = static_hamiltonian(params, omega_d);
    label_eigenbasis(&h)
}

fn label_eigenbasis(h: &OperatorMatrix) -> Result<DressedFrame> {
    let dims = h.dims;
    let n = dims.size();
    let eig = eigh(&h.matrix)?;
    // (overlap, eigen rank, bare index); rank order breaks ties by energy.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for k in 0..n {
        for i in 0..n {
            pairs.push((eig.vectors[(i, k)].norm_sqr(), k, i));
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut col_of_label = alloc::vec![usize::MAX; n];
    let mut taken = alloc::vec![false; n];
    let mut overlaps = alloc::vec![0.0; n];
    let mut left = n;
    for (ov, k, i) in pairs {
        if left == 0 {
            break;
        }
        if taken[k] || col_of_label[i] != usize::MAX {
            continue;
        }
        col_of_label[i] = k;
        taken[k] = true;
        overlaps[i] = ov;
        left -= 1;
    }
    for i in 0..n {
        if overlaps[i] < LABEL_OVERLAP_FLOOR {
            return Err(Error::LabelAmbiguity {
                label: dims.label(i),
                overlap: overlaps[i],
            });
        }
    }
    let mut u = eig.vectors.permute_columns(&col_of_label);
    for j in 0..n {
        let z = u[(j, j)];
        let phase = z.conj() / z.norm();
        for i in 0..n {
            u[(i, j)] *= phase;
        }
        u[(j, j)] = C64::new(u[(j, j)].re, 0.0);
    }
    let energies = col_of_label.iter().map(|&k| eig.values[k]).collect();
    Ok(DressedFrame {
        unitary: OperatorMatrix {
            dims,
            matrix: u,
            hermitian: false,
        },
        energies,
        labels: dims.labels().collect(),
        overlaps,
    })
}

/// `U^dag O U`: an operator in the bare basis expressed in the dressed basis.
pub fn to_dressed_frame(op: &OperatorMatrix, frame: &DressedFrame) -> Result<OperatorMatrix> {
    if op.dims != frame.dims() {
        return Err(Error::DimensionMismatch {
            expected: frame.dims().size(),
            found: op.dims.size(),
        });
    }
    let u = &frame.unitary.matrix;
    let mut m = u.adjoint().matmul(&op.matrix).matmul(u);
    if op.hermitian {
        m.hermitize();
    }
    Ok(OperatorMatrix {
        dims: op.dims,
        matrix: m,
        hermitian: op.hermitian,
    })
}

/// `U O U^dag`: inverse of [`to_dressed_frame`].
pub fn from_dressed_frame(op: &OperatorMatrix, frame: &DressedFrame) -> Result<OperatorMatrix> {
    if op.dims != frame.dims() {
        return Err(Error::DimensionMismatch {
            expected: frame.dims().size(),
            found: op.dims.size(),
        });
    }
    let u = &frame.unitary.matrix;
    let mut m = u.matmul(&op.matrix).matmul(&u.adjoint());
    if op.hermitian {
        m.hermitize();
    }
    Ok(OperatorMatrix {
        dims: op.dims,
        matrix: m,
        hermitian: op.hermitian,
    })
}

/// Drive-frequency window for the exact crossing search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanWindow {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

impl ScanWindow {
    /// `center +- 2 pi 60 MHz`, sampled every 2 MHz.
    pub fn around(center: f64) -> Self {
        Self {
            lo: center - mhz(60.0),
            hi: center + mhz(60.0),
            samples: 61,
        }
    }

    /// Centered on the bare crossing plus the static dispersive shift (from
    /// the exact dressed energies) plus a second-order drive Stark estimate.
    /// The bare crossing alone misses the minimum for Omega/2pi above about
    /// 200 MHz.
    pub fn default_for(params: &DeviceParams, omega: f64) -> Result<Self> {
        Ok(Self::around(estimated_crossing(params, omega)?))
    }
}

/// Cheap estimate of omega_d*(Omega), used only to place the scan window.
pub fn estimated_crossing(params: &DeviceParams, omega: f64) -> Result<f64> {
    let w0 = params.omega_d0_star();
    let frame = diagonalize_static(params, w0)?;
    // E(2,0) - E(0,1) has slope -1 in omega_d.
    let eta0 = frame.energy(BasisLabel::new(2, 0)) - frame.energy(BasisLabel::new(0, 1));
    let w1 = w0 + eta0;
    let dq = params.omega_q - w1;
    let trans = |m: i32| dq + params.alpha * m as f64;
    let level = |m: i32| {
        let up = (m + 1) as f64 / trans(m);
        let down = if m > 0 { m as f64 / trans(m - 1) } else { 0.0 };
        0.25 * omega * omega * (down - up)
    };
    Ok(w1 + level(2) - level(0))
}

/// Result of the exact crossing search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidedCrossing {
    pub omega_d_star: f64,
    /// Half the minimal gap.
    pub g_tilde: f64,
    /// Sampled `(omega_d, gap)` pairs.
    pub gap_curve: Vec<(f64, f64)>,
}

/// Tracks the pair of full-H eigenstates living mostly on dressed |2,0> and
/// |0,1>.
#[derive(Debug, Clone)]
pub struct CrossingTracker {
    params: DeviceParams,
    omega: f64,
    s20: Vec<C64>,
    s01: Vec<C64>,
    drive: CMatrix,
    coupling: CMatrix,
}

impl CrossingTracker {
    pub fn new(params: &DeviceParams, omega: f64) -> Result<Self> {
        params.validate()?;
        let frame = diagonalize_static(params, params.omega_d0_star())?;
        let dims = params.dims();
        let zero = static_hamiltonian(params, params.omega_d0_star());
        let mut coupling = zero.matrix.clone();
        for (i, e) in bare_energies(params, params.omega_d0_star())
            .iter()
            .enumerate()
        {
            coupling[(i, i)] -= C64::new(*e, 0.0);
        }
        Ok(Self {
            params: *params,
            omega,
            s20: frame.state(BasisLabel::new(2, 0)),
            s01: frame.state(BasisLabel::new(0, 1)),
            drive: drive_operator(dims, 0.0).matrix.scale_re(omega),
            coupling,
        })
    }

    /// Gap between the two tracked eigenstates at `omega_d`.
    pub fn gap(&self, omega_d: f64) -> Result<f64> {
        let mut h = &self.coupling + &self.drive;
        for (i, e) in bare_energies(&self.params, omega_d).iter().enumerate() {
            h[(i, i)] += C64::new(*e, 0.0);
        }
        let eig = eigh(&h)?;
        let n = h.dim();
        let mut best = [(f64::NEG_INFINITY, 0usize); 2];
        for k in 0..n {
            let mut p20 = ZERO;
            let mut p01 = ZERO;
            for i in 0..n {
                let v = eig.vectors[(i, k)];
                p20 += self.s20[i].conj() * v;
                p01 += self.s01[i].conj() * v;
            }
            let w = p20.norm_sqr() + p01.norm_sqr();
            if w > best[0].0 {
                best[1] = best[0];
                best[0] = (w, k);
            } else if w > best[1].0 {
                best[1] = (w, k);
            }
        }
        if best[1].0 < LABEL_OVERLAP_FLOOR {
            return Err(Error::LabelAmbiguity {
                label: BasisLabel::new(2, 0),
                overlap: best[1].0,
            });
        }
        Ok((eig.values[best[0].1] - eig.values[best[1].1]).abs())
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
}

/// Golden-section minimization of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let invphi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Exact omega_d* and g_tilde from full diagonalization at constant Omega.
///
/// `scan = None` uses [`ScanWindow::default_for`]. The sampled minimum is
/// refined by golden section to 2 pi 1 kHz.
pub fn find_avoided_crossing_exact(
    params: &DeviceParams,
    omega: f64,
    scan: Option<ScanWindow>,
) -> Result<AvoidedCrossing> {
    let scan = match scan {
        Some(s) => s,
        None => ScanWindow::default_for(params, omega)?,
    };
    if !(scan.hi > scan.lo) || scan.samples < 3 {
        return Err(Error::InvalidParameter {
            name: "scan",
            reason: "need hi > lo and at least 3 samples",
        });
    }
    let tracker = CrossingTracker::new(params, omega)?;
    let step = (scan.hi - scan.lo) / (scan.samples - 1) as f64;
    let mut curve = Vec::with_capacity(scan.samples);
    for k in 0..scan.samples {
        let w = scan.lo + step * k as f64;
        curve.push((w, tracker.gap(w)?));
    }
    let (kmin, _) =
        curve.iter().enumerate().fold(
            (0, f64::INFINITY),
            |acc, (k, &(_, gap))| if gap < acc.1 { (k, gap) } else { acc },
        );
    if kmin == 0 || kmin == scan.samples - 1 {
        return Err(Error::NoCrossingInRange);
    }
    let (w_star, gap) = golden_section(
        |w| tracker.gap(w),
        curve[kmin - 1].0,
        curve[kmin + 1].0,
        TWO_PI * 1e3,
    )?;
    // Without capacitive coupling the drive cannot connect |2,0> and |0,1>:
    // the levels cross exactly and the sampled gap is only the resolution.
    let g_tilde = if params.g == 0.0 { 0.0 } else { 0.5 * gap };
    Ok(AvoidedCrossing {
        omega_d_star: w_star,
        g_tilde,
        gap_curve: curve,
    })
}

/// Drift of (omega_d*, g_tilde) when the truncation is enlarged to `larger`.
pub fn truncation_drift(params: &DeviceParams, omega: f64, larger: Dims) -> Result<(f64, f64)> {
    let small = find_avoided_crossing_exact(params, omega, None)?;
    let mut p = *params;
    p.n_transmon = larger.n_transmon;
    p.n_resonator = larger.n_resonator;
    let big = find_avoided_crossing_exact(&p, omega, None)?;
    Ok((
        (small.omega_d_star - big.omega_d_star).abs(),
        (small.g_tilde - big.g_tilde).abs(),
    ))
}

/// [`truncation_drift`] with both truncations doubled.
pub fn convergence_check(params: &DeviceParams, omega: f64) -> Result<(f64, f64)> {
    truncation_drift(
        params,
        omega,
        Dims::new(2 * params.n_transmon, 2 * params.n_resonator),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    #[test]
    fn ladder_elements() {
        let mut p = DeviceParams::table1();
        p.n_transmon = 3;
        p.n_resonator = 2;
        let (a, b) = build_ladder_ops(&p);
        assert_eq!(a.element(BasisLabel::new(0, 0), BasisLabel::new(0, 1)), ONE);
        assert!(
            (b.element(BasisLabel::new(1, 0), BasisLabel::new(2, 0)).re - 2f64.sqrt()).abs()
                < 1e-15
        );
        let comm = a.matrix.commutator(&b.matrix);
        assert_eq!(comm.max_abs(), 0.0);
    }

    #[test]
    fn envelope_shape() {
        let p = DrivePulse::operating_point();
        assert_eq!(p.envelope(0.0), 0.0);
        assert!((p.envelope(p.t_rise) - 1.0).abs() < 1e-15);
        assert!((p.envelope(0.5 * p.t_rise) - 0.5).abs() < 1e-12);
        assert!(p.envelope(p.t_p).abs() < 1e-15);
        assert_eq!(p.envelope(p.t_p + 1e-9), 0.0);
    }

    #[test]
    fn g_zero_frame_is_identity() {
        let mut p = DeviceParams::table1();
        p.g = 1e-300;
        let f = diagonalize_static(&p, ghz(5.25)).unwrap();
        assert!(f.unitary.matrix.max_diff(&CMatrix::identity(18)) < 1e-12);
    }
}

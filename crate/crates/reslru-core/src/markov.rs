//! Per-cycle leakage Markov model, LRU-augmented rates, trace fitting, the
//! phenomenological qutrit LRU channel and the Surface-17 leakage Monte
//! Carlo.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::batch::{Executor, Sequential};
use crate::error::{Error, Result};
use crate::linalg::{eigh, expm, CMatrix, C64};
use crate::units::{ns, us};

/// Per-cycle transition probabilities between the computational (C) and
/// leakage (L) subspaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovRates {
    pub gamma_cl: f64,
    pub gamma_lc: f64,
}

/// A value that may have been clamped into its valid range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamped<T> {
    pub value: T,
    /// A raw rate exceeded 1 and was clamped.
    pub overflow: bool,
}

impl MarkovRates {
    pub fn new(gamma_cl: f64, gamma_lc: f64) -> Result<Self> {
        for p in [gamma_cl, gamma_lc] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidRates {
                    reason: "rates must lie in [0, 1]",
                });
            }
        }
        Ok(Self { gamma_cl, gamma_lc })
    }

    fn clamped(gamma_cl: f64, gamma_lc: f64) -> Clamped<Self> {
        let overflow = gamma_cl > 1.0 || gamma_lc > 1.0;
        Clamped {
            value: Self {
                gamma_cl: gamma_cl.min(1.0),
                gamma_lc: gamma_lc.min(1.0),
            },
            overflow,
        }
    }

    /// `1 / Gamma_LC` in cycles.
    pub fn lifetime(&self) -> Result<f64> {
        lifetime(self)
    }

    /// `Gamma_CL / (Gamma_CL + Gamma_LC)`.
    pub fn steady_state(&self) -> f64 {
        steady_state(self)
    }
}

fn check_probability(p: f64, reason: &'static str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidRates { reason })
    }
}

/// `1 - exp(-t / (T1/2))`: relaxation out of |2> during `t`.
pub fn relaxation_seepage(t: f64, t1: f64) -> f64 {
    1.0 - libm::exp(-t / (0.5 * t1))
}

/// `Gamma_CL = n_flux L1`, `Gamma_LC = n_flux L2 + 1 - exp(-t_c / (T1/2))`.
pub fn rates_from_physical(
    n_flux: u32,
    l1: f64,
    l2: f64,
    t_c: f64,
    t1: f64,
) -> Result<Clamped<MarkovRates>> {
    check_probability(l1, "L1 must lie in [0, 1]")?;
    check_probability(l2, "L2 must lie in [0, 1]")?;
    if !(t_c >= 0.0) || !(t1 > 0.0) {
        return Err(Error::InvalidRates {
            reason: "need t_c >= 0 and T1 > 0",
        });
    }
    let n = n_flux as f64;
    Ok(MarkovRates::clamped(
        n * l1,
        n * l2 + relaxation_seepage(t_c, t1),
    ))
}

pub fn lifetime(rates: &MarkovRates) -> Result<f64> {
    if !(rates.gamma_lc > 0.0) {
        return Err(Error::ZeroSeepage);
    }
    Ok(1.0 / rates.gamma_lc)
}

pub fn steady_state(rates: &MarkovRates) -> f64 {
    let s = rates.gamma_cl + rates.gamma_lc;
    if s > 0.0 {
        rates.gamma_cl / s
    } else {
        0.0
    }
}

/// `pbar(n) = Gamma_CL / Gamma * (1 - exp(-Gamma n))` for `n = 1..=n_cycles`,
/// `Gamma = Gamma_CL + Gamma_LC`.
pub fn pbar_curve(rates: &MarkovRates, n_cycles: usize) -> Vec<f64> {
    FitModel::Continuous.curve(rates.gamma_cl, rates.gamma_cl + rates.gamma_lc, n_cycles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Data,
    Ancilla,
}

/// LRU performance figures and readout matrix entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LruParams {
    pub r: f64,
    pub l1_lru: f64,
    pub pm22: f64,
    pub pm11: f64,
}

impl LruParams {
    /// R = 95%, L1_LRU = 0.25%, pM(2|2) = 90%, pM(1|1) = 99.5%.
    pub fn fig4() -> Self {
        Self {
            r: 0.95,
            l1_lru: 0.0025,
            pm22: 0.9,
            pm11: 0.995,
        }
    }

    pub fn disabled() -> Self {
        Self {
            r: 0.0,
            l1_lru: 0.0,
            pm22: 0.0,
            pm11: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.r, "R must lie in [0, 1]")?;
        check_probability(self.l1_lru, "L1_LRU must lie in [0, 1]")?;
        check_probability(self.pm22, "pM22 must lie in [0, 1]")?;
        check_probability(self.pm11, "pM11 must lie in [0, 1]")
    }

    /// Extra seepage and induced leakage per cycle for a qubit of `role`.
    /// `p0` is the probability that a computational qubit is in |0>.
    pub fn transitions(&self, role: Role, p0: f64) -> (f64, f64) {
        match role {
            Role::Data => (self.r, 2.0 * self.l1_lru * p0),
            Role::Ancilla => (self.pm22, (1.0 - self.pm11) * (1.0 - p0)),
        }
    }
}

/// Composes the LRU with the native rates: seepage as complementary
/// probabilities `1 - (1 - Gamma_LC)(1 - s)`, leakage as `Gamma_CL + i`.
pub fn lru_augmented_rates(
    base: &MarkovRates,
    lru: &LruParams,
    role: Role,
) -> Result<Clamped<MarkovRates>> {
    lru_augmented_rates_with(base, lru, role, 0.5)
}

pub fn lru_augmented_rates_with(
    base: &MarkovRates,
    lru: &LruParams,
    role: Role,
    p0: f64,
) -> Result<Clamped<MarkovRates>> {
    lru.validate()?;
    check_probability(p0, "occupancy must lie in [0, 1]")?;
    let (s, i) = lru.transitions(role, p0);
    Ok(MarkovRates::clamped(
        base.gamma_cl + i,
        1.0 - (1.0 - base.gamma_lc) * (1.0 - s),
    ))
}

/// `p2_f = (1 - R) p2 + 2 L1_LRU p0`; the removed weight goes to |0>, the
/// induced weight comes out of |0>.
pub fn res_lru_population_map(p: [f64; 3], lru: &LruParams) -> Result<[f64; 3]> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| !(0.0..=1.0 + 1e-9).contains(&x)) || sum > 1.0 + 1e-9 {
        return Err(Error::InvalidDistribution { sum });
    }
    lru.validate()?;
    let removed = lru.r * p[2];
    let induced = 2.0 * lru.l1_lru * p[0];
    Ok([p[0] + removed - induced, p[1], p[2] - removed + induced])
}

/// Samples the declared outcome for `true_state` from the readout matrix.
pub fn readout_declare<R: RngCore>(true_state: u8, lru: &LruParams, rng: &mut R) -> u8 {
    declare_with(true_state, lru, uniform(rng))
}

fn declare_with(true_state: u8, lru: &LruParams, u: f64) -> u8 {
    match true_state {
        0 => 0,
        1 => {
            if u < lru.pm11 {
                1
            } else {
                2
            }
        }
        _ => {
            if u < lru.pm22 {
                2
            } else {
                1
            }
        }
    }
}

/// Uniform in `[0, 1)` from the top 53 bits.
pub fn uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Linear map on row-major vectorized 3x3 density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct QutritChannel {
    pub superoperator: CMatrix,
}

/// `R_sim` is clamped to this distance below 1.
pub const R_SIM_MARGIN: f64 = 1e-15;

impl QutritChannel {
    pub fn identity() -> Self {
        Self {
            superoperator: CMatrix::identity(9),
        }
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let v = self.superoperator.apply(rho.as_slice());
        CMatrix::from_row_major(3, v).expect("9 entries")
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &QutritChannel) -> Self {
        Self {
            superoperator: self.superoperator.matmul(&first.superoperator),
        }
    }

    /// Choi matrix `sum_ij |i><j| (x) Phi(|i><j|)`.
    pub fn choi(&self) -> CMatrix {
        let mut c = CMatrix::zeros(9);
        for i in 0..3 {
            for j in 0..3 {
                let mut e = CMatrix::zeros(3);
                e[(i, j)] = C64::new(1.0, 0.0);
                let out = self.apply(&e);
                for k in 0..3 {
                    for l in 0..3 {
                        c[(3 * i + k, 3 * j + l)] = out[(k, l)];
                    }
                }
            }
        }
        c
    }

    pub fn choi_min_eigenvalue(&self) -> Result<f64> {
        let mut c = self.choi();
        c.hermitize();
        Ok(eigh(&c)?.values[0])
    }

    /// `max |Tr Phi(|i><j|) - delta_ij|`.
    pub fn trace_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let mut e = CMatrix::zeros(3);
                e[(i, j)] = C64::new(1.0, 0.0);
                let t = self.apply(&e).trace();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((t - C64::new(want, 0.0)).norm());
            }
        }
        worst
    }

    /// Populations after applying the channel to a diagonal state.
    pub fn population_action(&self, p: [f64; 3]) -> [f64; 3] {
        let out = self.apply(&CMatrix::from_real_diag(&p));
        [out[(0, 0)].re, out[(1, 1)].re, out[(2, 2)].re]
    }
}

/// Lindbladian superoperator `sum_k D[K_k]` on row-major `vec(rho)`.
fn dissipator(jumps: &[CMatrix]) -> CMatrix {
    let n = 3;
    let mut l = CMatrix::zeros(n * n);
    for k in jumps {
        let kdk = k.adjoint().matmul(k);
        for a in 0..n {
            for b in 0..n {
                let row = a * n + b;
                for c in 0..n {
                    for d in 0..n {
                        let col = c * n + d;
                        // K rho K^dag
                        let mut v = k[(a, c)] * k[(b, d)].conj();
                        if b == d {
                            v -= 0.5 * kdk[(a, c)];
                        }
                        if a == c {
                            v -= 0.5 * kdk[(d, b)];
                        }
                        l[(row, col)] += v;
                    }
                }
            }
        }
    }
    l
}

fn jump(rate: f64, row: usize, col: usize) -> CMatrix {
    let mut m = CMatrix::zeros(3);
    m[(row, col)] = C64::new(libm::sqrt(rate), 0.0);
    m
}

/// Phenomenological res-LRU channel `S_up S_down`.
///
/// `S_down = exp(t L_down)` holds a `|0><2|` jump with rate
/// `-ln(1 - R_sim)/t`, `R_sim = R + 2 L1_LRU`, plus qutrit relaxation
/// (`|0><1|` at `1/T1`, `|1><2|` at `2/T1`) and dephasing
/// (`sqrt(2/Tphi) n`). `S_up = exp(L_up)` has the single jump `|2><0|` with
/// rate `-ln(1 - 2 L1_LRU)`. Infinite `t1`/`tphi` switch the channel off.
pub fn build_res_lru_channel(
    lru: &LruParams,
    t_lru: f64,
    t1: f64,
    tphi: f64,
) -> Result<QutritChannel> {
    lru.validate()?;
    if !(t_lru > 0.0) || !(t1 > 0.0) || !(tphi > 0.0) {
        return Err(Error::InvalidRates {
            reason: "durations must be positive",
        });
    }
    let two_l1 = 2.0 * lru.l1_lru;
    if two_l1 >= 1.0 {
        return Err(Error::InvalidRates {
            reason: "2 L1_LRU must be below 1",
        });
    }
    let mut r_sim = lru.r + two_l1;
    if r_sim > 1.0 + 1e-9 {
        return Err(Error::InvalidRates {
            reason: "R + 2 L1_LRU exceeds 1",
        });
    }
    r_sim = r_sim.min(1.0 - R_SIM_MARGIN);
    let mut down = Vec::new();
    if r_sim > 0.0 {
        down.push(jump(-libm::log(1.0 - r_sim) / t_lru, 0, 2));
    }
    if t1.is_finite() {
        down.push(jump(1.0 / t1, 0, 1));
        down.push(jump(2.0 / t1, 1, 2));
    }
    if tphi.is_finite() {
        down.push(CMatrix::from_real_diag(&[0.0, 1.0, 2.0]).scale_re(libm::sqrt(2.0 / tphi)));
    }
    let s_down = if down.is_empty() {
        CMatrix::identity(9)
    } else {
        expm(&dissipator(&down).scale_re(t_lru))
    };
    let s_up = if two_l1 > 0.0 {
        expm(&dissipator(&[jump(-libm::log(1.0 - two_l1), 2, 0)]))
    } else {
        CMatrix::identity(9)
    };
    Ok(QutritChannel {
        superoperator: s_up.matmul(&s_down),
    })
}

/// Surface-17 cycle schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleParams {
    pub t1: f64,
    pub t_gate: f64,
    pub t_int: f64,
    pub t_pc: f64,
    pub t_res_lru: f64,
    pub t_pi_lru: f64,
    pub t_m: f64,
    pub t_c: f64,
    pub t_slot: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self::table2()
    }
}

impl ScheduleParams {
    pub fn table2() -> Self {
        Self {
            t1: us(30.0),
            t_gate: ns(20.0),
            t_int: ns(30.0),
            t_pc: ns(10.0),
            t_res_lru: ns(100.0),
            t_pi_lru: ns(20.0),
            t_m: ns(580.0),
            t_c: ns(800.0),
            t_slot: ns(440.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitSpec {
    pub name: String,
    pub role: Role,
    pub n_flux: u32,
    pub leakage_prone: bool,
}

impl QubitSpec {
    pub fn new(name: &str, role: Role, n_flux: u32, leakage_prone: bool) -> Result<Self> {
        if n_flux > 4 {
            return Err(Error::InvalidParameter {
                name: "n_flux",
                reason: "must be at most 4",
            });
        }
        Ok(Self {
            name: name.to_string(),
            role,
            n_flux,
            leakage_prone,
        })
    }
}

/// Surface-17: D3, D4, D5 are the fluxed high-frequency data qubits
/// (3, 4, 3 fluxes per cycle); the other data qubits are never fluxed and
/// cannot leak; Z0 and Z3 are fluxed once, the other ancillas twice.
pub fn surface17_layout() -> Vec<QubitSpec> {
    let mut v = Vec::with_capacity(17);
    for d in 0..9 {
        let n_flux = match d {
            4 => 4,
            3 | 5 => 3,
            _ => 0,
        };
        v.push(QubitSpec {
            name: alloc::format!("D{d}"),
            role: Role::Data,
            n_flux,
            leakage_prone: n_flux > 0,
        });
    }
    for (kind, k) in [
        ("X", 0),
        ("X", 1),
        ("X", 2),
        ("X", 3),
        ("Z", 0),
        ("Z", 1),
        ("Z", 2),
        ("Z", 3),
    ] {
        let n_flux = if kind == "Z" && (k == 0 || k == 3) {
            1
        } else {
            2
        };
        v.push(QubitSpec {
            name: alloc::format!("{kind}{k}"),
            role: Role::Ancilla,
            n_flux,
            leakage_prone: true,
        });
    }
    v
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovConfig {
    pub l1: f64,
    /// Defaults to `2 L1` when absent.
    pub l2: Option<f64>,
    pub t_c: f64,
    pub t1: f64,
    pub cycles: usize,
    pub runs: usize,
    /// Probability that a computational qubit sits in |0>.
    pub p0_occupancy: f64,
    pub use_data_lru: bool,
    pub use_ancilla_lru: bool,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            l1: 0.005,
            l2: None,
            t_c: ns(800.0),
            t1: us(30.0),
            cycles: 20,
            runs: 20_000,
            p0_occupancy: 0.5,
            use_data_lru: false,
            use_ancilla_lru: false,
        }
    }
}

impl MarkovConfig {
    pub fn l2(&self) -> f64 {
        self.l2.unwrap_or(2.0 * self.l1)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.l1, "L1 must lie in [0, 1]")?;
        check_probability(self.l2(), "L2 must lie in [0, 1]")?;
        check_probability(self.p0_occupancy, "occupancy must lie in [0, 1]")?;
        if self.cycles < 5 {
            return Err(Error::InvalidParameter {
                name: "cycles",
                reason: "need at least 5",
            });
        }
        if self.runs < 100 {
            return Err(Error::InvalidParameter {
                name: "runs",
                reason: "need at least 100",
            });
        }
        Ok(())
    }

    /// Native rates for `q`, zero for qubits that cannot leak.
    pub fn base_rates(&self, q: &QubitSpec) -> Result<Clamped<MarkovRates>> {
        if !q.leakage_prone {
            return Ok(Clamped {
                value: MarkovRates {
                    gamma_cl: 0.0,
                    gamma_lc: relaxation_seepage(self.t_c, self.t1),
                },
                overflow: false,
            });
        }
        rates_from_physical(q.n_flux, self.l1, self.l2(), self.t_c, self.t1)
    }
}

/// Average leakage per cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageTrace {
    pub pbar: Vec<f64>,
    /// Binomial standard error per cycle.
    pub stderr: Vec<f64>,
    pub runs: usize,
}

/// Trace plus the per-run indicators kept for bootstrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitTrace {
    pub qubit: QubitSpec,
    pub rates: MarkovRates,
    pub trace: LeakageTrace,
    /// `leaked[run * cycles + cycle]`.
    pub leaked: Vec<bool>,
    pub cycles: usize,
}

impl QubitTrace {
    /// Average over a list of run indices (with repetition).
    pub fn resampled(&self, runs: &[usize]) -> LeakageTrace {
        trace_from(&self.leaked, self.cycles, runs.iter().copied(), runs.len())
    }
}

fn trace_from(
    leaked: &[bool],
    cycles: usize,
    runs: impl Iterator<Item = usize>,
    n_runs: usize,
) -> LeakageTrace {
    let mut counts = vec![0usize; cycles];
    for r in runs {
        for (c, count) in counts.iter_mut().enumerate() {
            if leaked[r * cycles + c] {
                *count += 1;
            }
        }
    }
    let n = n_runs as f64;
    let pbar: Vec<f64> = counts.iter().map(|&k| k as f64 / n).collect();
    let stderr = pbar
        .iter()
        .map(|&p| libm::sqrt(p * (1.0 - p) / n))
        .collect();
    LeakageTrace {
        pbar,
        stderr,
        runs: n_runs,
    }
}

/// SplitMix64 finalizer, used to derive independent seeds from a master seed.
pub fn mix_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random words reserved per cycle; the generator for `(qubit, run)` is
/// repositioned to `cycle * WORDS_PER_CYCLE` so every draw has a fixed
/// address.
const WORDS_PER_CYCLE: u128 = 8;

/// Independent two-state chains per leakage-prone qubit. Each cycle: leak
/// (`Gamma_CL`) or seep (`Gamma_LC`) from the state at the start of the
/// cycle, record the leaked indicator, then apply the LRU (data: seepage
/// `R`, induced leakage `2 L1_LRU` from |0>; ancilla: declaration and a
/// conditional |1> <-> |2> flip).
pub fn monte_carlo_surface17(
    layout: &[QubitSpec],
    cfg: &MarkovConfig,
    lru: &LruParams,
    seed: u64,
) -> Result<Vec<QubitTrace>> {
    monte_carlo_surface17_with(&Sequential, layout, cfg, lru, seed)
}

pub fn monte_carlo_surface17_with<E: Executor>(
    exec: &E,
    layout: &[QubitSpec],
    cfg: &MarkovConfig,
    lru: &LruParams,
    seed: u64,
) -> Result<Vec<QubitTrace>> {
    cfg.validate()?;
    lru.validate()?;
    let jobs: Vec<(usize, &QubitSpec)> = layout
        .iter()
        .enumerate()
        .filter(|(_, q)| q.leakage_prone)
        .collect();
    let results = exec.map(&jobs, |&(idx, q)| simulate_qubit(idx, q, cfg, lru, seed));
    results.into_iter().collect()
}

fn simulate_qubit(
    idx: usize,
    q: &QubitSpec,
    cfg: &MarkovConfig,
    lru: &LruParams,
    seed: u64,
) -> Result<QubitTrace> {
    let rates = cfg.base_rates(q)?.value;
    let lru_on = match q.role {
        Role::Data => cfg.use_data_lru,
        Role::Ancilla => cfg.use_ancilla_lru,
    };
    let cycles = cfg.cycles;
    let mut leaked = vec![false; cfg.runs * cycles];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for run in 0..cfg.runs {
        rng.set_stream(((idx as u64) << 40) | run as u64);
        let mut in_l = false;
        for c in 0..cycles {
            rng.set_word_pos(c as u128 * WORDS_PER_CYCLE);
            let u = uniform(&mut rng);
            in_l = if in_l {
                u >= rates.gamma_lc
            } else {
                u < rates.gamma_cl
            };
            leaked[run * cycles + c] = in_l;
            if lru_on {
                let (u1, u2) = (uniform(&mut rng), uniform(&mut rng));
                in_l = match q.role {
                    Role::Data => {
                        if in_l {
                            u1 >= lru.r
                        } else {
                            u1 < cfg.p0_occupancy && u2 < 2.0 * lru.l1_lru
                        }
                    }
                    Role::Ancilla => {
                        if in_l {
                            declare_with(2, lru, u1) != 2
                        } else {
                            u1 >= cfg.p0_occupancy && declare_with(1, lru, u2) == 2
                        }
                    }
                };
            }
        }
    }
    let trace = trace_from(&leaked, cycles, 0..cfg.runs, cfg.runs);
    Ok(QubitTrace {
        qubit: q.clone(),
        rates,
        trace,
        leaked,
        cycles,
    })
}

/// Model fitted to an average leakage trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `a/s (1 - exp(-s n))`.
    #[default]
    Continuous,
    /// `a/s (1 - (1 - s)^n)`, the exact mean of a per-cycle two-state chain.
    Discrete,
}

impl FitModel {
    fn decay(&self, s: f64, n: f64) -> (f64, f64) {
        // (g, dg/ds) with pbar = q (1 - g)
        match self {
            FitModel::Continuous => {
                let g = libm::exp(-s * n);
                (g, -n * g)
            }
            FitModel::Discrete => {
                let b = 1.0 - s;
                let g = libm::pow(b, n);
                let dg = if n == 0.0 {
                    0.0
                } else {
                    -n * libm::pow(b, n - 1.0)
                };
                (g, dg)
            }
        }
    }

    /// `pbar(n)`, `n = 1..=n_cycles`, for leakage `a` and total rate `s`.
    pub fn curve(&self, a: f64, s: f64, n_cycles: usize) -> Vec<f64> {
        (1..=n_cycles)
            .map(|n| {
                if s <= 0.0 {
                    a * n as f64
                } else {
                    a / s * (1.0 - self.decay(s, n as f64).0)
                }
            })
            .collect()
    }

    fn s_max(&self) -> f64 {
        match self {
            FitModel::Continuous => 50.0,
            FitModel::Discrete => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rates: MarkovRates,
    pub steady_state: f64,
    pub lifetime: f64,
    pub sse: f64,
    pub model: FitModel,
}

/// Least squares of `q (1 - g(s, n))` against the trace: profiled grid
/// over `s`, then damped Gauss-Newton on `(q, s)`.
pub fn fit_trace(trace: &LeakageTrace, model: FitModel) -> Result<FitResult> {
    fit_values(&trace.pbar, model)
}

pub fn fit_values(y: &[f64], model: FitModel) -> Result<FitResult> {
    if y.len() < 5 {
        return Err(Error::InvalidParameter {
            name: "trace",
            reason: "need at least 5 cycles",
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitDiverged {
            reason: "non-finite trace",
        });
    }
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::FitDiverged {
            reason: "trace is identically zero; seepage is unidentifiable",
        });
    }
    let ns: Vec<f64> = (1..=y.len()).map(|n| n as f64).collect();
    let s_max = model.s_max();
    let profile = |s: f64| -> (f64, f64) {
        let (mut hy, mut hh) = (0.0, 0.0);
        for (&n, &v) in ns.iter().zip(y) {
            let h = 1.0 - model.decay(s, n).0;
            hy += h * v;
            hh += h * h;
        }
        let q = if hh > 0.0 { hy / hh } else { 0.0 };
        let sse = ns
            .iter()
            .zip(y)
            .map(|(&n, &v)| (q * (1.0 - model.decay(s, n).0) - v).powi(2))
            .sum();
        (q, sse)
    };
    // Log-spaced grid on (1e-4, s_max).
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let k_max = 400;
    for k in 0..=k_max {
        let s = 1e-4 * libm::pow(s_max / 1e-4, k as f64 / k_max as f64);
        let (q, sse) = profile(s);
        if sse < best.0 {
            best = (sse, q, s);
        }
    }
    let (mut sse, mut q, mut s) = best;
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&n, &v) in ns.iter().zip(y) {
            let (g, dg) = model.decay(s, n);
            let r = q * (1.0 - g) - v;
            let j = [1.0 - g, -q * dg];
            for a in 0..2 {
                jtr[a] += j[a] * r;
                for b in 0..2 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let m = [
                [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
            ];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let dq = -(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
            let ds = -(m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det;
            let (q2, s2) = (q + dq, (s + ds).clamp(1e-12, s_max));
            let sse2: f64 = ns
                .iter()
                .zip(y)
                .map(|(&n, &v)| (q2 * (1.0 - model.decay(s2, n).0) - v).powi(2))
                .sum();
            if sse2 <= sse {
                let done =
                    (dq.abs() <= 1e-15 + 1e-13 * q.abs()) && (ds.abs() <= 1e-15 + 1e-13 * s.abs());
                q = q2;
                s = s2;
                sse = sse2;
                lambda = (lambda * 0.1).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !q.is_finite() || !s.is_finite() {
        return Err(Error::FitDiverged {
            reason: "non-finite parameters",
        });
    }
    let gamma_cl = q * s;
    let gamma_lc = s - gamma_cl;
    if gamma_lc <= 0.0 {
        return Err(Error::FitDiverged {
            reason: "fitted seepage is not positive",
        });
    }
    let rates = MarkovRates { gamma_cl, gamma_lc };
    Ok(FitResult {
        rates,
        steady_state: q,
        lifetime: 1.0 / gamma_lc,
        sse,
        model,
    })
}

/// Bootstrap spread of the fitted quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitErrors {
    pub gamma_cl: f64,
    pub gamma_lc: f64,
    pub lifetime: f64,
    pub steady_state: f64,
    /// Resamples whose fit failed.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub qubit: String,
    pub fit: Option<FitResult>,
    pub errors: Option<FitErrors>,
    pub note: Option<String>,
}

/// Refits `samples` run-resampled traces.
pub fn bootstrap(trace: &QubitTrace, model: FitModel, samples: usize, seed: u64) -> FitErrors {
    let runs = trace.trace.runs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc: [Vec<f64>; 4] = Default::default();
    let mut failed = 0;
    let mut idx = vec![0usize; runs];
    for _ in 0..samples {
        for v in idx.iter_mut() {
            *v = (rng.next_u64() % runs as u64) as usize;
        }
        match fit_trace(&trace.resampled(&idx), model) {
            Ok(f) => {
                acc[0].push(f.rates.gamma_cl);
                acc[1].push(f.rates.gamma_lc);
                acc[2].push(f.lifetime);
                acc[3].push(f.steady_state);
            }
            Err(_) => failed += 1,
        }
    }
    let sd = |v: &[f64]| {
        if v.len() < 2 {
            return f64::NAN;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64)
    };
    FitErrors {
        gamma_cl: sd(&acc[0]),
        gamma_lc: sd(&acc[1]),
        lifetime: sd(&acc[2]),
        steady_state: sd(&acc[3]),
        failed,
    }
}

/// Fit plus bootstrap for every trace; zero traces are reported, not fitted.
pub fn summarize<E: Executor>(
    exec: &E,
    traces: &[QubitTrace],
    model: FitModel,
    bootstrap_samples: usize,
    seed: u64,
) -> Vec<FitSummary> {
    let indexed: Vec<(usize, &QubitTrace)> = traces.iter().enumerate().collect();
    exec.map(&indexed, |&(k, t)| match fit_trace(&t.trace, model) {
        Ok(fit) => {
            let errors = (bootstrap_samples > 0)
                .then(|| bootstrap(t, model, bootstrap_samples, mix_seed(seed, k as u64)));
            FitSummary {
                qubit: t.qubit.name.clone(),
                fit: Some(fit),
                errors,
                note: None,
            }
        }
        Err(e) => FitSummary {
            qubit: t.qubit.name.clone(),
            fit: None,
            errors: None,
            note: Some(e.to_string()),
        },
    })
}

/// Diagonal helper used by tests and the CLI self-check.
pub fn diagonal_state(p: [f64; 3]) -> CMatrix {
    let mut m = CMatrix::zeros(3);
    for (i, &v) in p.iter().enumerate() {
        m[(i, i)] = C64::new(v, 0.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relaxation_rate_examples() {
        let r = rates_from_physical(0, 0.005, 0.01, ns(800.0), us(30.0))
            .unwrap()
            .value;
        assert!((r.gamma_lc - (1.0 - libm::exp(-0.8 / 15.0))).abs() < 1e-15);
        assert!((r.gamma_lc - 0.052).abs() < 5e-4);
        assert!((relaxation_seepage(ns(440.0), us(30.0)) - 0.029).abs() < 5e-4);
        assert_eq!(
            rates_from_physical(4, 0.0, 0.0, ns(800.0), us(30.0))
                .unwrap()
                .value
                .gamma_cl,
            0.0
        );
        assert!(
            rates_from_physical(4, 0.3, 0.3, ns(800.0), us(30.0))
                .unwrap()
                .overflow
        );
    }

    #[test]
    fn lifetime_and_steady_state() {
        assert_eq!(lifetime(&MarkovRates::new(0.0, 0.5).unwrap()).unwrap(), 2.0);
        assert_eq!(lifetime(&MarkovRates::new(0.0, 1.0).unwrap()).unwrap(), 1.0);
        assert!(matches!(
            lifetime(&MarkovRates::new(0.1, 0.0).unwrap()),
            Err(Error::ZeroSeepage)
        ));
        let r = MarkovRates::new(0.02, 0.10).unwrap();
        assert!((r.steady_state() - 1.0 / 6.0).abs() < 1e-15);
        assert!(pbar_curve(&MarkovRates::new(0.0, 0.1).unwrap(), 10)
            .iter()
            .all(|&p| p == 0.0));
    }

    #[test]
    fn augmented_rates() {
        let base = MarkovRates::new(0.02, 0.072).unwrap();
        let r = lru_augmented_rates(
            &base,
            &LruParams {
                r: 0.95,
                ..LruParams::disabled()
            },
            Role::Data,
        )
        .unwrap()
        .value;
        assert!((r.gamma_lc - (1.0 - 0.928 * 0.05)).abs() < 1e-12);
        assert!((r.lifetime().unwrap() - 1.0 / 0.9536).abs() < 1e-9);
        let perfect = lru_augmented_rates(
            &base,
            &LruParams {
                r: 1.0,
                ..LruParams::disabled()
            },
            Role::Data,
        )
        .unwrap()
        .value;
        assert_eq!(perfect.lifetime().unwrap(), 1.0);
        let none = lru_augmented_rates(&base, &LruParams::disabled(), Role::Data)
            .unwrap()
            .value;
        assert_eq!(none.gamma_cl, base.gamma_cl);
        assert!((none.gamma_lc - base.gamma_lc).abs() < 1e-15);
        let anc = lru_augmented_rates(&base, &LruParams::fig4(), Role::Ancilla)
            .unwrap()
            .value;
        assert!((anc.gamma_cl - (0.02 + 0.0025)).abs() < 1e-15);
    }

    #[test]
    fn population_map_examples() {
        let lru = LruParams {
            r: 0.995,
            l1_lru: 0.0025,
            pm22: 0.9,
            pm11: 0.995,
        };
        assert!((res_lru_population_map([0.0, 0.0, 1.0], &lru).unwrap()[2] - 0.005).abs() < 1e-15);
        assert!((res_lru_population_map([1.0, 0.0, 0.0], &lru).unwrap()[2] - 0.005).abs() < 1e-15);
        assert_eq!(
            res_lru_population_map([0.0, 1.0, 0.0], &lru).unwrap()[2],
            0.0
        );
        assert!(matches!(
            res_lru_population_map([0.7, 0.7, 0.0], &lru),
            Err(Error::InvalidDistribution { .. })
        ));
    }

    #[test]
    fn declaration() {
        let lru = LruParams::fig4();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut twos = 0;
        for _ in 0..n {
            assert_eq!(readout_declare(0, &lru, &mut rng), 0);
            if readout_declare(2, &lru, &mut rng) == 2 {
                twos += 1;
            }
        }
        let frac = twos as f64 / n as f64;
        assert!((frac - 0.9).abs() < 4.0 * libm::sqrt(0.09 / n as f64));
        let ideal = LruParams {
            pm11: 1.0,
            pm22: 1.0,
            ..lru
        };
        for _ in 0..100 {
            assert_eq!(readout_declare(1, &ideal, &mut rng), 1);
            assert_eq!(readout_declare(2, &ideal, &mut rng), 2);
        }
    }

    #[test]
    fn identity_channel() {
        let ch = build_res_lru_channel(
            &LruParams::disabled(),
            ns(100.0),
            f64::INFINITY,
            f64::INFINITY,
        )
        .unwrap();
        assert!(ch.superoperator.max_diff(&CMatrix::identity(9)) < 1e-14);
    }

    #[test]
    fn round_trip_fit() {
        let rates = MarkovRates::new(0.02, 0.3).unwrap();
        let y = pbar_curve(&rates, 20);
        let f = fit_values(&y, FitModel::Continuous).unwrap();
        assert!((f.rates.gamma_cl - 0.02).abs() < 1e-6);
        assert!((f.rates.gamma_lc - 0.3).abs() < 1e-6);
        assert!(matches!(
            fit_values(&[0.0; 20], FitModel::Discrete),
            Err(Error::FitDiverged { .. })
        ));
    }

    #[test]
    fn layout_counts() {
        let l = surface17_layout();
        assert_eq!(l.len(), 17);
        let flux = |n: &str| l.iter().find(|q| q.name == n).unwrap().n_flux;
        assert_eq!(
            (
                flux("D4"),
                flux("D3"),
                flux("D5"),
                flux("Z0"),
                flux("Z3"),
                flux("X1")
            ),
            (4, 3, 3, 1, 1, 2)
        );
        assert_eq!(l.iter().filter(|q| q.leakage_prone).count(), 11);
    }
}

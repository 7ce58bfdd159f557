//! Critical amplitude, pulse-duration optimization, adaptive landscape and
//! operating-point selection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::batch::{Executor, Sequential};
use crate::error::{Error, Result};
use crate::lindblad::{
    leakage_population, sample_grid, Characterization, DensityMatrix, LindbladSystem,
};
use crate::model::{find_avoided_crossing_exact, DeviceParams, DrivePulse};
use crate::swt::g_tilde_order3;
use crate::units::{ghz, mhz, ns};

/// Where `g~(Omega)` comes from when solving for the critical amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSource {
    /// Half the minimal gap from exact diagonalization.
    #[default]
    Exact,
    /// Order-3 Schrieffer-Wolff coupling at the analytic crossing.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub t_rise: f64,
    pub t_slot: f64,
    pub omega_range: (f64, f64),
    pub omega_d_range: (f64, f64),
    pub sample_budget: usize,
    pub tp_tolerance: f64,
    /// Initial uniform grid `(n_omega, n_omega_d)`.
    pub grid: (usize, usize),
    /// Cells subdivided per refinement generation.
    pub cells_per_generation: usize,
    /// Floor inside the log-loss.
    pub p2_floor: f64,
    /// Half-width of the local fine-tuning box in each axis.
    pub refine_radius: f64,
    /// Above `Omega_cr` by less than this, the duration search runs up to `T_slot`.
    pub near_critical_margin: f64,
    pub coupling_source: CouplingSource,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            t_rise: ns(30.0),
            t_slot: ns(440.0),
            omega_range: (0.0, mhz(500.0)),
            omega_d_range: (ghz(5.19), ghz(5.26)),
            sample_budget: 144,
            tp_tolerance: ns(0.1),
            grid: (12, 12),
            cells_per_generation: 4,
            p2_floor: 1e-6,
            refine_radius: mhz(2.0),
            near_critical_margin: mhz(3.0),
            coupling_source: CouplingSource::Exact,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_range.1 > self.omega_range.0) || self.omega_range.0 < 0.0 {
            return Err(Error::InvalidParameter {
                name: "omega_range",
                reason: "must be a non-empty non-negative range",
            });
        }
        if !(self.omega_d_range.1 > self.omega_d_range.0) {
            return Err(Error::InvalidParameter {
                name: "omega_d_range",
                reason: "must be non-empty",
            });
        }
        if self.sample_budget < 16 {
            return Err(Error::InvalidParameter {
                name: "sample_budget",
                reason: "must be at least 16",
            });
        }
        if self.grid.0 < 2 || self.grid.1 < 2 {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "need at least 2 points per axis",
            });
        }
        if !(self.t_rise >= 0.0) || !(self.t_slot >= 2.0 * self.t_rise) {
            return Err(Error::InvalidParameter {
                name: "t_slot",
                reason: "must hold both ramps",
            });
        }
        if !(self.tp_tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tp_tolerance",
                reason: "must be positive",
            });
        }
        if self.cells_per_generation == 0 {
            return Err(Error::InvalidParameter {
                name: "cells_per_generation",
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// `g~(Omega)` from the chosen source.
pub fn coupling_at(params: &DeviceParams, omega: f64, source: CouplingSource) -> Result<f64> {
    match source {
        CouplingSource::Exact => Ok(find_avoided_crossing_exact(params, omega, None)?.g_tilde),
        CouplingSource::Analytic => Ok(g_tilde_order3(params, omega)?.abs()),
    }
}

/// Amplitude at which `g~ = kappa/4`, by bisection on `[0, omega_max]`.
pub fn critical_amplitude(
    params: &DeviceParams,
    omega_max: f64,
    source: CouplingSource,
) -> Result<f64> {
    params.validate()?;
    let target = params.kappa / 4.0;
    let g_hi = coupling_at(params, omega_max, source)?;
    if g_hi < target {
        return Err(Error::NoRoot);
    }
    let (mut lo, mut hi) = (0.0, omega_max);
    let tol = mhz(0.01);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if coupling_at(params, mid, source)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `sqrt(g~^2 - (kappa/4)^2) exp(-kappa / (7 g~))`.
pub fn damped_coupling(g_tilde: f64, kappa: f64) -> Result<f64> {
    let q = kappa / 4.0;
    if !(g_tilde > q) {
        return Err(Error::Overdamped {
            g_tilde,
            quarter_kappa: q,
        });
    }
    Ok(libm::sqrt(g_tilde * g_tilde - q * q) * libm::exp(-kappa / (7.0 * g_tilde)))
}

/// `pi / (2 g~_damp)`, the flat-top duration of the first damped-Rabi minimum.
pub fn damped_rabi_guess(g_tilde: f64, kappa: f64) -> Result<f64> {
    Ok(core::f64::consts::PI / (2.0 * damped_coupling(g_tilde, kappa)?))
}

/// Bounded Brent minimization (golden section with parabolic steps).
pub fn brent_minimize<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let m = 0.5 * (a + b);
        let tol1 = 1e-10 * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Ok((x, fx));
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Err(Error::NoConvergence { iterations: 500 })
}

/// Result of the duration search at one `(Omega, omega_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationOptimum {
    pub t_p: f64,
    pub p2: f64,
    /// `g~` used for the search bound, if one was needed.
    pub g_tilde: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub omega: f64,
    pub omega_d: f64,
    pub t_p_opt: f64,
    pub p2_leaked: f64,
    pub p2_induced_0: f64,
    pub p2_induced_1: f64,
    pub eff_t1: f64,
    pub eff_t2: f64,
    pub t1_up: Option<f64>,
}

impl LandscapePoint {
    /// `(ln max(p2, floor))^2`.
    pub fn cost(&self, floor: f64) -> f64 {
        let l = libm::log(self.p2_leaked.max(floor));
        l * l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub point: LandscapePoint,
    pub score: f64,
    pub rationale: String,
}

/// Holds the parameters, the configuration and `Omega_cr` so that the
/// critical amplitude is solved once per sweep.
#[derive(Debug, Clone)]
pub struct PulseOptimizer {
    pub params: DeviceParams,
    pub config: OptimizerConfig,
    pub omega_cr: f64,
}

/// Flat-top states saved every 2 ns, so that each candidate duration only
/// integrates its own ramp-down.
#[derive(Debug)]
struct FlatTopCheckpoints<'a> {
    sys: &'a LindbladSystem,
    omega: f64,
    t_rise: f64,
    t_slot: f64,
    states: Vec<(f64, DensityMatrix)>,
}

impl<'a> FlatTopCheckpoints<'a> {
    fn new(
        sys: &'a LindbladSystem,
        omega: f64,
        t_rise: f64,
        t_slot: f64,
        last_flat_end: f64,
    ) -> Result<Self> {
        let long = DrivePulse {
            omega,
            omega_d: sys.omega_d,
            phi: sys.phi,
            t_rise,
            t_p: 4.0 * t_slot + 2.0 * t_rise,
        };
        let rho0 = sys.initial_level(2)?;
        let times: Vec<f64> = sample_grid(last_flat_end - t_rise, ns(2.0))
            .into_iter()
            .map(|t| t + t_rise)
            .collect();
        let (_, traj) = sys.evolve(&long, &rho0, last_flat_end, &times, true)?;
        let states = traj
            .times
            .into_iter()
            .zip(traj.states.unwrap_or_default())
            .collect();
        Ok(Self {
            sys,
            omega,
            t_rise,
            t_slot,
            states,
        })
    }

    fn p2(&self, t_p: f64) -> Result<f64> {
        let flat_end = t_p - self.t_rise;
        let k = self
            .states
            .partition_point(|(t, _)| *t <= flat_end + 1e-18)
            .max(1)
            - 1;
        let (t0, rho) = &self.states[k];
        let pulse = DrivePulse {
            omega: self.omega,
            omega_d: self.sys.omega_d,
            phi: self.sys.phi,
            t_rise: self.t_rise,
            t_p,
        };
        let (last, _) = self.sys.propagate(&pulse, rho, *t0, self.t_slot)?;
        Ok(leakage_population(&last))
    }
}

impl PulseOptimizer {
    pub fn new(params: &DeviceParams, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let omega_cr = critical_amplitude(params, config.omega_range.1, config.coupling_source)?;
        Ok(Self {
            params: *params,
            config,
            omega_cr,
        })
    }

    /// Skips the critical-amplitude solve.
    pub fn with_omega_cr(
        params: &DeviceParams,
        config: OptimizerConfig,
        omega_cr: f64,
    ) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        Ok(Self {
            params: *params,
            config,
            omega_cr,
        })
    }

    fn pulse(&self, omega: f64, omega_d: f64, t_p: f64) -> DrivePulse {
        DrivePulse {
            omega,
            omega_d,
            phi: 0.0,
            t_rise: self.config.t_rise,
            t_p,
        }
    }

    /// Upper end of the duration search, or `None` when the drive should
    /// stay on for the whole slot.
    fn search_bound(&self, omega: f64) -> Result<(Option<f64>, Option<f64>)> {
        let c = &self.config;
        if omega <= self.omega_cr {
            return Ok((None, None));
        }
        let g = find_avoided_crossing_exact(&self.params, omega, None)?.g_tilde;
        if omega <= self.omega_cr + c.near_critical_margin {
            return Ok((Some(c.t_slot), Some(g)));
        }
        let upper = match damped_rabi_guess(g, self.params.kappa) {
            Ok(guess) => (2.0 * c.t_rise + 1.1 * guess).min(c.t_slot),
            Err(Error::Overdamped { .. }) => c.t_slot,
            Err(e) => return Err(e),
        };
        Ok((Some(upper), Some(g)))
    }

    /// Duration minimizing `p2(T_slot)` from |2>.
    pub fn optimize_tp(&self, omega: f64, omega_d: f64) -> Result<DurationOptimum> {
        let c = &self.config;
        let sys = LindbladSystem::new(&self.params, omega_d, 0.0)?;
        let (bound, g_tilde) = self.search_bound(omega)?;
        let Some(upper) = bound else {
            let p2 = sys.p2_final(&self.pulse(omega, omega_d, c.t_slot), 2, c.t_slot)?;
            return Ok(DurationOptimum {
                t_p: c.t_slot,
                p2,
                g_tilde,
            });
        };
        let lower = 2.0 * c.t_rise;
        let cp = FlatTopCheckpoints::new(&sys, omega, c.t_rise, c.t_slot, upper - c.t_rise)?;
        let (t_p, p2) = brent_minimize(|t| cp.p2(t), lower, upper, c.tp_tolerance)?;
        Ok(DurationOptimum { t_p, p2, g_tilde })
    }

    /// Optimized duration plus induced leakage and effective coherences.
    pub fn evaluate(&self, omega: f64, omega_d: f64) -> Result<LandscapePoint> {
        let opt = self.optimize_tp(omega, omega_d)?;
        let sys = LindbladSystem::new(&self.params, omega_d, 0.0)?;
        let ch = sys.characterize(&self.pulse(omega, omega_d, opt.t_p), self.config.t_slot)?;
        Ok(point_from(omega, omega_d, opt.t_p, &ch))
    }

    /// Reference coherences with the drive off.
    pub fn reference(&self) -> Result<Characterization> {
        let w = 0.5 * (self.config.omega_d_range.0 + self.config.omega_d_range.1);
        let sys = LindbladSystem::new(&self.params, w, 0.0)?;
        sys.characterize(&self.pulse(0.0, w, self.config.t_slot), self.config.t_slot)
    }

    /// Adaptive sweep with the default sequential executor.
    pub fn sweep_landscape(&self) -> Result<Vec<LandscapePoint>> {
        self.sweep_landscape_with(&Sequential, |_, _| {})
    }

    /// Adaptive 2-D sweep. `progress(done, budget)` is called after every
    /// generation. Points come back sorted by `(Omega, omega_d)`.
    pub fn sweep_landscape_with<E, P>(
        &self,
        exec: &E,
        mut progress: P,
    ) -> Result<Vec<LandscapePoint>>
    where
        E: Executor,
        P: FnMut(usize, usize),
    {
        let c = &self.config;
        let (nx, ny) = c.grid;
        let budget = c.sample_budget;
        if budget < nx * ny {
            return Err(Error::BudgetTooSmall {
                budget,
                grid: nx * ny,
            });
        }
        let grid = Lattice::new(c);
        let mut samples: BTreeMap<(u64, u64), LandscapePoint> = BTreeMap::new();
        let mut cells = Vec::new();
        let mut initial = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                initial.push((i as u64 * grid.step.0, j as u64 * grid.step.1));
            }
        }
        for i in 0..nx - 1 {
            for j in 0..ny - 1 {
                cells.push(Cell {
                    x0: i as u64 * grid.step.0,
                    y0: j as u64 * grid.step.1,
                    wx: grid.step.0,
                    wy: grid.step.1,
                });
            }
        }
        self.evaluate_keys(exec, &grid, &initial, &mut samples)?;
        progress(samples.len(), budget);

        loop {
            let mut scored: Vec<(f64, Cell)> = cells
                .iter()
                .filter(|cell| cell.wx >= 2 && cell.wy >= 2)
                .map(|cell| (cell.score(&samples, &grid, c.p2_floor), *cell))
                .collect();
            scored.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(a.1.key().cmp(&b.1.key()))
            });
            let mut chosen = Vec::new();
            let mut new_keys: Vec<(u64, u64)> = Vec::new();
            let mut exhausted = false;
            for (_, cell) in scored.into_iter().take(c.cells_per_generation) {
                let extra: Vec<(u64, u64)> = cell
                    .midpoints()
                    .into_iter()
                    .filter(|k| !samples.contains_key(k) && !new_keys.contains(k))
                    .collect();
                if samples.len() + new_keys.len() + extra.len() > budget {
                    exhausted = true;
                    break;
                }
                new_keys.extend(extra);
                chosen.push(cell);
            }
            if chosen.is_empty() {
                break;
            }
            cells.retain(|cell| !chosen.contains(cell));
            for cell in &chosen {
                cells.extend(cell.children());
            }
            self.evaluate_keys(exec, &grid, &new_keys, &mut samples)?;
            progress(samples.len(), budget);
            if exhausted {
                break;
            }
        }
        let mut out: Vec<LandscapePoint> = samples.into_values().collect();
        out.sort_by(|a, b| {
            a.omega
                .partial_cmp(&b.omega)
                .unwrap_or(Ordering::Equal)
                .then(a.omega_d.partial_cmp(&b.omega_d).unwrap_or(Ordering::Equal))
        });
        Ok(out)
    }

    fn evaluate_keys<E: Executor>(
        &self,
        exec: &E,
        grid: &Lattice,
        keys: &[(u64, u64)],
        samples: &mut BTreeMap<(u64, u64), LandscapePoint>,
    ) -> Result<()> {
        let results = exec.map(keys, |&(x, y)| {
            let (omega, omega_d) = grid.coords(x, y);
            self.evaluate(omega, omega_d)
        });
        for (k, r) in keys.iter().zip(results) {
            samples.insert(*k, r?);
        }
        Ok(())
    }

    /// Pattern search on `p2_leaked` inside `center +- refine_radius`.
    pub fn refine(&self, center: &LandscapePoint, steps: usize) -> Result<LandscapePoint> {
        let r = self.config.refine_radius;
        let (o0, w0) = (center.omega, center.omega_d);
        let mut best = *center;
        let mut h = 0.5 * r;
        for _ in 0..steps {
            let mut improved = false;
            for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                let o = best.omega + dx * h;
                let w = best.omega_d + dy * h;
                if (o - o0).abs() > r + 1e-9 || (w - w0).abs() > r + 1e-9 || o < 0.0 {
                    continue;
                }
                let cand = self.evaluate(o, w)?;
                if cand.p2_leaked < best.p2_leaked {
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
        Ok(best)
    }
}

fn point_from(omega: f64, omega_d: f64, t_p: f64, ch: &Characterization) -> LandscapePoint {
    LandscapePoint {
        omega,
        omega_d,
        t_p_opt: t_p,
        p2_leaked: ch.p2_leaked,
        p2_induced_0: ch.p2_induced_0,
        p2_induced_1: ch.p2_induced_1,
        eff_t1: ch.eff_t1,
        eff_t2: ch.eff_t2,
        t1_up: ch.t1_up,
    }
}

/// Integer lattice for exact keys: the initial spacing is `2^20` units, and
/// each subdivision halves it.
#[derive(Debug)]
struct Lattice {
    origin: (f64, f64),
    unit: (f64, f64),
    step: (u64, u64),
}

const LATTICE_SHIFT: u32 = 20;

impl Lattice {
    fn new(c: &OptimizerConfig) -> Self {
        let step = 1u64 << LATTICE_SHIFT;
        let (nx, ny) = c.grid;
        let unit = (
            (c.omega_range.1 - c.omega_range.0) / ((nx - 1) as f64 * step as f64),
            (c.omega_d_range.1 - c.omega_d_range.0) / ((ny - 1) as f64 * step as f64),
        );
        Self {
            origin: (c.omega_range.0, c.omega_d_range.0),
            unit,
            step: (step, step),
        }
    }

    fn coords(&self, x: u64, y: u64) -> (f64, f64) {
        (
            self.origin.0 + x as f64 * self.unit.0,
            self.origin.1 + y as f64 * self.unit.1,
        )
    }

    /// Area in units of one initial cell.
    fn area(&self, cell: &Cell) -> f64 {
        (cell.wx as f64 / self.step.0 as f64) * (cell.wy as f64 / self.step.1 as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cell {
    x0: u64,
    y0: u64,
    wx: u64,
    wy: u64,
}

impl Cell {
    fn key(&self) -> (u64, u64, u64) {
        (self.x0, self.y0, self.wx)
    }

    fn corners(&self) -> [(u64, u64); 4] {
        [
            (self.x0, self.y0),
            (self.x0 + self.wx, self.y0),
            (self.x0, self.y0 + self.wy),
            (self.x0 + self.wx, self.y0 + self.wy),
        ]
    }

    fn midpoints(&self) -> [(u64, u64); 5] {
        let (hx, hy) = (self.wx / 2, self.wy / 2);
        [
            (self.x0 + hx, self.y0 + hy),
            (self.x0 + hx, self.y0),
            (self.x0 + hx, self.y0 + self.wy),
            (self.x0, self.y0 + hy),
            (self.x0 + self.wx, self.y0 + hy),
        ]
    }

    fn children(&self) -> [Cell; 4] {
        let (hx, hy) = (self.wx / 2, self.wy / 2);
        [
            Cell {
                x0: self.x0,
                y0: self.y0,
                wx: hx,
                wy: hy,
            },
            Cell {
                x0: self.x0 + hx,
                y0: self.y0,
                wx: hx,
                wy: hy,
            },
            Cell {
                x0: self.x0,
                y0: self.y0 + hy,
                wx: hx,
                wy: hy,
            },
            Cell {
                x0: self.x0 + hx,
                y0: self.y0 + hy,
                wx: hx,
                wy: hy,
            },
        ]
    }

    /// Largest corner-to-corner loss difference times the cell area.
    fn score(
        &self,
        samples: &BTreeMap<(u64, u64), LandscapePoint>,
        grid: &Lattice,
        floor: f64,
    ) -> f64 {
        let costs: Vec<f64> = self
            .corners()
            .iter()
            .filter_map(|k| samples.get(k))
            .map(|p| p.cost(floor))
            .collect();
        let mut spread = 0.0f64;
        for a in &costs {
            for b in &costs {
                spread = spread.max((a - b).abs());
            }
        }
        spread * grid.area(self)
    }
}

/// `min(T1 / T1_ref, T2 / T2_ref)`.
pub fn coherence_score(point: &LandscapePoint, t1_ref: f64, t2_ref: f64) -> f64 {
    (point.eff_t1 / t1_ref).min(point.eff_t2 / t2_ref)
}

/// Best coherence score among points with `p2_leaked <= threshold`; ties go
/// to the smaller amplitude.
pub fn select_operating_point(
    landscape: &[LandscapePoint],
    p2_threshold: f64,
    t1_ref: f64,
    t2_ref: f64,
) -> Result<OperatingPoint> {
    let mut candidates: Vec<(f64, &LandscapePoint)> = landscape
        .iter()
        .filter(|p| p.p2_leaked <= p2_threshold)
        .map(|p| (coherence_score(p, t1_ref, t2_ref), p))
        .collect();
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.omega.partial_cmp(&b.1.omega).unwrap_or(Ordering::Equal))
            .then(
                a.1.omega_d
                    .partial_cmp(&b.1.omega_d)
                    .unwrap_or(Ordering::Equal),
            )
    });
    let n = candidates.len();
    let (score, point) = candidates.into_iter().next().ok_or(Error::NoCandidate)?;
    let rationale = alloc::format!(
        "highest min(T1/T1_ref, T2/T2_ref) = {score:.4} among {n} point(s) with p2 <= {p2_threshold:.4}"
    );
    Ok(OperatingPoint {
        point: *point,
        score,
        rationale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_parabola_minimum() {
        let (x, fx) = brent_minimize(|x| Ok((x - 1.3) * (x - 1.3) + 2.0), 0.0, 4.0, 1e-8).unwrap();
        assert!((x - 1.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-12);
        let (x, _) = brent_minimize(Ok, 0.0, 1.0, 1e-6).unwrap();
        assert!(x < 1e-5);
    }

    #[test]
    fn damped_guess_limits() {
        let g = mhz(3.0);
        let pi = core::f64::consts::PI;
        assert!((damped_rabi_guess(g, 0.0).unwrap() - pi / (2.0 * g)).abs() < 1e-18);
        let k = 4.0 * g;
        assert!(matches!(
            damped_rabi_guess(g, k),
            Err(Error::Overdamped { .. })
        ));
        let near = damped_rabi_guess(g * (1.0 + 1e-8), k).unwrap();
        assert!(near > 1e3 * damped_rabi_guess(2.0 * g, k).unwrap());
    }

    fn point(omega: f64, p2: f64, t1: f64, t2: f64) -> LandscapePoint {
        LandscapePoint {
            omega,
            omega_d: ghz(5.24),
            t_p_opt: ns(200.0),
            p2_leaked: p2,
            p2_induced_0: 0.0,
            p2_induced_1: 0.0,
            eff_t1: t1,
            eff_t2: t2,
            t1_up: None,
        }
    }

    #[test]
    fn selection_rules() {
        let pts = [
            point(mhz(300.0), 0.005, 28.0, 8.0),
            point(mhz(200.0), 0.004, 28.0, 8.0),
            point(mhz(100.0), 0.05, 30.0, 8.0),
        ];
        let op = select_operating_point(&pts, 0.01, 30.0, 8.0).unwrap();
        assert_eq!(op.point.omega, mhz(200.0));
        let single = select_operating_point(&pts[2..], 0.06, 30.0, 8.0).unwrap();
        assert_eq!(single.point.omega, mhz(100.0));
        assert!(matches!(
            select_operating_point(&pts, 0.0, 30.0, 8.0),
            Err(Error::NoCandidate)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let c = OptimizerConfig {
            sample_budget: 8,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = OptimizerConfig {
            omega_range: (1.0, 1.0),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn cell_subdivision_is_exact() {
        let c = Cell {
            x0: 0,
            y0: 0,
            wx: 4,
            wy: 4,
        };
        let kids = c.children();
        assert_eq!(kids.iter().map(|k| k.wx * k.wy).sum::<u64>(), 16);
        assert!(c.midpoints().contains(&(2, 2)));
    }
}

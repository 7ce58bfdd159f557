//! The five experiment commands. Each writes CSV/JSON into the output
//! directory and returns; the manifest is written by the caller.

use reslru_core::batch::Executor;
use reslru_core::lindblad::{
    leakage_population, long_drive_pulse, quadratic_fit, sample_grid, zz_sensitivity_with,
    Characterization, LindbladSystem,
};
use reslru_core::markov::{
    build_res_lru_channel, lru_augmented_rates_with, mix_seed, monte_carlo_surface17_with,
    summarize, FitSummary, LruParams, MarkovConfig, QubitSpec, QubitTrace, Role,
};
use reslru_core::model::{convergence_check, find_avoided_crossing_exact, BasisLabel, DrivePulse};
use reslru_core::optimize::{
    critical_amplitude, select_operating_point, LandscapePoint, PulseOptimizer,
};
use reslru_core::swt::{
    g_tilde_lowest_order, omega_d_star_first_order, solve_omega_d_star_analytic,
};
use reslru_core::units::{mhz, ns, to_hz, to_mhz, us};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::{Cell, OutputDir, Progress};

fn ghz_of(w: f64) -> f64 {
    to_hz(w) / 1e9
}

fn khz_of(w: f64) -> f64 {
    to_hz(w) / 1e3
}

fn in_ns(t: f64) -> f64 {
    t * 1e9
}

fn in_us(t: f64) -> f64 {
    t * 1e6
}

/// Shared state for a command run.
#[derive(Debug)]
pub struct Context<'a, E: Executor> {
    pub cfg: &'a ExperimentConfig,
    pub exec: &'a E,
    pub out: &'a mut OutputDir,
    pub progress: Progress,
}

// crossing

#[derive(Debug, Clone, Copy)]
struct CrossingRow {
    omega_mhz: f64,
    exact_w: f64,
    exact_g: f64,
    analytic_w: f64,
    analytic_g: f64,
    first_w: f64,
    lowest_g: f64,
    drift: Option<(f64, f64)>,
}

/// Exact vs perturbative crossing position and coupling per drive amplitude.
pub fn crossing<E: Executor>(ctx: &mut Context<'_, E>) -> Result<()> {
    let params = ctx.cfg.device.params()?;
    let omegas = &ctx.cfg.crossing.omegas_mhz;
    if omegas.is_empty() {
        return Err(CliError::Config("crossing: omegas_mhz is empty".into()));
    }
    let first_w = omega_d_star_first_order(&params)?;
    let convergence = ctx.cfg.crossing.convergence;
    let rows = ctx.exec.map(omegas, |&omega_mhz| -> Result<CrossingRow> {
        let omega = mhz(omega_mhz);
        let exact = find_avoided_crossing_exact(&params, omega, None)?;
        let analytic = solve_omega_d_star_analytic(&params, omega)?;
        let drift = if convergence {
            Some(convergence_check(&params, omega)?)
        } else {
            None
        };
        Ok(CrossingRow {
            omega_mhz,
            exact_w: exact.omega_d_star,
            exact_g: exact.g_tilde,
            analytic_w: analytic.omega_d_star_analytic,
            analytic_g: analytic.g_tilde_order3,
            first_w,
            lowest_g: g_tilde_lowest_order(&params, omega).abs(),
            drift,
        })
    });
    let rows: Vec<CrossingRow> = rows.into_iter().collect::<Result<_>>()?;
    ctx.progress.report("crossing", rows.len(), rows.len());

    let mut header = vec![
        "omega_mhz",
        "omega_d_star_exact_ghz",
        "omega_d_star_order3_ghz",
        "omega_d_star_first_order_ghz",
        "g_tilde_exact_mhz",
        "g_tilde_order3_mhz",
        "g_tilde_lowest_mhz",
        "err_order3_mhz",
        "err_first_order_mhz",
    ];
    if convergence {
        header.extend(["drift_omega_d_khz", "drift_g_tilde_khz"]);
    }
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            let mut row: Vec<Cell> = vec![
                r.omega_mhz.into(),
                ghz_of(r.exact_w).into(),
                ghz_of(r.analytic_w).into(),
                ghz_of(r.first_w).into(),
                to_mhz(r.exact_g).into(),
                to_mhz(r.analytic_g).into(),
                to_mhz(r.lowest_g).into(),
                to_mhz((r.analytic_w - r.exact_w).abs()).into(),
                to_mhz((r.first_w - r.exact_w).abs()).into(),
            ];
            if let Some((dw, dg)) = r.drift {
                row.push(khz_of(dw).into());
                row.push(khz_of(dg).into());
            }
            row
        })
        .collect();
    ctx.out.csv("crossing.csv", &header, &table)?;
    Ok(())
}

// evolve

fn parse_label(s: &str) -> Result<BasisLabel> {
    let bad = || CliError::Config(format!("drive.labels: `{s}` is not of the form \"m,l\""));
    let (m, l) = s.split_once(',').ok_or_else(bad)?;
    let transmon = m.trim().parse().map_err(|_| bad())?;
    let resonator = l.trim().parse().map_err(|_| bad())?;
    Ok(BasisLabel {
        transmon,
        resonator,
    })
}

#[derive(Debug, Serialize)]
struct LevelSummary {
    level: usize,
    p2_final: f64,
    steps_accepted: usize,
    steps_rejected: usize,
}

#[derive(Debug, Serialize)]
struct EvolveMeta {
    omega_mhz: f64,
    omega_d_ghz: f64,
    t_p_ns: f64,
    t_slot_ns: f64,
    long_drive: bool,
    population_basis: &'static str,
    levels: Vec<LevelSummary>,
    /// Five-state characterization of the pulse (omitted for long drives).
    characterization: Option<CharacterizationOut>,
    /// T1 measured under the always-on drive.
    long_drive_t1_us: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CharacterizationOut {
    pub p2_leaked: f64,
    pub p2_induced_0: f64,
    pub p2_induced_1: f64,
    pub eff_t1_us: f64,
    pub eff_t2_us: f64,
    pub t1_up_us: Option<f64>,
}

impl From<&Characterization> for CharacterizationOut {
    fn from(c: &Characterization) -> Self {
        Self {
            p2_leaked: c.p2_leaked,
            p2_induced_0: c.p2_induced_0,
            p2_induced_1: c.p2_induced_1,
            eff_t1_us: in_us(c.eff_t1),
            eff_t2_us: in_us(c.eff_t2),
            t1_up_us: c.t1_up.map(in_us),
        }
    }
}

/// Population dynamics from each requested initial level.
pub fn evolve<E: Executor>(ctx: &mut Context<'_, E>) -> Result<()> {
    let params = ctx.cfg.device.params()?;
    let d = &ctx.cfg.drive;
    let t_slot = d.t_slot();
    let pulse = if d.long_drive {
        let mut p = long_drive_pulse(
            mhz(d.omega_mhz),
            d.pulse()?.omega_d,
            ns(d.t_rise_ns),
            t_slot,
        );
        p.phi = d.phi;
        p
    } else {
        d.pulse()?
    };
    if d.sample_ns <= 0.0 {
        return Err(CliError::Config("drive.sample_ns must be positive".into()));
    }
    let dims = params.dims();
    for &l in &d.levels {
        if l >= dims.n_transmon {
            return Err(CliError::Config(format!(
                "drive.levels: level {l} outside the transmon truncation"
            )));
        }
    }
    let labels: Vec<BasisLabel> = if d.labels.is_empty() {
        dims.labels().collect()
    } else {
        d.labels
            .iter()
            .map(|s| parse_label(s))
            .collect::<Result<_>>()?
    };
    for l in &labels {
        if l.transmon >= dims.n_transmon || l.resonator >= dims.n_resonator {
            return Err(CliError::Config(format!(
                "drive.labels: {l} outside the truncation"
            )));
        }
    }
    let sys = LindbladSystem::new(&params, pulse.omega_d, pulse.phi)?.with_settings(d.solver());
    let samples = sample_grid(t_slot, ns(d.sample_ns));

    let runs = ctx.exec.map(&d.levels, |&level| {
        let rho0 = sys.initial_level(level)?;
        let (last, traj) = sys.evolve(&pulse, &rho0, t_slot, &samples, false)?;
        Ok((level, leakage_population(&last), traj))
    });
    let mut summaries = Vec::new();
    for (k, run) in runs.into_iter().enumerate() {
        let (level, p2, traj) = run.map_err(CliError::Numerical)?;
        let mut header = vec!["time_ns".to_string()];
        header.extend(
            labels
                .iter()
                .map(|l| format!("p_{}_{}", l.transmon, l.resonator)),
        );
        let columns: Vec<Vec<f64>> = labels
            .iter()
            .map(|l| traj.trace_of(*l).unwrap_or_default())
            .collect();
        let rows: Vec<Vec<Cell>> = traj
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut row = vec![Cell::F(in_ns(t))];
                row.extend(columns.iter().map(|c| Cell::F(c[i])));
                row
            })
            .collect();
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        ctx.out
            .csv(&format!("evolve_level{level}.csv"), &header_refs, &rows)?;
        summaries.push(LevelSummary {
            level,
            p2_final: p2,
            steps_accepted: traj.stats.accepted,
            steps_rejected: traj.stats.rejected,
        });
        ctx.progress.report("evolve", k + 1, d.levels.len());
    }

    let (characterization, long_t1) = if d.long_drive {
        (None, Some(in_us(sys.effective_t1(&pulse, t_slot)?)))
    } else {
        (
            Some(CharacterizationOut::from(
                &sys.characterize(&pulse, t_slot)?,
            )),
            None,
        )
    };
    let meta = EvolveMeta {
        omega_mhz: to_mhz(pulse.omega),
        omega_d_ghz: ghz_of(pulse.omega_d),
        t_p_ns: in_ns(pulse.t_p),
        t_slot_ns: in_ns(t_slot),
        long_drive: d.long_drive,
        population_basis: if d.bare_populations {
            "bare"
        } else {
            "dressed"
        },
        levels: summaries,
        characterization,
        long_drive_t1_us: long_t1,
    };
    ctx.out.json("evolve.json", &meta)?;
    Ok(())
}

// heatmap

fn landscape_row(p: &LandscapePoint) -> Vec<Cell> {
    vec![
        to_mhz(p.omega).into(),
        ghz_of(p.omega_d).into(),
        in_ns(p.t_p_opt).into(),
        p.p2_leaked.into(),
        p.p2_induced_0.into(),
        p.p2_induced_1.into(),
        in_us(p.eff_t1).into(),
        in_us(p.eff_t2).into(),
        p.t1_up.map(in_us).into(),
    ]
}

const LANDSCAPE_HEADER: [&str; 9] = [
    "omega_mhz",
    "omega_d_ghz",
    "t_p_ns",
    "p2_leaked",
    "p2_induced_0",
    "p2_induced_1",
    "eff_t1_us",
    "eff_t2_us",
    "t1_up_us",
];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PointOut {
    pub omega_mhz: f64,
    pub omega_d_ghz: f64,
    pub t_p_ns: f64,
    pub p2_leaked: f64,
    pub p2_induced_0: f64,
    pub p2_induced_1: f64,
    pub eff_t1_us: f64,
    pub eff_t2_us: f64,
    pub t1_up_us: Option<f64>,
}

impl From<&LandscapePoint> for PointOut {
    fn from(p: &LandscapePoint) -> Self {
        Self {
            omega_mhz: to_mhz(p.omega),
            omega_d_ghz: ghz_of(p.omega_d),
            t_p_ns: in_ns(p.t_p_opt),
            p2_leaked: p.p2_leaked,
            p2_induced_0: p.p2_induced_0,
            p2_induced_1: p.p2_induced_1,
            eff_t1_us: in_us(p.eff_t1),
            eff_t2_us: in_us(p.eff_t2),
            t1_up_us: p.t1_up.map(in_us),
        }
    }
}

#[derive(Debug, Serialize)]
struct OperatingPointOut {
    omega_cr_mhz: f64,
    p2_threshold: f64,
    reference: CharacterizationOut,
    selected: PointOut,
    score: f64,
    rationale: String,
    refined: Option<PointOut>,
}

/// Adaptive `(Omega, omega_d)` landscape plus the selected operating point.
pub fn heatmap<E: Executor>(ctx: &mut Context<'_, E>) -> Result<()> {
    let params = ctx.cfg.device.params()?;
    let o = &ctx.cfg.optimizer;
    let config = o.config(&ctx.cfg.drive)?;
    let optimizer = PulseOptimizer::new(&params, config)?;
    let progress = ctx.progress;
    let landscape = optimizer.sweep_landscape_with(ctx.exec, |done, total| {
        progress.report("heatmap", done, total)
    })?;
    let rows: Vec<Vec<Cell>> = landscape.iter().map(landscape_row).collect();
    ctx.out.csv("landscape.csv", &LANDSCAPE_HEADER, &rows)?;

    let reference = optimizer.reference()?;
    let op = select_operating_point(
        &landscape,
        o.p2_threshold,
        reference.eff_t1,
        reference.eff_t2,
    )?;
    let refined = if o.refine_steps > 0 {
        Some(PointOut::from(
            &optimizer.refine(&op.point, o.refine_steps)?,
        ))
    } else {
        None
    };
    let out = OperatingPointOut {
        omega_cr_mhz: to_mhz(optimizer.omega_cr),
        p2_threshold: o.p2_threshold,
        reference: (&reference).into(),
        selected: (&op.point).into(),
        score: op.score,
        rationale: op.rationale,
        refined,
    };
    ctx.out.json("operating_point.json", &out)?;
    Ok(())
}

// zz

#[derive(Debug, Clone, Copy, Serialize)]
struct QuadraticOut {
    /// `R(zeta) = c0 + c1 zeta + c2 zeta^2`, zeta in MHz.
    c0: f64,
    c1: f64,
    c2: f64,
    r_squared: f64,
}

#[derive(Debug, Serialize)]
struct ZzOut {
    operating_point: QuadraticOut,
    critical: Option<CriticalOut>,
    /// `|c2(critical)| / |c2(operating point)|`.
    curvature_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CriticalOut {
    omega_cr_mhz: f64,
    omega_d_ghz: f64,
    fit: QuadraticOut,
}

fn fit_curve(xs_mhz: &[f64], r: &[(f64, f64)]) -> Result<QuadraticOut> {
    let ys: Vec<f64> = r.iter().map(|p| p.1).collect();
    let (c, r2) = quadratic_fit(xs_mhz, &ys)?;
    Ok(QuadraticOut {
        c0: c[0],
        c1: c[1],
        c2: c[2],
        r_squared: r2,
    })
}

/// Reset fidelity under a static qubit-frequency shift.
pub fn zz<E: Executor>(ctx: &mut Context<'_, E>) -> Result<()> {
    let params = ctx.cfg.device.params()?;
    let d = &ctx.cfg.drive;
    let z = &ctx.cfg.zz;
    if z.zetas_mhz.len() < 3 {
        return Err(CliError::Config(
            "zz.zetas_mhz needs at least 3 values".into(),
        ));
    }
    let zetas: Vec<f64> = z.zetas_mhz.iter().map(|&x| mhz(x)).collect();
    let t_slot = d.t_slot();
    let pulse = d.pulse()?;
    let at_op = zz_sensitivity_with(ctx.exec, &params, &pulse, &zetas, t_slot)?;
    ctx.progress
        .report("zz", 1, if z.include_critical { 2 } else { 1 });
    let op_fit = fit_curve(&z.zetas_mhz, &at_op)?;

    let mut critical = None;
    let mut at_cr = None;
    if z.include_critical {
        let source = ctx.cfg.optimizer.coupling_source;
        let omega_cr = critical_amplitude(&params, mhz(ctx.cfg.optimizer.omega_max_mhz), source)?;
        let w = find_avoided_crossing_exact(&params, omega_cr, None)?.omega_d_star;
        let cr_pulse = DrivePulse {
            omega: omega_cr,
            omega_d: w,
            phi: 0.0,
            t_rise: pulse.t_rise,
            t_p: t_slot,
        };
        let r = zz_sensitivity_with(ctx.exec, &params, &cr_pulse, &zetas, t_slot)?;
        ctx.progress.report("zz", 2, 2);
        critical = Some(CriticalOut {
            omega_cr_mhz: to_mhz(omega_cr),
            omega_d_ghz: ghz_of(w),
            fit: fit_curve(&z.zetas_mhz, &r)?,
        });
        at_cr = Some(r);
    }

    let mut header = vec!["zeta_mhz", "r_operating"];
    if at_cr.is_some() {
        header.push("r_critical");
    }
    let rows: Vec<Vec<Cell>> = (0..zetas.len())
        .map(|i| {
            let mut row = vec![Cell::F(z.zetas_mhz[i]), Cell::F(at_op[i].1)];
            if let Some(r) = &at_cr {
                row.push(Cell::F(r[i].1));
            }
            row
        })
        .collect();
    ctx.out.csv("zz.csv", &header, &rows)?;
    let ratio = critical.as_ref().map(|c| (c.fit.c2 / op_fit.c2).abs());
    ctx.out.json(
        "zz_fit.json",
        &ZzOut {
            operating_point: op_fit,
            critical,
            curvature_ratio: ratio,
        },
    )?;
    Ok(())
}

// markov

#[derive(Debug, Clone)]
struct Scenario {
    name: &'static str,
    parameter: Option<f64>,
    cfg: MarkovConfig,
    lru: LruParams,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct ChannelCheck {
    t_lru_ns: f64,
    choi_min_eigenvalue: f64,
    trace_defect: f64,
    from_2: [f64; 3],
    from_1: [f64; 3],
    from_0: [f64; 3],
}

#[derive(Debug, Serialize)]
struct MarkovOut<'a> {
    fit_model: reslru_core::markov::FitModel,
    scenarios: Vec<ScenarioOut<'a>>,
}

#[derive(Debug, Serialize)]
struct ScenarioOut<'a> {
    scenario: &'a str,
    parameter: Option<f64>,
    seed: u64,
    fits: Vec<FitSummary>,
}

/// Predicted `(Gamma_CL, Gamma_LC)` for one qubit in one scenario.
fn predicted(q: &QubitSpec, s: &Scenario) -> Result<(f64, f64)> {
    let base = s.cfg.base_rates(q)?.value;
    let on = match q.role {
        Role::Data => s.cfg.use_data_lru,
        Role::Ancilla => s.cfg.use_ancilla_lru,
    };
    if !on {
        return Ok((base.gamma_cl, base.gamma_lc));
    }
    let r = lru_augmented_rates_with(&base, &s.lru, q.role, s.cfg.p0_occupancy)?.value;
    Ok((r.gamma_cl, r.gamma_lc))
}

/// Surface-17 leakage Monte Carlo: no LRU, data LRU vs R, ancilla LRU vs pM(2|2).
pub fn markov<E: Executor>(ctx: &mut Context<'_, E>) -> Result<()> {
    let m = &ctx.cfg.markov;
    let layout = m.layout()?;
    let base = m.base()?;
    let lru = m.lru()?;
    let seed = ctx.cfg.seed;

    let mut scenarios = vec![Scenario {
        name: "baseline",
        parameter: None,
        cfg: base,
        lru,
        seed: mix_seed(seed, 0),
    }];
    for (i, &r) in m.r_sweep.iter().enumerate() {
        let l = LruParams { r, ..lru };
        l.validate()
            .map_err(|e| CliError::Config(format!("markov.r_sweep: {e}")))?;
        let cfg = MarkovConfig {
            use_data_lru: true,
            ..base
        };
        scenarios.push(Scenario {
            name: "data_lru",
            parameter: Some(r),
            cfg,
            lru: l,
            seed: mix_seed(seed, 100 + i as u64),
        });
    }
    for (i, &p) in m.pm22_sweep.iter().enumerate() {
        let l = LruParams { pm22: p, ..lru };
        l.validate()
            .map_err(|e| CliError::Config(format!("markov.pm22_sweep: {e}")))?;
        let cfg = MarkovConfig {
            use_ancilla_lru: true,
            ..base
        };
        scenarios.push(Scenario {
            name: "ancilla_lru",
            parameter: Some(p),
            cfg,
            lru: l,
            seed: mix_seed(seed, 200 + i as u64),
        });
    }

    let mut trace_rows = Vec::new();
    let mut fit_rows = Vec::new();
    let mut outs = Vec::new();
    for (k, s) in scenarios.iter().enumerate() {
        let traces: Vec<QubitTrace> =
            monte_carlo_surface17_with(ctx.exec, &layout, &s.cfg, &s.lru, s.seed)?;
        let fits = summarize(
            ctx.exec,
            &traces,
            m.fit_model,
            m.bootstrap,
            mix_seed(s.seed, 1),
        );
        for t in &traces {
            for (c, (&p, &e)) in t.trace.pbar.iter().zip(&t.trace.stderr).enumerate() {
                trace_rows.push(vec![
                    Cell::from(s.name),
                    Cell::Opt(s.parameter),
                    Cell::from(t.qubit.name.as_str()),
                    Cell::from(c + 1),
                    Cell::F(p),
                    Cell::F(e),
                ]);
            }
        }
        for (t, f) in traces.iter().zip(&fits) {
            let (pred_cl, pred_lc) = predicted(&t.qubit, s)?;
            let fit = f.fit.as_ref();
            let err = f.errors.as_ref();
            fit_rows.push(vec![
                Cell::from(s.name),
                Cell::Opt(s.parameter),
                Cell::from(t.qubit.name.as_str()),
                Cell::from(match t.qubit.role {
                    Role::Data => "data",
                    Role::Ancilla => "ancilla",
                }),
                Cell::from(t.qubit.n_flux),
                Cell::Opt(fit.map(|f| f.rates.gamma_cl)),
                Cell::Opt(fit.map(|f| f.rates.gamma_lc)),
                Cell::Opt(fit.map(|f| f.lifetime)),
                Cell::Opt(fit.map(|f| f.steady_state)),
                Cell::Opt(err.map(|e| e.lifetime)),
                Cell::Opt(err.map(|e| e.steady_state)),
                Cell::F(pred_cl),
                Cell::F(pred_lc),
                Cell::from(f.note.clone().unwrap_or_default()),
            ]);
        }
        outs.push(ScenarioOut {
            scenario: s.name,
            parameter: s.parameter,
            seed: s.seed,
            fits,
        });
        ctx.progress.report("markov", k + 1, scenarios.len());
    }

    ctx.out.csv(
        "markov_traces.csv",
        &["scenario", "parameter", "qubit", "cycle", "pbar", "stderr"],
        &trace_rows,
    )?;
    ctx.out.csv(
        "markov_fits.csv",
        &[
            "scenario",
            "parameter",
            "qubit",
            "role",
            "n_flux",
            "gamma_cl",
            "gamma_lc",
            "lifetime",
            "steady_state",
            "lifetime_err",
            "steady_state_err",
            "predicted_gamma_cl",
            "predicted_gamma_lc",
            "note",
        ],
        &fit_rows,
    )?;
    ctx.out.json(
        "markov_fits.json",
        &MarkovOut {
            fit_model: m.fit_model,
            scenarios: outs,
        },
    )?;
    ctx.out.json("layout.json", &layout)?;

    let ch = build_res_lru_channel(&lru, ns(m.t_lru_ns), us(m.t1_us), us(m.channel_tphi_us))?;
    let check = ChannelCheck {
        t_lru_ns: m.t_lru_ns,
        choi_min_eigenvalue: ch.choi_min_eigenvalue()?,
        trace_defect: ch.trace_defect(),
        from_2: ch.population_action([0.0, 0.0, 1.0]),
        from_1: ch.population_action([0.0, 1.0, 0.0]),
        from_0: ch.population_action([1.0, 0.0, 0.0]),
    };
    ctx.out.json("lru_channel.json", &check)?;
    Ok(())
}

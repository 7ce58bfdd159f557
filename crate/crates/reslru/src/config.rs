//! Experiment configuration in lab units (GHz, MHz, ns, us).
//!
//! A run's configuration is: built-in defaults, then the preset overlays in
//! the order given, then the config file, then command-line overrides.
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use reslru_core::lindblad::SolverSettings;
use reslru_core::markov::{FitModel, LruParams, MarkovConfig, QubitSpec, Role};
use reslru_core::model::{DeviceParams, DrivePulse};
use reslru_core::optimize::{CouplingSource, OptimizerConfig};
use reslru_core::units::{ghz, mhz, ns, us};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::presets::Preset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; `None` defers to the command line or environment.
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
    pub device: DeviceSection,
    pub crossing: CrossingSection,
    pub drive: DriveSection,
    pub optimizer: OptimizerSection,
    pub zz: ZzSection,
    pub markov: MarkovSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            output_dir: PathBuf::from("out"),
            device: DeviceSection::default(),
            crossing: CrossingSection::default(),
            drive: DriveSection::default(),
            optimizer: OptimizerSection::default(),
            zz: ZzSection::default(),
            markov: MarkovSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSection {
    pub omega_q_ghz: f64,
    pub omega_r_ghz: f64,
    pub alpha_mhz: f64,
    pub g_mhz: f64,
    /// `kappa / 2 pi`.
    pub kappa_mhz: f64,
    pub nbar: f64,
    pub t1_us: f64,
    pub t2_us: f64,
    /// Resonator T2; `None` means `2 / kappa`.
    pub t2r_ns: Option<f64>,
    pub n_transmon: usize,
    pub n_resonator: usize,
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self {
            omega_q_ghz: 6.7,
            omega_r_ghz: 7.8,
            alpha_mhz: -300.0,
            g_mhz: 135.0,
            kappa_mhz: 10.0,
            nbar: 0.005,
            t1_us: 30.0,
            t2_us: 30.0,
            t2r_ns: None,
            n_transmon: 6,
            n_resonator: 3,
        }
    }
}

impl DeviceSection {
    pub fn params(&self) -> Result<DeviceParams> {
        let kappa = mhz(self.kappa_mhz);
        let p = DeviceParams {
            omega_q: ghz(self.omega_q_ghz),
            omega_r: ghz(self.omega_r_ghz),
            alpha: mhz(self.alpha_mhz),
            g: mhz(self.g_mhz),
            kappa,
            nbar: self.nbar,
            t1_q: us(self.t1_us),
            t2_q: us(self.t2_us),
            t2_r: match self.t2r_ns {
                Some(t) => ns(t),
                None if kappa > 0.0 => 2.0 / kappa,
                None => f64::INFINITY,
            },
            n_transmon: self.n_transmon,
            n_resonator: self.n_resonator,
        };
        p.validate()
            .map_err(|e| CliError::Config(format!("device: {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingSection {
    pub omegas_mhz: Vec<f64>,
    /// Also report the drift against a larger truncation.
    pub convergence: bool,
}

impl Default for CrossingSection {
    fn default() -> Self {
        Self {
            omegas_mhz: vec![50.0, 100.0, 200.0, 300.0, 400.0, 500.0],
            convergence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub omega_mhz: f64,
    pub omega_d_ghz: f64,
    pub phi: f64,
    pub t_rise_ns: f64,
    pub t_p_ns: f64,
    pub t_slot_ns: f64,
    pub levels: Vec<usize>,
    /// Always-on drive through the slot instead of the pulse.
    pub long_drive: bool,
    pub sample_ns: f64,
    /// Labels exported as `p_m_l` columns, written `"m,l"`; empty means all.
    pub labels: Vec<String>,
    pub bare_populations: bool,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            omega_mhz: 204.0,
            omega_d_ghz: 5.2464,
            phi: 0.0,
            t_rise_ns: 30.0,
            t_p_ns: 178.6,
            t_slot_ns: 440.0,
            levels: vec![0, 1, 2],
            long_drive: false,
            sample_ns: 2.0,
            labels: Vec::new(),
            bare_populations: false,
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

impl DriveSection {
    pub fn pulse(&self) -> Result<DrivePulse> {
        let p = DrivePulse {
            omega: mhz(self.omega_mhz),
            omega_d: ghz(self.omega_d_ghz),
            phi: self.phi,
            t_rise: ns(self.t_rise_ns),
            t_p: ns(self.t_p_ns),
        };
        p.validate()
            .map_err(|e| CliError::Config(format!("drive: {e}")))?;
        if self.t_p_ns > self.t_slot_ns && !self.long_drive {
            return Err(CliError::Config("drive: t_p_ns exceeds t_slot_ns".into()));
        }
        Ok(p)
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            rtol: self.rtol,
            atol: self.atol,
            bare_populations: self.bare_populations,
            ..SolverSettings::default()
        }
    }

    pub fn t_slot(&self) -> f64 {
        ns(self.t_slot_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub omega_min_mhz: f64,
    pub omega_max_mhz: f64,
    pub omega_d_min_ghz: f64,
    pub omega_d_max_ghz: f64,
    pub budget: usize,
    pub grid: [usize; 2],
    pub cells_per_generation: usize,
    pub tp_tolerance_ns: f64,
    pub p2_floor: f64,
    pub p2_threshold: f64,
    pub refine_radius_mhz: f64,
    /// Pattern-search steps around the selected point; 0 skips fine-tuning.
    pub refine_steps: usize,
    pub near_critical_margin_mhz: f64,
    pub coupling_source: CouplingSource,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            omega_min_mhz: 0.0,
            omega_max_mhz: 500.0,
            omega_d_min_ghz: 5.19,
            omega_d_max_ghz: 5.26,
            budget: 144,
            grid: [12, 12],
            cells_per_generation: 4,
            tp_tolerance_ns: 0.1,
            p2_floor: 1e-6,
            p2_threshold: 0.01,
            refine_radius_mhz: 2.0,
            refine_steps: 4,
            near_critical_margin_mhz: 3.0,
            coupling_source: CouplingSource::Exact,
        }
    }
}

impl OptimizerSection {
    pub fn config(&self, drive: &DriveSection) -> Result<OptimizerConfig> {
        let c = OptimizerConfig {
            t_rise: ns(drive.t_rise_ns),
            t_slot: ns(drive.t_slot_ns),
            omega_range: (mhz(self.omega_min_mhz), mhz(self.omega_max_mhz)),
            omega_d_range: (ghz(self.omega_d_min_ghz), ghz(self.omega_d_max_ghz)),
            sample_budget: self.budget,
            tp_tolerance: ns(self.tp_tolerance_ns),
            grid: (self.grid[0], self.grid[1]),
            cells_per_generation: self.cells_per_generation,
            p2_floor: self.p2_floor,
            refine_radius: mhz(self.refine_radius_mhz),
            near_critical_margin: mhz(self.near_critical_margin_mhz),
            coupling_source: self.coupling_source,
        };
        c.validate()
            .map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        if self.budget < self.grid[0] * self.grid[1] {
            return Err(CliError::Config(format!(
                "optimizer: budget {} is smaller than the initial grid {}",
                self.budget,
                self.grid[0] * self.grid[1]
            )));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZzSection {
    pub zetas_mhz: Vec<f64>,
    /// Also sweep at the critical amplitude with the drive on for the slot.
    pub include_critical: bool,
}

impl Default for ZzSection {
    fn default() -> Self {
        Self {
            zetas_mhz: (0..9).map(|k| -2.0 + 0.5 * k as f64).collect(),
            include_critical: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutChoice {
    Surface17,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovSection {
    pub l1: f64,
    /// Seepage per CZ; `None` means `2 L1`.
    pub l2: Option<f64>,
    pub cycles: usize,
    pub runs: usize,
    pub p0_occupancy: f64,
    pub t_c_ns: f64,
    pub t1_us: f64,
    pub r: f64,
    pub l1_lru: f64,
    pub pm22: f64,
    pub pm11: f64,
    /// Data-qubit LRU sweep values of R.
    pub r_sweep: Vec<f64>,
    /// Ancilla LRU sweep values of pM(2|2).
    pub pm22_sweep: Vec<f64>,
    pub bootstrap: usize,
    pub fit_model: FitModel,
    pub t_lru_ns: f64,
    pub channel_tphi_us: f64,
    pub layout: LayoutChoice,
    /// Used when `layout = "custom"`.
    pub qubits: Vec<QubitSpec>,
}

impl Default for MarkovSection {
    fn default() -> Self {
        let lru = LruParams::fig4();
        Self {
            l1: 0.005,
            l2: None,
            cycles: 20,
            runs: 20_000,
            p0_occupancy: 0.5,
            t_c_ns: 800.0,
            t1_us: 30.0,
            r: lru.r,
            l1_lru: lru.l1_lru,
            pm22: lru.pm22,
            pm11: lru.pm11,
            r_sweep: vec![0.0, 0.2, 0.5, 0.8, 0.9, 0.95, 0.99, 1.0],
            pm22_sweep: vec![0.0, 0.2, 0.5, 0.8, 0.9, 0.95, 1.0],
            bootstrap: 100,
            fit_model: FitModel::Continuous,
            t_lru_ns: 100.0,
            channel_tphi_us: 60.0,
            layout: LayoutChoice::Surface17,
            qubits: Vec::new(),
        }
    }
}

impl MarkovSection {
    pub fn lru(&self) -> Result<LruParams> {
        let l = LruParams {
            r: self.r,
            l1_lru: self.l1_lru,
            pm22: self.pm22,
            pm11: self.pm11,
        };
        l.validate()
            .map_err(|e| CliError::Config(format!("markov: {e}")))?;
        Ok(l)
    }

    pub fn base(&self) -> Result<MarkovConfig> {
        let c = MarkovConfig {
            l1: self.l1,
            l2: self.l2,
            t_c: ns(self.t_c_ns),
            t1: us(self.t1_us),
            cycles: self.cycles,
            runs: self.runs,
            p0_occupancy: self.p0_occupancy,
            use_data_lru: false,
            use_ancilla_lru: false,
        };
        c.validate()
            .map_err(|e| CliError::Config(format!("markov: {e}")))?;
        Ok(c)
    }

    pub fn layout(&self) -> Result<Vec<QubitSpec>> {
        match self.layout {
            LayoutChoice::Surface17 => Ok(reslru_core::markov::surface17_layout()),
            LayoutChoice::Custom => {
                if self.qubits.is_empty() {
                    return Err(CliError::Config(
                        "markov: custom layout needs [[markov.qubits]] entries".into(),
                    ));
                }
                for q in &self.qubits {
                    QubitSpec::new(&q.name, q.role, q.n_flux, q.leakage_prone)
                        .map_err(|e| CliError::Config(format!("markov.qubits {}: {e}", q.name)))?;
                    if q.role == Role::Data && q.n_flux == 0 && q.leakage_prone {
                        return Err(CliError::Config(format!(
                            "markov.qubits {}: leakage-prone qubit with n_flux = 0",
                            q.name
                        )));
                    }
                }
                Ok(self.qubits.clone())
            }
        }
    }
}

/// Recursive table merge; `top` wins.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

/// Presets, then the file, into a validated config.
pub fn load(path: Option<&Path>, presets: &[Preset]) -> Result<ExperimentConfig> {
    let mut table = toml::Table::new();
    for p in presets {
        merge(
            &mut table,
            parse_table(p.overlay(), &format!("preset {}", p.name()))?,
        );
    }
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        merge(&mut table, parse_table(&text, &path.display().to_string())?);
    }
    from_table(
        table,
        path.map(|p| p.display().to_string())
            .as_deref()
            .unwrap_or("config"),
    )
}

/// Parses a complete config from TOML text (no presets).
pub fn from_str(text: &str) -> Result<ExperimentConfig> {
    from_table(parse_table(text, "config")?, "config")
}

fn from_table(table: toml::Table, origin: &str) -> Result<ExperimentConfig> {
    let text = toml::to_string(&table).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    let cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    cfg.device.params()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(from_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = from_str("[device]\nomega_q_ghz = 6.7\nbogus = 1\n").unwrap_err();
        assert!(
            matches!(err, CliError::Config(ref m) if m.contains("bogus")),
            "{err}"
        );
    }

    #[test]
    fn merge_prefers_top() {
        let mut a = parse_table("[device]\ng_mhz = 1.0\nnbar = 0.1\n", "a").unwrap();
        merge(&mut a, parse_table("[device]\ng_mhz = 2.0\n", "b").unwrap());
        let cfg = from_table(a, "t").unwrap();
        assert_eq!(cfg.device.g_mhz, 2.0);
        assert_eq!(cfg.device.nbar, 0.1);
    }
}

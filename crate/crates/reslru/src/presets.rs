//! Named parameter sets, stored as TOML overlays.

use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Device and drive parameters (transmon, resonator, operating point).
    Table1,
    /// Surface-17 cycle timing.
    Table2,
    /// Leakage Monte Carlo settings and LRU figures.
    Fig4,
}

const TABLE1: &str = r#"
[device]
omega_q_ghz = 6.7
omega_r_ghz = 7.8
alpha_mhz = -300.0
g_mhz = 135.0
kappa_mhz = 10.0
nbar = 0.005
t1_us = 30.0
t2_us = 30.0
n_transmon = 6
n_resonator = 3

[drive]
omega_mhz = 204.0
omega_d_ghz = 5.2464
t_rise_ns = 30.0
t_p_ns = 178.6
t_slot_ns = 440.0
"#;

const TABLE2: &str = r#"
[drive]
t_slot_ns = 440.0

[markov]
t_c_ns = 800.0
t1_us = 30.0
t_lru_ns = 100.0
"#;

const FIG4: &str = r#"
[markov]
l1 = 0.005
cycles = 20
runs = 20000
p0_occupancy = 0.5
r = 0.95
l1_lru = 0.0025
pm22 = 0.9
pm11 = 0.995
r_sweep = [0.0, 0.2, 0.5, 0.8, 0.9, 0.95, 0.99, 1.0]
pm22_sweep = [0.0, 0.2, 0.5, 0.8, 0.9, 0.95, 1.0]
layout = "surface17"
"#;

impl Preset {
    pub fn overlay(self) -> &'static str {
        match self {
            Preset::Table1 => TABLE1,
            Preset::Table2 => TABLE2,
            Preset::Fig4 => FIG4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
            Preset::Fig4 => "fig4",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Preset as ValueEnum>::from_str(s, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{load, ExperimentConfig};

    #[test]
    fn presets_match_defaults() {
        let cfg = load(None, &[Preset::Table1, Preset::Table2, Preset::Fig4]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }
}

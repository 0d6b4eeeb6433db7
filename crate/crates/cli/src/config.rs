//! Run configuration: built-in defaults, overridden by an optional TOML file,
//! overridden by command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use evci_core::evsim::SimConfig;
use evci_core::pricing::Tariff;
use evci_core::siting::{PsoConfig, DEFAULT_ENUMERATION_BUDGET};
use evci_core::LoadFlowConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeederSection {
    pub base_kv: f64,
    pub base_mva: f64,
}

impl Default for FeederSection {
    fn default() -> Self {
        Self { base_kv: 12.66, base_mva: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SitingSection {
    pub n_evci: usize,
    pub evci_kw: f64,
    /// Largest number of placements `enumerate` will evaluate.
    pub budget: u64,
}

impl Default for SitingSection {
    fn default() -> Self {
        Self { n_evci: 5, evci_kw: 1000.0, budget: DEFAULT_ENUMERATION_BUDGET as u64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPriceSection {
    /// Range of the synthetic grid price, per kWh.
    pub lo: f64,
    pub hi: f64,
}

impl Default for GridPriceSection {
    fn default() -> Self {
        Self { lo: 0.02, hi: 0.08 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub holdout: usize,
    pub max_p: usize,
    pub max_d: usize,
    pub max_q: usize,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self { holdout: 168, max_p: 5, max_d: 2, max_q: 5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub feeder: FeederSection,
    pub siting: SitingSection,
    pub loadflow: LoadFlowConfig,
    pub pso: PsoConfig,
    pub sim: SimConfig,
    pub tariff: Tariff,
    pub grid_price: GridPriceSection,
    pub forecast: ForecastSection,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Config::default(),
        };
        if let Some(seed) = cfg.seed {
            cfg.set_seed(seed);
        }
        Ok(cfg)
    }

    /// One seed drives every random component.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.pso.seed = seed;
        self.sim.seed = seed;
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.pso.seed)
    }

    pub fn scaling_seed(&self) -> u64 {
        self.sim.seed.wrapping_add(1)
    }

    pub fn grid_seed(&self) -> u64 {
        self.sim.seed.wrapping_add(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_override_defaults() {
        let cfg: Config = toml::from_str("[pso]\nswarm_size = 20\n[tariff]\nr_f = 0.03\n").unwrap();
        assert_eq!(cfg.pso.swarm_size, 20);
        assert_eq!(cfg.pso.max_iter, PsoConfig::default().max_iter);
        assert_eq!(cfg.tariff.r_f, 0.03);
        assert_eq!(cfg.forecast.holdout, 168);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("[forecast]\nhorizon = 3\n").is_err());
    }
}

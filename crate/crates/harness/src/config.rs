//! TOML configuration: `[scenario]`, `[solver]` and `[harness]` tables.
//! Every key is optional; omitted keys take their defaults and unknown keys
//! are rejected.

use std::path::Path;

use daur_core::daur::{DaurConfig, Method};
use daur_core::ScenarioParams;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    /// Method names to run; empty means all five.
    pub methods: Vec<String>,
    /// Write measured wall-clock times instead of 0. Off by default so
    /// output files are byte-stable.
    pub record_wall_time: bool,
    /// Overrides the swept values of a `sweep_*` experiment.
    pub sweep_values: Option<Vec<f64>>,
    /// Penalty weights visited by `dc_penalty_study`.
    pub varpi_values: Vec<f64>,
    /// (users, servers) sizes for the retain/drop comparison.
    pub dc_sizes: Vec<[usize; 2]>,
    /// Cap on worker threads; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for HarnessSection {
    fn default() -> Self {
        Self {
            methods: Vec::new(),
            record_wall_time: false,
            sweep_values: None,
            varpi_values: vec![25.0, 50.0, 100.0, 175.0, 250.0, 500.0],
            dc_sizes: vec![[10, 2], [20, 3], [30, 4]],
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub scenario: ScenarioParams,
    pub solver: DaurConfig,
    pub harness: HarnessSection,
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: HarnessConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario.validate()?;
        self.solver.validate()?;
        self.methods()?;
        if self.harness.varpi_values.iter().any(|&v| !(v > 0.0)) {
            return Err(HarnessError::Config("varpi_values must be positive".into()));
        }
        if self.harness.dc_sizes.iter().any(|&[n, m]| n == 0 || m == 0) {
            return Err(HarnessError::Config("dc_sizes entries must be positive".into()));
        }
        Ok(())
    }

    /// Requested methods in canonical order.
    pub fn methods(&self) -> Result<Vec<Method>, HarnessError> {
        if self.harness.methods.is_empty() {
            return Ok(Method::ALL.to_vec());
        }
        let mut out = Vec::new();
        for name in &self.harness.methods {
            let m = Method::parse(name).ok_or_else(|| HarnessError::Config(format!("unknown method '{name}'")))?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out.sort_by_key(|m| Method::ALL.iter().position(|x| x == m));
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }
}

/// Parses `a..b` (inclusive) or a single seed.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Config(format!("bad seed range '{text}', expected a..b"));
    let seeds: Vec<u64> = match text.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            (a..=b).collect()
        }
        None => vec![text.trim().parse().map_err(|_| bad())?],
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

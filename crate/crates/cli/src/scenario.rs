//! Scenario files: one TOML document describes a run of any subcommand.
//!
//! Every section and key is optional; missing values fall back to the
//! four-node example line (`S, R1, R2, D` at `0, 1, 2, 3`) with `α = 3.5`.
//! Unknown keys are rejected so that typos do not silently fall back to a
//! default.

use std::path::{Path, PathBuf};

use barrage::channel::db_to_linear;
use barrage::interference::{CascadeScenario, DEFAULT_MAX_ITERS, DEFAULT_XI};
use barrage::montecarlo::SimMode;
use barrage::optimizer::{rate_to_beta, SearchOptions};
use barrage::{ChannelParams, LineTopology};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub topology: TopologySection,
    pub channel: ChannelSection,
    pub cci: CciSection,
    pub fixed_point: FixedPointSection,
    pub simulation: SimulationSection,
    pub sweep: SweepSection,
    pub iterate: IterateSection,
    pub optimization: OptimizationSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Positions {
    /// `"equally_spaced"`.
    Named(String),
    /// Explicit relay positions.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologySection {
    pub relays: usize,
    pub length: f64,
    pub positions: Positions,
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection {
            relays: 2,
            length: 3.0,
            positions: Positions::Named("equally_spaced".into()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub gamma_db: f64,
    pub alpha: f64,
    /// SINR threshold in dB. Mutually exclusive with `rate`.
    pub beta_db: Option<f64>,
    /// Code rate in bits per channel use; `β = 2^rate - 1`.
    pub rate: Option<f64>,
    /// Far-field guard in units of the reference distance.
    pub min_distance: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            gamma_db: 10.0,
            alpha: 3.5,
            beta_db: None,
            rate: None,
            min_distance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CciSection {
    pub enabled: bool,
    /// Translations of the interfering zones; defaults to `±2d`.
    pub offsets: Option<Vec<f64>>,
    pub halt_on_success: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointSection {
    pub xi: f64,
    pub max_iters: usize,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        FixedPointSection {
            xi: DEFAULT_XI,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    SinrLevel,
    TransitionLevel,
}

impl From<ModeName> for SimMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::SinrLevel => SimMode::SinrLevel,
            ModeName::TransitionLevel => SimMode::TransitionLevel,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    /// Monte Carlo frames per point; zero skips simulation.
    pub trials: u64,
    pub seed: u64,
    pub mode: ModeName,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            trials: 0,
            seed: 1,
            mode: ModeName::SinrLevel,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub gamma_db: Vec<f64>,
    pub beta_db: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            gamma_db: (0..=10).map(|i| 2.0 * i as f64).collect(),
            beta_db: vec![0.0, 3.0, 6.0],
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateCase {
    pub gamma_db: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterateSection {
    pub beta_db: f64,
    pub cases: Vec<IterateCase>,
}

impl Default for IterateSection {
    fn default() -> Self {
        let cases = [0.0, 10.0]
            .iter()
            .flat_map(|&gamma_db| {
                [3.0, 3.5, 4.0].map(|alpha| IterateCase { gamma_db, alpha })
            })
            .collect();
        IterateSection {
            beta_db: 6.0,
            cases,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationSection {
    pub gamma_db: Vec<f64>,
    pub cci: Vec<bool>,
    pub rate_bounds: [f64; 2],
    pub relay_bounds: [usize; 2],
    pub length_bounds: [f64; 2],
    pub rate_tolerance: f64,
    pub length_tolerance: f64,
    pub n_delta_cap: u32,
    pub keep_probability: f64,
    pub restarts: u32,
    pub seed: u64,
    pub min_distance: f64,
    pub max_steps: usize,
}

impl Default for OptimizationSection {
    fn default() -> Self {
        let o = SearchOptions::default();
        OptimizationSection {
            gamma_db: vec![0.0, 5.0, 10.0],
            cci: vec![false, true],
            rate_bounds: [o.rate_bounds.0, o.rate_bounds.1],
            relay_bounds: [o.relay_bounds.0, o.relay_bounds.1],
            length_bounds: [o.length_bounds.0, o.length_bounds.1],
            rate_tolerance: o.rate_tolerance,
            length_tolerance: o.length_tolerance,
            n_delta_cap: o.n_delta_cap,
            keep_probability: o.keep_probability,
            restarts: o.restarts,
            seed: o.seed,
            min_distance: barrage::optimizer::DEFAULT_MIN_DISTANCE,
            max_steps: o.max_steps,
        }
    }
}

impl OptimizationSection {
    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            rate_bounds: (self.rate_bounds[0], self.rate_bounds[1]),
            relay_bounds: (self.relay_bounds[0], self.relay_bounds[1]),
            length_bounds: (self.length_bounds[0], self.length_bounds[1]),
            rate_tolerance: self.rate_tolerance,
            length_tolerance: self.length_tolerance,
            n_delta_cap: self.n_delta_cap,
            keep_probability: self.keep_probability,
            restarts: self.restarts,
            seed: self.seed,
            max_steps: self.max_steps,
            ..SearchOptions::default()
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!(
            "cannot read scenario {}: {e}",
            path.display()
        )))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad scenario: {e}")))
    }

    pub fn topology(&self) -> Result<LineTopology, CliError> {
        let t = &self.topology;
        let topo = match &t.positions {
            Positions::Named(name) if name == "equally_spaced" => {
                LineTopology::equally_spaced(t.relays, t.length)?
            }
            Positions::Named(name) => {
                return Err(CliError::Usage(format!(
                    "topology.positions must be \"equally_spaced\" or a list, got {name:?}"
                )))
            }
            Positions::Explicit(x) => {
                if x.len() != t.relays {
                    return Err(CliError::Invalid(format!(
                        "topology.positions lists {} relays but topology.relays = {}",
                        x.len(),
                        t.relays
                    )));
                }
                LineTopology::new(t.length, x)?
            }
        };
        Ok(topo)
    }

    /// Linear SINR threshold; `beta_db` and `rate` are alternatives, 6 dB by default.
    pub fn beta(&self) -> Result<f64, CliError> {
        match (self.channel.beta_db, self.channel.rate) {
            (Some(_), Some(_)) => Err(CliError::Usage(
                "channel.beta_db and channel.rate are mutually exclusive".into(),
            )),
            (Some(db), None) => Ok(db_to_linear(db)),
            (None, Some(rate)) => Ok(rate_to_beta(rate)),
            (None, None) => Ok(db_to_linear(6.0)),
        }
    }

    pub fn params(&self) -> Result<ChannelParams, CliError> {
        let c = &self.channel;
        Ok(ChannelParams::new(db_to_linear(c.gamma_db), c.alpha, self.beta()?)?
            .with_min_distance(c.min_distance)?)
    }

    /// The typical CBR, with its interfering neighbors when CCI is enabled.
    pub fn cascade(&self, topology: LineTopology, params: ChannelParams) -> CascadeScenario {
        let mut sc = if self.cci.enabled {
            let mut sc = CascadeScenario::new(topology, params);
            if let Some(offsets) = &self.cci.offsets {
                sc.offsets = offsets.clone();
            }
            sc
        } else {
            CascadeScenario::isolated(topology, params)
        };
        sc.halt_on_success = self.cci.halt_on_success;
        sc
    }
}

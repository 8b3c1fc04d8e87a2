//! Run configuration: one TOML (or JSON) document with a section per concern.
//! Every reference-table parameter appears under its own name.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowOptions;
use crate::histogram::HistogramSpec;
use crate::ibm::{SimConfig, VanishPolicy};
use crate::initial::InitialCondition;
use crate::model::{max_energy_bound, AllometricParams, ModelError, ModelParams, WeightFunction};
use crate::pde::{DensityField, Grid, PdeError, SolveOptions};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub record_dt: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IbmSection {
    pub cap_b: f64,
    pub cap_d: f64,
    pub substep: f64,
    pub energy_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_ceiling: Option<f64>,
    pub max_individuals: usize,
    pub vanish_policy: VanishPolicy,
    pub replicas: usize,
}

impl Default for IbmSection {
    fn default() -> Self {
        let flow = FlowOptions::default();
        Self {
            cap_b: 0.1,
            cap_d: 2e4,
            substep: flow.substep,
            energy_floor: flow.energy_floor,
            energy_ceiling: None,
            max_individuals: 10_000_000,
            vanish_policy: VanishPolicy::Remove,
            replicas: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub cells_per_x0: usize,
    /// Right end of the grid; defaults to the energy bound over `[0, T]` plus `x0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_dt: Option<f64>,
    pub freeze_resource: bool,
}

impl Default for PdeSection {
    fn default() -> Self {
        Self {
            cells_per_x0: 100,
            x_max: None,
            dt: None,
            cfl_safety: 0.5,
            record_dt: None,
            freeze_resource: false,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: AllometricParams,
    #[serde(default = "WeightFunction::constant")]
    pub weight: WeightFunction,
    #[serde(default = "InitialCondition::reference")]
    pub initial: InitialCondition,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub ibm: IbmSection,
    #[serde(default)]
    pub pde: PdeSection,
    #[serde(default)]
    pub histogram: HistogramSpec,
}

impl Config {
    /// The reference parameter set with the given population scale and horizon.
    pub fn reference(k: u64, t: f64) -> Self {
        Self {
            model: AllometricParams::reference(),
            weight: WeightFunction::constant(),
            initial: InitialCondition::reference(),
            simulation: SimulationSection {
                k,
                t,
                seed: 0,
                record_dt: 1.0,
                snapshot_times: Vec::new(),
            },
            ibm: IbmSection::default(),
            pde: PdeSection::default(),
            histogram: HistogramSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: "<toml>".into(), message: e.to_string() })
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse { path: "<json>".into(), message: e.to_string() })
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: shown.clone(), source })?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if json { Self::from_json(&text) } else { Self::from_toml(&text) };
        parsed.map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: shown, message },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Compact JSON with fields in declaration order; the input to the config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes to JSON")
    }

    pub fn model_params(&self) -> Result<ModelParams, ConfigError> {
        Ok(ModelParams::new(self.model)?)
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let mut cfg = SimConfig::new(self.model_params()?, self.simulation.k, self.simulation.t);
        cfg.cap_b = self.ibm.cap_b;
        cfg.cap_d = self.ibm.cap_d;
        cfg.flow.substep = self.ibm.substep;
        cfg.flow.energy_floor = self.ibm.energy_floor;
        cfg.energy_ceiling = self.ibm.energy_ceiling;
        cfg.max_individuals = self.ibm.max_individuals;
        cfg.vanish_policy = self.ibm.vanish_policy;
        cfg.record_dt = self.simulation.record_dt;
        cfg.snapshot_times = self.simulation.snapshot_times.clone();
        cfg.histogram = self.histogram.clone();
        cfg.weight = self.weight;
        cfg.seed = self.simulation.seed;
        cfg.initial = self.initial.clone();
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn pde_grid(&self) -> Result<Grid, ConfigError> {
        let x_max = match self.pde.x_max {
            Some(x) => x,
            None => {
                let bound = max_energy_bound(&self.model, self.initial.max_energy(), self.simulation.t).map_err(|e| {
                    ConfigError::Invalid(format!("{e}; set [pde] x_max explicitly"))
                })?;
                bound + self.model.x0
            }
        };
        Ok(Grid::new(self.model.x0, self.pde.cells_per_x0, x_max)?)
    }

    pub fn pde_options(&self) -> SolveOptions {
        let mut opts = SolveOptions::new(self.simulation.t);
        opts.dt = self.pde.dt;
        opts.cfl_safety = self.pde.cfl_safety;
        opts.record_dt = self.pde.record_dt.unwrap_or(self.simulation.record_dt);
        opts.snapshot_times = self.simulation.snapshot_times.clone();
        opts.weight = self.weight;
        opts.freeze_resource = self.pde.freeze_resource;
        opts
    }

    /// Grid, discretized initial density and solver options.
    pub fn pde_setup(&self) -> Result<(ModelParams, Grid, DensityField, SolveOptions), ConfigError> {
        let p = self.model_params()?;
        let grid = self.pde_grid()?;
        let init = DensityField::from_initial(&grid, &self.initial, self.simulation.k as f64)?;
        Ok((p, grid, init, self.pde_options()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE: &str = r#"
[model]
alpha = 0.75
beta = -0.25
gamma = 0.75
delta = -0.25
C_alpha = 1.0
C_beta = 0.1
C_gamma = 2.0
C_delta = 0.05
x0 = 1.0
kappa = 5.0
chi = 200.0
R_in = 2.0
D = 0.275
R_max = 2.0

[initial]
mode = "density_u0"
x_min = 1.0
x_max = 5.0
R0 = 1.0

[simulation]
K = 100
T = 200.0
"#;

    #[test]
    fn parses_reference_keys() {
        let c = Config::from_toml(TABLE).unwrap();
        assert_eq!(c, Config::reference(100, 200.0));
        let sim = c.sim_config().unwrap();
        assert_eq!(sim.scale, 100);
        assert_eq!(c.pde_grid().unwrap().x_max(), 6.0);
    }

    #[test]
    fn json_is_accepted() {
        let c = Config::reference(50, 3.0);
        assert_eq!(Config::from_json(&c.canonical_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(
            Config::from_toml(&TABLE.replace("kappa = 5.0", "kappa = 5.0\nkapa = 1.0")),
            Err(ConfigError::Parse { .. })
        ));
        let c = Config::from_toml(&TABLE.replace("chi = 200.0", "chi = 0.5")).unwrap();
        assert!(matches!(c.sim_config(), Err(ConfigError::Model(_))));
        let c = Config::from_toml(&TABLE.replace("R0 = 1.0", "R0 = 3.0")).unwrap();
        assert!(matches!(c.sim_config(), Err(ConfigError::Invalid(_))));
    }

    fn arb_config() -> impl Strategy<Value = Config> {
        (
            (0.05f64..0.95, -2.0f64..1.0, 0.01f64..5.0, 0.0f64..1.0, 1u64..100_000, 0.1f64..500.0),
            (any::<u64>(), 0.01f64..10.0, prop::collection::vec(0.0f64..100.0, 0..4)),
            (prop::option::of(1.0f64..1e6), 10usize..400, prop::option::of(1e-5f64..1e-1), any::<bool>()),
            (0.0f64..1.0, 0.0f64..1.0, prop::bool::ANY),
        )
            .prop_map(|((alpha, delta, c_gamma, r0, k, t), (seed, rec, snaps), (ceil, cells, dt, freeze), (k1, k2, explicit))| {
                let mut c = Config::reference(k, t);
                c.model.alpha = alpha;
                c.model.gamma = alpha;
                c.model.delta = delta;
                c.model.c_gamma = c_gamma;
                c.weight = crate::model::make_weight(k1.min(k2), k1.max(k2)).unwrap();
                c.initial = if explicit {
                    InitialCondition::ExplicitList { energies: vec![0.5, 1.25, 3.0], r0 }
                } else {
                    InitialCondition::DensityU0 { x_min: 0.5, x_max: 4.0 + r0, r0 }
                };
                c.simulation.seed = seed;
                c.simulation.record_dt = rec;
                c.simulation.snapshot_times = snaps;
                c.ibm.energy_ceiling = ceil;
                c.ibm.vanish_policy = if freeze { VanishPolicy::Annihilate } else { VanishPolicy::Remove };
                c.pde.cells_per_x0 = cells;
                c.pde.dt = dt;
                c.pde.freeze_resource = freeze;
                c.histogram = HistogramSpec::uniform(0.0, 1.0 + t, cells).unwrap();
                c
            })
    }

    proptest! {
        #[test]
        fn toml_round_trip(c in arb_config()) {
            let text = c.to_toml();
            prop_assert_eq!(Config::from_toml(&text).unwrap(), c.clone());
            prop_assert_eq!(Config::from_json(&c.canonical_json()).unwrap(), c);
        }
    }
}

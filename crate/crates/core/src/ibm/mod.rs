//! Individual-based simulation of the renormalized process `(mu^K, R^K)`.
//!
//! Jumps are generated by thinning: candidate events arrive at dominating
//! rates and are accepted with probability `min(rate, cap) / bound`, with the
//! flow integrated exactly up to each candidate time. Two drivers share this
//! construction:
//!
//! * [`events::simulate_reference`] proposes at the flat caps
//!   `N * (cap_b + cap_d)` and integrates the flow between every pair of
//!   proposals. It is the literal algorithm and only usable for small runs.
//! * [`driver::simulate`] integrates the flow in short RK4 windows, derives a
//!   per-individual rate bound over each window from a comparison ODE, and
//!   thins candidates against those bounds using dense output. The capped
//!   intensities are the same, so both drivers have the same law.

pub mod driver;
pub mod ensemble;
pub mod events;

use rand::SeedableRng;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{guard_breach, FlowError, FlowOptions, GuardDirection, PopulationState, StateError};
use crate::histogram::{Histogram, HistogramSpec};
use crate::initial::{BumpDensity, InitialCondition, InitialError};
use crate::model::{max_energy_bound, ModelParams, WeightFunction};

pub use driver::{simulate, simulate_replica, simulate_replica_state};
pub use ensemble::{run_ensemble, run_ensemble_with};
pub use events::{apply_birth, apply_death, next_event, simulate_reference, EventKind, NextEvent};

/// The generator behind every replica stream.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Initial(#[from] InitialError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("population exceeded the cap of {limit} individuals at t = {time}")]
    PopulationCap { limit: usize, time: f64 },
    #[error("inconsistent event: {0}")]
    Logic(String),
}

/// What happens when an energy drops below the floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VanishPolicy {
    /// Remove that individual only and count it as vanished.
    #[default]
    Remove,
    /// Set the whole point measure to zero and continue with the resource alone.
    Annihilate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: ModelParams,
    pub scale: u64,
    pub t_end: f64,
    pub cap_b: f64,
    pub cap_d: f64,
    pub flow: FlowOptions,
    /// Explicit energy ceiling; defaults to ten times the analytic bound.
    pub energy_ceiling: Option<f64>,
    pub record_dt: f64,
    pub snapshot_times: Vec<f64>,
    pub histogram: HistogramSpec,
    pub weight: WeightFunction,
    pub seed: u64,
    pub initial: InitialCondition,
    pub max_individuals: usize,
    pub vanish_policy: VanishPolicy,
}

impl SimConfig {
    /// Defaults around a model: caps 0.1 / 2e4, unit record period, the
    /// reference initial bump.
    pub fn new(model: ModelParams, scale: u64, t_end: f64) -> Self {
        Self {
            model,
            scale,
            t_end,
            cap_b: 0.1,
            cap_d: 2e4,
            flow: FlowOptions::default(),
            energy_ceiling: None,
            record_dt: 1.0,
            snapshot_times: Vec::new(),
            histogram: HistogramSpec::default(),
            weight: WeightFunction::constant(),
            seed: 0,
            initial: InitialCondition::reference(),
            max_individuals: 10_000_000,
            vanish_policy: VanishPolicy::Remove,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.scale == 0 {
            return bad("K must be positive".into());
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("T must be positive, got {}", self.t_end));
        }
        if !(self.record_dt.is_finite() && self.record_dt > 0.0) {
            return bad(format!("record_dt must be positive, got {}", self.record_dt));
        }
        if !(self.cap_b > 0.0 && self.cap_d > 0.0 && self.cap_b.is_finite() && self.cap_d.is_finite()) {
            return bad(format!("rate caps must be positive and finite, got ({}, {})", self.cap_b, self.cap_d));
        }
        if !(self.flow.substep.is_finite() && self.flow.substep > 0.0) {
            return bad(format!("flow substep must be positive, got {}", self.flow.substep));
        }
        if !(self.flow.energy_floor >= 0.0) {
            return bad(format!("energy floor must be nonnegative, got {}", self.flow.energy_floor));
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return bad(format!("snapshot times must be nonnegative, got {t}"));
        }
        self.initial.validate()?;
        let r0 = self.initial.r0();
        if !(r0 >= 0.0 && r0 <= self.model.r_max()) {
            return bad(format!("R0 = {r0} outside [0, R_max = {}]", self.model.r_max()));
        }
        Ok(())
    }

    /// Flow options with the energy ceiling resolved.
    pub fn flow_options(&self) -> FlowOptions {
        let ceiling = self.energy_ceiling.unwrap_or_else(|| {
            max_energy_bound(self.model.rates(), self.initial.max_energy(), self.t_end)
                .map(|m| 10.0 * m)
                .unwrap_or(f64::INFINITY)
        });
        FlowOptions {
            energy_ceiling: ceiling,
            ..self.flow
        }
    }
}

/// Mixes a replica index into the master seed (SplitMix64 finalizer).
pub fn replica_seed(seed: u64, replica: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(replica))
}

pub fn replica_rng(seed: u64, replica: u64) -> SimRng {
    SimRng::seed_from_u64(replica_seed(seed, replica))
}

/// Initial population: `K` draws from the bump density, or the explicit list.
pub fn sample_initial<R: RngCore>(cfg: &SimConfig, rng: &mut R) -> Result<PopulationState, SimError> {
    cfg.initial.validate()?;
    let energies = match &cfg.initial {
        InitialCondition::DensityU0 { x_min, x_max, .. } => {
            let table = BumpDensity::new(*x_min, *x_max)?.sampler();
            (0..cfg.scale).map(|_| table.sample(rng.random::<f64>())).collect()
        }
        InitialCondition::ExplicitList { energies, .. } => energies.clone(),
    };
    Ok(PopulationState::new(energies, cfg.initial.r0(), cfg.scale)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardEvent {
    pub time: f64,
    pub id: u64,
    pub energy: f64,
    pub direction: GuardDirection,
    /// `"annihilated"` or `"truncated"`.
    pub action: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub births: u64,
    pub deaths: u64,
    pub b_clamps: u64,
    pub d_clamps: u64,
    /// Candidate events drawn (accepted or not).
    pub proposals: u64,
    /// Individuals removed at the energy floor.
    pub vanished: u64,
    /// Candidates whose capped rate exceeded the window bound (should stay 0).
    pub bound_overruns: u64,
    pub guard: Option<GuardEvent>,
}

impl EventCounts {
    pub fn truncated(&self) -> bool {
        self.guard.as_ref().is_some_and(|g| g.action == "truncated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub replica: u64,
    pub scale: u64,
    pub times: Vec<f64>,
    pub n: Vec<f64>,
    pub e: Vec<f64>,
    pub omega: Vec<f64>,
    pub r: Vec<f64>,
    pub events: EventCounts,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    fn new(replica: u64, scale: u64) -> Self {
        Self {
            replica,
            scale,
            times: Vec::new(),
            n: Vec::new(),
            e: Vec::new(),
            omega: Vec::new(),
            r: Vec::new(),
            events: EventCounts::default(),
            snapshots: Vec::new(),
        }
    }

    /// Value of a series at the recorded time closest to `t`.
    pub fn at(&self, series: &[f64], t: f64) -> Option<f64> {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        series.get(i).copied()
    }

    pub fn snapshot(&self, t: f64) -> Option<&Histogram> {
        self.snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|s| &s.histogram)
    }
}

/// A stopping point of the simulation clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Stop {
    pub time: f64,
    pub record: bool,
    pub snapshot: bool,
}

/// Record times `k * record_dt` (plus `t_end`) merged with snapshot times.
pub(crate) fn schedule(cfg: &SimConfig) -> Vec<Stop> {
    let tol = 1e-9 * cfg.record_dt.min(cfg.t_end);
    let count = (cfg.t_end / cfg.record_dt + 1e-9).floor() as usize;
    let mut stops: Vec<Stop> = (0..=count)
        .map(|k| Stop { time: (k as f64 * cfg.record_dt).min(cfg.t_end), record: true, snapshot: false })
        .collect();
    if cfg.t_end - stops[stops.len() - 1].time > tol {
        stops.push(Stop { time: cfg.t_end, record: true, snapshot: false });
    }
    for &t in &cfg.snapshot_times {
        if t > cfg.t_end + tol {
            continue;
        }
        match stops.iter_mut().find(|s| (s.time - t).abs() <= tol) {
            Some(s) => s.snapshot = true,
            None => stops.push(Stop { time: t, record: false, snapshot: true }),
        }
    }
    stops.sort_by(|a, b| a.time.total_cmp(&b.time));
    stops
}

pub(crate) fn record(traj: &mut Trajectory, cfg: &SimConfig, state: &PopulationState, stop: &Stop) {
    if stop.record {
        traj.times.push(stop.time);
        traj.n.push(state.n());
        traj.e.push(state.total_energy());
        traj.omega.push(state.weighted_total(&cfg.weight));
        traj.r.push(state.resource());
    }
    if stop.snapshot {
        traj.snapshots.push(Snapshot {
            time: stop.time,
            histogram: cfg.histogram.bin_energies(state.energies(), state.scale() as f64),
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GuardOutcome {
    Continue,
    Truncate,
}

/// Applies the vanish policy to every energy outside the guard band.
pub(crate) fn enforce_guards(
    cfg: &SimConfig,
    opts: &FlowOptions,
    state: &mut PopulationState,
    counts: &mut EventCounts,
) -> GuardOutcome {
    while let Some((slot, direction)) = guard_breach(state.energies(), opts) {
        let event = |action: &str| GuardEvent {
            time: state.time(),
            id: state.ids()[slot],
            energy: state.energies()[slot],
            direction,
            action: action.to_owned(),
        };
        match (cfg.vanish_policy, direction) {
            (VanishPolicy::Remove, GuardDirection::Vanish) => {
                state.remove_slot(slot);
                counts.vanished += 1;
            }
            (VanishPolicy::Remove, GuardDirection::Explode) => {
                counts.guard = Some(event("truncated"));
                return GuardOutcome::Truncate;
            }
            (VanishPolicy::Annihilate, _) => {
                let ev = event("annihilated");
                counts.guard.get_or_insert(ev);
                while !state.is_empty() {
                    state.remove_slot(state.len() - 1);
                }
            }
        }
    }
    GuardOutcome::Continue
}

/// `min(rate, cap)` and whether the cap was binding.
#[inline]
pub(crate) fn capped(rate: f64, cap: f64) -> (f64, bool) {
    if rate > cap {
        (cap, true)
    } else {
        (rate, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::BumpDensity;

    #[test]
    fn schedule_merges_snapshots() {
        let mut cfg = SimConfig::new(ModelParams::reference(), 10, 2.5);
        cfg.snapshot_times = vec![0.0, 1.25, 2.0, 9.0];
        let s = schedule(&cfg);
        let times: Vec<f64> = s.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.0, 1.0, 1.25, 2.0, 2.5]);
        assert!(s[0].snapshot && s[0].record);
        assert!(s[2].snapshot && !s[2].record);
        assert!(s[4].record && !s[4].snapshot);
    }

    #[test]
    fn replica_streams_differ() {
        assert_ne!(replica_seed(42, 0), replica_seed(42, 1));
        assert_ne!(replica_seed(42, 0), replica_seed(43, 0));
        assert_eq!(replica_seed(7, 3), replica_seed(7, 3));
    }

    #[test]
    fn explicit_initial_population() {
        let mut cfg = SimConfig::new(ModelParams::reference(), 3, 1.0);
        cfg.initial = InitialCondition::ExplicitList { energies: vec![1.0, 2.0, 3.0], r0: 1.0 };
        let s = sample_initial(&cfg, &mut replica_rng(0, 0)).unwrap();
        assert_eq!(s.energies(), &[1.0, 2.0, 3.0]);
        assert!((s.n() - 1.0).abs() < 1e-15);

        cfg.scale = 1;
        cfg.initial = InitialCondition::ExplicitList { energies: vec![], r0: 1.0 };
        assert!(sample_initial(&cfg, &mut replica_rng(0, 0)).unwrap().is_empty());

        cfg.initial = InitialCondition::ExplicitList { energies: vec![1.0, 0.0], r0: 1.0 };
        assert!(sample_initial(&cfg, &mut replica_rng(0, 0)).is_err());
    }

    #[test]
    fn bump_sample_mean() {
        let cfg = SimConfig::new(ModelParams::reference(), 10_000, 1.0);
        let s = sample_initial(&cfg, &mut replica_rng(11, 0)).unwrap();
        let u = BumpDensity::new(1.0, 5.0).unwrap();
        let mean = u.moment(|x| x);
        let var = u.moment(|x| (x - mean).powi(2));
        let se = (var / 1e4).sqrt();
        assert!((s.total_energy() - mean).abs() < 3.0 * se);
    }

    #[test]
    fn remove_policy_drops_only_vanished() {
        let cfg = SimConfig::new(ModelParams::reference(), 1, 1.0);
        let opts = cfg.flow_options();
        let mut s = PopulationState::new(vec![1.0, 2.0, 3.0], 1.0, 1).unwrap();
        s.set_energy(1, -1e-3);
        let mut c = EventCounts::default();
        assert_eq!(enforce_guards(&cfg, &opts, &mut s, &mut c), GuardOutcome::Continue);
        assert_eq!(s.len(), 2);
        assert_eq!(c.vanished, 1);

        let mut cfg = cfg;
        cfg.vanish_policy = VanishPolicy::Annihilate;
        s.set_energy(0, 0.0);
        assert_eq!(enforce_guards(&cfg, &opts, &mut s, &mut c), GuardOutcome::Continue);
        assert!(s.is_empty());
        assert_eq!(c.guard.as_ref().unwrap().action, "annihilated");
    }

    #[test]
    fn default_ceiling_uses_energy_bound() {
        let cfg = SimConfig::new(ModelParams::reference(), 1, 200.0);
        assert_eq!(cfg.flow_options().energy_ceiling, 50.0);
    }
}

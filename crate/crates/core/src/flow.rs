//! Population state and the deterministic energy/resource flow between jumps.
//!
//! Between two jumps every energy follows `x' = g(x, R)` and the resource
//! follows `R' = D (R_in - R) - chi phi(R) <mu^K, psi>`. The coupling runs only
//! through the aggregate `sum psi(x_i) / K`, so one right-hand-side evaluation
//! costs O(N).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelParams, WeightFunction};

const DEAD: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("energy #{index} must be positive and finite, got {value}")]
    Energy { index: usize, value: f64 },
    #[error("resource must be finite and nonnegative, got {0}")]
    Resource(f64),
    #[error("scale K must be positive")]
    Scale,
    #[error("population exceeds the slot capacity of {0} individuals")]
    Capacity(usize),
}

/// The renormalized point measure `mu^K` (one Dirac of mass `1/K` per alive
/// individual) together with the resource level.
///
/// Energies live in a flat array with swap-remove deletion; stable external
/// ids map to slots through an indirection table.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    energies: Vec<f64>,
    ids: Vec<u64>,
    slot_of: Vec<u32>,
    resource: f64,
    scale: u64,
    time: f64,
}

impl PopulationState {
    pub fn new(energies: Vec<f64>, resource: f64, scale: u64) -> Result<Self, StateError> {
        if scale == 0 {
            return Err(StateError::Scale);
        }
        if !(resource.is_finite() && resource >= 0.0) {
            return Err(StateError::Resource(resource));
        }
        if energies.len() >= DEAD as usize {
            return Err(StateError::Capacity(DEAD as usize - 1));
        }
        if let Some((index, &value)) = energies
            .iter()
            .enumerate()
            .find(|(_, &x)| !(x.is_finite() && x > 0.0))
        {
            return Err(StateError::Energy { index, value });
        }
        let n = energies.len();
        Ok(Self {
            energies,
            ids: (0..n as u64).collect(),
            slot_of: (0..n as u32).collect(),
            resource,
            scale,
            time: 0.0,
        })
    }

    pub fn empty(resource: f64, scale: u64) -> Result<Self, StateError> {
        Self::new(Vec::new(), resource, scale)
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub(crate) fn energies_mut(&mut self) -> &mut [f64] {
        &mut self.energies
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn slot(&self, id: u64) -> Option<usize> {
        match self.slot_of.get(id as usize) {
            Some(&s) if s != DEAD => Some(s as usize),
            _ => None,
        }
    }

    pub fn energy(&self, id: u64) -> Option<f64> {
        self.slot(id).map(|s| self.energies[s])
    }

    /// Adds an individual and returns its fresh id. Panics past `u32::MAX - 1`
    /// alive individuals, far beyond any configurable population cap.
    pub fn push(&mut self, energy: f64) -> u64 {
        let id = self.slot_of.len() as u64;
        let slot = self.energies.len();
        assert!(slot < DEAD as usize, "population slot capacity exhausted");
        self.energies.push(energy);
        self.ids.push(id);
        self.slot_of.push(slot as u32);
        id
    }

    /// Removes the individual at `slot`, returning its id and energy.
    pub fn remove_slot(&mut self, slot: usize) -> (u64, f64) {
        let id = self.ids[slot];
        let energy = self.energies.swap_remove(slot);
        self.ids.swap_remove(slot);
        if slot < self.ids.len() {
            self.slot_of[self.ids[slot] as usize] = slot as u32;
        }
        self.slot_of[id as usize] = DEAD;
        (id, energy)
    }

    pub fn remove(&mut self, id: u64) -> Option<f64> {
        self.slot(id).map(|s| self.remove_slot(s).1)
    }

    pub(crate) fn set_energy(&mut self, slot: usize, energy: f64) {
        self.energies[slot] = energy;
    }

    pub fn resource(&self) -> f64 {
        self.resource
    }

    pub fn set_resource(&mut self, r: f64) {
        self.resource = r;
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    /// `<mu^K, phi>`.
    pub fn pair(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.energies.iter().fold(0.0, |acc, &x| acc + phi(x)) / self.scale as f64
    }

    /// `N^K = <mu^K, 1>`.
    pub fn n(&self) -> f64 {
        self.len() as f64 / self.scale as f64
    }

    /// `E^K = <mu^K, Id>`.
    pub fn total_energy(&self) -> f64 {
        self.energies.iter().fold(0.0, |acc, &x| acc + x) / self.scale as f64
    }

    /// `Omega^K = <mu^K, w>`.
    pub fn weighted_total(&self, w: &WeightFunction) -> f64 {
        self.pair(|x| w.eval(x))
    }
}

/// `rho(mu^K, R)` for the current state.
pub fn resource_derivative(p: &ModelParams, state: &PopulationState) -> f64 {
    let capacity = state.pair(|x| p.intake_capacity(x));
    p.resource_drift(state.resource(), capacity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Upper bound on the RK4 step; windows are split into equal substeps.
    pub substep: f64,
    pub energy_floor: f64,
    pub energy_ceiling: f64,
    /// Pin the resource at its current value (used by closed-form tests).
    pub freeze_resource: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            substep: 1e-2,
            energy_floor: 1e-12,
            energy_ceiling: f64::INFINITY,
            freeze_resource: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardDirection {
    Vanish,
    Explode,
}

impl std::fmt::Display for GuardDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GuardDirection::Vanish => "vanish",
            GuardDirection::Explode => "explode",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("individual {id} hit the {direction} guard with energy {energy:e} at t = {time}")]
    VanishOrExplode {
        id: u64,
        energy: f64,
        direction: GuardDirection,
        time: f64,
    },
    #[error("invalid flow step: {0}")]
    InvalidStep(String),
}

/// First energy outside `[floor, ceiling]`, if any. NaN counts as vanished.
pub fn guard_breach(energies: &[f64], opts: &FlowOptions) -> Option<(usize, GuardDirection)> {
    energies.iter().enumerate().find_map(|(i, &x)| {
        if !(x >= opts.energy_floor) {
            Some((i, GuardDirection::Vanish))
        } else if x > opts.energy_ceiling {
            Some((i, GuardDirection::Explode))
        } else {
            None
        }
    })
}

/// Classical RK4 for the coupled system with reusable stage buffers.
///
/// The stages of the last step are kept so that [`Rk4::dense`] can evaluate
/// the standard third-order continuous extension anywhere inside the step.
#[derive(Debug, Default, Clone)]
pub struct Rk4 {
    k: [Vec<f64>; 4],
    kr: [f64; 4],
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes `g(x_i, R)` into `out` and returns the resource slope.
    fn slopes(
        p: &ModelParams,
        x: &[f64],
        r: f64,
        inv_k: f64,
        freeze: bool,
        out: &mut [f64],
    ) -> f64 {
        let r = r.clamp(0.0, p.r_max());
        let phi = p.response(r);
        let mut capacity = 0.0;
        for (o, &xi) in out.iter_mut().zip(x) {
            let (g, c) = p.growth_and_capacity(xi.max(0.0), phi);
            *o = g;
            capacity += c;
        }
        if freeze {
            0.0
        } else {
            p.resource_drift(r, capacity * inv_k)
        }
    }

    /// Computes the four stages of a step of size `h` from `(x, r)`.
    pub fn stages(&mut self, p: &ModelParams, x: &[f64], r: f64, inv_k: f64, h: f64, freeze: bool) {
        let n = x.len();
        for k in &mut self.k {
            k.resize(n, 0.0);
        }
        self.stage.resize(n, 0.0);
        let [k1, k2, k3, k4] = &mut self.k;

        self.kr[0] = Self::slopes(p, x, r, inv_k, freeze, k1);
        for ((s, &xi), &d) in self.stage.iter_mut().zip(x).zip(k1.iter()) {
            *s = xi + 0.5 * h * d;
        }
        self.kr[1] = Self::slopes(p, &self.stage, r + 0.5 * h * self.kr[0], inv_k, freeze, k2);
        for ((s, &xi), &d) in self.stage.iter_mut().zip(x).zip(k2.iter()) {
            *s = xi + 0.5 * h * d;
        }
        self.kr[2] = Self::slopes(p, &self.stage, r + 0.5 * h * self.kr[1], inv_k, freeze, k3);
        for ((s, &xi), &d) in self.stage.iter_mut().zip(x).zip(k3.iter()) {
            *s = xi + h * d;
        }
        self.kr[3] = Self::slopes(p, &self.stage, r + h * self.kr[2], inv_k, freeze, k4);
    }

    /// Overwrites `x` with the end-of-step energies and returns the end resource.
    pub fn finish(&self, x: &mut [f64], r: f64, h: f64) -> f64 {
        let [k1, k2, k3, k4] = &self.k;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        let kr = &self.kr;
        r + h / 6.0 * (kr[0] + 2.0 * (kr[1] + kr[2]) + kr[3])
    }

    #[inline]
    fn dense_weights(theta: f64) -> [f64; 4] {
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let mid = t2 - 2.0 / 3.0 * t3;
        [theta - 1.5 * t2 + 2.0 / 3.0 * t3, mid, mid, -0.5 * t2 + 2.0 / 3.0 * t3]
    }

    /// Energy of slot `i` at fraction `theta` of the last step started from `x_start`.
    #[inline]
    pub fn dense(&self, i: usize, x_start: f64, h: f64, theta: f64) -> f64 {
        let w = Self::dense_weights(theta);
        x_start
            + h * (w[0] * self.k[0][i] + w[1] * self.k[1][i] + w[2] * self.k[2][i] + w[3] * self.k[3][i])
    }

    /// Minimum and maximum of slot `i`'s dense output over the whole step.
    pub fn dense_range(&self, i: usize, x_start: f64, h: f64) -> (f64, f64) {
        let [k1, k2, k3, k4] = [self.k[0][i], self.k[1][i], self.k[2][i], self.k[3][i]];
        let end = self.dense(i, x_start, h, 1.0);
        let (mut lo, mut hi) = (x_start.min(end), x_start.max(end));
        // d/dtheta of the continuous extension is quadratic in theta.
        let a = 2.0 * (k1 - k2 - k3 + k4);
        let b = -3.0 * k1 + 2.0 * (k2 + k3) - k4;
        let c = k1;
        let mut visit = |theta: f64| {
            if theta > 0.0 && theta < 1.0 {
                let x = self.dense(i, x_start, h, theta);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        };
        if a.abs() < 1e-300 {
            if b != 0.0 {
                visit(-c / b);
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                visit((-b - sq) / (2.0 * a));
                visit((-b + sq) / (2.0 * a));
            }
        }
        (lo, hi)
    }

    pub fn dense_resource(&self, r_start: f64, h: f64, theta: f64) -> f64 {
        let w = Self::dense_weights(theta);
        r_start + h * (w[0] * self.kr[0] + w[1] * self.kr[1] + w[2] * self.kr[2] + w[3] * self.kr[3])
    }

    /// Overwrites `x` with the dense-output state at `theta` and returns the resource.
    pub fn dense_all(&self, x: &mut [f64], r_start: f64, h: f64, theta: f64) -> f64 {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = self.dense(i, *xi, h, theta);
        }
        self.dense_resource(r_start, h, theta)
    }
}

/// Advances `state` by `dt` in equal RK4 substeps no longer than
/// `opts.substep`, clamping the resource into `[0, R_max]` after each one.
///
/// On a guard breach the state is left at the end of the offending substep
/// (time updated accordingly) so the caller can remove the culprits and
/// resume for the remaining time.
pub fn integrate_flow(
    p: &ModelParams,
    state: &mut PopulationState,
    dt: f64,
    opts: &FlowOptions,
) -> Result<(), FlowError> {
    let mut rk = Rk4::new();
    integrate_flow_with(p, state, dt, opts, &mut rk)
}

pub fn integrate_flow_with(
    p: &ModelParams,
    state: &mut PopulationState,
    dt: f64,
    opts: &FlowOptions,
    rk: &mut Rk4,
) -> Result<(), FlowError> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(FlowError::InvalidStep(format!("dt must be finite and nonnegative, got {dt}")));
    }
    if !(opts.substep.is_finite() && opts.substep > 0.0) {
        return Err(FlowError::InvalidStep(format!("substep must be positive, got {}", opts.substep)));
    }
    if dt == 0.0 {
        return Ok(());
    }
    let steps = (dt / opts.substep).ceil().max(1.0) as usize;
    let h = dt / steps as f64;
    let inv_k = 1.0 / state.scale() as f64;
    let t0 = state.time();
    for step in 1..=steps {
        let r = state.resource();
        rk.stages(p, state.energies(), r, inv_k, h, opts.freeze_resource);
        let r1 = rk.finish(state.energies_mut(), r, h);
        if !opts.freeze_resource {
            state.set_resource(r1.clamp(0.0, p.r_max()));
        }
        state.set_time(if step == steps { t0 + dt } else { t0 + step as f64 * h });
        if let Some((slot, direction)) = guard_breach(state.energies(), opts) {
            return Err(FlowError::VanishOrExplode {
                id: state.ids()[slot],
                energy: state.energies()[slot],
                direction,
                time: state.time(),
            });
        }
    }
    Ok(())
}

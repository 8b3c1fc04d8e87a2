//! The deterministic large-population limit: transport of an energy density
//! with nonlocal births, coupled to the chemostat resource.
//!
//! Nodes sit at `x_j = j dx` for `j = 1..=J` with `x0 = m dx`, so the birth
//! shift `x -> x + x0` maps nodes onto nodes. Node `j` stands for the cell
//! `[x_j - dx/2, x_j + dx/2)` and carries mass `u_j dx`. Transport is
//! first-order upwind on the flux `g u`, time stepping is explicit Euler, and
//! newborn mass enters as a point source at the `x0` node.
//!
//! Below the first face `dx/2` the grid cannot follow characteristics that
//! reach `x = 0` in finite time (`alpha < 1`). Mass crossing that face is
//! carried by point parcels moving along the exact flow until they hit the
//! energy floor or climb back onto the grid.

mod residual;

pub use residual::{balance_residual, jump_residual, weak_form_integrand, weak_form_residual};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{Histogram, HistogramSpec};
use crate::initial::{BumpDensity, InitialCondition, InitialError};
use crate::model::{ModelError, ModelParams, Pow, WeightFunction};

/// Total mass beyond which a solve is declared divergent.
pub const MASS_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("CFL violated at t = {time}: dt = {dt} but max |g| = {max_speed} requires dt <= {required}")]
    Cfl {
        dt: f64,
        required: f64,
        max_speed: f64,
        time: f64,
    },
    #[error("solution diverged: total mass {mass:e} at t = {time}")]
    Divergence { mass: f64, time: f64 },
    #[error("initial density: {0}")]
    Support(String),
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Initial(#[from] InitialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dx: f64,
    /// Nodes per birth transfer `x0`.
    shift: usize,
    len: usize,
}

impl Grid {
    /// `cells_per_x0` nodes per `x0`, extended until the last node reaches `x_max`.
    pub fn new(x0: f64, cells_per_x0: usize, x_max: f64) -> Result<Self, PdeError> {
        if cells_per_x0 == 0 {
            return Err(PdeError::Grid("need at least one cell per x0".into()));
        }
        if !(x0.is_finite() && x0 > 0.0) {
            return Err(PdeError::Grid(format!("x0 must be positive, got {x0}")));
        }
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(PdeError::Grid(format!("x_max_grid must be positive, got {x_max}")));
        }
        let dx = x0 / cells_per_x0 as f64;
        let len = ((x_max / dx) - 1e-9).ceil().max(1.0);
        if len > 5e7 {
            return Err(PdeError::Grid(format!("{len} nodes is too many")));
        }
        Ok(Self { dx, shift: cells_per_x0, len: len as usize })
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Energy at 0-based node index `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.len - 1)
    }

    pub fn x0(&self) -> f64 {
        self.shift as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.x(i))
    }

    /// Index of the node at `x0`, if it lies on the grid.
    pub fn birth_node(&self) -> Option<usize> {
        (self.shift <= self.len).then(|| self.shift - 1)
    }

    /// Same domain with `dx` halved.
    pub fn refined(&self) -> Self {
        Self { dx: self.dx / 2.0, shift: 2 * self.shift, len: 2 * self.len }
    }
}

/// Energy below which boundary-layer parcels are dropped.
pub const LAYER_FLOOR: f64 = 1e-12;

/// Parcels lighter than this are dropped and counted as vanished, and grid
/// values below it are flushed to zero, which keeps extinct tails out of
/// subnormal arithmetic.
pub const NEGLIGIBLE_MASS: f64 = 1e-200;

/// A point mass in the boundary layer `(0, dx/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parcel {
    pub x: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub u: Vec<f64>,
    pub layer: Vec<Parcel>,
    pub r: f64,
    pub time: f64,
}

impl DensityField {
    pub fn zeros(grid: &Grid, r: f64) -> Self {
        Self { u: vec![0.0; grid.len()], layer: Vec::new(), r, time: 0.0 }
    }

    /// Samples `density` at the nodes (cell midpoints) and rescales the
    /// result to total mass `mass`.
    pub fn from_density(
        grid: &Grid,
        density: impl Fn(f64) -> f64,
        mass: f64,
        r: f64,
    ) -> Result<Self, PdeError> {
        let mut u: Vec<f64> = grid.nodes().map(density).collect();
        if let Some(v) = u.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(PdeError::Support(format!("density value {v} is not a nonnegative number")));
        }
        let total: f64 = u.iter().sum::<f64>() * grid.dx();
        if !(total > 0.0) {
            return Err(PdeError::Support("density has no mass on the grid nodes".into()));
        }
        let scale = mass / total;
        u.iter_mut().for_each(|v| *v *= scale);
        Ok(Self { u, layer: Vec::new(), r, time: 0.0 })
    }

    pub fn from_bump(grid: &Grid, bump: &BumpDensity, mass: f64, r: f64) -> Result<Self, PdeError> {
        let (_, hi) = bump.support();
        if hi > grid.x_max() + 0.5 * grid.dx() {
            return Err(PdeError::Support(format!(
                "support ends at {hi}, beyond the grid edge {}",
                grid.x_max()
            )));
        }
        Self::from_density(grid, |x| bump.density(x), mass, r)
    }

    /// Each energy deposits mass `1 / scale` into the cell containing it.
    pub fn from_energies(grid: &Grid, energies: &[f64], scale: f64, r: f64) -> Result<Self, PdeError> {
        let mut field = Self::zeros(grid, r);
        let dx = grid.dx();
        for &x in energies {
            let i = ((x / dx).round() as usize).max(1) - 1;
            if !(x > 0.0) || i >= grid.len() {
                return Err(PdeError::Support(format!("energy {x} is off the grid")));
            }
            field.u[i] += 1.0 / (scale * dx);
        }
        Ok(field)
    }

    /// Discretizes an initial condition; explicit lists use mass `1 / scale` per entry.
    pub fn from_initial(grid: &Grid, ic: &InitialCondition, scale: f64) -> Result<Self, PdeError> {
        ic.validate()?;
        match ic {
            InitialCondition::DensityU0 { x_min, x_max, r0 } => {
                Self::from_bump(grid, &BumpDensity::new(*x_min, *x_max)?, 1.0, *r0)
            }
            InitialCondition::ExplicitList { energies, r0 } => {
                Self::from_energies(grid, energies, scale, *r0)
            }
        }
    }

    /// `sum_j f(x_j) u_j dx` plus the boundary-layer parcels.
    pub fn pair(&self, grid: &Grid, f: impl Fn(f64) -> f64) -> f64 {
        grid_pair(grid, &self.u, &f) + layer_pair(&self.layer, &f)
    }

    pub fn mass(&self, grid: &Grid) -> f64 {
        self.u.iter().sum::<f64>() * grid.dx() + self.layer_mass()
    }

    pub fn layer_mass(&self) -> f64 {
        self.layer.iter().map(|q| q.mass).sum()
    }

    pub fn energy(&self, grid: &Grid) -> f64 {
        self.pair(grid, |x| x)
    }
}

fn grid_pair(grid: &Grid, u: &[f64], f: &impl Fn(f64) -> f64) -> f64 {
    u.iter().enumerate().map(|(i, &v)| f(grid.x(i)) * v).sum::<f64>() * grid.dx()
}

fn layer_pair(layer: &[Parcel], f: &impl Fn(f64) -> f64) -> f64 {
    layer.iter().map(|q| f(q.x) * q.mass).sum()
}

/// Bookkeeping accumulated over steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PdeCounters {
    pub steps: u64,
    /// Node updates that went negative and were reset to zero.
    pub clip_events: u64,
    pub clipped_mass: f64,
    /// Mass that crossed the first face into the boundary layer.
    pub left_outflow: f64,
    /// Layer mass that reached the energy floor.
    pub layer_vanished: f64,
    /// Mass that left through the right edge of the grid.
    pub right_outflow: f64,
    pub resource_clamps: u64,
    /// Largest `dt max|g| / dx` seen.
    pub max_courant: f64,
}

/// Node-wise rate tables for one model on one grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    model: ModelParams,
    grid: Grid,
    freeze_resource: bool,
    birth: Vec<f64>,
    death: Vec<f64>,
    /// `b(x_j + x0)`, zero where `x_j + x0` is off the grid.
    birth_shifted: Vec<f64>,
    maintenance: Vec<f64>,
    capacity: Vec<f64>,
    speed: Vec<f64>,
    flux: Vec<f64>,
    /// `x -> x^(1 - alpha)` and back, when the flow is linear in that coordinate.
    straighten: Option<(Pow, Pow)>,
}

impl Stepper {
    pub fn new(p: &ModelParams, grid: Grid, freeze_resource: bool) -> Self {
        let table = |f: &dyn Fn(f64) -> f64| grid.nodes().map(f).collect::<Vec<f64>>();
        let birth = table(&|x| p.birth_rate(x));
        let m = grid.shift();
        let birth_shifted = (0..grid.len())
            .map(|i| if i + m < grid.len() { birth[i + m] } else { 0.0 })
            .collect();
        Self {
            model: *p,
            grid,
            freeze_resource,
            death: table(&|x| p.death_rate(x)),
            maintenance: table(&|x| p.maintenance(x)),
            capacity: table(&|x| p.intake_capacity(x)),
            birth,
            birth_shifted,
            speed: vec![0.0; grid.len()],
            flux: vec![0.0; grid.len() + 1],
            straighten: (p.growth_bound_coefficient().is_some() && p.rates().alpha < 1.0).then(|| {
                let e = 1.0 - p.rates().alpha;
                (Pow::new(e), Pow::new(1.0 / e))
            }),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Largest step keeping every node update a convex combination for any
    /// resource level in `[0, R_max]`.
    pub fn stable_dt(&self) -> f64 {
        let dx = self.grid.dx();
        (0..self.grid.len())
            .map(|i| {
                let speed = self.model.growth_bound(self.grid.x(i));
                1.0 / (speed / dx + self.birth[i] + self.death[i])
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Newborn mass flux `sum_j b(x_j) u_j dx`.
    pub fn birth_flux(&self, u: &[f64]) -> f64 {
        self.birth.iter().zip(u).map(|(b, v)| b * v).sum::<f64>() * self.grid.dx()
    }

    /// `<u, psi>`, boundary layer included.
    pub fn uptake_density(&self, field: &DensityField) -> f64 {
        self.capacity.iter().zip(&field.u).map(|(c, v)| c * v).sum::<f64>() * self.grid.dx()
            + layer_pair(&field.layer, &|x| self.model.intake_capacity(x))
    }

    /// `<u, l + d Id>`, the rate at which biomass is burnt or lost to deaths.
    pub fn loss_density(&self, field: &DensityField) -> f64 {
        let u = &field.u;
        let grid = (0..u.len())
            .map(|i| (self.maintenance[i] + self.death[i] * self.grid.x(i)) * u[i])
            .sum::<f64>()
            * self.grid.dx();
        let p = &self.model;
        grid + layer_pair(&field.layer, &|x| p.maintenance(x) + p.death_rate(x) * x)
    }

    /// Moves one parcel along the flow for `dt` with the resource held at `r`.
    /// Returns `None` once it reaches the floor.
    fn advect_parcel(&self, x: f64, r: f64, dt: f64) -> Option<f64> {
        let p = &self.model;
        let a = p.rates();
        let next = match &self.straighten {
            // Shared exponent: x^(1 - alpha) moves linearly in time.
            Some((to_y, from_y)) => {
                let e = 1.0 - a.alpha;
                let slope = p.response(r) * a.c_gamma - a.c_alpha;
                let y = to_y.eval(x) + e * slope * dt;
                if y > 0.0 {
                    from_y.eval(y)
                } else {
                    0.0
                }
            }
            None => x + dt * p.growth(x, r),
        };
        (next > LAYER_FLOOR).then_some(next)
    }

    /// One explicit Euler step of size `dt`.
    pub fn step(&mut self, field: &mut DensityField, dt: f64, counters: &mut PdeCounters) -> Result<(), PdeError> {
        let p = &self.model;
        let n = self.grid.len();
        let dx = self.grid.dx();
        let m = self.grid.shift();
        if field.u.len() != n {
            return Err(PdeError::Grid(format!("field has {} nodes, grid has {n}", field.u.len())));
        }
        let r_old = field.r;
        let response = p.response(r_old);
        let mut max_speed = 0.0f64;
        for i in 0..n {
            let g = response * self.capacity[i] - self.maintenance[i];
            self.speed[i] = g;
            max_speed = max_speed.max(g.abs());
        }
        let courant = dt * max_speed / dx;
        if courant > 1.0 + 1e-12 {
            return Err(PdeError::Cfl { dt, required: dx / max_speed, max_speed, time: field.time });
        }
        counters.max_courant = counters.max_courant.max(courant);

        let newborn = self.birth_flux(&field.u);
        let uptake = self.uptake_density(field);
        let u = &mut field.u;
        let (g, flux) = (&self.speed, &mut self.flux);
        flux[0] = g[0].min(0.0) * u[0];
        for k in 1..n {
            flux[k] = g[k - 1].max(0.0) * u[k - 1] + g[k].min(0.0) * u[k];
        }
        flux[n] = g[n - 1].max(0.0) * u[n - 1];

        let ratio = dt / dx;
        // Ascending order: u[i + m] is still the old value when node i is updated.
        for i in 0..n {
            let gain = if i + m < n { self.birth_shifted[i] * u[i + m] } else { 0.0 };
            u[i] += -ratio * (flux[i + 1] - flux[i]) + dt * (gain - (self.birth[i] + self.death[i]) * u[i]);
        }
        if let Some(j) = self.grid.birth_node() {
            u[j] += dt * newborn / dx;
        }
        counters.right_outflow += dt * flux[n];

        let face = 0.5 * dx;
        let mut layer = std::mem::take(&mut field.layer);
        layer.retain_mut(|q| {
            q.mass *= (-dt * p.death_rate(q.x)).exp();
            match self.advect_parcel(q.x, r_old, dt).filter(|_| q.mass >= NEGLIGIBLE_MASS) {
                None => {
                    counters.layer_vanished += q.mass;
                    false
                }
                Some(x) if x >= face => {
                    field.u[0] += q.mass / dx;
                    false
                }
                Some(x) => {
                    q.x = x;
                    true
                }
            }
        });
        let entering = -dt * self.flux[0];
        if entering > 0.0 {
            counters.left_outflow += entering;
            if entering >= NEGLIGIBLE_MASS {
                layer.push(Parcel { x: face, mass: entering });
            } else {
                counters.layer_vanished += entering;
            }
        }
        field.layer = layer;
        let u = &mut field.u;

        let mut mass = 0.0;
        for v in u.iter_mut() {
            if *v < 0.0 {
                counters.clip_events += 1;
                counters.clipped_mass -= *v * dx;
                *v = 0.0;
            } else if *v < NEGLIGIBLE_MASS {
                *v = 0.0;
            }
            mass += *v;
        }
        mass = mass * dx + field.layer_mass();
        let time = field.time + dt;
        if !(mass.is_finite() && mass <= MASS_LIMIT) {
            return Err(PdeError::Divergence { mass, time });
        }

        if !self.freeze_resource {
            let r = field.r + dt * p.resource_drift(field.r, uptake);
            let clamped = r.clamp(0.0, p.r_max());
            if clamped != r {
                counters.resource_clamps += 1;
            }
            field.r = clamped;
        }
        field.time = time;
        counters.steps += 1;
        Ok(())
    }
}

/// Advances a copy of `field` by one step.
pub fn pde_step(
    p: &ModelParams,
    grid: &Grid,
    field: &DensityField,
    dt: f64,
) -> Result<(DensityField, PdeCounters), PdeError> {
    let mut stepper = Stepper::new(p, *grid, false);
    let mut next = field.clone();
    let mut counters = PdeCounters::default();
    stepper.step(&mut next, dt, &mut counters)?;
    Ok((next, counters))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub t_end: f64,
    /// Fixed step; `None` picks `cfl_safety * stable_dt`.
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    pub record_dt: f64,
    pub snapshot_times: Vec<f64>,
    pub weight: WeightFunction,
    pub freeze_resource: bool,
    /// Keep the full density at every record time.
    pub keep_frames: bool,
}

impl SolveOptions {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            dt: None,
            cfl_safety: 0.5,
            record_dt: 1.0,
            snapshot_times: Vec::new(),
            weight: WeightFunction::constant(),
            freeze_resource: false,
            keep_frames: false,
        }
    }

    fn validate(&self) -> Result<(), PdeError> {
        let bad = |m: String| Err(PdeError::Options(m));
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("T must be positive, got {}", self.t_end));
        }
        if !(self.record_dt.is_finite() && self.record_dt > 0.0) {
            return bad(format!("record_dt must be positive, got {}", self.record_dt));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return bad(format!("dt must be positive, got {dt}"));
            }
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return bad(format!("snapshot times must be nonnegative, got {t}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFrame {
    pub time: f64,
    pub r: f64,
    pub u: Vec<f64>,
    pub layer: Vec<Parcel>,
}

impl DensityFrame {
    fn of(field: &DensityField, time: f64) -> Self {
        Self { time, r: field.r, u: field.u.clone(), layer: field.layer.clone() }
    }

    /// Histogram of the grid density and the boundary-layer parcels.
    pub fn histogram(&self, grid: &Grid, spec: &HistogramSpec) -> Histogram {
        let mut h = density_histogram(grid, &self.u, spec);
        for q in &self.layer {
            match spec.bin_of(q.x) {
                Some(k) => h.mass[k] += q.mass,
                None => h.outside += q.mass,
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory {
    pub model: ModelParams,
    pub weight: WeightFunction,
    pub grid: Grid,
    pub dt: f64,
    pub times: Vec<f64>,
    pub n: Vec<f64>,
    pub e: Vec<f64>,
    pub omega: Vec<f64>,
    pub r: Vec<f64>,
    /// `renewal(R) - chi <u, l + d Id>`, the exact rate of change of `R + chi E`.
    pub biomass_drift: Vec<f64>,
    pub birth_flux: Vec<f64>,
    /// Signed jump-condition residual at each record time; empty when the
    /// nodes around `x0` are not on the grid.
    pub jump: Vec<f64>,
    pub snapshots: Vec<DensityFrame>,
    pub frames: Vec<DensityFrame>,
    pub counters: PdeCounters,
}

impl DensityTrajectory {
    pub fn snapshot(&self, t: f64) -> Option<&DensityFrame> {
        let tol = 0.5 * self.dt.max(1e-12);
        self.snapshots.iter().find(|s| (s.time - t).abs() <= tol)
    }

    /// Linear interpolation of a recorded series at time `t`.
    pub fn interpolate(&self, series: &[f64], t: f64) -> Option<f64> {
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        if t < first - 1e-9 || t > last + 1e-9 {
            return None;
        }
        let j = self.times.partition_point(|&s| s < t);
        if j == 0 {
            return series.first().copied();
        }
        if j >= self.times.len() {
            return series.last().copied();
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        Some(series[j - 1] + w * (series[j] - series[j - 1]))
    }

    /// Fraction of the initial mass that escaped through the right edge.
    pub fn right_outflow_fraction(&self) -> f64 {
        match self.n.first() {
            Some(&n0) if n0 > 0.0 => self.counters.right_outflow / n0,
            _ => 0.0,
        }
    }
}

/// Overlap-exact histogram of a nodal density: cell `[x_j - dx/2, x_j + dx/2)`
/// with mass `u_j dx` is spread over the bins it intersects.
pub fn density_histogram(grid: &Grid, u: &[f64], spec: &HistogramSpec) -> Histogram {
    let mut h = spec.empty();
    let edges = spec.edges();
    let dx = grid.dx();
    for (i, &v) in u.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let (a, b) = (grid.x(i) - 0.5 * dx, grid.x(i) + 0.5 * dx);
        let mass = v * dx;
        let mut inside = 0.0;
        let start = edges.partition_point(|&e| e <= a).saturating_sub(1);
        for k in start..edges.len() - 1 {
            let (lo, hi) = (edges[k], edges[k + 1]);
            if lo >= b {
                break;
            }
            let overlap = (hi.min(b) - lo.max(a)).max(0.0);
            if overlap > 0.0 {
                let share = mass * overlap / dx;
                h.mass[k] += share;
                inside += share;
            }
        }
        h.outside += mass - inside;
    }
    h
}

/// Time step actually used: the nominal step shrunk so that it divides `record_dt`.
pub fn aligned_dt(nominal: f64, record_dt: f64) -> (f64, usize) {
    let per_record = ((record_dt / nominal) - 1e-9).ceil().max(1.0) as usize;
    (record_dt / per_record as f64, per_record)
}

/// Integrates from `initial` to `opts.t_end`.
pub fn solve(
    p: &ModelParams,
    grid: &Grid,
    initial: &DensityField,
    opts: &SolveOptions,
) -> Result<DensityTrajectory, PdeError> {
    opts.validate()?;
    if initial.u.len() != grid.len() {
        return Err(PdeError::Grid(format!(
            "initial field has {} nodes, grid has {}",
            initial.u.len(),
            grid.len()
        )));
    }
    if let Some(v) = initial.u.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(PdeError::Support(format!("initial density has value {v}")));
    }
    let mut stepper = Stepper::new(p, *grid, opts.freeze_resource);
    let nominal = opts.dt.unwrap_or_else(|| opts.cfl_safety * stepper.stable_dt());
    let (dt, per_record) = aligned_dt(nominal, opts.record_dt);
    let total_steps = ((opts.t_end / dt) - 1e-9).ceil().max(1.0) as usize;

    let mut snapshot_steps: Vec<(usize, f64)> = opts
        .snapshot_times
        .iter()
        .filter(|&&t| t <= opts.t_end + 0.5 * dt)
        .map(|&t| (((t / dt).round() as usize).min(total_steps), t))
        .collect();
    snapshot_steps.sort_by_key(|s| s.0);

    let weights: Vec<f64> = grid.nodes().map(|x| opts.weight.eval(x)).collect();
    let mut traj = DensityTrajectory {
        model: *p,
        weight: opts.weight,
        grid: *grid,
        dt,
        times: Vec::new(),
        n: Vec::new(),
        e: Vec::new(),
        omega: Vec::new(),
        r: Vec::new(),
        biomass_drift: Vec::new(),
        birth_flux: Vec::new(),
        jump: Vec::new(),
        snapshots: Vec::new(),
        frames: Vec::new(),
        counters: PdeCounters::default(),
    };
    let mut field = initial.clone();
    field.time = 0.0;
    let mut next_snapshot = 0;
    for k in 0..=total_steps {
        if k > 0 {
            let t_target = (k as f64 * dt).min(opts.t_end);
            let h = t_target - field.time;
            stepper.step(&mut field, h, &mut traj.counters)?;
            field.time = t_target;
        }
        if k % per_record == 0 || k == total_steps {
            record(&mut traj, &stepper, &field, &weights, opts.keep_frames);
        }
        while next_snapshot < snapshot_steps.len() && snapshot_steps[next_snapshot].0 == k {
            traj.snapshots.push(DensityFrame::of(&field, snapshot_steps[next_snapshot].1));
            next_snapshot += 1;
        }
    }
    Ok(traj)
}

fn record(traj: &mut DensityTrajectory, stepper: &Stepper, field: &DensityField, weights: &[f64], keep: bool) {
    let grid = stepper.grid();
    let p = &traj.model;
    let u = &field.u;
    traj.times.push(field.time);
    traj.n.push(field.mass(grid));
    traj.e.push(field.energy(grid));
    let weight = &traj.weight;
    traj.omega.push(
        weights.iter().zip(u).map(|(w, v)| w * v).sum::<f64>() * grid.dx()
            + layer_pair(&field.layer, &|x| weight.eval(x)),
    );
    traj.r.push(field.r);
    traj.biomass_drift
        .push(p.renewal(field.r) - p.chi() * stepper.loss_density(field));
    let newborn = stepper.birth_flux(u);
    traj.birth_flux.push(newborn);
    let j = grid.shift();
    if j >= 2 && j < grid.len() {
        traj.jump.push(jump_residual(p, u[j], u[j - 2], field.r, grid.x0(), newborn));
    }
    if keep {
        traj.frames.push(DensityFrame::of(field, field.time));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AllometricParams;

    /// Zero-exponent rates: `g = C_gamma phi(R) - C_alpha`, `b = C_beta 1{x > x0}`, `d = C_delta`.
    fn flat(c_beta: f64, c_delta: f64, c_gamma: f64, x0: f64) -> ModelParams {
        let mut a = AllometricParams::reference();
        for e in [&mut a.alpha, &mut a.beta, &mut a.gamma, &mut a.delta] {
            *e = 0.0;
        }
        a.c_alpha = 1.0;
        a.c_gamma = c_gamma;
        a.c_beta = c_beta;
        a.c_delta = c_delta;
        a.kappa = 1.0;
        a.x0 = x0;
        ModelParams::new(a).unwrap()
    }

    #[test]
    fn grid_is_aligned_with_the_birth_transfer() {
        let g = Grid::new(1.0, 100, 6.0).unwrap();
        assert_eq!(g.len(), 600);
        assert!((g.dx() - 0.01).abs() < 1e-16);
        assert_eq!(g.birth_node(), Some(99));
        assert_eq!(g.x(99), 1.0);
        assert_eq!(g.x(599), 6.0);
        assert!(g.nodes().all(|x| x > 0.0));
        let f = g.refined();
        assert_eq!((f.len(), f.shift()), (1200, 200));
        assert_eq!(f.x(199), 1.0);
        assert!(Grid::new(1.0, 0, 6.0).is_err());
        assert!(Grid::new(-1.0, 10, 6.0).is_err());
    }

    #[test]
    fn empty_density_stays_empty_and_resource_relaxes() {
        let p = ModelParams::reference();
        let grid = Grid::new(1.0, 20, 6.0).unwrap();
        let init = DensityField::zeros(&grid, 0.5);
        let mut opts = SolveOptions::new(10.0);
        opts.dt = Some(1e-3);
        let traj = solve(&p, &grid, &init, &opts).unwrap();
        for (i, &t) in traj.times.iter().enumerate() {
            assert_eq!(traj.n[i], 0.0);
            let exact = 2.0 - 1.5 * (-0.275 * t).exp();
            // Explicit Euler: global error <= dt * T * max|R''| / 2.
            assert!((traj.r[i] - exact).abs() < 1e-3 * 10.0 * 0.275 * 0.275 * 1.5, "t = {t}");
        }
    }

    #[test]
    fn constant_speed_transport_conserves_mass_and_advects() {
        // R frozen at kappa: g = 3 / 2 - 1.
        let p = flat(0.0, 0.0, 3.0, 100.0);
        let grid = Grid::new(100.0, 10_000, 10.0).unwrap();
        let bump = BumpDensity::new(2.0, 3.0).unwrap();
        let mut field = DensityField::from_bump(&grid, &bump, 1.0, 1.0).unwrap();
        let mut stepper = Stepper::new(&p, grid, true);
        let mut counters = PdeCounters::default();
        let dt = grid.dx() / 0.5;
        let m0 = field.mass(&grid);
        let e0 = field.energy(&grid);
        for _ in 0..100 {
            let before = field.mass(&grid);
            stepper.step(&mut field, dt, &mut counters).unwrap();
            assert!((field.mass(&grid) - before).abs() <= 1e-12);
        }
        // Courant number 1: the profile shifts by exactly one cell per step.
        let shifted = DensityField::from_bump(&grid, &BumpDensity::new(3.0, 4.0).unwrap(), 1.0, 1.0).unwrap();
        let err: f64 = field.u.iter().zip(&shifted.u).map(|(a, b)| (a - b).abs()).sum::<f64>() * grid.dx();
        assert!(err < 1e-9, "L1 error {err}");
        assert!((field.mass(&grid) - m0).abs() < 1e-12);
        assert!((field.energy(&grid) - (e0 + 1.0)).abs() < 1e-9);
        assert_eq!(counters.clip_events, 0);
    }

    #[test]
    fn pure_decay_is_exponential() {
        // g = 0 (C_gamma = 2, R pinned at kappa), d = 0.3, no births on the grid.
        let p = flat(0.0, 0.3, 2.0, 100.0);
        let grid = Grid::new(100.0, 1000, 6.0).unwrap();
        let bump = BumpDensity::new(1.0, 5.0).unwrap();
        let init = DensityField::from_bump(&grid, &bump, 1.0, 1.0).unwrap();
        let mut opts = SolveOptions::new(2.0);
        opts.freeze_resource = true;
        opts.dt = Some(1e-3);
        opts.keep_frames = true;
        let traj = solve(&p, &grid, &init, &opts).unwrap();
        let last = traj.frames.last().unwrap();
        let decay = (-0.3f64 * 2.0).exp();
        for (a, b) in last.u.iter().zip(&init.u) {
            // (1 - d dt)^n vs exp(-d t): relative gap <= n (d dt)^2 / 2
            assert!((a - b * decay).abs() <= b * (2000.0 * 0.09e-6 / 2.0 + 1e-12));
        }
    }

    #[test]
    fn births_conserve_energy_and_add_individuals() {
        // g = 0, constant birth above x0 = 0.5, no deaths: energy constant, mass grows.
        let p = flat(0.4, 0.0, 2.0, 0.5);
        let grid = Grid::new(0.5, 50, 6.0).unwrap();
        let bump = BumpDensity::new(1.0, 5.0).unwrap();
        let mut field = DensityField::from_bump(&grid, &bump, 1.0, 1.0).unwrap();
        let mut stepper = Stepper::new(&p, grid, true);
        let mut counters = PdeCounters::default();
        let e0 = field.energy(&grid);
        let dt = 1e-3;
        for _ in 0..200 {
            let n_before = field.mass(&grid);
            let births = stepper.birth_flux(&field.u);
            stepper.step(&mut field, dt, &mut counters).unwrap();
            assert!((field.mass(&grid) - n_before - dt * births).abs() < 1e-12);
        }
        assert!((field.energy(&grid) - e0).abs() < 1e-11);
    }

    #[test]
    fn cfl_violation_names_the_required_step() {
        let p = ModelParams::reference();
        let grid = Grid::new(1.0, 100, 6.0).unwrap();
        let init = DensityField::from_bump(&grid, &BumpDensity::new(1.0, 5.0).unwrap(), 1.0, 1.0).unwrap();
        let mut opts = SolveOptions::new(1.0);
        opts.dt = Some(0.1);
        match solve(&p, &grid, &init, &opts) {
            Err(PdeError::Cfl { required, dt, .. }) => {
                assert!(required < dt);
                // max |g| at R0 = 1 is attained at the top node x = 6.
                let speed = p.growth(6.0, 1.0).abs();
                assert!((required - 0.01 / speed).abs() < 1e-12);
            }
            other => panic!("expected a CFL error, got {other:?}"),
        }
    }

    #[test]
    fn divergence_is_reported() {
        let p = flat(1.0, 0.0, 2.0, 0.5);
        let grid = Grid::new(0.5, 5, 2.0).unwrap();
        let init = DensityField::from_density(&grid, |_| 1.0, 1e9 * 0.9, 1.0).unwrap();
        let mut opts = SolveOptions::new(10.0);
        opts.freeze_resource = true;
        assert!(matches!(solve(&p, &grid, &init, &opts), Err(PdeError::Divergence { .. })));
    }

    #[test]
    fn stable_dt_respects_the_resource_range() {
        let p = ModelParams::reference();
        let grid = Grid::new(1.0, 100, 6.0).unwrap();
        let s = Stepper::new(&p, grid, false);
        let dt = s.stable_dt();
        for r in [0.0, 0.7, 2.0] {
            let max_speed = grid.nodes().map(|x| p.growth(x, r).abs()).fold(0.0, f64::max);
            assert!(dt * max_speed <= grid.dx());
        }
    }

    #[test]
    fn histogram_of_a_density_keeps_its_mass() {
        let grid = Grid::new(1.0, 100, 6.0).unwrap();
        let init = DensityField::from_bump(&grid, &BumpDensity::new(1.0, 5.0).unwrap(), 1.0, 1.0).unwrap();
        let spec = HistogramSpec::uniform(0.0, 5.0, 100).unwrap();
        let h = density_histogram(&grid, &init.u, &spec);
        assert!((h.total() + h.outside - 1.0).abs() < 1e-12);
        let coarse = HistogramSpec::uniform(0.0, 3.0, 7).unwrap();
        let h = density_histogram(&grid, &init.u, &coarse);
        assert!((h.total() + h.outside - 1.0).abs() < 1e-12);
        assert!((h.total() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn records_land_on_the_record_grid() {
        let p = ModelParams::reference();
        let grid = Grid::new(1.0, 20, 6.0).unwrap();
        let init = DensityField::from_bump(&grid, &BumpDensity::new(1.0, 5.0).unwrap(), 1.0, 1.0).unwrap();
        let mut opts = SolveOptions::new(3.0);
        opts.record_dt = 0.5;
        opts.snapshot_times = vec![0.0, 2.0, 7.0];
        let traj = solve(&p, &grid, &init, &opts).unwrap();
        assert_eq!(traj.times.len(), 7);
        for (i, &t) in traj.times.iter().enumerate() {
            assert!((t - 0.5 * i as f64).abs() < 1e-12);
        }
        assert_eq!(traj.snapshots.len(), 2);
        assert!(traj.snapshot(2.0).is_some());
        assert_eq!(traj.counters.clip_events, 0);
    }
}

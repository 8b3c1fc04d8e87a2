//! The literal thinning step: flat caps, flow integrated between proposals.

use rand::{Rng, RngCore};
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{
    capped, enforce_guards, record, replica_rng, sample_initial, schedule, EventCounts,
    GuardOutcome, SimConfig, SimError, Trajectory,
};
use crate::flow::{integrate_flow_with, FlowError, FlowOptions, PopulationState, Rk4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Birth,
    Death,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NextEvent {
    pub time: f64,
    pub kind: EventKind,
    /// The proposed individual; absent when no proposal fell before the horizon.
    pub id: Option<u64>,
}

/// One thinning proposal up to `cfg.t_end`. See [`next_event_until`].
pub fn next_event<R: RngCore>(
    cfg: &SimConfig,
    state: &mut PopulationState,
    rng: &mut R,
    counts: &mut EventCounts,
) -> Result<NextEvent, SimError> {
    let opts = cfg.flow_options();
    next_event_until(cfg, &opts, state, rng, counts, cfg.t_end, &mut Rk4::new())
}

/// Draws the next proposal at total rate `N (cap_b + cap_d)`, flows the state
/// up to it, and accepts or rejects at the post-flow energy. When the
/// proposal would land beyond `horizon` the state is flowed to `horizon`
/// instead and `kind` is `None` with no id; memorylessness makes this exact.
///
/// The event itself is not applied; the caller does that.
pub fn next_event_until<R: RngCore>(
    cfg: &SimConfig,
    opts: &FlowOptions,
    state: &mut PopulationState,
    rng: &mut R,
    counts: &mut EventCounts,
    horizon: f64,
    rk: &mut Rk4,
) -> Result<NextEvent, SimError> {
    let p = &cfg.model;
    let t = state.time();
    let total_cap = cfg.cap_b + cfg.cap_d;
    let rate = state.len() as f64 * total_cap;
    let wait = if rate > 0.0 {
        rng.sample::<f64, _>(Exp1) / rate
    } else {
        f64::INFINITY
    };
    if t + wait >= horizon {
        integrate_flow_with(p, state, horizon - t, opts, rk)?;
        state.set_time(horizon);
        return Ok(NextEvent { time: horizon, kind: EventKind::None, id: None });
    }
    integrate_flow_with(p, state, wait, opts, rk)?;
    counts.proposals += 1;

    let slot = rng.random_range(0..state.len());
    let id = state.ids()[slot];
    let x = state.energies()[slot];
    let birth = rng.random::<f64>() * total_cap < cfg.cap_b;
    let (cap, true_rate) = if birth {
        (cfg.cap_b, p.birth_rate(x))
    } else {
        (cfg.cap_d, p.death_rate(x))
    };
    let (rate, clamped) = capped(true_rate, cap);
    if clamped {
        if birth {
            counts.b_clamps += 1;
        } else {
            counts.d_clamps += 1;
        }
    }
    let accepted = rng.random::<f64>() * cap < rate;
    let kind = match (accepted, birth) {
        (false, _) => EventKind::None,
        (true, true) => EventKind::Birth,
        (true, false) => EventKind::Death,
    };
    Ok(NextEvent { time: state.time(), kind, id: Some(id) })
}

/// Splits `x0` off the parent into a newborn; returns the newborn's id.
pub fn apply_birth(state: &mut PopulationState, id: u64, x0: f64) -> Result<u64, SimError> {
    let slot = state
        .slot(id)
        .ok_or_else(|| SimError::Logic(format!("birth from dead individual {id}")))?;
    let x = state.energies()[slot];
    if x <= x0 {
        return Err(SimError::Logic(format!(
            "birth from individual {id} with energy {x} <= x0 = {x0}"
        )));
    }
    state.set_energy(slot, x - x0);
    Ok(state.push(x0))
}

/// Removes the individual; returns its energy.
pub fn apply_death(state: &mut PopulationState, id: u64) -> Result<f64, SimError> {
    state
        .remove(id)
        .ok_or_else(|| SimError::Logic(format!("death of dead individual {id}")))
}

/// Runs the literal algorithm for replica `replica`.
pub fn simulate_reference(cfg: &SimConfig, replica: u64) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let opts = cfg.flow_options();
    let mut rng = replica_rng(cfg.seed, replica);
    let mut state = sample_initial(cfg, &mut rng)?;
    let mut traj = Trajectory::new(replica, cfg.scale);
    let mut rk = Rk4::new();
    let mut counts = EventCounts::default();

    'stops: for stop in schedule(cfg) {
        while state.time() < stop.time {
            match next_event_until(cfg, &opts, &mut state, &mut rng, &mut counts, stop.time, &mut rk) {
                Ok(ev) => match (ev.kind, ev.id) {
                    (EventKind::Birth, Some(id)) => {
                        apply_birth(&mut state, id, cfg.model.x0())?;
                        counts.births += 1;
                        if state.len() > cfg.max_individuals {
                            return Err(SimError::PopulationCap {
                                limit: cfg.max_individuals,
                                time: state.time(),
                            });
                        }
                    }
                    (EventKind::Death, Some(id)) => {
                        apply_death(&mut state, id)?;
                        counts.deaths += 1;
                    }
                    _ => {}
                },
                Err(SimError::Flow(FlowError::VanishOrExplode { .. })) => {
                    if enforce_guards(cfg, &opts, &mut state, &mut counts) == GuardOutcome::Truncate {
                        break 'stops;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        record(&mut traj, cfg, &state, &stop);
    }
    traj.events = counts;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::PopulationState;
    use crate::ibm::replica_rng;
    use crate::initial::InitialCondition;
    use crate::model::{AllometricParams, ModelParams};

    /// Constant rates `b0`, `d0` and zero growth with R pinned at `kappa`.
    pub(crate) fn constant_rates(b0: f64, d0: f64) -> ModelParams {
        let mut a = AllometricParams::reference();
        for e in [&mut a.alpha, &mut a.beta, &mut a.gamma, &mut a.delta] {
            *e = 0.0;
        }
        a.c_alpha = 1.0;
        a.c_gamma = 2.0;
        a.kappa = 1.0;
        a.c_beta = b0;
        a.c_delta = d0;
        a.x0 = 0.5;
        ModelParams::new(a).unwrap()
    }

    #[test]
    fn birth_splits_energy() {
        let mut s = PopulationState::new(vec![3.0], 1.0, 1).unwrap();
        let child = apply_birth(&mut s, 0, 1.0).unwrap();
        assert_eq!(s.energy(0), Some(2.0));
        assert_eq!(s.energy(child), Some(1.0));

        let mut s = PopulationState::new(vec![1.000001], 1.0, 1).unwrap();
        let child = apply_birth(&mut s, 0, 1.0).unwrap();
        assert!((s.energy(0).unwrap() - 1e-6).abs() < 1e-15);
        assert_eq!(s.energy(child), Some(1.0));

        let mut s = PopulationState::new(vec![1.0], 1.0, 1).unwrap();
        assert!(matches!(apply_birth(&mut s, 0, 1.0), Err(SimError::Logic(_))));
        assert!(matches!(apply_birth(&mut s, 9, 1.0), Err(SimError::Logic(_))));
    }

    #[test]
    fn death_removes_exactly_one() {
        let mut s = PopulationState::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1.0, 10).unwrap();
        let w = crate::model::make_weight(0.25, 0.625).unwrap();
        let before = s.weighted_total(&w);
        let x = apply_death(&mut s, 2).unwrap();
        assert!((s.n() - 0.4).abs() < 1e-15);
        assert!((before - w.eval(x) / 10.0 - s.weighted_total(&w)).abs() < 1e-14);
        assert!(apply_death(&mut s, 2).is_err());
    }

    #[test]
    fn empty_population_flows_to_end() {
        let mut cfg = SimConfig::new(ModelParams::reference(), 1, 1.0);
        cfg.initial = InitialCondition::ExplicitList { energies: vec![], r0: 1.0 };
        let mut rng = replica_rng(1, 0);
        let mut s = sample_initial(&cfg, &mut rng).unwrap();
        let mut c = EventCounts::default();
        let ev = next_event(&cfg, &mut s, &mut rng, &mut c).unwrap();
        assert_eq!(ev.kind, EventKind::None);
        assert_eq!(ev.time, 1.0);
        assert!((s.resource() - (2.0 - (-0.275f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn acceptance_fractions_match_rate_ratios() {
        let (b0, d0) = (0.3, 0.7);
        let mut cfg = SimConfig::new(constant_rates(b0, d0), 1, 1e9);
        cfg.cap_b = 1.0;
        cfg.cap_d = 2.0;
        cfg.flow.freeze_resource = true;
        let mut rng = replica_rng(5, 0);
        let opts = cfg.flow_options();
        let mut rk = Rk4::new();
        let (mut births, mut deaths) = (0u64, 0u64);
        let n = 100_000;
        let mut counts = EventCounts::default();
        for _ in 0..n {
            let mut s = PopulationState::new(vec![2.0], 1.0, 1).unwrap();
            let ev = next_event_until(&cfg, &opts, &mut s, &mut rng, &mut counts, 1e9, &mut rk).unwrap();
            match ev.kind {
                EventKind::Birth => births += 1,
                EventKind::Death => deaths += 1,
                EventKind::None => {}
            }
        }
        // Birth is proposed w.p. 1/3 and accepted w.p. b0; death 2/3 and d0/2.
        for (count, p) in [(births, b0 / 3.0), (deaths, 2.0 / 3.0 * d0 / 2.0)] {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((count as f64 - n as f64 * p).abs() < 3.0 * sd, "{count} vs {}", n as f64 * p);
        }
        assert_eq!(counts.b_clamps + counts.d_clamps, 0);
        assert_eq!(counts.proposals, n);
    }

    #[test]
    fn clamps_are_counted() {
        let mut cfg = SimConfig::new(constant_rates(0.5, 3.0), 1, 1e9);
        cfg.cap_b = 1.0;
        cfg.cap_d = 1.0;
        cfg.flow.freeze_resource = true;
        let mut rng = replica_rng(9, 0);
        let mut counts = EventCounts::default();
        for _ in 0..100 {
            let mut s = PopulationState::new(vec![2.0], 1.0, 1).unwrap();
            next_event(&cfg, &mut s, &mut rng, &mut counts).unwrap();
        }
        assert!(counts.d_clamps > 0);
        assert_eq!(counts.b_clamps, 0);
    }

    #[test]
    fn reference_driver_is_deterministic() {
        let mut cfg = SimConfig::new(ModelParams::reference(), 20, 2.0);
        cfg.cap_d = 50.0;
        cfg.seed = 3;
        cfg.record_dt = 0.5;
        let a = simulate_reference(&cfg, 0).unwrap();
        let b = simulate_reference(&cfg, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        for (&n, _) in a.n.iter().zip(&a.times) {
            let count = n * 20.0;
            assert!((count - count.round()).abs() < 1e-9);
        }
    }
}

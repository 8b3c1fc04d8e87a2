//! A-posteriori consistency checks on a computed density trajectory.

use super::{DensityFrame, DensityTrajectory, Grid, PdeError};
use crate::model::ModelParams;
use crate::observable::TestFunction;

/// Per recorded interval, `|d(R + chi E)/dt - drift|` where the derivative is
/// the difference quotient over the interval and the drift
/// `renewal(R) - chi <u, l + d Id>` is taken at the interval midpoint
/// (mean of the two endpoint values). The continuum system has zero residual.
pub fn balance_residual(traj: &DensityTrajectory) -> Vec<f64> {
    let chi = traj.model.chi();
    (1..traj.times.len())
        .map(|i| {
            let dt = traj.times[i] - traj.times[i - 1];
            let biomass = |k: usize| traj.r[k] + chi * traj.e[k];
            let quotient = (biomass(i) - biomass(i - 1)) / dt;
            let drift = 0.5 * (traj.biomass_drift[i] + traj.biomass_drift[i - 1]);
            (quotient - drift).abs()
        })
        .collect()
}

fn trapezoid_pair(grid: &Grid, u: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let n = u.len();
    let inner: f64 = (0..n)
        .map(|i| {
            let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
            w * f(grid.x(i)) * u[i]
        })
        .sum();
    inner * grid.dx()
}

/// `<u, d_t phi + g d_x phi + b (phi(x0) + phi(x - x0) - phi) - d phi>` at the
/// frame time, trapezoid rule over the nodes plus the boundary-layer parcels.
pub fn weak_form_integrand(p: &ModelParams, grid: &Grid, frame: &DensityFrame, phi: &dyn TestFunction) -> f64 {
    let (t, r) = (frame.time, frame.r);
    let x0 = p.x0();
    let at_x0 = phi.value(t, x0);
    let generator = |x: f64| {
        let here = phi.value(t, x);
        let birth = p.birth_rate(x);
        let split = if birth > 0.0 { birth * (at_x0 + phi.value(t, x - x0) - here) } else { 0.0 };
        phi.d_t(t, x) + p.growth(x, r) * phi.d_x(t, x) + split - p.death_rate(x) * here
    };
    trapezoid_pair(grid, &frame.u, generator) + frame.layer.iter().map(|q| q.mass * generator(q.x)).sum::<f64>()
}

fn frame_pair(grid: &Grid, frame: &DensityFrame, phi: &dyn TestFunction) -> f64 {
    trapezoid_pair(grid, &frame.u, |x| phi.value(frame.time, x))
        + frame.layer.iter().map(|q| q.mass * phi.value(frame.time, q.x)).sum::<f64>()
}

/// For each kept frame at time `t`,
/// `|<u_t, phi_t> - <u_0, phi_0> - int_0^t <u_s, L phi_s> ds|` with the time
/// integral by the trapezoid rule over the frames. Needs a trajectory solved
/// with `keep_frames`.
pub fn weak_form_residual(traj: &DensityTrajectory, phi: &dyn TestFunction) -> Result<Vec<f64>, PdeError> {
    if traj.frames.is_empty() {
        return Err(PdeError::Options("weak-form residual needs a solve with keep_frames".into()));
    }
    let grid = &traj.grid;
    let p = &traj.model;
    let first = &traj.frames[0];
    let pair0 = frame_pair(grid, first, phi);
    let mut integral = 0.0;
    let mut prev = weak_form_integrand(p, grid, first, phi);
    let mut out = vec![0.0];
    for w in traj.frames.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let next = weak_form_integrand(p, grid, b, phi);
        integral += 0.5 * (b.time - a.time) * (prev + next);
        prev = next;
        let pair = frame_pair(grid, b, phi);
        out.push((pair - pair0 - integral).abs());
    }
    Ok(out)
}

/// Signed relative defect of the newborn jump condition
/// `(u(x0+) - u(x0-)) g(x0, R) = int b u`, normalized by the newborn flux.
pub fn jump_residual(p: &ModelParams, u_plus: f64, u_minus: f64, r: f64, x0: f64, newborn: f64) -> f64 {
    ((u_plus - u_minus) * p.growth(x0, r) - newborn) / (newborn + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::BumpDensity;
    use crate::observable::{Identity, SmoothBump, Zero};
    use crate::pde::{solve, DensityField, SolveOptions};

    fn table_run(cells: usize, record_steps: usize, t_end: f64) -> DensityTrajectory {
        let p = ModelParams::reference();
        let grid = Grid::new(1.0, cells, 6.0).unwrap();
        let init = DensityField::from_bump(&grid, &BumpDensity::new(1.0, 5.0).unwrap(), 1.0, 1.0).unwrap();
        let mut opts = SolveOptions::new(t_end);
        let dt = 0.5 * crate::pde::Stepper::new(&p, grid, false).stable_dt();
        opts.dt = Some(dt);
        opts.record_dt = dt * record_steps as f64;
        opts.keep_frames = true;
        solve(&p, &grid, &init, &opts).unwrap()
    }

    #[test]
    fn zero_test_function_has_zero_residual() {
        let traj = table_run(20, 10, 1.0);
        assert!(weak_form_residual(&traj, &Zero).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn residuals_need_frames() {
        let p = ModelParams::reference();
        let grid = Grid::new(1.0, 10, 6.0).unwrap();
        let init = DensityField::zeros(&grid, 1.0);
        let traj = solve(&p, &grid, &init, &SolveOptions::new(1.0)).unwrap();
        assert!(weak_form_residual(&traj, &Identity).is_err());
        // Empty population: the residual is the Euler defect of the chemostat ODE.
        let b = balance_residual(&traj);
        assert_eq!(b.len(), traj.times.len() - 1);
        assert!(b.iter().all(|&v| v < 1e-2));
    }

    #[test]
    fn balance_residual_shrinks_under_refinement() {
        let coarse = table_run(20, 4, 2.0);
        let fine = table_run(40, 4, 2.0);
        let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
        let (a, b) = (max(balance_residual(&coarse)), max(balance_residual(&fine)));
        assert!(a / b >= 1.7, "{a} -> {b}");
    }

    #[test]
    fn weak_residual_shrinks_under_refinement() {
        let phi = SmoothBump::new(2.5, 1.5);
        let max = |t: &DensityTrajectory| weak_form_residual(t, &phi).unwrap().into_iter().fold(0.0, f64::max);
        let (a, b) = (max(&table_run(50, 4, 2.0)), max(&table_run(100, 4, 2.0)));
        assert!(a / b >= 1.7, "{a} -> {b}");
    }
}

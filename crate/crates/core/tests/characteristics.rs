//! Transport with death and no births, resource frozen: the surviving mass
//! follows from the characteristics in closed form, which checks the PDE and
//! the IBM against the same oracle.
//!
//! With `R = R0 = 1` frozen, `g(x) = -(2/3) x^(3/4)`, so `y = x^(1/4)` falls at
//! rate 1/6 and the death rate `0.05 / y` integrates to a survival factor
//! `(y_t / y_0)^(3/10)` along each characteristic.

use egf_core::config::Config;
use egf_core::ibm::run_ensemble;
use egf_core::initial::{simpson, BumpDensity};
use egf_core::pde::solve;

fn surviving_mass(t: f64) -> f64 {
    let bump = BumpDensity::new(1.0, 5.0).unwrap();
    simpson(
        |x| {
            let y0 = x.powf(0.25);
            let y = y0 - t / 6.0;
            if y <= 0.0 {
                0.0
            } else {
                bump.density(x) * (y / y0).powf(0.3)
            }
        },
        1.0,
        5.0,
        20_000,
    )
}

fn no_births(k: u64) -> Config {
    let mut cfg = Config::reference(k, 8.0);
    cfg.model.c_beta = 0.0;
    cfg.pde.freeze_resource = true;
    cfg.simulation.record_dt = 0.5;
    cfg
}

const TIMES: [f64; 6] = [1.0, 3.0, 5.0, 6.0, 7.0, 8.0];

fn pde_error(cells: usize) -> (f64, f64) {
    let mut cfg = no_births(1);
    cfg.pde.cells_per_x0 = cells;
    let (p, grid, init, opts) = cfg.pde_setup().unwrap();
    let traj = solve(&p, &grid, &init, &opts).unwrap();
    let mut early = 0.0f64;
    let mut all = 0.0f64;
    for t in TIMES {
        let err = (traj.interpolate(&traj.n, t).unwrap() - surviving_mass(t)).abs();
        all = all.max(err);
        if t <= 5.0 {
            early = early.max(err);
        }
    }
    (early, all)
}

#[test]
fn oracle_is_a_probability() {
    assert!((surviving_mass(0.0) - 1.0).abs() < 1e-9);
    assert!(surviving_mass(3.0) < surviving_mass(1.0));
    // Everything has reached zero energy once t / 6 exceeds 5^(1/4).
    assert_eq!(surviving_mass(6.0 * 5f64.powf(0.25) + 0.01), 0.0);
}

#[test]
fn pde_converges_to_the_characteristic_solution() {
    let errors: Vec<(f64, f64)> = [50, 100, 200].into_iter().map(pde_error).collect();
    for w in errors.windows(2) {
        assert!(w[1].1 < w[0].1, "{errors:?}");
    }
    // Before mass reaches the left boundary the scheme is accurate; afterwards
    // the degenerate speed at x = 0 slows convergence down.
    assert!(errors[1].0 < 5e-3, "{errors:?}");
    assert!(errors[2].1 < 0.07, "{errors:?}");
}

#[test]
fn ibm_matches_the_characteristic_solution() {
    let k = 2000;
    let mut cfg = no_births(k);
    cfg.ibm.substep = 1e-2;
    let mut sim = cfg.sim_config().unwrap();
    sim.flow.freeze_resource = true;
    sim.seed = 17;
    let trajs = run_ensemble(&sim, 4, None).unwrap();
    let n = (k * 4) as f64;
    for t in TIMES {
        let exact = surviving_mass(t);
        let mean = trajs.iter().map(|tr| tr.at(&tr.n, t).unwrap()).sum::<f64>() / 4.0;
        let sd = (exact * (1.0 - exact) / n).sqrt().max(1.0 / n);
        assert!((mean - exact).abs() < 4.0 * sd, "t = {t}: {mean} vs {exact} (sd {sd})");
        assert_eq!(trajs[0].events.births, 0);
    }
}

//! Config -> IBM ensemble and PDE -> files -> read back -> comparison.

use egf_core::config::Config;
use egf_core::diagnostics::{biomass_audit, compare_to_pde, summarize_ensemble};
use egf_core::ibm::{run_ensemble, Snapshot};
use egf_core::io;
use egf_core::pde::solve;

fn short_reference() -> Config {
    let mut cfg = Config::reference(300, 6.0);
    cfg.simulation.seed = 5;
    cfg.simulation.record_dt = 0.5;
    cfg.simulation.snapshot_times = vec![0.0, 1.5];
    cfg
}

#[test]
fn files_carry_everything_the_comparison_needs() {
    let cfg = short_reference();
    let dir = tempfile::tempdir().unwrap();
    let (ibm_dir, pde_dir) = (dir.path().join("ibm"), dir.path().join("pde"));
    std::fs::create_dir_all(&ibm_dir).unwrap();
    std::fs::create_dir_all(&pde_dir).unwrap();

    std::fs::write(ibm_dir.join("config.toml"), cfg.to_toml()).unwrap();
    let trajs = run_ensemble(&cfg.sim_config().unwrap(), 5, None).unwrap();
    io::write_timeseries(&ibm_dir.join("timeseries.csv"), &trajs).unwrap();
    let summary = summarize_ensemble(&trajs).unwrap();
    for s in &summary.snapshots {
        io::write_histogram(&ibm_dir.join(io::snapshot_file(s.time)), &s.histogram).unwrap();
    }
    let (p, grid, init, opts) = cfg.pde_setup().unwrap();
    let pde = solve(&p, &grid, &init, &opts).unwrap();
    io::write_pde_output(&pde_dir, &pde).unwrap();
    let direct = compare_to_pde(&summary, &pde, (0.0, 6.0), &[0.0, 1.5]).unwrap();

    let cfg_back = Config::load(&ibm_dir.join("config.toml")).unwrap();
    assert_eq!(cfg_back, cfg);
    let trajs_back = io::read_timeseries(&ibm_dir.join("timeseries.csv"), cfg_back.simulation.k).unwrap();
    let mut summary_back = summarize_ensemble(&trajs_back).unwrap();
    assert_eq!(summary_back.n, summary.n);
    assert_eq!(summary_back.r, summary.r);
    for t in [0.0, 1.5] {
        let histogram = io::read_histogram(&ibm_dir.join(io::snapshot_file(t))).unwrap();
        summary_back.snapshots.push(Snapshot { time: t, histogram });
    }
    let pde_back = io::read_pde_output(&pde_dir).unwrap();
    assert_eq!(pde_back.n, pde.n);
    let from_files = compare_to_pde(&summary_back, &pde_back, (0.0, 6.0), &[0.0, 1.5]).unwrap();
    assert_eq!(from_files, direct);

    assert!(direct.sup_relative_error.n < 0.2, "{direct:?}");
    assert!(direct.snapshots[0].l1.unwrap() < 0.5, "{direct:?}");
    for t in &trajs_back {
        assert_eq!(biomass_audit(t, &p), 0);
    }
}

#[test]
fn pde_and_ibm_agree_on_the_resource_crash() {
    // The resource is drawn down within a fraction of a time unit; both
    // descriptions must see it.
    let cfg = short_reference();
    let trajs = run_ensemble(&cfg.sim_config().unwrap(), 3, None).unwrap();
    let summary = summarize_ensemble(&trajs).unwrap();
    let (p, grid, init, opts) = cfg.pde_setup().unwrap();
    let pde = solve(&p, &grid, &init, &opts).unwrap();
    let i = summary.times.iter().position(|&t| t == 0.5).unwrap();
    let r_pde = pde.interpolate(&pde.r, 0.5).unwrap();
    assert!(r_pde < 0.1 && summary.r.mean[i] < 0.1, "{r_pde} {}", summary.r.mean[i]);
    assert!((summary.n.mean[i] - pde.interpolate(&pde.n, 0.5).unwrap()).abs() < 0.05);
}

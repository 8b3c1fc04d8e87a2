//! Ensemble statistics, IBM against PDE comparison, and the statistical
//! checks on the stochastic process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::PopulationState;
use crate::histogram::{l1_distance, Histogram, HistogramError, HistogramSpec};
use crate::ibm::{run_ensemble_with, simulate_replica_state, SimConfig, SimError, Snapshot, Trajectory};
use crate::model::ModelParams;
use crate::pde::DensityTrajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("no replicas to summarize")]
    Empty,
    #[error("replica {replica} does not share the time grid of replica {reference}")]
    TimeGrid { replica: u64, reference: u64 },
    #[error("replica {replica} has K = {found}, expected {expected}")]
    Scale { replica: u64, found: u64, expected: u64 },
    #[error("comparison window [{t0}, {t1}] contains no recorded time")]
    EmptyWindow { t0: f64, t1: f64 },
    #[error("{0}")]
    Precondition(String),
    #[error("variance of <mu^K, phi> is 0 at K = {scale}; use a larger t or a test function seeing the population")]
    DegenerateVariance { scale: u64 },
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Anything that can be paired with a test function.
pub trait Measure {
    fn pair_with(&self, phi: &dyn Fn(f64) -> f64) -> f64;
}

impl Measure for PopulationState {
    fn pair_with(&self, phi: &dyn Fn(f64) -> f64) -> f64 {
        self.pair(phi)
    }
}

impl Measure for Histogram {
    fn pair_with(&self, phi: &dyn Fn(f64) -> f64) -> f64 {
        self.pair(phi)
    }
}

/// `<m, phi>`: `sum phi(x_i) / K` on a state, `sum phi(mid) mass` on a histogram.
pub fn pair_measure<M: Measure + ?Sized>(m: &M, phi: impl Fn(f64) -> f64) -> f64 {
    m.pair_with(&phi)
}

/// Recorded `(N, E, Omega, R)` series on a time grid.
pub trait ObservedSeries {
    fn times(&self) -> &[f64];
    fn n(&self) -> &[f64];
    fn e(&self) -> &[f64];
    fn omega(&self) -> &[f64];
    fn r(&self) -> &[f64];
}

macro_rules! observed {
    ($t:ty) => {
        impl ObservedSeries for $t {
            fn times(&self) -> &[f64] {
                &self.times
            }
            fn n(&self) -> &[f64] {
                &self.n
            }
            fn e(&self) -> &[f64] {
                &self.e
            }
            fn omega(&self) -> &[f64] {
                &self.omega
            }
            fn r(&self) -> &[f64] {
                &self.r
            }
        }
    };
}

observed!(Trajectory);
observed!(DensityTrajectory);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    /// Unbiased; 0 for a single replica.
    pub variance: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl SeriesStats {
    fn of(columns: &[&[f64]]) -> Self {
        let len = columns[0].len();
        let n = columns.len() as f64;
        let mut out = SeriesStats {
            mean: Vec::with_capacity(len),
            variance: Vec::with_capacity(len),
            min: Vec::with_capacity(len),
            max: Vec::with_capacity(len),
        };
        for i in 0..len {
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for c in columns {
                lo = lo.min(c[i]);
                hi = hi.max(c[i]);
                sum += c[i];
            }
            let mean = (sum / n).clamp(lo, hi);
            let var = if columns.len() > 1 {
                columns.iter().map(|c| (c[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            out.mean.push(mean);
            out.variance.push(var);
            out.min.push(lo);
            out.max.push(hi);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub scale: u64,
    pub replicas: usize,
    pub times: Vec<f64>,
    pub n: SeriesStats,
    pub e: SeriesStats,
    pub omega: SeriesStats,
    pub r: SeriesStats,
    /// Replica-averaged histograms at the snapshot times every replica reached.
    pub snapshots: Vec<Snapshot>,
}

impl EnsembleSummary {
    pub fn snapshot(&self, t: f64) -> Option<&Histogram> {
        self.snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|s| &s.histogram)
    }
}

/// Pointwise statistics across replicas. Replicas are folded in replica-id
/// order, so the result does not depend on the order of `trajs`.
pub fn summarize_ensemble(trajs: &[Trajectory]) -> Result<EnsembleSummary, DiagnosticsError> {
    let mut sorted: Vec<&Trajectory> = trajs.iter().collect();
    sorted.sort_by_key(|t| t.replica);
    let first = *sorted.first().ok_or(DiagnosticsError::Empty)?;
    for t in &sorted {
        if t.times != first.times {
            return Err(DiagnosticsError::TimeGrid { replica: t.replica, reference: first.replica });
        }
        if t.scale != first.scale {
            return Err(DiagnosticsError::Scale { replica: t.replica, found: t.scale, expected: first.scale });
        }
    }
    let stats = |f: fn(&Trajectory) -> &[f64]| SeriesStats::of(&sorted.iter().map(|t| f(t)).collect::<Vec<_>>());
    let mut snapshots = Vec::new();
    for s in &first.snapshots {
        let hists: Option<Vec<Histogram>> = sorted.iter().map(|t| t.snapshot(s.time).cloned()).collect();
        if let Some(h) = hists {
            snapshots.push(Snapshot { time: s.time, histogram: Histogram::mean(&h)? });
        }
    }
    Ok(EnsembleSummary {
        scale: first.scale,
        replicas: sorted.len(),
        times: first.times.clone(),
        n: stats(|t| &t.n),
        e: stats(|t| &t.e),
        omega: stats(|t| &t.omega),
        r: stats(|t| &t.r),
        snapshots,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableErrors {
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "Omega")]
    pub omega: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDistance {
    pub time: f64,
    /// `None` when either histogram holds no mass in the window.
    pub l1: Option<f64>,
    pub ibm_outside: f64,
    pub pde_outside: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scale: u64,
    pub replicas: usize,
    pub window: [f64; 2],
    pub sup_relative_error: ObservableErrors,
    pub snapshots: Vec<SnapshotDistance>,
    pub qv_slope: Option<f64>,
    pub qv_ci: Option<[f64; 2]>,
    pub biomass_violations: u64,
}

/// `max |a - b| / max |b|`; 0 when both vanish, infinite when only `b` does.
pub fn sup_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let (num, den) = a
        .iter()
        .zip(b)
        .fold((0.0f64, 0.0f64), |(n, d), (x, y)| (n.max((x - y).abs()), d.max(y.abs())));
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Compares the ensemble mean with the PDE over `window` (PDE linearly
/// interpolated to the ensemble times) and the ensemble histograms with the
/// PDE density at `snapshot_times`, both renormalized to unit mass on the
/// ensemble's bins. `qv_*` and `biomass_violations` are left for the caller.
pub fn compare_to_pde(
    summary: &EnsembleSummary,
    pde: &DensityTrajectory,
    window: (f64, f64),
    snapshot_times: &[f64],
) -> Result<ComparisonReport, DiagnosticsError> {
    let (t0, t1) = window;
    let slack = 1e-9 * t1.abs().max(1.0);
    let idx: Vec<usize> = (0..summary.times.len())
        .filter(|&i| summary.times[i] >= t0 - slack && summary.times[i] <= t1 + slack)
        .filter(|&i| pde.interpolate(&pde.n, summary.times[i]).is_some())
        .collect();
    if !(t0 <= t1) || idx.is_empty() {
        return Err(DiagnosticsError::EmptyWindow { t0, t1 });
    }
    let error = |ibm: &SeriesStats, series: &[f64]| {
        let a: Vec<f64> = idx.iter().map(|&i| ibm.mean[i]).collect();
        let b: Vec<f64> = idx.iter().map(|&i| pde.interpolate(series, summary.times[i]).unwrap_or(f64::NAN)).collect();
        sup_relative_error(&a, &b)
    };
    let sup_relative_error = ObservableErrors {
        n: error(&summary.n, &pde.n),
        e: error(&summary.e, &pde.e),
        omega: error(&summary.omega, &pde.omega),
        r: error(&summary.r, &pde.r),
    };
    let mut snapshots = Vec::new();
    for &t in snapshot_times {
        let ibm = summary
            .snapshot(t)
            .ok_or_else(|| DiagnosticsError::Precondition(format!("no ensemble snapshot at t = {t}")))?;
        let frame = pde
            .snapshot(t)
            .ok_or_else(|| DiagnosticsError::Precondition(format!("no PDE snapshot at t = {t}")))?;
        let spec = HistogramSpec::from_edges(ibm.edges.clone())?;
        let density = frame.histogram(&pde.grid, &spec);
        let share = |h: &Histogram| {
            let all = h.total() + h.outside;
            if all > 0.0 {
                h.outside / all
            } else {
                0.0
            }
        };
        snapshots.push(SnapshotDistance {
            time: t,
            l1: l1_distance(ibm, &density)?,
            ibm_outside: share(ibm),
            pde_outside: share(&density),
        });
    }
    Ok(ComparisonReport {
        scale: summary.scale,
        replicas: summary.replicas,
        window: [t0, t1],
        sup_relative_error,
        snapshots,
        qv_slope: None,
        qv_ci: None,
        biomass_violations: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvScaling {
    pub scales: Vec<u64>,
    pub variances: Vec<f64>,
    pub slope: f64,
    /// Bootstrap 90% percentile interval.
    pub ci: [f64; 2],
}

fn unbiased_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub const MIN_QV_SCALES: usize = 3;
pub const MIN_QV_REPLICAS: usize = 50;

fn check_qv_shape(scales: &[u64], replicas: usize) -> Result<(), DiagnosticsError> {
    let mut distinct = scales.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < MIN_QV_SCALES {
        return Err(DiagnosticsError::Precondition(format!(
            "quadratic-variation scaling needs at least {MIN_QV_SCALES} distinct K values, got {}",
            distinct.len()
        )));
    }
    if replicas < MIN_QV_REPLICAS {
        return Err(DiagnosticsError::Precondition(format!(
            "quadratic-variation scaling needs at least {MIN_QV_REPLICAS} replicas per K, got {replicas}"
        )));
    }
    Ok(())
}

/// OLS slope of `log Var` against `log K` from per-K samples of
/// `<mu^K_t, phi>`, with a bootstrap over replicas for the interval.
pub fn qv_regression(samples: &[(u64, Vec<f64>)], bootstrap: usize, seed: u64) -> Result<QvScaling, DiagnosticsError> {
    let scales: Vec<u64> = samples.iter().map(|s| s.0).collect();
    check_qv_shape(&scales, samples.iter().map(|s| s.1.len()).min().unwrap_or(0))?;
    let variances: Vec<f64> = samples.iter().map(|s| unbiased_variance(&s.1)).collect();
    if let Some(i) = variances.iter().position(|&v| !(v > 0.0)) {
        return Err(DiagnosticsError::DegenerateVariance { scale: scales[i] });
    }
    let log_k: Vec<f64> = scales.iter().map(|&k| (k as f64).ln()).collect();
    let log_v: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
    let slope = ols_slope(&log_k, &log_v);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(bootstrap);
    let mut buf = Vec::new();
    'outer: for _ in 0..bootstrap {
        let mut lv = Vec::with_capacity(samples.len());
        for (_, v) in samples {
            buf.clear();
            buf.extend((0..v.len()).map(|_| v[rng.random_range(0..v.len())]));
            let var = unbiased_variance(&buf);
            if !(var > 0.0) {
                continue 'outer;
            }
            lv.push(var.ln());
        }
        slopes.push(ols_slope(&log_k, &lv));
    }
    slopes.sort_by(f64::total_cmp);
    let ci = if slopes.is_empty() {
        [f64::NAN, f64::NAN]
    } else {
        let q = |p: f64| slopes[((p * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)];
        [q(0.05), q(0.95)]
    };
    Ok(QvScaling { scales, variances, slope, ci })
}

/// Runs `replicas` IBM replicas of `base` at each `K` up to time `t`,
/// pairs the final populations with `phi`, and regresses the variances.
pub fn qv_scaling_test(
    base: &SimConfig,
    scales: &[u64],
    replicas: usize,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    t: f64,
    threads: Option<usize>,
) -> Result<QvScaling, DiagnosticsError> {
    check_qv_shape(scales, replicas)?;
    let mut samples = Vec::with_capacity(scales.len());
    for &k in scales {
        let mut cfg = base.clone();
        cfg.scale = k;
        cfg.t_end = t;
        cfg.snapshot_times.clear();
        let values = run_ensemble_with(&cfg, replicas, threads, |cfg, r| {
            simulate_replica_state(cfg, r).map(|(_, state)| state.pair(phi))
        })?;
        samples.push((k, values));
    }
    qv_regression(&samples, 1000, base.seed)
}

/// Counts samples with `R + E > R_0 + E_0 + t sup|renewal| + tol`,
/// `tol = 1e-9 (R_0 + E_0 + 1)`.
pub fn biomass_audit<S: ObservedSeries + ?Sized>(traj: &S, p: &ModelParams) -> u64 {
    let (t, r, e) = (traj.times(), traj.r(), traj.e());
    if t.is_empty() {
        return 0;
    }
    let start = r[0] + e[0];
    let tol = 1e-9 * (start + 1.0);
    let rate = p.renewal_sup();
    (0..t.len())
        .filter(|&i| r[i] + e[i] > start + (t[i] - t[0]) * rate + tol)
        .count() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub passed: bool,
}

/// One-sample Kolmogorov-Smirnov test of `samples` against
/// Exponential(`rate`) at significance 0.01 (asymptotic critical value with
/// the small-sample correction).
pub fn ks_exponential(samples: &[f64], rate: f64) -> KsResult {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let statistic = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-rate * x).exp();
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let root = n.sqrt();
    let critical = 1.6276 / (root + 0.12 + 0.11 / root);
    KsResult { statistic, critical, passed: statistic <= critical }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ibm::EventCounts;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest};
    use rand_distr::{Distribution, Exp};

    fn traj(replica: u64, n: Vec<f64>) -> Trajectory {
        let len = n.len();
        Trajectory {
            replica,
            scale: 10,
            times: (0..len).map(|i| i as f64).collect(),
            n: n.clone(),
            e: n.clone(),
            omega: n.clone(),
            r: vec![1.0; len],
            events: EventCounts::default(),
            snapshots: Vec::new(),
        }
    }

    #[test]
    fn pairing_states_and_histograms() {
        let s = PopulationState::new(vec![1.0, 2.0, 3.0], 1.0, 3).unwrap();
        assert_eq!(pair_measure(&s, |x| x), 2.0);
        let empty = PopulationState::empty(1.0, 5).unwrap();
        assert_eq!(pair_measure(&empty, |x| x.sin()), 0.0);

        let xs: Vec<f64> = (0..500).map(|i| 0.01 * i as f64 + 0.003).collect();
        let state = PopulationState::new(xs.clone(), 1.0, 100).unwrap();
        let spec = HistogramSpec::uniform(0.0, 5.0, 1000).unwrap();
        let h = spec.bin_energies(&xs, 100.0);
        let phi = |x: f64| (0.7 * x).sin();
        // |phi'| <= 0.7, so each individual moves by at most 0.7 * width / 2.
        let bound = 0.7 * 0.0025 * state.n();
        assert!((pair_measure(&state, phi) - pair_measure(&h, phi)).abs() <= bound);
    }

    #[test]
    fn summary_of_one_and_two_replicas() {
        let one = summarize_ensemble(&[traj(0, vec![1.0, 2.0])]).unwrap();
        assert_eq!(one.n.variance, vec![0.0, 0.0]);
        let two = summarize_ensemble(&[traj(1, vec![3.0, 3.0]), traj(0, vec![1.0, 1.0])]).unwrap();
        assert_eq!(two.n.mean, vec![2.0, 2.0]);
        assert_eq!(two.n.variance, vec![2.0, 2.0]);
        assert_eq!(two.n.min, vec![1.0, 1.0]);
        assert_eq!(two.n.max, vec![3.0, 3.0]);
        assert_eq!(two.replicas, 2);
    }

    #[test]
    fn summary_rejects_mismatched_grids() {
        assert_eq!(summarize_ensemble(&[]), Err(DiagnosticsError::Empty));
        let err = summarize_ensemble(&[traj(0, vec![1.0, 2.0]), traj(1, vec![1.0])]).unwrap_err();
        assert!(matches!(err, DiagnosticsError::TimeGrid { replica: 1, .. }));
    }

    proptest! {
        #[test]
        fn summary_is_permutation_invariant(
            values in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 2..8),
            seed in any::<u64>(),
        ) {
            let trajs: Vec<Trajectory> = values.iter().enumerate().map(|(i, v)| traj(i as u64, v.clone())).collect();
            let mut shuffled = trajs.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let a = summarize_ensemble(&trajs).unwrap();
            let b = summarize_ensemble(&shuffled).unwrap();
            prop_assert_eq!(&a, &b);
            for i in 0..4 {
                prop_assert!(a.n.variance[i] >= 0.0);
                prop_assert!(a.n.min[i] <= a.n.mean[i] && a.n.mean[i] <= a.n.max[i]);
            }
        }

        #[test]
        fn pairing_is_linear_and_additive(
            xs in prop::collection::vec(0.01f64..10.0, 0..20),
            ys in prop::collection::vec(0.01f64..10.0, 0..20),
            a in -3.0f64..3.0,
        ) {
            let s = |v: &[f64]| PopulationState::new(v.to_vec(), 1.0, 7).unwrap();
            let both: Vec<f64> = xs.iter().chain(&ys).copied().collect();
            let f = |x: f64| x.sqrt();
            let g = |x: f64| (x - 1.0).powi(2);
            let lhs = pair_measure(&s(&xs), |x| a * f(x) + g(x));
            let rhs = a * pair_measure(&s(&xs), f) + pair_measure(&s(&xs), g);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            let joint = pair_measure(&s(&both), f);
            let split = pair_measure(&s(&xs), f) + pair_measure(&s(&ys), f);
            prop_assert!((joint - split).abs() <= 1e-12 * (1.0 + joint.abs()));
        }

        #[test]
        fn l1_triangle_inequality(
            masses in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 3),
        ) {
            let h = |m: &Vec<f64>| Histogram {
                edges: (0..=6).map(|i| i as f64).collect(),
                mass: m.clone(),
                outside: 0.0,
            };
            let (a, b, c) = (h(&masses[0]), h(&masses[1]), h(&masses[2]));
            if let (Some(ab), Some(bc), Some(ac)) =
                (l1_distance(&a, &b).unwrap(), l1_distance(&b, &c).unwrap(), l1_distance(&a, &c).unwrap())
            {
                prop_assert!(ac <= ab + bc + 1e-12);
                prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
            }
        }
    }

    #[test]
    fn sup_relative_error_cases() {
        assert_eq!(sup_relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(sup_relative_error(&[1.5, 2.0], &[1.0, 2.0]), 0.25);
        assert_eq!(sup_relative_error(&[0.0], &[0.0]), 0.0);
        assert!(sup_relative_error(&[1.0], &[0.0]).is_infinite());
    }

    #[test]
    fn regression_recovers_inverse_scaling() {
        // Var = c / K exactly, realized by symmetric two-point samples.
        let samples: Vec<(u64, Vec<f64>)> = [100u64, 400, 1600]
            .iter()
            .map(|&k| {
                let s = (3.0 / k as f64).sqrt();
                (k, (0..60).map(|i| if i % 2 == 0 { s } else { -s }).collect())
            })
            .collect();
        let q = qv_regression(&samples, 200, 1).unwrap();
        assert!((q.slope + 1.0).abs() < 1e-12, "{}", q.slope);
        assert!(q.ci[0] <= q.slope + 1e-9 && q.slope - 1e-9 <= q.ci[1]);
    }

    #[test]
    fn regression_preconditions() {
        let s = |k: u64, n: usize| (k, (0..n).map(|i| i as f64).collect::<Vec<_>>());
        assert!(matches!(qv_regression(&[s(100, 60)], 10, 0), Err(DiagnosticsError::Precondition(_))));
        assert!(matches!(
            qv_regression(&[s(1, 60), s(2, 60), s(3, 10)], 10, 0),
            Err(DiagnosticsError::Precondition(_))
        ));
        let flat = vec![(1u64, vec![1.0; 60]), s(2, 60), s(3, 60)];
        assert_eq!(qv_regression(&flat, 10, 0), Err(DiagnosticsError::DegenerateVariance { scale: 1 }));
    }

    #[test]
    fn biomass_audit_flags_a_corrupted_sample() {
        let p = ModelParams::reference();
        let mut t = traj(0, vec![1.0, 0.9, 0.8, 0.7]);
        assert_eq!(biomass_audit(&t, &p), 0);
        t.e[2] = 1.0 + 2.0 * p.renewal_sup() + 0.5;
        assert_eq!(biomass_audit(&t, &p), 1);
    }

    #[test]
    fn ks_accepts_exponential_and_rejects_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let exp = Exp::new(2.0).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| exp.sample(&mut rng)).collect();
        assert!(ks_exponential(&xs, 2.0).passed);
        assert!(!ks_exponential(&xs, 2.3).passed);
        let crit = ks_exponential(&xs, 2.0).critical;
        assert!((crit - 1.6276 / 100.1211).abs() < 1e-6);
    }
}

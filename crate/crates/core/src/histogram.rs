//! Fixed-edge energy histograms carrying renormalized mass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HistogramError {
    #[error("bin edges must be finite, strictly increasing and at least two")]
    Edges,
    #[error("histograms have different bin edges")]
    EdgeMismatch,
}

/// Bin edges; bins are `[e_i, e_{i+1})` except the last, which is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistogramWindow", into = "HistogramWindow")]
pub struct HistogramSpec {
    edges: Vec<f64>,
}

/// Serialized form: a uniform window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramWindow {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl TryFrom<HistogramWindow> for HistogramSpec {
    type Error = HistogramError;

    fn try_from(w: HistogramWindow) -> Result<Self, Self::Error> {
        Self::uniform(w.lo, w.hi, w.bins)
    }
}

impl From<HistogramSpec> for HistogramWindow {
    fn from(s: HistogramSpec) -> Self {
        Self {
            lo: s.edges[0],
            hi: s.edges[s.edges.len() - 1],
            bins: s.edges.len() - 1,
        }
    }
}

impl Default for HistogramSpec {
    /// 100 uniform bins on `[0, 5]`.
    fn default() -> Self {
        Self::uniform(0.0, 5.0, 100).expect("valid default window")
    }
}

impl HistogramSpec {
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self, HistogramError> {
        if bins == 0 || !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(HistogramError::Edges);
        }
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + (hi - lo) * i as f64 / bins as f64 })
            .collect();
        Ok(Self { edges })
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self, HistogramError> {
        if edges.len() < 2
            || edges.iter().any(|e| !e.is_finite())
            || edges.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(HistogramError::Edges);
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin containing `x`, or `None` outside the window.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let (lo, hi) = (self.edges[0], self.edges[self.edges.len() - 1]);
        if !(x >= lo && x <= hi) {
            return None;
        }
        let j = self.edges.partition_point(|&e| e <= x);
        Some((j - 1).min(self.bins() - 1))
    }

    pub fn empty(&self) -> Histogram {
        Histogram {
            edges: self.edges.clone(),
            mass: vec![0.0; self.bins()],
            outside: 0.0,
        }
    }

    /// Histogram of `energies`, each contributing `1 / scale`.
    pub fn bin_energies(&self, energies: &[f64], scale: f64) -> Histogram {
        let mut h = self.empty();
        let w = 1.0 / scale;
        for &x in energies {
            match self.bin_of(x) {
                Some(j) => h.mass[j] += w,
                None => h.outside += w,
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    /// Mass that fell outside the window.
    pub outside: f64,
}

impl Histogram {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    /// `sum_j phi(mid_j) mass_j`.
    pub fn pair(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.midpoints().zip(&self.mass).map(|(m, &w)| phi(m) * w).sum()
    }

    /// Unit-mass copy, or `None` when the window holds no mass.
    pub fn normalized(&self) -> Option<Histogram> {
        let total = self.total();
        if !(total > 0.0) {
            return None;
        }
        Some(Histogram {
            edges: self.edges.clone(),
            mass: self.mass.iter().map(|m| m / total).collect(),
            outside: self.outside / total,
        })
    }

    /// Pointwise mean of histograms sharing their edges.
    pub fn mean(hists: &[Histogram]) -> Result<Histogram, HistogramError> {
        let first = hists.first().ok_or(HistogramError::Edges)?;
        let mut out = Histogram {
            edges: first.edges.clone(),
            mass: vec![0.0; first.mass.len()],
            outside: 0.0,
        };
        for h in hists {
            if h.edges != out.edges {
                return Err(HistogramError::EdgeMismatch);
            }
            for (o, m) in out.mass.iter_mut().zip(&h.mass) {
                *o += m;
            }
            out.outside += h.outside;
        }
        let n = hists.len() as f64;
        out.mass.iter_mut().for_each(|m| *m /= n);
        out.outside /= n;
        Ok(out)
    }
}

/// L1 distance between the unit-mass renormalizations of two histograms on
/// the same edges; `None` when either is empty. Always in `[0, 2]`.
pub fn l1_distance(a: &Histogram, b: &Histogram) -> Result<Option<f64>, HistogramError> {
    if a.edges != b.edges {
        return Err(HistogramError::EdgeMismatch);
    }
    Ok(match (a.normalized(), b.normalized()) {
        (Some(a), Some(b)) => Some(a.mass.iter().zip(&b.mass).map(|(x, y)| (x - y).abs()).sum()),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binning_edges() {
        let s = HistogramSpec::uniform(0.0, 5.0, 100).unwrap();
        assert_eq!(s.bin_of(0.0), Some(0));
        assert_eq!(s.bin_of(0.05), Some(1));
        assert_eq!(s.bin_of(5.0), Some(99));
        assert_eq!(s.bin_of(5.0001), None);
        let h = s.bin_energies(&[0.01, 2.5, 7.0], 3.0);
        assert!((h.total() - 2.0 / 3.0).abs() < 1e-15);
        assert!((h.outside - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_supports_are_two_apart() {
        let s = HistogramSpec::uniform(0.0, 1.0, 4).unwrap();
        let a = s.bin_energies(&[0.1], 1.0);
        let b = s.bin_energies(&[0.9], 1.0);
        assert_eq!(l1_distance(&a, &b).unwrap(), Some(2.0));
        assert_eq!(l1_distance(&a, &a).unwrap(), Some(0.0));
        assert_eq!(l1_distance(&a, &s.empty()).unwrap(), None);
    }

    #[test]
    fn mean_requires_matching_edges() {
        let a = HistogramSpec::uniform(0.0, 1.0, 4).unwrap().empty();
        let b = HistogramSpec::uniform(0.0, 2.0, 4).unwrap().empty();
        assert!(Histogram::mean(&[a.clone(), b]).is_err());
        assert!(Histogram::mean(&[a.clone(), a]).is_ok());
    }

    proptest! {
        #[test]
        fn l1_triangle_inequality(
            xs in prop::collection::vec(0.0f64..5.0, 1..40),
            ys in prop::collection::vec(0.0f64..5.0, 1..40),
            zs in prop::collection::vec(0.0f64..5.0, 1..40),
        ) {
            let s = HistogramSpec::default();
            let (a, b, c) = (s.bin_energies(&xs, 7.0), s.bin_energies(&ys, 3.0), s.bin_energies(&zs, 1.0));
            let ab = l1_distance(&a, &b).unwrap().unwrap();
            let bc = l1_distance(&b, &c).unwrap().unwrap();
            let ac = l1_distance(&a, &c).unwrap().unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
        }
    }
}

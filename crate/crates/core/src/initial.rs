//! The compactly supported initial energy density and its sampler.
//!
//! `u0(x) = C ((x - a)(b - x) / (b - a)^2)^5` on `[a, b]`, zero elsewhere. With
//! `s = (x - a) / (b - a)` this is a Beta(6, 6) density, so the CDF is the
//! regularized incomplete beta function, a degree-11 polynomial in `s`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Table resolution of the inverse-CDF sampler.
pub const CDF_TABLE_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InitialError {
    #[error("initial support needs 0 < x_min < x_max, got [{0}, {1}]")]
    Support(f64, f64),
    #[error("explicit energy #{index} must be positive and finite, got {value}")]
    Energy { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BumpDensity {
    x_min: f64,
    x_max: f64,
    norm: f64,
}

fn shape(s: f64) -> f64 {
    (s * (1.0 - s)).powi(5)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    h / 3.0 * (f(a) + inner + f(b))
}

impl BumpDensity {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self, InitialError> {
        if !(x_min.is_finite() && x_max.is_finite() && 0.0 < x_min && x_min < x_max) {
            return Err(InitialError::Support(x_min, x_max));
        }
        let width = x_max - x_min;
        let integral = simpson(|x| shape((x - x_min) / width), x_min, x_max, 4096);
        Ok(Self {
            x_min,
            x_max,
            norm: 1.0 / integral,
        })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    /// Normalizing constant `C`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= self.x_min || x >= self.x_max {
            return 0.0;
        }
        self.norm * shape((x - self.x_min) / (self.x_max - self.x_min))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let s = ((x - self.x_min) / (self.x_max - self.x_min)).clamp(0.0, 1.0);
        // I_s(6, 6) = sum_{j=6}^{11} binom(11, j) s^j (1-s)^(11-j)
        const BINOM: [f64; 6] = [462.0, 330.0, 165.0, 55.0, 11.0, 1.0];
        (6..=11)
            .map(|j| BINOM[j - 6] * s.powi(j as i32) * (1.0 - s).powi(11 - j as i32))
            .sum()
    }

    pub fn moment(&self, f: impl Fn(f64) -> f64) -> f64 {
        simpson(|x| f(x) * self.density(x), self.x_min, self.x_max, 4096)
    }

    pub fn sampler(&self) -> InverseCdf {
        let n = CDF_TABLE_POINTS;
        let xs: Vec<f64> = (0..n)
            .map(|i| self.x_min + (self.x_max - self.x_min) * i as f64 / (n - 1) as f64)
            .collect();
        let mut cdf: Vec<f64> = xs.iter().map(|&x| self.cdf(x)).collect();
        cdf[0] = 0.0;
        cdf[n - 1] = 1.0;
        InverseCdf { xs, cdf }
    }
}

/// Piecewise-linear inverse of a tabulated CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn sample(&self, u: f64) -> f64 {
        let j = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.xs[j - 1] + w.clamp(0.0, 1.0) * (self.xs[j] - self.xs[j - 1])
    }
}

/// How the initial population is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `K` i.i.d. energies from the bump density on `[x_min, x_max]`.
    DensityU0 {
        x_min: f64,
        x_max: f64,
        #[serde(rename = "R0")]
        r0: f64,
    },
    ExplicitList {
        energies: Vec<f64>,
        #[serde(rename = "R0")]
        r0: f64,
    },
}

impl InitialCondition {
    pub fn reference() -> Self {
        Self::DensityU0 {
            x_min: 1.0,
            x_max: 5.0,
            r0: 1.0,
        }
    }

    pub fn r0(&self) -> f64 {
        match self {
            Self::DensityU0 { r0, .. } | Self::ExplicitList { r0, .. } => *r0,
        }
    }

    /// Largest energy the initial population can hold.
    pub fn max_energy(&self) -> f64 {
        match self {
            Self::DensityU0 { x_max, .. } => *x_max,
            Self::ExplicitList { energies, .. } => energies.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn validate(&self) -> Result<(), InitialError> {
        match self {
            Self::DensityU0 { x_min, x_max, .. } => BumpDensity::new(*x_min, *x_max).map(|_| ()),
            Self::ExplicitList { energies, .. } => match energies
                .iter()
                .enumerate()
                .find(|(_, &x)| !(x.is_finite() && x > 0.0))
            {
                Some((index, &value)) => Err(InitialError::Energy { index, value }),
                None => Ok(()),
            },
        }
    }
}

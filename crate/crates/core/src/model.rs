//! Allometric rate functions, weight functions, and the structural
//! admissibility checks that decide whether a parameter set falls inside the
//! regime where the large-population limit is known to hold.
//!
//! All rates are power laws of the individual energy `x`:
//!
//! | rate              | form                         |
//! |-------------------|------------------------------|
//! | maintenance loss  | `C_alpha * x^alpha`          |
//! | birth             | `1{x > x0} * C_beta * x^beta`|
//! | intake capacity   | `C_gamma * x^gamma`          |
//! | death             | `C_delta * x^delta`          |
//!
//! The resource acts through the Monod response `R / (kappa + R)` and is
//! renewed chemostat-style at rate `D * (R_in - R)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for the equalities and non-strict inequalities of the
/// region checks.
pub const REGION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("energy must be positive and finite, got {0}")]
    EnergyDomain(f64),
    #[error("resource {value} outside [0, {r_max}]")]
    ResourceDomain { value: f64, r_max: f64 },
    #[error("weight exponents must satisfy 0 <= kappa1 <= kappa2, got ({kappa1}, {kappa2})")]
    WeightExponents { kappa1: f64, kappa2: f64 },
    #[error("energy ceiling needs alpha in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
}

/// Raw allometric/chemostat parameters as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllometricParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    #[serde(rename = "C_alpha")]
    pub c_alpha: f64,
    #[serde(rename = "C_beta")]
    pub c_beta: f64,
    #[serde(rename = "C_gamma")]
    pub c_gamma: f64,
    #[serde(rename = "C_delta")]
    pub c_delta: f64,
    pub x0: f64,
    pub kappa: f64,
    pub chi: f64,
    #[serde(rename = "R_in")]
    pub r_in: f64,
    #[serde(rename = "D")]
    pub d_dilution: f64,
    #[serde(rename = "R_max")]
    pub r_max: f64,
}

impl AllometricParams {
    /// The reference parameter set used for the published simulations
    /// (metabolic-theory exponents, chemostat renewal).
    pub fn reference() -> Self {
        Self {
            alpha: 0.75,
            beta: -0.25,
            gamma: 0.75,
            delta: -0.25,
            c_alpha: 1.0,
            c_beta: 0.1,
            c_gamma: 2.0,
            c_delta: 0.05,
            x0: 1.0,
            kappa: 5.0,
            chi: 200.0,
            r_in: 2.0,
            d_dilution: 0.275,
            r_max: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let exps = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ];
        for (name, v) in exps {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        for (name, v) in [("C_beta", self.c_beta), ("C_delta", self.c_delta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be nonnegative, got {v}")));
            }
        }
        let positive = [
            ("C_alpha", self.c_alpha),
            ("C_gamma", self.c_gamma),
            ("x0", self.x0),
            ("kappa", self.kappa),
            ("D", self.d_dilution),
            ("R_max", self.r_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.chi.is_finite() && self.chi > 1.0) {
            return Err(invalid("chi", format!("must exceed 1, got {}", self.chi)));
        }
        if !(self.r_in >= 0.0 && self.r_in <= self.r_max) {
            return Err(invalid(
                "R_in",
                format!("must lie in [0, R_max = {}], got {}", self.r_max, self.r_in),
            ));
        }
        Ok(())
    }
}

fn invalid(name: &'static str, reason: String) -> ModelError {
    ModelError::InvalidParameter { name, reason }
}

/// `x^e` with fast paths for the exponents that allometric models use
/// (multiples of 1/4, small integers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pow(PowKind);

#[derive(Debug, Clone, Copy, PartialEq)]
enum PowKind {
    Zero,
    One,
    Half,
    Quarter,
    ThreeQuarters,
    MinusQuarter,
    MinusHalf,
    Int(i32),
    General(f64),
}

impl Pow {
    pub fn new(e: f64) -> Self {
        let kind = match e {
            0.0 => PowKind::Zero,
            1.0 => PowKind::One,
            0.5 => PowKind::Half,
            0.25 => PowKind::Quarter,
            0.75 => PowKind::ThreeQuarters,
            -0.25 => PowKind::MinusQuarter,
            -0.5 => PowKind::MinusHalf,
            e if e.fract() == 0.0 && e.abs() <= 16.0 => PowKind::Int(e as i32),
            e => PowKind::General(e),
        };
        Self(kind)
    }

    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self.0 {
            PowKind::Zero => 1.0,
            PowKind::One => x,
            PowKind::Half => x.sqrt(),
            PowKind::Quarter => x.sqrt().sqrt(),
            PowKind::ThreeQuarters => {
                let s = x.sqrt();
                s * s.sqrt()
            }
            PowKind::MinusQuarter => 1.0 / x.sqrt().sqrt(),
            PowKind::MinusHalf => 1.0 / x.sqrt(),
            PowKind::Int(n) => x.powi(n),
            PowKind::General(e) => x.powf(e),
        }
    }
}

/// Validated parameters together with the rate evaluators.
///
/// Construction is the only fallible step; every evaluator afterwards is a
/// pure function of its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AllometricParams", into = "AllometricParams")]
pub struct ModelParams {
    rates: AllometricParams,
    shared_growth_exponent: bool,
    pow_alpha: Pow,
    pow_beta: Pow,
    pow_gamma: Pow,
    pow_delta: Pow,
}

impl TryFrom<AllometricParams> for ModelParams {
    type Error = ModelError;

    fn try_from(rates: AllometricParams) -> Result<Self, Self::Error> {
        Self::new(rates)
    }
}

impl From<ModelParams> for AllometricParams {
    fn from(p: ModelParams) -> Self {
        p.rates
    }
}

impl ModelParams {
    pub fn new(rates: AllometricParams) -> Result<Self, ModelError> {
        rates.validate()?;
        Ok(Self {
            rates,
            shared_growth_exponent: rates.gamma == rates.alpha,
            pow_alpha: Pow::new(rates.alpha),
            pow_beta: Pow::new(rates.beta),
            pow_gamma: Pow::new(rates.gamma),
            pow_delta: Pow::new(rates.delta),
        })
    }

    pub fn reference() -> Self {
        Self::new(AllometricParams::reference()).expect("reference parameters are valid")
    }

    pub fn rates(&self) -> &AllometricParams {
        &self.rates
    }

    pub fn x0(&self) -> f64 {
        self.rates.x0
    }

    pub fn chi(&self) -> f64 {
        self.rates.chi
    }

    pub fn r_max(&self) -> f64 {
        self.rates.r_max
    }

    /// `b(x)`; zero at and below the birth transfer `x0`.
    #[inline]
    pub fn birth_rate(&self, x: f64) -> f64 {
        if x > self.rates.x0 {
            self.rates.c_beta * self.pow_beta.eval(x)
        } else {
            0.0
        }
    }

    /// `C_beta x^beta` without the threshold indicator.
    #[inline]
    pub fn birth_law(&self, x: f64) -> f64 {
        self.rates.c_beta * self.pow_beta.eval(x)
    }

    #[inline]
    pub fn death_rate(&self, x: f64) -> f64 {
        self.rates.c_delta * self.pow_delta.eval(x)
    }

    /// Maintenance energy loss `l(x)`.
    #[inline]
    pub fn maintenance(&self, x: f64) -> f64 {
        self.rates.c_alpha * self.pow_alpha.eval(x)
    }

    /// Intake capacity `psi(x)`, the energy-dependent factor of the uptake.
    #[inline]
    pub fn intake_capacity(&self, x: f64) -> f64 {
        self.rates.c_gamma * self.pow_gamma.eval(x)
    }

    /// Monod response `phi(R) = R / (kappa + R)`.
    #[inline]
    pub fn response(&self, r: f64) -> f64 {
        r / (self.rates.kappa + r)
    }

    /// Uptake `f(x, R) = phi(R) psi(x)`.
    #[inline]
    pub fn intake(&self, x: f64, r: f64) -> f64 {
        self.response(r) * self.intake_capacity(x)
    }

    /// Net energy growth `g(x, R) = f(x, R) - l(x)`.
    #[inline]
    pub fn growth(&self, x: f64, r: f64) -> f64 {
        self.intake(x, r) - self.maintenance(x)
    }

    /// Growth and intake capacity from a precomputed response value.
    /// Evaluates a single power when the two exponents coincide.
    #[inline]
    pub fn growth_and_capacity(&self, x: f64, response: f64) -> (f64, f64) {
        let r = &self.rates;
        if self.shared_growth_exponent {
            let xa = self.pow_alpha.eval(x);
            let cap = r.c_gamma * xa;
            (response * cap - r.c_alpha * xa, cap)
        } else {
            let cap = self.intake_capacity(x);
            (response * cap - self.maintenance(x), cap)
        }
    }

    /// `sup_{R in [0, R_max]} |g(x, R)|`, attained at one of the two ends
    /// because the response is nondecreasing.
    #[inline]
    pub fn growth_bound(&self, x: f64) -> f64 {
        let loss = self.maintenance(x);
        loss.max(self.response(self.rates.r_max) * self.intake_capacity(x) - loss)
    }

    /// Coefficient `c` with `growth_bound(x) = c * x^alpha`, when the intake
    /// and loss share their exponent.
    pub fn growth_bound_coefficient(&self) -> Option<f64> {
        if !self.shared_growth_exponent {
            return None;
        }
        let r = &self.rates;
        Some(r.c_alpha.max(self.response(r.r_max) * r.c_gamma - r.c_alpha))
    }

    /// Net growth coefficient under maximal resource, `phi(R_max) C_gamma - C_alpha`.
    pub fn max_net_growth(&self) -> f64 {
        let r = &self.rates;
        self.response(r.r_max) * r.c_gamma - r.c_alpha
    }

    /// Chemostat renewal `D (R_in - R)`.
    #[inline]
    pub fn renewal(&self, r: f64) -> f64 {
        self.rates.d_dilution * (self.rates.r_in - r)
    }

    /// `sup_{[0, R_max]} |renewal|`; the renewal is affine so the sup sits at an end.
    pub fn renewal_sup(&self) -> f64 {
        self.renewal(0.0).abs().max(self.renewal(self.rates.r_max).abs())
    }

    /// Resource drift `renewal(R) - chi * phi(R) * capacity_density` where
    /// `capacity_density` is `<mu, psi>` for the (renormalized) population.
    #[inline]
    pub fn resource_drift(&self, r: f64, capacity_density: f64) -> f64 {
        self.renewal(r) - self.rates.chi * self.response(r) * capacity_density
    }
}

/// All rate values at one `(x, R)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub birth: f64,
    pub death: f64,
    pub maintenance: f64,
    pub intake_capacity: f64,
    pub response: f64,
    pub intake: f64,
    pub growth: f64,
}

pub fn eval_rates(p: &ModelParams, x: f64, r: f64) -> Result<RateSample, ModelError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(ModelError::EnergyDomain(x));
    }
    if !(r >= 0.0 && r <= p.r_max()) {
        return Err(ModelError::ResourceDomain {
            value: r,
            r_max: p.r_max(),
        });
    }
    let response = p.response(r);
    let capacity = p.intake_capacity(x);
    let maintenance = p.maintenance(x);
    let intake = response * capacity;
    Ok(RateSample {
        birth: p.birth_rate(x),
        death: p.death_rate(x),
        maintenance,
        intake_capacity: capacity,
        response,
        intake,
        growth: intake - maintenance,
    })
}

/// Weight `w(x) = x^kappa1 (1 + x)^(kappa2 - kappa1)`: behaves like
/// `x^kappa1` near zero and like `x^kappa2` at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightExponents", into = "WeightExponents")]
pub struct WeightFunction {
    kappa1: f64,
    kappa2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightExponents {
    pub kappa1: f64,
    pub kappa2: f64,
}

impl TryFrom<WeightExponents> for WeightFunction {
    type Error = ModelError;

    fn try_from(e: WeightExponents) -> Result<Self, Self::Error> {
        make_weight(e.kappa1, e.kappa2)
    }
}

impl From<WeightFunction> for WeightExponents {
    fn from(w: WeightFunction) -> Self {
        Self {
            kappa1: w.kappa1,
            kappa2: w.kappa2,
        }
    }
}

pub fn make_weight(kappa1: f64, kappa2: f64) -> Result<WeightFunction, ModelError> {
    if !(kappa1.is_finite() && kappa2.is_finite() && kappa1 >= 0.0 && kappa1 <= kappa2) {
        return Err(ModelError::WeightExponents { kappa1, kappa2 });
    }
    Ok(WeightFunction { kappa1, kappa2 })
}

impl WeightFunction {
    /// `w = 1`, the bounded-rate choice.
    pub fn constant() -> Self {
        Self {
            kappa1: 0.0,
            kappa2: 0.0,
        }
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if self.kappa1 == self.kappa2 {
            return if self.kappa1 == 0.0 { 1.0 } else { x.powf(self.kappa1) };
        }
        (self.kappa1 * x.ln() + (self.kappa2 - self.kappa1) * x.ln_1p()).exp()
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        if self.kappa1 == 0.0 && self.kappa2 == 0.0 {
            return 0.0;
        }
        self.eval(x) * (self.kappa1 / x + (self.kappa2 - self.kappa1) / (1.0 + x))
    }
}

/// One named inequality of an admissibility check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub inequality: String,
    pub satisfied: bool,
}

impl ConstraintCheck {
    fn new(name: &str, inequality: String, satisfied: bool) -> Self {
        Self {
            name: name.to_owned(),
            inequality,
            satisfied,
        }
    }
}

/// Aggregated verdicts of the structural checks. Each validator fills in the
/// fields it is responsible for; `merge` combines partial reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub h0_ok: Option<bool>,
    pub h1_ok: Option<bool>,
    pub weight_ok: Option<bool>,
    pub limit_growth_ok: Option<bool>,
    pub checks: Vec<ConstraintCheck>,
    pub violated_constraints: Vec<ConstraintCheck>,
    pub eta_used: Option<f64>,
    /// Supremum of the admissible `eta` interval `(0, eta_max]`.
    pub eta_max: Option<f64>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl AdmissibilityReport {
    fn push(&mut self, check: ConstraintCheck) -> bool {
        let ok = check.satisfied;
        if !ok {
            self.violated_constraints.push(check.clone());
        }
        self.checks.push(check);
        ok
    }

    pub fn merge(mut self, other: AdmissibilityReport) -> Self {
        self.h0_ok = other.h0_ok.or(self.h0_ok);
        self.h1_ok = other.h1_ok.or(self.h1_ok);
        self.weight_ok = other.weight_ok.or(self.weight_ok);
        self.limit_growth_ok = other.limit_growth_ok.or(self.limit_growth_ok);
        self.eta_used = other.eta_used.or(self.eta_used);
        self.eta_max = other.eta_max.or(self.eta_max);
        for c in other.checks {
            if !self.checks.contains(&c) {
                self.push(c);
            }
        }
        self.warnings.extend(other.warnings);
        self.notes.extend(other.notes);
        self
    }

    /// True when every evaluated verdict passed.
    pub fn all_ok(&self) -> bool {
        [self.h0_ok, self.h1_ok, self.weight_ok, self.limit_growth_ok]
            .iter()
            .all(|v| v.unwrap_or(true))
    }

    /// Verdict used for exit codes: a failed energy-gain condition `h0` is only
    /// a warning, every other evaluated verdict must pass.
    pub fn blocking_ok(&self) -> bool {
        [self.h1_ok, self.weight_ok, self.limit_growth_ok]
            .iter()
            .all(|v| v.unwrap_or(true))
    }

    pub fn is_violated(&self, name: &str) -> bool {
        self.violated_constraints.iter().any(|c| c.name == name)
    }
}

fn le(a: f64, b: f64) -> bool {
    a <= b + REGION_TOL
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= REGION_TOL
}

/// Energy-gain and vanishing-avoidance conditions in the allometric setting:
/// both hold iff `delta <= alpha - 1`, `gamma = alpha` and `C_gamma > C_alpha`.
pub fn validate_h0_h1(p: &AllometricParams) -> AdmissibilityReport {
    let mut report = AdmissibilityReport::default();
    let h1 = report.push(ConstraintCheck::new(
        "delta <= alpha - 1",
        format!("{} <= {}", p.delta, p.alpha - 1.0),
        le(p.delta, p.alpha - 1.0),
    ));
    let same = report.push(ConstraintCheck::new(
        "gamma = alpha",
        format!("{} = {}", p.gamma, p.alpha),
        approx_eq(p.gamma, p.alpha),
    ));
    let dominant = report.push(ConstraintCheck::new(
        "C_gamma > C_alpha",
        format!("{} > {}", p.c_gamma, p.c_alpha),
        p.c_gamma > p.c_alpha,
    ));
    report.h0_ok = Some(same && dominant);
    report.h1_ok = Some(h1);
    report
}

/// Direct check of positive growth at maximal resource, `g(x, R_max) > 0`
/// for all `x`. The coefficient check above ignores the saturation
/// `phi(R_max) < 1`, so this one can fail where that one passes; callers
/// report it as a warning.
pub fn check_growth_at_max_resource(p: &ModelParams) -> Option<String> {
    if let Some(c) = p.growth_bound_coefficient().map(|_| p.max_net_growth()) {
        if c <= 0.0 {
            return Some(format!(
                "energy gain fails at maximal resource: phi(R_max) * C_gamma - C_alpha = {c:.6} <= 0, \
                 so every energy decreases for every resource level"
            ));
        }
        return None;
    }
    log_grid(1e-6, 1e6, 241)
        .into_iter()
        .find(|&x| p.growth(x, p.r_max()) <= 0.0)
        .map(|x| {
            format!(
                "energy gain fails at maximal resource: g({x:.3e}, R_max) = {:.6e} <= 0",
                p.growth(x, p.r_max())
            )
        })
}

/// Case analysis for weight functions of allometric form with exponents
/// `(kappa1, kappa2)`. `weight_ok` reflects only the case analysis; the
/// report also records whether the energy conditions it presupposes hold.
pub fn validate_weight_region(
    p: &AllometricParams,
    kappa1: f64,
    kappa2: f64,
) -> AdmissibilityReport {
    let mut report = validate_h0_h1(p);
    let mut ok = report.push(ConstraintCheck::new(
        "0 <= kappa1 <= kappa2",
        format!("0 <= {kappa1} <= {kappa2}"),
        kappa1 >= -REGION_TOL && le(kappa1, kappa2),
    ));
    let d = p.delta;
    let alpha_unit = || {
        ConstraintCheck::new(
            "0 <= alpha <= 1",
            format!("0 <= {} <= 1", p.alpha),
            p.alpha >= -REGION_TOL && le(p.alpha, 1.0),
        )
    };
    if d > 0.0 {
        ok &= report.push(ConstraintCheck::new(
            "delta <= 0",
            format!("{d} <= 0"),
            false,
        ));
    } else if d < -1.0 {
        ok &= report.push(ConstraintCheck::new(
            "kappa1 = -delta",
            format!("{kappa1} = {}", -d),
            approx_eq(kappa1, -d),
        ));
        ok &= report.push(ConstraintCheck::new(
            "kappa2 = -delta",
            format!("{kappa2} = {}", -d),
            approx_eq(kappa2, -d),
        ));
        ok &= report.push(alpha_unit());
        ok &= report.push(ConstraintCheck::new(
            "beta <= 2 + delta",
            format!("{} <= {}", p.beta, 2.0 + d),
            le(p.beta, 2.0 + d),
        ));
    } else {
        ok &= report.push(ConstraintCheck::new(
            "-delta <= kappa1",
            format!("{} <= {kappa1}", -d),
            le(-d, kappa1),
        ));
        ok &= report.push(ConstraintCheck::new(
            "kappa2 <= (1 - delta) / 2",
            format!("{kappa2} <= {}", (1.0 - d) / 2.0),
            le(kappa2, (1.0 - d) / 2.0),
        ));
        ok &= report.push(alpha_unit());
        ok &= report.push(ConstraintCheck::new(
            "beta <= 1",
            format!("{} <= 1", p.beta),
            le(p.beta, 1.0),
        ));
    }
    report.weight_ok = Some(ok);
    report
}

/// Whether some allometric weight exists for `(alpha, beta, delta)`; the
/// witness `kappa1 = kappa2 = max(-delta, 0)` covers both admissible branches.
pub fn weight_region_admits(p: &AllometricParams) -> bool {
    let k = (-p.delta).max(0.0);
    validate_weight_region(p, k, k).weight_ok == Some(true)
}

/// Growth condition on test functions for the limit equation: there must be
/// `eta in (0, 1)` with `kappa1 <= alpha <= max(kappa2, 1 - eta)` and
/// `beta <= max(kappa2, 1 - eta)`.
///
/// Decided analytically: the condition holds iff `kappa1 <= alpha` and each of
/// `alpha`, `beta` is either `<= kappa2` or `< 1`. The reported witness is the
/// smallest `eta` on the grid `k / 1000` that satisfies the clauses.
pub fn validate_limit_growth(p: &AllometricParams, kappa1: f64, kappa2: f64) -> AdmissibilityReport {
    let mut report = AdmissibilityReport::default();
    // Largest admissible eta from each clause; 1.0 means "any eta".
    let eta_cap = |v: f64| {
        if le(v, kappa2) {
            1.0
        } else {
            1.0 - v
        }
    };
    let eta_max = eta_cap(p.alpha).min(eta_cap(p.beta));
    let lower = report.push(ConstraintCheck::new(
        "kappa1 <= alpha",
        format!("{kappa1} <= {}", p.alpha),
        le(kappa1, p.alpha),
    ));
    let exists = eta_max > 0.0;
    let witness = if exists {
        let grid = (1..1000)
            .map(|k| k as f64 / 1000.0)
            .find(|&eta| le(p.alpha, kappa2.max(1.0 - eta)) && le(p.beta, kappa2.max(1.0 - eta)));
        Some(grid.unwrap_or(eta_max / 2.0))
    } else {
        None
    };
    let shown = witness.unwrap_or(0.0);
    report.push(ConstraintCheck::new(
        "alpha <= max(kappa2, 1 - eta)",
        format!("{} <= max({kappa2}, {})", p.alpha, 1.0 - shown),
        eta_cap(p.alpha) > 0.0,
    ));
    report.push(ConstraintCheck::new(
        "beta <= max(kappa2, 1 - eta)",
        format!("{} <= max({kappa2}, {})", p.beta, 1.0 - shown),
        eta_cap(p.beta) > 0.0,
    ));
    let ok = lower && exists;
    report.limit_growth_ok = Some(ok);
    if exists {
        report.eta_used = witness;
        report.eta_max = Some(eta_max);
        report.notes.push(format!(
            "admissible eta form the interval (0, {eta_max}]; smaller eta is always easier"
        ));
    }
    report
}

/// Every structural check for a model and a weight of allometric form, with
/// the direct growth check and the numeric weight sweep reported as warnings.
pub fn admissibility(p: &ModelParams, w: &WeightFunction) -> AdmissibilityReport {
    let rates = p.rates();
    let mut report = validate_weight_region(rates, w.kappa1(), w.kappa2())
        .merge(validate_limit_growth(rates, w.kappa1(), w.kappa2()));
    if let Some(msg) = check_growth_at_max_resource(p) {
        report.h0_ok = Some(false);
        report.warnings.push(msg);
    }
    let sweep = check_weight_assumption_numeric(p, w, &log_grid(1e-6, 1e6, 241));
    if !sweep.pass {
        let (name, x) = sweep.offending.unwrap_or_default();
        report.warnings.push(format!("numeric weight sweep is unstable for the {name} inequality near x = {x:.3e}"));
    }
    report
}

/// Upper bound on any individual energy up to time `t`, starting from at
/// most `x_max`, obtained by integrating the growth under maximal resource.
/// Returns `x_max` itself when the net growth coefficient is not positive.
pub fn max_energy_bound(p: &AllometricParams, x_max: f64, t: f64) -> Result<f64, ModelError> {
    if !(p.alpha > 0.0 && p.alpha < 1.0) {
        return Err(ModelError::AlphaOutOfRange(p.alpha));
    }
    let c = p.r_max / (p.kappa + p.r_max) * p.c_gamma - p.c_alpha;
    if c <= 0.0 {
        return Ok(x_max);
    }
    let e = 1.0 - p.alpha;
    Ok((x_max.powf(e) + e * c * t).powf(1.0 / e))
}

/// `n` log-spaced points covering `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Existence of an allometric weight over a `(delta, beta)` grid at fixed
/// `alpha`; `out[i][j]` is for `deltas[i]`, `betas[j]`.
pub fn region_scan_delta_beta(alpha: f64, deltas: &[f64], betas: &[f64]) -> Vec<Vec<bool>> {
    let mut p = AllometricParams::reference();
    p.alpha = alpha;
    p.gamma = alpha;
    deltas
        .iter()
        .map(|&d| {
            betas
                .iter()
                .map(|&b| {
                    p.delta = d;
                    p.beta = b;
                    weight_region_admits(&p)
                })
                .collect()
        })
        .collect()
}

/// Case analysis for `kappa1 = kappa2 = kappa` over a `(delta, kappa)` grid
/// at fixed `alpha` and `beta`; `out[i][j]` is for `deltas[i]`, `kappas[j]`.
pub fn region_scan_delta_kappa(alpha: f64, beta: f64, deltas: &[f64], kappas: &[f64]) -> Vec<Vec<bool>> {
    let mut p = AllometricParams::reference();
    p.alpha = alpha;
    p.gamma = alpha;
    p.beta = beta;
    deltas
        .iter()
        .map(|&d| {
            p.delta = d;
            kappas
                .iter()
                .map(|&k| validate_weight_region(&p, k, k).weight_ok == Some(true))
                .collect()
        })
        .collect()
}

/// Result of sweeping the three weight-function inequalities over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightAssumptionCheck {
    pub sup_ratio_g: f64,
    pub sup_ratio_b: f64,
    pub sup_ratio_d: f64,
    pub pass: bool,
    /// Which inequality failed first and where (`"g" | "b" | "d"`, energy).
    pub offending: Option<(String, f64)>,
}

/// Ratio above which the value at a grid end is taken as evidence of
/// divergence, relative to the median over the ratio's support.
const STABILITY_FACTOR: f64 = 10.0;

/// Numeric sweep of the weight-function inequalities. Each ratio
/// `LHS / (1 + x + w(x))` must stay finite, and its values at the two grid
/// extremes must not exceed ten times the median of its positive values. A
/// ratio that blows up at 0 or infinity trips the second test long before the
/// grid ends; bounded or decaying ratios never do.
pub fn check_weight_assumption_numeric(
    p: &ModelParams,
    w: &WeightFunction,
    grid: &[f64],
) -> WeightAssumptionCheck {
    let hbar = |v: f64| v + v * v;
    let x0 = p.x0();
    let w_x0 = w.eval(x0);
    let mut series: [(&str, Vec<(f64, f64)>); 3] =
        [("g", Vec::new()), ("b", Vec::new()), ("d", Vec::new())];
    for &x in grid {
        let denom = 1.0 + x + w.eval(x);
        let rg = p.growth_bound(x) * (1.0 + w.derivative(x)) / denom;
        let b = p.birth_rate(x);
        let rb = if b > 0.0 {
            b * (1.0 + hbar((w_x0 + w.eval(x - x0) - w.eval(x)).abs())) / denom
        } else {
            0.0
        };
        let rd = p.death_rate(x) * hbar(w.eval(x)) / denom;
        series[0].1.push((x, rg));
        series[1].1.push((x, rb));
        series[2].1.push((x, rd));
    }

    let mut offending = None;
    let mut sups = [0.0f64; 3];
    for (k, (name, values)) in series.iter().enumerate() {
        if let Some(&(x, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
            sups[k] = f64::INFINITY;
            offending.get_or_insert((name.to_string(), x));
            continue;
        }
        sups[k] = values.iter().map(|&(_, v)| v).fold(0.0, f64::max);
        let mut positive: Vec<f64> = values.iter().map(|&(_, v)| v).filter(|&v| v > 0.0).collect();
        if positive.is_empty() {
            continue;
        }
        positive.sort_by(f64::total_cmp);
        let median = positive[positive.len() / 2];
        for &(x, v) in [values.first(), values.last()].into_iter().flatten() {
            if v > STABILITY_FACTOR * median {
                offending.get_or_insert((name.to_string(), x));
            }
        }
    }
    WeightAssumptionCheck {
        sup_ratio_g: sups[0],
        sup_ratio_b: sups[1],
        sup_ratio_d: sups[2],
        pass: offending.is_none(),
        offending,
    }
}

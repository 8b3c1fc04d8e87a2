//! Test functions paired against population measures and densities.

/// A function `phi(t, x)` with its two partial derivatives.
pub trait TestFunction: Sync {
    fn value(&self, t: f64, x: f64) -> f64;
    fn d_t(&self, t: f64, x: f64) -> f64;
    fn d_x(&self, t: f64, x: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zero;

impl TestFunction for Zero {
    fn value(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_t(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_x(&self, _: f64, _: f64) -> f64 {
        0.0
    }
}

/// `phi(x) = x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Identity;

impl TestFunction for Identity {
    fn value(&self, _: f64, x: f64) -> f64 {
        x
    }
    fn d_t(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_x(&self, _: f64, _: f64) -> f64 {
        1.0
    }
}

/// `phi(x) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn value(&self, _: f64, _: f64) -> f64 {
        self.0
    }
    fn d_t(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_x(&self, _: f64, _: f64) -> f64 {
        0.0
    }
}

/// The C-infinity bump `exp(1 - 1 / (1 - s^2))` with `s = (x - center) / half_width`,
/// equal to 1 at the center and vanishing with all derivatives at the edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothBump {
    pub center: f64,
    pub half_width: f64,
}

impl SmoothBump {
    pub fn new(center: f64, half_width: f64) -> Self {
        assert!(half_width > 0.0, "bump half-width must be positive");
        Self { center, half_width }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = (x - self.center) / self.half_width;
        if s.abs() >= 1.0 {
            return 0.0;
        }
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let s = (x - self.center) / self.half_width;
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - s * s;
        -2.0 * s / (q * q) * self.eval(x) / self.half_width
    }
}

impl TestFunction for SmoothBump {
    fn value(&self, _: f64, x: f64) -> f64 {
        self.eval(x)
    }
    fn d_t(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn d_x(&self, _: f64, x: f64) -> f64 {
        self.derivative(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_shape() {
        let b = SmoothBump::new(2.0, 1.0);
        assert_eq!(b.eval(2.0), 1.0);
        assert_eq!(b.eval(1.0), 0.0);
        assert_eq!(b.eval(3.5), 0.0);
        assert!(b.eval(2.5) > 0.0 && b.eval(2.5) < 1.0);
    }

    #[test]
    fn bump_derivative_matches_differences() {
        let b = SmoothBump::new(1.5, 0.7);
        for &x in &[0.9, 1.2, 1.5, 1.77, 2.1] {
            let h = 1e-6;
            let fd = (b.eval(x + h) - b.eval(x - h)) / (2.0 * h);
            assert!((fd - b.derivative(x)).abs() < 1e-7, "x = {x}");
        }
    }
}

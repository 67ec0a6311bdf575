//! Disutility functions for controllable loads.
//!
//! Each bus carries a strictly convex cost `c(d)` on a bounded interval
//! `[d_min, d_max]`. The frequency-based control law sets the load to the
//! clipped inverse marginal cost `d(ν) = [c'⁻¹(ν)]` evaluated at the local
//! frequency deviation ν, and the per-bus dual term
//! `Φ(ν) = c(d(ν)) − ν d(ν) − ½ D ν² + ν P_m` is what the network dynamics
//! maximize.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Number of sample points used to check that a custom marginal is strictly
/// increasing.
pub const MONOTONICITY_SAMPLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("cost bounds must be finite, got [{lower}, {upper}]")]
    NonFiniteBounds { lower: f64, upper: f64 },
    #[error("lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds { lower: f64, upper: f64 },
    #[error("quadratic slope alpha must be positive and finite, got {0}")]
    NonPositiveAlpha(f64),
    #[error("marginal cost is not strictly increasing near d = {at}")]
    NotStrictlyConvex { at: f64 },
}

/// `c(d) = d² / (2α)` on `[d_min, d_max]`, so `c'⁻¹(y) = α y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost {
    alpha: f64,
    lower: f64,
    upper: f64,
}

impl QuadraticCost {
    pub fn new(alpha: f64, lower: f64, upper: f64) -> Result<Self, CostError> {
        check_bounds(lower, upper)?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(CostError::NonPositiveAlpha(alpha));
        }
        Ok(Self { alpha, lower, upper })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied cost given as the triple `(c, c', c'⁻¹)` plus bounds.
///
/// The inverse marginal only needs to be valid on `[c'(d_min), c'(d_max)]`;
/// outside that range the load response saturates at the bounds without
/// calling it.
#[derive(Clone)]
pub struct CustomCost {
    lower: f64,
    upper: f64,
    cost: ScalarFn,
    marginal: ScalarFn,
    inverse_marginal: ScalarFn,
}

impl CustomCost {
    /// Validates the bounds and samples `c'` at [`MONOTONICITY_SAMPLES`]
    /// points to confirm it is strictly increasing.
    pub fn new(
        lower: f64,
        upper: f64,
        cost: impl Fn(f64) -> f64 + Send + Sync + 'static,
        marginal: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse_marginal: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, CostError> {
        check_bounds(lower, upper)?;
        if upper > lower {
            let n = MONOTONICITY_SAMPLES;
            let mut prev = marginal(lower);
            for k in 1..n {
                let d = lower + (upper - lower) * k as f64 / (n - 1) as f64;
                let m = marginal(d);
                if !(m > prev) {
                    return Err(CostError::NotStrictlyConvex { at: d });
                }
                prev = m;
            }
        }
        Ok(Self {
            lower,
            upper,
            cost: Arc::new(cost),
            marginal: Arc::new(marginal),
            inverse_marginal: Arc::new(inverse_marginal),
        })
    }
}

impl fmt::Debug for CustomCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCost")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomCost {
    fn eq(&self, other: &Self) -> bool {
        self.lower == other.lower
            && self.upper == other.upper
            && Arc::ptr_eq(&self.cost, &other.cost)
            && Arc::ptr_eq(&self.marginal, &other.marginal)
            && Arc::ptr_eq(&self.inverse_marginal, &other.inverse_marginal)
    }
}

fn check_bounds(lower: f64, upper: f64) -> Result<(), CostError> {
    if !(lower.is_finite() && upper.is_finite()) {
        return Err(CostError::NonFiniteBounds { lower, upper });
    }
    if lower > upper {
        return Err(CostError::InvertedBounds { lower, upper });
    }
    Ok(())
}

/// Disutility of a bus's controllable load.
#[derive(Debug, Clone, PartialEq)]
pub enum CostFunction {
    Quadratic(QuadraticCost),
    Custom(CustomCost),
}

impl From<QuadraticCost> for CostFunction {
    fn from(c: QuadraticCost) -> Self {
        CostFunction::Quadratic(c)
    }
}

impl From<CustomCost> for CostFunction {
    fn from(c: CustomCost) -> Self {
        CostFunction::Custom(c)
    }
}

impl CostFunction {
    pub fn quadratic(alpha: f64, lower: f64, upper: f64) -> Result<Self, CostError> {
        QuadraticCost::new(alpha, lower, upper).map(Into::into)
    }

    pub fn lower(&self) -> f64 {
        match self {
            CostFunction::Quadratic(q) => q.lower,
            CostFunction::Custom(c) => c.lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            CostFunction::Quadratic(q) => q.upper,
            CostFunction::Custom(c) => c.upper,
        }
    }

    pub fn cost(&self, d: f64) -> f64 {
        match self {
            CostFunction::Quadratic(q) => d * d / (2.0 * q.alpha),
            CostFunction::Custom(c) => (c.cost)(d),
        }
    }

    pub fn marginal(&self, d: f64) -> f64 {
        match self {
            CostFunction::Quadratic(q) => d / q.alpha,
            CostFunction::Custom(c) => (c.marginal)(d),
        }
    }

    /// `c'⁻¹(y)`, meaningful on `[c'(d_min), c'(d_max)]`.
    pub fn inverse_marginal(&self, y: f64) -> f64 {
        match self {
            CostFunction::Quadratic(q) => q.alpha * y,
            CostFunction::Custom(c) => (c.inverse_marginal)(y),
        }
    }

    /// Controllable-load response `d(ν) = max(min(c'⁻¹(ν), d_max), d_min)`.
    pub fn load_response(&self, nu: f64) -> f64 {
        let (lo, hi) = (self.lower(), self.upper());
        match self {
            CostFunction::Quadratic(q) => (q.alpha * nu).clamp(lo, hi),
            CostFunction::Custom(c) => {
                if nu <= (c.marginal)(lo) {
                    lo
                } else if nu >= (c.marginal)(hi) {
                    hi
                } else {
                    (c.inverse_marginal)(nu).clamp(lo, hi)
                }
            }
        }
    }

    /// Derivative of [`load_response`](Self::load_response) in ν. Zero on the
    /// saturated pieces; at a clip corner the right derivative is returned
    /// for quadratics. Custom costs use a central difference.
    pub fn load_response_slope(&self, nu: f64) -> f64 {
        match self {
            CostFunction::Quadratic(q) => {
                let raw = q.alpha * nu;
                if raw < q.lower || raw >= q.upper {
                    0.0
                } else {
                    q.alpha
                }
            }
            CostFunction::Custom(_) => {
                let h = 1e-7 * nu.abs().max(1.0);
                (self.load_response(nu + h) - self.load_response(nu - h)) / (2.0 * h)
            }
        }
    }

    /// Dual term `Φ(ν) = c(d(ν)) − ν d(ν) − ½ D ν² + ν P_m`.
    pub fn phi_term(&self, damping: f64, disturbance: f64, nu: f64) -> f64 {
        let d = self.load_response(nu);
        self.cost(d) - nu * d - 0.5 * damping * nu * nu + nu * disturbance
    }

    /// `Φ'(ν) = −d(ν) − D ν + P_m`.
    pub fn phi_derivative(&self, damping: f64, disturbance: f64, nu: f64) -> f64 {
        -self.load_response(nu) - damping * nu + disturbance
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(alpha: f64, lo: f64, hi: f64) -> CostFunction {
        CostFunction::quadratic(alpha, lo, hi).unwrap()
    }

    /// Solves `c'(d) = y` for `d` by bisection over a wide interval.
    fn invert_marginal_by_bisection(cost: &CostFunction, y: f64) -> f64 {
        let (mut a, mut b) = (-1e6, 1e6);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if cost.marginal(m) < y {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn load_response_examples() {
        let c = quad(1.0, -10.0, 10.0);
        let oracle = invert_marginal_by_bisection(&c, 0.25);
        assert!((oracle - 0.25).abs() < 1e-12);
        assert_eq!(c.load_response(0.25), 0.25);
        assert_eq!(c.load_response(0.0), 0.0);
        assert_eq!(quad(1.0, -0.1, 0.1).load_response(5.0), 0.1);
        assert_eq!(quad(1.0, -0.1, 0.1).load_response(-5.0), -0.1);
    }

    #[test]
    fn phi_examples() {
        let c = quad(1.0, -10.0, 10.0);
        assert!((c.phi_term(1.0, 1.0, 0.25) - 0.1875).abs() < 1e-15);
        assert!((c.phi_derivative(1.0, 1.0, 0.25) - 0.5).abs() < 1e-15);
        assert_eq!(c.phi_term(1.0, 0.0, 0.0), 0.0);
        assert_eq!(c.phi_derivative(1.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn phi_matches_inner_minimization() {
        // Φ(ν) = min_{d ∈ box, d̂} c(d) − ν d + d̂²/(2D) − ν d̂ + ν P_m, brute-forced on a grid.
        let c = quad(1.0, -10.0, 10.0);
        let (damping, pm, nu) = (1.0, 1.0, 0.25);
        let mut best = f64::INFINITY;
        for i in 0..=20_000 {
            let d = -1.0 + 2.0 * i as f64 / 20_000.0;
            let dhat = damping * nu;
            let v = c.cost(d) - nu * d + dhat * dhat / (2.0 * damping) - nu * dhat + nu * pm;
            best = best.min(v);
        }
        assert!((best - c.phi_term(damping, pm, nu)).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(
            QuadraticCost::new(0.0, -1.0, 1.0),
            Err(CostError::NonPositiveAlpha(0.0))
        );
        assert!(matches!(
            QuadraticCost::new(1.0, 1.0, -1.0),
            Err(CostError::InvertedBounds { .. })
        ));
        assert!(matches!(
            QuadraticCost::new(1.0, f64::NEG_INFINITY, 1.0),
            Err(CostError::NonFiniteBounds { .. })
        ));
        // zero-width box is allowed: the load is not controllable
        assert_eq!(quad(1.0, 0.0, 0.0).load_response(3.0), 0.0);
    }

    #[test]
    fn custom_cost_rejects_nonincreasing_marginal() {
        // c(d) = -d², concave
        let err = CustomCost::new(-1.0, 1.0, |d| -d * d, |d| -2.0 * d, |y| -y / 2.0).unwrap_err();
        assert!(matches!(err, CostError::NotStrictlyConvex { .. }));
        // c(d) = d⁴/4 has c'' = 0 at the origin but c' stays strictly increasing
        assert!(CustomCost::new(-1.0, 1.0, |d| d.powi(4) / 4.0, |d| d.powi(3), f64::cbrt).is_ok());
    }

    #[test]
    fn custom_cost_clips_outside_marginal_range() {
        // c(d) = e^d − d, c'(d) = e^d − 1, c'⁻¹(y) = ln(1 + y)
        let c: CostFunction = CustomCost::new(
            -0.5,
            0.5,
            |d: f64| d.exp() - d,
            |d: f64| d.exp() - 1.0,
            |y: f64| (1.0 + y).ln(),
        )
        .unwrap()
        .into();
        assert_eq!(c.load_response(-5.0), -0.5);
        assert_eq!(c.load_response(5.0), 0.5);
        assert!((c.load_response(0.1) - 1.1f64.ln()).abs() < 1e-15);
        assert!((c.load_response_slope(0.1) - 1.0 / 1.1).abs() < 1e-6);
    }

    #[test]
    fn slope_is_zero_when_saturated() {
        let c = quad(2.0, -0.1, 0.1);
        assert_eq!(c.load_response_slope(1.0), 0.0);
        assert_eq!(c.load_response_slope(-1.0), 0.0);
        assert_eq!(c.load_response_slope(0.0), 2.0);
    }
}

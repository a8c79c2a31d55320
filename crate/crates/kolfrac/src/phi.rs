//! Scalar nonlinearities with analytic first and second derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testfn::TestFunction;

/// The supported nonlinearity kinds. `SoftAbs` is the smooth stand-in for
/// `|t|`: `sqrt(t^2 + eps^2)`, which keeps the second derivative Lipschitz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiKind {
    Quadratic { a: f64, b: f64, c: f64 },
    Power { k: u32 },
    Exponential,
    SoftAbs { eps: f64 },
}

/// A nonlinearity `phi` together with the interval on which it is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiFunction {
    #[serde(flatten)]
    pub kind: PhiKind,
    /// Domain interval `U = [lo, hi]`; `None` means all of `R`.
    pub interval: Option<(f64, f64)>,
}

impl PhiFunction {
    pub fn quadratic(a: f64, b: f64, c: f64) -> Self {
        PhiFunction {
            kind: PhiKind::Quadratic { a, b, c },
            interval: None,
        }
    }

    pub fn power(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(
                "power nonlinearity needs exponent >= 2".into(),
            ));
        }
        Ok(PhiFunction {
            kind: PhiKind::Power { k },
            interval: None,
        })
    }

    pub fn exponential() -> Self {
        PhiFunction {
            kind: PhiKind::Exponential,
            interval: None,
        }
    }

    pub fn softabs(eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput("softabs needs eps > 0".into()));
        }
        Ok(PhiFunction {
            kind: PhiKind::SoftAbs { eps },
            interval: None,
        })
    }

    pub fn with_interval(mut self, lo: f64, hi: f64) -> Self {
        self.interval = Some((lo, hi));
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            PhiKind::Quadratic { a, b, c } => a * t * t + b * t + c,
            PhiKind::Power { k } => t.powi(k as i32),
            PhiKind::Exponential => t.exp(),
            PhiKind::SoftAbs { eps } => (t * t + eps * eps).sqrt(),
        }
    }

    pub fn d1(&self, t: f64) -> f64 {
        match self.kind {
            PhiKind::Quadratic { a, b, .. } => 2.0 * a * t + b,
            PhiKind::Power { k } => k as f64 * t.powi(k as i32 - 1),
            PhiKind::Exponential => t.exp(),
            PhiKind::SoftAbs { eps } => t / (t * t + eps * eps).sqrt(),
        }
    }

    pub fn d2(&self, t: f64) -> f64 {
        match self.kind {
            PhiKind::Quadratic { a, .. } => 2.0 * a,
            PhiKind::Power { k } => (k * (k - 1)) as f64 * t.powi(k as i32 - 2),
            PhiKind::Exponential => t.exp(),
            PhiKind::SoftAbs { eps } => {
                let s2 = t * t + eps * eps;
                eps * eps / (s2 * s2.sqrt())
            }
        }
    }

    /// Convexity on the whole line (odd powers are not convex globally).
    pub fn convex(&self) -> bool {
        match self.kind {
            PhiKind::Quadratic { a, .. } => a >= 0.0,
            PhiKind::Power { k } => k % 2 == 0,
            PhiKind::Exponential | PhiKind::SoftAbs { .. } => true,
        }
    }

    /// Hölder exponent of the second derivative; every supported kind is
    /// locally C^{2,1}.
    pub fn holder_alpha(&self) -> f64 {
        1.0
    }

    pub fn contains(&self, t: f64) -> bool {
        match self.interval {
            None => true,
            Some((lo, hi)) => t >= lo && t <= hi,
        }
    }

    pub fn interval_bounds(&self) -> (f64, f64) {
        self.interval
            .unwrap_or((f64::NEG_INFINITY, f64::INFINITY))
    }

    /// Symbolic composition `phi(u)` when it stays inside the closed
    /// function class (polynomial nonlinearities only).
    pub fn compose_class(&self, u: &TestFunction) -> Option<TestFunction> {
        match self.kind {
            PhiKind::Quadratic { a, b, c } => {
                let sq = u.mul(u).ok()?;
                Some(sq.scale(a).add(&u.scale(b)).add_constant(c))
            }
            PhiKind::Power { k } => u.powi(k as usize).ok(),
            PhiKind::Exponential | PhiKind::SoftAbs { .. } => None,
        }
    }
}

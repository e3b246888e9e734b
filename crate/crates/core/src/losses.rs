//! Surrogate losses evaluated at `z = -y f(x)`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{reject, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// `max(z + z0, 0)^(p+1)`.
    PolyHinge { p: u32, z0: f64 },
    /// `(1 + z)^2`.
    Quadratic,
    /// `log2(1 + e^z)`.
    Logistic,
}

impl Loss {
    pub fn poly_hinge(p: u32) -> Result<Self> {
        if p < 1 {
            return reject("poly_hinge needs p >= 1");
        }
        Ok(Loss::PolyHinge { p, z0: 1.0 })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::PolyHinge { .. } => "poly_hinge",
            Loss::Quadratic => "quadratic",
            Loss::Logistic => "logistic",
        }
    }

    /// Parses a kind name; `p` is required for `poly_hinge`.
    pub fn parse(kind: &str, p: Option<u32>) -> Result<Self> {
        match kind {
            "poly_hinge" => Loss::poly_hinge(p.ok_or_else(|| Error::Rejected("poly_hinge needs p".into()))?),
            "quadratic" => Ok(Loss::Quadratic),
            "logistic" => Ok(Loss::Logistic),
            other => reject(format!("unknown loss kind '{other}'")),
        }
    }

    /// Threshold below which a poly-hinge is flat. The other kinds report 1.
    pub fn z0(&self) -> f64 {
        match self {
            Loss::PolyHinge { z0, .. } => *z0,
            _ => 1.0,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Loss::PolyHinge { p, z0 } => {
                let t = (z + z0).max(0.0);
                t.powi(p as i32 + 1)
            }
            Loss::Quadratic => (1.0 + z) * (1.0 + z),
            Loss::Logistic => (z.max(0.0) + (-z.abs()).exp().ln_1p()) / LN_2,
        }
    }

    /// First derivative, defined everywhere for the three kinds.
    pub fn d1(&self, z: f64) -> f64 {
        match *self {
            Loss::PolyHinge { p, z0 } => {
                let t = (z + z0).max(0.0);
                (p + 1) as f64 * t.powi(p as i32)
            }
            Loss::Quadratic => 2.0 * (1.0 + z),
            Loss::Logistic => logistic_sigmoid(z) / LN_2,
        }
    }

    /// Second derivative. For `p = 1` this is the right-hand value at the kink.
    pub fn d2(&self, z: f64) -> f64 {
        match *self {
            Loss::PolyHinge { p, z0 } => {
                let t = z + z0;
                if p == 1 {
                    if t >= 0.0 { 2.0 } else { 0.0 }
                } else {
                    let t = t.max(0.0);
                    ((p + 1) * p) as f64 * t.powi(p as i32 - 1)
                }
            }
            Loss::Quadratic => 2.0,
            Loss::Logistic => {
                let s = logistic_sigmoid(z);
                s * (1.0 - s) / LN_2
            }
        }
    }

    /// Checked derivative of order 1 or 2.
    pub fn deriv(&self, z: f64, order: u32) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::NonFinite("loss argument".into()));
        }
        if let Loss::PolyHinge { p, .. } = self {
            if order > *p {
                return reject(format!("order {order} exceeds smoothness p = {p}"));
            }
        }
        match order {
            1 => Ok(self.d1(z)),
            2 => Ok(self.d2(z)),
            _ => reject(format!("derivative order {order} not supported")),
        }
    }
}

/// Overflow-safe `1 / (1 + e^{-z})`.
pub fn logistic_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateReport {
    /// `l(z) >= 1{z >= 0}` everywhere on the grid.
    pub surrogate: bool,
    /// `l'(z) >= 0`.
    pub monotone: bool,
    /// `l'(z) = 0` exactly when `z <= -z0`, with the boundary located to 1e-12.
    pub flat_iff_below_z0: bool,
}

impl SurrogateReport {
    pub fn all(&self) -> bool {
        self.surrogate && self.monotone && self.flat_iff_below_z0
    }
}

pub fn check_surrogate(loss: &Loss, grid: &[f64]) -> Result<SurrogateReport> {
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo <= -5.0 && hi >= 5.0) {
        return reject("grid must span at least [-5, 5]");
    }
    let z0 = loss.z0();
    let mut rep = SurrogateReport { surrogate: true, monotone: true, flat_iff_below_z0: true };
    for &z in grid {
        let l = loss.eval(z);
        let d = loss.d1(z);
        if l < if z >= 0.0 { 1.0 } else { 0.0 } {
            rep.surrogate = false;
        }
        if d < 0.0 {
            rep.monotone = false;
        }
        // Exact zero test: high powers make l' tiny but nonzero just above -z0.
        let flat = d == 0.0;
        if flat != (z <= -z0 + 1e-12) {
            rep.flat_iff_below_z0 = false;
        }
    }
    Ok(rep)
}

/// `-5, -4.99, ..., 5` built from integers so the grid points are reproducible.
pub fn default_grid() -> Vec<f64> {
    (-500..=500).map(|k| k as f64 / 100.0).collect()
}

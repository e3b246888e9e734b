//! Scalar activations, their derivatives, and grid-based class membership.

use std::collections::BTreeSet;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{reject, Error, Result};
use crate::losses::logistic_sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// `log2(1 + e^z)`.
    Softplus,
    Relu,
    /// `max(z, 0)^2`.
    Requ,
    /// `1{z >= 0}`.
    Threshold,
    LeakyRelu { alpha: f64 },
    /// `z` for `z >= 0`, `alpha (e^z - 1)` below, with `alpha < 0`.
    Elu { alpha: f64 },
    Sigmoid,
    /// `(e^z - 1) / (e^z + 1)`, i.e. `tanh(z / 2)`.
    Tanh,
    Arctan,
    Softsign,
    Quadratic,
    Linear,
    /// Constant output 1.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronClass {
    SoftplusClass,
    ReluClass,
    LeakyReluClass,
    SigmoidClass,
    QuadraticClass,
}

impl Activation {
    pub fn leaky_relu(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return reject("leaky_relu needs alpha in (0, 1)");
        }
        Ok(Activation::LeakyRelu { alpha })
    }

    pub fn elu(alpha: f64) -> Result<Self> {
        if !(alpha < 0.0) {
            return reject("elu needs alpha < 0");
        }
        Ok(Activation::Elu { alpha })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Softplus => "softplus",
            Activation::Relu => "relu",
            Activation::Requ => "requ",
            Activation::Threshold => "threshold",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Elu { .. } => "elu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Arctan => "arctan",
            Activation::Softsign => "softsign",
            Activation::Quadratic => "quadratic",
            Activation::Linear => "linear",
            Activation::Constant => "constant",
        }
    }

    /// Parses a kind name; `alpha` is required for `leaky_relu` and `elu`.
    pub fn parse(kind: &str, alpha: Option<f64>) -> Result<Self> {
        let need = || alpha.ok_or_else(|| Error::Rejected(format!("{kind} needs alpha")));
        Ok(match kind {
            "softplus" => Activation::Softplus,
            "relu" => Activation::Relu,
            "requ" => Activation::Requ,
            "threshold" => Activation::Threshold,
            "leaky_relu" => Activation::leaky_relu(need()?)?,
            "elu" => Activation::elu(need()?)?,
            "sigmoid" => Activation::Sigmoid,
            "tanh" => Activation::Tanh,
            "arctan" => Activation::Arctan,
            "softsign" => Activation::Softsign,
            "quadratic" => Activation::Quadratic,
            "linear" => Activation::Linear,
            "constant" => Activation::Constant,
            other => return reject(format!("unknown activation kind '{other}'")),
        })
    }

    pub fn all_builtin() -> Vec<Activation> {
        vec![
            Activation::Softplus,
            Activation::Relu,
            Activation::Requ,
            Activation::Threshold,
            Activation::LeakyRelu { alpha: 0.1 },
            Activation::Elu { alpha: -0.5 },
            Activation::Sigmoid,
            Activation::Tanh,
            Activation::Arctan,
            Activation::Softsign,
            Activation::Quadratic,
            Activation::Linear,
            Activation::Constant,
        ]
    }

    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Activation::Softplus => (z.max(0.0) + (-z.abs()).exp().ln_1p()) / LN_2,
            Activation::Relu => z.max(0.0),
            Activation::Requ => {
                let t = z.max(0.0);
                t * t
            }
            Activation::Threshold => {
                if z >= 0.0 { 1.0 } else { 0.0 }
            }
            Activation::LeakyRelu { alpha } => {
                if z >= 0.0 { z } else { alpha * z }
            }
            Activation::Elu { alpha } => {
                if z >= 0.0 { z } else { alpha * z.exp_m1() }
            }
            Activation::Sigmoid => logistic_sigmoid(z),
            Activation::Tanh => (0.5 * z).tanh(),
            Activation::Arctan => z.atan(),
            Activation::Softsign => z / (1.0 + z.abs()),
            Activation::Quadratic => z * z,
            Activation::Linear => z,
            Activation::Constant => 1.0,
        }
    }

    /// First derivative; right-hand value at kinks.
    pub fn d1(&self, z: f64) -> f64 {
        match *self {
            Activation::Softplus => logistic_sigmoid(z) / LN_2,
            Activation::Relu => {
                if z >= 0.0 { 1.0 } else { 0.0 }
            }
            Activation::Requ => 2.0 * z.max(0.0),
            Activation::Threshold | Activation::Constant => 0.0,
            Activation::LeakyRelu { alpha } => {
                if z >= 0.0 { 1.0 } else { alpha }
            }
            Activation::Elu { alpha } => {
                if z >= 0.0 { 1.0 } else { alpha * z.exp() }
            }
            Activation::Sigmoid => {
                let s = logistic_sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = (0.5 * z).tanh();
                0.5 * (1.0 - t * t)
            }
            Activation::Arctan => 1.0 / (1.0 + z * z),
            Activation::Softsign => {
                let d = 1.0 + z.abs();
                1.0 / (d * d)
            }
            Activation::Quadratic => 2.0 * z,
            Activation::Linear => 1.0,
        }
    }

    /// Second derivative; right-hand value at kinks (threshold is undefined at 0).
    pub fn d2(&self, z: f64) -> f64 {
        match *self {
            Activation::Softplus => {
                let s = logistic_sigmoid(z);
                s * (1.0 - s) / LN_2
            }
            Activation::Relu
            | Activation::Threshold
            | Activation::Constant
            | Activation::Linear
            | Activation::LeakyRelu { .. } => 0.0,
            Activation::Requ => {
                if z >= 0.0 { 2.0 } else { 0.0 }
            }
            Activation::Elu { alpha } => {
                if z >= 0.0 { 0.0 } else { alpha * z.exp() }
            }
            Activation::Sigmoid => {
                let s = logistic_sigmoid(z);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Activation::Tanh => {
                let t = (0.5 * z).tanh();
                -0.5 * t * (1.0 - t * t)
            }
            Activation::Arctan => {
                let d = 1.0 + z * z;
                -2.0 * z / (d * d)
            }
            Activation::Softsign => {
                let d = 1.0 + z.abs();
                -2.0 * z.signum() / (d * d * d)
            }
            Activation::Quadratic => 2.0,
        }
    }

    pub fn deriv(&self, z: f64, order: u32) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::NonFinite("activation argument".into()));
        }
        match order {
            1 => Ok(self.d1(z)),
            2 => {
                if matches!(self, Activation::Threshold) && z == 0.0 {
                    return reject("threshold has no second derivative at 0");
                }
                Ok(self.d2(z))
            }
            _ => reject(format!("derivative order {order} not supported")),
        }
    }

    /// Points where the closed form switches branch.
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            Activation::Relu
            | Activation::Requ
            | Activation::Threshold
            | Activation::LeakyRelu { .. }
            | Activation::Elu { .. }
            | Activation::Softsign => &[0.0],
            _ => &[],
        }
    }

    /// True for kinds whose closed form is real analytic on all of R.
    pub fn is_analytic(&self) -> bool {
        matches!(
            self,
            Activation::Softplus
                | Activation::Sigmoid
                | Activation::Tanh
                | Activation::Arctan
                | Activation::Quadratic
                | Activation::Linear
                | Activation::Constant
        )
    }

    /// Global Lipschitz constant, `None` when unbounded.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            Activation::Softplus => Some(1.0 / LN_2),
            Activation::Relu | Activation::Arctan | Activation::Softsign | Activation::Linear => Some(1.0),
            Activation::LeakyRelu { alpha } | Activation::Elu { alpha } => Some(alpha.abs().max(1.0)),
            Activation::Sigmoid => Some(0.25),
            Activation::Tanh => Some(0.5),
            Activation::Constant => Some(0.0),
            Activation::Requ | Activation::Threshold | Activation::Quadratic => None,
        }
    }

    /// Bound on `sup |sigma'''|`, where a closed form is known.
    pub fn third_deriv_bound(&self) -> Option<f64> {
        match self {
            // s(1-s)(1-2s) peaks at 1/(6 sqrt 3).
            Activation::Softplus => Some(1.0 / (6.0 * 3f64.sqrt() * LN_2)),
            Activation::Quadratic | Activation::Linear | Activation::Constant => Some(0.0),
            _ => None,
        }
    }
}

/// Symmetric grid `-8, -7.99, ..., 8`.
pub fn default_grid() -> Vec<f64> {
    (-800..=800).map(|k| k as f64 / 100.0).collect()
}

const CLASS_TOL: f64 = 1e-10;

/// Class membership decided by the defining predicates on a symmetric grid.
///
/// The softplus class also asks for real analyticity, which no grid can
/// show; for built-in kinds it is read off the closed form.
pub fn classify_activation(a: &Activation, grid: &[f64]) -> Result<BTreeSet<NeuronClass>> {
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo <= -8.0 && hi >= 8.0) {
        return reject("grid must span [-8, 8]");
    }
    if grid.iter().any(|z| !grid.iter().any(|w| (w + z).abs() <= 1e-12)) {
        return reject("grid must be symmetric about 0");
    }
    let mut out = BTreeSet::new();

    if a.is_analytic() && grid.iter().all(|&z| a.d1(z) > 0.0 && a.d2(z) > 0.0) {
        out.insert(NeuronClass::SoftplusClass);
    }
    // Tested on the open negative half-line so that the threshold unit, whose
    // value at 0 is 1, is still a member.
    if grid.iter().filter(|&&z| z < 0.0).all(|&z| a.eval(z).abs() <= CLASS_TOL) {
        out.insert(NeuronClass::ReluClass);
    }
    if grid.iter().filter(|&&z| z >= 0.0).all(|&z| (a.eval(z) - z).abs() <= CLASS_TOL) {
        out.insert(NeuronClass::LeakyReluClass);
    }
    let c = 2.0 * a.eval(0.0);
    if grid.iter().all(|&z| (a.eval(z) + a.eval(-z) - c).abs() <= CLASS_TOL) {
        out.insert(NeuronClass::SigmoidClass);
    }
    let min_d2 = grid.iter().map(|&z| a.d2(z)).fold(f64::INFINITY, f64::min);
    let s0 = a.eval(0.0);
    if min_d2 > CLASS_TOL && grid.iter().all(|&z| a.eval(z) >= s0 - CLASS_TOL) {
        out.insert(NeuronClass::QuadraticClass);
    }
    Ok(out)
}

//! Exact least-squares classifiers on small closed-form laws.

use num_rational::Ratio;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{reject, Result};
use crate::numerics::Rng;

pub type Q = Ratio<i128>;

fn q(n: i128, d: i128) -> Q {
    Ratio::new(n, d)
}

fn qf(v: Q) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

/// `Y = +1` at one point, `Y = -1` uniform on an interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointIntervalLaw {
    pub positive_at: Q,
    pub negative_lo: Q,
    pub negative_hi: Q,
    pub p_positive: Q,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_x: Q,
    pub mean_y: Q,
    pub var_x: Q,
    pub cov_xy: Q,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: Q,
    pub intercept: Q,
}

impl LinearFit {
    pub fn eval(&self, x: f64) -> f64 {
        qf(self.slope) * x + qf(self.intercept)
    }
}

impl PointIntervalLaw {
    /// Positives at 5/4, negatives on [0, 1], balanced.
    pub fn standard() -> Self {
        PointIntervalLaw { positive_at: q(5, 4), negative_lo: q(0, 1), negative_hi: q(1, 1), p_positive: q(1, 2) }
    }

    /// Same law with the positives moved to `x = 2`.
    pub fn shifted() -> Self {
        PointIntervalLaw { positive_at: q(2, 1), ..Self::standard() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.negative_hi <= self.negative_lo {
            return reject("negative interval must have positive length");
        }
        if self.p_positive <= q(0, 1) || self.p_positive >= q(1, 1) {
            return reject("positive probability must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn moments(&self) -> Moments {
        let p = self.p_positive;
        let one = q(1, 1);
        let (lo, hi) = (self.negative_lo, self.negative_hi);
        let neg_mean = (lo + hi) / 2;
        let neg_sq = (lo * lo + lo * hi + hi * hi) / 3;
        let mean_x = p * self.positive_at + (one - p) * neg_mean;
        let mean_y = p - (one - p);
        let e_x2 = p * self.positive_at * self.positive_at + (one - p) * neg_sq;
        let e_xy = p * self.positive_at - (one - p) * neg_mean;
        Moments { mean_x, mean_y, var_x: e_x2 - mean_x * mean_x, cov_xy: e_xy - mean_x * mean_y }
    }

    /// Minimiser of `E (1 - Y f(X))^2 = E (Y - f(X))^2` over affine `f`.
    pub fn least_squares(&self) -> Result<LinearFit> {
        self.validate()?;
        let m = self.moments();
        let slope = m.cov_xy / m.var_x;
        Ok(LinearFit { slope, intercept: m.mean_y - slope * m.mean_x })
    }

    /// `P(Y != sgn f(X))` with `sgn(0) = +1`.
    pub fn misclassification_rate(&self, fit: &LinearFit) -> Q {
        let zero = q(0, 1);
        let p = self.p_positive;
        let f = |x: Q| fit.slope * x + fit.intercept;
        let pos_wrong = if f(self.positive_at) < zero { p } else { zero };
        let (lo, hi) = (self.negative_lo, self.negative_hi);
        // Part of [lo, hi] where f >= 0.
        let wrong_len = if fit.slope == zero {
            if fit.intercept >= zero { hi - lo } else { zero }
        } else {
            let t = -fit.intercept / fit.slope;
            if fit.slope > zero {
                hi - t.max(lo).min(hi)
            } else {
                t.max(lo).min(hi) - lo
            }
        };
        pos_wrong + (q(1, 1) - p) * wrong_len / (hi - lo)
    }

    pub fn sample(&self, rng: &mut Rng) -> (f64, i8) {
        if rng.random::<f64>() < qf(self.p_positive) {
            (qf(self.positive_at), 1)
        } else {
            (rng.random_range(qf(self.negative_lo)..qf(self.negative_hi)), -1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub samples: usize,
    pub rate: f64,
    /// Standard error of the estimate under the exact rate.
    pub sigma: f64,
    /// `(rate - exact) / sigma`.
    pub z_score: f64,
}

/// Empirical misclassification of `fit` on fresh samples.
pub fn monte_carlo_rate(law: &PointIntervalLaw, fit: &LinearFit, samples: usize, rng: &mut Rng) -> Result<MonteCarlo> {
    if samples == 0 {
        return reject("need at least one sample");
    }
    let wrong = (0..samples)
        .filter(|_| {
            let (x, y) = law.sample(rng);
            let f = fit.eval(x);
            let pred = if f >= 0.0 { 1 } else { -1 };
            pred != y
        })
        .count();
    let exact = qf(law.misclassification_rate(fit));
    let rate = wrong as f64 / samples as f64;
    let sigma = (exact * (1.0 - exact) / samples as f64).sqrt();
    let z_score = if sigma > 0.0 { (rate - exact) / sigma } else if rate == exact { 0.0 } else { f64::INFINITY };
    Ok(MonteCarlo { samples, rate, sigma, z_score })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointIntervalReport {
    pub law: PointIntervalLaw,
    pub moments: Moments,
    pub fit: LinearFit,
    pub rate: Q,
}

pub fn point_interval_report(law: &PointIntervalLaw) -> Result<PointIntervalReport> {
    let fit = law.least_squares()?;
    Ok(PointIntervalReport { law: *law, moments: law.moments(), rate: law.misclassification_rate(&fit), fit })
}

/// Balanced finite datasets fitted by least squares on a reduced feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadlossExample {
    /// Positives at `(alpha, 0), (1, 0)`, negatives at `(0, alpha), (0, 1)`;
    /// quadratic neurons reduce to `a0 + a1 x1^2 + a2 x2^2`.
    Subspace,
    /// Positives at `1 + alpha, 1 + 2 alpha`, negatives at `0, 1`; linear
    /// neurons reduce to `a0 + a1 x`.
    Linsep,
}

impl QuadlossExample {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "subspace" | "quadloss_subspace" => Ok(QuadlossExample::Subspace),
            "linsep" | "quadloss_linsep" => Ok(QuadlossExample::Linsep),
            other => reject(format!("unknown quadratic-loss example '{other}'")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QuadlossExample::Subspace => "quadloss_subspace",
            QuadlossExample::Linsep => "quadloss_linsep",
        }
    }

    pub fn default_alpha(self) -> Q {
        match self {
            QuadlossExample::Subspace => q(1, 2),
            QuadlossExample::Linsep => q(1, 6),
        }
    }

    /// Support points with labels, each carrying a quarter of the mass.
    pub fn support(self, alpha: Q) -> Vec<(Vec<Q>, i8)> {
        let (z, one) = (q(0, 1), q(1, 1));
        match self {
            QuadlossExample::Subspace => {
                vec![(vec![alpha, z], 1), (vec![one, z], 1), (vec![z, alpha], -1), (vec![z, one], -1)]
            }
            QuadlossExample::Linsep => {
                vec![(vec![one + alpha], 1), (vec![one + alpha * 2], 1), (vec![z], -1), (vec![one], -1)]
            }
        }
    }

    fn features(self, x: &[Q]) -> Vec<Q> {
        match self {
            QuadlossExample::Subspace => vec![q(1, 1), x[0] * x[0], x[1] * x[1]],
            QuadlossExample::Linsep => vec![q(1, 1), x[0]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadlossReport {
    pub example: QuadlossExample,
    pub alpha: Q,
    pub flipped: bool,
    pub coefficients: Vec<Q>,
    pub outputs: Vec<Q>,
    pub loss: Q,
    pub training_error: Q,
}

/// Exact global minimiser of the mean quadratic loss `(1 - y g(x))^2` of the
/// reduced model on the balanced dataset.
pub fn quadloss_report(example: QuadlossExample, alpha: Q, flipped: bool) -> Result<QuadlossReport> {
    if alpha < q(0, 1) || alpha > q(1, 1) {
        return reject("alpha must lie in [0, 1]");
    }
    let support: Vec<(Vec<Q>, i8)> =
        example.support(alpha).into_iter().map(|(x, y)| (x, if flipped { -y } else { y })).collect();
    let phi: Vec<Vec<Q>> = support.iter().map(|(x, _)| example.features(x)).collect();
    let targets: Vec<Q> = support.iter().map(|(_, y)| q(*y as i128, 1)).collect();
    let coefficients = solve_normal_equations(&phi, &targets)?;
    let outputs: Vec<Q> = phi.iter().map(|p| p.iter().zip(&coefficients).map(|(a, b)| *a * *b).sum()).collect();
    let k = support.len() as i128;
    let loss = outputs.iter().zip(&targets).map(|(g, t)| (*t - *g) * (*t - *g)).sum::<Q>() / k;
    let wrong = outputs
        .iter()
        .zip(&support)
        .filter(|(g, (_, y))| {
            let pred = if **g >= q(0, 1) { 1 } else { -1 };
            pred != *y
        })
        .count();
    Ok(QuadlossReport { example, alpha, flipped, coefficients, outputs, loss, training_error: q(wrong as i128, k) })
}

/// Solves `Phi^T Phi c = Phi^T t` exactly; the Gram matrix must be invertible.
fn solve_normal_equations(phi: &[Vec<Q>], t: &[Q]) -> Result<Vec<Q>> {
    let p = phi[0].len();
    let mut a: Vec<Vec<Q>> = (0..p)
        .map(|i| {
            let mut row: Vec<Q> = (0..p).map(|j| phi.iter().map(|r| r[i] * r[j]).sum()).collect();
            row.push(phi.iter().zip(t).map(|(r, ti)| r[i] * *ti).sum());
            row
        })
        .collect();
    let zero = q(0, 1);
    for col in 0..p {
        let Some(piv) = (col..p).find(|&r| a[r][col] != zero) else {
            return reject("normal equations are singular");
        };
        a.swap(col, piv);
        let lead = a[col][col];
        for v in a[col].iter_mut() {
            *v /= lead;
        }
        for r in 0..p {
            if r != col && a[r][col] != zero {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (v, pv) in a[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[p]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;

    #[test]
    fn point_interval_moments() {
        let m = PointIntervalLaw::standard().moments();
        assert_eq!(m.mean_x, q(7, 8));
        assert_eq!(m.mean_y, q(0, 1));
        assert_eq!(m.cov_xy, q(3, 8));
        assert_eq!(m.var_x, q(35, 192));
    }

    #[test]
    fn point_interval_rate_is_one_sixteenth() {
        let law = PointIntervalLaw::standard();
        let fit = law.least_squares().unwrap();
        assert_eq!(fit.slope, q(72, 35));
        assert_eq!(fit.intercept, q(-9, 5));
        // Threshold sits at the mean 7/8.
        assert_eq!(-fit.intercept / fit.slope, q(7, 8));
        assert_eq!(law.misclassification_rate(&fit), q(1, 16));
    }

    #[test]
    fn shifted_positives_give_zero_rate() {
        let law = PointIntervalLaw::shifted();
        assert_eq!(law.misclassification_rate(&law.least_squares().unwrap()), q(0, 1));
    }

    #[test]
    fn rate_conventions() {
        let law = PointIntervalLaw::standard();
        let zero = LinearFit { slope: q(0, 1), intercept: q(0, 1) };
        // Everything predicted positive.
        assert_eq!(law.misclassification_rate(&zero), q(1, 2));
        let neg = LinearFit { slope: q(-1, 1), intercept: q(1, 2) };
        // Positive at 5/4 wrong, negatives on [0, 1/2] wrong.
        assert_eq!(law.misclassification_rate(&neg), q(1, 2) + q(1, 4));
        let bad = PointIntervalLaw { negative_hi: q(0, 1), ..law };
        assert!(bad.least_squares().is_err());
    }

    #[test]
    fn monte_carlo_small_sample_is_close() {
        let law = PointIntervalLaw::standard();
        let fit = law.least_squares().unwrap();
        let mc = monte_carlo_rate(&law, &fit, 20_000, &mut rng(0, 0)).unwrap();
        assert!(mc.z_score.abs() < 4.0, "{mc:?}");
    }

    #[test]
    fn linsep_example_errs_on_a_quarter() {
        let r = quadloss_report(QuadlossExample::Linsep, q(1, 6), false).unwrap();
        // Threshold at the input mean 7/8 misclassifies the negatives at 1.
        assert_eq!(r.coefficients, vec![q(-189, 155), q(216, 155)]);
        assert_eq!(r.training_error, q(1, 4));
        let flipped = quadloss_report(QuadlossExample::Linsep, q(1, 6), true).unwrap();
        assert_eq!(flipped.training_error, q(1, 4));
    }

    #[test]
    fn subspace_example_minimiser_is_error_free() {
        let r = quadloss_report(QuadlossExample::Subspace, q(1, 2), false).unwrap();
        // By the x1 <-> x2, y -> -y symmetry a2 = -a1 and a0 = 0; then
        // a1 minimises (1 - a1/4)^2 + (1 - a1)^2.
        assert_eq!(r.coefficients, vec![q(0, 1), q(20, 17), q(-20, 17)]);
        assert_eq!(r.training_error, q(0, 1));
    }
}

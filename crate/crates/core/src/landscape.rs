//! Full-batch training, stationarity residuals, local-minimum certification
//! and multi-restart sweeps.

use std::path::Path;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::{classify_activation, default_grid, Activation, NeuronClass};
use crate::constructions::build_relu_inactive;
use crate::datagen::{gen_named, gen_separable, gen_subspace, min_neurons, Dataset, NeuronRule, SubspaceSpec};
use crate::error::{reject, Error, Result};
use crate::losses::{check_surrogate, Loss};
use crate::models::{Branch, Network, SingleLayer};
use crate::numerics::{norm, rng, sym_eig, uniform_ball, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOpts {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub restarts: usize,
    pub init_scale: f64,
    /// Backtracking shrink factor in `(0, 1)`.
    pub shrink: f64,
    /// Sufficient-decrease constant in `(0, 1)`.
    pub armijo: f64,
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts {
            max_iters: 20_000,
            grad_tol: 1e-6,
            restarts: 50,
            init_scale: 0.5,
            shrink: 0.5,
            armijo: 1e-4,
            initial_step: 1.0,
            seed: 0,
        }
    }
}

impl TrainOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return reject("grad_tol must be positive");
        }
        if self.restarts == 0 {
            return reject("restarts must be at least 1");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return reject("shrink must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return reject("armijo constant must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0 && self.init_scale >= 0.0) {
            return reject("initial_step must be positive and init_scale nonnegative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradTol,
    MaxIters,
    /// The line search could not find a decrease.
    Stalled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainResult {
    pub net: Network,
    pub loss_trace: Vec<f64>,
    pub grad_trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
    /// First iterate (index into the traces) with zero training error.
    pub first_zero_error: Option<usize>,
}

impl TrainResult {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::GradTol
    }
}

/// Gradient descent with Armijo backtracking. The step grows by `1/shrink`
/// after each accepted step so flat regions are crossed quickly.
pub fn train_gd(net0: &Network, loss: &Loss, ds: &Dataset, opts: &TrainOpts) -> Result<TrainResult> {
    opts.validate()?;
    let mut theta = net0.params();
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial parameters".into()));
    }
    let mut net = net0.clone();
    let (mut l, mut g) = net.loss_and_grad(loss, ds)?;
    if !l.is_finite() {
        return Err(Error::NonFinite("initial loss".into()));
    }
    let mut loss_trace = vec![l];
    let mut grad_trace = vec![norm(&g)];
    let mut first_zero_error = (*net.training_error(ds)?.numer() == 0).then_some(0);
    let mut step = opts.initial_step;
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;
    loop {
        let gn = *grad_trace.last().unwrap();
        if gn <= opts.grad_tol {
            stop = StopReason::GradTol;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        let g2 = gn * gn;
        let mut accepted = None;
        let mut t = step;
        while t > 1e-20 {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(p, gi)| p - t * gi).collect();
            if trial.iter().all(|v| v.is_finite()) {
                let cand = net.with_params(&trial)?;
                let lc = cand.empirical_loss(loss, ds)?;
                if lc.is_finite() && lc <= l - opts.armijo * t * g2 {
                    accepted = Some((trial, cand, t));
                    break;
                }
            }
            t *= opts.shrink;
        }
        let Some((trial, cand, t)) = accepted else {
            stop = StopReason::Stalled;
            break;
        };
        theta = trial;
        net = cand;
        step = (t / opts.shrink).min(1e6);
        let (nl, ng) = net.loss_and_grad(loss, ds)?;
        if !nl.is_finite() {
            return Err(Error::NonFinite(format!("loss at iteration {}", iterations + 1)));
        }
        l = nl;
        g = ng;
        iterations += 1;
        loss_trace.push(l);
        grad_trace.push(norm(&g));
        if first_zero_error.is_none() && *net.training_error(ds)?.numer() == 0 {
            first_zero_error = Some(iterations);
        }
    }
    Ok(TrainResult { net, loss_trace, grad_trace, iterations, stop, first_zero_error })
}

/// Per-neuron residuals `|| (1/n) sum_i l'(-y_i f_i) y_i sigma'(w_j . x_i + b_j) x_i ||`
/// of the single-layer part. Every local minimum has all of them equal to zero.
/// Architectures without a single-layer part return an empty vector.
pub fn neuron_residuals(net: &Network, loss: &Loss, ds: &Dataset) -> Result<Vec<f64>> {
    let Network::Shortcut(s) = net else { return Ok(Vec::new()) };
    if ds.d() != s.fs.d() {
        return Err(Error::Dim { expected: s.fs.d(), got: ds.d() });
    }
    let n = ds.n() as f64;
    let coef: Vec<f64> = ds.x.iter().zip(&ds.y).map(|(x, &y)| {
        let y = y as f64;
        loss.d1(-y * net.eval(x)) * y / n
    }).collect();
    Ok((0..s.fs.m())
        .map(|j| {
            let mut v = vec![0.0; ds.d()];
            for (x, c) in ds.x.iter().zip(&coef) {
                let k = c * s.fs.activation.d1(s.fs.pre_activation(j, x));
                if k != 0.0 {
                    v.iter_mut().zip(x).for_each(|(vi, xi)| *vi += k * xi);
                }
            }
            norm(&v)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CertifiedMinCandidate,
    Saddle,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOpts {
    pub tol: f64,
    pub delta: f64,
}

impl Default for CertifyOpts {
    fn default() -> Self {
        CertifyOpts { tol: 1e-6, delta: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub loss: f64,
    pub grad_norm: f64,
    pub neuron_residuals: Vec<f64>,
    pub hess_min_eig: f64,
    pub block_size: usize,
    pub n_perturbations: usize,
    /// Smallest `L(theta + delta) - L(theta)` over the sampled perturbations.
    pub worst_loss_delta: f64,
    pub radius: f64,
    pub verdict: Verdict,
    pub training_error: Ratio<u64>,
}

pub fn certify(net: &Network, loss: &Loss, ds: &Dataset, block: &[usize], radius: f64, k: usize, rng: &mut Rng) -> Result<Certificate> {
    certify_with(net, loss, ds, block, radius, k, rng, CertifyOpts::default())
}

#[allow(clippy::too_many_arguments)]
pub fn certify_with(
    net: &Network,
    loss: &Loss,
    ds: &Dataset,
    block: &[usize],
    radius: f64,
    k: usize,
    rng: &mut Rng,
    opts: CertifyOpts,
) -> Result<Certificate> {
    if !(radius > 0.0) {
        return reject("radius must be positive");
    }
    if k < 100 {
        return reject("at least 100 perturbations are required");
    }
    if block.is_empty() {
        return reject("certification block is empty");
    }
    let (l0, g) = net.loss_and_grad(loss, ds)?;
    let grad_norm = norm(&g);
    let hess_min_eig = sym_eig(&net.hessian_block(loss, ds, block)?)?.values[0];
    let theta = net.params();
    let deltas: Vec<Vec<f64>> = (0..k).map(|_| uniform_ball(rng, block.len(), radius)).collect();
    let worst_loss_delta = deltas
        .par_iter()
        .map(|d| {
            let mut p = theta.clone();
            block.iter().zip(d).for_each(|(&i, di)| p[i] += di);
            net.with_params(&p).and_then(|m| m.empirical_loss(loss, ds)).map(|l| l - l0)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let critical = grad_norm <= opts.tol;
    // A residual gradient alone can lower the loss by up to |g| * radius.
    let slack = opts.delta + grad_norm * radius;
    let verdict = if critical && hess_min_eig >= -opts.tol && worst_loss_delta >= -slack {
        Verdict::CertifiedMinCandidate
    } else if critical && (hess_min_eig < -opts.tol || worst_loss_delta < -slack) {
        Verdict::Saddle
    } else {
        Verdict::Inconclusive
    };
    Ok(Certificate {
        loss: l0,
        grad_norm,
        neuron_residuals: neuron_residuals(net, loss, ds)?,
        hess_min_eig,
        block_size: block.len(),
        n_perturbations: k,
        worst_loss_delta,
        radius,
        verdict,
        training_error: net.training_error(ds)?,
    })
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Subspace data, softplus-class neurons, width from the rank rule.
    Subspace,
    /// Subspace data, quadratic neurons with more neurons than the rank.
    SubspaceQuadratic,
    /// Linearly separable data, softplus-class neurons.
    Separable,
    /// ReLU neurons on the cross data, restarted near the dead-neuron point.
    ReluCross,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "subspace" => Scenario::Subspace,
            "subspace_quadratic" => Scenario::SubspaceQuadratic,
            "separable" => Scenario::Separable,
            "relu_cross" => Scenario::ReluCross,
            other => return reject(format!("unknown scenario '{other}'")),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Subspace => "subspace",
            Scenario::SubspaceQuadratic => "subspace_quadratic",
            Scenario::Separable => "separable",
            Scenario::ReluCross => "relu_cross",
        }
    }

    /// Whether the scenario is one where nonzero-error minima are ruled out.
    pub fn claims_no_spurious_minima(self) -> bool {
        !matches!(self, Scenario::ReluCross)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub plus_idx: Vec<usize>,
    pub minus_idx: Vec<usize>,
    pub margin: f64,
    pub activation: Activation,
    pub loss: Loss,
    /// Width; `None` picks the smallest admissible value.
    pub m: Option<usize>,
    pub train: TrainOpts,
    pub perturbations: usize,
    pub radius: f64,
}

impl SweepConfig {
    pub fn default_for(scenario: Scenario) -> Self {
        let base = SweepConfig {
            scenario,
            n: 20,
            d: 6,
            plus_idx: vec![0, 1],
            minus_idx: vec![2, 3],
            margin: 0.5,
            activation: Activation::Softplus,
            loss: Loss::PolyHinge { p: 6, z0: 1.0 },
            m: None,
            train: TrainOpts::default(),
            perturbations: 200,
            radius: 1e-3,
        };
        match scenario {
            Scenario::Subspace => base,
            Scenario::SubspaceQuadratic => SweepConfig { activation: Activation::Quadratic, ..base },
            Scenario::Separable => SweepConfig { n: 40, d: 5, loss: Loss::PolyHinge { p: 3, z0: 1.0 }, m: Some(1), ..base },
            Scenario::ReluCross => SweepConfig { n: 16, d: 3, activation: Activation::Relu, m: Some(8), ..base },
        }
    }

    fn has_class(&self, c: NeuronClass) -> Result<bool> {
        Ok(classify_activation(&self.activation, &default_grid())?.contains(&c))
    }

    fn rank_spec(&self) -> SubspaceSpec {
        SubspaceSpec::identity(self.d, self.plus_idx.clone(), self.minus_idx.clone())
    }

    /// Checks the scenario's assumptions and returns the width to use.
    pub fn resolve_width(&self) -> Result<usize> {
        self.train.validate()?;
        let clause = |s: String| Err(Error::Precondition(s));
        let p = match self.loss {
            Loss::PolyHinge { p, .. } => p,
            _ => return clause(format!("scenario '{}' needs a poly_hinge loss", self.scenario.name())),
        };
        if !check_surrogate(&self.loss, &crate::losses::default_grid())?.all() {
            return clause("loss fails the surrogate checks".into());
        }
        match self.scenario {
            Scenario::Subspace | Scenario::SubspaceQuadratic => {
                let spec = self.rank_spec();
                spec.validate()?;
                let (r, rp, rm) = spec.ranks();
                let (rule, class) = if self.scenario == Scenario::Subspace {
                    if p < 6 {
                        return clause(format!("subspace scenario needs p >= 6, got {p}"));
                    }
                    (NeuronRule::SubspaceRank, NeuronClass::SoftplusClass)
                } else {
                    (NeuronRule::AboveRank, NeuronClass::QuadraticClass)
                };
                if !self.has_class(class)? {
                    return clause(format!("activation '{}' is not in {:?}", self.activation.name(), class));
                }
                let need = min_neurons(rule, self.n, r, rp, rm)?;
                let m = self.m.unwrap_or(need);
                if m < need {
                    return clause(format!("width {m} below the required {need}"));
                }
                Ok(m)
            }
            Scenario::Separable => {
                if p < 3 {
                    return clause(format!("separable scenario needs p >= 3, got {p}"));
                }
                if !self.has_class(NeuronClass::SoftplusClass)? {
                    return clause(format!("activation '{}' is not in the softplus class", self.activation.name()));
                }
                if !(self.margin > 0.0) {
                    return clause("margin must be positive".into());
                }
                Ok(self.m.unwrap_or(1).max(1))
            }
            Scenario::ReluCross => {
                if !self.has_class(NeuronClass::ReluClass)? {
                    return clause(format!("activation '{}' is not in the relu class", self.activation.name()));
                }
                Ok(self.m.unwrap_or(8).max(1))
            }
        }
    }

    fn dataset(&self, seed: u64) -> Result<Dataset> {
        let mut r = rng(seed, 0);
        match self.scenario {
            Scenario::Subspace | Scenario::SubspaceQuadratic => gen_subspace(&self.rank_spec(), self.n, &mut r, Some(seed)),
            Scenario::Separable => Ok(gen_separable(self.d, self.n, self.margin, &mut r, Some(seed))?.dataset),
            Scenario::ReluCross => gen_named("cross", self.n, &mut r, Some(seed)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub restart: usize,
    pub stop: StopReason,
    pub iterations: usize,
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    pub loss: f64,
    pub training_error: Ratio<u64>,
    pub worst_loss_delta: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scenario: Scenario,
    pub seed: u64,
    pub width: usize,
    pub runs: usize,
    pub converged: usize,
    pub certified: usize,
    pub certified_with_error: usize,
    pub saddles: usize,
    pub inconclusive: usize,
    /// Certified minima with nonzero error in a scenario that rules them out.
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub summary: SweepSummary,
    pub rows: Vec<RunRow>,
}

/// Runs independent restarts in parallel. The data use stream 0 of `seed` and
/// restart `i` uses stream `i + 1`, so results do not depend on scheduling.
pub fn sweep_experiment(config: &SweepConfig, seed: u64) -> Result<SweepResult> {
    let width = config.resolve_width()?;
    let ds = config.dataset(seed)?;
    let start = match config.scenario {
        Scenario::ReluCross => Some(build_relu_inactive(&ds, width, config.activation, &config.loss)?),
        _ => None,
    };
    let rows = (0..config.train.restarts)
        .into_par_iter()
        .map(|i| -> Result<RunRow> {
            let mut r = rng(seed, i as u64 + 1);
            let net0 = match &start {
                Some(c) => {
                    let theta = c.net.params();
                    let block = c.net.theta_s();
                    let d = uniform_ball(&mut r, block.len(), 0.25 * c.proven_radius);
                    let mut p = theta;
                    block.clone().zip(&d).for_each(|(k, dk)| p[k] += dk);
                    c.net.with_params(&p)?
                }
                None => {
                    let fs = SingleLayer::random(&mut r, width, config.d, config.activation, config.train.init_scale);
                    Network::shortcut(fs, Branch::Constant { c: 0.0 })?
                }
            };
            let tr = train_gd(&net0, &config.loss, &ds, &config.train)?;
            let block: Vec<usize> = tr.net.theta_s().collect();
            let cert = certify(&tr.net, &config.loss, &ds, &block, config.radius, config.perturbations.max(100), &mut r)?;
            Ok(RunRow {
                restart: i,
                stop: tr.stop,
                iterations: tr.iterations,
                grad_norm: cert.grad_norm,
                hess_min_eig: cert.hess_min_eig,
                loss: cert.loss,
                training_error: cert.training_error,
                worst_loss_delta: cert.worst_loss_delta,
                verdict: if tr.converged() { cert.verdict } else { Verdict::Inconclusive },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let certified = rows.iter().filter(|r| r.verdict == Verdict::CertifiedMinCandidate).count();
    let certified_with_error =
        rows.iter().filter(|r| r.verdict == Verdict::CertifiedMinCandidate && *r.training_error.numer() > 0).count();
    let summary = SweepSummary {
        scenario: config.scenario,
        seed,
        width,
        runs: rows.len(),
        converged: rows.iter().filter(|r| r.stop == StopReason::GradTol).count(),
        certified,
        certified_with_error,
        saddles: rows.iter().filter(|r| r.verdict == Verdict::Saddle).count(),
        inconclusive: rows.iter().filter(|r| r.verdict == Verdict::Inconclusive).count(),
        violations: if config.scenario.claims_no_spurious_minima() { certified_with_error } else { 0 },
    };
    Ok(SweepResult { config: config.clone(), summary, rows })
}

pub const RUN_TABLE_HEADER: [&str; 10] =
    ["restart", "stop", "iterations", "grad_norm", "hess_min_eig", "loss", "training_error", "training_error_value", "worst_loss_delta", "verdict"];

pub fn write_run_table(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUN_TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.restart.to_string(),
            enum_name(&r.stop)?,
            r.iterations.to_string(),
            format!("{:?}", r.grad_norm),
            format!("{:?}", r.hess_min_eig),
            format!("{:?}", r.loss),
            format!("{}/{}", r.training_error.numer(), r.training_error.denom()),
            format!("{:?}", ratio_f64(r.training_error)),
            format!("{:?}", r.worst_loss_delta),
            enum_name(&r.verdict)?,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn enum_name<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_value(v)?.as_str().unwrap_or_default().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::solve_1d_convex;
    use crate::datagen::Provenance;

    fn ph(p: u32) -> Loss {
        Loss::poly_hinge(p).unwrap()
    }

    #[test]
    fn one_dimensional_problem_matches_bisection() {
        let ds = Dataset::from_points("1d", &[vec![1.0]], &[vec![2.0], vec![-1.0], vec![0.5]]).unwrap();
        for loss in [ph(6), Loss::Logistic] {
            // Dead relu with zero output weight: only a0 moves.
            let fs = SingleLayer::new(0.3, vec![0.0], vec![vec![0.0]], Activation::Relu).unwrap();
            let net = Network::shortcut(fs, Branch::Constant { c: 0.0 }).unwrap();
            let opts = TrainOpts { grad_tol: 1e-12, max_iters: 100_000, ..TrainOpts::default() };
            let tr = train_gd(&net, &loss, &ds, &opts).unwrap();
            let want = solve_1d_convex(&loss, &ds.y, 0.0).unwrap();
            let Network::Shortcut(s) = &tr.net else { unreachable!() };
            assert!((s.fs.a0 - want).abs() < 1e-6, "{loss:?}: {} vs {want}", s.fs.a0);
        }
    }

    #[test]
    fn loss_trace_is_non_increasing() {
        let mut r = rng(3, 0);
        let ds = gen_separable(3, 20, 0.5, &mut r, None).unwrap().dataset;
        let net = Network::shortcut(SingleLayer::random(&mut r, 3, 3, Activation::Softplus, 0.5), Branch::Constant { c: 0.0 }).unwrap();
        let tr = train_gd(&net, &ph(3), &ds, &TrainOpts { max_iters: 500, ..TrainOpts::default() }).unwrap();
        assert!(tr.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn separable_softplus_reaches_zero_error() {
        let mut r = rng(4, 0);
        let ds = gen_separable(3, 30, 0.5, &mut r, None).unwrap().dataset;
        let net = Network::shortcut(SingleLayer::random(&mut r, 2, 3, Activation::Softplus, 0.5), Branch::Constant { c: 0.0 }).unwrap();
        let tr = train_gd(&net, &ph(3), &ds, &TrainOpts::default()).unwrap();
        assert!(tr.converged());
        assert_eq!(*tr.net.training_error(&ds).unwrap().numer(), 0);
    }

    #[test]
    fn start_at_minimum_takes_no_steps() {
        let ds = Dataset::from_points("sep", &[vec![1.0]], &[vec![-1.0]]).unwrap();
        let fs = SingleLayer::new(0.0, vec![1.0], vec![vec![3.0]], Activation::Softplus).unwrap();
        let net = Network::shortcut(fs, Branch::Constant { c: -1.0 }).unwrap();
        let tr = train_gd(&net, &ph(6), &ds, &TrainOpts::default()).unwrap();
        assert_eq!(tr.iterations, 0);
        assert!(tr.converged());
    }

    #[test]
    fn residuals_vanish_beyond_the_hinge() {
        let ds = Dataset::from_points("sep", &[vec![1.0]], &[vec![-1.0]]).unwrap();
        let fs = SingleLayer::new(0.0, vec![1.0, 0.5], vec![vec![3.0], vec![-2.0]], Activation::Linear).unwrap();
        let net = Network::shortcut(fs, Branch::Constant { c: 0.0 }).unwrap();
        assert!(neuron_residuals(&net, &ph(6), &ds).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn residuals_match_gradient_blocks() {
        let mut r = rng(6, 0);
        let x = (0..7).map(|_| crate::numerics::normal_vec(&mut r, 3, 1.0)).collect();
        let ds = Dataset::new(x, vec![1, -1, 1, -1, 1, -1, 1], Provenance::manual("r")).unwrap();
        for loss in [ph(6), Loss::Logistic] {
            let fs = SingleLayer::random(&mut r, 4, 3, Activation::Softplus, 0.7);
            let net = Network::shortcut(fs.clone(), Branch::Constant { c: 0.1 }).unwrap();
            let g = net.grad(&loss, &ds).unwrap();
            let res = neuron_residuals(&net, &loss, &ds).unwrap();
            for j in 0..fs.m() {
                let block: Vec<f64> = fs.w_range(j).map(|k| g[k]).collect();
                assert!((norm(&block) / fs.a[j].abs() - res[j]).abs() <= 1e-9 * (1.0 + res[j]));
            }
        }
    }

    #[test]
    fn logistic_residual_positive_when_misclassifying() {
        let mut r = rng(7, 0);
        let ds = gen_separable(3, 20, 0.5, &mut r, None).unwrap().dataset;
        let mut seen = 0;
        while seen < 20 {
            let fs = SingleLayer::random(&mut r, 3, 3, Activation::Softplus, 1.0);
            let net = Network::shortcut(fs, Branch::Constant { c: 0.0 }).unwrap();
            if *net.training_error(&ds).unwrap().numer() == 0 {
                continue;
            }
            seen += 1;
            let res = neuron_residuals(&net, &Loss::Logistic, &ds).unwrap();
            assert!(res.iter().cloned().fold(0.0, f64::max) > 0.0);
        }
    }

    #[test]
    fn random_point_is_inconclusive() {
        let mut r = rng(8, 0);
        let ds = gen_separable(2, 10, 0.5, &mut r, None).unwrap().dataset;
        let net = Network::shortcut(SingleLayer::random(&mut r, 2, 2, Activation::Softplus, 1.0), Branch::Constant { c: 0.0 }).unwrap();
        let block: Vec<usize> = net.theta_s().collect();
        let c = certify(&net, &ph(6), &ds, &block, 0.01, 100, &mut r).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
        assert!(certify(&net, &ph(6), &ds, &block, 0.0, 100, &mut r).is_err());
        assert!(certify(&net, &ph(6), &ds, &block, 0.1, 99, &mut r).is_err());
    }

    #[test]
    fn certify_is_deterministic() {
        let mut r = rng(9, 0);
        let ds = gen_separable(2, 10, 0.5, &mut r, None).unwrap().dataset;
        let net = Network::shortcut(SingleLayer::random(&mut r, 2, 2, Activation::Softplus, 1.0), Branch::Constant { c: 0.0 }).unwrap();
        let block: Vec<usize> = net.theta_s().collect();
        let a = certify(&net, &ph(6), &ds, &block, 0.1, 150, &mut rng(1, 2)).unwrap();
        let b = certify(&net, &ph(6), &ds, &block, 0.1, 150, &mut rng(1, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_rejects_violated_assumptions() {
        let mut c = SweepConfig::default_for(Scenario::Subspace);
        c.loss = ph(3);
        assert!(matches!(sweep_experiment(&c, 0), Err(Error::Precondition(_))));
        let mut c = SweepConfig::default_for(Scenario::Subspace);
        c.m = Some(5);
        assert!(matches!(sweep_experiment(&c, 0), Err(Error::Precondition(_))));
        let mut c = SweepConfig::default_for(Scenario::Subspace);
        c.activation = Activation::Relu;
        assert!(matches!(sweep_experiment(&c, 0), Err(Error::Precondition(_))));
        let mut c = SweepConfig::default_for(Scenario::Separable);
        c.loss = Loss::Logistic;
        assert!(sweep_experiment(&c, 0).is_err());
    }

    #[test]
    fn small_separable_sweep_has_no_violations() {
        let mut c = SweepConfig::default_for(Scenario::Separable);
        c.train.restarts = 4;
        c.n = 12;
        let r = sweep_experiment(&c, 11).unwrap();
        assert_eq!(r.summary.violations, 0);
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows.iter().enumerate().all(|(i, row)| row.restart == i));
        let again = sweep_experiment(&c, 11).unwrap();
        assert_eq!(r, again);
    }
}

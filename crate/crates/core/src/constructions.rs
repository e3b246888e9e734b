//! Exact builders for spurious local minima with nonzero training error.
//!
//! Every builder returns the network together with a lower bound on its
//! training error and a radius inside which the point is provably a local
//! minimum (or, for [`Claim::CriticalPoint`], only a critical point).

use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::activations::{classify_activation, default_grid, Activation, NeuronClass};
use crate::conditions::{linear_separation, moment_matrix, DualCertificate, LinearSeparation};
use crate::datagen::Dataset;
use crate::error::{reject, Error, Result};
use crate::landscape::{certify, Certificate};
use crate::losses::Loss;
use crate::models::{Branch, Bump, Feedforward, IdentityShortcutNet, Layer, Network, SingleLayer, FORMAT_VERSION};
use crate::numerics::{dot, norm, sym_eig, Rng, SymMat};

/// Search interval for one-dimensional solves.
const BRACKET: f64 = 1e6;
const STATIONARY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionKind {
    ReluInactive,
    LeakyLinear,
    SymmetricZero,
    FeedforwardInactive,
    IdentityShortcut,
    BumpMinimum,
}

impl ConstructionKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "relu_inactive" => ConstructionKind::ReluInactive,
            "leaky_linear" => ConstructionKind::LeakyLinear,
            "symmetric_zero" => ConstructionKind::SymmetricZero,
            "feedforward_inactive" => ConstructionKind::FeedforwardInactive,
            "identity_shortcut" => ConstructionKind::IdentityShortcut,
            "bump_minimum" => ConstructionKind::BumpMinimum,
            other => return reject(format!("unknown construction '{other}'")),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstructionKind::ReluInactive => "relu_inactive",
            ConstructionKind::LeakyLinear => "leaky_linear",
            ConstructionKind::SymmetricZero => "symmetric_zero",
            ConstructionKind::FeedforwardInactive => "feedforward_inactive",
            ConstructionKind::IdentityShortcut => "identity_shortcut",
            ConstructionKind::BumpMinimum => "bump_minimum",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    LocalMinimum,
    /// Stationary only; second-order behaviour is left to certification.
    CriticalPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Construction {
    pub format_version: u32,
    pub kind: ConstructionKind,
    pub claim: Claim,
    pub net: Network,
    pub loss: Loss,
    pub claimed_error_lower_bound: Ratio<u64>,
    pub proven_radius: f64,
    /// Parameter indices perturbed during certification.
    pub block: Vec<usize>,
    pub inputs: serde_json::Value,
}

impl Construction {
    pub fn certify(&self, ds: &Dataset, k: usize, rng: &mut Rng) -> Result<Certificate> {
        certify(&self.net, &self.loss, ds, &self.block, self.proven_radius, k, rng)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Construction> {
        let c: Construction = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if c.format_version != FORMAT_VERSION {
            return reject(format!("unsupported construction format {}", c.format_version));
        }
        if !(c.proven_radius > 0.0) {
            return reject("construction radius must be positive");
        }
        let n = c.net.n_params();
        if c.block.is_empty() || c.block.iter().any(|&i| i >= n) {
            return reject("construction block out of range");
        }
        c.net.with_params(&c.net.params())?;
        Ok(c)
    }
}

fn loss_sum_deriv(loss: &Loss, labels: &[i8], v: f64) -> f64 {
    labels.iter().map(|&y| -(y as f64) * loss.d1(-(y as f64) * v)).sum()
}

/// Minimiser `a` of `sum_i l(-y_i (a - offset))`, by bisection on the
/// monotone derivative. A flat optimal interval resolves to its midpoint, or
/// to one unit beyond its finite end when it is unbounded.
pub fn solve_1d_convex(loss: &Loss, labels: &[i8], offset: f64) -> Result<f64> {
    if labels.is_empty() {
        return reject("no labels");
    }
    if !offset.is_finite() {
        return Err(Error::NonFinite("offset".into()));
    }
    let dv = |v: f64| loss_sum_deriv(loss, labels, v);
    let (dlo, dhi) = (dv(-BRACKET), dv(BRACKET));
    // Only the poly hinge is exactly flat; elsewhere a zero at the bracket
    // ends is underflow.
    let flat_ok = matches!(loss, Loss::PolyHinge { .. });
    if dlo > 0.0 || dhi < 0.0 || (!flat_ok && (dlo == 0.0 || dhi == 0.0)) {
        return reject("derivative does not change sign within the search bracket");
    }
    // Last point where `pred` holds, given it holds at -BRACKET and fails at BRACKET.
    let boundary = |pred: &dyn Fn(f64) -> bool| {
        let (mut lo, mut hi) = (-BRACKET, BRACKET);
        loop {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                return lo;
            }
            if pred(mid) { lo = mid } else { hi = mid }
        }
    };
    let left = (dlo < 0.0).then(|| boundary(&|v| dv(v) < 0.0));
    let right = (dhi > 0.0).then(|| boundary(&|v| dv(v) <= 0.0));
    let v = match (left, right) {
        (Some(l), Some(r)) => l + 0.5 * (r - l),
        (Some(l), None) => l + 1.0,
        (None, Some(r)) => r - 1.0,
        (None, None) => 0.0,
    };
    let scale: f64 = labels.iter().map(|&y| loss.d1(-(y as f64) * v).abs()).sum();
    if dv(v).abs() > STATIONARY_TOL * (1.0 + scale) {
        return reject(format!("one-dimensional solve left residual {:e}", dv(v)));
    }
    Ok(v + offset)
}

fn has_class(act: &Activation, class: NeuronClass) -> Result<bool> {
    Ok(classify_activation(act, &default_grid())?.contains(&class))
}

fn min_class_bound(ds: &Dataset) -> Ratio<u64> {
    Ratio::new(ds.n_pos().min(ds.n_neg()) as u64, ds.n() as u64)
}

fn check_outputs(net: &Network, ds: &Dataset, expected: &[f64], what: &str) -> Result<()> {
    for (i, (f, e)) in net.outputs(ds).iter().zip(expected).enumerate() {
        if (f - e).abs() > 1e-12 * (1.0 + e.abs()) {
            return Err(Error::Identity(format!("{what}: output {f} at sample {i} differs from closed form {e}")));
        }
    }
    Ok(())
}

fn echo(kind: ConstructionKind, ds: &Dataset, extra: serde_json::Value) -> serde_json::Value {
    json!({ "builder": kind.name(), "dataset": ds.provenance, "n": ds.n(), "d": ds.d(), "params": extra })
}

fn require_affine(ds: &Dataset) -> Result<()> {
    if !ds.last_coordinate_is_one() {
        return Err(Error::Precondition("every sample needs last coordinate 1".into()));
    }
    Ok(())
}

fn require_not_separable(z: &[Vec<f64>], y: &[i8]) -> Result<()> {
    match linear_separation(z, y)? {
        LinearSeparation::NotSeparable { .. } => Ok(()),
        LinearSeparation::Separable { .. } => Err(Error::Precondition("data are linearly separable".into())),
        LinearSeparation::Unknown => Err(Error::Precondition("could not establish non-separability".into())),
    }
}

/// Minimiser of `(1/n) sum_i l(-y_i w . z_i)` by damped Newton steps.
pub fn fit_linear(z: &[Vec<f64>], y: &[i8], loss: &Loss) -> Result<Vec<f64>> {
    let n = z.len();
    if n == 0 || y.len() != n {
        return reject("need matching nonempty points and labels");
    }
    let d = z[0].len();
    let obj = |w: &[f64]| z.iter().zip(y).map(|(zi, &yi)| loss.eval(-(yi as f64) * dot(zi, w))).sum::<f64>() / n as f64;
    let mut w = vec![0.0; d];
    for _ in 0..500 {
        let mut g = vec![0.0; d];
        let mut h = SymMat::zeros(d);
        for (zi, &yi) in z.iter().zip(y) {
            let yi = yi as f64;
            let t = -yi * dot(zi, &w);
            g.iter_mut().zip(zi).for_each(|(gk, zk)| *gk += -yi * loss.d1(t) * zk / n as f64);
            h.add_outer(loss.d2(t) / n as f64, zi);
        }
        h.symmetrize();
        if norm(&g) <= 1e-14 {
            return Ok(w);
        }
        let eig = sym_eig(&h)?;
        let damp = 1e-12 * (1.0 + eig.values.last().copied().unwrap_or(0.0).abs());
        let mut step = vec![0.0; d];
        for k in 0..d {
            let v = eig.vector(k);
            let c = dot(v, &g) / (eig.values[k].max(0.0) + damp);
            step.iter_mut().zip(v).for_each(|(s, vk)| *s -= c * vk);
        }
        let f0 = obj(&w);
        let mut t = 1.0;
        let slope = dot(&g, &step);
        let mut moved = false;
        while t > 1e-12 {
            let cand: Vec<f64> = w.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if obj(&cand) <= f0 + 1e-4 * t * slope {
                moved = cand != w;
                w = cand;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let mut g = vec![0.0; d];
    for (zi, &yi) in z.iter().zip(y) {
        let yi = yi as f64;
        g.iter_mut().zip(zi).for_each(|(gk, zk)| *gk += -yi * loss.d1(-yi * dot(zi, &w)) * zk / n as f64);
    }
    if norm(&g) > 1e-11 {
        return reject(format!("linear fit stalled with gradient norm {:e}", norm(&g)));
    }
    Ok(w)
}

/// Dead ReLU-class neurons on data with a constant last coordinate.
pub fn build_relu_inactive(ds: &Dataset, m: usize, activation: Activation, loss: &Loss) -> Result<Construction> {
    let kind = ConstructionKind::ReluInactive;
    if m == 0 {
        return reject("need at least one neuron");
    }
    if !has_class(&activation, NeuronClass::ReluClass)? {
        return Err(Error::Precondition(format!("activation '{}' is not in the relu class", activation.name())));
    }
    require_affine(ds)?;
    let d = ds.d();
    let k = ds.max_norm();
    let w = (0..m)
        .map(|j| {
            let mut row = vec![0.0; d];
            if d > 1 {
                row[j % (d - 1)] = 1.0;
            }
            row[d - 1] = -k - 1.0;
            row
        })
        .collect::<Vec<_>>();
    let a0 = solve_1d_convex(loss, &ds.y, 0.0)?;
    let fs = SingleLayer::new(a0, vec![1.0; m], w, activation)?;
    if ds.x.iter().any(|x| (0..m).any(|j| fs.pre_activation(j, x) > -1.0)) {
        return Err(Error::Identity("pre-activations not bounded by -1".into()));
    }
    let net = Network::shortcut(fs, Branch::Constant { c: 0.0 })?;
    check_outputs(&net, ds, &vec![a0; ds.n()], "constant output")?;
    Ok(Construction {
        format_version: FORMAT_VERSION,
        kind,
        claim: Claim::LocalMinimum,
        block: net.theta_s().collect(),
        proven_radius: 0.5 / k,
        claimed_error_lower_bound: min_class_bound(ds),
        inputs: echo(kind, ds, json!({ "m": m, "activation": activation, "loss": loss })),
        loss: *loss,
        net,
    })
}

/// Neurons kept in their identity regime so the net acts as the best affine
/// classifier.
pub fn build_leaky_linear(ds: &Dataset, m: usize, activation: Activation, loss: &Loss) -> Result<Construction> {
    let kind = ConstructionKind::LeakyLinear;
    if m == 0 {
        return reject("need at least one neuron");
    }
    if !has_class(&activation, NeuronClass::LeakyReluClass)? {
        return Err(Error::Precondition(format!("activation '{}' is not in the leaky relu class", activation.name())));
    }
    require_affine(ds)?;
    require_not_separable(&ds.x, &ds.y)?;
    let w_star = fit_linear(&ds.x, &ds.y, loss)?;
    let k = ds.x.iter().map(|x| dot(x, &w_star).abs()).fold(0.0, f64::max);
    let d = ds.d();
    let mut row = w_star.clone();
    row[d - 1] += k + 1.0;
    let fs = SingleLayer::new(-(k + 1.0), vec![1.0 / m as f64; m], vec![row; m], activation)?;
    if ds.x.iter().any(|x| fs.pre_activation(0, x) < 1.0) {
        return Err(Error::Identity("pre-activations not bounded below by 1".into()));
    }
    let net = Network::shortcut(fs, Branch::Constant { c: 0.0 })?;
    let linear: Vec<f64> = ds.x.iter().map(|x| dot(x, &w_star)).collect();
    check_outputs(&net, ds, &linear, "affine output")?;
    Ok(Construction {
        format_version: FORMAT_VERSION,
        kind,
        claim: Claim::LocalMinimum,
        block: net.theta_s().collect(),
        proven_radius: 0.5 / ds.max_norm(),
        // Non-separability forces at least one mistake.
        claimed_error_lower_bound: Ratio::new(1, ds.n() as u64),
        inputs: echo(kind, ds, json!({ "m": m, "activation": activation, "loss": loss, "linear_weights": w_star })),
        loss: *loss,
        net,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetricMode {
    /// Point-symmetric activation on data closed under `x -> -x`.
    Sigmoid,
    /// Convex activation with `sigma'(0) = 0` and a definite class contrast.
    Quadratic,
    /// Antisymmetric data only; the point is critical but not claimed minimal.
    CriticalOnly,
}

fn class_weights(ds: &Dataset) -> Vec<f64> {
    ds.y.iter().map(|&y| if y == 1 { 1.0 / ds.n_pos() as f64 } else { 1.0 / ds.n_neg() as f64 }).collect()
}

/// `(1/n_+) sum_+ x x^T - (1/n_-) sum_- x x^T`.
pub fn class_contrast(ds: &Dataset) -> SymMat {
    moment_matrix(ds, &class_weights(ds))
}

fn cube_weight(ds: &Dataset, lambda: &[f64]) -> f64 {
    lambda.iter().zip(&ds.x).map(|(l, x)| l * norm(x).powi(3)).sum()
}

/// All output weights `-s`, all input weights zero, offset solved exactly.
pub fn build_symmetric_zero(ds: &Dataset, m: usize, activation: Activation, loss: &Loss) -> Result<Construction> {
    let kind = ConstructionKind::SymmetricZero;
    if m == 0 {
        return reject("need at least one neuron");
    }
    let classes = classify_activation(&activation, &default_grid())?;
    let (mode, sign, radius) = if classes.contains(&NeuronClass::QuadraticClass) {
        if activation.d1(0.0) != 0.0 {
            return Err(Error::Precondition("quadratic mode needs sigma'(0) = 0".into()));
        }
        if !ds.has_both_labels() {
            return Err(Error::Precondition("quadratic mode needs both labels".into()));
        }
        let eig = sym_eig(&class_contrast(ds))?;
        let (lo, hi) = (eig.values[0], *eig.values.last().unwrap());
        let sign = if lo > 1e-8 {
            1.0
        } else if hi < -1e-8 {
            -1.0
        } else {
            return Err(Error::Precondition(format!("class contrast matrix is not definite (eigenvalues {lo:e}..{hi:e})")));
        };
        let s3 = activation.third_deriv_bound().ok_or_else(|| Error::Precondition("no third-derivative bound".into()))?;
        let margin = if sign > 0.0 { lo } else { -hi };
        (SymmetricMode::Quadratic, sign, cubic_radius(&activation, margin, s3, cube_weight(ds, &class_weights(ds)), 0.9))
    } else if ds.is_antisymmetric() {
        if classes.contains(&NeuronClass::SigmoidClass) {
            (SymmetricMode::Sigmoid, 1.0, 1.0)
        } else {
            (SymmetricMode::CriticalOnly, 1.0, 0.1)
        }
    } else {
        return Err(Error::Precondition("data are not antisymmetric and the activation is not quadratic".into()));
    };
    let offset = sign * m as f64 * activation.eval(0.0);
    let a0 = solve_1d_convex(loss, &ds.y, offset)?;
    let fs = SingleLayer::new(a0, vec![-sign; m], vec![vec![0.0; ds.d()]; m], activation)?;
    let net = Network::shortcut(fs, Branch::Constant { c: 0.0 })?;
    check_outputs(&net, ds, &vec![a0 - offset; ds.n()], "constant output")?;
    let claim = if mode == SymmetricMode::CriticalOnly { Claim::CriticalPoint } else { Claim::LocalMinimum };
    Ok(Construction {
        format_version: FORMAT_VERSION,
        kind,
        claim,
        block: net.theta_s().collect(),
        proven_radius: radius,
        claimed_error_lower_bound: min_class_bound(ds),
        inputs: echo(kind, ds, json!({ "m": m, "activation": activation, "loss": loss, "mode": mode })),
        loss: *loss,
        net,
    })
}

/// Radius inside which the second-order gain `sigma''(0) margin |w|^2 / 2`
/// dominates the cubic remainder, capped so output weights keep their sign.
fn cubic_radius(act: &Activation, margin: f64, s3: f64, weight: f64, cap: f64) -> f64 {
    if s3 == 0.0 || weight == 0.0 {
        cap
    } else {
        cap.min(3.0 * act.d2(0.0) * margin / (s3 * weight))
    }
}

/// Deterministic feedforward stack with unit-norm columns in every layer and
/// last-layer biases pushing every pre-activation to at most -1 on the data.
fn dead_stack(ds: &Dataset, dims: &[usize], activation: Activation) -> Result<Feedforward> {
    let mut layers = Vec::with_capacity(dims.len() - 1);
    let mut h: Vec<Vec<f64>> = ds.x.clone();
    for (l, win) in dims.windows(2).enumerate() {
        let (n_in, n_out) = (win[0], win[1]);
        let mut w = vec![0.0; n_in * n_out];
        for j in 0..n_out {
            w[(j % n_in) * n_out + j] = 1.0;
        }
        let mut layer = Layer::new(n_in, n_out, w, vec![0.0; n_out], activation)?;
        if l == dims.len() - 2 {
            for j in 0..n_out {
                let top = h.iter().map(|hi| layer.pre_activations(hi)[j]).fold(f64::NEG_INFINITY, f64::max);
                layer.b[j] = -top - 1.0;
            }
        }
        h = h.iter().map(|hi| layer.pre_activations(hi).into_iter().map(|z| activation.eval(z)).collect()).collect();
        layers.push(layer);
    }
    Feedforward::new(layers)
}

/// Largest radius (by bisection) for which the Lipschitz recursion keeps the
/// last-layer pre-activations of `f` within `slack` of their values.
fn dead_radius(ds: &Dataset, f: &Feedforward, lip: f64, slack: f64) -> f64 {
    let layer_norms: Vec<f64> = f.layers.iter().map(|l| norm(&l.w)).collect();
    let mut in_norms = Vec::with_capacity(f.layers.len());
    let mut h = ds.x.clone();
    for l in &f.layers {
        in_norms.push(h.iter().map(|hi| norm(hi)).fold(0.0, f64::max));
        h = h.iter().map(|hi| l.pre_activations(hi).into_iter().map(|z| l.activation.eval(z)).collect()).collect();
    }
    let bound = |r: f64| {
        let mut e = 0.0;
        let mut dz = 0.0;
        for (wn, hn) in layer_norms.iter().zip(&in_norms) {
            dz = (wn + r) * e + r * (hn + 1.0);
            e = lip * dz;
        }
        dz
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if bound(hi) <= slack {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bound(mid) <= slack { lo = mid } else { hi = mid }
    }
    lo
}

fn hidden_activation_ok(activation: &Activation) -> Result<f64> {
    if !has_class(activation, NeuronClass::ReluClass)? {
        return Err(Error::Precondition(format!("activation '{}' is not in the relu class", activation.name())));
    }
    activation
        .lipschitz()
        .ok_or_else(|| Error::Precondition(format!("activation '{}' has no global Lipschitz bound", activation.name())))
}

/// Feedforward net whose last hidden layer is dead on every sample.
pub fn build_feedforward_inactive(ds: &Dataset, hidden: &[usize], activation: Activation, loss: &Loss) -> Result<Construction> {
    let kind = ConstructionKind::FeedforwardInactive;
    if hidden.is_empty() || hidden.contains(&0) {
        return reject("need at least one nonempty hidden layer");
    }
    let lip = hidden_activation_ok(&activation)?;
    let mut dims = vec![ds.d()];
    dims.extend_from_slice(hidden);
    let body = dead_stack(ds, &dims, activation)?;
    let a0 = solve_1d_convex(loss, &ds.y, 0.0)?;
    let width = *hidden.last().unwrap();
    let out = Layer::new(width, 1, vec![1.0; width], vec![a0], Activation::Linear)?;
    let radius = dead_radius(ds, &body, lip, 0.5);
    let mut layers = body.layers;
    layers.push(out);
    let net = Network::feedforward(Feedforward::new(layers)?)?;
    check_outputs(&net, ds, &vec![a0; ds.n()], "constant output")?;
    Ok(Construction {
        format_version: FORMAT_VERSION,
        kind,
        claim: Claim::LocalMinimum,
        block: net.theta_s().collect(),
        proven_radius: radius,
        claimed_error_lower_bound: min_class_bound(ds),
        inputs: echo(kind, ds, json!({ "hidden": hidden, "activation": activation, "loss": loss })),
        loss: *loss,
        net,
    })
}

/// `a . (x + H(x)) + b` with `H` dead on the data and `(a, b)` the best affine fit.
pub fn build_identity_shortcut(ds: &Dataset, hidden: &[usize], activation: Activation, loss: &Loss) -> Result<Construction> {
    let kind = ConstructionKind::IdentityShortcut;
    if hidden.contains(&0) {
        return reject("hidden widths must be positive");
    }
    let lip = hidden_activation_ok(&activation)?;
    let lifted: Vec<Vec<f64>> = ds.x.iter().map(|x| x.iter().copied().chain([1.0]).collect()).collect();
    require_not_separable(&lifted, &ds.y)?;
    let w = fit_linear(&lifted, &ds.y, loss)?;
    let d = ds.d();
    let mut dims = vec![d];
    dims.extend_from_slice(hidden);
    dims.push(d);
    let h = dead_stack(ds, &dims, activation)?;
    let radius = dead_radius(ds, &h, lip, 0.5);
    let net = Network::IdentityShortcut(IdentityShortcutNet::new(w[..d].to_vec(), w[d], h)?);
    let affine: Vec<f64> = lifted.iter().map(|z| dot(z, &w)).collect();
    check_outputs(&net, ds, &affine, "affine output")?;
    Ok(Construction {
        format_version: FORMAT_VERSION,
        kind,
        claim: Claim::LocalMinimum,
        block: net.theta_s().collect(),
        proven_radius: radius,
        claimed_error_lower_bound: Ratio::new(1, ds.n() as u64),
        inputs: echo(kind, ds, json!({ "hidden": hidden, "activation": activation, "loss": loss })),
        loss: *loss,
        net,
    })
}

/// Per-sample bump values `mu_i` such that `f_i = base + mu_i` satisfies
/// `l'(-y_i f_i) = (lambda_i / lambda_max) l'(1)`. Zero weights land on the
/// flat part of the loss at margin `z0 + 1`.
pub fn solve_mu(loss: &Loss, lambdas: &[f64], labels: &[i8], base: f64) -> Result<Vec<f64>> {
    let Loss::PolyHinge { z0, .. } = *loss else {
        return reject("bump values need a poly_hinge loss");
    };
    if lambdas.len() != labels.len() || lambdas.is_empty() {
        return reject("need one weight per label");
    }
    if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return reject("weights must be finite and nonnegative");
    }
    let lmax = lambdas.iter().cloned().fold(0.0, f64::max);
    if lmax == 0.0 {
        return reject("weights are all zero");
    }
    let top = loss.d1(1.0);
    lambdas
        .iter()
        .zip(labels)
        .map(|(&l, &y)| {
            let target = l / lmax * top;
            let t = if l == lmax {
                1.0
            } else if l == 0.0 {
                -(z0 + 1.0)
            } else {
                // l' is increasing on (-z0, 1].
                let (mut lo, mut hi) = (-z0, 1.0);
                loop {
                    let mid = lo + 0.5 * (hi - lo);
                    if mid <= lo || mid >= hi {
                        break if (loss.d1(lo) - target).abs() <= (loss.d1(hi) - target).abs() { lo } else { hi };
                    }
                    if loss.d1(mid) < target { lo = mid } else { hi = mid }
                }
            };
            if (loss.d1(t) - target).abs() > STATIONARY_TOL * (1.0 + top) {
                return reject(format!("bump value residual {:e}", loss.d1(t) - target));
            }
            Ok(-(y as f64) * t - base)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpMode {
    /// `sigma'(0) = 0`; any semidefinite witness works.
    Quadratic,
    /// `sigma''(0) > 0` and the witness has zero weighted mean.
    MeanZero,
}

/// Distinct samples and the index of each sample's representative.
fn unique_points(ds: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut reps: Vec<usize> = Vec::new();
    let mut of = Vec::with_capacity(ds.n());
    for (i, x) in ds.x.iter().enumerate() {
        match reps.iter().position(|&r| ds.x[r] == *x) {
            Some(k) => {
                if ds.y[reps[k]] != ds.y[i] {
                    return Err(Error::Precondition(format!("sample {i} repeats sample {} with the other label", reps[k])));
                }
                of.push(k);
            }
            None => {
                of.push(reps.len());
                reps.push(i);
            }
        }
    }
    Ok((reps.iter().map(|&r| ds.x[r].clone()).collect(), of))
}

/// Single-layer part with zero input weights plus a bump branch placing
/// per-sample values tuned to a semidefinite witness.
pub fn build_bump_minimum(ds: &Dataset, cert: &DualCertificate, m: usize, activation: Activation, loss: &Loss) -> Result<Construction> {
    let kind = ConstructionKind::BumpMinimum;
    if m == 0 {
        return reject("need at least one neuron");
    }
    if !cert.verify(ds) {
        return Err(Error::Precondition("certificate does not verify on this dataset".into()));
    }
    let mode = if activation.d1(0.0) == 0.0 && activation.d2(0.0) > 0.0 {
        BumpMode::Quadratic
    } else if activation.d2(0.0) > 0.0 && activation.is_analytic() {
        if !cert.verify_mean_constrained(ds) {
            return Err(Error::Precondition("certificate is not strict on the data span with zero weighted mean".into()));
        }
        BumpMode::MeanZero
    } else {
        return Err(Error::Precondition(format!("activation '{}' fits neither bump mode", activation.name())));
    };
    let (anchors, of) = unique_points(ds)?;
    // Duplicates share one output, so they share one weight.
    let mut group_sum = vec![0.0; anchors.len()];
    let mut group_n = vec![0usize; anchors.len()];
    for (i, &g) in of.iter().enumerate() {
        group_sum[g] += cert.lambda[i];
        group_n[g] += 1;
    }
    let lambda: Vec<f64> = of.iter().map(|&g| group_sum[g] / group_n[g] as f64).collect();

    let sign = cert.definiteness.sign();
    let base = -sign * m as f64 * activation.eval(0.0);
    let mus = solve_mu(loss, &lambda, &ds.y, base)?;
    let mut gap = f64::INFINITY;
    for i in 0..anchors.len() {
        for j in 0..i {
            let cheb = anchors[i].iter().zip(&anchors[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            gap = gap.min(cheb);
        }
    }
    let width = if gap.is_finite() { 0.25 * gap } else { 1.0 };
    let anchor_mus: Vec<f64> = (0..anchors.len()).map(|g| mus[of.iter().position(|&k| k == g).unwrap()]).collect();
    let bump = Bump::new(anchors, anchor_mus, vec![width; ds.d()])?;
    if ds.x.iter().zip(&mus).any(|(x, mu)| bump.forward(x) != *mu) {
        return Err(Error::Identity("bump branch does not isolate the samples".into()));
    }

    // Identities the stationarity argument rests on.
    let weighted_labels: f64 = lambda.iter().zip(&ds.y).map(|(l, &y)| l * y as f64).sum();
    if weighted_labels.abs() > 1e-9 {
        return Err(Error::Identity(format!("weighted label sum {weighted_labels:e} is not zero")));
    }
    let mean_res = norm(&crate::conditions::weighted_mean(ds, &lambda));
    if mode == BumpMode::MeanZero && mean_res > 1e-8 {
        return Err(Error::Identity(format!("weighted mean {mean_res:e} is not zero")));
    }
    let a0_res: f64 = mus.iter().zip(&ds.y).map(|(mu, &y)| -(y as f64) * loss.d1(-(y as f64) * (base + mu))).sum();
    if a0_res.abs() > STATIONARY_TOL * (1.0 + loss.d1(1.0)) * ds.n() as f64 {
        return Err(Error::Identity(format!("offset stationarity residual {a0_res:e}")));
    }

    let fs = SingleLayer::new(0.0, vec![-sign; m], vec![vec![0.0; ds.d()]; m], activation)?;
    let net = Network::shortcut(fs, Branch::Bump(bump))?;
    let expected: Vec<f64> = mus.iter().map(|mu| base + mu).collect();
    check_outputs(&net, ds, &expected, "bump output")?;

    let margin = match mode {
        BumpMode::Quadratic => sym_eig(&moment_matrix(ds, &lambda).scaled(sign))?.values[0].max(0.0),
        BumpMode::MeanZero => cert.span_margin,
    };
    let s3 = activation
        .third_deriv_bound()
        .ok_or_else(|| Error::Precondition(format!("activation '{}' has no third-derivative bound", activation.name())))?;
    let radius = cubic_radius(&activation, margin, s3, cube_weight(ds, &lambda), 0.45);
    if !(radius > 0.0) {
        return Err(Error::Precondition("witness margin is zero, no radius can be proven".into()));
    }
    Ok(Construction {
        format_version: FORMAT_VERSION,
        kind,
        claim: Claim::LocalMinimum,
        block: net.theta_s().collect(),
        proven_radius: radius,
        claimed_error_lower_bound: Ratio::new(1, ds.n() as u64),
        inputs: echo(kind, ds, json!({ "m": m, "activation": activation, "loss": loss, "mode": mode, "lambda": lambda })),
        loss: *loss,
        net,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{check_necessary_condition, check_quadratic_condition, NecessaryVerdict, QuadraticVerdict};
    use crate::datagen::gen_named;
    use crate::landscape::Verdict;
    use crate::numerics::{rng, uniform_ball};

    fn ph(p: u32) -> Loss {
        Loss::poly_hinge(p).unwrap()
    }

    fn cross() -> Dataset {
        gen_named("cross_balanced", 16, &mut rng(1, 0), None).unwrap()
    }

    fn assert_certified(c: &Construction, ds: &Dataset) -> Certificate {
        let cert = c.certify(ds, 2000, &mut rng(5, 0)).unwrap();
        assert_eq!(cert.verdict, Verdict::CertifiedMinCandidate, "{:?}: {cert:?}", c.kind);
        assert!(cert.grad_norm <= 1e-9, "{:?}: grad {:e}", c.kind, cert.grad_norm);
        assert!(cert.training_error >= c.claimed_error_lower_bound);
        cert
    }

    #[test]
    fn one_dimensional_solve() {
        assert!(solve_1d_convex(&ph(2), &[1, -1, 1, -1], 0.0).unwrap().abs() < 1e-15);
        // Flat optimum [z0, inf): one unit past its end.
        assert_eq!(solve_1d_convex(&ph(2), &[1, 1, 1], 0.0).unwrap(), 2.0);
        assert_eq!(solve_1d_convex(&ph(2), &[1, 1, 1], 0.5).unwrap(), 2.5);
        // l'(-a) = 3 l'(a) for the logistic loss gives e^a = 1/3.
        let a = solve_1d_convex(&Loss::Logistic, &[1, -1, -1, -1], 0.0).unwrap();
        assert!((a + 3f64.ln()).abs() < 1e-12);
        assert!(solve_1d_convex(&Loss::Logistic, &[1, 1], 0.0).is_err());
        assert!(solve_1d_convex(&ph(2), &[], 0.0).is_err());
    }

    #[test]
    fn relu_inactive_on_cross() {
        let ds = cross();
        let c = build_relu_inactive(&ds, 8, Activation::Relu, &ph(2)).unwrap();
        let cert = assert_certified(&c, &ds);
        assert_eq!(cert.training_error, Ratio::new(1, 2));
        let Network::Shortcut(s) = &c.net else { unreachable!() };
        assert!(ds.x.iter().all(|x| (0..8).all(|j| s.fs.pre_activation(j, x) <= -1.0)));
        // Dead units: exact invariance under perturbations of the hidden block.
        let mut r = rng(2, 0);
        let base = c.net.outputs(&ds);
        let theta = c.net.params();
        let hidden: Vec<usize> = (1 + 8..c.net.n_params()).chain(1..9).collect();
        for _ in 0..50 {
            let delta = uniform_ball(&mut r, hidden.len(), c.proven_radius / 2.0);
            let mut p = theta.clone();
            hidden.iter().zip(&delta).for_each(|(&i, v)| p[i] += v);
            assert_eq!(c.net.with_params(&p).unwrap().outputs(&ds), base);
        }
        assert!(build_relu_inactive(&ds, 4, Activation::Softplus, &ph(2)).is_err());
        let xor = gen_named("xor4_balanced", 4, &mut r, None).unwrap();
        assert!(matches!(build_relu_inactive(&xor, 4, Activation::Relu, &ph(2)), Err(Error::Precondition(_))));
    }

    #[test]
    fn relu_inactive_single_label_has_zero_bound() {
        let ds = Dataset::from_points("pos", &[vec![1.0, 1.0], vec![2.0, 1.0]], &[]).unwrap();
        let c = build_relu_inactive(&ds, 2, Activation::Relu, &ph(2)).unwrap();
        assert_eq!(c.claimed_error_lower_bound, Ratio::new(0, 1));
    }

    #[test]
    fn leaky_linear_on_cross() {
        let ds = cross();
        let act = Activation::leaky_relu(0.1).unwrap();
        let c = build_leaky_linear(&ds, 4, act, &ph(2)).unwrap();
        let cert = assert_certified(&c, &ds);
        assert!(*cert.training_error.numer() > 0);
        let Network::Shortcut(s) = &c.net else { unreachable!() };
        assert!(ds.x.iter().all(|x| (0..4).all(|j| s.fs.pre_activation(j, x) >= 1.0)));
        let sep = gen_named("interval_sep_balanced", 8, &mut rng(3, 0), None).unwrap();
        let lifted = Dataset::new(sep.x.iter().map(|x| vec![x[0], 1.0]).collect(), sep.y.clone(), sep.provenance.clone()).unwrap();
        assert!(matches!(build_leaky_linear(&lifted, 4, act, &ph(2)), Err(Error::Precondition(_))));
    }

    #[test]
    fn symmetric_zero_sigmoid_mode() {
        let ds = gen_named("xor4_balanced", 8, &mut rng(0, 0), None).unwrap();
        let c = build_symmetric_zero(&ds, 4, Activation::Tanh, &ph(2)).unwrap();
        assert_eq!(c.claim, Claim::LocalMinimum);
        let cert = assert_certified(&c, &ds);
        assert_eq!(cert.training_error, Ratio::new(1, 2));
        let g = c.net.grad(&c.loss, &ds).unwrap();
        assert!(g[1..].iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn symmetric_zero_quadratic_mode() {
        let ds = gen_named("interval_sep_balanced", 10, &mut rng(4, 0), None).unwrap();
        let c = build_symmetric_zero(&ds, 3, Activation::Quadratic, &ph(2)).unwrap();
        let cert = assert_certified(&c, &ds);
        assert!(cert.training_error >= Ratio::new(1, 2));
        let g = c.net.grad(&c.loss, &ds).unwrap();
        assert!(g[1..].iter().all(|v| v.abs() <= 1e-12));
        // Quadratic neurons on data whose class contrast is indefinite.
        let xor = gen_named("xor4_balanced", 4, &mut rng(0, 0), None).unwrap();
        let err = build_symmetric_zero(&xor, 3, Activation::Quadratic, &ph(2)).unwrap_err();
        assert!(err.to_string().contains("definite"), "{err}");
    }

    #[test]
    fn symmetric_zero_softplus_logistic_is_saddle() {
        let ds = gen_named("xor4_balanced", 8, &mut rng(0, 0), None).unwrap();
        let c = build_symmetric_zero(&ds, 16, Activation::Softplus, &Loss::Logistic).unwrap();
        assert_eq!(c.claim, Claim::CriticalPoint);
        let cert = c.certify(&ds, 200, &mut rng(1, 0)).unwrap();
        assert!(cert.grad_norm <= 1e-9);
        assert!(cert.hess_min_eig <= -1e-6);
        assert_eq!(cert.verdict, Verdict::Saddle);
    }

    #[test]
    fn feedforward_inactive_dead_last_layer() {
        let ds = cross();
        let c = build_feedforward_inactive(&ds, &[5, 4], Activation::Relu, &ph(2)).unwrap();
        assert_certified(&c, &ds);
        let Network::Feedforward(f) = &c.net else { unreachable!() };
        let body = Feedforward::new(f.layers[..2].to_vec()).unwrap();
        assert!(ds.x.iter().all(|x| body.last_pre_activations(x).iter().all(|z| *z <= -1.0)));
        let out = c.net.outputs(&ds);
        assert!(out.iter().all(|v| *v == out[0]));
        let mut r = rng(6, 0);
        let theta = c.net.params();
        let hidden: Vec<usize> = (0..body.n_params()).collect();
        for _ in 0..50 {
            let delta = uniform_ball(&mut r, hidden.len(), c.proven_radius / 2.0);
            let mut p = theta.clone();
            hidden.iter().zip(&delta).for_each(|(&i, v)| p[i] += v);
            assert_eq!(c.net.with_params(&p).unwrap().outputs(&ds), out);
        }
        assert!(build_feedforward_inactive(&ds, &[], Activation::Relu, &ph(2)).is_err());
    }

    #[test]
    fn identity_shortcut_on_cross() {
        let ds = cross();
        let c = build_identity_shortcut(&ds, &[4], Activation::Relu, &ph(2)).unwrap();
        let cert = assert_certified(&c, &ds);
        assert!(*cert.training_error.numer() > 0);
        let Network::IdentityShortcut(n) = &c.net else { unreachable!() };
        assert!(ds.x.iter().all(|x| n.h.forward_vec(x).iter().all(|v| *v == 0.0)));
        for x in &ds.x {
            assert!((c.net.eval(x) - (dot(&n.a, x) + n.b)).abs() < 1e-12);
        }
        let sep = gen_named("interval_sep_balanced", 8, &mut rng(3, 0), None).unwrap();
        assert!(matches!(build_identity_shortcut(&sep, &[2], Activation::Relu, &ph(2)), Err(Error::Precondition(_))));
    }

    #[test]
    fn bump_values() {
        let l = ph(6);
        let mus = solve_mu(&l, &[1.0, 0.0, 0.5], &[1, -1, -1], 0.0).unwrap();
        // Anchor: margin -1.
        assert_eq!(mus[0], -1.0);
        // Zero weight: margin z0 + 1.
        assert_eq!(mus[1], -2.0);
        let t = 2.0 * 0.5f64.powf(1.0 / 6.0) - 1.0;
        assert!((mus[2] - t).abs() < 1e-9);
        assert!(solve_mu(&l, &[0.0, 0.0], &[1, -1], 0.0).is_err());
        assert!(solve_mu(&Loss::Logistic, &[1.0], &[1], 0.0).is_err());
        let mus = solve_mu(&l, &[0.3, 0.7, 0.2], &[1, -1, 1], 0.4).unwrap();
        for ((m, lam), y) in mus.iter().zip([0.3, 0.7, 0.2]).zip([1.0, -1.0, 1.0]) {
            assert!((l.d1(-y * (m + 0.4)) - lam / 0.7 * l.d1(1.0)).abs() <= 1e-10);
        }
    }

    #[test]
    fn bump_minimum_collinear_quadratic() {
        let ds = gen_named("collinear_balanced", 8, &mut rng(0, 0), None).unwrap();
        let QuadraticVerdict::No { certificate } = check_quadratic_condition(&ds).unwrap() else { panic!() };
        let c = build_bump_minimum(&ds, &certificate, 4, Activation::Quadratic, &ph(2)).unwrap();
        let cert = assert_certified(&c, &ds);
        assert!(*cert.training_error.numer() > 0);
        let Network::Shortcut(s) = &c.net else { unreachable!() };
        let Branch::Bump(b) = &s.fd else { unreachable!() };
        let a0_res: f64 = ds.x.iter().zip(&ds.y).map(|(x, &y)| -(y as f64) * c.loss.d1(-(y as f64) * c.net.eval(x))).sum();
        assert!(a0_res.abs() <= 1e-10);
        for x in &ds.x {
            let k = b.anchors.iter().position(|a| a == x).unwrap();
            assert_eq!(b.forward(x), b.mus[k]);
        }
    }

    #[test]
    fn bump_minimum_line_softplus() {
        let ds = gen_named("line_nonsep_balanced", 8, &mut rng(0, 0), None).unwrap();
        let NecessaryVerdict::Fails { certificate } = check_necessary_condition(&ds).unwrap() else { panic!() };
        let c = build_bump_minimum(&ds, &certificate, 4, Activation::Softplus, &ph(2)).unwrap();
        let cert = assert_certified(&c, &ds);
        assert!(*cert.training_error.numer() > 0);
        // The softplus mode needs the zero-mean witness.
        let xor = gen_named("collinear_balanced", 8, &mut rng(0, 0), None).unwrap();
        let QuadraticVerdict::No { certificate } = check_quadratic_condition(&xor).unwrap() else { panic!() };
        if !certificate.verify_mean_constrained(&xor) {
            assert!(build_bump_minimum(&xor, &certificate, 4, Activation::Softplus, &ph(2)).is_err());
        }
    }

    #[test]
    fn construction_file_round_trip() {
        let ds = cross();
        let c = build_relu_inactive(&ds, 3, Activation::Relu, &ph(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        c.save(&p).unwrap();
        assert_eq!(Construction::load(&p).unwrap(), c);
        let mut bad = c.clone();
        bad.format_version = 99;
        bad.save(&p).unwrap();
        assert!(Construction::load(&p).is_err());
    }
}

//! Network architectures with forward evaluation, empirical loss, training
//! error, analytic gradients and finite-difference Hessian blocks.
//!
//! Every network exposes a flat parameter vector. For a [`ShortcutNet`] the
//! layout is `[a0, a_1..a_M, w_1..w_M, (b_1..b_M), branch params]`, where the
//! biases appear only when `train_bias` is set and the branch contributes
//! nothing for a constant, its layer weights for a feedforward branch, and the
//! widths for a bump branch.

use std::ops::Range;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::activations::Activation;
use crate::datagen::Dataset;
use crate::error::{reject, Error, Result};
use crate::losses::Loss;
use crate::numerics::{dot, normal_vec, Rng, SymMat};

pub const FORMAT_VERSION: u32 = 1;
/// Step used for Hessians assembled from differences of analytic gradients.
pub const HESS_STEP: f64 = 1e-4;

/// `f_S(x) = a0 + sum_j a_j sigma(w_j . x + b_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleLayer {
    pub a0: f64,
    pub a: Vec<f64>,
    /// One row per neuron.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub activation: Activation,
    /// Biases are part of the parameter vector only when set.
    #[serde(default)]
    pub train_bias: bool,
}

impl SingleLayer {
    pub fn new(a0: f64, a: Vec<f64>, w: Vec<Vec<f64>>, activation: Activation) -> Result<Self> {
        let m = a.len();
        let s = SingleLayer { a0, a, w, b: vec![0.0; m], activation, train_bias: false };
        s.validate()?;
        Ok(s)
    }

    pub fn zeros(m: usize, d: usize, activation: Activation) -> Self {
        SingleLayer { a0: 0.0, a: vec![0.0; m], w: vec![vec![0.0; d]; m], b: vec![0.0; m], activation, train_bias: false }
    }

    /// Gaussian initialisation with standard deviation `scale`.
    pub fn random(rng: &mut Rng, m: usize, d: usize, activation: Activation, scale: f64) -> Self {
        let a0 = normal_vec(rng, 1, scale)[0];
        let a = normal_vec(rng, m, scale);
        let w = (0..m).map(|_| normal_vec(rng, d, scale)).collect();
        SingleLayer { a0, a, w, b: vec![0.0; m], activation, train_bias: false }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.a.len();
        if m == 0 {
            return reject("single layer needs at least one neuron");
        }
        if self.w.len() != m {
            return Err(Error::Dim { expected: m, got: self.w.len() });
        }
        if self.b.len() != m {
            return Err(Error::Dim { expected: m, got: self.b.len() });
        }
        let d = self.w[0].len();
        if self.w.iter().any(|r| r.len() != d) {
            return reject("weight rows have unequal length");
        }
        let finite = std::iter::once(&self.a0).chain(&self.a).chain(self.w.iter().flatten()).chain(&self.b);
        for v in finite {
            if !v.is_finite() {
                return Err(Error::NonFinite("single-layer parameter".into()));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn d(&self) -> usize {
        self.w[0].len()
    }

    pub fn n_params(&self) -> usize {
        let m = self.m();
        1 + m + m * self.d() + if self.train_bias { m } else { 0 }
    }

    pub fn pre_activation(&self, j: usize, x: &[f64]) -> f64 {
        dot(&self.w[j], x) + self.b[j]
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut f = self.a0;
        for j in 0..self.m() {
            f += self.a[j] * self.activation.eval(self.pre_activation(j, x));
        }
        f
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.push(self.a0);
        out.extend_from_slice(&self.a);
        for r in &self.w {
            out.extend_from_slice(r);
        }
        if self.train_bias {
            out.extend_from_slice(&self.b);
        }
    }

    fn read_params(&mut self, p: &[f64]) -> usize {
        let (m, d) = (self.m(), self.d());
        let mut k = 0;
        self.a0 = p[k];
        k += 1;
        self.a.copy_from_slice(&p[k..k + m]);
        k += m;
        for r in self.w.iter_mut() {
            r.copy_from_slice(&p[k..k + d]);
            k += d;
        }
        if self.train_bias {
            self.b.copy_from_slice(&p[k..k + m]);
            k += m;
        }
        k
    }

    /// Adds `c * df/dtheta` into `out`.
    fn accumulate_output_grad(&self, x: &[f64], c: f64, out: &mut [f64]) {
        let (m, d) = (self.m(), self.d());
        out[0] += c;
        let w_off = 1 + m;
        let b_off = w_off + m * d;
        for j in 0..m {
            let z = self.pre_activation(j, x);
            out[1 + j] += c * self.activation.eval(z);
            let s = c * self.a[j] * self.activation.d1(z);
            if s != 0.0 {
                for (o, xi) in out[w_off + j * d..w_off + (j + 1) * d].iter_mut().zip(x) {
                    *o += s * xi;
                }
                if self.train_bias {
                    out[b_off + j] += s;
                }
            }
        }
    }

    /// Index range of `w_j` inside this layer's parameters.
    pub fn w_range(&self, j: usize) -> Range<usize> {
        let start = 1 + self.m() + j * self.d();
        start..start + self.d()
    }
}

/// Fully connected layer `h -> sigma(W^T h + b)`, `W` stored `n_in x n_out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(n_in: usize, n_out: usize, w: Vec<f64>, b: Vec<f64>, activation: Activation) -> Result<Self> {
        let l = Layer { n_in, n_out, w, b, activation };
        l.validate()?;
        Ok(l)
    }

    pub fn zeros(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Layer { n_in, n_out, w: vec![0.0; n_in * n_out], b: vec![0.0; n_out], activation }
    }

    pub fn random(rng: &mut Rng, n_in: usize, n_out: usize, activation: Activation, scale: f64) -> Self {
        Layer { n_in, n_out, w: normal_vec(rng, n_in * n_out, scale), b: normal_vec(rng, n_out, scale), activation }
    }

    fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_out == 0 {
            return reject("layer dimensions must be positive");
        }
        if self.w.len() != self.n_in * self.n_out {
            return Err(Error::Dim { expected: self.n_in * self.n_out, got: self.w.len() });
        }
        if self.b.len() != self.n_out {
            return Err(Error::Dim { expected: self.n_out, got: self.b.len() });
        }
        if self.w.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameter".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n_out + j]
    }

    pub fn pre_activations(&self, h: &[f64]) -> Vec<f64> {
        let mut z = self.b.clone();
        for (i, hi) in h.iter().enumerate() {
            if *hi != 0.0 {
                let row = &self.w[i * self.n_out..(i + 1) * self.n_out];
                for (zj, wij) in z.iter_mut().zip(row) {
                    *zj += hi * wij;
                }
            }
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feedforward {
    pub layers: Vec<Layer>,
}

impl Feedforward {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let f = Feedforward { layers };
        f.validate()?;
        Ok(f)
    }

    /// Hidden layers with `act`, then a linear layer of width `out`.
    pub fn random(rng: &mut Rng, dims: &[usize], act: Activation, out_act: Activation, scale: f64) -> Result<Self> {
        if dims.len() < 2 {
            return reject("feedforward needs an input and an output dimension");
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| Layer::random(rng, w[0], w[1], if l == last { out_act } else { act }, scale))
            .collect();
        Feedforward::new(layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return reject("feedforward needs at least one layer");
        }
        for l in &self.layers {
            l.validate()?;
        }
        for w in self.layers.windows(2) {
            if w[0].n_out != w[1].n_in {
                return reject(format!("layer widths do not chain: {} then {}", w[0].n_out, w[1].n_in));
            }
        }
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Post-activations of every layer, input first.
    pub fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut hs = vec![x.to_vec()];
        for l in &self.layers {
            let z = l.pre_activations(hs.last().unwrap());
            hs.push(z.iter().map(|v| l.activation.eval(*v)).collect());
        }
        hs
    }

    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().unwrap()
    }

    /// Pre-activations of the last layer.
    pub fn last_pre_activations(&self, x: &[f64]) -> Vec<f64> {
        let hs = self.activations(x);
        self.layers.last().unwrap().pre_activations(&hs[hs.len() - 2])
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }

    fn read_params(&mut self, p: &[f64]) -> usize {
        let mut k = 0;
        for l in self.layers.iter_mut() {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
        k
    }

    /// Backpropagates `g_out` (gradient on the outputs) into `out`.
    fn accumulate_grad(&self, x: &[f64], g_out: &[f64], out: &mut [f64]) {
        let hs = self.activations(x);
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut k = 0;
        for l in &self.layers {
            offsets.push(k);
            k += l.n_params();
        }
        let mut g = g_out.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let h_in = &hs[li];
            let z = l.pre_activations(h_in);
            let gz: Vec<f64> = g.iter().zip(&z).map(|(gi, zi)| gi * l.activation.d1(*zi)).collect();
            let off = offsets[li];
            for (i, hi) in h_in.iter().enumerate() {
                if *hi != 0.0 {
                    for (j, gzj) in gz.iter().enumerate() {
                        out[off + i * l.n_out + j] += hi * gzj;
                    }
                }
            }
            let boff = off + l.n_in * l.n_out;
            for (j, gzj) in gz.iter().enumerate() {
                out[boff + j] += gzj;
            }
            if li > 0 {
                g = (0..l.n_in).map(|i| (0..l.n_out).map(|j| l.weight(i, j) * gz[j]).sum()).collect();
            }
        }
    }

    fn scale_output(&mut self, alpha: f64) {
        let l = self.layers.last_mut().unwrap();
        l.w.iter_mut().chain(l.b.iter_mut()).for_each(|v| *v *= alpha);
    }
}

/// Sum of per-anchor values on closed boxes `[x_i - width, x_i + width]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub anchors: Vec<Vec<f64>>,
    pub mus: Vec<f64>,
    pub widths: Vec<f64>,
}

impl Bump {
    /// Checks positive widths and that the enlarged boxes of half-side
    /// `2 * width` around distinct anchors do not overlap.
    pub fn new(anchors: Vec<Vec<f64>>, mus: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if anchors.is_empty() || anchors.len() != mus.len() {
            return reject("bump needs one value per anchor");
        }
        let d = widths.len();
        if d == 0 || anchors.iter().any(|a| a.len() != d) {
            return reject("anchor dimension must match widths");
        }
        if widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return reject("bump widths must be positive");
        }
        if anchors.iter().flatten().chain(&mus).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bump parameter".into()));
        }
        for i in 0..anchors.len() {
            for j in 0..i {
                let separated = (0..d).any(|k| (anchors[i][k] - anchors[j][k]).abs() >= 4.0 * widths[k]);
                if !separated {
                    return reject(format!("bump boxes around anchors {j} and {i} overlap"));
                }
            }
        }
        Ok(Bump { anchors, mus, widths })
    }

    pub fn d(&self) -> usize {
        self.widths.len()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for (a, mu) in self.anchors.iter().zip(&self.mus) {
            if a.iter().zip(x).zip(&self.widths).all(|((ak, xk), wk)| (xk - ak).abs() <= *wk) {
                f += mu;
            }
        }
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Branch {
    /// Fixed offset with no parameters.
    Constant { c: f64 },
    Feedforward(Feedforward),
    Bump(Bump),
}

impl Branch {
    fn n_params(&self) -> usize {
        match self {
            Branch::Constant { .. } => 0,
            Branch::Feedforward(f) => f.n_params(),
            Branch::Bump(b) => b.d(),
        }
    }

    fn forward(&self, x: &[f64]) -> f64 {
        match self {
            Branch::Constant { c } => *c,
            Branch::Feedforward(f) => f.forward_vec(x)[0],
            Branch::Bump(b) => b.forward(x),
        }
    }

    fn input_dim(&self) -> Option<usize> {
        match self {
            Branch::Constant { .. } => None,
            Branch::Feedforward(f) => Some(f.d_in()),
            Branch::Bump(b) => Some(b.d()),
        }
    }
}

/// `f = f_S + f_D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortcutNet {
    pub fs: SingleLayer,
    pub fd: Branch,
}

impl ShortcutNet {
    pub fn new(fs: SingleLayer, fd: Branch) -> Result<Self> {
        fs.validate()?;
        if let Some(d) = fd.input_dim() {
            if d != fs.d() {
                return Err(Error::Dim { expected: fs.d(), got: d });
            }
        }
        if let Branch::Feedforward(f) = &fd {
            f.validate()?;
            if f.d_out() != 1 {
                return reject("feedforward branch must have scalar output");
            }
        }
        Ok(ShortcutNet { fs, fd })
    }
}

/// `f(x) = a . (x + H(x)) + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityShortcutNet {
    pub a: Vec<f64>,
    pub b: f64,
    pub h: Feedforward,
}

impl IdentityShortcutNet {
    pub fn new(a: Vec<f64>, b: f64, h: Feedforward) -> Result<Self> {
        h.validate()?;
        if h.d_in() != a.len() || h.d_out() != a.len() {
            return reject("identity shortcut needs H: R^d -> R^d with d = len(a)");
        }
        Ok(IdentityShortcutNet { a, b, h })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum Network {
    Shortcut(ShortcutNet),
    /// Plain feedforward net with scalar output.
    Feedforward(Feedforward),
    IdentityShortcut(IdentityShortcutNet),
}

impl Network {
    pub fn shortcut(fs: SingleLayer, fd: Branch) -> Result<Self> {
        Ok(Network::Shortcut(ShortcutNet::new(fs, fd)?))
    }

    pub fn feedforward(f: Feedforward) -> Result<Self> {
        f.validate()?;
        if f.d_out() != 1 {
            return reject("feedforward network must have scalar output");
        }
        Ok(Network::Feedforward(f))
    }

    pub fn arch_name(&self) -> &'static str {
        match self {
            Network::Shortcut(_) => "shortcut",
            Network::Feedforward(_) => "feedforward",
            Network::IdentityShortcut(_) => "identity_shortcut",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Network::Shortcut(s) => s.fs.d(),
            Network::Feedforward(f) => f.d_in(),
            Network::IdentityShortcut(n) => n.a.len(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Network::Shortcut(s) => s.fs.n_params() + s.fd.n_params(),
            Network::Feedforward(f) => f.n_params(),
            Network::IdentityShortcut(n) => n.a.len() + 1 + n.h.n_params(),
        }
    }

    /// Parameters of the single-layer part, or everything for architectures
    /// without one.
    pub fn theta_s(&self) -> Range<usize> {
        match self {
            Network::Shortcut(s) => 0..s.fs.n_params(),
            _ => 0..self.n_params(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        match self {
            Network::Shortcut(s) => {
                s.fs.write_params(&mut p);
                match &s.fd {
                    Branch::Constant { .. } => {}
                    Branch::Feedforward(f) => f.write_params(&mut p),
                    Branch::Bump(b) => p.extend_from_slice(&b.widths),
                }
            }
            Network::Feedforward(f) => f.write_params(&mut p),
            Network::IdentityShortcut(n) => {
                p.extend_from_slice(&n.a);
                p.push(n.b);
                n.h.write_params(&mut p);
            }
        }
        p
    }

    pub fn with_params(&self, p: &[f64]) -> Result<Network> {
        if p.len() != self.n_params() {
            return Err(Error::Dim { expected: self.n_params(), got: p.len() });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        let mut net = self.clone();
        match &mut net {
            Network::Shortcut(s) => {
                let k = s.fs.read_params(p);
                match &mut s.fd {
                    Branch::Constant { .. } => {}
                    Branch::Feedforward(f) => {
                        f.read_params(&p[k..]);
                    }
                    Branch::Bump(b) => b.widths.copy_from_slice(&p[k..]),
                }
            }
            Network::Feedforward(f) => {
                f.read_params(p);
            }
            Network::IdentityShortcut(n) => {
                let d = n.a.len();
                n.a.copy_from_slice(&p[..d]);
                n.b = p[d];
                n.h.read_params(&p[d + 1..]);
            }
        }
        Ok(net)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Dim { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.eval(x))
    }

    /// Unchecked forward pass.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Network::Shortcut(s) => s.fs.forward(x) + s.fd.forward(x),
            Network::Feedforward(f) => f.forward_vec(x)[0],
            Network::IdentityShortcut(n) => {
                let h = n.h.forward_vec(x);
                n.a.iter().zip(x).zip(&h).map(|((a, xi), hi)| a * (xi + hi)).sum::<f64>() + n.b
            }
        }
    }

    /// Adds `c * df(x)/dtheta` into `out`.
    pub fn accumulate_output_grad(&self, x: &[f64], c: f64, out: &mut [f64]) {
        match self {
            Network::Shortcut(s) => {
                s.fs.accumulate_output_grad(x, c, out);
                if let Branch::Feedforward(f) = &s.fd {
                    let k = s.fs.n_params();
                    f.accumulate_grad(x, &[c], &mut out[k..]);
                }
                // Bump outputs are piecewise constant in the widths.
            }
            Network::Feedforward(f) => f.accumulate_grad(x, &[c], out),
            Network::IdentityShortcut(n) => {
                let d = n.a.len();
                let h = n.h.forward_vec(x);
                for k in 0..d {
                    out[k] += c * (x[k] + h[k]);
                }
                out[d] += c;
                let g: Vec<f64> = n.a.iter().map(|a| c * a).collect();
                n.h.accumulate_grad(x, &g, &mut out[d + 1..]);
            }
        }
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.n() == 0 {
            return reject("dataset is empty");
        }
        if ds.d() != self.input_dim() {
            return Err(Error::Dim { expected: self.input_dim(), got: ds.d() });
        }
        Ok(())
    }

    pub fn outputs(&self, ds: &Dataset) -> Vec<f64> {
        ds.x.iter().map(|x| self.eval(x)).collect()
    }

    /// `(1/n) sum_i l(-y_i f(x_i))`.
    pub fn empirical_loss(&self, loss: &Loss, ds: &Dataset) -> Result<f64> {
        self.check_dataset(ds)?;
        let s: f64 = ds.x.iter().zip(&ds.y).map(|(x, &y)| loss.eval(-(y as f64) * self.eval(x))).sum();
        Ok(s / ds.n() as f64)
    }

    /// Fraction of samples with `y != sign(f(x))`, where `sign(0) = +1`.
    pub fn training_error(&self, ds: &Dataset) -> Result<Ratio<u64>> {
        self.check_dataset(ds)?;
        let wrong = ds.x.iter().zip(&ds.y).filter(|(x, &y)| predict(self.eval(x)) != y).count();
        Ok(Ratio::new(wrong as u64, ds.n() as u64))
    }

    pub fn grad(&self, loss: &Loss, ds: &Dataset) -> Result<Vec<f64>> {
        Ok(self.loss_and_grad(loss, ds)?.1)
    }

    pub fn loss_and_grad(&self, loss: &Loss, ds: &Dataset) -> Result<(f64, Vec<f64>)> {
        self.check_dataset(ds)?;
        let n = ds.n() as f64;
        let mut g = vec![0.0; self.n_params()];
        let mut l = 0.0;
        for (x, &y) in ds.x.iter().zip(&ds.y) {
            let y = y as f64;
            let z = -y * self.eval(x);
            l += loss.eval(z);
            let c = loss.d1(z) * -y / n;
            if c != 0.0 {
                self.accumulate_output_grad(x, c, &mut g);
            }
        }
        Ok((l / n, g))
    }

    /// Hessian restricted to `block`, from central differences of the analytic
    /// gradient, then symmetrized.
    pub fn hessian_block(&self, loss: &Loss, ds: &Dataset, block: &[usize]) -> Result<SymMat> {
        self.check_dataset(ds)?;
        let np = self.n_params();
        if block.iter().any(|&k| k >= np) {
            return reject("block index out of range");
        }
        let p0 = self.params();
        let mut h = SymMat::zeros(block.len());
        for (c, &k) in block.iter().enumerate() {
            let mut p = p0.clone();
            p[k] = p0[k] + HESS_STEP;
            let gp = self.with_params(&p)?.grad(loss, ds)?;
            p[k] = p0[k] - HESS_STEP;
            let gm = self.with_params(&p)?.grad(loss, ds)?;
            for (r, &kr) in block.iter().enumerate() {
                h.data[r * block.len() + c] = (gp[kr] - gm[kr]) / (2.0 * HESS_STEP);
            }
        }
        h.symmetrize();
        h.validate()?;
        Ok(h)
    }

    /// Multiplies the network output by `alpha` by scaling its last linear map.
    pub fn scale_output(&self, alpha: f64) -> Network {
        let mut net = self.clone();
        match &mut net {
            Network::Shortcut(s) => {
                s.fs.a0 *= alpha;
                s.fs.a.iter_mut().for_each(|v| *v *= alpha);
                match &mut s.fd {
                    Branch::Constant { c } => *c *= alpha,
                    Branch::Feedforward(f) => f.scale_output(alpha),
                    Branch::Bump(b) => b.mus.iter_mut().for_each(|v| *v *= alpha),
                }
            }
            Network::Feedforward(f) => f.scale_output(alpha),
            Network::IdentityShortcut(n) => {
                n.a.iter_mut().for_each(|v| *v *= alpha);
                n.b *= alpha;
            }
        }
        net
    }

    /// Rescales a zero-error network so that every margin `y f(x)` is at least
    /// `2 z0`, which makes a poly-hinge loss vanish exactly.
    pub fn rescale_to_zero_loss(&self, loss: &Loss, ds: &Dataset) -> Result<Network> {
        self.check_dataset(ds)?;
        if !matches!(loss, Loss::PolyHinge { .. }) {
            return reject("rescaling to zero loss needs a poly_hinge loss");
        }
        let margins: Vec<f64> = ds.x.iter().zip(&ds.y).map(|(x, &y)| y as f64 * self.eval(x)).collect();
        let (i, min) = margins.iter().cloned().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        if !(min > 0.0) {
            return Err(Error::Precondition(format!(
                "sample {i} has margin {min}; a strictly positive margin on every sample is required"
            )));
        }
        let target = 2.0 * loss.z0();
        let alpha = (target / min).max(1.0);
        let mut net = self.scale_output(alpha);
        // Guard against the product rounding just below the target.
        for _ in 0..4 {
            let worst = ds.x.iter().zip(&ds.y).map(|(x, &y)| y as f64 * net.eval(x)).fold(f64::INFINITY, f64::min);
            if worst >= target {
                break;
            }
            net = net.scale_output(1.0 + 1e-12 + (target - worst) / worst);
        }
        Ok(net)
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile { format_version: FORMAT_VERSION, shape: self.shape(), network: self.clone() }
    }

    pub fn shape(&self) -> Shape {
        let (neurons, layers, bias_trained) = match self {
            Network::Shortcut(s) => (Some(s.fs.m()), None, Some(s.fs.train_bias)),
            Network::Feedforward(f) => (None, Some(layer_dims(f)), None),
            Network::IdentityShortcut(n) => (None, Some(layer_dims(&n.h)), None),
        };
        Shape { arch: self.arch_name().into(), input_dim: self.input_dim(), n_params: self.n_params(), neurons, layers, bias_trained }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file())? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network> {
        NetworkFile::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn predict(f: f64) -> i8 {
    if f >= 0.0 { 1 } else { -1 }
}

fn layer_dims(f: &Feedforward) -> Vec<usize> {
    std::iter::once(f.d_in()).chain(f.layers.iter().map(|l| l.n_out)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub arch: String,
    pub input_dim: usize,
    pub n_params: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neurons: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_trained: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format_version: u32,
    pub shape: Shape,
    pub network: Network,
}

impl NetworkFile {
    pub fn from_json(s: &str) -> Result<Network> {
        let file: NetworkFile = serde_json::from_str(s)?;
        if file.format_version != FORMAT_VERSION {
            return reject(format!("unsupported network format version {}", file.format_version));
        }
        let net = file.network;
        if net.shape() != file.shape {
            return reject("stored shape does not match the network");
        }
        match &net {
            Network::Shortcut(s) => {
                ShortcutNet::new(s.fs.clone(), s.fd.clone())?;
            }
            Network::Feedforward(f) => {
                Network::feedforward(f.clone())?;
            }
            Network::IdentityShortcut(n) => {
                IdentityShortcutNet::new(n.a.clone(), n.b, n.h.clone())?;
            }
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_named, Provenance};
    use crate::losses::check_surrogate;
    use crate::numerics::{fd_grad, max_abs, rng, FD_STEP};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn ph(p: u32) -> Loss {
        Loss::poly_hinge(p).unwrap()
    }

    fn random_ds(r: &mut crate::numerics::Rng, n: usize, d: usize) -> Dataset {
        let x = (0..n).map(|_| normal_vec(r, d, 1.0)).collect();
        let y = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        Dataset::new(x, y, Provenance::manual("random")).unwrap()
    }

    fn random_net(r: &mut crate::numerics::Rng, arch: usize, d: usize, act: Activation) -> Network {
        match arch {
            0 => {
                let mut fs = SingleLayer::random(r, 3, d, act, 0.7);
                fs.train_bias = true;
                fs.b = normal_vec(r, 3, 0.5);
                let fd = Feedforward::random(r, &[d, 4, 1], Activation::Softplus, Activation::Linear, 0.7).unwrap();
                Network::shortcut(fs, Branch::Feedforward(fd)).unwrap()
            }
            1 => Network::shortcut(SingleLayer::random(r, 4, d, act, 0.7), Branch::Constant { c: 0.3 }).unwrap(),
            2 => Network::feedforward(Feedforward::random(r, &[d, 5, 3, 1], act, Activation::Linear, 0.7).unwrap()).unwrap(),
            _ => {
                let h = Feedforward::random(r, &[d, 4, d], act, act, 0.7).unwrap();
                Network::IdentityShortcut(IdentityShortcutNet::new(normal_vec(r, d, 0.7), 0.1, h).unwrap())
            }
        }
    }

    #[test]
    fn forward_examples() {
        let fs = SingleLayer::new(0.0, vec![0.0], vec![vec![1.0, 0.0]], Activation::Softplus).unwrap();
        let net = Network::shortcut(fs, Branch::Constant { c: 3.0 }).unwrap();
        assert_eq!(net.forward(&[5.0, -2.0]).unwrap(), 3.0);
        assert!(net.forward(&[1.0]).is_err());

        let fs = SingleLayer::new(0.0, vec![1.0], vec![vec![1.0, 0.0]], Activation::Quadratic).unwrap();
        let net = Network::shortcut(fs, Branch::Constant { c: 0.0 }).unwrap();
        assert_eq!(net.forward(&[2.0, 5.0]).unwrap(), 4.0);

        let b = Bump::new(vec![vec![0.0, 0.0]], vec![7.0], vec![0.1, 0.1]).unwrap();
        assert_eq!(b.forward(&[0.05, 0.0]), 7.0);
        assert_eq!(b.forward(&[0.2, 0.0]), 0.0);
    }

    #[test]
    fn loss_examples() {
        let mut r = rng(0, 0);
        let ds = random_ds(&mut r, 9, 3);
        let zero = Network::shortcut(SingleLayer::zeros(2, 3, Activation::Relu), Branch::Constant { c: 0.0 }).unwrap();
        assert_eq!(zero.empirical_loss(&ph(6), &ds).unwrap(), 1.0);
        assert_eq!(zero.empirical_loss(&Loss::Logistic, &ds).unwrap(), 1.0);
        // Constant +1 network is right exactly on the positives.
        let plus = Network::shortcut(SingleLayer::zeros(1, 3, Activation::Relu), Branch::Constant { c: 1.0 }).unwrap();
        assert_eq!(plus.training_error(&ds).unwrap(), Ratio::new(ds.n_neg() as u64, 9));
    }

    #[test]
    fn xor_constant_net_has_half_error() {
        let ds = gen_named("xor4_balanced", 8, &mut rng(0, 0), None).unwrap();
        let net = Network::shortcut(SingleLayer::zeros(2, 2, Activation::Tanh), Branch::Constant { c: -0.2 }).unwrap();
        assert_eq!(net.training_error(&ds).unwrap(), Ratio::new(1, 2));
    }

    #[test]
    fn separated_margins_give_zero_loss_and_gradient() {
        let ds = Dataset::from_points("t", &[vec![1.0]], &[vec![-1.0]]).unwrap();
        let fs = SingleLayer::new(0.0, vec![1.0], vec![vec![2.0]], Activation::Linear).unwrap();
        let net = Network::shortcut(fs, Branch::Constant { c: 0.0 }).unwrap();
        assert_eq!(net.empirical_loss(&ph(6), &ds).unwrap(), 0.0);
        assert_eq!(net.training_error(&ds).unwrap(), Ratio::new(0, 1));
        assert!(net.grad(&ph(6), &ds).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn hessian_w_block_at_zero_weights() {
        // At w = 0 the outer-product term drops out of the w-block.
        let x = vec![0.6, -0.3];
        let ds = Dataset::from_points("one", &[x.clone()], &[]).unwrap();
        let a = 0.5;
        let mut fs = SingleLayer::new(0.0, vec![a], vec![vec![0.0, 0.0]], Activation::Quadratic).unwrap();
        fs.a0 = 0.2;
        let net = Network::shortcut(fs, Branch::Constant { c: 0.0 }).unwrap();
        let loss = ph(6);
        let l1 = loss.d1(-net.eval(&x));
        assert!(l1 > 0.0);
        let h = net.hessian_block(&loss, &ds, &net_w_block(&net, 0)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = -2.0 * a * l1 * x[i] * x[j];
                assert!((h.get(i, j) - want).abs() < 1e-7, "{} vs {want}", h.get(i, j));
            }
        }
    }

    #[test]
    fn hessian_w_block_general_closed_form() {
        let x = vec![0.6, -0.3];
        let ds = Dataset::from_points("one", &[x.clone()], &[]).unwrap();
        let a = 0.5;
        let w = vec![0.2, 0.1];
        let fs = SingleLayer::new(0.0, vec![a], vec![w.clone()], Activation::Quadratic).unwrap();
        let net = Network::shortcut(fs, Branch::Constant { c: 0.0 }).unwrap();
        let loss = Loss::Quadratic;
        let z = -net.eval(&x);
        let dfdw: Vec<f64> = x.iter().map(|xi| a * 2.0 * dot(&w, &x) * xi).collect();
        let want = SymMat::from_fn(2, |i, j| loss.d2(z) * dfdw[i] * dfdw[j] - loss.d1(z) * 2.0 * a * x[i] * x[j]);
        let h = net.hessian_block(&loss, &ds, &net_w_block(&net, 0)).unwrap();
        for (u, v) in h.data.iter().zip(&want.data) {
            assert!((u - v).abs() < 1e-7, "{u} vs {v}");
        }
    }

    fn net_w_block(net: &Network, j: usize) -> Vec<usize> {
        match net {
            Network::Shortcut(s) => s.fs.w_range(j).collect(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn hessian_w_block_vanishes_when_output_weight_is_zero() {
        let mut r = rng(5, 0);
        let ds = random_ds(&mut r, 7, 3);
        let mut fs = SingleLayer::random(&mut r, 2, 3, Activation::Softplus, 0.5);
        fs.a[0] = 0.0;
        let net = Network::shortcut(fs, Branch::Constant { c: 0.0 }).unwrap();
        let h = net.hessian_block(&ph(6), &ds, &net_w_block(&net, 0)).unwrap();
        assert!(max_abs(&h.data) < 1e-12);
    }

    #[test]
    fn rescale_examples() {
        let ds = Dataset::from_points("r", &[vec![0.1], vec![0.5]], &[vec![-0.2]]).unwrap();
        let fs = SingleLayer::new(0.0, vec![1.0], vec![vec![1.0]], Activation::Linear).unwrap();
        let net = Network::shortcut(fs, Branch::Constant { c: 0.0 }).unwrap();
        assert!(net.empirical_loss(&ph(6), &ds).unwrap() > 0.0);
        let scaled = net.rescale_to_zero_loss(&ph(6), &ds).unwrap();
        assert_eq!(scaled.empirical_loss(&ph(6), &ds).unwrap(), 0.0);
        for (x, &y) in ds.x.iter().zip(&ds.y) {
            assert!(y as f64 * scaled.eval(x) >= 1.0);
        }
        let again = scaled.rescale_to_zero_loss(&ph(6), &ds).unwrap();
        assert_eq!(again.empirical_loss(&ph(6), &ds).unwrap(), 0.0);

        let bad = Dataset::from_points("b", &[vec![-0.1]], &[vec![-0.2]]).unwrap();
        assert!(matches!(net.rescale_to_zero_loss(&ph(6), &bad), Err(Error::Precondition(_))));
    }

    #[test]
    fn bump_rejects_overlap_and_keeps_anchor_values() {
        assert!(Bump::new(vec![vec![0.0], vec![0.3]], vec![1.0, 2.0], vec![0.1]).is_err());
        let anchors = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]];
        let b = Bump::new(anchors.clone(), vec![1.5, -2.0, 0.25], vec![0.25, 0.25]).unwrap();
        for (a, mu) in anchors.iter().zip(&b.mus) {
            assert_eq!(b.forward(a), *mu);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut r = rng(9, 0);
        for arch in 0..4 {
            let net = random_net(&mut r, arch, 3, Activation::Softplus);
            let s = serde_json::to_string(&net.to_file()).unwrap();
            let back = NetworkFile::from_json(&s).unwrap();
            assert_eq!(back, net);
            assert!(back.params().iter().zip(net.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let bump = Bump::new(vec![vec![0.0], vec![1.0]], vec![0.1, 0.2], vec![0.2]).unwrap();
        let net = Network::shortcut(SingleLayer::zeros(1, 1, Activation::Quadratic), Branch::Bump(bump)).unwrap();
        let s = serde_json::to_string(&net.to_file()).unwrap();
        assert_eq!(NetworkFile::from_json(&s).unwrap(), net);
        assert!(NetworkFile::from_json(&s.replace("\"format_version\":1", "\"format_version\":9")).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut r = rng(10, 0);
        for arch in 0..4 {
            let net = random_net(&mut r, arch, 3, Activation::Relu);
            let p = net.params();
            assert_eq!(p.len(), net.n_params());
            assert_eq!(net.with_params(&p).unwrap(), net);
        }
    }

    fn grad_matches_fd(net: &Network, loss: &Loss, ds: &Dataset) -> std::result::Result<(), String> {
        let g = net.grad(loss, ds).unwrap();
        let fd = fd_grad(|p| net.with_params(p).unwrap().empirical_loss(loss, ds).unwrap(), &net.params(), FD_STEP).unwrap();
        let scale = 1.0 + max_abs(&g);
        for (k, (a, b)) in g.iter().zip(&fd).enumerate() {
            if (a - b).abs() > 1e-5 * scale {
                return Err(format!("param {k}: analytic {a} vs fd {b}"));
            }
        }
        Ok(())
    }

    fn near_kink(net: &Network, ds: &Dataset) -> bool {
        let pre = |z: f64| z.abs() < 1e-3;
        match net {
            Network::Shortcut(s) => ds.x.iter().any(|x| (0..s.fs.m()).any(|j| pre(s.fs.pre_activation(j, x)))),
            Network::Feedforward(f) | Network::IdentityShortcut(IdentityShortcutNet { h: f, .. }) => ds.x.iter().any(|x| {
                let hs = f.activations(x);
                f.layers.iter().enumerate().any(|(l, layer)| layer.pre_activations(&hs[l]).into_iter().any(pre))
            }),
        }
    }

    #[test]
    fn gradient_at_bump_is_finite_difference_exact() {
        let ds = Dataset::from_points("b", &[vec![0.0], vec![2.0]], &[vec![1.0]]).unwrap();
        let bump = Bump::new(ds.x.clone(), vec![0.3, -0.2, 0.1], vec![0.2]).unwrap();
        let mut r = rng(1, 1);
        let net = Network::shortcut(SingleLayer::random(&mut r, 2, 1, Activation::Softplus, 0.5), Branch::Bump(bump)).unwrap();
        grad_matches_fd(&net, &ph(3), &ds).unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..10_000, arch in 0usize..4, act_i in 0usize..4, loss_i in 0usize..3) {
            let mut r = rng(seed, 7);
            let act = [Activation::Softplus, Activation::Tanh, Activation::Quadratic, Activation::Relu][act_i];
            let loss = [ph(6), Loss::Logistic, Loss::Quadratic][loss_i];
            let d = r.random_range(1..4);
            let ds = random_ds(&mut r, 6, d);
            let net = random_net(&mut r, arch, d, act);
            prop_assume!(!near_kink(&net, &ds));
            prop_assert!(grad_matches_fd(&net, &loss, &ds).is_ok(), "{:?}", grad_matches_fd(&net, &loss, &ds));
        }

        #[test]
        fn training_error_below_empirical_loss(seed in 0u64..10_000, arch in 0usize..4, p in 1u32..8) {
            let mut r = rng(seed, 8);
            let loss = ph(p);
            prop_assert!(check_surrogate(&loss, &crate::losses::default_grid()).unwrap().all());
            let d = r.random_range(1..4);
            let ds = random_ds(&mut r, 8, d);
            let net = random_net(&mut r, arch, d, Activation::Softplus);
            let err = net.training_error(&ds).unwrap();
            let err = *err.numer() as f64 / *err.denom() as f64;
            prop_assert!(err <= net.empirical_loss(&loss, &ds).unwrap() + 1e-15);
        }

        #[test]
        fn euler_identity_on_output_weights(seed in 0u64..10_000, loss_i in 0usize..3) {
            let mut r = rng(seed, 9);
            let loss = [ph(6), Loss::Logistic, Loss::Quadratic][loss_i];
            let ds = random_ds(&mut r, 7, 3);
            let fs = SingleLayer::random(&mut r, 4, 3, Activation::Softplus, 0.7);
            let fd = Feedforward::random(&mut r, &[3, 3, 1], Activation::Tanh, Activation::Linear, 0.7).unwrap();
            let net = Network::shortcut(fs.clone(), Branch::Feedforward(fd)).unwrap();
            let g = net.grad(&loss, &ds).unwrap();
            let lhs = fs.a0 * g[0] + (0..fs.m()).map(|j| fs.a[j] * g[1 + j]).sum::<f64>();
            let n = ds.n() as f64;
            let rhs: f64 = ds.x.iter().zip(&ds.y).map(|(x, &y)| {
                let y = y as f64;
                loss.d1(-y * net.eval(x)) * -y * fs.forward(x) / n
            }).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()));
        }

        #[test]
        fn bump_invariant_under_width_perturbation(seed in 0u64..10_000) {
            let mut r = rng(seed, 10);
            let anchors: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, r.random_range(-1.0..1.0)]).collect();
            let mus = normal_vec(&mut r, 5, 1.0);
            let widths = vec![0.2, 0.15];
            let b = Bump::new(anchors.clone(), mus.clone(), widths.clone()).unwrap();
            let delta: Vec<f64> = widths.iter().map(|w| r.random_range(-0.5..0.5) * w).collect();
            let perturbed = Bump { widths: widths.iter().zip(&delta).map(|(w, dw)| w + dw).collect(), ..b.clone() };
            for (a, mu) in anchors.iter().zip(&mus) {
                prop_assert_eq!(b.forward(a), *mu);
                prop_assert_eq!(perturbed.forward(a), *mu);
            }
        }
    }
}

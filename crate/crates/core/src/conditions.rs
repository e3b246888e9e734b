//! Decision procedures for the quadratic-neuron dataset conditions.
//!
//! With `Lambda = {lambda >= 0 : sum over each class = 1}` and
//! `M(lambda) = sum_i lambda_i y_i x_i x_i^T`, the following alternatives hold:
//!
//! * no `lambda` makes `M(lambda)` positive semidefinite exactly when some
//!   negative semidefinite `A` and scalar `c2` satisfy `y_i (x_i^T A x_i - c2) > 0`;
//! * no `lambda` makes `M(lambda)` negative semidefinite exactly when such a
//!   separator exists with `A` positive semidefinite.
//!
//! The quadratic check answers YES when both separators are found (their sum
//! is returned) and NO as soon as a semidefinite `M(lambda)` is found. Each
//! side is a bilinear saddle problem over the spectraplex and `Lambda`, solved
//! with optimistic multiplicative weights on the span of the data. The
//! necessary check adds the constraint `sum_i lambda_i y_i x_i = 0` and looks
//! for a `lambda` whose `M` is strictly definite on the data span.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{reject, Result};
use crate::numerics::{dot, norm, sym_eig, SymMat};

/// Eigenvalue tolerance for semidefinite witnesses.
pub const EIG_TOL: f64 = 1e-8;
/// Tolerance on `sum lambda_i y_i x_i` for the mean-constrained check.
pub const MEAN_TOL: f64 = 1e-8;
pub const DEFAULT_BUDGET: usize = 200_000;

/// Upper-triangular lifting of `x x^T` with off-diagonals scaled by `sqrt(2)`,
/// plus a trailing `-1` slot, so that `<lift(A, c2), phi(x)> = x^T A x - c2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lifted {
    pub d: usize,
    pub phi: Vec<Vec<f64>>,
    pub y: Vec<i8>,
}

impl Lifted {
    pub fn from_dataset(ds: &Dataset) -> Self {
        Lifted { d: ds.d(), phi: ds.x.iter().map(|x| lift_point(x)).collect(), y: ds.y.clone() }
    }
}

pub fn lift_point(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut v = Vec::with_capacity(d * (d + 1) / 2 + 1);
    for i in 0..d {
        for j in i..d {
            v.push(if i == j { x[i] * x[i] } else { std::f64::consts::SQRT_2 * x[i] * x[j] });
        }
    }
    v.push(-1.0);
    v
}

pub fn lift_matrix(a: &SymMat, c2: f64) -> Vec<f64> {
    let d = a.n;
    let mut v = Vec::with_capacity(d * (d + 1) / 2 + 1);
    for i in 0..d {
        for j in i..d {
            v.push(if i == j { a.get(i, i) } else { std::f64::consts::SQRT_2 * a.get(i, j) });
        }
    }
    v.push(c2);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCertificate {
    pub a: SymMat,
    pub c2: f64,
    /// Smallest realised margin `min_i y_i (x_i^T A x_i - c2)`.
    pub c1: f64,
}

impl SeparationCertificate {
    pub fn margins(&self, ds: &Dataset) -> Vec<f64> {
        ds.x.iter().zip(&ds.y).map(|(x, &y)| y as f64 * (self.a.quad_form(x) - self.c2)).collect()
    }

    pub fn verify(&self, ds: &Dataset) -> bool {
        self.a.n == ds.d()
            && self.c1 > 0.0
            && self.a.validate().is_ok()
            && self.margins(ds).iter().all(|m| *m >= self.c1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    Psd,
    Nsd,
}

impl Definiteness {
    pub fn sign(self) -> f64 {
        match self {
            Definiteness::Psd => 1.0,
            Definiteness::Nsd => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda: Vec<f64>,
    pub matrix: SymMat,
    pub definiteness: Definiteness,
    /// Smallest eigenvalue of `s M`, where `s` is the sign of `definiteness`.
    pub min_abs_eig_margin: f64,
    /// Same quantity restricted to the span of the data.
    pub span_margin: f64,
    /// `min_abs_eig_margin > EIG_TOL`.
    pub strict: bool,
    /// `span_margin > EIG_TOL`.
    pub strict_on_span: bool,
    /// `|| sum_i lambda_i y_i x_i ||`.
    pub mean_residual: f64,
}

impl DualCertificate {
    fn build(ds: &Dataset, lambda: Vec<f64>, definiteness: Definiteness) -> Result<Self> {
        let matrix = moment_matrix(ds, &lambda);
        let s = definiteness.sign();
        let min_abs_eig_margin = sym_eig(&matrix.scaled(s))?.values[0];
        let span = Span::of(ds)?;
        let span_margin = span.restricted_min_eig(&matrix.scaled(s))?;
        Ok(DualCertificate {
            mean_residual: norm(&weighted_mean(ds, &lambda)),
            lambda,
            matrix,
            definiteness,
            min_abs_eig_margin,
            span_margin,
            strict: min_abs_eig_margin > EIG_TOL,
            strict_on_span: span_margin > EIG_TOL,
        })
    }

    /// Re-checks the stored claims against the dataset.
    pub fn verify(&self, ds: &Dataset) -> bool {
        if self.lambda.len() != ds.n() || self.lambda.iter().any(|l| !(*l >= 0.0)) {
            return false;
        }
        let (sp, sm) = class_sums(ds, &self.lambda);
        if !(sp > 0.0 && (sp - sm).abs() <= 1e-9 * sp.max(1.0)) {
            return false;
        }
        let m = moment_matrix(ds, &self.lambda);
        let scale = 1.0 + m.frobenius();
        if m.data.iter().zip(&self.matrix.data).any(|(a, b)| (a - b).abs() > 1e-12 * scale) {
            return false;
        }
        let Ok(eig) = sym_eig(&m.scaled(self.definiteness.sign())) else { return false };
        if eig.values[0] < -EIG_TOL {
            return false;
        }
        if self.strict && eig.values[0] <= EIG_TOL {
            return false;
        }
        if self.strict_on_span {
            let ok = Span::of(ds)
                .and_then(|s| s.restricted_min_eig(&m.scaled(self.definiteness.sign())))
                .map(|v| v > EIG_TOL)
                .unwrap_or(false);
            if !ok {
                return false;
            }
        }
        (norm(&weighted_mean(ds, &self.lambda)) - self.mean_residual).abs() <= 1e-12 * (1.0 + ds.max_norm())
    }

    /// Valid witness for the mean-constrained check.
    pub fn verify_mean_constrained(&self, ds: &Dataset) -> bool {
        self.verify(ds) && self.strict_on_span && self.mean_residual <= MEAN_TOL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum QuadraticVerdict {
    Yes { certificate: SeparationCertificate },
    No { certificate: DualCertificate },
    Undecided { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum NecessaryVerdict {
    Holds { certificate: SeparationCertificate },
    Fails { certificate: DualCertificate },
    Undecided { reason: String },
}

impl QuadraticVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            QuadraticVerdict::Yes { .. } => "YES",
            QuadraticVerdict::No { .. } => "NO",
            QuadraticVerdict::Undecided { .. } => "UNDECIDED",
        }
    }
}

impl NecessaryVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            NecessaryVerdict::Holds { .. } => "HOLDS",
            NecessaryVerdict::Fails { .. } => "FAILS",
            NecessaryVerdict::Undecided { .. } => "UNDECIDED",
        }
    }
}

pub fn moment_matrix(ds: &Dataset, lambda: &[f64]) -> SymMat {
    let mut m = SymMat::zeros(ds.d());
    for ((x, &y), l) in ds.x.iter().zip(&ds.y).zip(lambda) {
        if *l != 0.0 {
            m.add_outer(l * y as f64, x);
        }
    }
    m.symmetrize();
    m
}

pub fn weighted_mean(ds: &Dataset, lambda: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; ds.d()];
    for ((x, &y), l) in ds.x.iter().zip(&ds.y).zip(lambda) {
        for (vk, xk) in v.iter_mut().zip(x) {
            *vk += l * y as f64 * xk;
        }
    }
    v
}

fn class_sums(ds: &Dataset, lambda: &[f64]) -> (f64, f64) {
    let mut s = (0.0, 0.0);
    for (&y, l) in ds.y.iter().zip(lambda) {
        if y == 1 { s.0 += l } else { s.1 += l }
    }
    s
}

/// Orthonormal basis of `span{x_i}`.
struct Span {
    d: usize,
    basis: Vec<Vec<f64>>,
}

impl Span {
    fn of(ds: &Dataset) -> Result<Span> {
        let mut g = SymMat::zeros(ds.d());
        for x in &ds.x {
            g.add_outer(1.0, x);
        }
        g.symmetrize();
        let eig = sym_eig(&g)?;
        let top = eig.values.last().cloned().unwrap_or(0.0);
        let basis = (0..ds.d())
            .filter(|&k| top > 0.0 && eig.values[k] > 1e-12 * top)
            .map(|k| eig.vector(k).to_vec())
            .collect();
        Ok(Span { d: ds.d(), basis })
    }

    fn k(&self) -> usize {
        self.basis.len()
    }

    fn coords(&self, x: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|q| dot(q, x)).collect()
    }

    fn restrict(&self, m: &SymMat) -> SymMat {
        SymMat::from_fn(self.k(), |i, j| {
            let mut s = 0.0;
            for a in 0..self.d {
                for b in 0..self.d {
                    s += self.basis[i][a] * m.get(a, b) * self.basis[j][b];
                }
            }
            s
        })
    }

    /// `Q V Q^T` for `V` expressed in span coordinates.
    fn embed(&self, v: &SymMat) -> SymMat {
        let mut m = SymMat::from_fn(self.d, |a, b| {
            let mut s = 0.0;
            for i in 0..self.k() {
                for j in 0..self.k() {
                    s += self.basis[i][a] * v.get(i, j) * self.basis[j][b];
                }
            }
            s
        });
        m.symmetrize();
        m
    }

    /// Smallest eigenvalue on the span; `+inf` when the span is trivial.
    fn restricted_min_eig(&self, m: &SymMat) -> Result<f64> {
        if self.k() == 0 {
            return Ok(f64::INFINITY);
        }
        Ok(sym_eig(&self.restrict(m))?.values[0])
    }
}

/// Data in span coordinates scaled to unit maximum norm.
struct Reduced {
    span: Span,
    scale: f64,
    u: Vec<Vec<f64>>,
    y: Vec<f64>,
    pos: Vec<usize>,
    neg: Vec<usize>,
}

impl Reduced {
    fn new(ds: &Dataset) -> Result<Self> {
        let span = Span::of(ds)?;
        let scale = ds.max_norm();
        let u = ds
            .x
            .iter()
            .map(|x| span.coords(x).into_iter().map(|v| if scale > 0.0 { v / scale } else { 0.0 }).collect())
            .collect();
        let y: Vec<f64> = ds.y.iter().map(|&l| l as f64).collect();
        let pos = (0..ds.n()).filter(|&i| ds.y[i] == 1).collect();
        let neg = (0..ds.n()).filter(|&i| ds.y[i] == -1).collect();
        Ok(Reduced { span, scale, u, y, pos, neg })
    }

    fn k(&self) -> usize {
        self.span.k()
    }

    fn moment(&self, lambda: &[f64]) -> SymMat {
        let mut m = SymMat::zeros(self.k());
        for ((u, y), l) in self.u.iter().zip(&self.y).zip(lambda) {
            if *l != 0.0 {
                m.add_outer(l * y, u);
            }
        }
        m.symmetrize();
        m
    }
}

fn require_both_labels(ds: &Dataset) -> Result<()> {
    ds.validate()?;
    if !ds.has_both_labels() {
        return reject("both labels must be present");
    }
    Ok(())
}

/// Outcome of one side of the alternative.
enum SideResult {
    /// `A` (original coordinates) and `c2` with strictly positive margins.
    Separator(SymMat, f64),
    /// `lambda` with `s M(lambda)` semidefinite within `EIG_TOL`.
    Witness(Vec<f64>),
    Unresolved,
}

/// `exp(-eta G)` normalised to unit trace.
fn gibbs(g: &SymMat, eta: f64) -> Result<SymMat> {
    let eig = sym_eig(g)?;
    let lo = eig.values[0];
    let mut v = eig.rebuild(|x| (-eta * (x - lo)).exp());
    let t = v.trace();
    v = v.scaled(1.0 / t);
    Ok(v)
}

fn class_softmax(scores: &[f64], groups: [&[usize]; 2], eta: f64) -> Vec<f64> {
    let mut out = vec![0.0; scores.len()];
    for g in groups {
        let hi = g.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &i in g {
            out[i] = (eta * (scores[i] - hi)).exp();
            z += out[i];
        }
        for &i in g {
            out[i] /= z;
        }
    }
    out
}

/// Solves `max_{lambda} min eig(s M(lambda))` against
/// `min_V max_lambda <V, s M(lambda)>` over unit-trace PSD `V`.
fn solve_side(ds: &Dataset, red: &Reduced, s: f64, iters: usize) -> Result<SideResult> {
    let n = ds.n();
    let k = red.k();
    let groups = [&red.pos[..], &red.neg[..]];
    let uniform = class_softmax(&vec![0.0; n], groups, 1.0);
    if k == 0 {
        return Ok(SideResult::Witness(uniform));
    }
    let eta = 0.5;
    let mut sum_v = SymMat::zeros(k);
    let mut sum_l = vec![0.0; n];
    let mut prev_v = SymMat::zeros(k);
    let mut prev_l = vec![0.0; n];
    let mut avg_v = SymMat::zeros(k);
    let mut avg_l = vec![0.0; n];
    for t in 1..=iters {
        let mut gv = sum_v.clone();
        gv.data.iter_mut().zip(&prev_v.data).for_each(|(a, b)| *a += b);
        let v = gibbs(&gv, eta)?;
        let scores: Vec<f64> = sum_l.iter().zip(&prev_l).map(|(a, b)| a + b).collect();
        let lam = class_softmax(&scores, groups, eta);

        let grad_v = red.moment(&lam).scaled(s);
        let q: Vec<f64> = red.u.iter().map(|u| v.quad_form(u)).collect();
        let grad_l: Vec<f64> = (0..n).map(|i| s * red.y[i] * q[i]).collect();
        sum_v.data.iter_mut().zip(&grad_v.data).for_each(|(a, b)| *a += b);
        sum_l.iter_mut().zip(&grad_l).for_each(|(a, b)| *a += b);
        prev_v = grad_v;
        prev_l = grad_l;
        avg_v.data.iter_mut().zip(&v.data).for_each(|(a, b)| *a += b);
        avg_l.iter_mut().zip(&lam).for_each(|(a, b)| *a += b);

        if t % 25 == 0 || t == iters {
            let mean_v = avg_v.scaled(1.0 / t as f64);
            let mean_l: Vec<f64> = avg_l.iter().map(|a| a / t as f64).collect();
            for cand in [&v, &mean_v] {
                if let Some((a, c2)) = separator_from(ds, red, cand, s) {
                    return Ok(SideResult::Separator(a, c2));
                }
            }
            for cand in [lam, mean_l] {
                let g = min_eig_scaled(ds, &cand, s)?;
                if g >= -EIG_TOL {
                    return Ok(SideResult::Witness(cand));
                }
            }
        }
    }
    Ok(SideResult::Unresolved)
}

fn min_eig_scaled(ds: &Dataset, lambda: &[f64], s: f64) -> Result<f64> {
    Ok(sym_eig(&moment_matrix(ds, lambda).scaled(s))?.values[0])
}

/// `A = -s Q V Q^T / scale^2` with the midpoint threshold, if it separates.
fn separator_from(ds: &Dataset, red: &Reduced, v: &SymMat, s: f64) -> Option<(SymMat, f64)> {
    let a = red.span.embed(v).scaled(-s / (red.scale * red.scale));
    let q: Vec<f64> = ds.x.iter().map(|x| a.quad_form(x)).collect();
    let min_pos = red.pos.iter().map(|&i| q[i]).fold(f64::INFINITY, f64::min);
    let max_neg = red.neg.iter().map(|&i| q[i]).fold(f64::NEG_INFINITY, f64::max);
    if min_pos > max_neg {
        let c2 = 0.5 * (min_pos + max_neg);
        if red.pos.iter().all(|&i| q[i] > c2) && red.neg.iter().all(|&i| q[i] < c2) {
            return Some((a, c2));
        }
    }
    None
}

/// Scales `(A, c2)` so that every margin is at least 1.
fn normalise_separator(ds: &Dataset, a: SymMat, c2: f64) -> Option<SeparationCertificate> {
    let mut cert = SeparationCertificate { a, c2, c1: 0.0 };
    for _ in 0..4 {
        let m = cert.margins(ds).into_iter().fold(f64::INFINITY, f64::min);
        if !(m > 0.0) {
            return None;
        }
        if m >= 1.0 {
            cert.c1 = m;
            return Some(cert);
        }
        let f = (1.0 + 1e-12) / m;
        cert.a = cert.a.scaled(f);
        cert.c2 *= f;
    }
    None
}

#[derive(Clone, Copy, Debug)]
pub struct ConditionOpts {
    /// Total iteration budget shared by the two sides.
    pub budget: usize,
}

impl Default for ConditionOpts {
    fn default() -> Self {
        ConditionOpts { budget: DEFAULT_BUDGET }
    }
}

pub fn check_quadratic_condition(ds: &Dataset) -> Result<QuadraticVerdict> {
    check_quadratic_condition_with(ds, ConditionOpts::default())
}

pub fn check_quadratic_condition_with(ds: &Dataset, opts: ConditionOpts) -> Result<QuadraticVerdict> {
    require_both_labels(ds)?;
    let red = Reduced::new(ds)?;
    let per_side = (opts.budget / 2).max(25);
    let mut seps = Vec::new();
    let mut unresolved = Vec::new();
    // s = +1 looks for M >= 0 (or an NSD separator); s = -1 the mirror image.
    for (s, def) in [(1.0, Definiteness::Psd), (-1.0, Definiteness::Nsd)] {
        match solve_side(ds, &red, s, per_side)? {
            SideResult::Witness(lambda) => {
                let cert = DualCertificate::build(ds, lambda, def)?;
                if cert.verify(ds) {
                    return Ok(QuadraticVerdict::No { certificate: cert });
                }
                unresolved.push(def);
            }
            SideResult::Separator(a, c2) => seps.push((a, c2)),
            SideResult::Unresolved => unresolved.push(def),
        }
    }
    if seps.len() == 2 {
        let mut a = seps[0].0.clone();
        a.data.iter_mut().zip(&seps[1].0.data).for_each(|(x, y)| *x += y);
        let c2 = seps[0].1 + seps[1].1;
        if let Some(cert) = normalise_separator(ds, a, c2) {
            if cert.verify(ds) {
                return Ok(QuadraticVerdict::Yes { certificate: cert });
            }
        }
        return Ok(QuadraticVerdict::Undecided { reason: "combined separator failed re-verification".into() });
    }
    Ok(QuadraticVerdict::Undecided {
        reason: format!("no certificate within budget for {:?}", unresolved),
    })
}

/// Projection onto `{lambda >= 0, class sums = 1, sum lambda_i y_i x_i = 0}`
/// by Dykstra's method between the product of simplices and the affine part.
pub(crate) struct ConstrainedSimplex {
    groups: Vec<Vec<usize>>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// `(C C^T)^+`.
    gram_pinv: SymMat,
}

impl ConstrainedSimplex {
    /// `eq_rows` are homogeneous equality constraints `row . lambda = 0`.
    pub(crate) fn new(n: usize, groups: Vec<Vec<usize>>, eq_rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut rows = eq_rows;
        let mut rhs = vec![0.0; rows.len()];
        for g in &groups {
            let mut r = vec![0.0; n];
            g.iter().for_each(|&i| r[i] = 1.0);
            rows.push(r);
            rhs.push(1.0);
        }
        let m = rows.len();
        let gram = SymMat::from_fn(m, |i, j| dot(&rows[i], &rows[j]));
        let eig = sym_eig(&gram)?;
        let top = eig.values.last().cloned().unwrap_or(0.0).abs();
        let gram_pinv = eig.rebuild(|v| if v.abs() > 1e-12 * top.max(1e-300) { 1.0 / v } else { 0.0 });
        Ok(ConstrainedSimplex { groups, rows, rhs, gram_pinv })
    }

    pub(crate) fn residual(&self, v: &[f64]) -> f64 {
        self.rows.iter().zip(&self.rhs).map(|(r, b)| (dot(r, v) - b).powi(2)).sum::<f64>().sqrt()
    }

    fn project_affine(&self, v: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self.rows.iter().zip(&self.rhs).map(|(row, b)| dot(row, v) - b).collect();
        let m = r.len();
        let mut out = v.to_vec();
        for i in 0..m {
            let coef: f64 = (0..m).map(|j| self.gram_pinv.get(i, j) * r[j]).sum();
            if coef != 0.0 {
                for (o, c) in out.iter_mut().zip(&self.rows[i]) {
                    *o -= coef * c;
                }
            }
        }
        out
    }

    fn project_simplices(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for g in &self.groups {
            let vals: Vec<f64> = g.iter().map(|&i| v[i]).collect();
            for (&i, p) in g.iter().zip(project_simplex(&vals)) {
                out[i] = p;
            }
        }
        out
    }

    /// Dykstra iterations followed by an exact affine polish when it stays
    /// nonnegative. The result always lies in the product of simplices.
    pub(crate) fn project(&self, v: &[f64], max_iter: usize, tol: f64) -> Vec<f64> {
        let n = v.len();
        let mut x = self.project_simplices(v);
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for _ in 0..max_iter {
            let xp: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
            let y = self.project_affine(&xp);
            p = xp.iter().zip(&y).map(|(a, b)| a - b).collect();
            let yq: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
            x = self.project_simplices(&yq);
            q = yq.iter().zip(&x).map(|(a, b)| a - b).collect();
            if self.residual(&x) <= tol {
                break;
            }
        }
        self.polish(x)
    }

    pub(crate) fn polish(&self, x: Vec<f64>) -> Vec<f64> {
        let mut z = self.project_affine(&x);
        for _ in 0..3 {
            if z.iter().all(|v| *v >= 0.0) {
                return z;
            }
            // Clip and retry; small negative entries come from rounding.
            let clipped: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            z = self.project_affine(&clipped);
        }
        if z.iter().all(|v| *v >= 0.0) && self.residual(&z) <= self.residual(&x) {
            z
        } else {
            x
        }
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (k, uk) in u.iter().enumerate() {
        css += uk;
        let t = (css - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

pub fn check_necessary_condition(ds: &Dataset) -> Result<NecessaryVerdict> {
    check_necessary_condition_with(ds, ConditionOpts::default())
}

pub fn check_necessary_condition_with(ds: &Dataset, opts: ConditionOpts) -> Result<NecessaryVerdict> {
    require_both_labels(ds)?;
    let quad = check_quadratic_condition_with(ds, ConditionOpts { budget: opts.budget / 2 })?;
    if let QuadraticVerdict::Yes { certificate } = quad {
        return Ok(NecessaryVerdict::Holds { certificate });
    }
    let start = match &quad {
        QuadraticVerdict::No { certificate } => Some(certificate.lambda.clone()),
        _ => None,
    };
    let red = Reduced::new(ds)?;
    let n = ds.n();
    let rows: Vec<Vec<f64>> = (0..ds.d())
        .map(|k| (0..n).map(|i| red.y[i] * ds.x[i][k] / red.scale.max(f64::MIN_POSITIVE)).collect())
        .collect();
    let set = ConstrainedSimplex::new(n, vec![red.pos.clone(), red.neg.clone()], rows)?;
    let steps = (opts.budget / 2 / 50).max(20);
    for (s, def) in [(1.0, Definiteness::Psd), (-1.0, Definiteness::Nsd)] {
        let init = start.clone().unwrap_or_else(|| class_softmax(&vec![0.0; n], [&red.pos, &red.neg], 1.0));
        if let Some(lambda) = ascend_constrained(ds, &red, &set, s, init, steps)? {
            let cert = DualCertificate::build(ds, lambda, def)?;
            if cert.verify_mean_constrained(ds) {
                return Ok(NecessaryVerdict::Fails { certificate: cert });
            }
        }
    }
    Ok(NecessaryVerdict::Undecided { reason: "no strictly definite mean-zero weighting found within budget".into() })
}

/// Projected supergradient ascent on `min eig(s M(lambda))` over the span.
fn ascend_constrained(
    ds: &Dataset,
    red: &Reduced,
    set: &ConstrainedSimplex,
    s: f64,
    init: Vec<f64>,
    steps: usize,
) -> Result<Option<Vec<f64>>> {
    if red.k() == 0 {
        return Ok(None);
    }
    let accept = |lam: &[f64]| -> Result<bool> {
        if norm(&weighted_mean(ds, lam)) > MEAN_TOL {
            return Ok(false);
        }
        Ok(red.span.restricted_min_eig(&moment_matrix(ds, lam).scaled(s))? > EIG_TOL)
    };
    let mut lam = set.project(&init, 2000, 1e-14);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for t in 1..=steps {
        let eig = sym_eig(&red.moment(&lam).scaled(s))?;
        let g = eig.values[0];
        if set.residual(&lam) <= 1e-12 && best.as_ref().map_or(true, |(b, _)| g > *b) {
            best = Some((g, lam.clone()));
        }
        if g > 0.0 && accept(&lam)? {
            return Ok(Some(lam));
        }
        let v = eig.vector(0);
        let sup: Vec<f64> = red.u.iter().zip(&red.y).map(|(u, y)| s * y * dot(v, u).powi(2)).collect();
        let step = 0.5 / (t as f64).sqrt();
        let moved: Vec<f64> = lam.iter().zip(&sup).map(|(l, g)| l + step * g).collect();
        lam = set.project(&moved, 500, 1e-14);
    }
    if let Some((_, l)) = best {
        if accept(&l)? {
            return Ok(Some(l));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Any `lambda` with semidefinite `M(lambda)`.
    Quadratic,
    /// `lambda` with `|| sum lambda_i y_i x_i ||` within the grid slack and `M`
    /// strictly definite on the data span.
    Necessary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleWitness {
    pub lambda: Vec<f64>,
    pub definiteness: Definiteness,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub definite_exists: bool,
    pub witness: Option<OracleWitness>,
    /// Best (largest) margin seen among admissible grid points.
    pub best_margin: f64,
    pub grid_points: usize,
}

/// All compositions of `r` into `parts` nonnegative integers.
fn compositions(r: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; parts];
    fn rec(r: usize, idx: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if idx + 1 == cur.len() {
            cur[idx] = r;
            out.push(cur.clone());
            return;
        }
        for v in 0..=r {
            cur[idx] = v;
            rec(r - v, idx + 1, cur, out);
        }
    }
    rec(r, 0, &mut cur, &mut out);
    out
}

/// Enumerates per-class simplex grids with `resolution` steps.
pub fn brute_force_lambda_oracle(ds: &Dataset, resolution: usize, mode: OracleMode) -> Result<OracleResult> {
    require_both_labels(ds)?;
    if ds.n() > 8 {
        return reject("oracle supports at most 8 samples");
    }
    if resolution == 0 || resolution > 40 {
        return reject("resolution must be in 1..=40");
    }
    let n = ds.n();
    let pos: Vec<usize> = (0..n).filter(|&i| ds.y[i] == 1).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| ds.y[i] == -1).collect();
    let pos_grid = compositions(resolution, pos.len());
    let neg_grid = compositions(resolution, neg.len());
    let span = Span::of(ds)?;
    let slack = n as f64 * ds.max_norm() / resolution as f64;
    let r = resolution as f64;

    let evaluate = |cp: &Vec<usize>, cn: &Vec<usize>| -> Option<(f64, Definiteness, Vec<f64>)> {
        let mut lambda = vec![0.0; n];
        pos.iter().zip(cp).for_each(|(&i, &c)| lambda[i] = c as f64 / r);
        neg.iter().zip(cn).for_each(|(&i, &c)| lambda[i] = c as f64 / r);
        let m = moment_matrix(ds, &lambda);
        match mode {
            OracleMode::Quadratic => {
                let eig = sym_eig(&m).ok()?;
                let lo = eig.values[0];
                let hi = *eig.values.last().unwrap();
                if lo >= -hi { Some((lo, Definiteness::Psd, lambda)) } else { Some((-hi, Definiteness::Nsd, lambda)) }
            }
            OracleMode::Necessary => {
                if norm(&weighted_mean(ds, &lambda)) > slack {
                    return None;
                }
                let p = span.restricted_min_eig(&m).ok()?;
                let q = span.restricted_min_eig(&m.scaled(-1.0)).ok()?;
                if p >= q { Some((p, Definiteness::Psd, lambda)) } else { Some((q, Definiteness::Nsd, lambda)) }
            }
        }
    };

    let best = pos_grid
        .par_iter()
        .filter_map(|cp| {
            neg_grid.iter().filter_map(|cn| evaluate(cp, cn)).max_by(|a, b| a.0.total_cmp(&b.0))
        })
        .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal)));

    let grid_points = pos_grid.len() * neg_grid.len();
    let admissible = |margin: f64| match mode {
        OracleMode::Quadratic => margin >= -EIG_TOL,
        OracleMode::Necessary => margin > EIG_TOL,
    };
    Ok(match best {
        Some((margin, definiteness, lambda)) if admissible(margin) => OracleResult {
            definite_exists: true,
            best_margin: margin,
            witness: Some(OracleWitness { lambda, definiteness, margin }),
            grid_points,
        },
        Some((margin, ..)) => OracleResult { definite_exists: false, witness: None, best_margin: margin, grid_points },
        None => OracleResult { definite_exists: false, witness: None, best_margin: f64::NEG_INFINITY, grid_points },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum LinearSeparation {
    /// `y_i w . x_i > 0` for every sample.
    Separable { w: Vec<f64>, margin: f64 },
    /// Convex weights with `sum_i lambda_i y_i x_i` numerically zero, so no
    /// homogeneous linear classifier is strictly correct on every sample.
    NotSeparable { lambda: Vec<f64>, residual: f64 },
    Unknown,
}

/// Homogeneous linear separability. Append a constant coordinate to the
/// points to test affine separability.
pub fn linear_separation(x: &[Vec<f64>], y: &[i8]) -> Result<LinearSeparation> {
    let n = x.len();
    if n == 0 || y.len() != n {
        return reject("need matching nonempty points and labels");
    }
    let d = x[0].len();
    let scale = x.iter().map(|p| norm(p)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(LinearSeparation::NotSeparable { lambda: vec![1.0 / n as f64; n], residual: 0.0 });
    }
    let z: Vec<Vec<f64>> = x.iter().zip(y).map(|(p, &l)| p.iter().map(|v| l as f64 * v / scale).collect()).collect();
    let point = |lam: &[f64]| -> Vec<f64> {
        let mut v = vec![0.0; d];
        for (zi, l) in z.iter().zip(lam) {
            for (vk, zk) in v.iter_mut().zip(zi) {
                *vk += l * zk;
            }
        }
        v
    };
    let separates = |w: &[f64]| -> Option<f64> {
        let m = z.iter().map(|zi| dot(zi, w)).fold(f64::INFINITY, f64::min);
        if m > 0.0 { Some(m) } else { None }
    };
    // Minimum-norm point of the hull of {y_i x_i} by accelerated projected gradient.
    let gram = SymMat::from_fn(n, |i, j| dot(&z[i], &z[j]));
    let lip = sym_eig(&gram)?.values.last().cloned().unwrap_or(1.0).max(1e-12);
    let mut lam = vec![1.0 / n as f64; n];
    let mut prev = lam.clone();
    for t in 1..=5000 {
        let beta = (t as f64 - 1.0) / (t as f64 + 2.0);
        let yv: Vec<f64> = lam.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
        let p = point(&yv);
        let grad: Vec<f64> = z.iter().map(|zi| dot(zi, &p)).collect();
        prev = lam;
        lam = project_simplex(&yv.iter().zip(&grad).map(|(a, g)| a - g / lip).collect::<Vec<_>>());
        if t % 50 == 0 {
            let w = point(&lam);
            if let Some(m) = separates(&w) {
                let w: Vec<f64> = w.iter().map(|v| v / scale).collect();
                return Ok(LinearSeparation::Separable { margin: m * scale * scale, w });
            }
            if norm(&w) < 1e-6 {
                break;
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..d).map(|k| z.iter().map(|zi| zi[k]).collect()).collect();
    let set = ConstrainedSimplex::new(n, vec![(0..n).collect()], rows)?;
    let lam = set.project(&lam, 20_000, 1e-13);
    let residual = norm(&point(&lam)) * scale;
    if residual <= 1e-9 * scale {
        return Ok(LinearSeparation::NotSeparable { lambda: lam, residual });
    }
    if let Some(m) = separates(&point(&lam)) {
        let w: Vec<f64> = point(&lam).iter().map(|v| v / scale).collect();
        return Ok(LinearSeparation::Separable { margin: m * scale * scale, w });
    }
    Ok(LinearSeparation::Unknown)
}

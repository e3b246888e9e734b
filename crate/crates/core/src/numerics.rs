//! Dense symmetric linear algebra, finite differences and seeded randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{reject, Error, Result};

pub type Rng = ChaCha8Rng;

/// Generator keyed by `(seed, stream)`. Distinct streams never overlap, so
/// parallel workers can each take their own.
pub fn rng(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

/// Uniform draw on the closed ball of radius `r` in `R^n`.
pub fn uniform_ball(rng: &mut Rng, n: usize, r: f64) -> Vec<f64> {
    use rand::Rng as _;
    let mut v = normal_vec(rng, n, 1.0);
    let nv = norm(&v);
    let u: f64 = rng.random::<f64>();
    let s = r * u.powf(1.0 / n as f64) / nv.max(f64::MIN_POSITIVE);
    v.iter_mut().for_each(|x| *x *= s);
    v
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = *v;
        }
        m
    }

    /// Checked constructor: square, finite, symmetric within 1e-12 relative.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::Dim { expected: n, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        let m = SymMat { n, data };
        m.validate()?;
        Ok(m)
    }

    /// Builds from a closure and symmetrizes.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m.symmetrize();
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.n * self.n {
            return Err(Error::Dim { expected: self.n * self.n, got: self.data.len() });
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let scale = 1.0 + max_abs(&self.data);
        for i in 0..self.n {
            for j in 0..i {
                if (self.get(i, j) - self.get(j, i)).abs() > 1e-12 * scale {
                    return reject(format!("matrix not symmetric at ({i},{j})"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    /// Adds `c * x x^T`.
    pub fn add_outer(&mut self, c: f64, x: &[f64]) {
        let n = self.n;
        for i in 0..n {
            let ci = c * x[i];
            for j in 0..n {
                self.data[i * n + j] += ci * x[j];
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMat { n: self.n, data: self.data.iter().map(|x| c * x).collect() }
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            s += x[i] * dot(&self.data[i * n..(i + 1) * n], x);
        }
        s
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &SymMat) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }
}

/// Eigen-decomposition with ascending eigenvalues. `vectors` is column-major:
/// column `k` (entries `vectors[k*n..(k+1)*n]`) belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.values.len();
        &self.vectors[k * n..(k + 1) * n]
    }

    /// Rebuilds `Q diag(f(lambda)) Q^T`.
    pub fn rebuild(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let n = self.values.len();
        let mut m = SymMat::zeros(n);
        for k in 0..n {
            let c = f(self.values[k]);
            if c != 0.0 {
                m.add_outer(c, self.vector(k));
            }
        }
        m.symmetrize();
        m
    }
}

const MAX_DIM: usize = 200;

/// Cyclic Jacobi eigen-decomposition.
pub fn sym_eig(m: &SymMat) -> Result<Eigen> {
    m.validate()?;
    let n = m.n;
    if n > MAX_DIM {
        return reject(format!("dimension {n} exceeds {MAX_DIM}"));
    }
    let mut a = m.data.clone();
    a.iter_mut().enumerate().for_each(|(k, v)| {
        let (i, j) = (k / n, k % n);
        if i != j {
            *v = 0.5 * (m.data[i * n + j] + m.data[j * n + i]);
        }
    });
    // q is row-major here; transposed on output.
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    let scale = m.frobenius();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[p * n + r];
                if apr.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let arr = a[r * n + r];
                let theta = (arr - app) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akr = a[k * n + r];
                    a[k * n + p] = c * akp - s * akr;
                    a[k * n + r] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let ark = a[r * n + k];
                    a[p * n + k] = c * apk - s * ark;
                    a[r * n + k] = s * apk + c * ark;
                }
                for k in 0..n {
                    let qkp = q[k * n + p];
                    let qkr = q[k * n + r];
                    q[k * n + p] = c * qkp - s * qkr;
                    q[k * n + r] = s * qkp + c * qkr;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = idx.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &i) in idx.iter().enumerate() {
        for k in 0..n {
            vectors[col * n + k] = q[k * n + i];
        }
    }
    Ok(Eigen { values, vectors })
}

pub fn min_eig(m: &SymMat) -> Result<f64> {
    let e = sym_eig(m)?;
    Ok(e.values.first().copied().unwrap_or(0.0))
}

pub fn max_eig(m: &SymMat) -> Result<f64> {
    let e = sym_eig(m)?;
    Ok(e.values.last().copied().unwrap_or(0.0))
}

pub const FD_STEP: f64 = 1e-5;

/// Central-difference gradient.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return reject("finite-difference step must be positive");
    }
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("f on stencil of coordinate {k}")));
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

//! Dataset type, file format, and the samplers used by experiments and builders.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{reject, Error, Result};
use crate::numerics::{dot, normal, norm, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl Provenance {
    pub fn manual(name: &str) -> Self {
        Provenance { generator: name.to_string(), seed: None, params: serde_json::Value::Null }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<i8>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<i8>, provenance: Provenance) -> Result<Self> {
        let ds = Dataset { x, y, provenance };
        ds.validate()?;
        Ok(ds)
    }

    /// Convenience for literal datasets in tests and examples.
    pub fn from_points(name: &str, pos: &[Vec<f64>], neg: &[Vec<f64>]) -> Result<Self> {
        let mut x = pos.to_vec();
        x.extend_from_slice(neg);
        let y = std::iter::repeat(1).take(pos.len()).chain(std::iter::repeat(-1).take(neg.len())).collect();
        Dataset::new(x, y, Provenance::manual(name))
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return reject("dataset must contain at least one sample");
        }
        if self.x.len() != self.y.len() {
            return Err(Error::Dim { expected: self.x.len(), got: self.y.len() });
        }
        let d = self.x[0].len();
        if d == 0 {
            return reject("points must have at least one coordinate");
        }
        for p in &self.x {
            if p.len() != d {
                return Err(Error::Dim { expected: d, got: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dataset coordinate".into()));
            }
        }
        if self.y.iter().any(|&l| l != 1 && l != -1) {
            return reject("labels must be -1 or +1");
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn d(&self) -> usize {
        self.x[0].len()
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i] as f64
    }

    pub fn n_pos(&self) -> usize {
        self.y.iter().filter(|&&l| l == 1).count()
    }

    pub fn n_neg(&self) -> usize {
        self.n() - self.n_pos()
    }

    pub fn has_both_labels(&self) -> bool {
        self.n_pos() > 0 && self.n_neg() > 0
    }

    pub fn max_norm(&self) -> f64 {
        self.x.iter().map(|p| norm(p)).fold(0.0, f64::max)
    }

    pub fn last_coordinate_is_one(&self) -> bool {
        self.x.iter().all(|p| *p.last().unwrap() == 1.0)
    }

    pub fn flipped(&self) -> Dataset {
        let mut ds = self.clone();
        ds.y.iter_mut().for_each(|l| *l = -*l);
        ds
    }

    /// Each `(x, y)` has a partner `(-x, y)` with matching multiplicity.
    pub fn is_antisymmetric(&self) -> bool {
        let mut used = vec![false; self.n()];
        for i in 0..self.n() {
            if used[i] {
                continue;
            }
            if self.x[i].iter().all(|v| *v == 0.0) {
                used[i] = true;
                continue;
            }
            let partner = (0..self.n()).find(|&j| {
                !used[j] && j != i && self.y[j] == self.y[i] && self.x[j].iter().zip(&self.x[i]).all(|(a, b)| *a == -*b)
            });
            match partner {
                Some(j) => {
                    used[i] = true;
                    used[j] = true;
                }
                None => return false,
            }
        }
        true
    }

    /// Writes `x1..xd,y` as CSV plus a `.json` sidecar holding provenance.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.d()).map(|k| format!("x{k}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (p, l) in self.x.iter().zip(&self.y) {
            let mut rec: Vec<String> = p.iter().map(|v| format_f64(*v)).collect();
            rec.push(l.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        std::fs::write(sidecar(path), serde_json::to_string_pretty(&self.provenance)? + "\n")?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let d = headers.len().saturating_sub(1);
        if d == 0 || headers.get(d) != Some("y") {
            return reject("dataset CSV must have header x1,...,xd,y");
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut p = Vec::with_capacity(d);
            for k in 0..d {
                p.push(rec[k].trim().parse::<f64>().map_err(|e| Error::Rejected(format!("bad number: {e}")))?);
            }
            x.push(p);
            y.push(rec[d].trim().parse::<i8>().map_err(|e| Error::Rejected(format!("bad label: {e}")))?);
        }
        let side = sidecar(path);
        let provenance = if side.exists() {
            serde_json::from_str(&std::fs::read_to_string(side)?)?
        } else {
            Provenance::manual("file")
        };
        Dataset::new(x, y, provenance)
    }
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub d: usize,
    /// Orthonormal basis, one column per entry.
    pub basis: Vec<Vec<f64>>,
    pub plus_idx: Vec<usize>,
    pub minus_idx: Vec<usize>,
    /// Enforce `r > max(r_plus, r_minus)`.
    pub require_distinct_ranks: bool,
}

impl SubspaceSpec {
    pub fn identity(d: usize, plus_idx: Vec<usize>, minus_idx: Vec<usize>) -> Self {
        let basis = (0..d).map(|k| (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).collect();
        SubspaceSpec { d, basis, plus_idx, minus_idx, require_distinct_ranks: true }
    }

    pub fn ranks(&self) -> (usize, usize, usize) {
        let mut all: Vec<usize> = self.plus_idx.iter().chain(&self.minus_idx).cloned().collect();
        all.sort_unstable();
        all.dedup();
        (all.len(), self.plus_idx.len(), self.minus_idx.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.basis.len() != self.d || self.basis.iter().any(|c| c.len() != self.d) {
            return reject("basis must be d columns of length d");
        }
        for i in 0..self.d {
            for j in 0..self.d {
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot(&self.basis[i], &self.basis[j]) - want).abs() > 1e-10 {
                    return reject("basis is not orthonormal");
                }
            }
        }
        if self.plus_idx.is_empty() || self.minus_idx.is_empty() {
            return reject("both classes need at least one basis column");
        }
        if self.plus_idx.iter().chain(&self.minus_idx).any(|&k| k >= self.d) {
            return reject("basis index out of range");
        }
        let (r, rp, rm) = self.ranks();
        if self.require_distinct_ranks && r <= rp.max(rm) {
            return reject(format!("need r > max(r+, r-), got r={r}, r+={rp}, r-={rm}"));
        }
        Ok(())
    }
}

fn uniform_two_sided(rng: &mut Rng) -> f64 {
    let m: f64 = rng.random_range(1.0..2.0);
    if rng.random::<bool>() { m } else { -m }
}

/// Samples alternate between the classes, starting with a positive.
pub fn gen_subspace(spec: &SubspaceSpec, n: usize, rng: &mut Rng, seed: Option<u64>) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return reject("n must be positive");
    }
    let n_pos = n.div_ceil(2);
    let n_neg = n / 2;
    let pos = sample_class(spec, &spec.plus_idx, n_pos, rng)?;
    let neg = sample_class(spec, &spec.minus_idx, n_neg, rng)?;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let (mut pi, mut ni) = (pos.into_iter(), neg.into_iter());
    for i in 0..n {
        if i % 2 == 0 {
            x.push(pi.next().unwrap());
            y.push(1);
        } else {
            x.push(ni.next().unwrap());
            y.push(-1);
        }
    }
    let params = serde_json::json!({ "d": spec.d, "plus_idx": spec.plus_idx, "minus_idx": spec.minus_idx, "n": n });
    Dataset::new(x, y, Provenance { generator: "subspace".into(), seed, params })
}

fn sample_class(spec: &SubspaceSpec, idx: &[usize], count: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    for _attempt in 0..100 {
        let coeffs: Vec<Vec<f64>> = (0..count).map(|_| idx.iter().map(|_| uniform_two_sided(rng)).collect()).collect();
        if !all_subsets_full_rank(&coeffs, idx.len()) {
            continue;
        }
        return Ok(coeffs
            .iter()
            .map(|c| {
                let mut p = vec![0.0; spec.d];
                for (ck, &col) in c.iter().zip(idx) {
                    for (pi, bi) in p.iter_mut().zip(&spec.basis[col]) {
                        *pi += ck * bi;
                    }
                }
                p
            })
            .collect());
    }
    reject("could not draw full-rank coefficients in 100 attempts")
}

/// Every `r` rows among `rows` (each of length `r`) are linearly independent.
pub fn all_subsets_full_rank(rows: &[Vec<f64>], r: usize) -> bool {
    if rows.len() < r {
        return rows.is_empty() || rank(rows) == rows.len();
    }
    let mut pick = Vec::with_capacity(r);
    fn rec(rows: &[Vec<f64>], r: usize, start: usize, pick: &mut Vec<usize>) -> bool {
        if pick.len() == r {
            let sub: Vec<Vec<f64>> = pick.iter().map(|&i| rows[i].clone()).collect();
            return rank(&sub) == r;
        }
        for i in start..rows.len() {
            pick.push(i);
            let ok = rec(rows, r, i + 1, pick);
            pick.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    rec(rows, r, 0, &mut pick)
}

/// Numerical rank by Gaussian elimination with partial pivoting.
pub fn rank(rows: &[Vec<f64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let (m, n) = (a.len(), a[0].len());
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    let mut rk = 0;
    for col in 0..n {
        if rk == m {
            break;
        }
        let piv = (rk..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[piv][col].abs() <= 1e-9 * scale {
            continue;
        }
        a.swap(rk, piv);
        for i in (rk + 1)..m {
            let f = a[i][col] / a[rk][col];
            for k in col..n {
                a[i][k] -= f * a[rk][k];
            }
        }
        rk += 1;
    }
    rk
}

#[derive(Clone, Debug)]
pub struct SeparableSample {
    pub dataset: Dataset,
    pub witness: Vec<f64>,
}

/// Linearly separable data with a unit witness `w` such that `y w.x >= margin`.
pub fn gen_separable(d: usize, n: usize, margin: f64, rng: &mut Rng, seed: Option<u64>) -> Result<SeparableSample> {
    if !(margin > 0.0) {
        return reject("margin must be positive");
    }
    if d == 0 || n == 0 {
        return reject("d and n must be positive");
    }
    let mut w: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let nw = norm(&w);
    w.iter_mut().for_each(|v| *v /= nw);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        loop {
            let z: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
            let proj = dot(&z, &w);
            let t = margin + normal(rng).abs();
            let p: Vec<f64> = z.iter().zip(&w).map(|(zi, wi)| zi - proj * wi + label as f64 * t * wi).collect();
            if label as f64 * dot(&p, &w) >= margin {
                x.push(p);
                y.push(label);
                break;
            }
        }
    }
    let params = serde_json::json!({ "d": d, "n": n, "margin": margin });
    let dataset = Dataset::new(x, y, Provenance { generator: "separable".into(), seed, params })?;
    Ok(SeparableSample { dataset, witness: w })
}

pub const NAMED: &[&str] = &[
    "xor4",
    "cross",
    "point_interval",
    "collinear",
    "line_nonsep",
    "quadloss_subspace",
    "quadloss_linsep",
    "interval_sep",
];

/// Samples a named distribution. A `_balanced` suffix returns the exact-count
/// dataset in which every support point (or region) receives its share.
pub fn gen_named(name: &str, n: usize, rng: &mut Rng, seed: Option<u64>) -> Result<Dataset> {
    if n == 0 {
        return reject("n must be positive");
    }
    let (base, balanced) = match name.strip_suffix("_balanced") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let dist = Named::from_name(base)?;
    let parts = dist.parts();
    let total: u32 = parts.iter().map(|p| p.weight).sum();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    if balanced {
        if n % total as usize != 0 {
            return reject(format!("'{name}' needs n divisible by {total}"));
        }
        let unit = n / total as usize;
        for part in &parts {
            for _ in 0..unit * part.weight as usize {
                x.push(part.sample(rng));
                y.push(part.label);
            }
        }
    } else {
        for _ in 0..n {
            let mut k = rng.random_range(0..total);
            let part = parts
                .iter()
                .find(|p| {
                    if k < p.weight {
                        true
                    } else {
                        k -= p.weight;
                        false
                    }
                })
                .unwrap();
            x.push(part.sample(rng));
            y.push(part.label);
        }
    }
    let params = serde_json::json!({ "n": n });
    Dataset::new(x, y, Provenance { generator: name.to_string(), seed, params })
}

/// Population mean of the input, where it is a closed-form constant.
pub fn population_mean(name: &str) -> Option<Vec<f64>> {
    match name.strip_suffix("_balanced").unwrap_or(name) {
        "point_interval" => Some(vec![0.5 * 1.25 + 0.5 * 0.5]),
        "xor4" | "collinear" => Some(vec![0.0, 0.0]),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug)]
enum Named {
    Xor4,
    Cross,
    PointInterval,
    Collinear,
    LineNonsep,
    QuadlossSubspace,
    QuadlossLinsep,
    IntervalSep,
}

/// One mixture component: a label, a relative weight, and a coordinate law.
struct Part {
    label: i8,
    weight: u32,
    coords: Vec<Coord>,
}

#[derive(Clone, Copy)]
enum Coord {
    Fixed(f64),
    Uniform(f64, f64),
}

impl Part {
    fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.coords
            .iter()
            .map(|c| match *c {
                Coord::Fixed(v) => v,
                Coord::Uniform(a, b) => rng.random_range(a..b),
            })
            .collect()
    }
}

fn part(label: i8, weight: u32, coords: &[Coord]) -> Part {
    Part { label, weight, coords: coords.to_vec() }
}

impl Named {
    fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "xor4" => Named::Xor4,
            "cross" => Named::Cross,
            "point_interval" => Named::PointInterval,
            "collinear" => Named::Collinear,
            "line_nonsep" => Named::LineNonsep,
            "quadloss_subspace" => Named::QuadlossSubspace,
            "quadloss_linsep" => Named::QuadlossLinsep,
            "interval_sep" => Named::IntervalSep,
            other => return reject(format!("unknown distribution '{other}'")),
        })
    }

    fn parts(self) -> Vec<Part> {
        use Coord::*;
        match self {
            Named::Xor4 => vec![
                part(1, 1, &[Fixed(1.0), Fixed(0.0)]),
                part(1, 1, &[Fixed(-1.0), Fixed(0.0)]),
                part(-1, 1, &[Fixed(0.0), Fixed(1.0)]),
                part(-1, 1, &[Fixed(0.0), Fixed(-1.0)]),
            ],
            // Trailing constant coordinate included.
            Named::Cross => vec![
                part(1, 1, &[Uniform(1.0, 2.0), Fixed(0.0), Fixed(1.0)]),
                part(1, 1, &[Uniform(-2.0, -1.0), Fixed(0.0), Fixed(1.0)]),
                part(-1, 1, &[Fixed(0.0), Uniform(1.0, 2.0), Fixed(1.0)]),
                part(-1, 1, &[Fixed(0.0), Uniform(-2.0, -1.0), Fixed(1.0)]),
            ],
            Named::PointInterval => vec![part(1, 1, &[Fixed(1.25)]), part(-1, 1, &[Uniform(0.0, 1.0)])],
            Named::Collinear => vec![
                part(1, 1, &[Fixed(1.0), Fixed(0.0)]),
                part(1, 1, &[Fixed(-1.0), Fixed(0.0)]),
                part(-1, 2, &[Fixed(0.0), Fixed(0.0)]),
            ],
            Named::LineNonsep => vec![
                part(1, 1, &[Fixed(2.0)]),
                part(1, 1, &[Fixed(-1.0)]),
                part(-1, 2, &[Fixed(0.5)]),
            ],
            Named::QuadlossSubspace => vec![
                part(1, 1, &[Fixed(0.5), Fixed(0.0)]),
                part(1, 1, &[Fixed(1.0), Fixed(0.0)]),
                part(-1, 1, &[Fixed(0.0), Fixed(0.5)]),
                part(-1, 1, &[Fixed(0.0), Fixed(1.0)]),
            ],
            Named::QuadlossLinsep => vec![
                part(1, 1, &[Fixed(1.0 + 1.0 / 6.0)]),
                part(1, 1, &[Fixed(1.0 + 2.0 / 6.0)]),
                part(-1, 1, &[Fixed(0.0)]),
                part(-1, 1, &[Fixed(1.0)]),
            ],
            Named::IntervalSep => vec![part(1, 1, &[Uniform(2.0, 3.0)]), part(-1, 1, &[Uniform(-1.0, -0.5)])],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronRule {
    /// `M >= 2 max(ceil(n / rank_gap), r_plus, r_minus)` for subspace data.
    SubspaceRank,
    /// `M > r`.
    AboveRank,
    /// `M >= 1`.
    AtLeastOne,
}

/// Smallest width satisfying a neuron-count rule.
pub fn min_neurons(rule: NeuronRule, n: usize, r: usize, r_plus: usize, r_minus: usize) -> Result<usize> {
    match rule {
        NeuronRule::SubspaceRank => {
            let rmax = r_plus.max(r_minus);
            if r <= rmax {
                return reject(format!("rank gap r - max(r+, r-) must be positive, got r={r}, max={rmax}"));
            }
            let dr = r - rmax;
            Ok(2 * n.div_ceil(dr).max(rmax))
        }
        NeuronRule::AboveRank => Ok(r + 1),
        NeuronRule::AtLeastOne => Ok(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;
    use proptest::prelude::*;

    #[test]
    fn subspace_points_live_on_their_axes() {
        let spec = SubspaceSpec::identity(3, vec![0], vec![1]);
        let ds = gen_subspace(&spec, 10, &mut rng(1, 0), Some(1)).unwrap();
        for (p, &l) in ds.x.iter().zip(&ds.y) {
            if l == 1 {
                assert!(p[1] == 0.0 && p[2] == 0.0 && p[0].abs() >= 1.0);
            } else {
                assert!(p[0] == 0.0 && p[2] == 0.0 && p[1].abs() >= 1.0);
            }
        }
        assert!(gen_subspace(&spec, 0, &mut rng(1, 0), None).is_err());
    }

    #[test]
    fn subspace_rejects_rank_violation() {
        let spec = SubspaceSpec::identity(3, vec![0, 1], vec![0, 1]);
        assert!(gen_subspace(&spec, 4, &mut rng(1, 0), None).is_err());
    }

    #[test]
    fn two_positives_full_rank() {
        let spec = SubspaceSpec::identity(4, vec![0, 1], vec![2]);
        let ds = gen_subspace(&spec, 4, &mut rng(3, 0), None).unwrap();
        let pos: Vec<Vec<f64>> = ds.x.iter().zip(&ds.y).filter(|(_, &l)| l == 1).map(|(p, _)| p.clone()).collect();
        assert_eq!(pos.len(), 2);
        assert_eq!(rank(&pos), 2);
    }

    #[test]
    fn separable_examples() {
        let s = gen_separable(1, 20, 1.0, &mut rng(2, 0), None).unwrap();
        let w = s.witness[0];
        for (p, &l) in s.dataset.x.iter().zip(&s.dataset.y) {
            assert!(l as f64 * w * p[0] >= 1.0);
        }
        let s = gen_separable(5, 50, 0.5, &mut rng(2, 1), None).unwrap();
        for (p, &l) in s.dataset.x.iter().zip(&s.dataset.y) {
            assert!(l as f64 * dot(&s.witness, p) >= 0.5);
        }
        assert!(gen_separable(2, 3, 0.0, &mut rng(0, 0), None).is_err());
    }

    #[test]
    fn named_examples() {
        let ds = gen_named("xor4_balanced", 8, &mut rng(0, 0), None).unwrap();
        for pt in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
            assert_eq!(ds.x.iter().filter(|p| p[..] == pt[..]).count(), 2);
        }
        assert!(ds.is_antisymmetric());
        let ds = gen_named("collinear", 40, &mut rng(0, 1), None).unwrap();
        for (p, &l) in ds.x.iter().zip(&ds.y) {
            if l == -1 {
                assert_eq!(p, &vec![0.0, 0.0]);
            }
        }
        assert_eq!(population_mean("point_interval").unwrap(), vec![7.0 / 8.0]);
        assert!(gen_named("nope", 4, &mut rng(0, 0), None).is_err());
        assert!(gen_named("xor4_balanced", 6, &mut rng(0, 0), None).is_err());
        let c = gen_named("cross", 30, &mut rng(0, 2), None).unwrap();
        assert!(c.last_coordinate_is_one());
    }

    #[test]
    fn neuron_rules() {
        assert_eq!(min_neurons(NeuronRule::SubspaceRank, 20, 4, 2, 2).unwrap(), 20);
        assert_eq!(min_neurons(NeuronRule::AboveRank, 20, 4, 2, 2).unwrap(), 5);
        assert_eq!(min_neurons(NeuronRule::AtLeastOne, 20, 4, 2, 2).unwrap(), 1);
        assert!(min_neurons(NeuronRule::SubspaceRank, 20, 2, 2, 1).is_err());
        assert_eq!(min_neurons(NeuronRule::SubspaceRank, 7, 3, 1, 1).unwrap(), 8);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = gen_named("cross", 12, &mut rng(4, 0), Some(4)).unwrap();
        ds.write_csv(&path).unwrap();
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back, ds);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x1,x2,x3,y\n"));
    }

    proptest! {
        #[test]
        fn subspace_orthogonality(seed in 0u64..500, n in 1usize..30) {
            let spec = SubspaceSpec::identity(6, vec![0, 1], vec![2, 3]);
            let ds = gen_subspace(&spec, n, &mut rng(seed, 0), Some(seed)).unwrap();
            for (p, &l) in ds.x.iter().zip(&ds.y) {
                let outside: &[usize] = if l == 1 { &[2, 3, 4, 5] } else { &[0, 1, 4, 5] };
                for &k in outside {
                    prop_assert!(p[k].abs() <= 1e-10);
                }
            }
        }

        #[test]
        fn separable_witness_holds(seed in 0u64..500, d in 1usize..6, n in 1usize..40) {
            let s = gen_separable(d, n, 0.5, &mut rng(seed, 0), None).unwrap();
            for (p, &l) in s.dataset.x.iter().zip(&s.dataset.y) {
                prop_assert!(l as f64 * dot(&s.witness, p) >= 0.5);
            }
        }

        #[test]
        fn balanced_xor_is_antisymmetric(k in 1usize..10) {
            let ds = gen_named("xor4_balanced", 4 * k, &mut rng(0, 0), None).unwrap();
            prop_assert!(ds.is_antisymmetric());
        }
    }
}

//! Dense real symmetric matrices: GOE sampling, eigendecomposition,
//! operator norms, signed sums and correlated pairs.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{domain, Error, Result};
use crate::rng::RngStream;

/// Dense symmetric matrix, row-major, both triangles stored and kept equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    d: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(d: usize) -> Self {
        Self { d, data: vec![0.0; d * d] }
    }

    pub fn scaled_identity(d: usize, c: f64) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.data[i * d + i] = c;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = Self::zeros(d);
        for (i, v) in values.iter().enumerate() {
            m.data[i * d + i] = *v;
        }
        m
    }

    /// Builds from the row-major upper triangle (d(d+1)/2 entries).
    pub fn from_upper(d: usize, upper: &[f64]) -> Result<Self> {
        let want = d * (d + 1) / 2;
        if upper.len() != want {
            return Err(Error::DimensionMismatch { expected: want, got: upper.len() });
        }
        if let Some(x) = upper.iter().find(|x| !x.is_finite()) {
            return Err(Error::NotFinite(format!("matrix entry {x}")));
        }
        let mut m = Self::zeros(d);
        let mut it = upper.iter();
        for i in 0..d {
            for j in i..d {
                let v = *it.next().expect("length checked");
                m.data[i * d + j] = v;
                m.data[j * d + i] = v;
            }
        }
        Ok(m)
    }

    /// Builds from a full row-major array; the upper triangle is authoritative.
    pub fn from_row_major(d: usize, full: &[f64]) -> Result<Self> {
        if full.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, got: full.len() });
        }
        let upper: Vec<f64> = (0..d).flat_map(|i| (i..d).map(move |j| full[i * d + j])).collect();
        Self::from_upper(d, &upper)
    }

    pub fn upper(&self) -> Vec<f64> {
        let d = self.d;
        (0..d).flat_map(|i| (i..d).map(move |j| self.data[i * d + j])).collect()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.data[i * self.d + i]).sum()
    }

    /// Tr(M²) = squared Frobenius norm.
    pub fn trace_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.trace_sq().sqrt()
    }

    /// Tr(M N) for symmetric M, N.
    pub fn trace_product(&self, other: &SymMatrix) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, other: &SymMatrix, c: f64) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { d: self.d, data: self.data.iter().map(|x| c * x).collect() }
    }

    fn check_dim(&self, other: &SymMatrix) -> Result<()> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: other.d });
        }
        Ok(())
    }

    /// GOE(d): off-diagonal entries N(0, 1/d), diagonal N(0, 2/d), drawn in
    /// row-major upper-triangle order.
    pub fn goe<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let off = (1.0 / d as f64).sqrt();
        let diag = (2.0 / d as f64).sqrt();
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in i..d {
                let z: f64 = rng.sample(StandardNormal);
                let v = if i == j { diag * z } else { off * z };
                m.data[i * d + j] = v;
                m.data[j * d + i] = v;
            }
        }
        m
    }
}

pub fn sample_goe(d: usize, stream: RngStream) -> Result<SymMatrix> {
    if d == 0 {
        return domain("dimension must be at least 1");
    }
    Ok(SymMatrix::goe(d, &mut stream.rng()))
}

/// Eigenvalues ascending, with eigenvectors as the columns of a row-major
/// `d × d` array when requested.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Option<Vec<f64>>,
}

/// QL sweeps allowed per eigenvalue before giving up.
pub const QL_MAX_SWEEPS: usize = 60;

/// Householder reduction to tridiagonal form followed by implicit QL.
pub fn eigen(m: &SymMatrix, want_vectors: bool) -> Result<Eigen> {
    let n = m.d;
    if n == 0 {
        return Ok(Eigen { values: Vec::new(), vectors: want_vectors.then(Vec::new) });
    }
    if m.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotFinite("matrix entries".into()));
    }
    let mut v = m.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e, want_vectors);
    tql2(n, &mut v, &mut d, &mut e, want_vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = want_vectors.then(|| {
        let mut out = vec![0.0; n * n];
        for (c, &src) in order.iter().enumerate() {
            for r in 0..n {
                out[r * n + c] = v[r * n + src];
            }
        }
        out
    });
    Ok(Eigen { values, vectors })
}

// index loops kept close to the reference Householder formulation
#[allow(clippy::needless_range_loop)]
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64], accumulate: bool) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for x in e.iter_mut().take(i) {
                *x = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        // The tridiagonal diagonal sits on the diagonal of v.
        for j in 0..n {
            d[j] = v[at(j, j)];
        }
        e[0] = 0.0;
        return;
    }
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64], accumulate: bool) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    let mut total_sweeps = 0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                total_sweeps += 1;
                if sweeps > QL_MAX_SWEEPS {
                    return Err(Error::Convergence { iterations: total_sweeps });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in d.iter_mut().skip(l + 2) {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if accumulate {
                        for k in 0..n {
                            let hk = v[at(k, i + 1)];
                            v[at(k, i + 1)] = s * v[at(k, i)] + c * hk;
                            v[at(k, i)] = c * v[at(k, i)] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Eigenvalues in ascending order.
pub fn eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    Ok(eigen(m, false)?.values)
}

/// ‖M‖_op = max |λ_i|.
pub fn op_norm(m: &SymMatrix) -> Result<f64> {
    let ev = eigenvalues(m)?;
    Ok(match (ev.first(), ev.last()) {
        (Some(lo), Some(hi)) => lo.abs().max(hi.abs()),
        _ => 0.0,
    })
}

/// Power-iteration estimate of ‖M‖_op, a fast path for large matrices.
/// Always a lower bound up to rounding; converges at the rate of the
/// spectral gap in |λ|.
pub fn op_norm_power<R: Rng + ?Sized>(m: &SymMatrix, rng: &mut R, max_iter: usize, rel_tol: f64) -> f64 {
    let n = m.d;
    if n == 0 {
        return 0.0;
    }
    let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nx = norm(&x);
    x.iter_mut().for_each(|a| *a /= nx);
    let mut est = 0.0;
    let mut y = vec![0.0; n];
    for _ in 0..max_iter {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = m.data[i * n..(i + 1) * n].iter().zip(&x).map(|(a, b)| a * b).sum();
        }
        let ny = norm(&y);
        if ny == 0.0 {
            return 0.0;
        }
        let done = (ny - est).abs() <= rel_tol * ny;
        est = ny;
        for (a, b) in x.iter_mut().zip(&y) {
            *a = b / ny;
        }
        if done {
            break;
        }
    }
    est
}

/// ε ∈ {±1}ⁿ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signing(Vec<i8>);

impl Signing {
    pub fn new(eps: Vec<i8>) -> Result<Self> {
        if eps.iter().any(|&e| e != 1 && e != -1) {
            return domain("signing entries must be +1 or -1");
        }
        Ok(Self(eps))
    }

    pub fn all_plus(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|e| -e).collect())
    }

    /// Normalized overlap (1/n) Σ ε_i ε'_i.
    pub fn overlap(&self, other: &Signing) -> f64 {
        let s: i64 = self.0.iter().zip(&other.0).map(|(a, b)| (*a as i64) * (*b as i64)).sum();
        s as f64 / self.0.len() as f64
    }
}

impl std::fmt::Display for Signing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.0 {
            f.write_str(if *e > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

/// Σ ε_i W_i.
pub fn signed_sum(ws: &[SymMatrix], eps: &Signing) -> Result<SymMatrix> {
    if ws.len() != eps.len() {
        return Err(Error::DimensionMismatch { expected: ws.len(), got: eps.len() });
    }
    let Some(first) = ws.first() else {
        return domain("signed sum of an empty family");
    };
    let mut s = SymMatrix::zeros(first.d);
    for (w, e) in ws.iter().zip(eps.as_slice()) {
        s.add_scaled(w, *e as f64)?;
    }
    Ok(s)
}

/// n^{-1/2} ‖Σ ε_i W_i‖_op.
pub fn margin(ws: &[SymMatrix], eps: &Signing) -> Result<f64> {
    Ok(op_norm(&signed_sum(ws, eps)?)? / (ws.len() as f64).sqrt())
}

/// (W, qW + √(1 − q²) Z) with W, Z independent GOE(d), W drawn first.
pub fn correlated_pair<R: Rng + ?Sized>(q: f64, d: usize, rng: &mut R) -> Result<(SymMatrix, SymMatrix)> {
    if !(q.abs() < 1.0) {
        return domain(format!("correlation must satisfy |q| < 1, got {q}"));
    }
    if d == 0 {
        return domain("dimension must be at least 1");
    }
    let w = SymMatrix::goe(d, rng);
    let mut y = SymMatrix::goe(d, rng).scaled((1.0 - q * q).sqrt());
    y.add_scaled(&w, q)?;
    Ok((w, y))
}

/// Writes matrices as: dimension (u64 LE), then the row-major upper triangle
/// as f64 LE; records are concatenated.
pub fn write_fixture<W: Write>(mut out: W, ms: &[SymMatrix]) -> Result<()> {
    for m in ms {
        out.write_all(&(m.d as u64).to_le_bytes())?;
        for x in m.upper() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_fixture<R: Read>(mut input: R) -> Result<Vec<SymMatrix>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut out = Vec::new();
    let mut pos = 0;
    let take8 = |pos: &mut usize| -> Result<[u8; 8]> {
        let chunk = bytes.get(*pos..*pos + 8).ok_or_else(|| Error::Fixture(format!("truncated at byte {}", *pos)))?;
        *pos += 8;
        Ok(chunk.try_into().expect("eight bytes"))
    };
    while pos < bytes.len() {
        let d = u64::from_le_bytes(take8(&mut pos)?);
        if d == 0 || d > 1 << 16 {
            return Err(Error::Fixture(format!("implausible dimension {d}")));
        }
        let d = d as usize;
        let count = d * (d + 1) / 2;
        let mut upper = Vec::with_capacity(count);
        for _ in 0..count {
            upper.push(f64::from_le_bytes(take8(&mut pos)?));
        }
        out.push(SymMatrix::from_upper(d, &upper).map_err(|e| Error::Fixture(e.to_string()))?);
    }
    Ok(out)
}


#[cfg(test)]
mod invariants {
    use super::*;
    use proptest::prelude::*;

    fn sym(d: usize) -> impl Strategy<Value = SymMatrix> {
        prop::collection::vec(-3.0f64..3.0, d * (d + 1) / 2).prop_map(move |u| SymMatrix::from_upper(d, &u).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn spectrum_matches_traces(m in (1usize..9).prop_flat_map(sym)) {
            let l = eigenvalues(&m).unwrap();
            let scale = 1.0 + m.frobenius();
            prop_assert!(l.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!((l.iter().sum::<f64>() - m.trace()).abs() <= 1e-10 * scale);
            prop_assert!((l.iter().map(|x| x * x).sum::<f64>() - m.trace_sq()).abs() <= 1e-10 * scale * scale);
            let norm = op_norm(&m).unwrap();
            prop_assert!((norm - l[0].abs().max(l[l.len() - 1].abs())).abs() <= 1e-12 * scale);
            prop_assert!(norm <= m.frobenius() * (1.0 + 1e-12));
        }

        #[test]
        fn margin_invariant_under_global_flip(seed in 0u64..500, n in 1usize..7, d in 1usize..5) {
            let mut rng = RngStream::new(seed, 0).rng();
            let ws: Vec<SymMatrix> = (0..n).map(|_| SymMatrix::goe(d, &mut rng)).collect();
            let eps = Signing::random(n, &mut rng);
            prop_assert_eq!(margin(&ws, &eps).unwrap(), margin(&ws, &eps.negated()).unwrap());
            prop_assert_eq!(eps.overlap(&eps), 1.0);
            prop_assert_eq!(eps.overlap(&eps.negated()), -1.0);
        }
    }
}

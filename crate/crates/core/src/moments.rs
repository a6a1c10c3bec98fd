//! First- and second-moment experiments on the number of good signings:
//! rare-event probabilities, exact enumeration, the overlap function G_d,
//! binomial Laplace sums and a variance-bound check.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::coulomb::{haar_orthogonal, run_chains, ChainConfig, StateLog};
use crate::error::{domain, Error, Result};
use crate::matrix::{correlated_pair, op_norm, Signing, SymMatrix};
use crate::phase::{classify, rate_opnorm, Classification, Margin};
use crate::rng::RngStream;
use crate::stats::{batch_means, jackknife, mean, McEstimate};

/// Monte Carlo draws per independent chunk. Each chunk owns a child stream,
/// so results do not depend on how chunks are scheduled.
pub const MC_CHUNK: usize = 2000;
/// Largest n accepted by exact enumeration (2ⁿ⁻¹ signings).
pub const ENUMERATION_LIMIT: usize = 26;
/// Steps between recomputations of the running signed sum.
pub const RESYNC_EVERY: u64 = 4096;

fn chunk_sizes(n_samples: usize) -> Vec<usize> {
    let full = n_samples / MC_CHUNK;
    let mut out = vec![MC_CHUNK; full];
    if !n_samples.is_multiple_of(MC_CHUNK) {
        out.push(n_samples % MC_CHUNK);
    }
    out
}

/// True when the large-deviation prediction puts the event below what
/// `n_samples` draws can see: rate_opnorm(κ) d² < log(10 / n_samples).
pub fn rare_event_warning(kappa: f64, d: usize, n_samples: usize) -> Result<bool> {
    let rate = rate_opnorm(kappa)?;
    Ok(rate * ((d * d) as f64) < (10.0 / n_samples as f64).ln())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub kappa: f64,
    pub d: usize,
    pub hits: u64,
    pub estimate: McEstimate,
    /// One-sided 95% upper bound, reported instead of an interval when
    /// there are no hits.
    pub upper_bound_95: Option<f64>,
    pub rare_event_warning: bool,
}

impl ProbEstimate {
    pub fn is_zero_hit(&self) -> bool {
        self.hits == 0
    }
}

/// Fraction of GOE(d) draws with ‖W‖_op ≤ κ.
pub fn estimate_prob_opnorm(kappa: f64, d: usize, n_samples: usize, stream: RngStream) -> Result<ProbEstimate> {
    if !(kappa > 0.0) || d == 0 || n_samples == 0 {
        return domain("estimate_prob_opnorm needs kappa > 0, d >= 1, n_samples >= 1");
    }
    let chunks = chunk_sizes(n_samples);
    let hits: u64 = chunks
        .par_iter()
        .enumerate()
        .map(|(k, &size)| {
            let mut rng = stream.child(k as u64).rng();
            let mut h = 0u64;
            for _ in 0..size {
                if op_norm(&SymMatrix::goe(d, &mut rng))? <= kappa {
                    h += 1;
                }
            }
            Ok(h)
        })
        .collect::<Result<Vec<u64>>>()?
        .iter()
        .sum();
    let n = n_samples as f64;
    let p = hits as f64 / n;
    let estimate = McEstimate::new(p, (p * (1.0 - p) / n).sqrt(), n_samples as u64).with_seed(stream);
    Ok(ProbEstimate {
        kappa,
        d,
        hits,
        estimate,
        upper_bound_95: (hits == 0).then(|| 1.0 - 0.05f64.powf(1.0 / n)),
        rare_event_warning: rare_event_warning(kappa, d, n_samples)?,
    })
}

/// Exact enumeration result for one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceResult {
    pub n: usize,
    pub d: usize,
    pub kappa_grid: Vec<f64>,
    /// Z_κ = #{ε : n^{-1/2}‖Σ ε_i W_i‖_op ≤ κ} for each κ of the grid.
    pub z_counts: Vec<u64>,
    /// min over ε of ‖Σ ε_i W_i‖_op.
    pub disc: f64,
    /// disc / √n: the smallest κ with Z_κ > 0.
    pub min_margin: f64,
    pub argmin: Signing,
}

/// Flip positions of the reflected Gray code on `bits` bits, in order.
fn gray_flips(bits: u32) -> impl Iterator<Item = usize> {
    (1u64..(1u64 << bits)).map(|k| k.trailing_zeros() as usize)
}

/// All signings with ε₁ = +1 in Gray-code order.
pub fn canonical_signings_gray(n: usize) -> Vec<Signing> {
    let mut eps = vec![1i8; n];
    let mut out = vec![Signing::new(eps.clone()).expect("±1")];
    if n > 1 {
        for j in gray_flips((n - 1) as u32) {
            eps[j + 1] = -eps[j + 1];
            out.push(Signing::new(eps.clone()).expect("±1"));
        }
    }
    out
}

struct BlockResult {
    hist: Vec<u64>,
    best: f64,
    argmin: Vec<i8>,
}

/// Enumerates the signings whose top `high` free bits are fixed by `block`,
/// walking the low bits by Gray code. `hist[g]` counts signings whose norm
/// first drops below the threshold of grid index g; the last slot counts
/// those above every threshold.
fn enumerate_block(ws: &[SymMatrix], thresholds: &[f64], high: u32, block: u64) -> Result<BlockResult> {
    let n = ws.len();
    let free = (n - 1) as u32;
    let low = free - high;
    let mut eps = vec![1i8; n];
    for b in 0..high {
        if block >> b & 1 == 1 {
            eps[1 + low as usize + b as usize] = -1;
        }
    }
    let rebuild = |eps: &[i8]| -> Result<SymMatrix> {
        let mut s = SymMatrix::zeros(ws[0].dim());
        for (w, e) in ws.iter().zip(eps) {
            s.add_scaled(w, *e as f64)?;
        }
        Ok(s)
    };
    let mut s = rebuild(&eps)?;
    let mut hist = vec![0u64; thresholds.len() + 1];
    let mut best = f64::INFINITY;
    let mut argmin = eps.clone();
    let mut visit = |s: &SymMatrix, eps: &[i8]| -> Result<()> {
        let norm = op_norm(s)?;
        let g = thresholds.partition_point(|t| *t < norm);
        hist[g] += 1;
        if norm < best {
            best = norm;
            argmin.copy_from_slice(eps);
        }
        Ok(())
    };
    visit(&s, &eps)?;
    for (step, j) in gray_flips(low).enumerate() {
        let i = j + 1;
        s.add_scaled(&ws[i], -2.0 * eps[i] as f64)?;
        eps[i] = -eps[i];
        if (step as u64 + 1).is_multiple_of(RESYNC_EVERY) {
            s = rebuild(&eps)?;
        }
        visit(&s, &eps)?;
    }
    Ok(BlockResult { hist, best, argmin })
}

/// Exact Z_κ over an ascending κ grid by Gray-code enumeration of the
/// signings with ε₁ = +1; counts are doubled for the global flip.
pub fn exact_instance(ws: &[SymMatrix], kappa_grid: &[f64]) -> Result<InstanceResult> {
    let n = ws.len();
    if n == 0 {
        return domain("empty instance");
    }
    if n > ENUMERATION_LIMIT {
        return Err(Error::Budget { n, limit: ENUMERATION_LIMIT });
    }
    let d = ws[0].dim();
    if let Some(w) = ws.iter().find(|w| w.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: w.dim() });
    }
    if kappa_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("kappa grid must be strictly ascending");
    }
    let sqrt_n = (n as f64).sqrt();
    let thresholds: Vec<f64> = kappa_grid.iter().map(|k| k * sqrt_n).collect();
    let high = ((n - 1) as u32).min(6);
    let blocks = (0..1u64 << high)
        .into_par_iter()
        .map(|b| enumerate_block(ws, &thresholds, high, b))
        .collect::<Result<Vec<_>>>()?;

    let mut hist = vec![0u64; thresholds.len() + 1];
    let mut best = f64::INFINITY;
    let mut argmin = Vec::new();
    for b in blocks {
        for (h, x) in hist.iter_mut().zip(&b.hist) {
            *h += x;
        }
        if b.best < best {
            best = b.best;
            argmin = b.argmin;
        }
    }
    let mut z_counts = Vec::with_capacity(kappa_grid.len());
    let mut acc = 0u64;
    for h in &hist[..kappa_grid.len()] {
        acc += h;
        z_counts.push(2 * acc);
    }
    Ok(InstanceResult {
        n,
        d,
        kappa_grid: kappa_grid.to_vec(),
        z_counts,
        disc: best,
        min_margin: best / sqrt_n,
        argmin: Signing::new(argmin)?,
    })
}

/// n independent GOE(d) matrices from one stream.
pub fn draw_instance(n: usize, d: usize, stream: RngStream) -> Vec<SymMatrix> {
    let mut rng = stream.rng();
    (0..n).map(|_| SymMatrix::goe(d, &mut rng)).collect()
}

fn check_budget(n: usize) -> Result<()> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    if n > ENUMERATION_LIMIT {
        return Err(Error::Budget { n, limit: ENUMERATION_LIMIT });
    }
    Ok(())
}

/// Exact Z_κ for `n_instances` instances; instance k uses `stream.child(k)`.
pub fn exact_counts(kappa: f64, n: usize, d: usize, n_instances: usize, stream: RngStream) -> Result<Vec<u64>> {
    check_budget(n)?;
    (0..n_instances)
        .into_par_iter()
        .map(|k| {
            let ws = draw_instance(n, d, stream.child(k as u64));
            Ok(exact_instance(&ws, &[kappa])?.z_counts[0])
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstMomentReport {
    pub kappa: f64,
    pub n: usize,
    pub d: usize,
    /// Mean exact Z_κ over instances.
    pub exact: McEstimate,
    /// 2ⁿ · P̂[‖W‖_op ≤ κ].
    pub monte_carlo: McEstimate,
    pub z_score: f64,
    pub probability: ProbEstimate,
}

pub fn first_moment_check(
    kappa: f64,
    n: usize,
    d: usize,
    n_instances: usize,
    n_mc: usize,
    stream: RngStream,
) -> Result<FirstMomentReport> {
    if n_instances < 2 {
        return domain("need at least two instances");
    }
    let zs: Vec<f64> = exact_counts(kappa, n, d, n_instances, stream.child(0))?.into_iter().map(|z| z as f64).collect();
    let exact = McEstimate::from_samples(&zs).with_seed(stream.child(0));
    let probability = estimate_prob_opnorm(kappa, d, n_mc, stream.child(1))?;
    let monte_carlo = probability.estimate.scaled(2f64.powi(n as i32));
    Ok(FirstMomentReport { kappa, n, d, z_score: exact.z_score(&monte_carlo), exact, monte_carlo, probability })
}

/// Hit counts for correlated pairs at overlap q: (draws, hits of either
/// marginal summed over both, joint hits).
fn pair_hits<R: Rng + ?Sized>(q: f64, kappa: f64, d: usize, draws: usize, rng: &mut R) -> Result<(u64, u64, u64)> {
    let (mut single, mut joint) = (0u64, 0u64);
    for _ in 0..draws {
        let (a, b) = if q.abs() == 1.0 {
            // Y = ±W: the two events coincide
            let a = op_norm(&SymMatrix::goe(d, rng))? <= kappa;
            (a, a)
        } else {
            let (w, y) = correlated_pair(q, d, rng)?;
            (op_norm(&w)? <= kappa, op_norm(&y)? <= kappa)
        };
        single += a as u64 + b as u64;
        joint += (a && b) as u64;
    }
    Ok((draws as u64, single, joint))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GdEstimate {
    pub q: f64,
    pub kappa: f64,
    pub n: usize,
    pub d: usize,
    /// (1/n)[log p̂_joint − 2 log p̂_single].
    pub estimate: McEstimate,
    pub p_joint: f64,
    pub p_single: f64,
    pub joint_hits: u64,
    pub rare_event_warning: bool,
}

/// G_d(q) from correlated pairs. Both marginals of every pair feed p̂_single;
/// the error bar is the delta method on the per-draw influence function.
pub fn estimate_gd(q: f64, kappa: f64, n: usize, d: usize, n_samples: usize, stream: RngStream) -> Result<GdEstimate> {
    if !(q.abs() <= 1.0) {
        return domain(format!("overlap must lie in [-1, 1], got {q}"));
    }
    if !(kappa > 0.0) || n == 0 || d == 0 || n_samples < 2 {
        return domain("estimate_gd needs kappa > 0, n, d >= 1 and at least two samples");
    }
    let parts = chunk_sizes(n_samples)
        .par_iter()
        .enumerate()
        .map(|(k, &size)| pair_hits(q, kappa, d, size, &mut stream.child(k as u64).rng()))
        .collect::<Result<Vec<_>>>()?;
    let (mut draws, mut single, mut joint) = (0u64, 0u64, 0u64);
    for (a, b, c) in parts {
        draws += a;
        single += b;
        joint += c;
    }
    if joint == 0 {
        return Err(Error::ZeroHit(format!(
            "no joint hits in {draws} correlated pairs (q = {q}, kappa = {kappa}, d = {d})"
        )));
    }
    let nd = draws as f64;
    let p_joint = joint as f64 / nd;
    let p_single = single as f64 / (2.0 * nd);
    // per-draw influence u = AB/p_J − (A + B)/p_S; draws fall into three
    // classes: no hit, exactly one hit, both hits
    let n_both = joint as f64;
    let n_one = (single - 2 * joint) as f64;
    let u_both = 1.0 / p_joint - 2.0 / p_single;
    let u_one = -1.0 / p_single;
    let mu = (n_both * u_both + n_one * u_one) / nd;
    let var_u =
        (n_both * (u_both - mu).powi(2) + n_one * (u_one - mu).powi(2) + (nd - n_both - n_one) * mu * mu) / (nd - 1.0);
    let nn = n as f64;
    let value = (p_joint.ln() - 2.0 * p_single.ln()) / nn;
    let stderr = (var_u / nd).sqrt() / nn;
    Ok(GdEstimate {
        q,
        kappa,
        n,
        d,
        estimate: McEstimate::new(value, stderr, draws).with_seed(stream),
        p_joint,
        p_single,
        joint_hits: joint,
        rare_event_warning: rare_event_warning(kappa, d, n_samples)?,
    })
}

/// E[Z²]/E[Z]² over exact instances, with jackknife error bars.
pub fn second_moment_ratio_bruteforce(
    kappa: f64,
    n: usize,
    d: usize,
    n_instances: usize,
    stream: RngStream,
) -> Result<McEstimate> {
    if n_instances < 2 {
        return domain("need at least two instances");
    }
    let zs = exact_counts(kappa, n, d, n_instances, stream)?;
    if zs.iter().all(|z| *z == 0) {
        return Err(Error::ZeroHit(format!("Z = 0 on all {n_instances} instances")));
    }
    let rows: Vec<Vec<f64>> = zs.iter().map(|&z| vec![z as f64, (z as f64).powi(2)]).collect();
    Ok(jackknife(&rows, |m| m[1] / (m[0] * m[0])).with_seed(stream))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapReconstruction {
    pub kappa: f64,
    pub n: usize,
    pub d: usize,
    /// 2⁻ⁿ Σ_l C(n,l) p̂_J(q_l) / p̂_S², i.e. 2⁻ⁿ Σ_l C(n,l) exp(n Ĝ_d(q_l)).
    pub ratio: McEstimate,
    pub overlaps: Vec<f64>,
    /// Ĝ_d(q_l) for each overlap (NaN where no joint hit was seen).
    pub gd: Vec<f64>,
    pub p_single: f64,
}

/// Second-moment ratio rebuilt from per-overlap joint probabilities, with
/// overlaps q_l = 1 − 2l/n. Chunk b of every overlap forms one jackknife unit.
pub fn overlap_reconstruction(
    kappa: f64,
    n: usize,
    d: usize,
    samples_per_overlap: usize,
    stream: RngStream,
) -> Result<OverlapReconstruction> {
    check_budget(n)?;
    if samples_per_overlap < 2 * MC_CHUNK {
        return domain(format!("need at least {} samples per overlap", 2 * MC_CHUNK));
    }
    let sizes = chunk_sizes(samples_per_overlap);
    let overlaps: Vec<f64> = (0..=n).map(|l| 1.0 - 2.0 * l as f64 / n as f64).collect();
    // counts[l][b] = (draws, single, joint)
    let counts = overlaps
        .par_iter()
        .enumerate()
        .map(|(l, &q)| {
            sizes
                .iter()
                .enumerate()
                .map(|(b, &size)| pair_hits(q, kappa, d, size, &mut stream.child(l as u64).child(b as u64).rng()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = log_binomial_pmf(n).iter().map(|lp| lp.exp()).collect();
    // rows: [p_J(q_0) .. p_J(q_n), p_S] per chunk
    let rows: Vec<Vec<f64>> = (0..sizes.len())
        .map(|b| {
            let mut row: Vec<f64> = counts.iter().map(|c| c[b].2 as f64 / c[b].0 as f64).collect();
            let draws: u64 = counts.iter().map(|c| c[b].0).sum();
            let single: u64 = counts.iter().map(|c| c[b].1).sum();
            row.push(single as f64 / (2.0 * draws as f64));
            row
        })
        .collect();
    let ratio = jackknife(&rows, |m| {
        let ps = m[n + 1];
        weights.iter().zip(m).map(|(w, pj)| w * pj).sum::<f64>() / (ps * ps)
    })
    .with_seed(stream);
    let totals: Vec<(u64, u64, u64)> =
        counts.iter().map(|c| c.iter().fold((0, 0, 0), |a, x| (a.0 + x.0, a.1 + x.1, a.2 + x.2))).collect();
    let all_draws: u64 = totals.iter().map(|t| t.0).sum();
    let all_single: u64 = totals.iter().map(|t| t.1).sum();
    let p_single = all_single as f64 / (2.0 * all_draws as f64);
    let gd = totals
        .iter()
        .map(|t| if t.2 == 0 { f64::NAN } else { ((t.2 as f64 / t.0 as f64).ln() - 2.0 * p_single.ln()) / n as f64 })
        .collect();
    Ok(OverlapReconstruction { kappa, n, d, ratio, overlaps, gd, p_single })
}

/// Low part of ln 2 beyond f64 precision.
const LN_2_LO: f64 = 2.319_046_813_846_299_6e-17;

/// Compensated running sums of ln((n−l)/(l+1)): (hi, lo) with
/// log C(n, l) ≈ hi + lo to a few ulps.
fn log_binomial_parts(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n + 1);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    out.push((0.0, 0.0));
    for l in 0..n {
        let term = ((n - l) as f64 / (l + 1) as f64).ln();
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        out.push((sum, comp));
    }
    // exact symmetry C(n, l) = C(n, n − l)
    for l in 0..=n / 2 {
        out[n - l] = out[l];
    }
    out
}

/// log C(n, l) for l = 0..=n by the multiplicative recurrence with
/// Neumaier-compensated summation.
pub fn log_binomials(n: usize) -> Vec<f64> {
    log_binomial_parts(n).into_iter().map(|(h, c)| h + c).collect()
}

/// log(C(n, l) 2⁻ⁿ). The n ln 2 offset is applied in double-double so the
/// cancellation near the mode loses nothing.
pub fn log_binomial_pmf(n: usize) -> Vec<f64> {
    let nn = n as f64;
    let p = nn * LN_2;
    let e = nn.mul_add(LN_2, -p);
    log_binomial_parts(n).into_iter().map(|(h, c)| (h - p) + (c - e - nn * LN_2_LO)).collect()
}

/// log of 2⁻ⁿ Σ_l C(n,l) exp(n F(q_l)) with q_l = 1 − 2l/n.
pub fn log_laplace_sum<F: Fn(f64) -> f64>(f: F, n: usize) -> Result<f64> {
    if n == 0 {
        return domain("laplace sum needs n >= 1");
    }
    let nn = n as f64;
    let terms = log_binomial_pmf(n)
        .into_iter()
        .enumerate()
        .map(|(l, lp)| {
            let q = 1.0 - 2.0 * l as f64 / nn;
            let v = f(q);
            if v.is_nan() {
                return Err(Error::NotFinite(format!("F({q}) is NaN")));
            }
            Ok(lp + nn * v)
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::INFINITY {
        return Err(Error::NotFinite("F is +inf on the grid".into()));
    }
    if m == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln())
}

/// 2⁻ⁿ Σ_l C(n,l) exp(n F(q_l)).
pub fn laplace_sum<F: Fn(f64) -> f64>(f: F, n: usize) -> Result<f64> {
    Ok(log_laplace_sum(f, n)?.exp())
}

/// Non-commuting letter of a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Letter {
    X,
    Y,
}

/// Non-commutative polynomial Σ a_w w(X, Y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcPolynomial {
    pub name: String,
    pub terms: Vec<(f64, Vec<Letter>)>,
}

impl NcPolynomial {
    pub fn monomial(name: &str, word: Vec<Letter>) -> Self {
        Self { name: name.to_string(), terms: vec![(1.0, word)] }
    }

    /// 2(1 + q)(Σ_w deg(w) κ^{deg(w)−1} |a_w|)².
    pub fn variance_bound(&self, kappa: f64, q: f64) -> f64 {
        let s: f64 = self
            .terms
            .iter()
            .map(|(a, w)| {
                let p = w.len() as i32;
                p as f64 * kappa.powi(p - 1) * a.abs()
            })
            .sum();
        2.0 * (1.0 + q) * s * s
    }

    pub fn trace(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        let d = x.nrows();
        self.terms
            .iter()
            .map(|(a, w)| {
                let mut m = DMatrix::<f64>::identity(d, d);
                for l in w {
                    m *= match l {
                        Letter::X => x,
                        Letter::Y => y,
                    };
                }
                a * m.trace()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceBoundRow {
    pub polynomial: String,
    pub variance: McEstimate,
    pub bound: f64,
    /// bound − variance.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceBoundReport {
    pub kappa: f64,
    pub d: usize,
    pub q: f64,
    pub rows: Vec<VarianceBoundRow>,
}

impl VarianceBoundReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// The default polynomial set X, X², XY.
pub fn default_polynomials() -> Vec<NcPolynomial> {
    use Letter::{X, Y};
    vec![
        NcPolynomial::monomial("X", vec![X]),
        NcPolynomial::monomial("X^2", vec![X, X]),
        NcPolynomial::monomial("XY", vec![X, Y]),
    ]
}

/// Var[Tr P(W, Y)] for independent norm-constrained W, Y (q = 0), built as
/// W = diag(λ), Y = O diag(λ') Oᵀ from paired chain states and Haar O.
pub fn variance_bound_check(
    kappa: f64,
    d: usize,
    config: &ChainConfig,
    polys: &[NcPolynomial],
) -> Result<VarianceBoundReport> {
    let q = 0.0;
    let (states, _) = run_chains(kappa, d, config, |_| StateLog::default())?;
    let chains = states.len();
    if chains < 2 {
        return domain("variance check pairs chains and needs at least two");
    }
    // per chain: one series of Tr P values per polynomial
    let series: Vec<Vec<Vec<f64>>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let other = &states[(c + 1) % chains].0;
            let mut rng = RngStream::new(config.seed, 2).child(c as u64).rng();
            let mut out = vec![Vec::new(); polys.len()];
            for (a, b) in states[c].0.iter().zip(other) {
                let x = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(a));
                let o = haar_orthogonal(d, &mut rng);
                let y = &o * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(b)) * o.transpose();
                for (k, p) in polys.iter().enumerate() {
                    out[k].push(p.trace(&x, &y));
                }
            }
            out
        })
        .collect();
    let rows = polys
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mut units = Vec::new();
            for chain in &series {
                let s = &chain[k];
                let sq: Vec<f64> = s.iter().map(|v| v * v).collect();
                units.extend(
                    batch_means(s, crate::coulomb::BATCHES_PER_CHAIN)
                        .into_iter()
                        .zip(batch_means(&sq, crate::coulomb::BATCHES_PER_CHAIN))
                        .map(|(a, b)| vec![a, b]),
                );
            }
            let variance = jackknife(&units, |m| m[1] - m[0] * m[0]).with_seed(RngStream::new(config.seed, 2));
            let bound = p.variance_bound(kappa, q);
            VarianceBoundRow {
                polynomial: p.name.clone(),
                variance,
                bound,
                margin: bound - variance.mean,
                pass: variance.mean <= bound,
            }
        })
        .collect();
    Ok(VarianceBoundReport { kappa, d, q, rows })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseEmpiricsRow {
    pub d: usize,
    pub n: usize,
    pub instances: usize,
    pub sat_fraction: f64,
    pub min_margins: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseEmpiricsReport {
    pub kappa: f64,
    pub tau: f64,
    /// Asymptotic classification of (κ, τ); absent for κ > 2.
    pub classification: Option<Classification>,
    pub rows: Vec<PhaseEmpiricsRow>,
    pub caveat: String,
}

/// Fraction of instances with disc ≤ κ√n at n = round(τd²), per d.
pub fn phase_empirics(
    kappa: f64,
    tau: f64,
    d_list: &[usize],
    n_instances: usize,
    stream: RngStream,
) -> Result<PhaseEmpiricsReport> {
    if !(kappa > 0.0) || !(tau > 0.0) {
        return domain("phase_empirics needs kappa > 0 and tau > 0");
    }
    let mut rows = Vec::new();
    for (k, &d) in d_list.iter().enumerate() {
        let n = ((tau * (d * d) as f64).round() as usize).max(1);
        check_budget(n)?;
        let margins = (0..n_instances)
            .into_par_iter()
            .map(|i| {
                let ws = draw_instance(n, d, stream.child(k as u64).child(i as u64));
                Ok(exact_instance(&ws, &[kappa])?.min_margin)
            })
            .collect::<Result<Vec<f64>>>()?;
        let sat = margins.iter().filter(|m| **m <= kappa).count();
        rows.push(PhaseEmpiricsRow {
            d,
            n,
            instances: n_instances,
            sat_fraction: sat as f64 / n_instances.max(1) as f64,
            min_margins: margins,
        });
    }
    let classification = if kappa <= 2.0 { Some(classify(Margin::new(kappa)?, tau)?) } else { None };
    Ok(PhaseEmpiricsReport {
        kappa,
        tau,
        classification,
        rows,
        caveat: "finite-size frequencies; no tolerance is claimed for d <= 5".into(),
    })
}

/// Mean of a slice of counts, for reports.
pub fn mean_count(zs: &[u64]) -> f64 {
    mean(&zs.iter().map(|z| *z as f64).collect::<Vec<_>>())
}


#[cfg(test)]
mod invariants {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn counts_even_monotone_and_consistent(seed in 0u64..1000, n in 1usize..9, d in 1usize..5) {
            let ws = draw_instance(n, d, RngStream::new(seed, 0));
            let grid = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
            let r = exact_instance(&ws, &grid).unwrap();
            let total = 1u64 << n;
            for (k, &z) in grid.iter().zip(&r.z_counts) {
                prop_assert!(z % 2 == 0 && z <= total);
                // Z > 0 exactly when the best signing fits inside the margin
                prop_assert_eq!(z > 0, r.disc <= k * (n as f64).sqrt());
            }
            prop_assert!(r.z_counts.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!((r.min_margin - r.disc / (n as f64).sqrt()).abs() <= 1e-12);
        }

        #[test]
        fn laplace_constant_exponent(c in -5.0f64..5.0, n in 1usize..2000) {
            let v = log_laplace_sum(|_| c, n).unwrap();
            prop_assert!((v - n as f64 * c).abs() <= 1e-9 * (1.0 + n as f64));
        }

        #[test]
        fn binomial_pmf_normalised(n in 1usize..3000) {
            let total: f64 = log_binomial_pmf(n).iter().map(|l| l.exp()).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}

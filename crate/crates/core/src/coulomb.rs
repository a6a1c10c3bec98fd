//! Metropolis sampling of GOE eigenvalues conditioned on ‖W‖_op ≤ κ.
//!
//! The target is the Coulomb gas on [−κ, κ]ᵈ with log-density
//! Σ_{i<j} log|λ_i − λ_j| − (d/4) Σ λ_i². Chains use single-site Gaussian
//! random-walk proposals whose scale is tuned during burn-in and then frozen.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::RngStream;
use crate::spectra::Density;
use crate::stats::{batch_means, integrated_autocorr_time, jackknife, McEstimate};

/// Proposals closer than this to another coordinate are rejected.
pub const COINCIDENCE_EPS: f64 = 1e-14;
/// Sweeps between full recomputations of the cached log-density.
pub const DRIFT_CHECK_EVERY: usize = 1000;
/// Largest tolerated drift of the cached log-density, relative to 1 + |value|.
pub const DRIFT_TOL: f64 = 1e-8;

/// Unnormalized log-density; −∞ outside [−κ, κ]ᵈ or at coincident points.
pub fn log_density(lambdas: &[f64], kappa: f64, d: usize) -> f64 {
    if lambdas.iter().any(|x| !(x.abs() <= kappa)) {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for (i, a) in lambdas.iter().enumerate() {
        for b in &lambdas[i + 1..] {
            let gap = (a - b).abs();
            if gap == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += gap.ln();
        }
    }
    acc - 0.25 * d as f64 * lambdas.iter().map(|x| x * x).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Initial proposal standard deviation; adapted during burn-in.
    pub proposal_sd: f64,
    pub burn_in: usize,
    /// Production sweeps per chain.
    pub sweeps: usize,
    /// Record every `thin`-th production sweep.
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub acceptance_band: (f64, f64),
}

impl ChainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            proposal_sd: 0.05,
            burn_in: 2_000,
            sweeps: 20_000,
            thin: 10,
            chains: 4,
            seed,
            target_acceptance: 0.3,
            acceptance_band: (0.2, 0.5),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.proposal_sd > 0.0) || self.sweeps == 0 || self.thin == 0 || self.chains == 0 {
            return domain("chain config needs positive proposal_sd, sweeps, thin and chains");
        }
        Ok(())
    }

    /// Stream of chain `c`.
    pub fn stream(&self, c: usize) -> RngStream {
        RngStream::new(self.seed, 0).child(c as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    lambdas: Vec<f64>,
    log_density: f64,
    kappa: f64,
    steps: u64,
}

impl ChainState {
    /// Evenly spread start inside (−0.9κ, 0.9κ).
    pub fn spread(kappa: f64, d: usize) -> Result<Self> {
        if !(kappa > 0.0) || d < 2 {
            return domain(format!("chain needs kappa > 0 and d >= 2, got kappa = {kappa}, d = {d}"));
        }
        let lambdas: Vec<f64> = (0..d).map(|i| 0.9 * kappa * (2.0 * (i as f64 + 0.5) / d as f64 - 1.0)).collect();
        Self::from_lambdas(lambdas, kappa)
    }

    pub fn from_lambdas(lambdas: Vec<f64>, kappa: f64) -> Result<Self> {
        let log_density = log_density(&lambdas, kappa, lambdas.len());
        if log_density == f64::NEG_INFINITY {
            return domain("initial eigenvalues are infeasible");
        }
        Ok(Self { lambdas, log_density, kappa, steps: 0 })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn log_density(&self) -> f64 {
        self.log_density
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One sweep of d single-site proposals with scale `sigma`; returns the
    /// number accepted.
    pub fn sweep<R: Rng + ?Sized>(&mut self, sigma: f64, rng: &mut R) -> usize {
        let d = self.lambdas.len();
        let quad = 0.25 * d as f64;
        let mut accepted = 0;
        for i in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.random();
            let old = self.lambdas[i];
            let new = old + sigma * z;
            if new.abs() > self.kappa {
                continue;
            }
            // Σ_j log|new − λ_j| − log|old − λ_j| as the log of a running
            // product, flushed before it can leave the normal range.
            let mut logs = 0.0;
            let mut prod = 1.0f64;
            let mut coincident = false;
            for (j, &x) in self.lambdas.iter().enumerate() {
                if j == i {
                    continue;
                }
                let num = (new - x).abs();
                if num < COINCIDENCE_EPS {
                    coincident = true;
                    break;
                }
                prod *= num / (old - x).abs();
                if !(1e-100..=1e100).contains(&prod) {
                    logs += prod.ln();
                    prod = 1.0;
                }
            }
            if coincident {
                continue;
            }
            let delta = logs + prod.ln() - quad * (new * new - old * old);
            if u.ln() < delta {
                self.lambdas[i] = new;
                self.log_density += delta;
                accepted += 1;
            }
        }
        self.steps += 1;
        accepted
    }

    /// Recomputes the log-density, returning the drift of the cached value.
    pub fn resync(&mut self) -> f64 {
        let fresh = log_density(&self.lambdas, self.kappa, self.lambdas.len());
        let drift = (fresh - self.log_density).abs();
        self.log_density = fresh;
        drift
    }
}

/// One sweep at the configured proposal scale.
pub fn mh_sweep<R: Rng + ?Sized>(state: &mut ChainState, config: &ChainConfig, rng: &mut R) -> usize {
    state.sweep(config.proposal_sd, rng)
}

/// Receives every recorded (thinned, post-burn-in) state of a chain.
pub trait Observer: Send {
    fn observe(&mut self, lambdas: &[f64]);
}

/// Keeps every recorded state.
#[derive(Debug, Clone, Default)]
pub struct StateLog(pub Vec<Vec<f64>>);

impl Observer for StateLog {
    fn observe(&mut self, lambdas: &[f64]) {
        self.0.push(lambdas.to_vec());
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainReport {
    pub stream: RngStream,
    pub proposal_sd: f64,
    pub burn_in_acceptance: f64,
    pub acceptance: f64,
    pub max_drift: f64,
    /// Integrated autocorrelation time of Σλ² in recorded samples.
    pub tau_int: f64,
    pub recorded: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub kappa: f64,
    pub d: usize,
    pub config: ChainConfig,
    pub chains: Vec<ChainReport>,
}

impl ChainDiagnostics {
    pub fn mean_acceptance(&self) -> f64 {
        self.chains.iter().map(|c| c.acceptance).sum::<f64>() / self.chains.len() as f64
    }
}

struct TraceObserver<'a, O: Observer> {
    inner: &'a mut O,
    t2: Vec<f64>,
}

impl<O: Observer> Observer for TraceObserver<'_, O> {
    fn observe(&mut self, lambdas: &[f64]) {
        self.t2.push(lambdas.iter().map(|x| x * x).sum());
        self.inner.observe(lambdas);
    }
}

/// Runs one chain: adapted burn-in, then frozen-kernel production.
pub fn run_chain<O: Observer>(
    kappa: f64,
    d: usize,
    config: &ChainConfig,
    stream: RngStream,
    observer: &mut O,
) -> Result<ChainReport> {
    config.validate()?;
    let mut state = ChainState::spread(kappa, d)?;
    let mut rng = stream.rng();
    let sites = d as f64;

    let mut log_sigma = config.proposal_sd.min(2.0 * kappa).ln();
    let mut burn_acc = 0usize;
    for t in 0..config.burn_in {
        let acc = state.sweep(log_sigma.exp(), &mut rng);
        burn_acc += acc;
        let rate = acc as f64 / sites;
        let gain = 1.0 / (1.0 + t as f64 / 50.0).sqrt();
        log_sigma += gain * (rate - config.target_acceptance);
        log_sigma = log_sigma.min((2.0 * kappa).ln());
    }
    let sigma = log_sigma.exp();

    let mut tracer = TraceObserver { inner: observer, t2: Vec::new() };
    let mut accepted = 0usize;
    let mut max_drift = 0.0f64;
    for t in 1..=config.sweeps {
        accepted += state.sweep(sigma, &mut rng);
        if state.lambdas.iter().any(|x| x.abs() > kappa) {
            return Err(Error::Internal("chain left the constraint set".into()));
        }
        if t % DRIFT_CHECK_EVERY == 0 {
            let scale = 1.0 + state.log_density.abs();
            let drift = state.resync();
            max_drift = max_drift.max(drift / scale);
            if drift > DRIFT_TOL * scale {
                return Err(Error::Internal(format!("cached log-density drifted by {drift}")));
            }
        }
        if t % config.thin == 0 {
            tracer.observe(&state.lambdas);
        }
    }
    let acceptance = accepted as f64 / (sites * config.sweeps as f64);
    let (lo, hi) = config.acceptance_band;
    if !(lo..=hi).contains(&acceptance) {
        return Err(Error::ChainNonConvergence(format!(
            "acceptance {acceptance:.3} outside [{lo}, {hi}] (kappa = {kappa}, d = {d}, sigma = {sigma:.3e})"
        )));
    }
    Ok(ChainReport {
        stream,
        proposal_sd: sigma,
        burn_in_acceptance: if config.burn_in > 0 { burn_acc as f64 / (sites * config.burn_in as f64) } else { 0.0 },
        acceptance,
        max_drift,
        tau_int: integrated_autocorr_time(&tracer.t2),
        recorded: tracer.t2.len(),
    })
}

/// Runs `config.chains` chains in parallel, one observer per chain, and
/// returns observers in chain order.
pub fn run_chains<O, F>(kappa: f64, d: usize, config: &ChainConfig, make: F) -> Result<(Vec<O>, ChainDiagnostics)>
where
    O: Observer,
    F: Fn(usize) -> O + Sync,
{
    config.validate()?;
    let runs = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut obs = make(c);
            let report = run_chain(kappa, d, config, config.stream(c), &mut obs)?;
            Ok((obs, report))
        })
        .collect::<Result<Vec<_>>>()?;
    let (observers, chains) = runs.into_iter().unzip();
    Ok((observers, ChainDiagnostics { kappa, d, config: *config, chains }))
}

/// Histogram over [lo, hi] with uniform bins; values outside are counted
/// separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsdHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub outside: u64,
    pub total: u64,
}

impl EsdHistogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(hi > lo && bins > 0, "histogram needs lo < hi and bins > 0");
        Self { lo, hi, counts: vec![0; bins], outside: 0, total: 0 }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins()).map(|b| self.lo + b as f64 * self.width()).collect()
    }

    pub fn push(&mut self, x: f64) {
        self.total += 1;
        if !(x >= self.lo && x <= self.hi) {
            self.outside += 1;
            return;
        }
        let b = (((x - self.lo) / self.width()) as usize).min(self.bins() - 1);
        self.counts[b] += 1;
    }

    pub fn extend(&mut self, xs: &[f64]) {
        for &x in xs {
            self.push(x);
        }
    }

    pub fn merge(&mut self, other: &EsdHistogram) {
        assert!(self.lo == other.lo && self.hi == other.hi && self.bins() == other.bins());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.outside += other.outside;
        self.total += other.total;
    }

    /// Normalized densities per bin (mass / width).
    pub fn densities(&self) -> Vec<f64> {
        let scale = 1.0 / (self.total as f64 * self.width());
        self.counts.iter().map(|c| *c as f64 * scale).collect()
    }

    fn fractions(&self) -> Vec<f64> {
        self.counts.iter().map(|c| *c as f64 / self.total as f64).collect()
    }

    /// L1 distance between the histogram density and `rho` averaged over
    /// each bin: Σ_b |p̂_b − ∫_b ρ| plus mass of either outside [lo, hi].
    pub fn l1_to<D: Density + ?Sized>(&self, rho: &D) -> f64 {
        let edges = self.edges();
        let inside_mass = rho.cdf(self.hi) - rho.cdf(self.lo);
        let mut l1 = self.outside as f64 / self.total as f64 + (1.0 - inside_mass);
        for (b, p) in self.fractions().iter().enumerate() {
            l1 += (p - (rho.cdf(edges[b + 1]) - rho.cdf(edges[b]))).abs();
        }
        l1
    }

    /// Σ_b |ĥ_b − ρ(mid_b)| · width, against midpoint values of ρ.
    pub fn l1_midpoint_to<D: Density + ?Sized>(&self, rho: &D) -> f64 {
        let w = self.width();
        let mut l1 = self.outside as f64 / self.total as f64;
        for (b, h) in self.densities().iter().enumerate() {
            let mid = self.lo + (b as f64 + 0.5) * w;
            l1 += (h - rho.pdf(mid)).abs() * w;
        }
        l1
    }

    /// L1 distance between two histograms on identical bins.
    pub fn l1_between(&self, other: &EsdHistogram) -> f64 {
        assert!(self.lo == other.lo && self.hi == other.hi && self.bins() == other.bins());
        let a = self.fractions();
        let b = other.fractions();
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>()
            + (self.outside as f64 / self.total as f64 - other.outside as f64 / other.total as f64).abs()
    }

    /// χ² statistic for mirror symmetry, with its degrees of freedom.
    pub fn symmetry_chi2(&self) -> (f64, usize) {
        let n = self.bins();
        let mut chi2 = 0.0;
        let mut dof = 0;
        for b in 0..n / 2 {
            let (x, y) = (self.counts[b] as f64, self.counts[n - 1 - b] as f64);
            if x + y > 0.0 {
                chi2 += (x - y) * (x - y) / (x + y);
                dof += 1;
            }
        }
        (chi2, dof)
    }
}

impl Observer for EsdHistogram {
    fn observe(&mut self, lambdas: &[f64]) {
        self.extend(lambdas);
    }
}

/// Default number of histogram bins for conditioned spectra.
pub const ESD_BINS: usize = 40;

/// Pooled eigenvalue histogram over [−κ, κ] from all chains.
pub fn conditioned_esd(kappa: f64, d: usize, config: &ChainConfig) -> Result<(EsdHistogram, ChainDiagnostics)> {
    conditioned_esd_bins(kappa, d, config, ESD_BINS)
}

pub fn conditioned_esd_bins(
    kappa: f64,
    d: usize,
    config: &ChainConfig,
    bins: usize,
) -> Result<(EsdHistogram, ChainDiagnostics)> {
    if !(kappa > 0.0 && kappa <= 2.0) {
        return domain(format!("kappa must lie in (0, 2], got {kappa}"));
    }
    let (hists, diag) = run_chains(kappa, d, config, |_| EsdHistogram::new(-kappa, kappa, bins))?;
    let mut pooled = EsdHistogram::new(-kappa, kappa, bins);
    for h in &hists {
        pooled.merge(h);
    }
    Ok((pooled, diag))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of Q signed so that R has a positive diagonal.
pub fn haar_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Estimates (E O₁₁⁴, E O₁₁²O₁₂²) over `draws` Haar matrices.
pub fn haar_fourth_moments(d: usize, draws: usize, stream: RngStream) -> Result<(McEstimate, McEstimate)> {
    if d < 2 || draws < 2 {
        return domain("haar moments need d >= 2 and at least two draws");
    }
    let mut rng = stream.rng();
    let (mut a, mut b) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for _ in 0..draws {
        let o = haar_orthogonal(d, &mut rng);
        let (x, y) = (o[(0, 0)] * o[(0, 0)], o[(0, 1)] * o[(0, 1)]);
        a.push(x * x);
        b.push(x * y);
    }
    Ok((McEstimate::from_samples(&a).with_seed(stream), McEstimate::from_samples(&b).with_seed(stream)))
}

/// Histogram of max(λ₁, λ₂) for the two-point law on [−κ, κ]² with d = 2,
/// by rejection from the uniform square (the density is at most 2κ there).
pub fn two_point_rejection(kappa: f64, samples: usize, bins: usize, stream: RngStream) -> EsdHistogram {
    let mut rng = stream.rng();
    let mut h = EsdHistogram::new(-kappa, kappa, bins);
    while h.total < samples as u64 {
        let a: f64 = rng.random_range(-kappa..kappa);
        let b: f64 = rng.random_range(-kappa..kappa);
        let f = (a - b).abs() * (-(a * a + b * b) / 2.0).exp();
        if rng.random::<f64>() * 2.0 * kappa < f {
            h.push(a.max(b));
        }
    }
    h
}

/// Var[Tr(W W')] for independent rotation-invariant W, W' with common
/// eigenvalue moments m2 = E λ_i² and m11 = E λ_i λ_j (i ≠ j).
pub fn var_trace_product_closed(d: usize, m2: f64, m11: f64) -> f64 {
    let d = d as f64;
    (3.0 * d / (d + 2.0)) * m2 * m2
        + (2.0 * d * (d - 1.0) / (d + 2.0)) * m2 * m11
        + (d * (d - 1.0) * (d + 1.0) / (d + 2.0)) * m11 * m11
}

/// Tr(O diag(λ) Oᵀ diag(λ')) = Σ_ij O_ij² λ_i λ'_j.
pub fn haar_contraction(o: &DMatrix<f64>, lambda: &[f64], lambda_p: &[f64]) -> f64 {
    let d = lambda.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            let x = o[(i, j)];
            row += x * x * lambda_p[j];
        }
        acc += lambda[i] * row;
    }
    acc
}

/// Batches per chain for error bars on chain averages.
pub const BATCHES_PER_CHAIN: usize = 25;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionedMoments {
    pub kappa: f64,
    pub d: usize,
    /// E[Tr W²].
    pub mean_tr_w2: McEstimate,
    /// E[λ_i λ_j], i ≠ j.
    pub mean_lambda_pair: McEstimate,
    /// E[(Tr W)²].
    pub mean_tr_w_sq: McEstimate,
    /// Var[Tr W W'] from the closed combination of eigenvalue moments.
    pub var_tr_wwp_closed: McEstimate,
    /// Var[Tr W W'] by direct Haar contraction over sample pairs.
    pub var_tr_wwp_direct: McEstimate,
    /// E[Tr W W'] by direct Haar contraction.
    pub mean_tr_wwp_direct: McEstimate,
    pub diagnostics: ChainDiagnostics,
}

impl ConditionedMoments {
    /// z-score between the two Var[Tr W W'] estimates.
    pub fn var_methods_z(&self) -> f64 {
        self.var_tr_wwp_closed.z_score(&self.var_tr_wwp_direct)
    }
}

/// Batch-mean rows [t2, t1²] across all chains.
fn moment_rows(states: &[StateLog]) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for log in states {
        let t2: Vec<f64> = log.0.iter().map(|l| l.iter().map(|x| x * x).sum()).collect();
        let t11: Vec<f64> = log.0.iter().map(|l| l.iter().sum::<f64>().powi(2)).collect();
        let b2 = batch_means(&t2, BATCHES_PER_CHAIN);
        let b11 = batch_means(&t11, BATCHES_PER_CHAIN);
        rows.extend(b2.into_iter().zip(b11).map(|(a, b)| vec![a, b]));
    }
    rows
}

pub fn conditioned_moments(kappa: f64, d: usize, config: &ChainConfig) -> Result<ConditionedMoments> {
    Ok(sample_moments(kappa, d, config)?.0)
}

/// Runs the chains once and returns the moments with their batch rows.
fn sample_moments(kappa: f64, d: usize, config: &ChainConfig) -> Result<(ConditionedMoments, Vec<Vec<f64>>)> {
    if !(kappa > 0.0 && kappa <= 2.0) {
        return domain(format!("kappa must lie in (0, 2], got {kappa}"));
    }
    let (states, diagnostics) = run_chains(kappa, d, config, |_| StateLog::default())?;
    let rows = moment_rows(&states);
    if rows.len() < 2 {
        return domain("too few recorded samples for error bars");
    }
    let df = d as f64;
    let m11 = move |m: &[f64]| (m[1] - m[0]) / (df * (df - 1.0));
    let mean_tr_w2 = jackknife(&rows, |m| m[0]);
    let mean_tr_w_sq = jackknife(&rows, |m| m[1]);
    let mean_lambda_pair = jackknife(&rows, m11);
    let var_tr_wwp_closed = jackknife(&rows, |m| var_trace_product_closed(d, m[0] / df, m11(m)));

    // Pair chain c with chain c + 1 (cyclically) at equal record index, with
    // Haar rotations from a stream disjoint from the chains'.
    let chains = states.len();
    let (var_tr_wwp_direct, mean_tr_wwp_direct) = if chains >= 2 {
        let per_chain: Vec<Vec<f64>> = (0..chains)
            .into_par_iter()
            .map(|c| {
                let other = &states[(c + 1) % chains].0;
                let mut rng = RngStream::new(config.seed, 1).child(c as u64).rng();
                states[c]
                    .0
                    .iter()
                    .zip(other)
                    .map(|(a, b)| haar_contraction(&haar_orthogonal(d, &mut rng), a, b))
                    .collect()
            })
            .collect();
        let mut pair_rows = Vec::new();
        for series in &per_chain {
            let sq: Vec<f64> = series.iter().map(|x| x * x).collect();
            pair_rows.extend(
                batch_means(series, BATCHES_PER_CHAIN)
                    .into_iter()
                    .zip(batch_means(&sq, BATCHES_PER_CHAIN))
                    .map(|(a, b)| vec![a, b]),
            );
        }
        (jackknife(&pair_rows, |m| m[1] - m[0] * m[0]), jackknife(&pair_rows, |m| m[0]))
    } else {
        let nan = McEstimate::new(f64::NAN, f64::NAN, 0);
        (nan, nan)
    };

    let seed = RngStream::new(config.seed, 0);
    let moments = ConditionedMoments {
        kappa,
        d,
        mean_tr_w2: mean_tr_w2.with_seed(seed),
        mean_lambda_pair: mean_lambda_pair.with_seed(seed),
        mean_tr_w_sq: mean_tr_w_sq.with_seed(seed),
        var_tr_wwp_closed: var_tr_wwp_closed.with_seed(seed),
        var_tr_wwp_direct: var_tr_wwp_direct.with_seed(seed),
        mean_tr_wwp_direct: mean_tr_wwp_direct.with_seed(seed),
        diagnostics,
    };
    Ok((moments, rows))
}

/// d(d+1)/(2n) − (d/n) E[Tr W²] + (d²/(4n)) Var[Tr W W'] with n = τd².
pub fn g20_formula(d: usize, tau: f64, mean_tr_w2: f64, var_tr_wwp: f64) -> f64 {
    let d = d as f64;
    let n = tau * d * d;
    d * (d + 1.0) / (2.0 * n) - d / n * mean_tr_w2 + d * d / (4.0 * n) * var_tr_wwp
}

/// The large-d value of G″_d(0) from the second moment m of ρ_κ:
/// (1/τ)(½ − m + m²/2) = (1 − m)²/(2τ).
pub fn g20_limit(second_moment: f64, tau: f64) -> f64 {
    (1.0 - second_moment).powi(2) / (2.0 * tau)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct G20Estimate {
    /// From the closed Var[Tr W W'] combination.
    pub estimate: McEstimate,
    /// Same assembly with the direct Haar-contraction variance.
    pub estimate_direct: McEstimate,
    pub moments: ConditionedMoments,
}

pub fn estimate_g20(kappa: f64, d: usize, tau: f64, config: &ChainConfig) -> Result<G20Estimate> {
    if !(tau > 0.0) {
        return domain(format!("tau must be positive, got {tau}"));
    }
    let (moments, rows) = sample_moments(kappa, d, config)?;
    let df = d as f64;
    let estimate = jackknife(&rows, |m| {
        let m11 = (m[1] - m[0]) / (df * (df - 1.0));
        g20_formula(d, tau, m[0], var_trace_product_closed(d, m[0] / df, m11))
    })
    .with_seed(RngStream::new(config.seed, 0));
    let direct = g20_formula(d, tau, moments.mean_tr_w2.mean, moments.var_tr_wwp_direct.mean);
    let direct_se = (df / (tau * df * df) * moments.mean_tr_w2.stderr)
        .hypot(df * df / (4.0 * tau * df * df) * moments.var_tr_wwp_direct.stderr);
    let estimate_direct = McEstimate::new(direct, direct_se, moments.var_tr_wwp_direct.n_samples);
    Ok(G20Estimate { estimate, estimate_direct, moments })
}

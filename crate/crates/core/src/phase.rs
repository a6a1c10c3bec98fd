//! Threshold curves of the (κ, τ) phase diagram.
//!
//! Everything here is a pure function of its inputs. Root finding is
//! bracketed bisection throughout: every target function is monotone on
//! its bracket. Logarithms are natural; `log 2` appears only where the
//! thresholds are expressed in units of `d² log 2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{domain, Error, Result};

/// Absolute tolerance on δ_η (relative once δ_η < 1).
pub const DELTA_TOL: f64 = 1e-12;
/// Relative tolerance on η*.
pub const ETA_REL_TOL: f64 = 1e-10;
/// Initial step of the grid over u in the outer minimisation defining τ₂.
pub const TAU2_GRID_STEP: f64 = 1e-3;
/// Golden-section tolerance in u for the τ₂ refinement.
pub const TAU2_U_TOL: f64 = 1e-6;
/// τ₂ at κ = 2 is reported as its value at this margin.
pub const KAPPA_EDGE: f64 = 2.0 - 1e-6;

/// Normalised margin κ ∈ (0, 2].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Margin(f64);

impl Margin {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 2.0) {
            return domain(format!("margin must lie in (0, 2], got {kappa}"));
        }
        Ok(Self(kappa))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// True at the endpoint κ = 2 where τ₁ vanishes.
    pub fn is_edge(self) -> bool {
        self.0 == 2.0
    }
}

/// Binary entropy in nats, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("binary entropy needs p in [0, 1], got {p}"));
    }
    let term = |x: f64| if x == 0.0 { 0.0 } else { -x * x.ln() };
    Ok(term(p) + term(1.0 - p))
}

/// `log 2 − H((1 + δ)/2)`, accurate for small δ.
fn entropy_deficit(delta: f64) -> f64 {
    if delta < 0.1 {
        // sum_k δ^{2k} / (2k (2k - 1))
        let d2 = delta * delta;
        let mut pow = d2;
        let mut acc = 0.0;
        for k in 1..=30 {
            let kk = 2.0 * k as f64;
            acc += pow / (kk * (kk - 1.0));
            pow *= d2;
            if pow < 1e-18 * acc {
                break;
            }
        }
        acc
    } else {
        let right = if delta >= 1.0 { 0.0 } else { (1.0 - delta) * (-delta).ln_1p() };
        0.5 * ((1.0 + delta) * delta.ln_1p() + right)
    }
}

/// First-moment threshold τ₁(κ).
///
/// Evaluated through `u = 1 − κ²/4` as `(−log(1−u) − u − u²/2) / (4 log 2)`,
/// which is the printed closed form rearranged so that the cancellation
/// near κ = 2 (where τ₁ ~ u³/(12 log 2)) is done analytically.
pub fn tau1(kappa: Margin) -> f64 {
    let k = kappa.get();
    let u = (2.0 - k) * (2.0 + k) / 4.0;
    let body = if u < 0.1 {
        let mut pow = u * u * u;
        let mut acc = 0.0;
        for j in 3..=60 {
            acc += pow / j as f64;
            pow *= u;
            if pow < 1e-18 * acc {
                break;
            }
        }
        acc
    } else {
        -2.0 * (k / 2.0).ln() - u - 0.5 * u * u
    };
    body / (4.0 * LN_2)
}

/// Left large-deviation rate of the GOE operator norm at scale d².
pub fn rate_opnorm(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return domain(format!("rate_opnorm needs kappa > 0, got {kappa}"));
    }
    if kappa > 2.0 {
        return Ok(0.0);
    }
    Ok(kappa.powi(4) / 128.0 - kappa * kappa / 8.0 + 0.5 * (kappa / 2.0).ln() + 0.375)
}

/// δ_η: the unique δ ∈ (0, 1) with `H((1+δ)/2) = η/(1+η) · log 2`.
pub fn delta_eta(eta: f64) -> Result<f64> {
    if !(eta > 0.0) || !eta.is_finite() {
        return domain(format!("delta_eta needs finite eta > 0, got {eta}"));
    }
    let target = LN_2 / (1.0 + eta);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..2000 {
        if hi - lo <= DELTA_TOL * hi.min(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if entropy_deficit(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The η-increasing branch `(1 + η) τ₁(κ)`.
pub fn first_branch(eta: f64, kappa: Margin) -> f64 {
    (1.0 + eta) * tau1(kappa)
}

/// The δ-polynomial branch evaluated at a given δ.
pub fn second_branch_at_delta(delta: f64, kappa: f64) -> f64 {
    let d = delta;
    let a = (1.0 - d) * (1.0 + d);
    let a3 = a * a * a;
    let c0 = (1.0 + d * d) / (2.0 * a * a);
    let c1 = d * (1.0 + 6.0 * d + 3.0 * d * d + 2.0 * d * d * d) / (a3 * (1.0 - d));
    let c2 = 2.0 * (1.0 + d).powi(5) / (a3 * a) - (1.0 + 3.0 * d * d) / (4.0 * a3);
    let c4 = (1.0 + 3.0 * d * d) / (32.0 * a3);
    c0 + c1 * kappa + c2 * kappa * kappa + c4 * kappa.powi(4)
}

/// The η-decreasing branch, through δ_η.
pub fn second_branch(eta: f64, kappa: Margin) -> Result<f64> {
    Ok(second_branch_at_delta(delta_eta(eta)?, kappa.get()))
}

/// t̃τ(η, κ): the larger of the two branches.
pub fn ttau(eta: f64, kappa: Margin) -> Result<f64> {
    Ok(first_branch(eta, kappa).max(second_branch(eta, kappa)?))
}

/// η*(κ): the crossing of the two branches, found in log η.
pub fn eta_star(kappa: Margin) -> Result<f64> {
    if kappa.is_edge() {
        return domain("eta_star has no finite root at kappa = 2 (tau1 vanishes)");
    }
    let gap = |t: f64| -> Result<f64> {
        let eta = t.exp();
        Ok(first_branch(eta, kappa) - second_branch(eta, kappa)?)
    };
    let mut lo = 0.0f64;
    while gap(lo)? > 0.0 {
        lo -= 1.0;
        if lo < -80.0 {
            return Err(Error::Bracket(format!("no lower bracket for eta_star at kappa = {}", kappa.get())));
        }
    }
    let mut hi = 0.0f64;
    while gap(hi)? < 0.0 {
        hi += 1.0;
        if hi > 690.0 {
            return Err(Error::Bracket(format!("no upper bracket for eta_star at kappa = {}", kappa.get())));
        }
    }
    while hi - lo > ETA_REL_TOL {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// τ̄(κ) = min over η of t̃τ(η, κ), attained at η*(κ).
pub fn bartau(kappa: Margin) -> Result<f64> {
    ttau(eta_star(kappa)?, kappa)
}

/// τ_f(κ) = ½ (κ²/4 − 1)⁴.
pub fn tau_f(kappa: Margin) -> f64 {
    0.5 * (kappa.get().powi(2) / 4.0 - 1.0).powi(4)
}

/// τ̄ tabulated on `u = h, 2h, …` for the outer minimisation in τ₂.
#[derive(Debug, Clone)]
pub struct BartauProfile {
    step: f64,
    values: Vec<(f64, f64)>,
}

impl BartauProfile {
    /// Tabulates τ̄ on `(0, kappa_max]` with the default step.
    pub fn new(kappa_max: f64) -> Result<Self> {
        Self::with_step(kappa_max, TAU2_GRID_STEP)
    }

    pub fn with_step(kappa_max: f64, step: f64) -> Result<Self> {
        let kappa_max = kappa_max.min(KAPPA_EDGE);
        if !(kappa_max > 0.0) || !(step > 0.0) {
            return domain(format!("invalid profile range ({kappa_max}, step {step})"));
        }
        let count = (kappa_max / step).floor() as usize;
        let values = (1..=count)
            .into_par_iter()
            .map(|k| {
                let u = k as f64 * step;
                Ok((u, bartau(Margin::new(u)?)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { step, values })
    }

    pub fn kappa_max(&self) -> f64 {
        self.values.last().map_or(0.0, |v| v.0)
    }

    /// τ₂(κ) = min over u ∈ (0, κ] of τ̄(u).
    pub fn tau2(&self, kappa: Margin) -> Result<f64> {
        let k = kappa.get().min(KAPPA_EDGE);
        if k > self.kappa_max() + self.step {
            return domain(format!("profile covers (0, {}], asked for {k}", self.kappa_max()));
        }
        let mut cands: Vec<(f64, f64)> = self.values.iter().copied().take_while(|(u, _)| *u <= k).collect();
        if cands.last().is_none_or(|(u, _)| *u < k) {
            cands.push((k, bartau(Margin::new(k)?)?));
        }
        let (i, &(u_best, mut best)) =
            cands.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).expect("at least one candidate");
        let left = if i == 0 { (u_best - self.step).max(0.5 * u_best) } else { cands[i - 1].0 };
        let right = cands.get(i + 1).map_or(u_best, |c| c.0);
        if right > left {
            let (_, v) = golden_section(left, right, TAU2_U_TOL, |u| bartau(Margin::new(u)?))?;
            best = best.min(v);
        }
        Ok(best)
    }
}

/// Minimises a unimodal function on `[a, b]` to an interval of width `tol`.
pub(crate) fn golden_section<F>(mut a: f64, mut b: f64, tol: f64, f: F) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?.min(fc).min(fd)))
}

/// τ₂(κ). Builds a fresh profile; use [`BartauProfile`] for many queries.
pub fn tau2(kappa: Margin) -> Result<f64> {
    BartauProfile::new(kappa.get())?.tau2(kappa)
}

/// The two roots of τ₁(κ) = τ_f(κ) in (0, 2), low first.
pub fn crossing_tau1_tauf() -> Result<(f64, f64)> {
    let diff = |k: f64| {
        let m = Margin::new(k).expect("scan stays inside (0, 2)");
        tau1(m) - tau_f(m)
    };
    let grid: Vec<f64> = (1..200).map(|i| i as f64 * 0.01).collect();
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        if diff(a).signum() != diff(b).signum() {
            roots.push(bisect(a, b, 1e-8, diff));
        }
    }
    match roots.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        other => Err(Error::Internal(format!("expected two crossings of tau1 and tau_f, found {}", other.len()))),
    }
}

fn bisect<F: Fn(f64) -> f64>(mut a: f64, mut b: f64, tol: f64, f: F) -> f64 {
    let fa = f(a);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if f(m).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Region {
    Unsat,
    Unknown,
    Sat,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::Unsat => "UNSAT",
            Region::Unknown => "UNKNOWN",
            Region::Sat => "SAT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub region: Region,
    /// τ < τ_f(κ): the second moment method fails, independently of region.
    pub second_moment_fails: bool,
}

/// Classification against precomputed curve values.
pub fn classify_with(tau1: f64, tau2: f64, tau_f: f64, tau: f64) -> Result<Classification> {
    if !(tau >= 0.0) {
        return domain(format!("tau must be >= 0, got {tau}"));
    }
    let region = if tau < tau1 {
        Region::Unsat
    } else if tau > tau2 {
        Region::Sat
    } else {
        Region::Unknown
    };
    Ok(Classification { region, second_moment_fails: tau < tau_f })
}

pub fn classify(kappa: Margin, tau: f64) -> Result<Classification> {
    classify_with(tau1(kappa), tau2(kappa)?, tau_f(kappa), tau)
}

/// All threshold curves at one κ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub kappa: f64,
    pub tau1: f64,
    pub bartau: f64,
    pub tau2: f64,
    pub tau_f: f64,
    pub eta_star: f64,
    pub delta_star: f64,
}

impl PhaseRow {
    pub fn classify(&self, tau: f64) -> Result<Classification> {
        classify_with(self.tau1, self.tau2, self.tau_f, tau)
    }
}

/// One row per κ of an ascending grid in (0, 2).
pub fn phase_table(kappa_grid: &[f64]) -> Result<Vec<PhaseRow>> {
    if kappa_grid.is_empty() {
        return Ok(Vec::new());
    }
    if kappa_grid.windows(2).any(|w| w[1] <= w[0]) {
        return domain("kappa grid must be strictly ascending");
    }
    for &k in kappa_grid {
        if !(k > 0.0 && k < 2.0) {
            return domain(format!("kappa grid values must lie in (0, 2), got {k}"));
        }
    }
    let profile = BartauProfile::new(*kappa_grid.last().expect("non-empty"))?;
    let mut rows = kappa_grid
        .par_iter()
        .map(|&k| {
            let m = Margin::new(k)?;
            let eta = eta_star(m)?;
            Ok(PhaseRow {
                kappa: k,
                tau1: tau1(m),
                bartau: ttau(eta, m)?,
                tau2: profile.tau2(m)?,
                tau_f: tau_f(m),
                eta_star: eta,
                delta_star: delta_eta(eta)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // τ₂ is a running minimum; enforce it exactly across rows.
    for i in 1..rows.len() {
        rows[i].tau2 = rows[i].tau2.min(rows[i - 1].tau2);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(k: f64) -> Margin {
        Margin::new(k).unwrap()
    }

    #[test]
    fn margin_rejects_out_of_range() {
        assert!(Margin::new(0.0).is_err());
        assert!(Margin::new(-1.0).is_err());
        assert!(Margin::new(2.0 + 1e-12).is_err());
        assert!(Margin::new(f64::NAN).is_err());
        assert!(Margin::new(2.0).is_ok());
    }

    #[test]
    fn entropy_values() {
        assert_relative_eq!(binary_entropy(0.5).unwrap(), LN_2, epsilon = 1e-15);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // mpmath, 40 digits
        assert_relative_eq!(binary_entropy(0.25).unwrap(), 0.562_335_144_618_808_4, epsilon = 1e-15);
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn entropy_symmetric() {
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            assert_relative_eq!(binary_entropy(p).unwrap(), binary_entropy(1.0 - p).unwrap(), epsilon = 1e-15);
        }
    }

    #[test]
    fn deficit_agrees_with_entropy() {
        for i in 1..100 {
            let d = i as f64 / 100.0;
            let direct = LN_2 - binary_entropy((1.0 + d) / 2.0).unwrap();
            assert!((entropy_deficit(d) - direct).abs() < 1e-15, "delta = {d}");
        }
    }

    #[test]
    fn tau1_values() {
        assert_eq!(tau1(m(2.0)), 0.0);
        assert_relative_eq!(tau1(m(1.0)), 0.128_055_184_770_814_12, epsilon = 1e-15);
        let mut prev = 0.0;
        for k in [1.0, 0.5, 0.1, 1e-2, 1e-4, 1e-8] {
            let t = tau1(m(k));
            assert!(t > prev);
            prev = t;
        }
        assert!(prev > 10.0);
    }

    #[test]
    fn tau1_positive_below_two() {
        for i in 1..2000 {
            let k = i as f64 * 1e-3;
            assert!(tau1(m(k)) > 0.0, "kappa = {k}");
        }
        assert!(tau1(m(2.0 - 1e-6)) > 0.0);
    }

    #[test]
    fn tau1_series_branch_matches_closed_form_at_switch() {
        // u = 0.1 sits at kappa = sqrt(3.6)
        let closed = |k: f64| (-k.powi(4) / 128.0 + k * k / 8.0 - 0.5 * (k / 2.0).ln() - 0.375) / LN_2;
        for k in [3.6f64.sqrt() - 1e-9, 3.6f64.sqrt() + 1e-9] {
            assert_relative_eq!(tau1(m(k)), closed(k), max_relative = 1e-10);
        }
    }

    #[test]
    fn rate_values() {
        assert_eq!(rate_opnorm(2.0).unwrap(), 0.0);
        assert_eq!(rate_opnorm(3.0).unwrap(), 0.0);
        assert_relative_eq!(rate_opnorm(1.0).unwrap(), -0.088_761_090_279_972_65, epsilon = 1e-15);
        assert!(rate_opnorm(0.0).is_err());
        for i in 1..=200 {
            let k = i as f64 / 100.0;
            assert!((tau1(m(k)) * LN_2 + rate_opnorm(k).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn delta_eta_limits_and_value() {
        assert!(delta_eta(1e-8).unwrap() > 0.999);
        assert!(delta_eta(1e8).unwrap() < 1e-3);
        // mpmath findroot
        assert_relative_eq!(delta_eta(1.0).unwrap(), 0.779_944_271_123_280_9, epsilon = 1e-11);
        assert!(delta_eta(0.0).is_err());
        assert!(delta_eta(-1.0).is_err());
    }

    #[test]
    fn delta_eta_strictly_decreasing() {
        let mut prev = 1.0;
        for i in -40..=40 {
            let d = delta_eta(10f64.powf(i as f64 / 5.0)).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn ttau_dominates_first_branch() {
        for &k in &[0.3, 1.0, 1.7, 2.0] {
            for i in -8..=8 {
                let eta = 10f64.powi(i);
                assert!(ttau(eta, m(k)).unwrap() >= first_branch(eta, m(k)));
            }
        }
    }

    #[test]
    fn ttau_large_eta_limit() {
        let k: f64 = 1.0;
        let limit = 0.5 + 2.0 * k * k - k * k / 4.0 + k.powi(4) / 32.0;
        assert_relative_eq!(second_branch_at_delta(0.0, k), limit, epsilon = 1e-15);
        // δ(1e8) ≈ 1.2e-4 and the κ² coefficient moves like 10 δ
        assert!((second_branch(1e8, m(k)).unwrap() - limit).abs() < 2e-3);
        assert!((second_branch(1e12, m(k)).unwrap() - limit).abs() < 2e-5);
    }

    #[test]
    fn ttau_diverges_as_eta_vanishes() {
        let a = ttau(1e-3, m(1.0)).unwrap();
        let b = ttau(1e-6, m(1.0)).unwrap();
        assert!(b > a && b > 1e3);
    }

    #[test]
    fn branches_are_monotone() {
        for &k in &[0.2, 1.0, 1.9] {
            let mut prev_f = f64::NEG_INFINITY;
            let mut prev_g = f64::INFINITY;
            for i in -30..=30 {
                let eta = 10f64.powf(i as f64 / 5.0);
                let f = first_branch(eta, m(k));
                let g = second_branch(eta, m(k)).unwrap();
                assert!(f > prev_f);
                assert!(g < prev_g);
                prev_f = f;
                prev_g = g;
            }
        }
    }

    #[test]
    fn eta_star_defining_property() {
        for &k in &[0.05, 0.4, 1.0, 1.5, 1.99] {
            let e = eta_star(m(k)).unwrap();
            let f = first_branch(e, m(k));
            let g = second_branch(e, m(k)).unwrap();
            assert!(((f - g) / f).abs() < 1e-9, "kappa = {k}: f = {f}, g = {g}");
            assert_relative_eq!(bartau(m(k)).unwrap(), (1.0 + e) * tau1(m(k)), max_relative = 1e-9);
        }
    }

    #[test]
    fn eta_star_at_kappa_one() {
        // mpmath findroot on the crossing equation
        assert_relative_eq!(eta_star(m(1.0)).unwrap(), 44.515_010_024_352_34, max_relative = 1e-8);
        assert_relative_eq!(bartau(m(1.0)).unwrap(), 5.828_433_018_513_895, max_relative = 1e-8);
    }

    #[test]
    fn eta_star_rejects_edge() {
        assert!(matches!(eta_star(m(2.0)), Err(Error::Domain(_))));
        assert!(bartau(m(2.0)).is_err());
    }

    #[test]
    fn bartau_continuity() {
        for i in 1..40 {
            let k = i as f64 * 0.05;
            let a = bartau(m(k)).unwrap();
            let b = bartau(m(k + 1e-4)).unwrap();
            assert!((a - b).abs() <= 1e-2, "kappa = {k}");
            assert!(a >= tau1(m(k)));
        }
    }

    #[test]
    fn tau_f_values() {
        assert_eq!(tau_f(m(2.0)), 0.0);
        assert_eq!(tau_f(m(1.0)), 0.158_203_125);
        assert!((tau_f(m(1e-9)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tau2_below_bartau_and_monotone() {
        let profile = BartauProfile::new(1.99).unwrap();
        let mut prev = f64::INFINITY;
        for i in 1..=199 {
            let k = i as f64 * 0.01;
            let t2 = profile.tau2(m(k)).unwrap();
            assert!(t2 <= bartau(m(k)).unwrap() + 1e-12);
            assert!(t2 <= prev + 1e-9, "kappa = {k}");
            prev = t2;
        }
        assert!(profile.tau2(m(1.9)).unwrap() >= profile.tau2(m(1.99)).unwrap());
    }

    #[test]
    fn crossings() {
        let (lo, hi) = crossing_tau1_tauf().unwrap();
        assert!((lo - 0.718).abs() < 0.005, "lo = {lo}");
        assert!((hi - 1.652).abs() < 0.005, "hi = {hi}");
        assert!(tau1(m(1.0)) < tau_f(m(1.0)));
        assert!(tau1(m(0.5)) > tau_f(m(0.5)));
    }

    #[test]
    fn classification_examples() {
        let c = classify(m(2.0), 1.0).unwrap();
        assert_eq!(c.region, Region::Unknown);
        let c = classify(m(1.0), 0.05).unwrap();
        assert_eq!(c.region, Region::Unsat);
        let c = classify(m(1.0), 0.14).unwrap();
        assert_eq!(c.region, Region::Unknown);
        assert!(c.second_moment_fails);
        let c = classify(m(1.0), 6.0).unwrap();
        assert_eq!(c.region, Region::Sat);
        assert!(!c.second_moment_fails);
        assert!(classify(m(1.0), -0.1).is_err());
    }

    #[test]
    fn phase_table_small_grid() {
        let rows = phase_table(&[0.5, 1.0, 1.5]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[1].tau2 <= w[0].tau2));
        for r in &rows {
            assert!(r.tau1 <= r.bartau);
            assert!(r.tau2 <= r.bartau);
            assert!(r.delta_star > 0.0 && r.delta_star < 1.0);
        }
        assert!(phase_table(&[1.0, 0.5]).is_err());
        assert!(phase_table(&[0.5, 2.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn rate_is_minus_tau1_log2(k in 1e-6f64..=2.0) {
                prop_assert!((tau1(m(k)) * LN_2 + rate_opnorm(k).unwrap()).abs() <= 1e-12);
            }

            #[test]
            fn classify_monotone_in_tau(t in 0.0f64..10.0, dt in 0.0f64..5.0) {
                // curve values at κ = 1
                let (t1, t2, tf) = (0.128_055, 5.67, 0.158_203);
                let a = classify_with(t1, t2, tf, t).unwrap().region;
                let b = classify_with(t1, t2, tf, t + dt).unwrap().region;
                prop_assert!(b >= a);
            }
        }
    }
}

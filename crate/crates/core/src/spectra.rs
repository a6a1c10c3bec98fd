//! The equilibrium density ρ_κ of the norm-constrained GOE, its Stieltjes and
//! Hilbert transforms, the log-energy Σ and the functional I, together with
//! a Tricomi-inversion reconstruction used as an independent oracle.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{domain, Result};
use crate::quadrature::{adaptive, gauss_chebyshev_nodes, QuadratureContext};

/// Absolute tolerance of the adaptive principal-value integrals.
pub const PV_TOL: f64 = 1e-12;
/// Default number of θ-cells for Σ.
pub const SIGMA_CELLS: usize = 2000;

/// A probability density on a symmetric interval [-a, a].
pub trait Density: Sync {
    fn half_width(&self) -> f64;
    /// Density at `x`; zero outside the support.
    fn pdf(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
}

/// ρ_κ(x) = (4 + κ² − 2x²) / (4π √(κ² − x²)) on (−κ, κ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensity {
    kappa: f64,
}

impl SpectralDensity {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 2.0) {
            return domain(format!("kappa must lie in (0, 2], got {kappa}"));
        }
        Ok(Self { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// ρ_κ(κ sin θ) · κ cos θ, the density in θ. Bounded on [−π/2, π/2].
    pub fn theta_weight(&self, theta: f64) -> f64 {
        let k2 = self.kappa * self.kappa;
        let s = theta.sin();
        (4.0 + k2 - 2.0 * k2 * s * s) / (4.0 * PI)
    }
}

impl Density for SpectralDensity {
    fn half_width(&self) -> f64 {
        self.kappa
    }

    fn pdf(&self, x: f64) -> f64 {
        let k = self.kappa;
        if x.abs() >= k {
            return 0.0;
        }
        (4.0 + k * k - 2.0 * x * x) / (4.0 * PI * ((k - x) * (k + x)).sqrt())
    }

    fn cdf(&self, x: f64) -> f64 {
        let k = self.kappa;
        if x <= -k {
            return 0.0;
        }
        if x >= k {
            return 1.0;
        }
        let t = (x / k).asin();
        0.5 + (4.0 * t + k * k * t.sin() * t.cos()) / (4.0 * PI)
    }
}

/// Uniform density on [-a, a].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformDensity {
    pub half_width: f64,
}

impl Density for UniformDensity {
    fn half_width(&self) -> f64 {
        self.half_width
    }

    fn pdf(&self, x: f64) -> f64 {
        if x.abs() <= self.half_width {
            0.5 / self.half_width
        } else {
            0.0
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        ((x + self.half_width) / (2.0 * self.half_width)).clamp(0.0, 1.0)
    }
}

pub fn rho_kappa(kappa: f64, x: f64) -> Result<f64> {
    let rho = SpectralDensity::new(kappa)?;
    if !(x.abs() < kappa) {
        return domain(format!("rho_kappa needs |x| < kappa = {kappa}, got {x}"));
    }
    Ok(rho.pdf(x))
}

/// Square root with `Im √w ≥ 0`.
fn sqrt_upper(w: Complex64) -> Complex64 {
    let r = w.sqrt();
    if r.im < 0.0 {
        -r
    } else {
        r
    }
}

/// G(z) = ∫ ρ_κ(y)/(z − y) dy in closed form, for Im z > 0.
pub fn stieltjes_kappa(kappa: f64, z: Complex64) -> Result<Complex64> {
    SpectralDensity::new(kappa)?;
    if !(z.im > 0.0) {
        return domain(format!("stieltjes transform needs Im z > 0, got {z}"));
    }
    let k2 = kappa * kappa;
    let root = sqrt_upper(z * z - k2);
    Ok(z / 2.0 + (4.0 + k2 - 2.0 * z * z) / (4.0 * root))
}

/// G(z) by adaptive quadrature in θ.
pub fn stieltjes_quadrature(kappa: f64, z: Complex64, tol: f64) -> Result<Complex64> {
    let rho = SpectralDensity::new(kappa)?;
    let kernel = |t: f64| rho.theta_weight(t) / (z - kappa * t.sin());
    let re = adaptive(|t| kernel(t).re, -FRAC_PI_2, FRAC_PI_2, tol)?;
    let im = adaptive(|t| kernel(t).im, -FRAC_PI_2, FRAC_PI_2, tol)?;
    Ok(Complex64::new(re, im))
}

/// PV ∫_{-a}^{a} φ(y)/(x − y) dy by singularity subtraction.
///
/// `w(θ)` is `φ(a sin θ) · a cos θ` and `phi_x` is `φ(x)`. The subtracted
/// piece integrates to `φ(x) log((a + x)/(a − x))`; the remainder is regular
/// and is integrated in θ, split at the image of `x`.
pub(crate) fn principal_value<W: Fn(f64) -> f64>(a: f64, x: f64, phi_x: f64, w: W) -> Result<f64> {
    let tx = (x / a).asin();
    let g = |t: f64| (w(t) - phi_x * a * t.cos()) / (x - a * t.sin());
    let left = adaptive(g, -FRAC_PI_2, tx, PV_TOL)?;
    let right = adaptive(g, tx, FRAC_PI_2, PV_TOL)?;
    Ok(left + right + phi_x * ((a + x) / (a - x)).ln())
}

/// PV ∫ ρ_κ(y)/(x − y) dy; equals x/2 on (−κ, κ).
pub fn pv_hilbert(kappa: f64, x: f64) -> Result<f64> {
    let rho = SpectralDensity::new(kappa)?;
    if !(x.abs() < kappa) {
        return domain(format!("pv_hilbert needs |x| < kappa = {kappa}, got {x}"));
    }
    principal_value(kappa, x, rho.pdf(x), |t| rho.theta_weight(t))
}

/// ∫ x² ρ_κ(x) dx = κ²(8 − κ²)/16.
pub fn second_moment_rho(kappa: f64) -> f64 {
    kappa * kappa * (8.0 - kappa * kappa) / 16.0
}

/// F(u) = u² log|u| / 2 − 3u²/4; its mixed second difference over a pair
/// of intervals is the exact integral of log|x − y| over the rectangle.
fn log_kernel_primitive(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        let u2 = u * u;
        0.5 * u2 * u.abs().ln() - 0.75 * u2
    }
}

/// Σ(μ) = ∬ log|x − y| μ(dx) μ(dy) with the default cell count.
pub fn entropy_sigma<D: Density + ?Sized>(density: &D) -> f64 {
    entropy_sigma_with(density, SIGMA_CELLS)
}

/// Σ(μ) on `cells` cells uniform in θ (`x = a sin θ`), density constant on
/// each cell with the exact cell mass from the CDF. Every cell pair,
/// including the diagonal, uses the exact rectangle integral of the log
/// kernel, so the diagonal singularity needs no special treatment.
pub fn entropy_sigma_with<D: Density + ?Sized>(density: &D, cells: usize) -> f64 {
    use rayon::prelude::*;
    let a = density.half_width();
    let edges: Vec<f64> = (0..=cells).map(|k| a * (-FRAC_PI_2 + PI * k as f64 / cells as f64).sin()).collect();
    let heights: Vec<f64> = edges.windows(2).map(|e| (density.cdf(e[1]) - density.cdf(e[0])) / (e[1] - e[0])).collect();
    (0..cells)
        .into_par_iter()
        .map(|k| {
            let (xa, xb) = (edges[k], edges[k + 1]);
            let mut row = 0.0;
            for l in 0..cells {
                let (yc, yd) = (edges[l], edges[l + 1]);
                let j = log_kernel_primitive(xb - yc) - log_kernel_primitive(xa - yc) - log_kernel_primitive(xb - yd)
                    + log_kernel_primitive(xa - yd);
                row += heights[l] * j;
            }
            heights[k] * row
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// ∫ x² μ(dx) by θ-substituted Gauss–Legendre.
pub fn second_moment<D: Density + ?Sized>(density: &D, ctx: &QuadratureContext) -> f64 {
    ctx.integrate(density.half_width(), |x| x * x * density.pdf(x))
}

/// I(μ) = −½Σ(μ) + ¼∫x²μ(dx) − 3/8.
pub fn energy_i<D: Density + ?Sized>(density: &D) -> f64 {
    let ctx = QuadratureContext::default();
    -0.5 * entropy_sigma(density) + 0.25 * second_moment(density, &ctx) - 0.375
}

/// Closed-form E_κ = −κ⁴/128 + κ²/8 − ½ log(κ/2) − 3/8.
pub fn energy_closed_form(kappa: f64) -> f64 {
    -kappa.powi(4) / 128.0 + kappa * kappa / 8.0 - 0.5 * (kappa / 2.0).ln() - 0.375
}

/// Reconstruction of the equilibrium density on [−κ, κ] by Tricomi's
/// inversion of the finite Hilbert transform equation PV ∫ρ/(x−y) = x/2:
///
/// ρ(x) = [C − (1/π) PV ∫ √(κ²−y²) (y/2)/(x − y) dy] / (π √(κ² − x²)),
///
/// with C fixed by requiring unit mass.
#[derive(Debug, Clone, Copy)]
pub struct TricomiOracle {
    kappa: f64,
    c: f64,
}

impl TricomiOracle {
    /// Chebyshev nodes used to fix the normalization constant.
    pub const NORMALIZATION_NODES: usize = 32;

    pub fn new(kappa: f64) -> Result<Self> {
        SpectralDensity::new(kappa)?;
        let mut oracle = Self { kappa, c: 0.0 };
        // ∫ ρ = C − (1/π²) ∫_0^π PV(κ cos t) dt
        let n = Self::NORMALIZATION_NODES;
        let mut acc = 0.0;
        for t in gauss_chebyshev_nodes(n) {
            acc += oracle.hilbert_term(kappa * t)?;
        }
        oracle.c = 1.0 + acc * PI / n as f64 / (PI * PI);
        Ok(oracle)
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    fn hilbert_term(&self, x: f64) -> Result<f64> {
        let k = self.kappa;
        let phi_x = ((k - x) * (k + x)).sqrt() * x / 2.0;
        principal_value(k, x, phi_x, |t| {
            let c = t.cos();
            k * c * (k * t.sin() / 2.0) * k * c
        })
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        let k = self.kappa;
        if !(x.abs() < k) {
            return domain(format!("tricomi density needs |x| < kappa = {k}, got {x}"));
        }
        let pv = self.hilbert_term(x)?;
        Ok((self.c - pv / PI) / (PI * ((k - x) * (k + x)).sqrt()))
    }
}

pub fn tricomi_density(kappa: f64, x: f64) -> Result<f64> {
    TricomiOracle::new(kappa)?.density(x)
}


#[cfg(test)]
mod invariants {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn density_symmetric_and_cdf_monotone(k in 0.05f64..=2.0, u in -1.0f64..1.0, v in -1.0f64..1.0) {
            let rho = SpectralDensity::new(k).unwrap();
            let (x, y) = (k * u.min(v), k * u.max(v));
            prop_assert!(rho.pdf(x) >= 0.0);
            prop_assert!((rho.pdf(x) - rho.pdf(-x)).abs() <= 1e-12 * (1.0 + rho.pdf(x)));
            prop_assert!(rho.cdf(x) <= rho.cdf(y) + 1e-14);
            prop_assert!((rho.cdf(x) + rho.cdf(-x) - 1.0).abs() <= 1e-10);
            prop_assert_eq!(rho.pdf(1.01 * k + 1e-9), 0.0);
        }
    }
}

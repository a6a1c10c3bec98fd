//! Monte-Carlo estimates and the small amount of statistics needed to
//! attach error bars to them.

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

/// A Monte-Carlo scalar estimate with its standard error.
///
/// `stderr` is the sample standard deviation of the `n_samples` underlying
/// observations divided by `sqrt(n_samples)`. For correlated chains the
/// observations are batch means, for ratio estimators they are jackknife
/// pseudo-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: Option<RngStream>,
}

impl McEstimate {
    pub fn new(mean: f64, stderr: f64, n_samples: u64) -> Self {
        Self { mean, stderr, n_samples, seed: None }
    }

    pub fn with_seed(mut self, seed: RngStream) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = mean(xs);
        let stderr = if n >= 2 { (sample_variance(xs) / n as f64).sqrt() } else { f64::INFINITY };
        Self::new(mean, stderr, n as u64)
    }

    /// `(self - other) / sqrt(se1^2 + se2^2)`.
    pub fn z_score(&self, other: &McEstimate) -> f64 {
        let se = self.stderr.hypot(other.stderr);
        if se == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY.copysign(self.mean - other.mean)
            }
        } else {
            (self.mean - other.mean) / se
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { mean: self.mean * c, stderr: self.stderr * c.abs(), ..*self }
    }

    pub fn relative_error_to(&self, target: f64) -> f64 {
        ((self.mean - target) / target).abs()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Splits a series into `n_batches` contiguous batches and returns the batch
/// means. Trailing observations that do not fill a batch are dropped.
pub fn batch_means(xs: &[f64], n_batches: usize) -> Vec<f64> {
    let n_batches = n_batches.max(1).min(xs.len().max(1));
    let size = xs.len() / n_batches;
    if size == 0 {
        return Vec::new();
    }
    xs.chunks_exact(size).take(n_batches).map(mean).collect()
}

/// Delete-one jackknife for a smooth function of column means.
///
/// `rows[k]` holds the observation vector of unit `k` (an instance, a batch).
/// Returns the full-sample value of `f` and its jackknife standard error.
pub fn jackknife<F>(rows: &[Vec<f64>], f: F) -> McEstimate
where
    F: Fn(&[f64]) -> f64,
{
    let n = rows.len();
    assert!(n >= 2, "jackknife needs at least two units");
    let width = rows[0].len();
    let mut totals = vec![0.0; width];
    for row in rows {
        for (t, x) in totals.iter_mut().zip(row) {
            *t += x;
        }
    }
    let full_means: Vec<f64> = totals.iter().map(|t| t / n as f64).collect();
    let full = f(&full_means);
    let mut leave_one = Vec::with_capacity(n);
    let mut buf = vec![0.0; width];
    for row in rows {
        for ((b, t), x) in buf.iter_mut().zip(&totals).zip(row) {
            *b = (t - x) / (n - 1) as f64;
        }
        leave_one.push(f(&buf));
    }
    let m = mean(&leave_one);
    let var = leave_one.iter().map(|x| (x - m) * (x - m)).sum::<f64>() * (n - 1) as f64 / n as f64;
    McEstimate::new(full, var.sqrt(), n as u64)
}

/// Integrated autocorrelation time with Sokal's self-consistent window
/// (`c = 5`). Returns 1 for series too short to say anything.
pub fn integrated_autocorr_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 8 {
        return 1.0;
    }
    let m = mean(xs);
    let c0 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = xs[..n - lag].iter().zip(&xs[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_matches_definition() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let e = McEstimate::from_samples(&xs);
        assert_eq!(e.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((e.stderr - sd / 2.0).abs() < 1e-15);
        assert_eq!(e.n_samples, 4);
    }

    #[test]
    fn single_sample_has_no_finite_stderr() {
        assert!(McEstimate::from_samples(&[1.0]).stderr.is_infinite());
    }

    #[test]
    fn jackknife_of_mean_is_classical_stderr() {
        let xs = [0.3, 1.7, 2.2, -0.4, 5.0, 0.9];
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
        let jk = jackknife(&rows, |m| m[0]);
        let cl = McEstimate::from_samples(&xs);
        assert!((jk.mean - cl.mean).abs() < 1e-14);
        assert!((jk.stderr - cl.stderr).abs() < 1e-12);
    }

    #[test]
    fn batch_means_drop_remainder() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(batch_means(&xs, 3), vec![1.0, 4.0, 7.0]);
    }

    #[test]
    fn ar1_autocorr_time() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        // tau = (1 + rho) / (1 - rho) = 3 for rho = 1/2
        let mut rng = RngStream::new(11, 0).rng();
        let mut x = 0.0;
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                x = 0.5 * x + e;
                x
            })
            .collect();
        let tau = integrated_autocorr_time(&xs);
        assert!((tau - 3.0).abs() < 0.3, "tau = {tau}");
    }
}

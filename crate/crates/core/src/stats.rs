//! Sampling and small statistics used by the ensemble modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::{Real, Vec3};

/// Deterministic generator for a user seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` isotropic normal offsets of standard deviation `sigma` on the first `dim` axes.
pub fn gaussian_offsets<T: Real>(n: usize, sigma: T, dim: usize, seed: u64) -> Vec<Vec3<T>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let mut x = [T::zero(); 3];
            for xa in x.iter_mut().take(dim) {
                let z: f64 = StandardNormal.sample(&mut r);
                *xa = T::lit(z) * sigma;
            }
            x
        })
        .collect()
}

/// Mean and (population) standard deviation.
pub fn mean_std<T: Real>(xs: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Silverman's rule-of-thumb bandwidth factor `(4 / (d + 2))^(1/(d+4)) n^(-1/(d+4))`,
/// to be multiplied by the per-axis standard deviation.
pub fn silverman_factor(n: usize, dim: usize) -> f64 {
    let d = dim as f64;
    (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * (n as f64).powf(-1.0 / (d + 4.0))
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Piecewise-linear CDF of a density tabulated on uniformly spaced nodes.
///
/// Each node carries the mass of its cell `[x - h/2, x + h/2)`; the result is
/// normalized so that it reaches one at the last cell edge.
pub struct TabulatedCdf {
    lower: f64,
    spacing: f64,
    cumulative: Vec<f64>,
}

impl TabulatedCdf {
    pub fn new(first_node: f64, spacing: f64, density: &[f64]) -> Self {
        let total: f64 = density.iter().sum();
        let mut cumulative = Vec::with_capacity(density.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for d in density {
            acc += d / total;
            cumulative.push(acc);
        }
        TabulatedCdf {
            lower: first_node - 0.5 * spacing,
            spacing,
            cumulative,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.lower) / self.spacing;
        if u <= 0.0 {
            return 0.0;
        }
        let i = u.floor() as usize;
        if i + 1 >= self.cumulative.len() {
            return 1.0;
        }
        let f = u - i as f64;
        self.cumulative[i] * (1.0 - f) + self.cumulative[i + 1] * f
    }
}

/// Ordinary least-squares line `y = a + b x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::param("fit", "abscissa and ordinate lengths differ"));
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples { got: x.len(), need: 2 });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::param("fit", "abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = if x.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LineFit {
        intercept,
        slope,
        slope_stderr,
        rms_residual: (ssr / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn offsets_are_reproducible_and_scaled() {
        let a = gaussian_offsets(10_000, 2.0f64, 2, 7);
        let b = gaussian_offsets(10_000, 2.0f64, 2, 7);
        assert_eq!(a, b);
        let xs: Vec<f64> = a.iter().map(|x| x[0]).collect();
        let (m, s) = mean_std(&xs);
        assert!(m.abs() < 4.0 * 2.0 / 100.0);
        assert!((s - 2.0).abs() < 0.04);
        assert!(a.iter().all(|x| x[2] == 0.0));
    }

    #[test]
    fn ks_against_own_distribution_is_small() {
        let xs: Vec<f64> = gaussian_offsets(4000, 1.0f64, 1, 3).iter().map(|x| x[0]).collect();
        let n = Normal::new(0.0, 1.0).unwrap();
        let d = ks_statistic(&xs, |x| n.cdf(x));
        assert!(d < 1.36 / (4000f64).sqrt() * 1.5, "{d}");
        let shifted = ks_statistic(&xs, |x| n.cdf(x - 1.0));
        assert!(shifted > 0.3);
    }

    #[test]
    fn two_sample_ks_matches_definition() {
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert!((ks_two_sample(&[0.0, 2.0], &[1.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tabulated_cdf_of_uniform_is_linear() {
        let cdf = TabulatedCdf::new(0.5, 1.0, &[1.0; 4]);
        assert_eq!(cdf.eval(0.0), 0.0);
        assert!((cdf.eval(2.0) - 0.5).abs() < 1e-15);
        assert!((cdf.eval(3.0) - 0.75).abs() < 1e-15);
        assert_eq!(cdf.eval(9.0), 1.0);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 2.0 * v).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && (f.intercept - 1.5).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-14);
    }
}

//! Scalar summaries of one series and similarity scores between two.
//!
//! Variances here use the population (n) denominator.

use rustfft::{num_complex::Complex, FftPlanner};

use super::stats::{check_finite, diff, mean, pearson, range};
use crate::error::{Error, Result};

fn require_len(x: &[f64], needed: usize, what: &'static str) -> Result<()> {
    if x.len() < needed {
        return Err(Error::TooShort {
            what,
            needed,
            got: x.len(),
        });
    }
    check_finite(x, what)
}

fn degenerate(what: &str) -> Error {
    Error::DegenerateVariance(format!("{what} is undefined for a constant series"))
}

pub fn population_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> Result<f64> {
    require_len(x, 3, "variance")?;
    Ok(population_variance(x))
}

/// `sqrt(var(dx) / var(x))`.
pub fn hjorth_mobility(x: &[f64]) -> Result<f64> {
    require_len(x, 3, "Hjorth mobility")?;
    mobility_unchecked(x)
}

fn mobility_unchecked(x: &[f64]) -> Result<f64> {
    let v = population_variance(x);
    if v <= 0.0 {
        return Err(degenerate("Hjorth mobility"));
    }
    Ok((population_variance(&diff(x)) / v).sqrt())
}

/// `mobility(dx) / mobility(x)`.
pub fn hjorth_complexity(x: &[f64]) -> Result<f64> {
    require_len(x, 4, "Hjorth complexity")?;
    let m = mobility_unchecked(x)?;
    let md = mobility_unchecked(&diff(x))?;
    if m <= 0.0 {
        return Err(degenerate("Hjorth complexity"));
    }
    Ok(md / m)
}

/// Mean absolute first difference.
pub fn smoothness(x: &[f64]) -> Result<f64> {
    require_len(x, 3, "smoothness")?;
    let d = diff(x);
    Ok(d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64)
}

/// Sum of absolute first differences of `x` over the variance of `observed`.
pub fn weighted_smoothness(x: &[f64], observed: &[f64]) -> Result<f64> {
    require_len(x, 3, "weighted smoothness")?;
    require_len(observed, 3, "weighted smoothness")?;
    let v = population_variance(observed);
    if v <= 0.0 {
        return Err(degenerate("weighted smoothness"));
    }
    Ok(diff(x).iter().map(|d| d.abs()).sum::<f64>() / v)
}

/// Power `|X_k|^2` of the mean-removed series for `k = 1..=n/2`.
fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf[1..=x.len() / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Frequency in cycles per sample (`k / n`) of the largest non-DC spectral
/// magnitude; the lowest such `k` wins ties.
pub fn dominant_frequency(x: &[f64]) -> Result<f64> {
    require_len(x, 3, "dominant frequency")?;
    let p = power_spectrum(x);
    let (mut best_k, mut best) = (0usize, 0.0);
    for (i, v) in p.iter().enumerate() {
        if *v > best {
            best = *v;
            best_k = i + 1;
        }
    }
    if best_k == 0 {
        return Err(degenerate("dominant frequency"));
    }
    Ok(best_k as f64 / x.len() as f64)
}

/// Shannon entropy (natural log) of the normalized non-DC power spectrum.
pub fn spectral_entropy(x: &[f64]) -> Result<f64> {
    require_len(x, 3, "spectral entropy")?;
    let p = power_spectrum(x);
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Err(degenerate("spectral entropy"));
    }
    Ok(p.iter()
        .filter(|v| **v > 0.0)
        .map(|v| {
            let q = v / total;
            -q * q.ln()
        })
        .sum::<f64>()
        .max(0.0))
}

/// Pearson correlation of `x[..n-1]` with `x[1..]`.
pub fn autocorrelation(x: &[f64]) -> Result<f64> {
    require_len(x, 3, "autocorrelation")?;
    let n = x.len();
    pearson(&x[..n - 1], &x[1..])
}

/// Lag-1 partial autocorrelation from the Yule-Walker equations with the
/// adjusted (n - k) autocovariance estimator.
pub fn partial_autocorrelation(x: &[f64]) -> Result<f64> {
    require_len(x, 4, "partial autocorrelation")?;
    let n = x.len();
    let m = mean(x);
    let c0 = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return Err(degenerate("partial autocorrelation"));
    }
    let c1 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (n - 1) as f64;
    Ok(c1 / c0)
}

/// Absolute least-squares slope against the sample index.
pub fn trend_strength(x: &[f64]) -> Result<f64> {
    require_len(x, 3, "trend strength")?;
    let n = x.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = mean(x);
    let (mut sxy, mut stt) = (0.0, 0.0);
    for (t, v) in x.iter().enumerate() {
        let dt = t as f64 - tm;
        sxy += dt * (v - xm);
        stt += dt * dt;
    }
    Ok((sxy / stt).abs())
}

/// Strict local maxima.
pub fn peaks(x: &[f64]) -> Result<f64> {
    require_len(x, 3, "peaks")?;
    Ok(x.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count() as f64)
}

/// Strict local minima.
pub fn troughs(x: &[f64]) -> Result<f64> {
    require_len(x, 3, "troughs")?;
    Ok(x.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count() as f64)
}

fn require_pair(pred: &[f64], obs: &[f64], needed: usize, what: &'static str) -> Result<()> {
    if pred.len() != obs.len() {
        return Err(Error::Dimension(format!(
            "{what}: predicted has {} points, observed {}",
            pred.len(),
            obs.len()
        )));
    }
    require_len(pred, needed, what)?;
    require_len(obs, needed, what)
}

fn observed_range(obs: &[f64], what: &str) -> Result<f64> {
    let r = range(obs);
    if r <= 0.0 {
        return Err(degenerate(what));
    }
    Ok(r)
}

pub fn correlation(pred: &[f64], obs: &[f64]) -> Result<f64> {
    require_pair(pred, obs, 3, "correlation")?;
    pearson(pred, obs)
}

pub fn mse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    require_pair(pred, obs, 3, "MSE")?;
    Ok(pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum::<f64>() / pred.len() as f64)
}

/// `1 - SS_res / SS_tot` with the observed series as reference.
pub fn r_squared(pred: &[f64], obs: &[f64]) -> Result<f64> {
    require_pair(pred, obs, 3, "R-squared")?;
    let m = mean(obs);
    let ss_tot: f64 = obs.iter().map(|o| (o - m) * (o - m)).sum();
    if ss_tot <= 0.0 {
        return Err(degenerate("R-squared"));
    }
    let ss_res: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn derivative_gaps(pred: &[f64], obs: &[f64]) -> Vec<f64> {
    diff(pred).iter().zip(diff(obs)).map(|(p, o)| p - o).collect()
}

/// `sum |d pred - d obs| / range(obs)`.
pub fn norm_sum_derivative_error(pred: &[f64], obs: &[f64]) -> Result<f64> {
    require_pair(pred, obs, 3, "normalized sum derivative error")?;
    let r = observed_range(obs, "normalized sum derivative error")?;
    Ok(derivative_gaps(pred, obs).iter().map(|g| g.abs()).sum::<f64>() / r)
}

/// `var(d pred - d obs) / range(obs)`.
pub fn variance_derivative_error(pred: &[f64], obs: &[f64]) -> Result<f64> {
    require_pair(pred, obs, 3, "variance derivative error")?;
    let r = observed_range(obs, "variance derivative error")?;
    Ok(population_variance(&derivative_gaps(pred, obs)) / r)
}

pub fn variance_difference(pred: &[f64], obs: &[f64]) -> Result<f64> {
    require_pair(pred, obs, 3, "variance difference")?;
    Ok((population_variance(pred) - population_variance(obs)).abs())
}

/// Variance difference over `range(obs)`.
pub fn norm_variance_difference(pred: &[f64], obs: &[f64]) -> Result<f64> {
    require_pair(pred, obs, 3, "normalized variance difference")?;
    let r = observed_range(obs, "normalized variance difference")?;
    Ok((population_variance(pred) - population_variance(obs)).abs() / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sine(n: usize, cycles: f64) -> Vec<f64> {
        (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * cycles * t as f64 / n as f64).sin())
            .collect()
    }

    #[test]
    fn ramp() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        assert!((trend_strength(&x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(peaks(&x).unwrap(), 0.0);
        assert_eq!(troughs(&x).unwrap(), 0.0);
        assert_eq!(smoothness(&x).unwrap(), 1.0);
    }

    #[test]
    fn sinusoid_spectrum() {
        let x = sine(256, 8.0);
        assert!((dominant_frequency(&x).unwrap() - 8.0 / 256.0).abs() < 1e-15);
        // a single spectral line has (near) zero entropy
        assert!(spectral_entropy(&x).unwrap() < 1e-9);
        // flat spectrum approaches ln(n/2)
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut rng)).collect();
        let h = spectral_entropy(&w).unwrap();
        assert!(h > (2048f64).ln() - 1.0 && h <= (2048f64).ln());
    }

    #[test]
    fn mobility_grows_with_frequency() {
        let mut last = 0.0;
        for cycles in [2.0, 4.0, 8.0, 16.0, 32.0] {
            let m = hjorth_mobility(&sine(512, cycles)).unwrap();
            assert!(m > last);
            last = m;
        }
        // for a dense sinusoid mobility is close to the angular step
        let m = hjorth_mobility(&sine(4096, 16.0)).unwrap();
        let w = 2.0 * std::f64::consts::PI * 16.0 / 4096.0;
        assert!((m - w).abs() / w < 1e-3);
        // complexity of a pure sinusoid is 1
        assert!((hjorth_complexity(&sine(4096, 16.0)).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ar1_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = vec![0.0; 5000];
        for t in 1..5000 {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = 0.7 * x[t - 1] + e;
        }
        assert!((autocorrelation(&x).unwrap() - 0.7).abs() < 0.05);
        assert!((partial_autocorrelation(&x).unwrap() - 0.7).abs() < 0.05);
    }

    #[test]
    fn strict_extrema() {
        let x = [0.0, 2.0, 1.0, 1.0, 3.0, 3.0, 0.0, -1.0, 4.0];
        assert_eq!(peaks(&x).unwrap(), 1.0);
        assert_eq!(troughs(&x).unwrap(), 1.0);
    }

    #[test]
    fn identical_pairs() {
        let x = sine(64, 3.0);
        assert!((correlation(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert_eq!(r_squared(&x, &x).unwrap(), 1.0);
        assert_eq!(norm_sum_derivative_error(&x, &x).unwrap(), 0.0);
        assert_eq!(variance_derivative_error(&x, &x).unwrap(), 0.0);
        assert_eq!(variance_difference(&x, &x).unwrap(), 0.0);
        assert_eq!(norm_variance_difference(&x, &x).unwrap(), 0.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((correlation(&neg, &x).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_pairs() {
        let x = sine(64, 3.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.5).collect();
        assert!((mse(&shifted, &x).unwrap() - 0.25).abs() < 1e-12);
        assert!(norm_sum_derivative_error(&shifted, &x).unwrap() < 1e-12);
        assert!(variance_derivative_error(&shifted, &x).unwrap() < 1e-24);
    }

    #[test]
    fn hand_values() {
        let pred = [1.0, 3.0, 2.0, 6.0];
        let obs = [0.0, 1.0, 1.0, 4.0];
        // derivatives: pred [2,-1,4], obs [1,0,3]; gaps [1,-1,1]; range(obs) = 4
        assert!((norm_sum_derivative_error(&pred, &obs).unwrap() - 0.75).abs() < 1e-15);
        // var of gaps = 8/9, over 4
        assert!((variance_derivative_error(&pred, &obs).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        // var(pred) = 3.5, var(obs) = 2.25
        assert!((variance_difference(&pred, &obs).unwrap() - 1.25).abs() < 1e-15);
        assert!((norm_variance_difference(&pred, &obs).unwrap() - 0.3125).abs() < 1e-15);
        // sum |d pred| = 7 over var(obs)
        assert!((weighted_smoothness(&pred, &obs).unwrap() - 7.0 / 2.25).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(variance(&[1.0, 2.0]), Err(Error::TooShort { .. })));
        assert!(matches!(hjorth_complexity(&[1.0, 2.0, 0.0]), Err(Error::TooShort { .. })));
        assert!(matches!(hjorth_mobility(&[2.0; 5]), Err(Error::DegenerateVariance(_))));
        assert_eq!(variance(&[2.0; 5]).unwrap(), 0.0);
        assert!(matches!(mse(&[1.0; 4], &[1.0; 5]), Err(Error::Dimension(_))));
        assert!(matches!(r_squared(&[1.0, 2.0, 3.0], &[2.0; 3]), Err(Error::DegenerateVariance(_))));
    }
}

//! Bivariate Granger causality from a VAR fitted by least squares.
//!
//! Both series are z-scored. The lag order is chosen by BIC over
//! `1..=max_lag` on the common sample that starts at `max_lag`, then each
//! direction is tested with a likelihood-ratio statistic
//! `n_eff * ln(RSS_restricted / RSS_unrestricted)` on the sample that starts
//! at the chosen lag. If levels yield a non-finite statistic the test is
//! repeated on first differences.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::stats::{diff, zscore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrangerConfig {
    pub max_lag: usize,
    /// Minimum number of rows in the lag-selection sample.
    pub min_effective: usize,
}

impl Default for GrangerConfig {
    fn default() -> Self {
        Self {
            max_lag: 12,
            min_effective: 34,
        }
    }
}

impl GrangerConfig {
    pub fn min_length(&self) -> usize {
        self.max_lag + self.min_effective
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcResult {
    /// Evidence that the first series helps predict the second.
    pub gc_1to2: f64,
    pub gc_2to1: f64,
    pub lag: usize,
    pub used_first_differences: bool,
}

impl GcResult {
    /// `|gc_1to2 - gc_2to1| / (gc_1to2 + gc_2to1)`, or `None` when both are zero
    /// or either is non-finite.
    pub fn asymmetry(&self) -> Option<f64> {
        let sum = self.gc_1to2 + self.gc_2to1;
        if !(sum > 0.0 && sum.is_finite()) {
            return None;
        }
        Some(((self.gc_1to2 - self.gc_2to1).abs() / sum).min(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcStrength {
    pub value: f64,
    /// Channels left out because their asymmetry is undefined.
    pub skipped: Vec<usize>,
}

pub fn granger(x: &[f64], y: &[f64]) -> Result<GcResult> {
    granger_with(x, y, &GrangerConfig::default())
}

/// Mean normalized asymmetry over channels.
pub fn gc_strength(per_channel: &[GcResult]) -> Result<GcStrength> {
    let mut skipped = Vec::new();
    let mut values = Vec::new();
    for (ch, r) in per_channel.iter().enumerate() {
        match r.asymmetry() {
            Some(v) => values.push(v),
            None => skipped.push(ch),
        }
    }
    if values.is_empty() {
        return Err(Error::UndefinedStrength);
    }
    Ok(GcStrength {
        value: values.iter().sum::<f64>() / values.len() as f64,
        skipped,
    })
}

pub fn granger_with(x: &[f64], y: &[f64], config: &GrangerConfig) -> Result<GcResult> {
    if config.max_lag < 1 {
        return Err(Error::Config("Granger maximum lag must be >= 1".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "Granger inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let need = config.min_length();
    if x.len() < need {
        return Err(Error::TooShort {
            what: "Granger causality",
            needed: need,
            got: x.len(),
        });
    }
    let levels = fit(x, y, config);
    match levels {
        Ok(r) if r.gc_1to2.is_finite() && r.gc_2to1.is_finite() => return Ok(r),
        Err(Error::DegenerateVariance(_)) => return levels,
        _ => {}
    }
    let (dx, dy) = (diff(x), diff(y));
    if dx.len() < need {
        return levels;
    }
    let r = fit(&dx, &dy, config)?;
    if r.gc_1to2.is_finite() && r.gc_2to1.is_finite() {
        Ok(GcResult {
            used_first_differences: true,
            ..r
        })
    } else {
        Err(Error::NonFinite("Granger statistic is not finite after differencing".into()))
    }
}

fn fit(x: &[f64], y: &[f64], config: &GrangerConfig) -> Result<GcResult> {
    let zx = zscore(x)?;
    let zy = zscore(y)?;
    let lag = select_lag(&zx, &zy, config.max_lag)?;
    // regressor blocks ordered [own lags, other lags]
    let x_given_y = lr_statistic(&zx, &zy, lag)?;
    let y_given_x = lr_statistic(&zy, &zx, lag)?;
    Ok(GcResult {
        gc_1to2: y_given_x,
        gc_2to1: x_given_y,
        lag,
        used_first_differences: false,
    })
}

/// Design with an intercept followed by lags `1..=p` of each series in `blocks`,
/// for target rows `start..n`.
fn design(blocks: &[&[f64]], p: usize, start: usize) -> DMatrix<f64> {
    let n = blocks[0].len();
    let rows = n - start;
    let cols = 1 + p * blocks.len();
    DMatrix::from_fn(rows, cols, |r, c| {
        if c == 0 {
            return 1.0;
        }
        let b = (c - 1) / p;
        let k = (c - 1) % p + 1;
        blocks[b][start + r - k]
    })
}

/// Least-squares residuals of each column of `targets` on `x`.
fn residuals(x: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    let tol = max * 1e-10 * (x.nrows().max(x.ncols()) as f64);
    if sv.iter().any(|s| *s <= tol) {
        return Err(Error::Singular("regression design is rank deficient".into()));
    }
    let beta = svd
        .solve(targets, tol)
        .map_err(|e| Error::Singular(e.to_string()))?;
    Ok(targets - x * beta)
}

fn select_lag(x: &[f64], y: &[f64], max_lag: usize) -> Result<usize> {
    let start = max_lag;
    let n_eff = (x.len() - start) as f64;
    let targets = DMatrix::from_fn(x.len() - start, 2, |r, c| if c == 0 { x[start + r] } else { y[start + r] });
    let mut best: Option<(f64, usize)> = None;
    for p in 1..=max_lag {
        let d = design(&[x, y], p, start);
        let Ok(e) = residuals(&d, &targets) else {
            continue;
        };
        let sigma = (e.transpose() * &e) / n_eff;
        let det = sigma.determinant();
        if !(det > 0.0 && det.is_finite()) {
            continue;
        }
        let params = (2 * (2 * p + 1)) as f64;
        let bic = det.ln() + n_eff.ln() * params / n_eff;
        if best.is_none_or(|(b, _)| bic < b) {
            best = Some((bic, p));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Singular("no lag order gives a non-singular VAR fit".into()))
}

/// Likelihood-ratio statistic for adding lags of `other` to an autoregression
/// of `target`.
fn lr_statistic(target: &[f64], other: &[f64], p: usize) -> Result<f64> {
    let rows = target.len() - p;
    let y = DMatrix::from_fn(rows, 1, |r, _| target[p + r]);
    let rss = |d: DMatrix<f64>| -> Result<f64> { Ok(residuals(&d, &y)?.norm_squared()) };
    let unrestricted = rss(design(&[target, other], p, p))?;
    let restricted = rss(design(&[target], p, p))?;
    if unrestricted <= 0.0 {
        return Ok(f64::NAN);
    }
    Ok((rows as f64 * (restricted / unrestricted).ln()).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn lagged_pair(n: usize, coef: f64, noise_sd: f64) -> (Vec<f64>, Vec<f64>) {
        let x = noise(1, n);
        let e = noise(2, n);
        let mut y = vec![0.0; n];
        for t in 1..n {
            y[t] = coef * x[t - 1] + noise_sd * e[t];
        }
        (x, y)
    }

    #[test]
    fn detects_one_way_dependence() {
        let (x, y) = lagged_pair(2000, 0.8, 0.3);
        let r = granger(&x, &y).unwrap();
        assert_eq!(r.lag, 1);
        assert!(!r.used_first_differences);
        assert!(r.gc_1to2 > 100.0 * r.gc_2to1.max(1.0), "{r:?}");
        let back = granger(&y, &x).unwrap();
        assert!((back.gc_1to2 - r.gc_2to1).abs() < 1e-9);
        assert!((back.gc_2to1 - r.gc_1to2).abs() < 1e-9);
    }

    #[test]
    fn shifted_copy_leads() {
        let x = noise(9, 300);
        let mut y = vec![0.0; 300];
        y[2..].copy_from_slice(&x[..298]);
        let e = noise(10, 300);
        for (v, n) in y.iter_mut().zip(&e) {
            *v += 0.05 * n;
        }
        let r = granger(&x, &y).unwrap();
        assert!(r.gc_1to2 > 10.0 * r.gc_2to1.max(1.0), "{r:?}");
    }

    #[test]
    fn independent_noise_gives_chi_square_sized_statistics() {
        // Under the null each statistic is roughly chi-square with `lag`
        // degrees of freedom.
        let mut ratio_sum = 0.0;
        let mut count = 0.0;
        for seed in 0..200u64 {
            let x = noise(1000 + seed, 200);
            let y = noise(5000 + seed, 200);
            let r = granger(&x, &y).unwrap();
            for stat in [r.gc_1to2, r.gc_2to1] {
                ratio_sum += stat / r.lag as f64;
                count += 1.0;
            }
        }
        let mean_ratio = ratio_sum / count;
        assert!((0.7..1.4).contains(&mean_ratio), "{mean_ratio}");
    }

    #[test]
    fn affine_rescaling_is_absorbed() {
        let (x, y) = lagged_pair(300, 0.5, 1.0);
        let sx: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let a = granger(&x, &y).unwrap();
        let b = granger(&sx, &y).unwrap();
        assert_eq!(a.lag, b.lag);
        assert!((a.gc_1to2 - b.gc_1to2).abs() < 1e-6);
        assert!((a.gc_2to1 - b.gc_2to1).abs() < 1e-6);
    }

    #[test]
    fn strength_examples() {
        let gc = |a, b| GcResult {
            gc_1to2: a,
            gc_2to1: b,
            lag: 1,
            used_first_differences: false,
        };
        assert_eq!(gc_strength(&[gc(3.0, 1.0)]).unwrap().value, 0.5);
        assert_eq!(gc_strength(&[gc(2.5, 2.5)]).unwrap().value, 0.0);
        assert_eq!(gc_strength(&[gc(4.0, 0.0)]).unwrap().value, 1.0);
        let mixed = gc_strength(&[gc(3.0, 1.0), gc(0.0, 0.0), gc(4.0, 0.0)]).unwrap();
        assert_eq!(mixed.value, 0.75);
        assert_eq!(mixed.skipped, vec![1]);
        assert!(matches!(gc_strength(&[gc(0.0, 0.0)]), Err(Error::UndefinedStrength)));
        assert_eq!(
            gc_strength(&[gc(3.0, 1.0)]).unwrap().value,
            gc_strength(&[gc(1.0, 3.0)]).unwrap().value
        );
    }

    #[test]
    fn lr_matches_closed_form_for_lag_one() {
        // Against a hand-rolled normal-equations fit.
        let x = noise(5, 80);
        let y = noise(6, 80);
        let p = 1;
        let stat = lr_statistic(&y, &x, p).unwrap();
        let rss = |cols: &[Vec<f64>], target: &[f64]| -> f64 {
            let k = cols.len();
            let mut a = vec![vec![0.0; k + 1]; k];
            for i in 0..k {
                for j in 0..k {
                    a[i][j] = cols[i].iter().zip(&cols[j]).map(|(u, v)| u * v).sum();
                }
                a[i][k] = cols[i].iter().zip(target).map(|(u, v)| u * v).sum();
            }
            for i in 0..k {
                let piv = a[i][i];
                for j in i..=k {
                    a[i][j] /= piv;
                }
                for r in 0..k {
                    if r != i {
                        let f = a[r][i];
                        for j in i..=k {
                            a[r][j] -= f * a[i][j];
                        }
                    }
                }
            }
            let beta: Vec<f64> = (0..k).map(|i| a[i][k]).collect();
            (0..target.len())
                .map(|t| {
                    let fit: f64 = (0..k).map(|i| beta[i] * cols[i][t]).sum();
                    (target[t] - fit).powi(2)
                })
                .sum()
        };
        let target: Vec<f64> = y[1..].to_vec();
        let ones = vec![1.0; 79];
        let ylag: Vec<f64> = y[..79].to_vec();
        let xlag: Vec<f64> = x[..79].to_vec();
        let u = rss(&[ones.clone(), ylag.clone(), xlag], &target);
        let r = rss(&[ones, ylag], &target);
        let expected = 79.0 * (r / u).ln();
        assert!((stat - expected).abs() < 1e-8, "{stat} vs {expected}");
    }

    #[test]
    fn length_and_shape_errors() {
        let x = noise(1, 45);
        assert!(matches!(granger(&x, &x), Err(Error::TooShort { .. })));
        assert!(matches!(granger(&x, &x[..40]), Err(Error::Dimension(_))));
        let flat = vec![1.0; 100];
        assert!(granger(&noise(3, 100), &flat).is_err());
    }

    #[test]
    fn identical_series_fall_back_or_fail_cleanly() {
        let x = noise(4, 120);
        match granger(&x, &x) {
            Ok(r) => assert!(r.gc_1to2.is_finite() && r.gc_2to1.is_finite()),
            Err(e) => assert!(matches!(e, Error::Singular(_) | Error::NonFinite(_))),
        }
    }
}

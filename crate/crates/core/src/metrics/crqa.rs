//! Cross-recurrence quantification analysis.
//!
//! Both series are z-scored and time-delay embedded. Point `(i, j)` is
//! recurrent when the Euclidean distance between embedded `x_i` and `y_j` is
//! at most `radius`. Diagonal lines are maximal runs of recurrent points along
//! `j - i = const`; every diagonal is scanned (cross-recurrence has no line of
//! identity to exclude).

use serde::{Deserialize, Serialize};

use super::stats::zscore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrqaConfig {
    pub embed_dim: usize,
    pub delay: usize,
    /// Threshold in z-score units.
    pub radius: f64,
    pub min_line: usize,
}

impl Default for CrqaConfig {
    fn default() -> Self {
        Self {
            embed_dim: 3,
            delay: 2,
            radius: 0.84,
            min_line: 2,
        }
    }
}

impl CrqaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 1 || self.delay < 1 {
            return Err(Error::Config("CRQA embedding dimension and delay must be >= 1".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("CRQA radius must be > 0, got {}", self.radius)));
        }
        if self.min_line < 2 {
            return Err(Error::Config("CRQA minimum line length must be >= 2".into()));
        }
        Ok(())
    }

    /// Shortest accepted input length, `embed_dim * delay + 1`.
    pub fn min_length(&self) -> usize {
        self.embed_dim * self.delay + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrqaMetrics {
    /// Recurrent points over all points of the cross-recurrence plot.
    pub rr: f64,
    /// Share of recurrent points on diagonal lines of length >= `min_line`.
    pub det: f64,
    /// Shannon entropy (natural log) of the length distribution of those lines.
    pub ent: f64,
    /// Longest diagonal line of length >= `min_line`, 0 if there is none.
    pub maxl: usize,
}

/// Row-major `points x dim` time-delay embedding.
pub fn embed(x: &[f64], dim: usize, delay: usize) -> Vec<f64> {
    let span = (dim - 1) * delay;
    if x.len() <= span {
        return Vec::new();
    }
    let points = x.len() - span;
    let mut out = Vec::with_capacity(points * dim);
    for i in 0..points {
        for k in 0..dim {
            out.push(x[i + k * delay]);
        }
    }
    out
}

pub fn crqa(x: &[f64], y: &[f64], config: &CrqaConfig) -> Result<CrqaMetrics> {
    config.validate()?;
    let need = config.min_length();
    for s in [x, y] {
        if s.len() < need {
            return Err(Error::TooShort {
                what: "CRQA",
                needed: need,
                got: s.len(),
            });
        }
    }
    let (zx, zy) = (zscore(x)?, zscore(y)?);
    let m = config.embed_dim;
    let ex = embed(&zx, m, config.delay);
    let ey = embed(&zy, m, config.delay);
    let (nx, ny) = (ex.len() / m, ey.len() / m);
    let r2 = config.radius;

    let recurrent = |i: usize, j: usize| -> bool {
        let a = &ex[i * m..(i + 1) * m];
        let b = &ey[j * m..(j + 1) * m];
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        d2.sqrt() <= r2
    };

    // histogram[l] = number of maximal diagonal lines of length l
    let mut histogram = vec![0usize; nx.min(ny) + 1];
    let mut points = 0usize;
    for offset in -(nx as isize - 1)..=(ny as isize - 1) {
        let (i0, j0) = if offset < 0 {
            ((-offset) as usize, 0)
        } else {
            (0, offset as usize)
        };
        let len = (nx - i0).min(ny - j0);
        let mut run = 0usize;
        for k in 0..len {
            if recurrent(i0 + k, j0 + k) {
                run += 1;
                points += 1;
            } else if run > 0 {
                histogram[run] += 1;
                run = 0;
            }
        }
        if run > 0 {
            histogram[run] += 1;
        }
    }
    Ok(summarize_lines(&histogram, points, nx * ny, config.min_line))
}

/// RR, DET, ENT and MaxL from a diagonal line-length histogram.
fn summarize_lines(histogram: &[usize], points: usize, total: usize, min_line: usize) -> CrqaMetrics {
    let rr = points as f64 / total as f64;
    let long = || histogram.iter().enumerate().skip(min_line).filter(|(_, &c)| c > 0);
    let on_lines: usize = long().map(|(l, &c)| l * c).sum();
    let lines: usize = long().map(|(_, &c)| c).sum();
    let det = if points == 0 {
        0.0
    } else {
        on_lines as f64 / points as f64
    };
    let ent = if lines == 0 {
        0.0
    } else {
        let total_lines = lines as f64;
        long()
            .map(|(_, &c)| {
                let p = c as f64 / total_lines;
                -p * p.ln()
            })
            .sum::<f64>()
            .max(0.0)
    };
    let maxl = long().map(|(l, _)| l).max().unwrap_or(0);
    CrqaMetrics { rr, det, ent, maxl }
}

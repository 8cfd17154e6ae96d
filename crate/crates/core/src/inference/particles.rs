use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::likelihood::{StepKernel, VarianceTable};
use crate::domain::{BehaviorFrame, ContextMatrix, DynamicsParams};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Particles per independently seeded chunk. Random draws are a function of
/// `(seed, timestep, chunk)` only, so results do not depend on thread count.
pub const CHUNK: usize = 4096;

/// A candidate context matrix with its normalized weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub matrix: ContextMatrix,
    pub weight: f64,
}

/// Outcome of one correction step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correction {
    /// Effective sample size `1 / sum(w^2)` after normalization.
    pub ess: f64,
    /// Every likelihood underflowed; weights were reset to uniform.
    pub underflow: bool,
}

/// Population of candidate context matrices stored as one flat row-major
/// buffer of `len * order^2` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    order: usize,
    matrices: Vec<f64>,
    weights: Vec<f64>,
    timestep: usize,
    seed: u64,
}

impl ParticleSet {
    /// `count` matrices with i.i.d. standard-normal entries and uniform
    /// weights. `epoch` separates re-initializations within one run.
    pub fn init(count: usize, order: usize, seed: u64, epoch: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("particle count must be >= 1".into()));
        }
        if order == 0 {
            return Err(Error::Config("matrix order must be >= 1".into()));
        }
        let d = order * order;
        let mut matrices = vec![0.0; count * d];
        matrices
            .par_chunks_mut(CHUNK * d)
            .enumerate()
            .for_each(|(chunk, buf)| {
                let mut r = rng::stream(seed, &[tag::PARTICLE_INIT, epoch, chunk as u64]);
                buf.iter_mut().for_each(|v| *v = r.sample(StandardNormal));
            });
        Ok(Self {
            order,
            matrices,
            weights: vec![1.0 / count as f64; count],
            timestep: 2,
            seed,
        })
    }

    /// Population from explicit matrices with uniform weights.
    pub fn from_matrices(matrices: &[ContextMatrix], seed: u64) -> Result<Self> {
        let first = matrices.first().ok_or(Error::EmptyInput("particle set"))?;
        let order = first.order();
        if matrices.iter().any(|m| m.order() != order) {
            return Err(Error::Dimension("particles must share one matrix order".into()));
        }
        let count = matrices.len();
        Ok(Self {
            order,
            matrices: matrices.iter().flat_map(|m| m.entries().iter().copied()).collect(),
            weights: vec![1.0 / count as f64; count],
            timestep: 2,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn raw_matrix(&self, i: usize) -> &[f64] {
        let d = self.order * self.order;
        &self.matrices[i * d..(i + 1) * d]
    }

    pub fn matrix(&self, i: usize) -> ContextMatrix {
        ContextMatrix::from_slice_unchecked(self.order, self.raw_matrix(i))
    }

    pub fn particle(&self, i: usize) -> Particle {
        Particle {
            matrix: self.matrix(i),
            weight: self.weights[i],
        }
    }

    /// Set weights proportional to the likelihood of the transition
    /// `b_prev -> b_obs`, normalized to sum to one.
    ///
    /// Weights are formed in log space with max subtraction. If no particle
    /// has a finite log-likelihood the weights fall back to uniform and the
    /// returned [`Correction`] reports the underflow.
    pub fn correct(
        &mut self,
        b_prev: &BehaviorFrame,
        b_obs: &BehaviorFrame,
        variances: &VarianceTable,
        params: &DynamicsParams,
    ) -> Result<Correction> {
        if b_prev.agents() != self.order {
            return Err(Error::Dimension(format!(
                "particles of order {} cannot explain frames with {} agents",
                self.order,
                b_prev.agents()
            )));
        }
        let kernel = StepKernel::new(b_prev, b_obs, variances, params)?;
        let d = self.order * self.order;
        self.weights
            .par_chunks_mut(CHUNK)
            .zip(self.matrices.par_chunks(CHUNK * d))
            .for_each(|(w, m)| {
                for (wi, c) in w.iter_mut().zip(m.chunks_exact(d)) {
                    let lw = kernel.log_weight(c);
                    *wi = if lw.is_nan() { f64::NEG_INFINITY } else { lw };
                }
            });
        Ok(normalize_log_weights(&mut self.weights))
    }

    /// Index of the highest-weight particle; ties go to the lowest index.
    pub fn map_index(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate().skip(1) {
            if *w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    pub fn map_matrix(&self) -> ContextMatrix {
        self.matrix(self.map_index())
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Systematic resampling: one uniform offset, `len` evenly spaced
    /// positions on the weight CDF. Weights are reset to uniform.
    pub fn resample(&mut self) {
        let n = self.len();
        let mut r = rng::stream(self.seed, &[tag::RESAMPLE, self.timestep as u64]);
        let u0: f64 = r.random::<f64>();
        let picks = systematic_indices(&self.weights, n, u0);
        let d = self.order * self.order;
        let mut next = vec![0.0; self.matrices.len()];
        for (dst, &src) in next.chunks_exact_mut(d).zip(&picks) {
            dst.copy_from_slice(&self.matrices[src * d..(src + 1) * d]);
        }
        self.matrices = next;
        self.weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
    }

    /// Perturb every entry with independent N(0, std^2) noise and advance the
    /// timestep: the result is the prior for the next transition.
    pub fn jitter(&mut self, std: f64) -> Result<()> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::Config(format!("jitter std must be finite and > 0, got {std}")));
        }
        let d = self.order * self.order;
        let (seed, t) = (self.seed, self.timestep as u64);
        self.matrices
            .par_chunks_mut(CHUNK * d)
            .enumerate()
            .for_each(|(chunk, buf)| {
                let mut r = rng::stream(seed, &[tag::JITTER, t, chunk as u64]);
                for v in buf.iter_mut() {
                    let z: f64 = r.sample(StandardNormal);
                    *v += std * z;
                }
            });
        self.timestep += 1;
        Ok(())
    }
}

/// Turn log-weights into normalized weights in place.
pub(crate) fn normalize_log_weights(weights: &mut [f64]) -> Correction {
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let u = 1.0 / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = u);
        return Correction {
            ess: weights.len() as f64,
            underflow: true,
        };
    }
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    let mut sq = 0.0;
    for w in weights.iter_mut() {
        *w /= total;
        sq += *w * *w;
    }
    Correction {
        ess: 1.0 / sq,
        underflow: false,
    }
}

/// Source indices chosen by systematic resampling with offset `u0 in [0, 1)`:
/// output `k` takes the particle whose CDF interval contains `(u0 + k) / n_out`.
pub fn systematic_indices(weights: &[f64], n_out: usize, u0: f64) -> Vec<usize> {
    let last = weights.len() - 1;
    let step = 1.0 / n_out as f64;
    let mut out = Vec::with_capacity(n_out);
    let mut cdf = weights[0];
    let mut j = 0;
    for k in 0..n_out {
        let pos = (u0 + k as f64) * step;
        while pos >= cdf && j < last {
            j += 1;
            cdf += weights[j];
        }
        out.push(j);
    }
    out
}

//! Sequential Bayesian inference of context matrices with a particle filter,
//! and the grid search over transition (jitter) standard deviations.
//!
//! Each transition `b_{t-1} -> b_t` runs three steps on the population:
//!
//! 1. correct: weight each particle by the likelihood of `b_t` given its
//!    prediction from `b_{t-1}`, normalized across the population;
//! 2. resample: systematic resampling on the new weights;
//! 3. predict: jitter every particle with N(0, sigma^2) per entry.
//!
//! The MAP matrix `C*_t` is read after correction and before resampling.

mod likelihood;
mod particles;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use likelihood::{behavior_variances, likelihood, log_likelihood, VarianceTable};
pub use particles::{systematic_indices, Correction, Particle, ParticleSet, CHUNK};

use crate::domain::{BehaviorFrame, BehaviorSeries, ContextMatrix, DynamicsParams};
use crate::dynamics::predict_step;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub const DEFAULT_PARTICLES: usize = 100_000;

/// Where the diagonal behavior covariance is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceScope {
    /// One table over every frame of the series.
    #[default]
    WholeSeries,
    /// One table per segment; a transition uses the table of its target frame.
    PerSegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub particles: usize,
    pub jitter_std: f64,
    pub params: DynamicsParams,
    /// Explicit behavior variances; estimated from the series when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<VarianceTable>,
    #[serde(default)]
    pub variance_scope: VarianceScope,
    /// Re-draw the prior at every segment start instead of carrying the
    /// posterior across segment boundaries.
    #[serde(default)]
    pub reset_at_segments: bool,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: DEFAULT_PARTICLES,
            jitter_std: 0.001,
            params: DynamicsParams::SIMULATION,
            variances: None,
            variance_scope: VarianceScope::WholeSeries,
            reset_at_segments: false,
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particle count must be >= 1".into()));
        }
        if !(self.jitter_std > 0.0 && self.jitter_std.is_finite()) {
            return Err(Error::Config(format!(
                "jitter std must be finite and > 0, got {}",
                self.jitter_std
            )));
        }
        self.params.validate()
    }
}

/// Output of one filter run at a fixed jitter std.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRun {
    pub jitter_std: f64,
    pub seed: u64,
    /// `C*_2 .. C*_T`: one matrix per transition, length `T - 1`.
    pub map_series: Vec<ContextMatrix>,
    /// `B*`: `b*_1 = b_1`, then each MAP matrix applied to the previous
    /// predicted frame. May contain non-finite values if the MAP dynamics
    /// are explosive.
    pub predicted: BehaviorSeries,
    /// Effective sample size after each correction, aligned with `map_series`.
    pub ess: Vec<f64>,
    /// Transitions (indices into `map_series`) where every likelihood underflowed.
    pub underflow_steps: Vec<usize>,
}

/// `B*` from a MAP series: `b*_1 = b_1`, `b*_t = predict_step(C*_t, b*_{t-1})`.
pub fn predicted_series(
    observed: &BehaviorSeries,
    map_series: &[ContextMatrix],
    params: &DynamicsParams,
) -> Result<BehaviorSeries> {
    if map_series.len() + 1 != observed.len() {
        return Err(Error::Dimension(format!(
            "{} MAP matrices cannot predict a series of {} frames",
            map_series.len(),
            observed.len()
        )));
    }
    let mut frames: Vec<BehaviorFrame> = Vec::with_capacity(observed.len());
    frames.push(observed.frame(0).clone());
    for c in map_series {
        let next = predict_step(c, frames.last().unwrap(), params)?;
        frames.push(next);
    }
    BehaviorSeries::new_unchecked(observed.agents().to_vec(), observed.channels().to_vec(), frames)?
        .with_segments(observed.segments().to_vec())
}

fn variance_tables(series: &BehaviorSeries, config: &FilterConfig) -> Result<Vec<VarianceTable>> {
    if let Some(v) = &config.variances {
        if v.agents != series.n_agents() || v.channels != series.n_channels() {
            return Err(Error::Dimension("configured variance table does not match series shape".into()));
        }
        return Ok(vec![v.clone(); series.segments().len()]);
    }
    match config.variance_scope {
        VarianceScope::WholeSeries => Ok(vec![behavior_variances(series)?; series.segments().len()]),
        VarianceScope::PerSegment => series
            .segments()
            .iter()
            .map(|s| behavior_variances(&series.slice(s.range())?))
            .collect(),
    }
}

/// Run the particle filter over every transition of `series`.
pub fn run_filter(series: &BehaviorSeries, config: &FilterConfig) -> Result<InferenceRun> {
    config.validate()?;
    if series.len() < 2 {
        return Err(Error::TooShort {
            what: "inference",
            needed: 2,
            got: series.len(),
        });
    }
    let tables = variance_tables(series, config)?;
    let order = series.n_agents();
    let mut segment_of = vec![0usize; series.len()];
    for (k, s) in series.segments().iter().enumerate() {
        segment_of[s.range()].iter_mut().for_each(|x| *x = k);
    }

    let mut set = ParticleSet::init(config.particles, order, config.seed, 0)?;
    let steps = series.len() - 1;
    let mut map_series = Vec::with_capacity(steps);
    let mut ess = Vec::with_capacity(steps);
    let mut underflow_steps = Vec::new();

    for t in 1..series.len() {
        let seg = segment_of[t];
        if config.reset_at_segments && seg > 0 && series.segments()[seg].start == t {
            set = ParticleSet::init(config.particles, order, config.seed, seg as u64)?;
        }
        let c = set.correct(series.frame(t - 1), series.frame(t), &tables[seg], &config.params)?;
        if c.underflow {
            underflow_steps.push(t - 1);
        }
        ess.push(c.ess);
        map_series.push(set.map_matrix());
        if t + 1 < series.len() {
            set.resample();
            set.jitter(config.jitter_std)?;
        }
    }

    let predicted = predicted_series(series, &map_series, &config.params)?;
    Ok(InferenceRun {
        jitter_std: config.jitter_std,
        seed: config.seed,
        map_series,
        predicted,
        ess,
        underflow_steps,
    })
}

/// The 51 standard deviations 0.001, 0.003, ..., 0.101 (computed as
/// `(1 + 2k) / 1000` so every value is the nearest double to its decimal).
pub fn default_std_grid() -> Vec<f64> {
    (0..51).map(|k| (1 + 2 * k) as f64 / 1000.0).collect()
}

/// Eleven-point grid 0.001, 0.011, ..., 0.101: every fifth value of
/// [`default_std_grid`].
pub fn desk_std_grid() -> Vec<f64> {
    (0..11).map(|k| (1 + 10 * k) as f64 / 1000.0).collect()
}

/// Seed of the run at `std`: the base seed mixed with the bit pattern of the
/// std, so a run is reproducible on its own and equal stds give equal runs.
pub fn grid_run_seed(base_seed: u64, std: f64) -> u64 {
    rng::derive_seed(base_seed, &[tag::GRID_RUN, std.to_bits()])
}

/// One independent filter run per std on the same data, returned in grid order.
pub fn grid_search(series: &BehaviorSeries, template: &FilterConfig, stds: &[f64]) -> Result<Vec<InferenceRun>> {
    if stds.is_empty() {
        return Err(Error::EmptyInput("std grid"));
    }
    stds.par_iter()
        .map(|&std| {
            let config = FilterConfig {
                jitter_std: std,
                seed: grid_run_seed(template.seed, std),
                ..template.clone()
            };
            run_filter(series, &config)
        })
        .collect()
}

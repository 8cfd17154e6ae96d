use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::{BehaviorFrame, BehaviorSeries, ContextMatrix, DynamicsParams};
use crate::dynamics::predict_step;
use crate::error::{Error, Result};

/// Diagonal of the behavior covariance: one variance per agent per channel,
/// stored row-major (agents x channels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub agents: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl VarianceTable {
    pub fn new(agents: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != agents * channels {
            return Err(Error::Dimension(format!(
                "variance table of {agents}x{channels} needs {} values, got {}",
                agents * channels,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!("behavior variance must be finite and > 0, got {v}")));
        }
        Ok(Self {
            agents,
            channels,
            values,
        })
    }

    pub fn uniform(agents: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(agents, channels, vec![value; agents * channels])
    }

    pub fn get(&self, agent: usize, channel: usize) -> f64 {
        self.values[agent * self.channels + channel]
    }

    fn check_frame(&self, frame: &BehaviorFrame) -> Result<()> {
        if frame.agents() != self.agents || frame.channels() != self.channels {
            return Err(Error::Dimension(format!(
                "frame is {}x{}, variance table is {}x{}",
                frame.agents(),
                frame.channels(),
                self.agents,
                self.channels
            )));
        }
        Ok(())
    }
}

/// Sample variance (n - 1 denominator) of every agent/channel trace across all
/// frames of `series`.
pub fn behavior_variances(series: &BehaviorSeries) -> Result<VarianceTable> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            what: "behavior variance",
            needed: 2,
            got: series.len(),
        });
    }
    let (n, h) = (series.n_agents(), series.n_channels());
    let mut values = Vec::with_capacity(n * h);
    for agent in 0..n {
        for ch in 0..h {
            let v = crate::metrics::stats::sample_variance(&series.trace(agent, ch));
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::DegenerateVariance(format!(
                    "agent {:?} channel {:?} has variance {v}",
                    series.agents()[agent],
                    series.channels()[ch]
                )));
            }
            values.push(v);
        }
    }
    VarianceTable::new(n, h, values)
}

/// Log of the product over channels of the n-dimensional normal density of
/// `b_obs[:, h]` centred on `predict_step(C, b_prev)[:, h]` with diagonal
/// covariance taken from `variances`.
pub fn log_likelihood(
    c: &ContextMatrix,
    b_prev: &BehaviorFrame,
    b_obs: &BehaviorFrame,
    variances: &VarianceTable,
    params: &DynamicsParams,
) -> Result<f64> {
    variances.check_frame(b_prev)?;
    variances.check_frame(b_obs)?;
    let pred = predict_step(c, b_prev, params)?;
    // per-channel subtotals, added in channel order, so the result equals the
    // sum of single-channel evaluations bit for bit
    let (n, channels) = (b_obs.agents(), b_obs.channels());
    let mut total = 0.0;
    for h in 0..channels {
        let mut sub = 0.0;
        for a in 0..n {
            let var = variances.get(a, h);
            if !(var > 0.0) {
                return Err(Error::Domain(format!("non-positive variance for agent {a}, channel {h}")));
            }
            let r = b_obs.get(a, h) - pred.get(a, h);
            sub += -0.5 * (r * r / var + (2.0 * PI * var).ln());
        }
        total += sub;
    }
    Ok(total)
}

pub fn likelihood(
    c: &ContextMatrix,
    b_prev: &BehaviorFrame,
    b_obs: &BehaviorFrame,
    variances: &VarianceTable,
    params: &DynamicsParams,
) -> Result<f64> {
    log_likelihood(c, b_prev, b_obs, variances, params).map(f64::exp)
}

/// Per-step constants for evaluating many particles against one transition.
///
/// `target = b_obs + alpha * b_prev`, so the residual of a particle is
/// `target - I * C * b_prev`. The Gaussian normalizing constant is omitted
/// since it is shared by every particle.
pub(crate) struct StepKernel<'a> {
    n: usize,
    channels: usize,
    prev: &'a [f64],
    target: Vec<f64>,
    half_inv_var: Vec<f64>,
    scale: f64,
}

impl<'a> StepKernel<'a> {
    pub fn new(
        b_prev: &'a BehaviorFrame,
        b_obs: &BehaviorFrame,
        variances: &VarianceTable,
        params: &DynamicsParams,
    ) -> Result<Self> {
        variances.check_frame(b_prev)?;
        variances.check_frame(b_obs)?;
        let target = b_obs
            .values()
            .iter()
            .zip(b_prev.values())
            .map(|(o, p)| o + params.decay * p)
            .collect();
        let half_inv_var = variances.values.iter().map(|v| 0.5 / v).collect();
        Ok(Self {
            n: b_prev.agents(),
            channels: b_prev.channels(),
            prev: b_prev.values(),
            target,
            half_inv_var,
            scale: params.influence_scale,
        })
    }

    #[inline]
    pub fn log_weight(&self, c: &[f64]) -> f64 {
        let (n, h) = (self.n, self.channels);
        let mut acc = 0.0;
        for i in 0..n {
            let row = &c[i * n..(i + 1) * n];
            for ch in 0..h {
                let mut dot = 0.0;
                for (j, cij) in row.iter().enumerate() {
                    dot += cij * self.prev[j * h + ch];
                }
                let k = i * h + ch;
                let r = self.target[k] - self.scale * dot;
                acc -= r * r * self.half_inv_var[k];
            }
        }
        acc
    }
}

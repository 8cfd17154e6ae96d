//! Behavioral time-series metrics.

pub mod crqa;
pub mod granger;
pub mod stats;
pub mod timeseries;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crqa::{crqa, CrqaConfig, CrqaMetrics};
pub use granger::{gc_strength, granger, granger_with, GcResult, GcStrength, GrangerConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Compares two series (predicted vs observed, or agent vs agent).
    Paired,
    /// Describes one series.
    Standalone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    CrqaRr,
    CrqaDet,
    CrqaEnt,
    CrqaMaxl,
    Correlation,
    Mse,
    R2,
    NormSumDerivativeError,
    VarianceDerivativeError,
    VarianceDifference,
    NormVarianceDifference,
    Variance,
    HjorthMobility,
    HjorthComplexity,
    Smoothness,
    WeightedSmoothness,
    DominantFrequency,
    SpectralEntropy,
    Autocorrelation,
    PartialAutocorrelation,
    TrendStrength,
    Peaks,
    Troughs,
}

impl MetricId {
    pub const ALL: [MetricId; 23] = [
        MetricId::CrqaRr,
        MetricId::CrqaDet,
        MetricId::CrqaEnt,
        MetricId::CrqaMaxl,
        MetricId::Correlation,
        MetricId::Mse,
        MetricId::R2,
        MetricId::NormSumDerivativeError,
        MetricId::VarianceDerivativeError,
        MetricId::VarianceDifference,
        MetricId::NormVarianceDifference,
        MetricId::Variance,
        MetricId::HjorthMobility,
        MetricId::HjorthComplexity,
        MetricId::Smoothness,
        MetricId::WeightedSmoothness,
        MetricId::DominantFrequency,
        MetricId::SpectralEntropy,
        MetricId::Autocorrelation,
        MetricId::PartialAutocorrelation,
        MetricId::TrendStrength,
        MetricId::Peaks,
        MetricId::Troughs,
    ];

    pub const CRQA: [MetricId; 4] = [
        MetricId::CrqaRr,
        MetricId::CrqaDet,
        MetricId::CrqaEnt,
        MetricId::CrqaMaxl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricId::CrqaRr => "crqa_rr",
            MetricId::CrqaDet => "crqa_det",
            MetricId::CrqaEnt => "crqa_ent",
            MetricId::CrqaMaxl => "crqa_maxl",
            MetricId::Correlation => "correlation",
            MetricId::Mse => "mse",
            MetricId::R2 => "r2",
            MetricId::NormSumDerivativeError => "norm_sum_derivative_error",
            MetricId::VarianceDerivativeError => "variance_derivative_error",
            MetricId::VarianceDifference => "variance_difference",
            MetricId::NormVarianceDifference => "norm_variance_difference",
            MetricId::Variance => "variance",
            MetricId::HjorthMobility => "hjorth_mobility",
            MetricId::HjorthComplexity => "hjorth_complexity",
            MetricId::Smoothness => "smoothness",
            MetricId::WeightedSmoothness => "weighted_smoothness",
            MetricId::DominantFrequency => "dominant_frequency",
            MetricId::SpectralEntropy => "spectral_entropy",
            MetricId::Autocorrelation => "autocorrelation",
            MetricId::PartialAutocorrelation => "partial_autocorrelation",
            MetricId::TrendStrength => "trend_strength",
            MetricId::Peaks => "peaks",
            MetricId::Troughs => "troughs",
        }
    }

    pub fn kind(self) -> MetricKind {
        if self <= MetricId::NormVarianceDifference {
            MetricKind::Paired
        } else {
            MetricKind::Standalone
        }
    }

    pub fn is_crqa(self) -> bool {
        Self::CRQA.contains(&self)
    }

    /// Whether a larger predicted-vs-observed value means a closer match.
    /// Only meaningful for paired metrics.
    pub fn within_subjects_maximize(self) -> bool {
        matches!(
            self,
            MetricId::Correlation
                | MetricId::R2
                | MetricId::NormSumDerivativeError
                | MetricId::CrqaRr
                | MetricId::CrqaDet
                | MetricId::CrqaEnt
                | MetricId::CrqaMaxl
        )
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// Evaluate a standalone metric. `observed` is only read by weighted smoothness,
/// which requires it.
pub fn standalone_metric(x: &[f64], metric: MetricId, observed: Option<&[f64]>) -> Result<f64> {
    use timeseries as ts;
    match metric {
        MetricId::Variance => ts::variance(x),
        MetricId::HjorthMobility => ts::hjorth_mobility(x),
        MetricId::HjorthComplexity => ts::hjorth_complexity(x),
        MetricId::Smoothness => ts::smoothness(x),
        MetricId::WeightedSmoothness => {
            let obs = observed
                .ok_or_else(|| Error::Config("weighted_smoothness needs the observed series".into()))?;
            ts::weighted_smoothness(x, obs)
        }
        MetricId::DominantFrequency => ts::dominant_frequency(x),
        MetricId::SpectralEntropy => ts::spectral_entropy(x),
        MetricId::Autocorrelation => ts::autocorrelation(x),
        MetricId::PartialAutocorrelation => ts::partial_autocorrelation(x),
        MetricId::TrendStrength => ts::trend_strength(x),
        MetricId::Peaks => ts::peaks(x),
        MetricId::Troughs => ts::troughs(x),
        other => Err(Error::Config(format!("{other} is not a standalone metric"))),
    }
}

pub fn paired_metric(pred: &[f64], obs: &[f64], metric: MetricId) -> Result<f64> {
    paired_metric_with(pred, obs, metric, &CrqaConfig::default())
}

pub fn paired_metric_with(pred: &[f64], obs: &[f64], metric: MetricId, crqa_config: &CrqaConfig) -> Result<f64> {
    use timeseries as ts;
    if metric.is_crqa() {
        if pred.len() != obs.len() {
            return Err(Error::Dimension(format!(
                "CRQA inputs have lengths {} and {}",
                pred.len(),
                obs.len()
            )));
        }
        let r = crqa(pred, obs, crqa_config)?;
        return Ok(match metric {
            MetricId::CrqaRr => r.rr,
            MetricId::CrqaDet => r.det,
            MetricId::CrqaEnt => r.ent,
            _ => r.maxl as f64,
        });
    }
    match metric {
        MetricId::Correlation => ts::correlation(pred, obs),
        MetricId::Mse => ts::mse(pred, obs),
        MetricId::R2 => ts::r_squared(pred, obs),
        MetricId::NormSumDerivativeError => ts::norm_sum_derivative_error(pred, obs),
        MetricId::VarianceDerivativeError => ts::variance_derivative_error(pred, obs),
        MetricId::VarianceDifference => ts::variance_difference(pred, obs),
        MetricId::NormVarianceDifference => ts::norm_variance_difference(pred, obs),
        other => Err(Error::Config(format!("{other} is not a paired metric"))),
    }
}

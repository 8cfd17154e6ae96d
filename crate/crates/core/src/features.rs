//! Interpretable summaries of a context-matrix series: relative influence,
//! leader strength and leader switch rate.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{AggregationSpec, ContextMatrix};
use crate::error::{Error, Result};

/// Cross-influence differences at or below this magnitude have sign 0.
pub const SIGN_TOLERANCE: f64 = 1e-9;

/// Off-diagonal absolute mass over total absolute mass.
pub fn relative_influence(c: &ContextMatrix) -> Result<f64> {
    let n = c.order();
    let (mut cross, mut total) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let v = c.get(i, j).abs();
            total += v;
            if i != j {
                cross += v;
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::UndefinedFeature("relative influence of an all-zero matrix"));
    }
    Ok((cross / total).clamp(0.0, 1.0))
}

fn cross_terms(c: &ContextMatrix) -> Result<(f64, f64)> {
    if c.order() != 2 {
        return Err(Error::Dimension(format!(
            "leader features are defined for two agents, got {}",
            c.order()
        )));
    }
    Ok((c.get(0, 1).abs(), c.get(1, 0).abs()))
}

/// `||c12| - |c21|| / (|c12| + |c21|)` for a 2x2 matrix.
pub fn leader_strength(c: &ContextMatrix) -> Result<f64> {
    let (a, b) = cross_terms(c)?;
    if a + b <= 0.0 {
        return Err(Error::UndefinedFeature("leader strength with both cross terms zero"));
    }
    Ok(((a - b).abs() / (a + b)).clamp(0.0, 1.0))
}

/// Sign of `|c12| - |c21|`, with 0 inside [`SIGN_TOLERANCE`].
pub fn leader_sign(c: &ContextMatrix) -> Result<i8> {
    let (a, b) = cross_terms(c)?;
    let d = a - b;
    Ok(if d.abs() <= SIGN_TOLERANCE {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    })
}

/// Share of sign flips among adjacent pairs in `range` where both signs are
/// non-zero.
pub fn leader_switch_rate(series: &[ContextMatrix], range: Range<usize>) -> Result<f64> {
    if range.end > series.len() || range.start > range.end {
        return Err(Error::Dimension(format!(
            "range {range:?} outside a series of {}",
            series.len()
        )));
    }
    let signs = series[range].iter().map(leader_sign).collect::<Result<Vec<i8>>>()?;
    switch_rate(&signs)
}

fn switch_rate(signs: &[i8]) -> Result<f64> {
    let (mut flips, mut pairs) = (0usize, 0usize);
    for w in signs.windows(2) {
        if w[0] != 0 && w[1] != 0 {
            pairs += 1;
            if w[0] != w[1] {
                flips += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::UndefinedFeature("leader switch rate without consecutive non-zero signs"));
    }
    Ok(flips as f64 / pairs as f64)
}

/// Pointwise features aligned with the MAP series; `None` marks an
/// undefined value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSeries {
    pub relative_influence: Vec<Option<f64>>,
    pub leader_strength: Vec<Option<f64>>,
    pub leader_sign: Vec<i8>,
}

impl FeatureSeries {
    /// Leader features are only computed for two agents; for other orders
    /// they are all missing.
    pub fn from_matrices(series: &[ContextMatrix]) -> Self {
        let two = series.first().is_some_and(|c| c.order() == 2);
        Self {
            relative_influence: series.iter().map(|c| relative_influence(c).ok()).collect(),
            leader_strength: series
                .iter()
                .map(|c| if two { leader_strength(c).ok() } else { None })
                .collect(),
            leader_sign: series
                .iter()
                .map(|c| if two { leader_sign(c).unwrap_or(0) } else { 0 })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.relative_influence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relative_influence.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    RelativeInfluence,
    LeaderStrength,
    LeaderSwitchRate,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::RelativeInfluence, Feature::LeaderStrength, Feature::LeaderSwitchRate];

    pub fn name(self) -> &'static str {
        match self {
            Feature::RelativeInfluence => "relative_influence",
            Feature::LeaderStrength => "leader_strength",
            Feature::LeaderSwitchRate => "leader_switch_rate",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature {s:?}")))
    }
}

/// One summarized value. `used` and `missing` count the pointwise values
/// that entered the block (for the switch rate, adjacent pairs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub feature: Feature,
    pub aggregation: AggregationSpec,
    pub value: Option<f64>,
    pub used: usize,
    pub missing: usize,
}

/// Relative influence and leader strength under every [`AggregationSpec`];
/// leader switch rate per quartile and over the whole trial (reported under
/// `TrialMean`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub rows: Vec<SummaryRow>,
}

impl FeatureSummary {
    pub fn get(&self, feature: Feature, aggregation: AggregationSpec) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.feature == feature && r.aggregation == aggregation)
            .and_then(|r| r.value)
    }
}

fn block_mean(values: &[Option<f64>], feature: Feature, aggregation: AggregationSpec) -> SummaryRow {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let value = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    SummaryRow {
        feature,
        aggregation,
        value,
        used: defined.len(),
        missing: values.len() - defined.len(),
    }
}

fn switch_row(signs: &[i8], aggregation: AggregationSpec) -> SummaryRow {
    let pairs = signs.len().saturating_sub(1);
    let used = signs.windows(2).filter(|w| w[0] != 0 && w[1] != 0).count();
    SummaryRow {
        feature: Feature::LeaderSwitchRate,
        aggregation,
        value: switch_rate(signs).ok(),
        used,
        missing: pairs - used,
    }
}

pub fn summarize(series: &[ContextMatrix]) -> Result<FeatureSummary> {
    if series.is_empty() {
        return Err(Error::EmptyInput("feature summary of an empty series"));
    }
    let fs = FeatureSeries::from_matrices(series);
    let two = series[0].order() == 2;
    let mut rows = Vec::new();
    for agg in AggregationSpec::ALL {
        // quartiles need at least four matrices; skip them for shorter series
        let Ok(range) = agg.index_range(series.len()) else {
            continue;
        };
        rows.push(block_mean(&fs.relative_influence[range.clone()], Feature::RelativeInfluence, agg));
        if two {
            rows.push(block_mean(&fs.leader_strength[range.clone()], Feature::LeaderStrength, agg));
            if agg != AggregationSpec::Final {
                rows.push(switch_row(&fs.leader_sign[range], agg));
            }
        }
    }
    Ok(FeatureSummary { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(e: [f64; 4]) -> ContextMatrix {
        ContextMatrix::new(2, e.to_vec()).unwrap()
    }

    #[test]
    fn relative_influence_examples() {
        assert_eq!(relative_influence(&m([1.0, 0.0, 0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(relative_influence(&m([0.0, 1.0, 1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(relative_influence(&m([0.5; 4])).unwrap(), 0.5);
        assert!(matches!(relative_influence(&m([0.0; 4])), Err(Error::UndefinedFeature(_))));
        let three = ContextMatrix::new(3, vec![1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0]).unwrap();
        assert_eq!(relative_influence(&three).unwrap(), 0.5);
    }

    #[test]
    fn leader_examples() {
        assert_eq!(leader_strength(&m([0.0, 1.0, 0.0, 0.0])).unwrap(), 1.0);
        assert_eq!(leader_strength(&m([0.0, 0.4, 0.4, 0.0])).unwrap(), 0.0);
        assert!((leader_strength(&m([0.0, 0.3, 0.1, 0.0])).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(leader_strength(&m([1.0, 0.0, 0.0, 1.0])), Err(Error::UndefinedFeature(_))));
        assert_eq!(leader_sign(&m([0.0, 0.3, -0.1, 0.0])).unwrap(), 1);
        assert_eq!(leader_sign(&m([0.0, 0.3, -0.3, 0.0])).unwrap(), 0);
        assert_eq!(leader_sign(&m([0.0, 0.3, 0.3 + 5e-10, 0.0])).unwrap(), 0);
        assert_eq!(leader_sign(&m([0.0, -0.1, 0.2, 0.0])).unwrap(), -1);
        assert!(leader_strength(&ContextMatrix::identity(3)).is_err());
    }

    #[test]
    fn switch_rate_examples() {
        assert_eq!(switch_rate(&[1, 1, 1, 1]).unwrap(), 0.0);
        assert_eq!(switch_rate(&[1, -1, 1, -1]).unwrap(), 1.0);
        assert!((switch_rate(&[1, 1, -1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // zero signs drop out of numerator and denominator
        assert_eq!(switch_rate(&[1, 0, -1, -1]).unwrap(), 0.0);
        assert!(switch_rate(&[1, 0, -1, 0]).is_err());

        let lead1 = m([0.0, 0.5, 0.1, 0.0]);
        let lead2 = m([0.0, 0.1, 0.5, 0.0]);
        let s = vec![lead1.clone(), lead2.clone(), lead1.clone(), lead1];
        assert!((leader_switch_rate(&s, 0..4).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(leader_switch_rate(&s, 2..4).unwrap(), 0.0);
        assert!(leader_switch_rate(&s, 2..5).is_err());
    }

    #[test]
    fn summaries() {
        let c = m([0.2, 0.6, -0.2, 0.4]);
        let constant = vec![c.clone(); 9];
        let s = summarize(&constant).unwrap();
        let ri = relative_influence(&c).unwrap();
        for agg in AggregationSpec::ALL {
            assert!((s.get(Feature::RelativeInfluence, agg).unwrap() - ri).abs() < 1e-15);
        }
        assert_eq!(s.get(Feature::LeaderSwitchRate, AggregationSpec::TrialMean), Some(0.0));

        let alt: Vec<ContextMatrix> = (0..8)
            .map(|t| if t % 2 == 0 { m([0.0, 1.0, 1.0, 0.0]) } else { ContextMatrix::identity(2) })
            .collect();
        let s = summarize(&alt).unwrap();
        assert_eq!(s.get(Feature::RelativeInfluence, AggregationSpec::TrialMean), Some(0.5));
        // leader strength is undefined on the identity steps
        let row = s
            .rows
            .iter()
            .find(|r| r.feature == Feature::LeaderStrength && r.aggregation == AggregationSpec::TrialMean)
            .unwrap();
        assert_eq!((row.used, row.missing), (4, 4));
        assert_eq!(row.value, Some(0.0));
        assert_eq!(s.get(Feature::LeaderStrength, AggregationSpec::Final), None);

        let short = summarize(&alt[..2]).unwrap();
        assert!(short.rows.iter().all(|r| !matches!(r.aggregation, AggregationSpec::Quartile(_))));
        assert!(summarize(&[]).is_err());
    }

    fn matrix2() -> impl Strategy<Value = ContextMatrix> {
        proptest::array::uniform4(-5.0f64..5.0).prop_map(|e| ContextMatrix::new(2, e.to_vec()).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn invariances(c in matrix2(), lambda in prop_oneof![-10.0f64..-0.01, 0.01f64..10.0], entry in 0usize..4) {
            let scaled = c.scaled(lambda);
            let mut flipped = c.entries().to_vec();
            flipped[entry] = -flipped[entry];
            let flipped = ContextMatrix::new(2, flipped).unwrap();
            let swapped = c.relabeled(&[1, 0]).unwrap();
            if let Ok(ri) = relative_influence(&c) {
                prop_assert!((0.0..=1.0).contains(&ri));
                prop_assert!((relative_influence(&scaled).unwrap() - ri).abs() < 1e-12);
                prop_assert_eq!(relative_influence(&flipped).unwrap(), ri);
                prop_assert!((relative_influence(&swapped).unwrap() - ri).abs() < 1e-12);
            }
            if let Ok(ls) = leader_strength(&c) {
                prop_assert!((0.0..=1.0).contains(&ls));
                prop_assert!((leader_strength(&scaled).unwrap() - ls).abs() < 1e-12);
                prop_assert_eq!(leader_strength(&flipped).unwrap(), ls);
                prop_assert_eq!(leader_strength(&swapped).unwrap(), ls);
            }
            prop_assert_eq!(leader_sign(&swapped).unwrap(), -leader_sign(&c).unwrap());
        }

        #[test]
        fn switch_rate_is_a_proportion(signs in proptest::collection::vec(-1i8..=1, 0..40)) {
            if let Ok(r) = switch_rate(&signs) {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }
    }
}

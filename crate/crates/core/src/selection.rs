//! Choosing one grid-search run per dataset.
//!
//! Scores are raw metric values; [`Direction`] decides whether larger or
//! smaller wins. Runs whose score fails or is non-finite rank last, and ties
//! go to the lower jitter std.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::domain::{aggregate_matrices, matrix_error, AggregationSpec, BehaviorSeries, ContextMatrix};
use crate::error::{Error, Result};
use crate::inference::InferenceRun;
use crate::metrics::{crqa, paired_metric_with, standalone_metric, CrqaConfig, CrqaMetrics, MetricId, MetricKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStyle {
    IdealOracle,
    LowestSigma,
    BetweenSubjects,
    WithinSubjects,
    Standalone,
}

impl SelectionStyle {
    pub fn name(self) -> &'static str {
        match self {
            SelectionStyle::IdealOracle => "ideal_oracle",
            SelectionStyle::LowestSigma => "lowest_sigma",
            SelectionStyle::BetweenSubjects => "between_subjects",
            SelectionStyle::WithinSubjects => "within_subjects",
            SelectionStyle::Standalone => "standalone",
        }
    }
}

impl FromStr for SelectionStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SelectionStyle::IdealOracle,
            SelectionStyle::LowestSigma,
            SelectionStyle::BetweenSubjects,
            SelectionStyle::WithinSubjects,
            SelectionStyle::Standalone,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown selection style {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Maximize => Direction::Minimize,
            Direction::Minimize => Direction::Maximize,
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maximize" | "max" => Ok(Direction::Maximize),
            "minimize" | "min" => Ok(Direction::Minimize),
            _ => Err(Error::Config(format!("unknown direction {s:?}"))),
        }
    }
}

/// Chosen direction per standalone metric.
pub type DirectionTable = BTreeMap<MetricId, Direction>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SelectionScheme {
    pub style: SelectionStyle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricId>,
    pub direction: Direction,
}

impl SelectionScheme {
    pub fn ideal_oracle() -> Self {
        Self {
            style: SelectionStyle::IdealOracle,
            metric: None,
            direction: Direction::Minimize,
        }
    }

    pub fn lowest_sigma() -> Self {
        Self {
            style: SelectionStyle::LowestSigma,
            metric: None,
            direction: Direction::Minimize,
        }
    }

    /// Smallest gap between the predicted and observed agent-to-agent relation.
    pub fn between(metric: MetricId) -> Self {
        Self {
            style: SelectionStyle::BetweenSubjects,
            metric: Some(metric),
            direction: Direction::Minimize,
        }
    }

    /// Within-subjects scheme with the conventional direction for `metric`.
    pub fn within(metric: MetricId) -> Self {
        let direction = if metric.within_subjects_maximize() {
            Direction::Maximize
        } else {
            Direction::Minimize
        };
        Self {
            style: SelectionStyle::WithinSubjects,
            metric: Some(metric),
            direction,
        }
    }

    pub fn standalone(metric: MetricId, direction: Direction) -> Self {
        Self {
            style: SelectionStyle::Standalone,
            metric: Some(metric),
            direction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind_needed = match self.style {
            SelectionStyle::IdealOracle | SelectionStyle::LowestSigma => {
                if self.metric.is_some() {
                    return Err(Error::Config(format!("{} takes no metric", self.style.name())));
                }
                return Ok(());
            }
            SelectionStyle::BetweenSubjects | SelectionStyle::WithinSubjects => MetricKind::Paired,
            SelectionStyle::Standalone => MetricKind::Standalone,
        };
        let metric = self
            .metric
            .ok_or_else(|| Error::Config(format!("{} needs a metric", self.style.name())))?;
        if metric.kind() != kind_needed {
            return Err(Error::Config(format!(
                "metric {metric} cannot be used with {}",
                self.style.name()
            )));
        }
        if self.style == SelectionStyle::BetweenSubjects && self.direction != Direction::Minimize {
            return Err(Error::Config("between-subjects scores are gaps and must be minimized".into()));
        }
        Ok(())
    }

    /// Stable label such as `between_subjects:crqa_maxl` or `standalone:peaks:min`.
    pub fn label(&self) -> String {
        match (self.style, self.metric) {
            (SelectionStyle::Standalone, Some(m)) => {
                let d = match self.direction {
                    Direction::Maximize => "max",
                    Direction::Minimize => "min",
                };
                format!("standalone:{m}:{d}")
            }
            (style, Some(m)) => format!("{}:{m}", style.name()),
            (style, None) => style.name().to_string(),
        }
    }
}

impl fmt::Display for SelectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SelectionScheme {
    type Err = Error;

    /// Parses the output of [`SelectionScheme::label`].
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let style: SelectionStyle = parts[0].parse()?;
        let scheme = match (style, &parts[1..]) {
            (SelectionStyle::IdealOracle, []) => Self::ideal_oracle(),
            (SelectionStyle::LowestSigma, []) => Self::lowest_sigma(),
            (SelectionStyle::BetweenSubjects, [m]) => Self::between(m.parse()?),
            (SelectionStyle::WithinSubjects, [m]) => Self::within(m.parse()?),
            (SelectionStyle::Standalone, [m, d]) => Self::standalone(m.parse()?, d.parse()?),
            _ => return Err(Error::Config(format!("malformed selection scheme {s:?}"))),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

/// The four between-subjects CRQA schemes, the between-subjects correlation
/// scheme, eleven within-subjects schemes and twelve standalone schemes.
/// Standalone directions come from `directions`; a missing entry is an error.
pub fn metric_schemes(directions: &DirectionTable) -> Result<Vec<SelectionScheme>> {
    let mut out: Vec<SelectionScheme> = MetricId::CRQA.iter().map(|&m| SelectionScheme::between(m)).collect();
    out.push(SelectionScheme::between(MetricId::Correlation));
    for m in MetricId::ALL {
        if m.kind() == MetricKind::Paired {
            out.push(SelectionScheme::within(m));
        }
    }
    for m in MetricId::ALL {
        if m.kind() == MetricKind::Standalone {
            let d = directions
                .get(&m)
                .ok_or_else(|| Error::Config(format!("no calibrated direction for standalone metric {m}")))?;
            out.push(SelectionScheme::standalone(m, *d));
        }
    }
    Ok(out)
}

/// Both directions of every standalone metric, for calibrating a [`DirectionTable`].
pub fn standalone_candidates() -> Vec<SelectionScheme> {
    MetricId::ALL
        .into_iter()
        .filter(|m| m.kind() == MetricKind::Standalone)
        .flat_map(|m| {
            [
                SelectionScheme::standalone(m, Direction::Maximize),
                SelectionScheme::standalone(m, Direction::Minimize),
            ]
        })
        .collect()
}

fn check_shape(run: &InferenceRun, observed: &BehaviorSeries) -> Result<()> {
    let p = &run.predicted;
    if p.len() != observed.len() || p.n_agents() != observed.n_agents() || p.n_channels() != observed.n_channels() {
        return Err(Error::Dimension(format!(
            "predicted series is {}x{}x{}, observed {}x{}x{}",
            p.len(),
            p.n_agents(),
            p.n_channels(),
            observed.len(),
            observed.n_agents(),
            observed.n_channels()
        )));
    }
    Ok(())
}

fn agent_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn crqa_value(m: &CrqaMetrics, metric: MetricId) -> f64 {
    match metric {
        MetricId::CrqaRr => m.rr,
        MetricId::CrqaDet => m.det,
        MetricId::CrqaEnt => m.ent,
        _ => m.maxl as f64,
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean over agent pairs and channels of `metric(agent_i, agent_j)`.
fn relation(series: &BehaviorSeries, metric: MetricId, crqa_config: &CrqaConfig) -> Result<f64> {
    if series.n_agents() < 2 {
        return Err(Error::Dimension("between-subjects scores need at least two agents".into()));
    }
    let mut values = Vec::new();
    for (i, j) in agent_pairs(series.n_agents()) {
        for ch in 0..series.n_channels() {
            values.push(paired_metric_with(&series.trace(i, ch), &series.trace(j, ch), metric, crqa_config)?);
        }
    }
    Ok(mean(&values))
}

/// `|relation(predicted) - relation(observed)|`, relations averaged over
/// channels (and agent pairs) before differencing.
pub fn score_between_subjects(run: &InferenceRun, observed: &BehaviorSeries, metric: MetricId) -> Result<f64> {
    Scorer::new(observed, CrqaConfig::default()).score(run, &SelectionScheme::between(metric))
}

/// Mean over agents and channels of `metric(predicted, observed)`.
pub fn score_within_subjects(run: &InferenceRun, observed: &BehaviorSeries, metric: MetricId) -> Result<f64> {
    Scorer::new(observed, CrqaConfig::default()).score(run, &SelectionScheme::within(metric))
}

/// Mean over agents and channels of `metric(predicted)`.
pub fn score_standalone(run: &InferenceRun, observed: &BehaviorSeries, metric: MetricId) -> Result<f64> {
    Scorer::new(observed, CrqaConfig::default()).score(run, &SelectionScheme::standalone(metric, Direction::Minimize))
}

/// Scores runs against one observed series. Observed-side relations are
/// computed once and shared across runs.
pub struct Scorer<'a> {
    observed: &'a BehaviorSeries,
    crqa_config: CrqaConfig,
    observed_crqa: OnceLock<Option<Vec<CrqaMetrics>>>,
}

/// CRQA results for one run, computed on first use.
#[derive(Default)]
struct RunCache {
    between: Option<Option<Vec<CrqaMetrics>>>,
    within: Option<Option<Vec<CrqaMetrics>>>,
}

impl<'a> Scorer<'a> {
    pub fn new(observed: &'a BehaviorSeries, crqa_config: CrqaConfig) -> Self {
        Self {
            observed,
            crqa_config,
            observed_crqa: OnceLock::new(),
        }
    }

    pub fn observed(&self) -> &BehaviorSeries {
        self.observed
    }

    pub fn score(&self, run: &InferenceRun, scheme: &SelectionScheme) -> Result<f64> {
        self.score_cached(run, scheme, &mut RunCache::default())
    }

    /// Scores for several schemes on one run; CRQA is evaluated once per
    /// series pair and shared between the four CRQA metrics.
    pub fn score_many(&self, run: &InferenceRun, schemes: &[SelectionScheme]) -> Vec<Result<f64>> {
        let mut cache = RunCache::default();
        schemes.iter().map(|s| self.score_cached(run, s, &mut cache)).collect()
    }

    fn pair_crqa(&self, series: &BehaviorSeries) -> Result<Vec<CrqaMetrics>> {
        let mut out = Vec::new();
        for (i, j) in agent_pairs(series.n_agents()) {
            for ch in 0..series.n_channels() {
                out.push(crqa(&series.trace(i, ch), &series.trace(j, ch), &self.crqa_config)?);
            }
        }
        if out.is_empty() {
            return Err(Error::Dimension("between-subjects scores need at least two agents".into()));
        }
        Ok(out)
    }

    fn within_crqa(&self, run: &InferenceRun) -> Result<Vec<CrqaMetrics>> {
        let (p, o) = (&run.predicted, self.observed);
        let mut out = Vec::new();
        for a in 0..o.n_agents() {
            for ch in 0..o.n_channels() {
                out.push(crqa(&p.trace(a, ch), &o.trace(a, ch), &self.crqa_config)?);
            }
        }
        Ok(out)
    }

    fn score_cached(&self, run: &InferenceRun, scheme: &SelectionScheme, cache: &mut RunCache) -> Result<f64> {
        scheme.validate()?;
        check_shape(run, self.observed)?;
        let metric = match scheme.metric {
            Some(m) => m,
            None => {
                return Err(Error::Config(format!(
                    "{} does not score individual runs",
                    scheme.style.name()
                )))
            }
        };
        let (pred, obs) = (&run.predicted, self.observed);
        match scheme.style {
            SelectionStyle::BetweenSubjects if metric.is_crqa() => {
                let observed = self.observed_crqa.get_or_init(|| self.pair_crqa(obs).ok());
                let Some(observed) = observed else {
                    return self.pair_crqa(obs).map(|_| f64::NAN);
                };
                if cache.between.is_none() {
                    cache.between = Some(self.pair_crqa(pred).ok());
                }
                let Some(predicted) = cache.between.as_ref().unwrap() else {
                    return self.pair_crqa(pred).map(|_| f64::NAN);
                };
                let rel = |v: &[CrqaMetrics]| mean(&v.iter().map(|m| crqa_value(m, metric)).collect::<Vec<_>>());
                Ok((rel(predicted) - rel(observed)).abs())
            }
            SelectionStyle::BetweenSubjects => {
                let p = relation(pred, metric, &self.crqa_config)?;
                let o = relation(obs, metric, &self.crqa_config)?;
                Ok((p - o).abs())
            }
            SelectionStyle::WithinSubjects if metric.is_crqa() => {
                if cache.within.is_none() {
                    cache.within = Some(self.within_crqa(run).ok());
                }
                let Some(values) = cache.within.as_ref().unwrap() else {
                    return self.within_crqa(run).map(|_| f64::NAN);
                };
                Ok(mean(&values.iter().map(|m| crqa_value(m, metric)).collect::<Vec<_>>()))
            }
            SelectionStyle::WithinSubjects => {
                let mut values = Vec::new();
                for a in 0..obs.n_agents() {
                    for ch in 0..obs.n_channels() {
                        values.push(paired_metric_with(
                            &pred.trace(a, ch),
                            &obs.trace(a, ch),
                            metric,
                            &self.crqa_config,
                        )?);
                    }
                }
                Ok(mean(&values))
            }
            SelectionStyle::Standalone => {
                let mut values = Vec::new();
                for a in 0..obs.n_agents() {
                    for ch in 0..obs.n_channels() {
                        let o = obs.trace(a, ch);
                        values.push(standalone_metric(&pred.trace(a, ch), metric, Some(&o))?);
                    }
                }
                Ok(mean(&values))
            }
            SelectionStyle::IdealOracle | SelectionStyle::LowestSigma => unreachable!("validated above"),
        }
    }
}

/// Ground truth for the oracle scheme.
#[derive(Debug, Clone, Copy)]
pub struct OracleTarget<'a> {
    pub truth: &'a ContextMatrix,
    pub aggregation: AggregationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub chosen_index: usize,
    pub chosen_std: f64,
    /// One entry per run; `None` where scoring failed or was non-finite.
    pub scores: Vec<Option<f64>>,
    pub scheme: SelectionScheme,
}

/// Index of the best score. Missing scores rank last; ties go to the lower
/// std, then the lower index.
pub fn choose(stds: &[f64], scores: &[Option<f64>], direction: Direction) -> Result<usize> {
    if stds.is_empty() || stds.len() != scores.len() {
        return Err(Error::EmptyInput("runs to select from"));
    }
    let key = |i: usize| -> Option<f64> {
        scores[i].filter(|v| v.is_finite()).map(|v| match direction {
            Direction::Maximize => -v,
            Direction::Minimize => v,
        })
    };
    let better = |a: usize, b: usize| -> Ordering {
        let by_score = match (key(a), key(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_score.then(stds[a].total_cmp(&stds[b])).then(a.cmp(&b))
    };
    Ok((0..stds.len()).min_by(|&a, &b| better(a, b)).unwrap())
}

/// Select one run. `oracle` must be given exactly when the scheme is the
/// ideal oracle.
pub fn select(
    runs: &[InferenceRun],
    observed: &BehaviorSeries,
    scheme: &SelectionScheme,
    oracle: Option<OracleTarget<'_>>,
) -> Result<SelectionOutcome> {
    let scorer = Scorer::new(observed, CrqaConfig::default());
    select_with(runs, &scorer, scheme, oracle)
}

pub fn select_with(
    runs: &[InferenceRun],
    scorer: &Scorer<'_>,
    scheme: &SelectionScheme,
    oracle: Option<OracleTarget<'_>>,
) -> Result<SelectionOutcome> {
    scheme.validate()?;
    if runs.is_empty() {
        return Err(Error::EmptyInput("runs to select from"));
    }
    let is_oracle = scheme.style == SelectionStyle::IdealOracle;
    match (is_oracle, oracle.is_some()) {
        (true, false) => return Err(Error::Config("the ideal oracle needs a ground-truth matrix".into())),
        (false, true) => return Err(Error::Config("ground truth is only used by the ideal oracle".into())),
        _ => {}
    }
    let stds: Vec<f64> = runs.iter().map(|r| r.jitter_std).collect();
    let scores: Vec<Option<f64>> = match scheme.style {
        SelectionStyle::IdealOracle => {
            let target = oracle.unwrap();
            runs.iter()
                .map(|r| oracle_error(r, target).ok())
                .collect()
        }
        SelectionStyle::LowestSigma => stds.iter().map(|&s| Some(s)).collect(),
        _ => runs
            .iter()
            .map(|r| scorer.score(r, scheme).ok().filter(|v| v.is_finite()))
            .collect(),
    };
    outcome(&stds, scores, *scheme)
}

pub fn outcome(stds: &[f64], scores: Vec<Option<f64>>, scheme: SelectionScheme) -> Result<SelectionOutcome> {
    let chosen_index = choose(stds, &scores, scheme.direction)?;
    Ok(SelectionOutcome {
        chosen_index,
        chosen_std: stds[chosen_index],
        scores,
        scheme,
    })
}

/// Error of the aggregated MAP series of `run` against the truth.
pub fn oracle_error(run: &InferenceRun, target: OracleTarget<'_>) -> Result<f64> {
    let agg = aggregate_matrices(&run.map_series, target.aggregation)?;
    matrix_error(&agg, target.truth)
}

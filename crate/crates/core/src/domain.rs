//! Domain types shared by every stage: context matrices, behavior frames and
//! series, dynamics parameters, and the aggregation conventions used to turn a
//! time-resolved matrix series into a single estimate.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square matrix of self- and cross-influence weights.
///
/// Entry `(i, j)` is the influence of agent `j`'s previous behavior on agent
/// `i`'s current behavior: rows are affected agents, columns are sources.
/// Stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ContextMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl ContextMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("context matrix must have n >= 1".into()));
        }
        if entries.len() != n * n {
            return Err(Error::Dimension(format!(
                "context matrix of order {n} needs {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        if let Some(v) = entries.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("context matrix entry {v}")));
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("context matrix rows must form a square".into()));
        }
        Self::new(n, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a slice already known to be finite and of length `n * n`.
    pub(crate) fn from_slice_unchecked(n: usize, entries: &[f64]) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        Self {
            n,
            entries: entries.to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    /// Simultaneous row/column permutation: agent `i` becomes agent `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Dimension("permutation length must equal matrix order".into()));
        }
        let mut out = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                out[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        Self::new(self.n, out)
    }
}

impl TryFrom<Vec<Vec<f64>>> for ContextMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        Self::from_rows(&refs)
    }
}

impl From<ContextMatrix> for Vec<Vec<f64>> {
    fn from(m: ContextMatrix) -> Self {
        m.rows()
    }
}

impl fmt::Display for ContextMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, row) in self.entries.chunks(self.n).enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}

/// Mean absolute difference over all cells of two equally shaped matrices.
pub fn matrix_error(a: &ContextMatrix, b: &ContextMatrix) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::Dimension(format!(
            "cannot compare matrices of order {} and {}",
            a.n, b.n
        )));
    }
    let sum: f64 = a
        .entries
        .iter()
        .zip(&b.entries)
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(sum / a.entries.len() as f64)
}

/// Behaviors of all agents at one timepoint: an agents x channels matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorFrame {
    agents: usize,
    channels: usize,
    values: Vec<f64>,
}

impl BehaviorFrame {
    pub fn new(agents: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        let frame = Self::new_unchecked(agents, channels, values)?;
        if let Some(v) = frame.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("behavior value {v}")));
        }
        Ok(frame)
    }

    /// Shape-checked constructor that tolerates non-finite values. Predicted
    /// series from explosive dynamics can overflow and are kept as-is.
    pub(crate) fn new_unchecked(agents: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if agents == 0 || channels == 0 {
            return Err(Error::Dimension("frame needs at least one agent and one channel".into()));
        }
        if values.len() != agents * channels {
            return Err(Error::Dimension(format!(
                "frame of {agents}x{channels} needs {} values, got {}",
                agents * channels,
                values.len()
            )));
        }
        Ok(Self {
            agents,
            channels,
            values,
        })
    }

    /// Single-channel frame from one value per agent.
    pub fn from_agents(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, agent: usize, channel: usize) -> f64 {
        self.values[agent * self.channels + channel]
    }

    pub fn column(&self, channel: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.agents).map(move |a| self.get(a, channel))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Contiguous labelled block of frames, e.g. one trial of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Ordered frames of a fixed agents x channels shape, with labels and an
/// optional partition into segments (trials).
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorSeries {
    agents: Vec<String>,
    channels: Vec<String>,
    frames: Vec<BehaviorFrame>,
    segments: Vec<Segment>,
}

pub const MIN_SERIES_LEN: usize = 2;

impl BehaviorSeries {
    pub fn new(agents: Vec<String>, channels: Vec<String>, frames: Vec<BehaviorFrame>) -> Result<Self> {
        let series = Self::new_unchecked(agents, channels, frames)?;
        if let Some(t) = series.frames.iter().position(|f| !f.is_finite()) {
            return Err(Error::NonFinite(format!("frame {t} has a non-finite value")));
        }
        Ok(series)
    }

    pub(crate) fn new_unchecked(
        agents: Vec<String>,
        channels: Vec<String>,
        frames: Vec<BehaviorFrame>,
    ) -> Result<Self> {
        if frames.len() < MIN_SERIES_LEN {
            return Err(Error::TooShort {
                what: "behavior series",
                needed: MIN_SERIES_LEN,
                got: frames.len(),
            });
        }
        if agents.is_empty() || channels.is_empty() {
            return Err(Error::Dimension("series needs agent and channel labels".into()));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.agents != agents.len() || f.channels != channels.len() {
                return Err(Error::Dimension(format!(
                    "frame {t} is {}x{}, series is {}x{}",
                    f.agents,
                    f.channels,
                    agents.len(),
                    channels.len()
                )));
            }
        }
        let segments = vec![Segment {
            label: "all".into(),
            start: 0,
            end: frames.len(),
        }];
        Ok(Self {
            agents,
            channels,
            frames,
            segments,
        })
    }

    /// Single-channel series with default labels, from per-agent columns.
    pub fn from_agent_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let t = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != t) {
            return Err(Error::Dimension("agent columns differ in length".into()));
        }
        let frames = (0..t)
            .map(|i| BehaviorFrame::new(n, 1, columns.iter().map(|c| c[i]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(default_agent_labels(n), vec!["b".into()], frames)
    }

    /// Replace the segment partition. Segments must tile `0..len` in order.
    pub fn with_segments(mut self, segments: Vec<Segment>) -> Result<Self> {
        let mut cursor = 0;
        for s in &segments {
            if s.start != cursor || s.end <= s.start {
                return Err(Error::Dimension(format!(
                    "segment {:?} does not continue a contiguous partition at {cursor}",
                    s.label
                )));
            }
            cursor = s.end;
        }
        if cursor != self.frames.len() {
            return Err(Error::Dimension(format!(
                "segments cover {cursor} frames, series has {}",
                self.frames.len()
            )));
        }
        self.segments = segments;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn frames(&self) -> &[BehaviorFrame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &BehaviorFrame {
        &self.frames[t]
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// One agent's values on one channel across time.
    pub fn trace(&self, agent: usize, channel: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.get(agent, channel)).collect()
    }

    /// Frames restricted to `range`, keeping labels. The result has one segment.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start > range.end {
            return Err(Error::Dimension(format!(
                "slice {range:?} outside series of length {}",
                self.len()
            )));
        }
        Self::new_unchecked(
            self.agents.clone(),
            self.channels.clone(),
            self.frames[range].to_vec(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.frames.iter().all(BehaviorFrame::is_finite)
    }
}

pub fn default_agent_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("agent{i}")).collect()
}

/// Scalars of the autoregressive behavior model: `influence_scale` multiplies
/// the context-matrix term and `decay` damps the previous behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub influence_scale: f64,
    pub decay: f64,
}

impl DynamicsParams {
    /// I = 0.5, alpha = 0.1: the values used to generate and fit the
    /// simulated datasets.
    pub const SIMULATION: Self = Self {
        influence_scale: 0.5,
        decay: 0.1,
    };

    /// I = 0.5, alpha = 0.9: the values stated alongside the model definition.
    pub const FRAMEWORK: Self = Self {
        influence_scale: 0.5,
        decay: 0.9,
    };

    pub fn validate(&self) -> Result<()> {
        if !self.influence_scale.is_finite() || !self.decay.is_finite() {
            return Err(Error::Config("dynamics parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "simulation" | "method" => Ok(Self::SIMULATION),
            "framework" => Ok(Self::FRAMEWORK),
            other => Err(Error::Config(format!(
                "unknown dynamics preset {other:?} (expected simulation or framework)"
            ))),
        }
    }

    /// Name of the matching preset, if any.
    pub fn preset_name(&self) -> &'static str {
        if *self == Self::SIMULATION {
            "simulation"
        } else if *self == Self::FRAMEWORK {
            "framework"
        } else {
            "custom"
        }
    }
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self::SIMULATION
    }
}

/// How a matrix series is collapsed to a single estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AggregationSpec {
    /// Mean over quartile `q` (1..=4) of the series.
    Quartile(u8),
    TrialMean,
    Final,
}

impl AggregationSpec {
    pub const ALL: [AggregationSpec; 6] = [
        AggregationSpec::Quartile(1),
        AggregationSpec::Quartile(2),
        AggregationSpec::Quartile(3),
        AggregationSpec::Quartile(4),
        AggregationSpec::TrialMean,
        AggregationSpec::Final,
    ];

    pub fn quartile(q: u8) -> Result<Self> {
        if (1..=4).contains(&q) {
            Ok(Self::Quartile(q))
        } else {
            Err(Error::Config(format!("quartile must be 1..=4, got {q}")))
        }
    }

    /// Index range of the series selected by this aggregation.
    pub fn index_range(&self, len: usize) -> Result<Range<usize>> {
        if len == 0 {
            return Err(Error::EmptyInput("aggregation over an empty series"));
        }
        match *self {
            AggregationSpec::Quartile(q) => {
                let bounds = quartile_bounds(len)?;
                Ok(bounds[usize::from(q) - 1].clone())
            }
            AggregationSpec::TrialMean => Ok(0..len),
            AggregationSpec::Final => Ok(len - 1..len),
        }
    }
}

impl fmt::Display for AggregationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationSpec::Quartile(q) => write!(f, "q{q}"),
            AggregationSpec::TrialMean => f.write_str("trial_mean"),
            AggregationSpec::Final => f.write_str("final"),
        }
    }
}

impl FromStr for AggregationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trial_mean" | "mean" => Ok(Self::TrialMean),
            "final" => Ok(Self::Final),
            _ => {
                let q = s
                    .strip_prefix('q')
                    .and_then(|d| d.parse::<u8>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown aggregation {s:?}")))?;
                Self::quartile(q)
            }
        }
    }
}

impl TryFrom<String> for AggregationSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AggregationSpec> for String {
    fn from(a: AggregationSpec) -> Self {
        a.to_string()
    }
}

/// Split `0..len` into four contiguous half-open blocks whose sizes differ by
/// at most one. Earlier quartiles take the remainder, so `len = 7` gives sizes
/// 2, 2, 2, 1.
pub fn quartile_bounds(len: usize) -> Result<[Range<usize>; 4]> {
    if len < 4 {
        return Err(Error::TooShort {
            what: "quartile split",
            needed: 4,
            got: len,
        });
    }
    let base = len / 4;
    let extra = len % 4;
    let mut start = 0;
    let mut out: [Range<usize>; 4] = Default::default();
    for (q, slot) in out.iter_mut().enumerate() {
        let size = base + usize::from(q < extra);
        *slot = start..start + size;
        start += size;
    }
    Ok(out)
}

/// Entrywise mean over the block picked by `spec` (or the last matrix for
/// `Final`).
pub fn aggregate_matrices(series: &[ContextMatrix], spec: AggregationSpec) -> Result<ContextMatrix> {
    let first = series
        .first()
        .ok_or(Error::EmptyInput("aggregate_matrices needs at least one matrix"))?;
    let n = first.order();
    if series.iter().any(|m| m.order() != n) {
        return Err(Error::Dimension("matrix series mixes orders".into()));
    }
    let range = spec.index_range(series.len())?;
    let count = range.len() as f64;
    let mut acc = vec![0.0; n * n];
    for m in &series[range] {
        for (a, v) in acc.iter_mut().zip(m.entries()) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= count);
    ContextMatrix::new(n, acc)
}

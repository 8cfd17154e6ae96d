//! Eye-tracking recordings to behavior series.
//!
//! Input is a long CSV with header
//! `pair,task,trial,agent,timestamp_ms,pupil,gaze_x,gaze_y` plus a JSON
//! sidecar `{"schema_version": 1, "screen_width": 1920, "screen_height": 1080}`.
//! Per trial and agent, samples are averaged into fixed-width time bins; the
//! two agents are truncated to the shorter length; gaze is mapped to a
//! 10 x 5 screen grid; each channel is z-scored; and a task's trials are
//! concatenated in trial order with one segment per trial.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::HumanSettings;
use crate::domain::{BehaviorFrame, BehaviorSeries, Segment};
use crate::error::{Error, Result};
use crate::metrics::stats::zscore;

pub const CHANNELS: [&str; 3] = ["pupil", "gaze_x", "gaze_y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub pair: String,
    pub task: String,
    pub trial: u32,
    pub agent: u32,
    pub timestamp_ms: f64,
    pub pupil: f64,
    pub gaze_x: f64,
    pub gaze_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSidecar {
    pub schema_version: u32,
    pub screen_width: f64,
    pub screen_height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub samples: Vec<RawSample>,
    pub screen_width: f64,
    pub screen_height: f64,
}

pub const RAW_HEADER: [&str; 8] = ["pair", "task", "trial", "agent", "timestamp_ms", "pupil", "gaze_x", "gaze_y"];

impl RawRecording {
    pub fn read(csv_path: &Path, sidecar_path: Option<&Path>) -> Result<Self> {
        let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(file);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != RAW_HEADER {
            return Err(Error::Parse {
                path: csv_path.display().to_string(),
                message: format!("expected header {RAW_HEADER:?}, got {header:?}"),
            });
        }
        let samples = reader.deserialize().collect::<std::result::Result<Vec<RawSample>, _>>()?;
        let (w, h) = match sidecar_path {
            Some(p) => {
                let s: ScreenSidecar = super::io::read_json(p)?;
                (s.screen_width, s.screen_height)
            }
            None => {
                let d = HumanSettings::default();
                (d.screen_width, d.screen_height)
            }
        };
        Ok(Self {
            samples,
            screen_width: w,
            screen_height: h,
        })
    }

    pub fn write(&self, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
        let mut f = super::io::TextFile::create(csv_path)?;
        f.line(&RAW_HEADER.join(","))?;
        for s in &self.samples {
            f.line(&format!(
                "{},{},{},{},{},{},{},{}",
                super::io::field(&s.pair),
                super::io::field(&s.task),
                s.trial,
                s.agent,
                s.timestamp_ms,
                s.pupil,
                s.gaze_x,
                s.gaze_y
            ))?;
        }
        f.finish()?;
        super::io::write_json(
            sidecar_path,
            &ScreenSidecar {
                schema_version: super::config::SCHEMA_VERSION,
                screen_width: self.screen_width,
                screen_height: self.screen_height,
            },
        )
    }
}

/// One agent's binned trial: `[pupil, gaze_x, gaze_y]` per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedTrace {
    pub bins: Vec<[f64; 3]>,
    /// Bins with no finite sample, filled from the previous bin.
    pub filled: usize,
}

/// Number of bins covering `duration_ms`: `ceil(duration / bin)`, at least 1.
pub fn bin_count(duration_ms: f64, bin_ms: f64) -> usize {
    ((duration_ms / bin_ms).ceil() as usize).max(1)
}

/// Average samples `(timestamp, [pupil, x, y])` into bins of `bin_ms`
/// starting at the first timestamp. A sample landing exactly on the end of
/// the last bin is folded into it. Non-finite values are ignored per channel.
pub fn bin_samples(samples: &[(f64, [f64; 3])], bin_ms: f64) -> Result<BinnedTrace> {
    let first = samples.first().ok_or(Error::EmptyInput("trial without samples"))?.0;
    for w in samples.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Domain(format!(
                "timestamps must strictly increase ({} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    let last = samples.last().unwrap().0;
    let count = bin_count(last - first, bin_ms);
    let mut sums = vec![[0.0f64; 3]; count];
    let mut counts = vec![[0usize; 3]; count];
    for (ts, values) in samples {
        let k = (((ts - first) / bin_ms).floor() as usize).min(count - 1);
        for ch in 0..3 {
            if values[ch].is_finite() {
                sums[k][ch] += values[ch];
                counts[k][ch] += 1;
            }
        }
    }
    let mut bins = Vec::with_capacity(count);
    let mut filled = 0;
    for k in 0..count {
        let mut bin = [f64::NAN; 3];
        let mut any_missing = false;
        for ch in 0..3 {
            if counts[k][ch] > 0 {
                bin[ch] = sums[k][ch] / counts[k][ch] as f64;
            } else if let Some(prev) = bins.last() {
                let prev: &[f64; 3] = prev;
                bin[ch] = prev[ch];
                any_missing = true;
            } else {
                any_missing = true;
            }
        }
        if any_missing {
            filled += 1;
        }
        bins.push(bin);
    }
    // leading bins without data take the first observed value
    for ch in 0..3 {
        if let Some(first_ok) = bins.iter().position(|b| b[ch].is_finite()) {
            let v = bins[first_ok][ch];
            bins[..first_ok].iter_mut().for_each(|b| b[ch] = v);
        } else {
            return Err(Error::EmptyInput("trial channel without finite samples"));
        }
    }
    Ok(BinnedTrace { bins, filled })
}

/// 1-based grid cell of `value` on `[0, extent]` split into `cells` bins that
/// are closed on the right, so the screen midpoint falls in the lower half.
/// Returns the cell and whether the value was off screen.
pub fn grid_index(value: f64, extent: f64, cells: u32) -> (f64, bool) {
    let width = extent / f64::from(cells);
    let raw = (value / width).ceil();
    let off = !(0.0..=extent).contains(&value);
    (raw.clamp(1.0, f64::from(cells)), off)
}

/// One task's concatenated trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSeries {
    pub pair: String,
    pub task: String,
    /// Segments are labelled with the trial index.
    pub series: BehaviorSeries,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub tasks: Vec<TaskSeries>,
    /// `(pair, task, trial, reason)` for every dropped trial.
    pub rejected: Vec<(String, String, u32, String)>,
}

fn prepare_trial(
    agents: &BTreeMap<u32, Vec<(f64, [f64; 3])>>,
    settings: &HumanSettings,
    screen: (f64, f64),
    notes: &mut Vec<String>,
) -> Result<Vec<BehaviorFrame>> {
    if agents.len() != 2 {
        return Err(Error::Dimension(format!("expected two agents, found {}", agents.len())));
    }
    let mut traces = Vec::new();
    for (agent, samples) in agents {
        let b = bin_samples(samples, settings.bin_ms)?;
        if b.filled > 0 {
            notes.push(format!("agent {agent}: {} empty bins carried forward", b.filled));
        }
        traces.push(b.bins);
    }
    let len = traces.iter().map(Vec::len).min().unwrap();
    if traces.iter().any(|t| t.len() != len) {
        notes.push(format!(
            "truncated agents from {:?} to {len} frames",
            traces.iter().map(Vec::len).collect::<Vec<_>>()
        ));
    }
    let mut off_screen = 0usize;
    // channels[agent][channel] -> z-scored trace
    let mut channels: Vec<Vec<Vec<f64>>> = Vec::new();
    for trace in &traces {
        let mut pupil = Vec::with_capacity(len);
        let mut gx = Vec::with_capacity(len);
        let mut gy = Vec::with_capacity(len);
        for bin in &trace[..len] {
            pupil.push(bin[0]);
            let (x, ox) = grid_index(bin[1], screen.0, settings.grid_x);
            let (y, oy) = grid_index(bin[2], screen.1, settings.grid_y);
            off_screen += usize::from(ox) + usize::from(oy);
            gx.push(x);
            gy.push(y);
        }
        let mut z = Vec::new();
        for (name, values) in CHANNELS.iter().zip([pupil, gx, gy]) {
            z.push(zscore(&values).map_err(|_| {
                Error::DegenerateVariance(format!("channel {name} is constant within the trial"))
            })?);
        }
        channels.push(z);
    }
    if off_screen > 0 {
        notes.push(format!("{off_screen} off-screen gaze values clamped to edge cells"));
    }
    (0..len)
        .map(|t| {
            let values = (0..2).flat_map(|a| (0..3).map(move |h| (a, h))).map(|(a, h)| channels[a][h][t]);
            BehaviorFrame::new(2, 3, values.collect())
        })
        .collect()
}

/// Ingest every (pair, task). Bad trials are dropped with a reason; a task
/// with no usable trial is dropped entirely.
pub fn ingest_human(raw: &RawRecording, settings: &HumanSettings) -> Result<IngestReport> {
    if raw.samples.is_empty() {
        return Err(Error::EmptyInput("recording without samples"));
    }
    // pair -> task -> trial -> agent -> samples (input order kept)
    type Trials = BTreeMap<u32, BTreeMap<u32, Vec<(f64, [f64; 3])>>>;
    let mut grouped: BTreeMap<String, BTreeMap<String, Trials>> = BTreeMap::new();
    for s in &raw.samples {
        grouped
            .entry(s.pair.clone())
            .or_default()
            .entry(s.task.clone())
            .or_default()
            .entry(s.trial)
            .or_default()
            .entry(s.agent)
            .or_default()
            .push((s.timestamp_ms, [s.pupil, s.gaze_x, s.gaze_y]));
    }
    let mut report = IngestReport::default();
    for (pair, tasks) in grouped {
        for (task, trials) in tasks {
            let mut frames = Vec::new();
            let mut segments = Vec::new();
            let mut diagnostics = Vec::new();
            for (trial, agents) in &trials {
                let mut notes = Vec::new();
                match prepare_trial(agents, settings, (raw.screen_width, raw.screen_height), &mut notes) {
                    Ok(f) if f.len() >= 2 => {
                        segments.push(Segment {
                            label: trial.to_string(),
                            start: frames.len(),
                            end: frames.len() + f.len(),
                        });
                        frames.extend(f);
                        diagnostics.extend(notes.into_iter().map(|n| format!("trial {trial}: {n}")));
                    }
                    Ok(_) => report.rejected.push((pair.clone(), task.clone(), *trial, "fewer than two frames".into())),
                    Err(e) => report.rejected.push((pair.clone(), task.clone(), *trial, e.to_string())),
                }
            }
            if segments.is_empty() {
                continue;
            }
            let series = BehaviorSeries::new(
                vec!["1".into(), "2".into()],
                CHANNELS.iter().map(|c| c.to_string()).collect(),
                frames,
            )?
            .with_segments(segments)?;
            report.tasks.push(TaskSeries {
                pair: pair.clone(),
                task: task.clone(),
                series,
                diagnostics,
            });
        }
    }
    Ok(report)
}

//! Human-data study: per (pair, task), infer context matrices over the
//! concatenated trials, select a std under each configured scheme, and
//! summarize features per trial alongside observed CRQA and GC strength.
//!
//! Outputs in the output directory:
//! - `features.csv`: `pair,task,trial,selection_metric,aggregation,feature,value`,
//!   where the selection metric is the scheme label.
//!   Observed-data measures use selection metric `observed` and aggregation `trial`.
//! - `selected_std.csv`: `pair,task,scheme,chosen_std,score`
//! - `failures.csv`: `pair,task,trial,stage,message`
//! - `group_contrasts.json`: planning minus search, per feature and scheme

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, RuntimeOptions, SCHEMA_VERSION};
use super::ingest::{ingest_human, IngestReport, RawRecording, RawSample, TaskSeries};
use super::io::{create_dir, field, num, write_json, TextFile};
use crate::domain::{BehaviorFrame, ContextMatrix, DynamicsParams};
use crate::dynamics::predict_step;
use crate::error::{Error, Result};
use crate::features::summarize;
use crate::inference::grid_search;
use crate::metrics::stats::{mean, sample_variance};
use crate::metrics::{crqa, gc_strength, granger_with, MetricId};
use crate::rng::{derive_seed, label_tag, stream, tag};
use crate::selection::{select_with, Scorer};

pub const FEATURES_FORMAT: &str = "ctxmat-human-features/1";
pub const SELECTED_FORMAT: &str = "ctxmat-human-selected/1";
pub const FAILURES_FORMAT: &str = "ctxmat-human-failures/1";
pub const OBSERVED: &str = "observed";
pub const GC_STRENGTH: &str = "gc_strength";

/// One row of `features.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub pair: String,
    pub task: String,
    pub trial: String,
    pub selection_metric: String,
    pub aggregation: String,
    pub feature: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedStd {
    pub pair: String,
    pub task: String,
    pub scheme: String,
    pub chosen_std: f64,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub pair: String,
    pub task: String,
    pub trial: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskOutput {
    pub features: Vec<FeatureRow>,
    pub selected: Vec<SelectedStd>,
    pub failures: Vec<Failure>,
}

/// Planning minus search for one feature, paired within participant pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub selection_metric: String,
    pub aggregation: String,
    pub feature: String,
    /// Pairs with a value in both tasks.
    pub pairs: usize,
    pub planning_mean: f64,
    pub search_mean: f64,
    /// Mean of the per-pair differences.
    pub mean_difference: f64,
    /// Standard error of the mean difference; absent with fewer than two pairs.
    pub standard_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanReport {
    pub features: Vec<FeatureRow>,
    pub selected: Vec<SelectedStd>,
    pub failures: Vec<Failure>,
    pub contrasts: Vec<Contrast>,
}

impl HumanReport {
    pub fn contrast(&self, selection_metric: &str, aggregation: &str, feature: &str) -> Option<&Contrast> {
        self.contrasts
            .iter()
            .find(|c| c.selection_metric == selection_metric && c.aggregation == aggregation && c.feature == feature)
    }
}

fn row(task: &TaskSeries, trial: &str, metric: &str, aggregation: &str, feature: &str, value: Option<f64>) -> FeatureRow {
    FeatureRow {
        pair: task.pair.clone(),
        task: task.task.clone(),
        trial: trial.to_string(),
        selection_metric: metric.to_string(),
        aggregation: aggregation.to_string(),
        feature: feature.to_string(),
        value,
    }
}

fn failure(task: &TaskSeries, trial: &str, stage: &str, e: &Error) -> Failure {
    Failure {
        pair: task.pair.clone(),
        task: task.task.clone(),
        trial: trial.to_string(),
        stage: stage.to_string(),
        message: e.to_string(),
    }
}

/// Observed CRQA (averaged over channels) and GC strength for every trial.
fn observed_measures(task: &TaskSeries, config: &RunConfig, out: &mut TaskOutput) {
    let s = &task.series;
    for seg in s.segments() {
        let trial = seg.label.as_str();
        let mut per_metric: BTreeMap<MetricId, Vec<f64>> = BTreeMap::new();
        let mut gcs = Vec::new();
        for h in 0..s.n_channels() {
            let a = &s.trace(0, h)[seg.range()];
            let b = &s.trace(1, h)[seg.range()];
            match crqa(a, b, &config.crqa) {
                Ok(m) => {
                    for (id, v) in [
                        (MetricId::CrqaRr, m.rr),
                        (MetricId::CrqaDet, m.det),
                        (MetricId::CrqaEnt, m.ent),
                        (MetricId::CrqaMaxl, m.maxl as f64),
                    ] {
                        per_metric.entry(id).or_default().push(v);
                    }
                }
                Err(e) => out.failures.push(failure(task, trial, &format!("crqa:{}", s.channels()[h]), &e)),
            }
            match granger_with(a, b, &config.granger) {
                Ok(g) => gcs.push(g),
                Err(e) => out.failures.push(failure(task, trial, &format!("granger:{}", s.channels()[h]), &e)),
            }
        }
        for id in MetricId::CRQA {
            let v = per_metric.get(&id).filter(|v| !v.is_empty()).map(|v| mean(v));
            out.features.push(row(task, trial, OBSERVED, "trial", id.name(), v));
        }
        let strength = if gcs.is_empty() {
            None
        } else {
            match gc_strength(&gcs) {
                Ok(g) => Some(g.value),
                Err(e) => {
                    out.failures.push(failure(task, trial, GC_STRENGTH, &e));
                    None
                }
            }
        };
        out.features.push(row(task, trial, OBSERVED, "trial", GC_STRENGTH, strength));
    }
}

/// The whole per-(pair, task) analysis. Errors abort only this task.
pub fn analyze_task(task: &TaskSeries, config: &RunConfig) -> Result<TaskOutput> {
    let mut out = TaskOutput::default();
    let mut template = config.filter_template();
    template.seed = derive_seed(config.seed, &[tag::HUMAN, label_tag(&task.pair), label_tag(&task.task)]);
    let runs = grid_search(&task.series, &template, &config.stds)?;
    let scorer = Scorer::new(&task.series, config.crqa);
    for scheme in &config.selection.human_schemes {
        let chosen = select_with(&runs, &scorer, scheme, None)?;
        let metric = scheme.label();
        out.selected.push(SelectedStd {
            pair: task.pair.clone(),
            task: task.task.clone(),
            scheme: scheme.label(),
            chosen_std: chosen.chosen_std,
            score: chosen.scores[chosen.chosen_index],
        });
        let maps = &runs[chosen.chosen_index].map_series;
        for seg in task.series.segments() {
            // transitions whose source and target both lie inside the trial
            let trial_maps: &[ContextMatrix] = &maps[seg.start..seg.end - 1];
            match summarize(trial_maps) {
                Ok(summary) => {
                    for r in summary.rows {
                        out.features.push(row(
                            task,
                            &seg.label,
                            &metric,
                            &r.aggregation.to_string(),
                            r.feature.name(),
                            r.value,
                        ));
                    }
                }
                Err(e) => out.failures.push(failure(task, &seg.label, "features", &e)),
            }
        }
    }
    observed_measures(task, config, &mut out);
    Ok(out)
}

/// Paired planning-minus-search contrasts. Each pair contributes the mean
/// over its trials per task.
pub fn group_contrasts(rows: &[FeatureRow], planning: &str, search: &str) -> Vec<Contrast> {
    // (metric, aggregation, feature) -> pair -> task -> values
    type Cells<'a> = BTreeMap<(&'a str, &'a str, &'a str), BTreeMap<&'a str, BTreeMap<&'a str, Vec<f64>>>>;
    let mut cells: Cells = BTreeMap::new();
    for r in rows {
        if let Some(v) = r.value {
            cells
                .entry((&r.selection_metric, &r.aggregation, &r.feature))
                .or_default()
                .entry(&r.pair)
                .or_default()
                .entry(&r.task)
                .or_default()
                .push(v);
        }
    }
    let mut out = Vec::new();
    for ((metric, agg, feature), pairs) in cells {
        let mut p = Vec::new();
        let mut s = Vec::new();
        for tasks in pairs.values() {
            if let (Some(a), Some(b)) = (tasks.get(planning), tasks.get(search)) {
                p.push(mean(a));
                s.push(mean(b));
            }
        }
        if p.is_empty() {
            continue;
        }
        let d: Vec<f64> = p.iter().zip(&s).map(|(a, b)| a - b).collect();
        out.push(Contrast {
            selection_metric: metric.to_string(),
            aggregation: agg.to_string(),
            feature: feature.to_string(),
            pairs: d.len(),
            planning_mean: mean(&p),
            search_mean: mean(&s),
            mean_difference: mean(&d),
            standard_error: (d.len() > 1).then(|| (sample_variance(&d) / d.len() as f64).sqrt()),
        });
    }
    out
}

pub fn analyze(ingested: &IngestReport, config: &RunConfig) -> HumanReport {
    let outputs: Vec<TaskOutput> = ingested
        .tasks
        .par_iter()
        .map(|t| {
            analyze_task(t, config).unwrap_or_else(|e| TaskOutput {
                failures: vec![failure(t, "", "task", &e)],
                ..TaskOutput::default()
            })
        })
        .collect();
    let mut report = HumanReport {
        features: Vec::new(),
        selected: Vec::new(),
        failures: ingested
            .rejected
            .iter()
            .map(|(pair, task, trial, reason)| Failure {
                pair: pair.clone(),
                task: task.clone(),
                trial: trial.to_string(),
                stage: "ingest".into(),
                message: reason.clone(),
            })
            .collect(),
        contrasts: Vec::new(),
    };
    for o in outputs {
        report.features.extend(o.features);
        report.selected.extend(o.selected);
        report.failures.extend(o.failures);
    }
    report.contrasts = group_contrasts(&report.features, "planning", "search");
    report
}

pub fn write_human_report(report: &HumanReport, config: &RunConfig, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    let echo = config.echo();
    let mut f = TextFile::create(&out_dir.join("features.csv"))?;
    f.header(FEATURES_FORMAT, &echo)?;
    f.line("pair,task,trial,selection_metric,aggregation,feature,value")?;
    for r in &report.features {
        f.line(&format!(
            "{},{},{},{},{},{},{}",
            field(&r.pair),
            field(&r.task),
            field(&r.trial),
            field(&r.selection_metric),
            r.aggregation,
            r.feature,
            num(r.value)
        ))?;
    }
    f.finish()?;

    let mut f = TextFile::create(&out_dir.join("selected_std.csv"))?;
    f.header(SELECTED_FORMAT, &echo)?;
    f.line("pair,task,scheme,chosen_std,score")?;
    for s in &report.selected {
        f.line(&format!(
            "{},{},{},{},{}",
            field(&s.pair),
            field(&s.task),
            field(&s.scheme),
            s.chosen_std,
            num(s.score)
        ))?;
    }
    f.finish()?;

    let mut f = TextFile::create(&out_dir.join("failures.csv"))?;
    f.header(FAILURES_FORMAT, &echo)?;
    f.line("pair,task,trial,stage,message")?;
    for x in &report.failures {
        f.line(&format!(
            "{},{},{},{},{}",
            field(&x.pair),
            field(&x.task),
            field(&x.trial),
            field(&x.stage),
            field(&x.message)
        ))?;
    }
    f.finish()?;

    #[derive(Serialize)]
    struct Contrasts<'a> {
        schema_version: u32,
        config: &'a RunConfig,
        contrasts: &'a [Contrast],
    }
    write_json(
        &out_dir.join("group_contrasts.json"),
        &Contrasts {
            schema_version: SCHEMA_VERSION,
            config,
            contrasts: &report.contrasts,
        },
    )
}

pub fn run_human_study(raw: &RawRecording, config: &RunConfig, runtime: &RuntimeOptions) -> Result<HumanReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(runtime.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let ingested = ingest_human(raw, &config.human)?;
    let report = pool.install(|| analyze(&ingested, config));
    write_human_report(&report, config, &runtime.out_dir)?;
    Ok(report)
}

/// Shape of a synthetic two-task recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub pairs: usize,
    pub trials: u32,
    pub frames_per_trial: usize,
    /// Raw samples per 272 ms frame.
    pub samples_per_frame: usize,
    pub bin_ms: f64,
    /// Task name and the context matrix driving it.
    pub tasks: Vec<(String, ContextMatrix)>,
    pub params: DynamicsParams,
}

impl Default for FixtureSpec {
    /// Planning couples the agents strongly (relative influence 0.75), search
    /// weakly (0.33); both are symmetric so neither agent leads.
    fn default() -> Self {
        Self {
            seed: 0,
            pairs: 6,
            trials: 5,
            frames_per_trial: 120,
            samples_per_frame: 8,
            bin_ms: 272.0,
            tasks: vec![
                (
                    "planning".into(),
                    ContextMatrix::from_rows(&[&[0.2, 0.6], &[0.6, 0.2]]).expect("2x2"),
                ),
                (
                    "search".into(),
                    ContextMatrix::from_rows(&[&[1.2, 0.6], &[0.6, 1.2]]).expect("2x2"),
                ),
            ],
            params: DynamicsParams::SIMULATION,
        }
    }
}

/// Raw eye-tracking samples from the model: per trial, a latent 2-agent x
/// 3-channel series follows the task's matrix with unit Gaussian innovations,
/// and each frame is expanded into raw samples around its value.
pub fn synthetic_fixture(spec: &FixtureSpec) -> Result<RawRecording> {
    if spec.frames_per_trial < 2 || spec.samples_per_frame == 0 || spec.pairs == 0 || spec.trials == 0 {
        return Err(Error::Config("fixture needs pairs, trials, >= 2 frames and >= 1 sample per frame".into()));
    }
    let dt = spec.bin_ms / spec.samples_per_frame as f64;
    let mut samples = Vec::new();
    for p in 0..spec.pairs {
        let pair = format!("p{:02}", p + 1);
        for (ti, (task, matrix)) in spec.tasks.iter().enumerate() {
            for trial in 1..=spec.trials {
                let mut rng = stream(spec.seed, &[tag::FIXTURE, p as u64, ti as u64, u64::from(trial)]);
                let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
                let mut frame = BehaviorFrame::new(2, 3, (0..6).map(|_| normal()).collect())?;
                let mut latent = Vec::with_capacity(spec.frames_per_trial);
                for _ in 0..spec.frames_per_trial {
                    latent.push(frame.clone());
                    let next = predict_step(matrix, &frame, &spec.params)?;
                    frame = BehaviorFrame::new(2, 3, next.values().iter().map(|v| v + normal()).collect())?;
                }
                for agent in 0..2 {
                    for (k, f) in latent.iter().enumerate() {
                        for j in 0..spec.samples_per_frame {
                            let jitter = 0.05 * normal();
                            samples.push(RawSample {
                                pair: pair.clone(),
                                task: task.clone(),
                                trial,
                                agent: agent as u32 + 1,
                                timestamp_ms: (k * spec.samples_per_frame + j) as f64 * dt,
                                pupil: 3.5 + 0.3 * (f.get(agent, 0) + jitter),
                                gaze_x: 960.0 + 300.0 * (f.get(agent, 1) + jitter),
                                gaze_y: 540.0 + 150.0 * (f.get(agent, 2) + jitter),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(RawRecording {
        samples,
        screen_width: 1920.0,
        screen_height: 1080.0,
    })
}

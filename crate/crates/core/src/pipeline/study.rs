//! Simulation accuracy study: simulate each grid cell, run the std grid
//! search, select a run under every scheme and score it against the truth.
//!
//! Each dataset is evaluated independently and checkpointed as JSON, so an
//! interrupted study resumes without recomputing finished cells. Reports are
//! built from the checkpoints in dataset order and do not depend on the
//! number of worker threads.
//!
//! Outputs in the output directory:
//! - `errors.csv`: `dataset,matrix_index,noise_index,noise,scheme,aggregation,chosen_std,error`
//! - `error_over_time.csv`: `scheme,t,quartile,mean,sd,n`, mean error of the
//!   MAP matrix at each transition target `t` (2..=T) across datasets
//! - `summary.json`: headline means and sds plus every scheme x aggregation
//! - `standalone_directions.json`: the direction table used for standalone schemes

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, RuntimeOptions, SCHEMA_VERSION};
use super::io::{create_dir, field, num, read_json, write_json, TextFile};
use crate::domain::{aggregate_matrices, matrix_error, quartile_bounds, AggregationSpec, ContextMatrix};
use crate::dynamics::{grid_spec, simulate, DatasetId, NOISE_LEVELS};
use crate::error::{Error, Result};
use crate::inference::{grid_search, InferenceRun};
use crate::metrics::stats::{mean, sample_variance};
use crate::metrics::MetricKind;
use crate::rng::{derive_seed, tag};
use crate::selection::{
    choose, metric_schemes, standalone_candidates, Direction, DirectionTable, Scorer, SelectionScheme, SelectionStyle,
};

pub const ERRORS_FORMAT: &str = "ctxmat-errors/1";
pub const CURVE_FORMAT: &str = "ctxmat-error-curve/1";

/// Schemes scored on every run: the metric schemes other than standalone
/// ones, then both directions of every standalone metric.
pub fn scored_schemes() -> Vec<SelectionScheme> {
    let any: DirectionTable = crate::metrics::MetricId::ALL
        .into_iter()
        .filter(|m| m.kind() == MetricKind::Standalone)
        .map(|m| (m, Direction::Minimize))
        .collect();
    let mut out: Vec<SelectionScheme> = metric_schemes(&any)
        .expect("every standalone metric has a direction")
        .into_iter()
        .filter(|s| s.style != SelectionStyle::Standalone)
        .collect();
    out.extend(standalone_candidates());
    out
}

/// Everything the report needs from one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub id: DatasetId,
    pub truth: ContextMatrix,
    pub stds: Vec<f64>,
    /// `[run][aggregation]`, aggregations in config order.
    pub aggregate_errors: Vec<Vec<Option<f64>>>,
    /// `[run][k]`: error of the k-th MAP matrix.
    pub step_errors: Vec<Vec<Option<f64>>>,
    /// Per scheme label, one score per run; `None` where scoring failed.
    pub scores: BTreeMap<String, Vec<Option<f64>>>,
    /// Transitions where every particle likelihood underflowed, per run.
    pub underflow_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    config: String,
    result: DatasetResult,
}

fn errors_of(run: &InferenceRun, truth: &ContextMatrix, aggregations: &[AggregationSpec]) -> Vec<Option<f64>> {
    aggregations
        .iter()
        .map(|&a| {
            aggregate_matrices(&run.map_series, a)
                .and_then(|m| matrix_error(&m, truth))
                .ok()
        })
        .collect()
}

pub fn evaluate_dataset(config: &RunConfig, id: DatasetId) -> Result<DatasetResult> {
    let spec = grid_spec(id.matrix_index, id.noise_index, config.seed, config.dynamics, config.simulation.length)?;
    let series = simulate(&spec)?;
    let mut template = config.filter_template();
    template.seed = derive_seed(config.seed, &[tag::DATASET, id.matrix_index as u64, id.noise_index as u64]);
    let runs = grid_search(&series, &template, &config.stds)?;
    let scorer = Scorer::new(&series, config.crqa);
    let schemes = scored_schemes();
    let per_run: Vec<Vec<Option<f64>>> = runs
        .par_iter()
        .map(|r| {
            scorer
                .score_many(r, &schemes)
                .into_iter()
                .map(|s| s.ok().filter(|v| v.is_finite()))
                .collect()
        })
        .collect();
    let scores = schemes
        .iter()
        .enumerate()
        .map(|(k, s)| (s.label(), per_run.iter().map(|r| r[k]).collect()))
        .collect();
    Ok(DatasetResult {
        id,
        truth: spec.matrix.clone(),
        stds: runs.iter().map(|r| r.jitter_std).collect(),
        aggregate_errors: runs.iter().map(|r| errors_of(r, &spec.matrix, &config.aggregations)).collect(),
        step_errors: runs
            .iter()
            .map(|r| r.map_series.iter().map(|m| matrix_error(m, &spec.matrix).ok()).collect())
            .collect(),
        scores,
        underflow_steps: runs.iter().map(|r| r.underflow_steps.len()).collect(),
    })
}

pub fn dataset_ids(config: &RunConfig) -> Vec<DatasetId> {
    config
        .simulation
        .matrices
        .iter()
        .flat_map(|&m| {
            config.simulation.noise_levels.iter().map(move |&a| DatasetId {
                matrix_index: m,
                noise_index: a,
            })
        })
        .collect()
}

pub fn checkpoint_path(out_dir: &Path, id: DatasetId) -> PathBuf {
    out_dir.join("checkpoints").join(format!("{}.json", id.label()))
}

/// A valid checkpoint written under the same config, if any.
fn load_checkpoint(path: &Path, echo: &str, id: DatasetId) -> Option<DatasetResult> {
    let c: Checkpoint = read_json(path).ok()?;
    (c.schema_version == SCHEMA_VERSION && c.config == echo && c.result.id == id).then_some(c.result)
}

fn save_checkpoint(path: &Path, echo: &str, result: &DatasetResult) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    write_json(
        &tmp,
        &Checkpoint {
            schema_version: SCHEMA_VERSION,
            config: echo.to_string(),
            result: result.clone(),
        },
    )?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Mean, sample sd and count of the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        Self {
            mean: (!v.is_empty()).then(|| mean(&v)),
            sd: (v.len() > 1).then(|| sample_variance(&v).sqrt()),
            n: v.len(),
        }
    }
}

/// One row of `errors.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub id: DatasetId,
    pub scheme: String,
    pub aggregation: AggregationSpec,
    pub chosen_std: f64,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: String,
    /// Keyed by aggregation name.
    pub aggregations: BTreeMap<String, Stat>,
    /// Errors pooled over every dataset and the quartile and final aggregations.
    pub pooled: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    /// Ideal oracle, second-quartile mean.
    pub oracle_q2: Stat,
    /// Lowest sigma, per-dataset mean of the q2, q3 and q4 errors.
    pub lowest_sigma_q2_q4: Stat,
    /// Between-subjects MaxL, first-quartile mean.
    pub between_maxl_q1: Stat,
    /// Pooled over q1..q4 and final.
    pub oracle_pooled: Stat,
    pub lowest_sigma_pooled: Stat,
    pub best_between_scheme: String,
    pub best_between_pooled: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config: RunConfig,
    pub datasets: usize,
    pub directions_calibrated: bool,
    pub standalone_directions: DirectionTable,
    pub headline: Headline,
    pub schemes: Vec<SchemeSummary>,
    /// Runs with at least one fully underflowed transition.
    pub runs_with_underflow: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub scheme: String,
    pub t: usize,
    pub quartile: u8,
    pub stat: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub datasets: Vec<DatasetResult>,
    pub rows: Vec<ErrorRow>,
    pub curves: Vec<CurvePoint>,
    pub summary: Summary,
}

impl EvalReport {
    /// Mean error of `scheme` (label) under `aggregation`.
    pub fn mean_error(&self, scheme: &str, aggregation: AggregationSpec) -> Option<f64> {
        self.summary
            .schemes
            .iter()
            .find(|s| s.scheme == scheme)
            .and_then(|s| s.aggregations.get(&aggregation.to_string()))
            .and_then(|s| s.mean)
    }
}

/// Pick each standalone metric's direction by the lower mean final-matrix
/// error across datasets. Ties go to minimize.
pub fn calibrate_directions(datasets: &[DatasetResult], aggregations: &[AggregationSpec]) -> Result<DirectionTable> {
    let final_pos = aggregations
        .iter()
        .position(|a| *a == AggregationSpec::Final)
        .ok_or_else(|| Error::Config("calibrating standalone directions needs the final aggregation".into()))?;
    let mut table = DirectionTable::new();
    for m in crate::metrics::MetricId::ALL.into_iter().filter(|m| m.kind() == MetricKind::Standalone) {
        let err = |d: Direction| -> Option<f64> {
            let s = SelectionScheme::standalone(m, d);
            Stat::of(datasets.iter().map(|ds| {
                let idx = pick(ds, &s).ok()?;
                ds.aggregate_errors[idx][final_pos]
            }))
            .mean
        };
        let (max, min) = (err(Direction::Maximize), err(Direction::Minimize));
        let d = match (max, min) {
            (Some(a), Some(b)) if a < b => Direction::Maximize,
            (Some(_), None) => Direction::Maximize,
            _ => Direction::Minimize,
        };
        table.insert(m, d);
    }
    Ok(table)
}

/// Index chosen by a non-oracle scheme.
fn pick(ds: &DatasetResult, scheme: &SelectionScheme) -> Result<usize> {
    match scheme.style {
        SelectionStyle::LowestSigma => choose(&ds.stds, &ds.stds.iter().map(|&s| Some(s)).collect::<Vec<_>>(), scheme.direction),
        SelectionStyle::IdealOracle => Err(Error::Config("the oracle picks per aggregation".into())),
        _ => {
            let scores = ds
                .scores
                .get(&scheme.label())
                .ok_or_else(|| Error::Config(format!("scheme {} was not scored", scheme.label())))?;
            choose(&ds.stds, scores, scheme.direction)
        }
    }
}

/// Build every table from per-dataset results (sorted by dataset).
pub fn build_report(config: &RunConfig, mut datasets: Vec<DatasetResult>) -> Result<EvalReport> {
    if datasets.is_empty() {
        return Err(Error::EmptyInput("simulation study without datasets"));
    }
    datasets.sort_by_key(|d| d.id);
    let aggs = &config.aggregations;
    let (directions, calibrated) = match &config.selection.standalone_directions {
        Some(t) => (t.clone(), false),
        None => (calibrate_directions(&datasets, aggs)?, true),
    };
    let mut schemes = vec![SelectionScheme::ideal_oracle(), SelectionScheme::lowest_sigma()];
    schemes.extend(metric_schemes(&directions)?);

    let trial_mean_pos = aggs.iter().position(|a| *a == AggregationSpec::TrialMean);
    let mut rows = Vec::new();
    // per scheme: chosen run per dataset for the error-over-time curve
    let mut curve_picks: Vec<Vec<Option<usize>>> = vec![Vec::new(); schemes.len()];
    for ds in &datasets {
        for (si, scheme) in schemes.iter().enumerate() {
            let label = scheme.label();
            if scheme.style == SelectionStyle::IdealOracle {
                for (ai, &agg) in aggs.iter().enumerate() {
                    let errs: Vec<Option<f64>> = ds.aggregate_errors.iter().map(|e| e[ai]).collect();
                    let idx = choose(&ds.stds, &errs, Direction::Minimize)?;
                    rows.push(ErrorRow {
                        id: ds.id,
                        scheme: label.clone(),
                        aggregation: agg,
                        chosen_std: ds.stds[idx],
                        error: errs[idx],
                    });
                }
                let pos = trial_mean_pos.unwrap_or(aggs.len() - 1);
                let errs: Vec<Option<f64>> = ds.aggregate_errors.iter().map(|e| e[pos]).collect();
                curve_picks[si].push(Some(choose(&ds.stds, &errs, Direction::Minimize)?));
            } else {
                let idx = pick(ds, scheme)?;
                for (ai, &agg) in aggs.iter().enumerate() {
                    rows.push(ErrorRow {
                        id: ds.id,
                        scheme: label.clone(),
                        aggregation: agg,
                        chosen_std: ds.stds[idx],
                        error: ds.aggregate_errors[idx][ai],
                    });
                }
                curve_picks[si].push(Some(idx));
            }
        }
    }

    let errors_for = |label: &str, agg: Option<AggregationSpec>| -> Vec<Option<f64>> {
        rows.iter()
            .filter(|r| r.scheme == label && agg.is_none_or(|a| r.aggregation == a))
            .map(|r| r.error)
            .collect()
    };
    let pooled_aggs: Vec<AggregationSpec> = aggs
        .iter()
        .copied()
        .filter(|a| *a != AggregationSpec::TrialMean)
        .collect();
    let pooled = |label: &str| -> Stat {
        Stat::of(
            rows.iter()
                .filter(|r| r.scheme == label && pooled_aggs.contains(&r.aggregation))
                .map(|r| r.error),
        )
    };
    let summaries: Vec<SchemeSummary> = schemes
        .iter()
        .map(|s| {
            let label = s.label();
            SchemeSummary {
                aggregations: aggs
                    .iter()
                    .map(|&a| (a.to_string(), Stat::of(errors_for(&label, Some(a)))))
                    .collect(),
                pooled: pooled(&label),
                scheme: label,
            }
        })
        .collect();

    let oracle = SelectionScheme::ideal_oracle().label();
    let lowest = SelectionScheme::lowest_sigma().label();
    let maxl = SelectionScheme::between(crate::metrics::MetricId::CrqaMaxl).label();
    let q = |label: &str, k: u8| errors_for(label, Some(AggregationSpec::Quartile(k)));
    let lowest_q2_q4: Vec<Option<f64>> = datasets
        .iter()
        .map(|ds| {
            let per: Vec<Option<f64>> = rows
                .iter()
                .filter(|r| {
                    r.id == ds.id
                        && r.scheme == lowest
                        && matches!(r.aggregation, AggregationSpec::Quartile(2..=4))
                })
                .map(|r| r.error)
                .collect();
            (per.len() == 3 && per.iter().all(Option::is_some)).then(|| per.iter().flatten().sum::<f64>() / 3.0)
        })
        .collect();
    let best_between = summaries
        .iter()
        .filter(|s| s.scheme.starts_with(SelectionStyle::BetweenSubjects.name()))
        .min_by(|a, b| {
            let key = |s: &SchemeSummary| s.pooled.mean.unwrap_or(f64::INFINITY);
            key(a).total_cmp(&key(b))
        })
        .expect("between-subjects schemes present");
    let headline = Headline {
        oracle_q2: Stat::of(q(&oracle, 2)),
        lowest_sigma_q2_q4: Stat::of(lowest_q2_q4),
        between_maxl_q1: Stat::of(q(&maxl, 1)),
        oracle_pooled: pooled(&oracle),
        lowest_sigma_pooled: pooled(&lowest),
        best_between_scheme: best_between.scheme.clone(),
        best_between_pooled: best_between.pooled,
    };

    let steps = datasets[0].step_errors[0].len();
    let bounds = quartile_bounds(steps).ok();
    let quartile_of = |k: usize| -> u8 {
        bounds
            .as_ref()
            .and_then(|b| b.iter().position(|r| r.contains(&k)))
            .map_or(0, |p| p as u8 + 1)
    };
    let mut curves = Vec::new();
    for (si, scheme) in schemes.iter().enumerate() {
        let label = scheme.label();
        for k in 0..steps {
            let values = datasets
                .iter()
                .zip(&curve_picks[si])
                .map(|(ds, pick)| pick.and_then(|i| ds.step_errors[i].get(k).copied().flatten()));
            curves.push(CurvePoint {
                scheme: label.clone(),
                t: k + 2,
                quartile: quartile_of(k),
                stat: Stat::of(values),
            });
        }
    }

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        datasets: datasets.len(),
        directions_calibrated: calibrated,
        standalone_directions: directions,
        headline,
        schemes: summaries,
        runs_with_underflow: datasets
            .iter()
            .flat_map(|d| &d.underflow_steps)
            .filter(|&&n| n > 0)
            .count(),
    };
    Ok(EvalReport {
        datasets,
        rows,
        curves,
        summary,
    })
}

pub fn write_report(report: &EvalReport, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    let echo = report.summary.config.echo();
    let mut f = TextFile::create(&out_dir.join("errors.csv"))?;
    f.header(ERRORS_FORMAT, &echo)?;
    f.line("dataset,matrix_index,noise_index,noise,scheme,aggregation,chosen_std,error")?;
    for r in &report.rows {
        f.line(&format!(
            "{},{},{},{},{},{},{},{}",
            r.id.label(),
            r.id.matrix_index,
            r.id.noise_index,
            NOISE_LEVELS[r.id.noise_index],
            field(&r.scheme),
            r.aggregation,
            r.chosen_std,
            num(r.error)
        ))?;
    }
    f.finish()?;

    let mut f = TextFile::create(&out_dir.join("error_over_time.csv"))?;
    f.header(CURVE_FORMAT, &echo)?;
    f.line("scheme,t,quartile,mean,sd,n")?;
    for c in &report.curves {
        f.line(&format!(
            "{},{},{},{},{},{}",
            field(&c.scheme),
            c.t,
            c.quartile,
            num(c.stat.mean),
            num(c.stat.sd),
            c.stat.n
        ))?;
    }
    f.finish()?;

    write_json(&out_dir.join("summary.json"), &report.summary)?;
    #[derive(Serialize)]
    struct Directions<'a> {
        schema_version: u32,
        config: &'a RunConfig,
        calibrated: bool,
        standalone_directions: &'a DirectionTable,
    }
    write_json(
        &out_dir.join("standalone_directions.json"),
        &Directions {
            schema_version: SCHEMA_VERSION,
            config: &report.summary.config,
            calibrated: report.summary.directions_calibrated,
            standalone_directions: &report.summary.standalone_directions,
        },
    )
}

/// Run (or resume) the study and write the report.
pub fn run_simulation_study(config: &RunConfig, runtime: &RuntimeOptions, resume: bool) -> Result<EvalReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(runtime.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let echo = config.echo();
    create_dir(&runtime.out_dir.join("checkpoints"))?;
    let datasets = pool.install(|| {
        dataset_ids(config)
            .into_par_iter()
            .map(|id| {
                let path = checkpoint_path(&runtime.out_dir, id);
                if resume {
                    if let Some(r) = load_checkpoint(&path, &echo, id) {
                        return Ok(r);
                    }
                }
                let r = evaluate_dataset(config, id)?;
                save_checkpoint(&path, &echo, &r)?;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let report = build_report(config, datasets)?;
    write_report(&report, &runtime.out_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::desk();
        c.filter.particles = 300;
        c.stds = vec![0.001, 0.021, 0.061];
        c.simulation.matrices = vec![40, 80];
        c.simulation.noise_levels = vec![1];
        c.simulation.length = 60;
        c.seed = 9;
        c
    }

    #[test]
    fn scored_scheme_set() {
        let s = scored_schemes();
        assert_eq!(s.len(), 5 + 11 + 24);
        let labels: std::collections::BTreeSet<String> = s.iter().map(|x| x.label()).collect();
        assert_eq!(labels.len(), s.len());
    }

    #[test]
    fn report_shapes_and_resume() {
        let cfg = tiny();
        let dir = tempfile::tempdir().unwrap();
        let rt = RuntimeOptions {
            out_dir: dir.path().to_path_buf(),
            threads: Some(2),
        };
        let a = run_simulation_study(&cfg, &rt, false).unwrap();
        assert_eq!(a.datasets.len(), 2);
        // 30 schemes x 6 aggregations x 2 datasets
        assert_eq!(a.rows.len(), 30 * 6 * 2);
        assert_eq!(a.curves.len(), 30 * 59);
        assert_eq!(a.summary.standalone_directions.len(), 12);
        let oracle = a.mean_error("ideal_oracle", AggregationSpec::Quartile(2)).unwrap();
        let lowest = a.mean_error("lowest_sigma", AggregationSpec::Quartile(2)).unwrap();
        assert!(oracle <= lowest + 1e-15);
        let before = fs::read(dir.path().join("errors.csv")).unwrap();

        // drop one checkpoint and resume
        fs::remove_file(checkpoint_path(dir.path(), a.datasets[1].id)).unwrap();
        let b = run_simulation_study(&cfg, &RuntimeOptions { threads: Some(1), ..rt.clone() }, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(before, fs::read(dir.path().join("errors.csv")).unwrap());
    }

    #[test]
    fn stale_checkpoints_are_ignored() {
        let cfg = tiny();
        let dir = tempfile::tempdir().unwrap();
        let id = dataset_ids(&cfg)[0];
        let path = checkpoint_path(dir.path(), id);
        create_dir(path.parent().unwrap()).unwrap();
        let r = evaluate_dataset(&cfg, id).unwrap();
        save_checkpoint(&path, "other config", &r).unwrap();
        assert!(load_checkpoint(&path, &cfg.echo(), id).is_none());
        assert_eq!(load_checkpoint(&path, "other config", id).unwrap(), r);
    }

    #[test]
    fn stat_ignores_missing() {
        let s = Stat::of([Some(1.0), None, Some(3.0)]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.sd, Some(2f64.sqrt()));
        assert_eq!(s.n, 2);
        assert_eq!(Stat::of([None]).mean, None);
    }
}

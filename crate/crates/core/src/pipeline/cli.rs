//! Command-line interface.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
//! configuration error. Failures print `{"error": kind, "message": text}` on
//! stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use super::config::{RunConfig, RuntimeOptions, Scale};
use super::human::{run_human_study, synthetic_fixture, FixtureSpec};
use super::ingest::RawRecording;
use super::io::{
    read_json, read_matrices_csv, read_series_csv, truth_path, write_json, write_matrices_csv, write_series_csv,
    TextFile, TruthSidecar,
};
use super::study::run_simulation_study;
use crate::dynamics::{grid_spec, simulate, DESK_MATRICES, DESK_NOISE, GRID_MATRICES, NOISE_LEVELS};
use crate::error::{Error, Result};
use crate::features::summarize;
use crate::inference::{grid_search, run_filter, InferenceRun};
use crate::metrics::{crqa, gc_strength, granger_with, MetricId};
use crate::selection::{select, Direction, OracleTarget, SelectionScheme, SelectionStyle};
use crate::domain::AggregationSpec;

#[derive(Debug, Parser)]
#[command(name = "ctxmat", version, about = "Infer context matrices from multi-agent behavioral time series")]
pub struct Cli {
    /// JSON run config; defaults to the preset of the chosen scale.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores. Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write simulated datasets with ground-truth sidecars.
    Simulate {
        #[arg(long, default_value = "desk")]
        grid: Scale,
        /// Series length; defaults to the config's.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Run the particle filter at one std.
    Infer {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the first std of the config grid.
        #[arg(long)]
        std: Option<f64>,
        #[arg(long)]
        particles: Option<usize>,
    },
    /// Grid search over stds and select one run.
    Select {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Ground-truth sidecar for the ideal oracle; defaults to the input's.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Aggregation the oracle scores against.
        #[arg(long, default_value = "q2")]
        aggregation: AggregationSpec,
    },
    /// Summary features of a matrix series.
    Features {
        #[arg(long)]
        matrices: PathBuf,
    },
    /// Cross-recurrence metrics between the first two agents, per channel.
    Crqa {
        #[arg(long)]
        input: PathBuf,
    },
    /// Granger statistics between the first two agents, per channel.
    Granger {
        #[arg(long)]
        input: PathBuf,
    },
    /// Simulation accuracy study.
    EvalSim {
        #[arg(long, default_value = "desk")]
        scale: Scale,
        /// Reuse checkpoints written under the same config.
        #[arg(long)]
        resume: bool,
    },
    /// Human-data study on a raw recording or a synthetic fixture.
    EvalHuman {
        #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
        input: Option<PathBuf>,
        /// Screen geometry sidecar for `--input`.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        /// Generate and analyze the synthetic two-task recording.
        #[arg(long)]
        fixture: bool,
        #[arg(long, default_value_t = 6)]
        fixture_pairs: usize,
    },
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    #[arg(long, default_value = "between_subjects")]
    pub select_style: String,
    #[arg(long)]
    pub select_metric: Option<String>,
    #[arg(long)]
    pub select_direction: Option<String>,
}

impl SchemeArgs {
    pub fn scheme(&self) -> Result<SelectionScheme> {
        let style: SelectionStyle = self.select_style.parse()?;
        let metric: Option<MetricId> = self.select_metric.as_deref().map(str::parse).transpose()?;
        let direction: Option<Direction> = self.select_direction.as_deref().map(str::parse).transpose()?;
        let need = || metric.ok_or_else(|| Error::Config(format!("--select-metric is required for {}", style.name())));
        let mut scheme = match style {
            SelectionStyle::IdealOracle => SelectionScheme::ideal_oracle(),
            SelectionStyle::LowestSigma => SelectionScheme::lowest_sigma(),
            SelectionStyle::BetweenSubjects => SelectionScheme::between(need()?),
            SelectionStyle::WithinSubjects => SelectionScheme::within(need()?),
            SelectionStyle::Standalone => SelectionScheme::standalone(
                need()?,
                direction.ok_or_else(|| Error::Config("--select-direction is required for standalone".into()))?,
            ),
        };
        if let Some(d) = direction {
            scheme.direction = d;
        }
        if metric.is_some() && scheme.metric.is_none() {
            return Err(Error::Config(format!("{} takes no metric", style.name())));
        }
        scheme.validate()?;
        Ok(scheme)
    }
}

fn resolve_config(cli: &Cli, scale: Scale) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::preset(scale),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("series").to_string()
}

fn write_run(run: &InferenceRun, dir: &Path, name: &str, echo: &str) -> Result<()> {
    write_matrices_csv(&dir.join(format!("{name}.matrices.csv")), &run.map_series, echo)?;
    write_series_csv(&dir.join(format!("{name}.predicted.csv")), &run.predicted, echo)?;
    let mut f = TextFile::create(&dir.join(format!("{name}.diagnostics.csv")))?;
    f.header("ctxmat-diagnostics/1", echo)?;
    f.line("t,ess,underflow")?;
    for (k, ess) in run.ess.iter().enumerate() {
        f.line(&format!("{},{ess},{}", k + 2, u8::from(run.underflow_steps.contains(&k))))?;
    }
    f.finish()
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let runtime = RuntimeOptions {
        out_dir: cli.out_dir.clone(),
        threads: cli.threads,
    };
    let out = &cli.out_dir;
    match &cli.command {
        Command::Simulate { grid, length } => {
            let mut cfg = resolve_config(cli, *grid)?;
            if let Some(l) = length {
                cfg.simulation.length = *l;
            }
            match grid {
                Scale::Full => {
                    cfg.simulation.matrices = (0..GRID_MATRICES).collect();
                    cfg.simulation.noise_levels = (0..NOISE_LEVELS.len()).collect();
                }
                Scale::Desk if cli.config.is_none() => {
                    cfg.simulation.matrices = DESK_MATRICES.to_vec();
                    cfg.simulation.noise_levels = DESK_NOISE.to_vec();
                }
                _ => {}
            }
            cfg.validate()?;
            let echo = cfg.echo();
            let mut written = 0usize;
            for &m in &cfg.simulation.matrices {
                for &a in &cfg.simulation.noise_levels {
                    let spec = grid_spec(m, a, cfg.seed, cfg.dynamics, cfg.simulation.length)?;
                    let series = simulate(&spec)?;
                    let path = out.join(format!("{}.csv", spec.id.label()));
                    write_series_csv(&path, &series, &echo)?;
                    write_json(
                        &truth_path(&path),
                        &TruthSidecar {
                            schema_version: super::config::SCHEMA_VERSION,
                            spec,
                        },
                    )?;
                    written += 1;
                }
            }
            print_json(&json!({"datasets": written, "out_dir": out}))
        }
        Command::Infer { input, std, particles } => {
            let mut cfg = resolve_config(cli, Scale::Desk)?;
            if let Some(s) = std {
                cfg.stds = vec![*s];
            }
            cfg.stds.truncate(1);
            if let Some(p) = particles {
                cfg.filter.particles = *p;
            }
            cfg.validate()?;
            let series = read_series_csv(input)?;
            let mut fc = cfg.filter_template();
            fc.jitter_std = cfg.stds[0];
            let run = run_filter(&series, &fc)?;
            let name = stem(input);
            write_run(&run, out, &name, &cfg.echo())?;
            print_json(&json!({
                "std": run.jitter_std,
                "transitions": run.map_series.len(),
                "underflow_steps": run.underflow_steps.len(),
                "final": run.map_series.last().map(|m| m.rows()),
            }))
        }
        Command::Select {
            input,
            scheme,
            truth,
            aggregation,
        } => {
            let cfg = resolve_config(cli, Scale::Desk)?;
            let scheme = scheme.scheme()?;
            let series = read_series_csv(input)?;
            let truth_spec = if scheme.style == SelectionStyle::IdealOracle {
                let p = truth.clone().unwrap_or_else(|| truth_path(input));
                Some(read_json::<TruthSidecar>(&p)?.spec)
            } else {
                None
            };
            let runs = grid_search(&series, &cfg.filter_template(), &cfg.stds)?;
            let target = truth_spec.as_ref().map(|s| OracleTarget {
                truth: &s.matrix,
                aggregation: *aggregation,
            });
            let chosen = select(&runs, &series, &scheme, target)?;
            let echo = cfg.echo();
            let name = format!("{}.selected", stem(input));
            write_run(&runs[chosen.chosen_index], out, &name, &echo)?;
            #[derive(Serialize)]
            struct Selection<'a> {
                schema_version: u32,
                config: &'a RunConfig,
                scheme: String,
                stds: Vec<f64>,
                outcome: &'a crate::selection::SelectionOutcome,
            }
            write_json(
                &out.join(format!("{}.selection.json", stem(input))),
                &Selection {
                    schema_version: super::config::SCHEMA_VERSION,
                    config: &cfg,
                    scheme: scheme.label(),
                    stds: cfg.stds.clone(),
                    outcome: &chosen,
                },
            )?;
            print_json(&json!({"scheme": scheme.label(), "chosen_std": chosen.chosen_std}))
        }
        Command::Features { matrices } => {
            let cfg = resolve_config(cli, Scale::Desk)?;
            let series = read_matrices_csv(matrices)?;
            let summary = summarize(&series)?;
            let mut f = TextFile::create(&out.join(format!("{}.features.csv", stem(matrices))))?;
            f.header("ctxmat-features/1", &cfg.echo())?;
            f.line("feature,aggregation,value,used,missing")?;
            for r in &summary.rows {
                f.line(&format!(
                    "{},{},{},{},{}",
                    r.feature,
                    r.aggregation,
                    super::io::num(r.value),
                    r.used,
                    r.missing
                ))?;
            }
            f.finish()?;
            print_json(&summary)
        }
        Command::Crqa { input } => {
            let cfg = resolve_config(cli, Scale::Desk)?;
            let series = read_series_csv(input)?;
            pair_check(&series)?;
            let mut f = TextFile::create(&out.join(format!("{}.crqa.csv", stem(input))))?;
            f.header("ctxmat-crqa/1", &cfg.echo())?;
            f.line("channel,rr,det,ent,maxl")?;
            let mut rows = Vec::new();
            for (h, ch) in series.channels().iter().enumerate() {
                let m = crqa(&series.trace(0, h), &series.trace(1, h), &cfg.crqa)?;
                f.line(&format!("{},{},{},{},{}", super::io::field(ch), m.rr, m.det, m.ent, m.maxl))?;
                rows.push(json!({"channel": ch, "rr": m.rr, "det": m.det, "ent": m.ent, "maxl": m.maxl}));
            }
            f.finish()?;
            print_json(&rows)
        }
        Command::Granger { input } => {
            let cfg = resolve_config(cli, Scale::Desk)?;
            let series = read_series_csv(input)?;
            pair_check(&series)?;
            let mut f = TextFile::create(&out.join(format!("{}.granger.csv", stem(input))))?;
            f.header("ctxmat-granger/1", &cfg.echo())?;
            f.line("channel,gc_1to2,gc_2to1,lag,first_differences,asymmetry")?;
            let mut results = Vec::new();
            for (h, ch) in series.channels().iter().enumerate() {
                let g = granger_with(&series.trace(0, h), &series.trace(1, h), &cfg.granger)?;
                f.line(&format!(
                    "{},{},{},{},{},{}",
                    super::io::field(ch),
                    g.gc_1to2,
                    g.gc_2to1,
                    g.lag,
                    g.used_first_differences,
                    super::io::num(g.asymmetry())
                ))?;
                results.push(g);
            }
            f.finish()?;
            let strength = gc_strength(&results).ok().map(|s| s.value);
            print_json(&json!({"channels": results.len(), "gc_strength": strength}))
        }
        Command::EvalSim { scale, resume } => {
            let cfg = resolve_config(cli, *scale)?;
            let report = run_simulation_study(&cfg, &runtime, *resume)?;
            print_json(&report.summary.headline)
        }
        Command::EvalHuman {
            input,
            sidecar,
            fixture,
            fixture_pairs,
        } => {
            let cfg = resolve_config(cli, Scale::Desk)?;
            let raw = if *fixture {
                let spec = FixtureSpec {
                    seed: cfg.seed,
                    pairs: *fixture_pairs,
                    bin_ms: cfg.human.bin_ms,
                    params: cfg.dynamics,
                    ..FixtureSpec::default()
                };
                let raw = synthetic_fixture(&spec)?;
                raw.write(&out.join("fixture.csv"), &out.join("fixture.json"))?;
                raw
            } else {
                let p = input.as_ref().expect("clap requires input without --fixture");
                RawRecording::read(p, sidecar.as_deref())?
            };
            let report = run_human_study(&raw, &cfg, &runtime)?;
            print_json(&json!({
                "rows": report.features.len(),
                "selected": report.selected.len(),
                "failures": report.failures.len(),
            }))
        }
    }
}

fn pair_check(series: &crate::domain::BehaviorSeries) -> Result<()> {
    if series.n_agents() < 2 {
        return Err(Error::Dimension(format!("need two agents, found {}", series.n_agents())));
    }
    Ok(())
}

/// Parse, run and map the outcome to an exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", json!({"error": "usage", "message": e.to_string().trim_end()}));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

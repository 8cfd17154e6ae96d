//! CSV and JSON persistence.
//!
//! Every CSV file starts with `#` comment lines: a format tag and the config
//! echo. Readers skip comment lines.
//!
//! Series files are long format with header `t,segment,agent,channel,value`,
//! rows ordered by `t`, then agent, then channel. Matrix series files use
//! `t,row,col,value` with `t` counting transitions from 1.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{BehaviorFrame, BehaviorSeries, ContextMatrix, Segment};
use crate::dynamics::GroundTruthSpec;
use crate::error::{Error, Result};

pub const SERIES_FORMAT: &str = "ctxmat-series/1";
pub const MATRIX_FORMAT: &str = "ctxmat-matrices/1";

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Buffered file writer with an I/O error mapped to its path.
pub struct TextFile {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TextFile {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}").map_err(|e| Error::io(&self.path, e))
    }

    /// Format tag and config echo as comment lines.
    pub fn header(&mut self, format: &str, echo: &str) -> Result<()> {
        self.line(&format!("# format: {format}"))?;
        self.line(&format!("# config: {echo}"))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Quote a CSV field when needed.
pub fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Float cell; missing values are empty.
pub fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = TextFile::create(path)?;
    let text = serde_json::to_string_pretty(value)?;
    f.line(&text)?;
    f.finish()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_series_csv(path: &Path, series: &BehaviorSeries, echo: &str) -> Result<()> {
    let mut f = TextFile::create(path)?;
    f.header(SERIES_FORMAT, echo)?;
    f.line("t,segment,agent,channel,value")?;
    for seg in series.segments() {
        for t in seg.range() {
            let frame = series.frame(t);
            for (a, agent) in series.agents().iter().enumerate() {
                for (h, ch) in series.channels().iter().enumerate() {
                    f.line(&format!(
                        "{t},{},{},{},{}",
                        field(&seg.label),
                        field(agent),
                        field(ch),
                        frame.get(a, h)
                    ))?;
                }
            }
        }
    }
    f.finish()
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(parse_err(path, format!("expected header {expected:?}, got {got:?}")));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SeriesRow {
    t: usize,
    segment: String,
    agent: String,
    channel: String,
    value: f64,
}

/// Read a series written by [`write_series_csv`] (or any file with the same
/// header and row order).
pub fn read_series_csv(path: &Path) -> Result<BehaviorSeries> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &["t", "segment", "agent", "channel", "value"])?;
    let rows: Vec<SeriesRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    let mut agents: Vec<String> = Vec::new();
    let mut channels: Vec<String> = Vec::new();
    for r in rows.iter().take_while(|r| r.t == rows[0].t) {
        if !agents.contains(&r.agent) {
            agents.push(r.agent.clone());
        }
        if !channels.contains(&r.channel) {
            channels.push(r.channel.clone());
        }
    }
    let per_frame = agents.len() * channels.len();
    if rows.len() % per_frame != 0 {
        return Err(parse_err(path, "row count is not a whole number of frames"));
    }
    let mut frames = Vec::with_capacity(rows.len() / per_frame);
    let mut segments: Vec<Segment> = Vec::new();
    for (t, chunk) in rows.chunks(per_frame).enumerate() {
        for (k, r) in chunk.iter().enumerate() {
            let (a, h) = (k / channels.len(), k % channels.len());
            if r.t != chunk[0].t || r.agent != agents[a] || r.channel != channels[h] {
                return Err(parse_err(path, format!("frame {t}: rows must be ordered by agent then channel")));
            }
            if r.segment != chunk[0].segment {
                return Err(parse_err(path, format!("frame {t}: mixed segment labels")));
            }
        }
        if t > 0 && chunk[0].t <= rows[(t - 1) * per_frame].t {
            return Err(parse_err(path, format!("time index must increase, got {} after frame {}", chunk[0].t, t - 1)));
        }
        frames.push(BehaviorFrame::new(
            agents.len(),
            channels.len(),
            chunk.iter().map(|r| r.value).collect(),
        )?);
        match segments.last_mut() {
            Some(s) if s.label == chunk[0].segment => s.end = t + 1,
            _ => segments.push(Segment {
                label: chunk[0].segment.clone(),
                start: t,
                end: t + 1,
            }),
        }
    }
    BehaviorSeries::new(agents, channels, frames)?.with_segments(segments)
}

/// Matrix series with `t` numbering the transition target (2..=T).
pub fn write_matrices_csv(path: &Path, matrices: &[ContextMatrix], echo: &str) -> Result<()> {
    let mut f = TextFile::create(path)?;
    f.header(MATRIX_FORMAT, echo)?;
    f.line("t,row,col,value")?;
    for (k, m) in matrices.iter().enumerate() {
        let n = m.order();
        for r in 0..n {
            for c in 0..n {
                f.line(&format!("{},{},{},{}", k + 2, r + 1, c + 1, m.get(r, c)))?;
            }
        }
    }
    f.finish()
}

#[derive(Debug, Deserialize)]
struct MatrixRow {
    t: usize,
    row: usize,
    col: usize,
    value: f64,
}

pub fn read_matrices_csv(path: &Path) -> Result<Vec<ContextMatrix>> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &["t", "row", "col", "value"])?;
    let rows: Vec<MatrixRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    let first_t = rows.first().ok_or_else(|| parse_err(path, "no data rows"))?.t;
    let cells = rows.iter().take_while(|r| r.t == first_t).count();
    let n = (cells as f64).sqrt().round() as usize;
    if n * n != cells || rows.len() % cells != 0 {
        return Err(parse_err(path, "rows do not form square matrices"));
    }
    rows.chunks(cells)
        .map(|chunk| {
            let mut entries = vec![f64::NAN; cells];
            for r in chunk {
                if r.t != chunk[0].t || r.row == 0 || r.col == 0 || r.row > n || r.col > n {
                    return Err(parse_err(path, format!("bad cell ({}, {}) at t = {}", r.row, r.col, r.t)));
                }
                entries[(r.row - 1) * n + (r.col - 1)] = r.value;
            }
            ContextMatrix::new(n, entries)
        })
        .collect()
}

/// Ground-truth sidecar written next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub schema_version: u32,
    pub spec: GroundTruthSpec,
}

pub fn truth_path(series_path: &Path) -> PathBuf {
    let stem = series_path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    series_path.with_file_name(format!("{stem}.truth.json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DynamicsParams;
    use crate::dynamics::{grid_spec, simulate};

    #[test]
    fn series_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = grid_spec(57, 3, 11, DynamicsParams::SIMULATION, 40).unwrap();
        spec.channels = 2;
        let s = simulate(&spec)
            .unwrap()
            .with_segments(vec![
                Segment { label: "1".into(), start: 0, end: 25 },
                Segment { label: "a,b".into(), start: 25, end: 40 },
            ])
            .unwrap();
        let p = dir.path().join("s.csv");
        write_series_csv(&p, &s, "{}").unwrap();
        assert_eq!(read_series_csv(&p).unwrap(), s);
    }

    #[test]
    fn matrices_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ms = vec![
            ContextMatrix::new(2, vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0]).unwrap(),
            ContextMatrix::identity(2),
        ];
        let p = dir.path().join("m.csv");
        write_matrices_csv(&p, &ms, "{}").unwrap();
        assert_eq!(read_matrices_csv(&p).unwrap(), ms);
    }

    #[test]
    fn malformed_series_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "t,segment,agent,channel,value\n0,all,1,b,0.5\n0,all,2,b,x\n").unwrap();
        assert!(read_series_csv(&p).is_err());
        fs::write(&p, "time,agent\n0,1\n").unwrap();
        assert!(matches!(read_series_csv(&p), Err(Error::Parse { .. })));
        assert!(matches!(read_series_csv(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }
}

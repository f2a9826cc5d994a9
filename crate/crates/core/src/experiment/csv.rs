//! CSV rendering and parsing of traces, baseline tables and sweeps.
//!
//! Every file opens with `#` comment lines carrying the schema version, the
//! full config as one-line JSON, the root seed and the random-stream layout.

use std::fmt::Write as _;

use super::ExperimentConfig;
use crate::engine::SyncRecord;
use crate::error::{Error, Result};
use crate::rng::STREAM_DERIVATION;

pub const SCHEMA_VERSION: u32 = 1;

/// Trace columns, in order.
pub const TRACE_COLUMNS: [&str; 8] = [
    "t",
    "comm_count",
    "eps_spent",
    "delta_spent",
    "sin_theta_k",
    "rho_t",
    "eta",
    "wall_ms",
];

const BASELINE_COLUMNS: &str = "algorithm,mean_final_sin_theta_k,std_final_sin_theta_k,repeats";
const SWEEP_COLUMNS: &str =
    "epsilon,status,min_sin_theta_k_mean,min_sin_theta_k_std,eps_spent,delta_spent,error";

/// Shortest round-trip text for a float; exponent form outside [1e-4, 1e15).
pub(crate) fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Mean and sample standard deviation (0 for a single sample).
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One line of a trace. Missing values (untracked ρ, disabled timing) are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub comm_count: usize,
    pub eps_spent: f64,
    pub delta_spent: f64,
    pub sin_theta_k: f64,
    pub rho_t: Option<f64>,
    pub eta: f64,
    pub wall_ms: Option<f64>,
}

impl TraceRow {
    pub fn from_record(r: &SyncRecord, timing: bool) -> Self {
        Self {
            t: r.t,
            comm_count: r.comm_count,
            eps_spent: r.eps_spent,
            delta_spent: r.delta_spent,
            sin_theta_k: r.sin_theta_k,
            rho_t: (!r.rho_t.is_nan()).then_some(r.rho_t),
            eta: r.eta,
            wall_ms: timing.then_some(r.wall_ms),
        }
    }

    fn render(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t,
            self.comm_count,
            fmt_f64(self.eps_spent),
            fmt_f64(self.delta_spent),
            fmt_f64(self.sin_theta_k),
            fmt_opt(self.rho_t),
            fmt_f64(self.eta),
            fmt_opt(self.wall_ms),
        )
    }

    fn parse(line: &str, at: &Cursor) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != TRACE_COLUMNS.len() {
            return Err(at.error(format!(
                "expected {} fields, found {}",
                TRACE_COLUMNS.len(),
                fields.len()
            )));
        }
        let int = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| at.error(format!("bad {} value {:?}", TRACE_COLUMNS[i], fields[i])))
        };
        let float = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| at.error(format!("bad {} value {:?}", TRACE_COLUMNS[i], fields[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                float(i).map(Some)
            }
        };
        Ok(Self {
            t: int(0)?,
            comm_count: int(1)?,
            eps_spent: float(2)?,
            delta_spent: float(3)?,
            sin_theta_k: float(4)?,
            rho_t: opt(5)?,
            eta: float(6)?,
            wall_ms: opt(7)?,
        })
    }
}

/// The records of one repeat.
#[derive(Clone, Debug, PartialEq)]
pub struct RepeatTrace {
    pub index: usize,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
}

impl RepeatTrace {
    pub fn final_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.sin_theta_k)
    }

    pub fn min_error(&self) -> f64 {
        self.min_error_through(usize::MAX)
    }

    pub fn min_error_through(&self, horizon: usize) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.t <= horizon)
            .map(|r| r.sin_theta_k)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Mean ± sample std over repeats of the final and minimum error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub final_mean: f64,
    pub final_std: f64,
    pub min_mean: f64,
    pub min_std: f64,
}

impl Summary {
    pub fn of(repeats: &[RepeatTrace]) -> Self {
        let finals: Vec<f64> = repeats.iter().map(RepeatTrace::final_error).collect();
        let mins: Vec<f64> = repeats.iter().map(RepeatTrace::min_error).collect();
        let (final_mean, final_std) = mean_std(&finals);
        let (min_mean, min_std) = mean_std(&mins);
        Self {
            final_mean,
            final_std,
            min_mean,
            min_std,
        }
    }
}

/// Header fields shared by every output file.
#[derive(Clone, Debug, PartialEq)]
struct Preamble {
    kind: String,
    schema_version: u32,
    config: String,
    seed: u64,
    streams: String,
}

impl Preamble {
    fn new(kind: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            kind: kind.to_string(),
            schema_version: SCHEMA_VERSION,
            config: cfg.to_json(),
            seed: cfg.run.seed,
            streams: STREAM_DERIVATION.to_string(),
        }
    }

    fn render(&self, out: &mut String) {
        writeln!(out, "# {} schema_version={}", self.kind, self.schema_version).unwrap();
        writeln!(out, "# config={}", self.config).unwrap();
        writeln!(out, "# seed={}", self.seed).unwrap();
        writeln!(out, "# streams={}", self.streams).unwrap();
    }

    fn parse(kind: &str, lines: &mut Lines<'_>) -> Result<Self> {
        let (first, at) = lines.next_required()?;
        let rest = first
            .strip_prefix("# ")
            .and_then(|s| s.strip_prefix(kind))
            .and_then(|s| s.strip_prefix(" schema_version="))
            .ok_or_else(|| at.error(format!("expected '# {kind} schema_version=N'")))?;
        let schema_version: u32 = rest.parse().map_err(|_| at.error("bad schema version"))?;
        if schema_version != SCHEMA_VERSION {
            return Err(at.error(format!("unsupported schema version {schema_version}")));
        }
        let mut field = |name: &str| -> Result<String> {
            let (line, at) = lines.next_required()?;
            line.strip_prefix("# ")
                .and_then(|s| s.strip_prefix(name))
                .and_then(|s| s.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| at.error(format!("expected '# {name}=...'")))
        };
        let config = field("config")?;
        let seed_text = field("seed")?;
        let streams = field("streams")?;
        let seed = seed_text
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad seed {seed_text:?}")))?;
        Ok(Self {
            kind: kind.to_string(),
            schema_version,
            config,
            seed,
            streams,
        })
    }
}

/// Position in the text, for error messages.
#[derive(Clone, Copy, Debug)]
struct Cursor {
    line: usize,
    offset: usize,
}

impl Cursor {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            offset: self.offset,
            message: message.into(),
        }
    }
}

struct Lines<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0, line: 0 }
    }

    fn next(&mut self) -> Option<(&'a str, Cursor)> {
        if self.pos >= self.text.len() {
            return None;
        }
        let rest = &self.text[self.pos..];
        let len = rest.find('\n').unwrap_or(rest.len());
        let at = Cursor {
            line: self.line + 1,
            offset: self.pos,
        };
        self.pos += (len + 1).min(rest.len());
        self.line += 1;
        Some((rest[..len].trim_end_matches('\r'), at))
    }

    fn next_required(&mut self) -> Result<(&'a str, Cursor)> {
        let end = Cursor {
            line: self.line + 1,
            offset: self.text.len(),
        };
        self.next().ok_or_else(|| end.error("unexpected end of file"))
    }
}

/// A complete experiment trace: header, per-repeat rows and a summary.
///
/// ```text
/// # fedpower-trace schema_version=1
/// # config={...}
/// # seed=42
/// # streams=...
/// t,comm_count,eps_spent,delta_spent,sin_theta_k,rho_t,eta,wall_ms
/// # repeat=0 seed=...
/// 1,1,inf,0,0.31,0.02,0.5,
/// # summary final_mean=... final_std=... min_mean=... min_std=... repeats=1
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTrace {
    pub schema_version: u32,
    /// The experiment config as one-line JSON.
    pub config: String,
    pub seed: u64,
    pub stream_derivation: String,
    pub repeats: Vec<RepeatTrace>,
    pub summary: Summary,
}

const TRACE_KIND: &str = "fedpower-trace";

impl CsvTrace {
    pub fn new(cfg: &ExperimentConfig, repeats: Vec<RepeatTrace>) -> Self {
        let p = Preamble::new(TRACE_KIND, cfg);
        let summary = Summary::of(&repeats);
        Self {
            schema_version: p.schema_version,
            config: p.config,
            seed: p.seed,
            stream_derivation: p.streams,
            repeats,
            summary,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        Preamble {
            kind: TRACE_KIND.into(),
            schema_version: self.schema_version,
            config: self.config.clone(),
            seed: self.seed,
            streams: self.stream_derivation.clone(),
        }
        .render(&mut out);
        out.push_str(&TRACE_COLUMNS.join(","));
        out.push('\n');
        for rep in &self.repeats {
            writeln!(out, "# repeat={} seed={}", rep.index, rep.seed).unwrap();
            for row in &rep.rows {
                out.push_str(&row.render());
                out.push('\n');
            }
        }
        let s = &self.summary;
        writeln!(
            out,
            "# summary final_mean={} final_std={} min_mean={} min_std={} repeats={}",
            fmt_f64(s.final_mean),
            fmt_f64(s.final_std),
            fmt_f64(s.min_mean),
            fmt_f64(s.min_std),
            self.repeats.len()
        )
        .unwrap();
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let p = Preamble::parse(TRACE_KIND, &mut lines)?;
        let (header, at) = lines.next_required()?;
        if header != TRACE_COLUMNS.join(",") {
            return Err(at.error(format!("unexpected column header {header:?}")));
        }
        let mut repeats: Vec<RepeatTrace> = Vec::new();
        let mut summary = None;
        while let Some((line, at)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# repeat=") {
                let (index, seed) = rest
                    .split_once(" seed=")
                    .and_then(|(i, s)| Some((i.parse().ok()?, s.parse().ok()?)))
                    .ok_or_else(|| at.error("bad repeat marker"))?;
                repeats.push(RepeatTrace {
                    index,
                    seed,
                    rows: Vec::new(),
                });
            } else if let Some(rest) = line.strip_prefix("# summary ") {
                let kv = parse_pairs(rest, &at)?;
                let get = |k: &str| -> Result<f64> {
                    kv.iter()
                        .find(|(key, _)| *key == k)
                        .and_then(|(_, v)| v.parse().ok())
                        .ok_or_else(|| at.error(format!("summary is missing {k}")))
                };
                summary = Some(Summary {
                    final_mean: get("final_mean")?,
                    final_std: get("final_std")?,
                    min_mean: get("min_mean")?,
                    min_std: get("min_std")?,
                });
            } else if line.starts_with('#') {
                continue;
            } else {
                let row = TraceRow::parse(line, &at)?;
                repeats
                    .last_mut()
                    .ok_or_else(|| at.error("data row before any repeat marker"))?
                    .rows
                    .push(row);
            }
        }
        let end = Cursor {
            line: lines.line,
            offset: text.len(),
        };
        Ok(Self {
            schema_version: p.schema_version,
            config: p.config,
            seed: p.seed,
            stream_derivation: p.streams,
            repeats,
            summary: summary.ok_or_else(|| end.error("missing summary line"))?,
        })
    }
}

fn parse_pairs<'a>(text: &'a str, at: &Cursor) -> Result<Vec<(&'a str, &'a str)>> {
    text.split_whitespace()
        .map(|kv| kv.split_once('=').ok_or_else(|| at.error(format!("bad key=value {kv:?}"))))
        .collect()
}

/// Final-error statistics of one algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRow {
    pub algorithm: String,
    pub mean: f64,
    pub std: f64,
    pub repeats: usize,
}

impl BaselineRow {
    pub fn from_samples(algorithm: &str, samples: &[f64]) -> Self {
        let (mean, std) = mean_std(samples);
        Self {
            algorithm: algorithm.to_string(),
            mean,
            std,
            repeats: samples.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineTable {
    pub config: String,
    pub seed: u64,
    pub rows: Vec<BaselineRow>,
}

const BASELINE_KIND: &str = "fedpower-baselines";

impl BaselineTable {
    pub fn new(cfg: &ExperimentConfig, rows: Vec<BaselineRow>) -> Self {
        Self {
            config: cfg.to_json(),
            seed: cfg.run.seed,
            rows,
        }
    }

    pub fn row(&self, algorithm: &str) -> Option<&BaselineRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        Preamble {
            kind: BASELINE_KIND.into(),
            schema_version: SCHEMA_VERSION,
            config: self.config.clone(),
            seed: self.seed,
            streams: STREAM_DERIVATION.into(),
        }
        .render(&mut out);
        out.push_str(BASELINE_COLUMNS);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.algorithm,
                fmt_f64(r.mean),
                fmt_f64(r.std),
                r.repeats
            )
            .unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let p = Preamble::parse(BASELINE_KIND, &mut lines)?;
        let (header, at) = lines.next_required()?;
        if header != BASELINE_COLUMNS {
            return Err(at.error(format!("unexpected column header {header:?}")));
        }
        let mut rows = Vec::new();
        while let Some((line, at)) = lines.next() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(at.error(format!("expected 4 fields, found {}", f.len())));
            }
            let bad = |what: &str| at.error(format!("bad {what}"));
            rows.push(BaselineRow {
                algorithm: f[0].to_string(),
                mean: f[1].parse().map_err(|_| bad("mean"))?,
                std: f[2].parse().map_err(|_| bad("std"))?,
                repeats: f[3].parse().map_err(|_| bad("repeats"))?,
            });
        }
        Ok(Self {
            config: p.config,
            seed: p.seed,
            rows,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SweepOutcome {
    Completed {
        /// Minimum error over the sweep horizon, mean and std over repeats.
        min_mean: f64,
        min_std: f64,
        /// Spend at the end of the run.
        eps_spent: f64,
        delta_spent: f64,
        trace: CsvTrace,
    },
    Failed {
        kind: String,
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub outcome: SweepOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub config: String,
    pub seed: u64,
    /// Iterations covered by the minimum-error column.
    pub horizon: usize,
    pub entries: Vec<SweepEntry>,
}

impl SweepTable {
    pub fn new(cfg: &ExperimentConfig, horizon: usize, entries: Vec<SweepEntry>) -> Self {
        Self {
            config: cfg.to_json(),
            seed: cfg.run.seed,
            horizon,
            entries,
        }
    }

    pub fn all_completed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| matches!(e.outcome, SweepOutcome::Completed { .. }))
    }

    /// Summary table, one row per ε. Per-ε traces are available on the entries.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        Preamble {
            kind: "fedpower-sweep".into(),
            schema_version: SCHEMA_VERSION,
            config: self.config.clone(),
            seed: self.seed,
            streams: STREAM_DERIVATION.into(),
        }
        .render(&mut out);
        writeln!(out, "# horizon={}", self.horizon).unwrap();
        out.push_str(SWEEP_COLUMNS);
        out.push('\n');
        for e in &self.entries {
            match &e.outcome {
                SweepOutcome::Completed {
                    min_mean,
                    min_std,
                    eps_spent,
                    delta_spent,
                    ..
                } => writeln!(
                    out,
                    "{},ok,{},{},{},{},",
                    fmt_f64(e.epsilon),
                    fmt_f64(*min_mean),
                    fmt_f64(*min_std),
                    fmt_f64(*eps_spent),
                    fmt_f64(*delta_spent)
                ),
                SweepOutcome::Failed { kind, .. } => {
                    writeln!(out, "{},failed,,,,,{}", fmt_f64(e.epsilon), kind)
                }
            }
            .unwrap();
        }
        out
    }
}

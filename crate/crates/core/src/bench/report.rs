//! Text form of benchmark reports.
//!
//! A report is UTF-8 text: `key=value` lines, one blank line, then a
//! tab-separated table whose first line is the column header. Floats are
//! printed in their shortest exact form so a report parses back to the same
//! values. Lines starting with `#` are comments and are ignored on parse.
//!
//! Shown with spaces where the real table has tabs:
//!
//! ```text
//! report=cache
//! machine=x86_64-linux cpus=8 host=lab1
//! timestamp=1760000000
//! runs=3
//!
//! workload  phase  scale_factor  files  file_bytes  baseline  candidate  baseline_s  candidate_s  ratio  reference_ratio  cv  noisy  regression
//! small  write  100  10000  1024  disk  memory  0.41  0.052  7.884615384615385  3  0.04  no  no
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::cache::{Backend, Phase, Workload};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct ReportParseError {
    pub line: usize,
    pub reason: String,
}

fn perr(line: usize, reason: impl Into<String>) -> ReportParseError {
    ReportParseError {
        line,
        reason: reason.into(),
    }
}

/// Splits report text into its key=value section and table rows, with
/// 1-based line numbers.
struct Sections<'a> {
    meta: Vec<(usize, &'a str, &'a str)>,
    header: Option<(usize, &'a str)>,
    rows: Vec<(usize, &'a str)>,
}

fn split_sections(text: &str) -> Result<Sections<'_>, ReportParseError> {
    let mut s = Sections {
        meta: Vec::new(),
        header: None,
        rows: Vec::new(),
    };
    let mut in_table = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.starts_with('#') {
            continue;
        }
        if !in_table {
            if line.is_empty() {
                in_table = true;
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(n, "expected key=value"))?;
            s.meta.push((n, k, v));
        } else if line.is_empty() {
            continue;
        } else if s.header.is_none() {
            s.header = Some((n, line));
        } else {
            s.rows.push((n, line));
        }
    }
    Ok(s)
}

fn meta_value<'a>(s: &Sections<'a>, key: &str) -> Result<&'a str, ReportParseError> {
    s.meta
        .iter()
        .find(|(_, k, _)| *k == key)
        .map(|(_, _, v)| *v)
        .ok_or_else(|| perr(0, format!("missing key {key:?}")))
}

fn parse_meta<T: FromStr>(s: &Sections<'_>, key: &str) -> Result<T, ReportParseError> {
    let line = s
        .meta
        .iter()
        .find(|(_, k, _)| *k == key)
        .map_or(0, |(n, _, _)| *n);
    meta_value(s, key)?
        .parse()
        .map_err(|_| perr(line, format!("bad value for {key:?}")))
}

fn check_header(s: &Sections<'_>, columns: &[&str]) -> Result<(), ReportParseError> {
    let (n, header) = s.header.ok_or_else(|| perr(0, "missing table header"))?;
    if header.split('\t').ne(columns.iter().copied()) {
        return Err(perr(n, "unexpected table header"));
    }
    Ok(())
}

struct Cells<'a> {
    line: usize,
    cells: std::str::Split<'a, char>,
}

impl<'a> Cells<'a> {
    fn new(line: usize, row: &'a str) -> Self {
        Self {
            line,
            cells: row.split('\t'),
        }
    }

    fn next<T: FromStr>(&mut self, column: &str) -> Result<T, ReportParseError> {
        let cell = self
            .cells
            .next()
            .ok_or_else(|| perr(self.line, format!("missing column {column}")))?;
        cell.parse()
            .map_err(|_| perr(self.line, format!("bad {column} {cell:?}")))
    }

    fn flag(&mut self, column: &str) -> Result<bool, ReportParseError> {
        match self.next::<String>(column)?.as_str() {
            "yes" => Ok(true),
            "no" => Ok(false),
            other => Err(perr(self.line, format!("bad {column} {other:?}"))),
        }
    }

    fn finish(mut self) -> Result<(), ReportParseError> {
        match self.cells.next() {
            None => Ok(()),
            Some(_) => Err(perr(self.line, "too many columns")),
        }
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// One phase of one workload: baseline vs candidate backend.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheRow {
    pub workload: Workload,
    pub phase: Phase,
    pub scale_factor: u64,
    pub files: u64,
    pub file_bytes: u64,
    pub baseline: Backend,
    pub candidate: Backend,
    /// Median over runs.
    pub baseline_s: f64,
    /// Median over runs.
    pub candidate_s: f64,
    /// `baseline_s / candidate_s`.
    pub ratio: f64,
    /// Speedup reported for the full-size experiment, shown for context.
    pub reference_ratio: Option<f64>,
    /// Larger of the two backends' coefficients of variation.
    pub cv: f64,
    pub noisy: bool,
    pub regression: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub machine: String,
    pub timestamp: u64,
    pub runs: u32,
    pub rows: Vec<CacheRow>,
}

const CACHE_COLUMNS: [&str; 14] = [
    "workload",
    "phase",
    "scale_factor",
    "files",
    "file_bytes",
    "baseline",
    "candidate",
    "baseline_s",
    "candidate_s",
    "ratio",
    "reference_ratio",
    "cv",
    "noisy",
    "regression",
];

impl BenchReport {
    pub fn row(&self, workload: Workload, phase: Phase) -> Option<&CacheRow> {
        self.rows
            .iter()
            .find(|r| r.workload == workload && r.phase == phase)
    }

    pub fn any_regression(&self) -> bool {
        self.rows.iter().any(|r| r.regression)
    }

    pub fn any_noisy(&self) -> bool {
        self.rows.iter().any(|r| r.noisy)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "report=cache")?;
        writeln!(f, "machine={}", self.machine)?;
        writeln!(f, "timestamp={}", self.timestamp)?;
        writeln!(f, "runs={}", self.runs)?;
        writeln!(f)?;
        writeln!(f, "{}", CACHE_COLUMNS.join("\t"))?;
        for r in &self.rows {
            let reference = r.reference_ratio.map_or("-".to_string(), |p| p.to_string());
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.workload,
                r.phase,
                r.scale_factor,
                r.files,
                r.file_bytes,
                r.baseline,
                r.candidate,
                r.baseline_s,
                r.candidate_s,
                r.ratio,
                reference,
                r.cv,
                yes_no(r.noisy),
                yes_no(r.regression)
            )?;
        }
        Ok(())
    }
}

impl FromStr for BenchReport {
    type Err = ReportParseError;

    fn from_str(text: &str) -> Result<Self, ReportParseError> {
        let s = split_sections(text)?;
        if meta_value(&s, "report")? != "cache" {
            return Err(perr(1, "not a cache report"));
        }
        check_header(&s, &CACHE_COLUMNS)?;
        let mut rows = Vec::new();
        for &(n, line) in &s.rows {
            let mut c = Cells::new(n, line);
            let row = CacheRow {
                workload: c.next("workload")?,
                phase: c.next("phase")?,
                scale_factor: c.next("scale_factor")?,
                files: c.next("files")?,
                file_bytes: c.next("file_bytes")?,
                baseline: c.next("baseline")?,
                candidate: c.next("candidate")?,
                baseline_s: c.next("baseline_s")?,
                candidate_s: c.next("candidate_s")?,
                ratio: c.next("ratio")?,
                reference_ratio: match c.next::<String>("reference_ratio")?.as_str() {
                    "-" => None,
                    v => Some(v.parse().map_err(|_| perr(n, "bad reference_ratio"))?),
                },
                cv: c.next("cv")?,
                noisy: c.flag("noisy")?,
                regression: c.flag("regression")?,
            };
            c.finish()?;
            rows.push(row);
        }
        Ok(Self {
            machine: meta_value(&s, "machine")?.to_string(),
            timestamp: parse_meta(&s, "timestamp")?,
            runs: parse_meta(&s, "runs")?,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRow {
    pub workers: u32,
    pub wall_s: f64,
    /// `wall_s` of the first row over this row's `wall_s`.
    pub speedup: f64,
    /// `speedup / workers`.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReport {
    pub machine: String,
    pub timestamp: u64,
    pub tasks: u32,
    pub task_ms: u64,
    pub rows: Vec<ScaleRow>,
}

const SCALE_COLUMNS: [&str; 4] = ["workers", "wall_s", "speedup", "efficiency"];

impl ScaleReport {
    pub fn speedup(&self, workers: u32) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.workers == workers)
            .map(|r| r.speedup)
    }

    /// Whether speedup never drops as the worker count grows.
    pub fn is_monotone(&self) -> bool {
        let mut rows: Vec<&ScaleRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.workers);
        rows.windows(2).all(|w| w[1].speedup >= w[0].speedup)
    }
}

impl fmt::Display for ScaleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "report=scale")?;
        writeln!(f, "machine={}", self.machine)?;
        writeln!(f, "timestamp={}", self.timestamp)?;
        writeln!(f, "tasks={}", self.tasks)?;
        writeln!(f, "task_ms={}", self.task_ms)?;
        writeln!(f)?;
        writeln!(f, "{}", SCALE_COLUMNS.join("\t"))?;
        for r in &self.rows {
            writeln!(
                f,
                "{}\t{}\t{}\t{}",
                r.workers, r.wall_s, r.speedup, r.efficiency
            )?;
        }
        Ok(())
    }
}

impl FromStr for ScaleReport {
    type Err = ReportParseError;

    fn from_str(text: &str) -> Result<Self, ReportParseError> {
        let s = split_sections(text)?;
        if meta_value(&s, "report")? != "scale" {
            return Err(perr(1, "not a scale report"));
        }
        check_header(&s, &SCALE_COLUMNS)?;
        let mut rows = Vec::new();
        for &(n, line) in &s.rows {
            let mut c = Cells::new(n, line);
            let row = ScaleRow {
                workers: c.next("workers")?,
                wall_s: c.next("wall_s")?,
                speedup: c.next("speedup")?,
                efficiency: c.next("efficiency")?,
            };
            c.finish()?;
            rows.push(row);
        }
        Ok(Self {
            machine: meta_value(&s, "machine")?.to_string(),
            timestamp: parse_meta(&s, "timestamp")?,
            tasks: parse_meta(&s, "tasks")?,
            task_ms: parse_meta(&s, "task_ms")?,
            rows,
        })
    }
}

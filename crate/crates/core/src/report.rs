//! Per-run results and the CSV report format.
//!
//! A report file starts with the line `# palmscloud-report v1`, followed by a
//! CSV header and one row per (benchmark, L1D config, seed) cell. Failed cells
//! keep their key columns, carry `status = error` and the message in the last
//! column, and leave every metric empty. Floats use Rust's shortest
//! round-trip formatting so identical runs give identical bytes.

use std::io::{self, Read, Write};

use crate::hierarchy::{LevelCounters, LevelStats, LEVEL_NAMES};
use crate::workloads::Benchmark;

pub const REPORT_MAGIC: &str = "# palmscloud-report v1";
pub const MEANS_MAGIC: &str = "# palmscloud-means v1";

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub benchmark: Benchmark,
    pub l1d_kind: &'static str,
    pub l1d_param: String,
    pub l1d_param_key: u64,
    pub seed: u64,
    pub stats: LevelStats,
    pub ipc: f64,
    /// Memory references expanded on the server, cacheable or not.
    pub refs: u64,
    pub requests_issued: u64,
    pub requests_completed: u64,
    pub in_flight: u64,
    pub duration_ns: u64,
    pub events: u64,
}

impl SimReport {
    pub fn duration_us(&self) -> f64 {
        self.duration_ns as f64 / 1000.0
    }
}

/// Key columns shared by result and error rows.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub benchmark: Benchmark,
    pub l1d_kind: &'static str,
    pub l1d_param_key: u64,
    pub l1d_param: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub key: CellKey,
    pub result: Result<SimReport, String>,
}

const COUNTER_COLUMNS: [&str; 4] = ["accesses", "hits", "misses", "miss_rate"];

pub fn header() -> Vec<String> {
    let mut h: Vec<String> = ["benchmark", "l1d_kind", "l1d_param", "seed", "status"]
        .map(String::from)
        .to_vec();
    for level in LEVEL_NAMES {
        h.extend(COUNTER_COLUMNS.iter().map(|c| format!("{level}_{c}")));
    }
    h.extend(
        [
            "memory_fetches",
            "memory_writebacks",
            "uncacheable_refs",
            "refs",
            "instructions",
            "cycles",
            "ipc",
            "requests_issued",
            "requests_completed",
            "in_flight",
            "sim_duration_us",
            "error",
        ]
        .map(String::from),
    );
    h
}

fn counters(c: &LevelCounters) -> [String; 4] {
    [
        c.accesses.to_string(),
        c.hits.to_string(),
        c.misses.to_string(),
        c.miss_rate().to_string(),
    ]
}

fn record(row: &ReportRow) -> Vec<String> {
    let k = &row.key;
    let mut out = vec![
        k.benchmark.to_string(),
        k.l1d_kind.to_string(),
        k.l1d_param.clone(),
        k.seed.to_string(),
    ];
    match &row.result {
        Ok(r) => {
            out.push("ok".into());
            let s = &r.stats;
            for c in [&s.l1i, &s.l1d, &s.l2, &s.l3] {
                out.extend(counters(c));
            }
            out.extend([
                s.memory_fetches.to_string(),
                s.memory_writebacks.to_string(),
                s.uncacheable_count.to_string(),
                r.refs.to_string(),
                s.instruction_count.to_string(),
                s.cycles.to_string(),
                r.ipc.to_string(),
                r.requests_issued.to_string(),
                r.requests_completed.to_string(),
                r.in_flight.to_string(),
                r.duration_us().to_string(),
                String::new(),
            ]);
        }
        Err(msg) => {
            out.push("error".into());
            out.resize(header().len() - 1, String::new());
            out.push(msg.clone());
        }
    }
    out
}

/// Write rows in the given order under the versioned header.
pub fn write_report<W: Write>(mut w: W, rows: &[ReportRow]) -> io::Result<()> {
    writeln!(w, "{REPORT_MAGIC}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(header())?;
    for row in rows {
        csv.write_record(record(row))?;
    }
    csv.flush()
}

/// Mean over seeds of one (benchmark, L1D config) group.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRow {
    pub benchmark: Benchmark,
    pub l1d_kind: &'static str,
    pub l1d_param: String,
    pub seeds: usize,
    pub errors: usize,
    pub l1d_miss_rate: f64,
    pub ipc: f64,
}

/// Group sorted rows by everything but the seed and average the successful
/// ones.
pub fn means(rows: &[ReportRow]) -> Vec<MeanRow> {
    let mut out: Vec<MeanRow> = Vec::new();
    let mut sums = Vec::new();
    for row in rows {
        let k = &row.key;
        let same = out.last().is_some_and(|m: &MeanRow| {
            m.benchmark == k.benchmark && m.l1d_kind == k.l1d_kind && m.l1d_param == k.l1d_param
        });
        if !same {
            out.push(MeanRow {
                benchmark: k.benchmark,
                l1d_kind: k.l1d_kind,
                l1d_param: k.l1d_param.clone(),
                seeds: 0,
                errors: 0,
                l1d_miss_rate: 0.0,
                ipc: 0.0,
            });
            sums.push((0.0, 0.0));
        }
        let m = out.last_mut().expect("pushed above");
        let sum = sums.last_mut().expect("pushed above");
        match &row.result {
            Ok(r) => {
                m.seeds += 1;
                sum.0 += r.stats.l1d.miss_rate();
                sum.1 += r.ipc;
            }
            Err(_) => m.errors += 1,
        }
    }
    for (m, (miss, ipc)) in out.iter_mut().zip(sums) {
        if m.seeds > 0 {
            m.l1d_miss_rate = miss / m.seeds as f64;
            m.ipc = ipc / m.seeds as f64;
        }
    }
    out
}

pub fn write_means<W: Write>(mut w: W, rows: &[MeanRow]) -> io::Result<()> {
    writeln!(w, "{MEANS_MAGIC}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "benchmark",
        "l1d_kind",
        "l1d_param",
        "seeds",
        "errors",
        "mean_l1d_miss_rate",
        "mean_ipc",
    ])?;
    for m in rows {
        csv.write_record([
            m.benchmark.to_string(),
            m.l1d_kind.to_string(),
            m.l1d_param.clone(),
            m.seeds.to_string(),
            m.errors.to_string(),
            m.l1d_miss_rate.to_string(),
            m.ipc.to_string(),
        ])?;
    }
    csv.flush()
}

/// The columns of a report row needed to compare two reports.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub benchmark: String,
    pub l1d_kind: String,
    pub l1d_param: String,
    pub seed: u64,
    pub ok: bool,
    pub l1d_miss_rate: f64,
    pub ipc: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ParseReportError {
    #[error("missing `{REPORT_MAGIC}` header line")]
    BadMagic,
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: bad value in column `{column}`")]
    BadValue { row: usize, column: &'static str },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn read_report<R: Read>(mut r: R) -> Result<Vec<ParsedRow>, ParseReportError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let body = text
        .strip_prefix(REPORT_MAGIC)
        .and_then(|rest| rest.strip_prefix('\n'))
        .ok_or(ParseReportError::BadMagic)?;
    let mut csv = csv::Reader::from_reader(body.as_bytes());
    let headers = csv.headers()?.clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(ParseReportError::MissingColumn(name))
    };
    let (bench, kind, param, seed, status, miss, ipc) = (
        col("benchmark")?,
        col("l1d_kind")?,
        col("l1d_param")?,
        col("seed")?,
        col("status")?,
        col("l1d_miss_rate")?,
        col("ipc")?,
    );
    let mut out = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |idx: usize, column: &'static str| {
            rec[idx]
                .parse::<f64>()
                .map_err(|_| ParseReportError::BadValue { row, column })
        };
        let ok = &rec[status] == "ok";
        out.push(ParsedRow {
            benchmark: rec[bench].to_string(),
            l1d_kind: rec[kind].to_string(),
            l1d_param: rec[param].to_string(),
            seed: rec[seed]
                .parse()
                .map_err(|_| ParseReportError::BadValue { row, column: "seed" })?,
            ok,
            l1d_miss_rate: if ok { num(miss, "l1d_miss_rate")? } else { f64::NAN },
            ipc: if ok { num(ipc, "ipc")? } else { f64::NAN },
        });
    }
    Ok(out)
}

//! Experiment plans: config parsing, sweeps and report comparison.
//!
//! # Config grammar
//!
//! One `key = value` per line. `#` starts a comment. A `[section]` header
//! prefixes the keys that follow it with `section.`, so these are the same:
//!
//! ```text
//! l1d.kind = newcache
//!
//! [l1d]
//! kind = newcache
//! ```
//!
//! Top-level keys: `benchmark` (list or `all`), `seeds`, `output`,
//! `budget_ms`, and the L1D axes `assoc` (set-associative LRU ways, or
//! `full`) and `k` (Newcache extra index bits). When either axis is present
//! it replaces the configured L1D kind.
//!
//! Per level (`l1i`, `l1d`, `l2`, `l3`): `kind` (`sa`, `direct`,
//! `fa_random`, `newcache`), `k`, `assoc`, `size` (bytes, `k`/`m` suffix
//! allowed), `line`, `latency`.
//!
//! `hierarchy.*`: `memory_latency`, `uncacheable_latency`, `base_cpi`,
//! `charge_l1_hits`, `address_bits`. `link.*`: `propagation_us`,
//! `bytes_per_us`, `overhead_bytes`. `<benchmark>.<param>` overrides a
//! benchmark parameter, including `alpha`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::cache::Assoc;
use crate::duosim::{Budget, LinkConfig, Simulation};
use crate::hierarchy::{CacheKind, Hierarchy, HierarchyConfig, LevelConfig, LEVEL_NAMES};
use crate::report::{self, CellKey, MeanRow, ParsedRow, ReportRow};
use crate::workloads::{make_workload, Benchmark, WorkloadError};

pub const SEED_ENV: &str = "PALMSCLOUD_SEED";
pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];
const DEFAULT_NEWCACHE_K: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` has no values")]
    EmptyAxis { line: usize, key: String },
    #[error("line {line}: duplicate {what} `{value}`")]
    Duplicate {
        line: usize,
        what: &'static str,
        value: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Everything needed to run a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub benchmarks: Vec<Benchmark>,
    /// Base hierarchy; only its L1D is replaced per cell.
    pub hierarchy: HierarchyConfig,
    /// L1D configurations swept.
    pub l1d_axis: Vec<LevelConfig>,
    pub seeds: Vec<u64>,
    pub overrides: BTreeMap<Benchmark, BTreeMap<String, u64>>,
    pub link: LinkConfig,
    pub budget: Budget,
    pub output: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn cell_count(&self) -> usize {
        self.benchmarks.len() * self.l1d_axis.len() * self.seeds.len()
    }

    /// Replace the seed list with the comma-separated `value`.
    pub fn override_seeds(&mut self, value: &str) -> Result<(), ConfigError> {
        self.seeds = parse_list(0, SEED_ENV, value, "seed", |s| {
            s.parse::<u64>().map_err(|_| format!("invalid seed `{s}`"))
        })?;
        Ok(())
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_lines(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest.strip_suffix(']').map(str::trim).ok_or_else(|| ConfigError::Parse {
                line,
                message: format!("malformed section header `{body}`"),
            })?;
            if name.is_empty() || name.contains(['.', '[', ']', ' ']) {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("invalid section name `{name}`"),
                });
            }
            section = format!("{name}.");
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: "empty key".into(),
            });
        }
        let full = format!("{section}{key}");
        if entries.contains_key(&full) {
            return Err(ConfigError::Duplicate {
                line,
                what: "key",
                value: full,
            });
        }
        entries.insert(
            full,
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }
    Ok(entries)
}

fn parse_list<T: Ord + Clone, F>(
    line: usize,
    key: &str,
    value: &str,
    what: &'static str,
    parse: F,
) -> Result<Vec<T>, ConfigError>
where
    F: Fn(&str) -> Result<T, String>,
{
    let items: Vec<&str> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(ConfigError::EmptyAxis {
            line,
            key: key.to_string(),
        });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for item in items {
        let v = parse(item).map_err(|message| ConfigError::Parse { line, message })?;
        if !seen.insert(v.clone()) {
            return Err(ConfigError::Duplicate {
                line,
                what,
                value: item.to_string(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.parse().map_err(|_| format!("expected an integer, got `{s}`"))
}

fn parse_bytes(s: &str) -> Result<u64, String> {
    let lower = s.to_ascii_lowercase();
    let t = lower.trim_end_matches('b');
    let (digits, mult) = match t.char_indices().last() {
        Some((i, 'k')) => (&t[..i], 1024),
        Some((i, 'm')) => (&t[..i], 1024 * 1024),
        _ => (t, 1),
    };
    digits
        .trim()
        .parse::<u64>()
        .ok()
        .and_then(|v| v.checked_mul(mult))
        .ok_or_else(|| format!("invalid size `{s}`"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

fn parse_assoc(s: &str) -> Result<Assoc, String> {
    let a: Assoc = s.parse()?;
    match a {
        Assoc::Ways(w) if w == 0 || !w.is_power_of_two() => {
            Err(format!("associativity {w} is not a power of two"))
        }
        a => Ok(a),
    }
}

fn parse_k(s: &str) -> Result<u32, String> {
    s.parse::<u32>()
        .ok()
        .filter(|k| *k <= 16)
        .ok_or_else(|| format!("invalid k `{s}` (expected 0..=16)"))
}

fn at<T>(line: usize, r: Result<T, String>) -> Result<T, ConfigError> {
    r.map_err(|message| ConfigError::Parse { line, message })
}

#[derive(Default)]
struct LevelEdit {
    kind: Option<(usize, String)>,
    k: Option<(usize, u32)>,
}

/// Parse a config; seeds come from the file or the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentPlan, ConfigError> {
    let entries = parse_lines(text)?;
    let mut plan = ExperimentPlan {
        benchmarks: Benchmark::ALL.to_vec(),
        hierarchy: HierarchyConfig::default(),
        l1d_axis: Vec::new(),
        seeds: DEFAULT_SEEDS.to_vec(),
        overrides: BTreeMap::new(),
        link: LinkConfig::default(),
        budget: Budget::default(),
        output: None,
    };
    let mut assoc_axis: Option<(usize, Vec<Assoc>)> = None;
    let mut k_axis: Option<(usize, Vec<u32>)> = None;
    let mut edits: BTreeMap<&'static str, LevelEdit> = BTreeMap::new();

    for (key, Entry { line, value }) in &entries {
        let line = *line;
        let val = value.as_str();
        let unknown = || ConfigError::UnknownKey {
            line,
            key: key.clone(),
        };
        match key.split_once('.') {
            None => match key.as_str() {
                "benchmark" | "benchmarks" => {
                    plan.benchmarks = if val == "all" {
                        Benchmark::ALL.to_vec()
                    } else {
                        parse_list(line, key, val, "benchmark", |s| {
                            s.parse::<Benchmark>().map_err(|e| e.to_string())
                        })?
                    };
                    plan.benchmarks.sort();
                }
                "seeds" => {
                    plan.seeds = parse_list(line, key, val, "seed", parse_u64)?;
                }
                "output" => {
                    if val.is_empty() {
                        return Err(ConfigError::Parse {
                            line,
                            message: "empty output path".into(),
                        });
                    }
                    plan.output = Some(PathBuf::from(val));
                }
                "budget_ms" => {
                    let ms = at(line, parse_u64(val))?;
                    if ms == 0 {
                        return Err(ConfigError::Parse {
                            line,
                            message: "budget_ms must be positive".into(),
                        });
                    }
                    plan.budget = Budget {
                        max_time_us: ms * 1000,
                    };
                }
                "assoc" => {
                    assoc_axis = Some((line, parse_list(line, key, val, "assoc", parse_assoc)?));
                }
                "k" => k_axis = Some((line, parse_list(line, key, val, "k", parse_k)?)),
                _ => return Err(unknown()),
            },
            Some((section, field)) => {
                if let Some(&level) = LEVEL_NAMES.iter().find(|l| **l == section) {
                    let cfg = plan.hierarchy.level_mut(level).expect("known level");
                    let edit = edits.entry(level).or_default();
                    match field {
                        "kind" => edit.kind = Some((line, val.to_string())),
                        "k" => edit.k = Some((line, at(line, parse_k(val))?)),
                        "assoc" => cfg.assoc = at(line, parse_assoc(val))?,
                        "size" => cfg.size_bytes = at(line, parse_bytes(val))?,
                        "line" => cfg.line_bytes = at(line, parse_bytes(val))?,
                        "latency" => cfg.hit_latency = at(line, parse_u64(val))?,
                        _ => return Err(unknown()),
                    }
                } else if section == "hierarchy" {
                    let h = &mut plan.hierarchy;
                    match field {
                        "memory_latency" => h.memory_latency = at(line, parse_u64(val))?,
                        "uncacheable_latency" => h.uncacheable_latency = at(line, parse_u64(val))?,
                        "base_cpi" => {
                            h.base_cpi = at(line, 
                                val.parse::<f64>()
                                    .map_err(|_| format!("expected a number, got `{val}`")),
                            )?
                        }
                        "charge_l1_hits" => h.charge_l1_hits = at(line, parse_bool(val))?,
                        "address_bits" => {
                            h.address_bits = at(line, 
                                val.parse::<u32>()
                                    .map_err(|_| format!("expected an integer, got `{val}`")),
                            )?
                        }
                        _ => return Err(unknown()),
                    }
                } else if section == "link" {
                    let l = &mut plan.link;
                    match field {
                        "propagation_us" => l.propagation_us = at(line, parse_u64(val))?,
                        "bytes_per_us" => l.bytes_per_us = at(line, parse_u64(val))?,
                        "overhead_bytes" => l.overhead_bytes = at(line, parse_u64(val))?,
                        _ => return Err(unknown()),
                    }
                } else if let Ok(bench) = section.parse::<Benchmark>() {
                    let v = at(line, parse_u64(val))?;
                    plan.overrides
                        .entry(bench)
                        .or_default()
                        .insert(field.to_string(), v);
                } else {
                    return Err(unknown());
                }
            }
        }
    }

    for (level, edit) in edits {
        let cfg = plan.hierarchy.level_mut(level).expect("known level");
        let k_line = edit.k.map(|(l, _)| l);
        let k = edit.k.map(|(_, k)| k);
        if let Some((line, kind)) = edit.kind {
            cfg.kind = match kind.as_str() {
                "sa" => CacheKind::SaLru,
                "direct" => CacheKind::Direct,
                "fa_random" => CacheKind::FaRandom,
                "newcache" => CacheKind::Newcache {
                    k: k.unwrap_or(DEFAULT_NEWCACHE_K),
                },
                other => {
                    return Err(ConfigError::Parse {
                        line,
                        message: format!("unknown cache kind `{other}`"),
                    })
                }
            };
        }
        if let (Some(line), false) = (k_line, matches!(cfg.kind, CacheKind::Newcache { .. })) {
            return Err(ConfigError::Parse {
                line,
                message: format!("{level}.k needs {level}.kind = newcache"),
            });
        }
    }

    let base = plan.hierarchy.l1d;
    if assoc_axis.is_none() && k_axis.is_none() {
        plan.l1d_axis.push(base);
    }
    let mut axis_lines = Vec::new();
    if let Some((line, ways)) = assoc_axis {
        for a in ways {
            plan.l1d_axis.push(LevelConfig {
                kind: CacheKind::SaLru,
                assoc: a,
                ..base
            });
            axis_lines.push(line);
        }
    }
    if let Some((line, ks)) = k_axis {
        for k in ks {
            plan.l1d_axis.push(LevelConfig {
                kind: CacheKind::Newcache { k },
                ..base
            });
            axis_lines.push(line);
        }
    }
    if axis_lines.is_empty() {
        axis_lines.push(0);
    }

    for (l1d, line) in plan.l1d_axis.iter().zip(axis_lines) {
        let mut h = plan.hierarchy.clone();
        h.l1d = *l1d;
        Hierarchy::new(h, 0).map_err(|e| {
            if line > 0 {
                ConfigError::Parse {
                    line,
                    message: e.to_string(),
                }
            } else {
                ConfigError::Invalid(e.to_string())
            }
        })?;
    }
    for &b in &plan.benchmarks {
        let o = plan.overrides.get(&b).cloned().unwrap_or_default();
        make_workload(b, &o, 0).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    }
    for (b, o) in &plan.overrides {
        if !plan.benchmarks.contains(b) {
            let line = o
                .keys()
                .filter_map(|k| entries.get(&format!("{b}.{k}")))
                .map(|e| e.line)
                .min()
                .unwrap_or(0);
            return Err(ConfigError::Parse {
                line,
                message: format!("overrides for `{b}`, which is not in the benchmark list"),
            });
        }
    }
    Ok(plan)
}

/// Read a config file and apply the seed environment override.
pub fn load_plan(path: &Path) -> Result<ExperimentPlan, PlanError> {
    let text = fs::read_to_string(path).map_err(|source| PlanError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut plan = parse_config(&text)?;
    if let Ok(v) = std::env::var(SEED_ENV) {
        plan.override_seeds(&v)?;
    }
    Ok(plan)
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn run_cell(plan: &ExperimentPlan, key: &CellKey, l1d: LevelConfig) -> ReportRow {
    let overrides = plan
        .overrides
        .get(&key.benchmark)
        .cloned()
        .unwrap_or_default();
    let result = make_workload(key.benchmark, &overrides, key.seed)
        .map_err(|e: WorkloadError| e.to_string())
        .and_then(|spec| {
            let mut h = plan.hierarchy.clone();
            h.l1d = l1d;
            Simulation::new(spec, h, plan.link, key.seed, plan.budget)
                .run()
                .map(|o| o.report)
                .map_err(|e| e.to_string())
        });
    ReportRow {
        key: key.clone(),
        result,
    }
}

/// Simulate every (benchmark, L1D config, seed) cell, in parallel, and
/// return the rows sorted by that key.
pub fn run_plan(plan: &ExperimentPlan) -> Vec<ReportRow> {
    let mut cells = Vec::with_capacity(plan.cell_count());
    for &benchmark in &plan.benchmarks {
        for l1d in &plan.l1d_axis {
            for &seed in &plan.seeds {
                let key = CellKey {
                    benchmark,
                    l1d_kind: l1d.kind.name(),
                    l1d_param_key: l1d.param_sort_key(),
                    l1d_param: l1d.param(),
                    seed,
                };
                cells.push((key, *l1d));
            }
        }
    }
    let mut rows: Vec<ReportRow> = cells
        .par_iter()
        .map(|(key, l1d)| run_cell(plan, key, *l1d))
        .collect();
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    rows
}

/// Path of the per-group means file written next to a report.
pub fn means_path(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}.means.csv"))
}

/// Write the report and its means file; returns the means.
pub fn write_outputs(path: &Path, rows: &[ReportRow]) -> io::Result<Vec<MeanRow>> {
    let mut buf = Vec::new();
    report::write_report(&mut buf, rows)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, buf)?;
    let means = report::means(rows);
    let mut buf = Vec::new();
    report::write_means(&mut buf, &means)?;
    fs::write(means_path(path), buf)?;
    Ok(means)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompareError {
    #[error("key mismatch: {0}")]
    KeyMismatch(String),
}

/// Per-benchmark comparison of two reports.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkDelta {
    pub benchmark: String,
    pub seeds: usize,
    pub baseline_ipc: f64,
    pub candidate_ipc: f64,
    /// (candidate - baseline) / baseline.
    pub ipc_rel_delta: f64,
    pub baseline_l1d_miss_rate: f64,
    pub candidate_l1d_miss_rate: f64,
    /// candidate - baseline, absolute.
    pub l1d_miss_delta: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub tolerance: f64,
    pub rows: Vec<BenchmarkDelta>,
}

impl Comparison {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::from(
            "benchmark,seeds,baseline_ipc,candidate_ipc,ipc_rel_delta,\
             baseline_l1d_miss_rate,candidate_l1d_miss_rate,l1d_miss_delta,verdict\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.benchmark,
                r.seeds,
                r.baseline_ipc,
                r.candidate_ipc,
                r.ipc_rel_delta,
                r.baseline_l1d_miss_rate,
                r.candidate_l1d_miss_rate,
                r.l1d_miss_delta,
                if r.pass { "PASS" } else { "FAIL" }
            ));
        }
        out.push_str(if self.pass() { "PASS\n" } else { "FAIL\n" });
        out
    }
}

/// Keep the rows of one L1D config, written `kind:param` (e.g. `sa:8`).
pub fn select_l1d(rows: &[ParsedRow], l1d: &str) -> Vec<ParsedRow> {
    rows.iter()
        .filter(|r| format!("{}:{}", r.l1d_kind, r.l1d_param) == l1d)
        .cloned()
        .collect()
}

/// Parse a tolerance given as a fraction (`0.05`) or a percentage (`5%`).
pub fn parse_tolerance(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.strip_suffix('%') {
        Some(p) => p.trim().parse::<f64>().map(|v| v / 100.0),
        None => s.parse::<f64>(),
    }
    .map_err(|_| format!("invalid tolerance `{s}`"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("invalid tolerance `{s}`"))
    }
}

fn index_rows(rows: &[ParsedRow], which: &str) -> Result<BTreeMap<(String, u64), ParsedRow>, CompareError> {
    let mut out = BTreeMap::new();
    for r in rows {
        if out.insert((r.benchmark.clone(), r.seed), r.clone()).is_some() {
            return Err(CompareError::KeyMismatch(format!(
                "{which} has more than one row for {} seed {}",
                r.benchmark, r.seed
            )));
        }
    }
    Ok(out)
}

/// Compare a candidate report to a baseline, benchmark by benchmark, over
/// the seed means. A benchmark passes when its relative IPC change is
/// within `tolerance` and neither side has an error row.
pub fn compare_reports(
    baseline: &[ParsedRow],
    candidate: &[ParsedRow],
    tolerance: f64,
) -> Result<Comparison, CompareError> {
    let base = index_rows(baseline, "baseline")?;
    let cand = index_rows(candidate, "candidate")?;
    if let Some(k) = base.keys().find(|k| !cand.contains_key(*k)) {
        return Err(CompareError::KeyMismatch(format!(
            "candidate has no row for {} seed {}",
            k.0, k.1
        )));
    }
    if let Some(k) = cand.keys().find(|k| !base.contains_key(*k)) {
        return Err(CompareError::KeyMismatch(format!(
            "baseline has no row for {} seed {}",
            k.0, k.1
        )));
    }
    let mut rows: Vec<BenchmarkDelta> = Vec::new();
    let mut ok = Vec::new();
    for ((bench, _), b) in &base {
        let c = &cand[&(bench.clone(), b.seed)];
        if rows.last().is_none_or(|r| &r.benchmark != bench) {
            rows.push(BenchmarkDelta {
                benchmark: bench.clone(),
                seeds: 0,
                baseline_ipc: 0.0,
                candidate_ipc: 0.0,
                ipc_rel_delta: 0.0,
                baseline_l1d_miss_rate: 0.0,
                candidate_l1d_miss_rate: 0.0,
                l1d_miss_delta: 0.0,
                pass: true,
            });
            ok.push(true);
        }
        let r = rows.last_mut().expect("pushed above");
        r.seeds += 1;
        r.baseline_ipc += b.ipc;
        r.candidate_ipc += c.ipc;
        r.baseline_l1d_miss_rate += b.l1d_miss_rate;
        r.candidate_l1d_miss_rate += c.l1d_miss_rate;
        *ok.last_mut().expect("pushed above") &= b.ok && c.ok;
    }
    for (r, ok) in rows.iter_mut().zip(ok) {
        let n = r.seeds as f64;
        r.baseline_ipc /= n;
        r.candidate_ipc /= n;
        r.baseline_l1d_miss_rate /= n;
        r.candidate_l1d_miss_rate /= n;
        r.ipc_rel_delta = if r.baseline_ipc == 0.0 {
            if r.candidate_ipc == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            (r.candidate_ipc - r.baseline_ipc) / r.baseline_ipc
        };
        r.l1d_miss_delta = r.candidate_l1d_miss_rate - r.baseline_l1d_miss_rate;
        r.pass = ok && r.ipc_rel_delta.abs() <= tolerance;
    }
    Ok(Comparison { tolerance, rows })
}

/// Text for the `list` subcommand.
pub fn describe_benchmarks() -> String {
    let mut out = String::new();
    for b in Benchmark::ALL {
        out.push_str(&format!("{:<11} {}\n", b.name(), b.description()));
        for p in b.params() {
            out.push_str(&format!(
                "    {}.{} = {:<8} # {} ({}..={})\n",
                b.name(),
                p.name,
                p.default,
                p.help,
                p.min,
                p.max
            ));
        }
    }
    let a = crate::workloads::ALPHA;
    out.push_str(&format!(
        "\nevery benchmark: <benchmark>.{} = {} # {} ({}..={})\n",
        a.name, a.default, a.help, a.min, a.max
    ));
    out.push_str("cache kinds: sa, direct, fa_random, newcache\n");
    out
}

//! Cloud-server benchmark models.
//!
//! Each benchmark pairs a server (the test node) with the client tool that
//! drives it. The client side is a set of lanes with a concurrency cap and a
//! request budget ([`ClientState`]); the server side turns each request into
//! a memory-reference trace through a fixed access-pattern template
//! ([`expand_request`]).

mod driver;
mod footprint;
mod templates;

pub use driver::{next_request, ClientState};
pub use footprint::{FootprintMap, Region, RegionKind};
pub use templates::{
    expand_idle_tick, expand_request, Expansion, Request, Template, FILE_METADATA_REFS,
    IDLE_TICK_FETCHES, NIC_REFS_PER_REQUEST,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Benchmark {
    Web,
    Db,
    Mail,
    FileWrite,
    FileRead,
    Streaming,
    App,
    Compute,
    Idle,
}

impl Benchmark {
    pub const ALL: [Benchmark; 9] = [
        Benchmark::Web,
        Benchmark::Db,
        Benchmark::Mail,
        Benchmark::FileWrite,
        Benchmark::FileRead,
        Benchmark::Streaming,
        Benchmark::App,
        Benchmark::Compute,
        Benchmark::Idle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Web => "web",
            Benchmark::Db => "db",
            Benchmark::Mail => "mail",
            Benchmark::FileWrite => "file_write",
            Benchmark::FileRead => "file_read",
            Benchmark::Streaming => "streaming",
            Benchmark::App => "app",
            Benchmark::Compute => "compute",
            Benchmark::Idle => "idle",
        }
    }

    /// Server program and client driver being modeled.
    pub fn description(self) -> &'static str {
        match self {
            Benchmark::Web => "web server (httpd) driven by ab",
            Benchmark::Db => "database server (mysqld) driven by sysbench oltp",
            Benchmark::Mail => "smtp server (postfix) driven by postal",
            Benchmark::FileWrite => "file server (smbd) driven by dbench, write loadfile",
            Benchmark::FileRead => "file server (smbd) driven by dbench, read loadfile",
            Benchmark::Streaming => "streaming server (ffserver) driven by openRTSP",
            Benchmark::App => "application server (tomcat) driven by ab",
            Benchmark::Compute => "svm classification server (libsvm) over a1a-shaped data",
            Benchmark::Idle => "idle server, no client",
        }
    }

    pub fn params(self) -> &'static [ParamDef] {
        match self {
            Benchmark::Web => &WEB_PARAMS,
            Benchmark::Db => &DB_PARAMS,
            Benchmark::Mail => &MAIL_PARAMS,
            Benchmark::FileWrite | Benchmark::FileRead => &FILE_PARAMS,
            Benchmark::Streaming => &STREAM_PARAMS,
            Benchmark::App => &APP_PARAMS,
            Benchmark::Compute => &COMPUTE_PARAMS,
            Benchmark::Idle => &[],
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s.trim())
            .ok_or_else(|| WorkloadError::UnknownBenchmark(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("unknown parameter `{param}` for benchmark `{benchmark}`")]
    UnknownParam { benchmark: Benchmark, param: String },
    #[error("{benchmark}.{param} = {value} is outside {min}..={max}")]
    ParamOutOfRange {
        benchmark: Benchmark,
        param: String,
        value: u64,
        min: u64,
        max: u64,
    },
    #[error("{benchmark}: {what} needs {needed} bytes but the {region} region holds {capacity}")]
    FootprintTooLarge {
        benchmark: Benchmark,
        what: &'static str,
        region: &'static str,
        needed: u64,
        capacity: u64,
    },
}

/// One tunable of a benchmark with its default and allowed range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamDef {
    pub name: &'static str,
    pub default: u64,
    pub min: u64,
    pub max: u64,
    pub help: &'static str,
}

const fn p(name: &'static str, default: u64, min: u64, max: u64, help: &'static str) -> ParamDef {
    ParamDef {
        name,
        default,
        min,
        max,
        help,
    }
}

/// Instructions retired per memory reference; applies to every benchmark.
pub const ALPHA: ParamDef = p("alpha", 4, 1, 64, "instructions per memory reference");

const WEB_PARAMS: [ParamDef; 4] = [
    p("n", 1000, 1, 10_000_000, "total requests (ab -n)"),
    p("c", 10, 1, 1000, "concurrent requests (ab -c)"),
    p("page_kb", 16, 1, 1024, "static page size"),
    p("pages", 64, 1, 1024, "distinct static pages"),
];
const DB_PARAMS: [ParamDef; 3] = [
    p("records", 100, 1, 32_768, "rows in the test table"),
    p("transactions", 200, 1, 10_000_000, "oltp transactions"),
    p("threads", 1, 1, 64, "client threads"),
];
const MAIL_PARAMS: [ParamDef; 5] = [
    p("threads", 1, 1, 64, "connection threads (postal -t)"),
    p("msg_kb", 1, 1, 1024, "maximum message size (postal -m)"),
    p("msgs_per_conn", 3, 1, 1000, "messages per connection (postal -c)"),
    p("duration_ms", 10_000, 1, 3_600_000, "stress duration"),
    p("users", 20, 1, 1000, "local recipients"),
];
const FILE_PARAMS: [ParamDef; 4] = [
    p("clients", 3, 1, 64, "dbench clients"),
    p("files", 5, 1, 100, "files per client in the loadfile"),
    p("file_kb", 64, 1, 1024, "file size"),
    p("runs", 1, 1, 10_000, "loadfile passes per client"),
];
const STREAM_PARAMS: [ParamDef; 4] = [
    p("streams", 3, 1, 64, "concurrent client sessions"),
    p("media_kb", 5120, 4, 16_384, "size of each media file"),
    p("media_files", 3, 1, 64, "registered media files"),
    p("chunk_kb", 4, 1, 64, "bytes sent per chunk"),
];
const APP_PARAMS: [ParamDef; 3] = [
    p("urls", 1, 1, 11, "distinct servlet/jsp urls"),
    p("requests", 10, 1, 1_000_000, "requests per url (ab -n)"),
    p("concurrency", 2, 1, 100, "concurrency per url (ab -c)"),
];
const COMPUTE_PARAMS: [ParamDef; 3] = [
    p("instances", 40, 1, 100_000, "test instances classified"),
    p("support_vectors", 1000, 1, 10_000, "support vectors in the model"),
    p("features", 128, 1, 4096, "dense features per vector"),
];

/// A benchmark with every parameter resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub benchmark: Benchmark,
    pub params: BTreeMap<&'static str, u64>,
    pub alpha: u64,
    pub seed: u64,
}

impl WorkloadSpec {
    /// Value of a parameter of this benchmark. Panics on a name the
    /// benchmark does not define.
    pub fn get(&self, name: &str) -> u64 {
        match self.params.get(name) {
            Some(v) => *v,
            None => panic!("{} has no parameter `{name}`", self.benchmark),
        }
    }
}

/// Resolve a benchmark's parameters: defaults, then `overrides`.
///
/// Override keys are the parameter names of [`Benchmark::params`] plus
/// `alpha`.
pub fn make_workload(
    benchmark: Benchmark,
    overrides: &BTreeMap<String, u64>,
    seed: u64,
) -> Result<WorkloadSpec, WorkloadError> {
    let mut params: BTreeMap<&'static str, u64> = benchmark
        .params()
        .iter()
        .map(|d| (d.name, d.default))
        .collect();
    let mut alpha = ALPHA.default;
    for (key, &value) in overrides {
        let def = benchmark
            .params()
            .iter()
            .chain(std::iter::once(&ALPHA))
            .find(|d| d.name == key)
            .ok_or_else(|| WorkloadError::UnknownParam {
                benchmark,
                param: key.clone(),
            })?;
        if !(def.min..=def.max).contains(&value) {
            return Err(WorkloadError::ParamOutOfRange {
                benchmark,
                param: key.clone(),
                value,
                min: def.min,
                max: def.max,
            });
        }
        if def.name == ALPHA.name {
            alpha = value;
        } else {
            params.insert(def.name, value);
        }
    }
    let spec = WorkloadSpec {
        benchmark,
        params,
        alpha,
        seed,
    };
    FootprintMap::for_spec(&spec)?;
    Ok(spec)
}

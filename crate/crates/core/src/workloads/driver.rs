use rand::Rng;

use super::templates::{Request, Template};
use super::{Benchmark, WorkloadSpec};

const KB: u64 = 1024;

// sysbench oltp "advanced" transaction shape
const DB_POINT_QUERIES: u64 = 10;
const DB_RANGE_SCANS: u64 = 4;
const DB_WRITES: u64 = 4;
const DB_CHASE_DEPTH: u64 = 3;
const DB_RANGE_ROWS: u64 = 100;

/// One independent request stream of the client tool: an ab URL, a dbench
/// client process, an RTSP session, a postal thread.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Lane {
    cap: u64,
    in_flight: u64,
    issued: u64,
    budget: Option<u64>,
    recipient: u64,
}

/// Drive-node state: per-lane windows plus run-wide counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientState {
    lanes: Vec<Lane>,
    next_id: u64,
    issued: u64,
    completed: u64,
    messages: u64,
    rr: usize,
    now_ns: u64,
    started_ns: Option<u64>,
    time_limit_ns: Option<u64>,
}

impl ClientState {
    pub fn new(spec: &WorkloadSpec) -> Self {
        let lane = |cap, budget| Lane {
            cap,
            in_flight: 0,
            issued: 0,
            budget,
            recipient: 0,
        };
        let mut time_limit_ns = None;
        let lanes = match spec.benchmark {
            Benchmark::Web => vec![lane(spec.get("c"), Some(spec.get("n")))],
            Benchmark::Db => {
                let threads = spec.get("threads");
                let total = spec.get("transactions");
                (0..threads)
                    .map(|i| lane(1, Some(total / threads + u64::from(i < total % threads))))
                    .collect()
            }
            Benchmark::Mail => {
                time_limit_ns = Some(spec.get("duration_ms") * 1_000_000);
                (0..spec.get("threads")).map(|_| lane(1, None)).collect()
            }
            Benchmark::FileWrite | Benchmark::FileRead => {
                let per_client = spec.get("files") * spec.get("runs");
                (0..spec.get("clients"))
                    .map(|_| lane(1, Some(per_client)))
                    .collect()
            }
            Benchmark::Streaming => {
                let chunks = stream_chunks(spec);
                (0..spec.get("streams"))
                    .map(|_| lane(1, Some(chunks + 2)))
                    .collect()
            }
            Benchmark::App => (0..spec.get("urls"))
                .map(|_| lane(spec.get("concurrency"), Some(spec.get("requests"))))
                .collect(),
            Benchmark::Compute => vec![lane(1, Some(spec.get("instances")))],
            Benchmark::Idle => Vec::new(),
        };
        Self {
            lanes,
            next_id: 0,
            issued: 0,
            completed: 0,
            messages: 0,
            rr: 0,
            now_ns: 0,
            started_ns: None,
            time_limit_ns,
        }
    }

    /// Mark the moment the client may start driving (the server is ready).
    pub fn start(&mut self, now_ns: u64) {
        self.now_ns = now_ns;
        self.started_ns = Some(now_ns);
    }

    pub fn set_now(&mut self, now_ns: u64) {
        self.now_ns = now_ns;
    }

    pub fn started(&self) -> bool {
        self.started_ns.is_some()
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn in_flight(&self) -> u64 {
        self.lanes.iter().map(|l| l.in_flight).sum()
    }

    /// Total requests this run will issue, if bounded by count.
    pub fn request_budget(&self) -> Option<u64> {
        self.lanes.iter().map(|l| l.budget).sum()
    }

    fn time_up(&self) -> bool {
        match (self.time_limit_ns, self.started_ns) {
            (Some(limit), Some(start)) => self.now_ns.saturating_sub(start) >= limit,
            _ => false,
        }
    }

    fn lane_exhausted(&self, lane: &Lane) -> bool {
        self.time_up() || lane.budget.is_some_and(|b| lane.issued >= b)
    }

    /// No further request will ever be issued.
    pub fn exhausted(&self) -> bool {
        self.lanes.iter().all(|l| self.lane_exhausted(l))
    }

    /// Exhausted with nothing left in flight.
    pub fn finished(&self) -> bool {
        self.exhausted() && self.in_flight() == 0
    }

    pub fn complete(&mut self, request: &Request) {
        let lane = &mut self.lanes[request.lane];
        assert!(lane.in_flight > 0, "completion without a request in flight");
        lane.in_flight -= 1;
        self.completed += 1;
    }
}

fn stream_chunks(spec: &WorkloadSpec) -> u64 {
    spec.get("media_kb").div_ceil(spec.get("chunk_kb"))
}

/// Next request the client would send now, or `None` when every lane is at
/// its concurrency cap or out of budget.
pub fn next_request<R: Rng + ?Sized>(
    spec: &WorkloadSpec,
    state: &mut ClientState,
    rng: &mut R,
) -> Option<Request> {
    if !state.started() || state.lanes.is_empty() {
        return None;
    }
    let n = state.lanes.len();
    let lane_idx = (0..n)
        .map(|i| (state.rr + i) % n)
        .find(|&i| {
            let l = &state.lanes[i];
            l.in_flight < l.cap && !state.lane_exhausted(l)
        })?;
    state.rr = (lane_idx + 1) % n;

    let id = state.next_id;
    let step = state.lanes[lane_idx].issued;
    let lane = lane_idx as u64;
    let (op, payload_bytes, response_bytes, template) = match spec.benchmark {
        Benchmark::Web => {
            let page_bytes = spec.get("page_kb") * KB;
            (
                "get",
                128,
                page_bytes + 256,
                Template::StaticPage {
                    page: rng.random_range(0..spec.get("pages")),
                    page_bytes,
                    buffer: id % spec.get("c"),
                },
            )
        }
        Benchmark::Db => {
            let records = spec.get("records");
            (
                "transaction",
                1024,
                4 * KB,
                Template::DbTransaction {
                    point_queries: DB_POINT_QUERIES,
                    range_scans: DB_RANGE_SCANS,
                    writes: DB_WRITES,
                    chase_depth: DB_CHASE_DEPTH,
                    record_touches: super::templates::DB_ROW_BYTES / 64,
                    scan_rows: DB_RANGE_ROWS.min(records),
                    records,
                },
            )
        }
        Benchmark::Mail => {
            let z = spec.get("msgs_per_conn");
            let per_conn = 2 + 2 * z;
            let session = (step / per_conn) * n as u64 + lane;
            match step % per_conn {
                0 => ("connect", 64, 128, Template::MailConnect { session }),
                p if p == per_conn - 1 => ("quit", 16, 64, Template::MailQuit { session }),
                p if p % 2 == 1 => {
                    let recipient = rng.random_range(0..spec.get("users"));
                    state.lanes[lane_idx].recipient = recipient;
                    ("envelope", 128, 64, Template::MailEnvelope { session, recipient })
                }
                _ => {
                    let bytes = rng.random_range(1..=spec.get("msg_kb") * KB);
                    let message = state.messages;
                    state.messages += 1;
                    (
                        "data",
                        bytes,
                        64,
                        Template::MailData {
                            session,
                            recipient: state.lanes[lane_idx].recipient,
                            message,
                            bytes,
                        },
                    )
                }
            }
        }
        Benchmark::FileWrite | Benchmark::FileRead => {
            let files = spec.get("files");
            let file = lane * files + step % files;
            let bytes = spec.get("file_kb") * KB;
            if spec.benchmark == Benchmark::FileWrite {
                ("write", bytes + 128, 128, Template::FileWrite { file, bytes })
            } else {
                ("read", 128, bytes + 128, Template::FileRead { file, bytes })
            }
        }
        Benchmark::Streaming => {
            let chunks = stream_chunks(spec);
            match step {
                0 => ("setup", 256, 512, Template::StreamSetup { stream: lane }),
                s if s > chunks => ("teardown", 128, 128, Template::StreamTeardown { stream: lane }),
                s => {
                    let chunk = spec.get("chunk_kb") * KB;
                    let media_bytes = spec.get("media_kb") * KB;
                    let offset = (s - 1) * chunk;
                    (
                        "chunk",
                        64,
                        chunk.min(media_bytes - offset) + 12,
                        Template::StreamChunk {
                            stream: lane,
                            media: lane % spec.get("media_files"),
                            media_bytes,
                            offset,
                            bytes: chunk.min(media_bytes - offset),
                        },
                    )
                }
            }
        }
        Benchmark::App => (
            "get",
            128,
            4 * KB,
            Template::Servlet {
                url: lane,
                sequence: id,
                buffer: id,
            },
        ),
        Benchmark::Compute => {
            let features = spec.get("features");
            (
                "classify",
                features * 4 + 64,
                64,
                Template::Classify {
                    instance: step,
                    support_vectors: spec.get("support_vectors"),
                    features,
                },
            )
        }
        Benchmark::Idle => unreachable!("idle has no lanes"),
    };

    let l = &mut state.lanes[lane_idx];
    l.issued += 1;
    l.in_flight += 1;
    state.issued += 1;
    state.next_id += 1;
    Some(Request {
        id,
        lane: lane_idx,
        op,
        payload_bytes,
        response_bytes,
        template,
    })
}

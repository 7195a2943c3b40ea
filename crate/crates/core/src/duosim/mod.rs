//! Two-node discrete-event simulation.
//!
//! The drive node runs the benchmark client; the test node runs the server
//! and owns the cache hierarchy. Both boot, the server starts its service,
//! a readiness daemon polls the service port and then sends a ready message
//! across the link. Only after that message arrives does the client start
//! issuing requests. Every request is expanded into a memory-reference trace
//! and charged against the server's hierarchy; the resulting cycle count is
//! converted to simulated time before the response is sent back.

mod event;

pub use event::{Event, EventKind, EventQueue, QueueError, Role};

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cache::CacheError;
use crate::hierarchy::{Hierarchy, HierarchyConfig, HierarchyError};
use crate::report::SimReport;
use crate::rng;
use crate::workloads::{
    expand_idle_tick, expand_request, next_request, ClientState, Expansion, FootprintMap, Request,
    WorkloadError, WorkloadSpec,
};

const NS_PER_US: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkConfig {
    pub propagation_us: u64,
    pub bytes_per_us: u64,
    pub overhead_bytes: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            propagation_us: 50,
            bytes_per_us: 125,
            overhead_bytes: 64,
        }
    }
}

impl LinkConfig {
    /// One-way delivery time of a message carrying `payload` bytes.
    pub fn delay_ns(&self, payload: u64) -> u64 {
        let wire = (payload + self.overhead_bytes) * NS_PER_US;
        self.propagation_us * NS_PER_US + wire.div_ceil(self.bytes_per_us)
    }
}

/// Fixed delays of the boot and readiness phases plus the server clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeTiming {
    pub boot_us: u64,
    pub service_start_us: u64,
    pub poll_interval_us: u64,
    pub tick_interval_us: u64,
    pub cycles_per_us: u64,
}

impl Default for NodeTiming {
    fn default() -> Self {
        Self {
            boot_us: 1000,
            service_start_us: 500,
            poll_interval_us: 100,
            tick_interval_us: 1000,
            cycles_per_us: 2000,
        }
    }
}

impl NodeTiming {
    pub fn cycles_to_ns(&self, cycles: f64) -> u64 {
        (cycles * NS_PER_US as f64 / self.cycles_per_us as f64).ceil() as u64
    }
}

/// Simulated-time limit of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_time_us: u64,
}

impl Budget {
    pub const fn from_secs(s: u64) -> Self {
        Self {
            max_time_us: s * 1_000_000,
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Self::from_secs(15)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("simulation budget is zero")]
    BudgetZero,
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("event queue drained before the end of the run")]
    EmptyQueue,
}

impl From<QueueError> for SimError {
    fn from(e: QueueError) -> Self {
        match e {
            QueueError::Empty => SimError::EmptyQueue,
            other => SimError::ConfigInvalid(other.to_string()),
        }
    }
}

/// One processed event, as kept in a recorded trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub time_ns: u64,
    pub seq: u64,
    pub label: &'static str,
    pub request: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimReport,
    pub trace: Option<Vec<TraceEntry>>,
}

struct TestNode {
    hierarchy: Hierarchy,
    footprint: FootprintMap,
    rng: ChaCha8Rng,
    port_open: bool,
    pending: VecDeque<Request>,
    busy: bool,
    refs: u64,
}

struct DriveNode {
    client: ClientState,
    rng: ChaCha8Rng,
    booted: bool,
    ready: bool,
}

/// A configured run. [`simulate`] covers the common case.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub spec: WorkloadSpec,
    pub hierarchy: HierarchyConfig,
    pub link: LinkConfig,
    pub timing: NodeTiming,
    pub seed: u64,
    pub budget: Budget,
    pub record_trace: bool,
}

pub fn simulate(
    spec: &WorkloadSpec,
    hierarchy: &HierarchyConfig,
    link: &LinkConfig,
    seed: u64,
    budget: Budget,
) -> Result<SimReport, SimError> {
    Simulation::new(spec.clone(), hierarchy.clone(), *link, seed, budget)
        .run()
        .map(|o| o.report)
}

impl Simulation {
    pub fn new(
        spec: WorkloadSpec,
        hierarchy: HierarchyConfig,
        link: LinkConfig,
        seed: u64,
        budget: Budget,
    ) -> Self {
        Self {
            spec,
            hierarchy,
            link,
            timing: NodeTiming::default(),
            seed,
            budget,
            record_trace: false,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.budget.max_time_us == 0 {
            return Err(SimError::BudgetZero);
        }
        let l = &self.link;
        if l.propagation_us == 0 || l.bytes_per_us == 0 || l.overhead_bytes == 0 {
            return Err(SimError::ConfigInvalid(
                "link parameters must be positive".into(),
            ));
        }
        let t = &self.timing;
        if t.poll_interval_us == 0 || t.tick_interval_us == 0 || t.cycles_per_us == 0 {
            return Err(SimError::ConfigInvalid(
                "poll interval, tick interval and clock must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn run(&self) -> Result<SimOutcome, SimError> {
        self.validate()?;
        let mut test = TestNode {
            hierarchy: Hierarchy::new(self.hierarchy.clone(), self.seed)?,
            footprint: FootprintMap::for_spec(&self.spec)?,
            rng: rng::stream(self.spec.seed, "server"),
            port_open: false,
            pending: VecDeque::new(),
            busy: false,
            refs: 0,
        };
        let mut drive = DriveNode {
            client: ClientState::new(&self.spec),
            rng: rng::stream(self.spec.seed, "workload"),
            booted: false,
            ready: false,
        };
        let mut trace = self.record_trace.then(Vec::new);
        let mut q = EventQueue::new();
        let boot = self.timing.boot_us * NS_PER_US;
        q.schedule(boot, EventKind::BootDone(Role::Drive))?;
        q.schedule(boot, EventKind::BootDone(Role::Test))?;
        q.schedule(self.budget.max_time_us * NS_PER_US, EventKind::SimEnd)?;

        let end_ns = loop {
            let ev = q.step()?;
            if let Some(t) = trace.as_mut() {
                t.push(TraceEntry {
                    time_ns: ev.time_ns,
                    seq: ev.seq,
                    label: ev.kind.label(),
                    request: match &ev.kind {
                        EventKind::RequestArrives(r)
                        | EventKind::ServiceDone(r)
                        | EventKind::ResponseArrives(r) => Some(r.id),
                        _ => None,
                    },
                });
            }
            let now = ev.time_ns;
            match ev.kind {
                EventKind::BootDone(Role::Drive) => {
                    drive.booted = true;
                    if drive.ready {
                        self.start_client(&mut drive, &mut q);
                    }
                }
                EventKind::BootDone(Role::Test) => {
                    q.schedule_in(self.timing.service_start_us * NS_PER_US, EventKind::ServiceUp);
                    q.schedule_in(self.timing.poll_interval_us * NS_PER_US, EventKind::PollPort);
                    q.schedule_in(self.timing.tick_interval_us * NS_PER_US, EventKind::IdleTick);
                }
                EventKind::ServiceUp => test.port_open = true,
                EventKind::PollPort => {
                    if test.port_open {
                        q.schedule_in(0, EventKind::ReadySent);
                    } else {
                        q.schedule_in(self.timing.poll_interval_us * NS_PER_US, EventKind::PollPort);
                    }
                }
                EventKind::ReadySent => {
                    q.schedule_in(self.link.delay_ns(0), EventKind::ReadyArrives);
                }
                EventKind::ReadyArrives => {
                    drive.ready = true;
                    if drive.booted {
                        self.start_client(&mut drive, &mut q);
                    }
                }
                EventKind::RequestArrives(req) => {
                    test.pending.push_back(req);
                    if !test.busy {
                        self.serve_next(&mut test, &mut q)?;
                    }
                }
                EventKind::ServiceDone(req) => {
                    q.schedule_in(
                        self.link.delay_ns(req.response_bytes),
                        EventKind::ResponseArrives(req),
                    );
                    test.busy = false;
                    self.serve_next(&mut test, &mut q)?;
                }
                EventKind::ResponseArrives(req) => {
                    drive.client.complete(&req);
                    drive.client.set_now(now);
                    self.issue(&mut drive, &mut q);
                    if drive.client.finished() {
                        q.schedule_in(0, EventKind::SimEnd);
                    }
                }
                EventKind::IdleTick => {
                    let tick = expand_idle_tick(&test.footprint, self.spec.alpha);
                    self.charge(&mut test, &tick)?;
                    q.schedule_in(self.timing.tick_interval_us * NS_PER_US, EventKind::IdleTick);
                }
                EventKind::SimEnd => break now,
            }
        };

        let stats = test.hierarchy.stats();
        let report = SimReport {
            benchmark: self.spec.benchmark,
            l1d_kind: self.hierarchy.l1d.kind.name(),
            l1d_param: self.hierarchy.l1d.param(),
            l1d_param_key: self.hierarchy.l1d.param_sort_key(),
            seed: self.seed,
            ipc: test.hierarchy.ipc(),
            stats,
            refs: test.refs,
            requests_issued: drive.client.issued(),
            requests_completed: drive.client.completed(),
            in_flight: drive.client.in_flight(),
            duration_ns: end_ns,
            events: q.processed(),
        };
        Ok(SimOutcome { report, trace })
    }

    fn start_client(&self, drive: &mut DriveNode, q: &mut EventQueue) {
        drive.client.start(q.now_ns());
        self.issue(drive, q);
    }

    fn issue(&self, drive: &mut DriveNode, q: &mut EventQueue) {
        while let Some(req) = next_request(&self.spec, &mut drive.client, &mut drive.rng) {
            q.schedule_in(
                self.link.delay_ns(req.payload_bytes),
                EventKind::RequestArrives(req),
            );
        }
    }

    fn serve_next(&self, test: &mut TestNode, q: &mut EventQueue) -> Result<(), SimError> {
        let Some(req) = test.pending.pop_front() else {
            return Ok(());
        };
        let work = expand_request(&req, &test.footprint, &mut test.rng, self.spec.alpha);
        let cycles = self.charge(test, &work)?;
        test.busy = true;
        q.schedule_in(self.timing.cycles_to_ns(cycles), EventKind::ServiceDone(req));
        Ok(())
    }

    /// Run an expansion through the hierarchy; returns the cycles it took.
    fn charge(&self, test: &mut TestNode, work: &Expansion) -> Result<f64, SimError> {
        let mut extra = 0;
        for r in &work.refs {
            extra += test.hierarchy.access(r)?;
        }
        test.hierarchy.retire(work.instructions);
        test.refs += work.refs.len() as u64;
        Ok(work.instructions as f64 * self.hierarchy.base_cpi + extra as f64)
    }
}

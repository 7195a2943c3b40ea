use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use crate::workloads::Request;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Client node, 10.0.0.2.
    Drive,
    /// Server node, 10.0.0.1.
    Test,
}

impl Role {
    pub fn address(self) -> &'static str {
        match self {
            Role::Drive => "10.0.0.2",
            Role::Test => "10.0.0.1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    BootDone(Role),
    ServiceUp,
    PollPort,
    ReadySent,
    ReadyArrives,
    RequestArrives(Request),
    ServiceDone(Request),
    ResponseArrives(Request),
    IdleTick,
    SimEnd,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::BootDone(_) => "BOOT_DONE",
            EventKind::ServiceUp => "SERVICE_UP",
            EventKind::PollPort => "POLL_PORT",
            EventKind::ReadySent => "READY_SENT",
            EventKind::ReadyArrives => "READY_ARRIVES",
            EventKind::RequestArrives(_) => "REQUEST_ARRIVES",
            EventKind::ServiceDone(_) => "SERVICE_DONE",
            EventKind::ResponseArrives(_) => "RESPONSE_ARRIVES",
            EventKind::IdleTick => "IDLE_TICK",
            EventKind::SimEnd => "SIM_END",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A scheduled event. Time is in simulated nanoseconds; `seq` is the
/// insertion order and breaks timestamp ties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time_ns: u64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Event {
    pub fn time_us(&self) -> f64 {
        self.time_ns as f64 / 1000.0
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        (other.time_ns, other.seq).cmp(&(self.time_ns, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum QueueError {
    #[error("event queue is empty")]
    Empty,
    #[error("cannot schedule at {at} ns, the clock is already at {now} ns")]
    InThePast { at: u64, now: u64 },
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    now_ns: u64,
    processed: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_ns(&self) -> u64 {
        self.now_ns
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn scheduled(&self) -> u64 {
        self.next_seq
    }

    pub fn schedule(&mut self, time_ns: u64, kind: EventKind) -> Result<u64, QueueError> {
        if time_ns < self.now_ns {
            return Err(QueueError::InThePast {
                at: time_ns,
                now: self.now_ns,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time_ns, seq, kind });
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay_ns: u64, kind: EventKind) -> u64 {
        self.schedule(self.now_ns + delay_ns, kind)
            .expect("a relative delay is never in the past")
    }

    /// Pop the earliest event and advance the clock to it.
    pub fn step(&mut self) -> Result<Event, QueueError> {
        let ev = self.heap.pop().ok_or(QueueError::Empty)?;
        debug_assert!(ev.time_ns >= self.now_ns);
        self.now_ns = ev.time_ns;
        self.processed += 1;
        Ok(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_by_insertion() {
        let mut q = EventQueue::new();
        q.schedule(10, EventKind::PollPort).unwrap();
        q.schedule(5, EventKind::ServiceUp).unwrap();
        q.schedule(10, EventKind::ReadySent).unwrap();
        q.schedule(10, EventKind::SimEnd).unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.step().ok())
            .map(|e| (e.time_ns, e.kind.label()))
            .collect();
        assert_eq!(
            order,
            [(5, "SERVICE_UP"), (10, "POLL_PORT"), (10, "READY_SENT"), (10, "SIM_END")]
        );
        assert_eq!(q.step(), Err(QueueError::Empty));
    }

    #[test]
    fn single_end_event() {
        let mut q = EventQueue::new();
        q.schedule(0, EventKind::SimEnd).unwrap();
        assert_eq!(q.step().unwrap().kind, EventKind::SimEnd);
        assert!(q.is_empty());
    }

    #[test]
    fn rejects_past_events() {
        let mut q = EventQueue::new();
        q.schedule(100, EventKind::IdleTick).unwrap();
        q.step().unwrap();
        assert_eq!(
            q.schedule(50, EventKind::IdleTick),
            Err(QueueError::InThePast { at: 50, now: 100 })
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clock_never_decreases(times in prop::collection::vec(0u64..1000, 1..200)) {
                let mut q = EventQueue::new();
                for t in &times {
                    q.schedule(*t, EventKind::IdleTick).unwrap();
                }
                let mut last = (0, 0);
                while let Ok(e) = q.step() {
                    prop_assert!((e.time_ns, e.seq) >= last);
                    last = (e.time_ns, e.seq);
                }
                prop_assert_eq!(q.processed(), times.len() as u64);
            }
        }
    }
}

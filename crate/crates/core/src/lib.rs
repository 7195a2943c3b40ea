//! Deterministic dual-node cloud-server workload simulator.
//!
//! A drive node issues benchmark requests over a modeled link to a test node,
//! whose memory references run through an L1I/L1D/L2/L3 hierarchy. Any level
//! can be a conventional set-associative cache or a randomized-mapping
//! [`newcache::Newcache`].

pub mod cache;
pub mod hierarchy;
pub mod newcache;
pub mod rng;
pub mod workloads;
pub mod duosim;
pub mod report;
pub mod cli;

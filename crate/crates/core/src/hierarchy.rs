//! L1I/L1D/L2/L3 + memory lookup path and the cycle/IPC model.
//!
//! The hierarchy is non-inclusive and non-exclusive: a demand miss fills the
//! line into every level it missed in. Dirty victims are written back to the
//! next level down after the demand fill completes; writebacks cost no cycles
//! and are not counted as accesses, so per-level miss rates only see demand
//! traffic.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cache::{
    AccessOutcome, Assoc, CacheError, CacheGeometry, GeometryError, MemoryRef, Replacement,
    SetAssocCache, DEFAULT_ADDRESS_BITS,
};
use crate::newcache::{Newcache, NewcacheGeometry};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CacheKind {
    SaLru,
    Direct,
    FaRandom,
    Newcache { k: u32 },
}

impl CacheKind {
    pub fn name(self) -> &'static str {
        match self {
            CacheKind::SaLru => "sa",
            CacheKind::Direct => "direct",
            CacheKind::FaRandom => "fa_random",
            CacheKind::Newcache { .. } => "newcache",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelConfig {
    pub kind: CacheKind,
    pub size_bytes: u64,
    pub line_bytes: u64,
    /// Only consulted for `SaLru`; `Direct` and `FaRandom` fix their own.
    pub assoc: Assoc,
    pub hit_latency: u64,
}

impl LevelConfig {
    pub fn sa(size_bytes: u64, assoc: u32, hit_latency: u64) -> Self {
        Self {
            kind: CacheKind::SaLru,
            size_bytes,
            line_bytes: 64,
            assoc: Assoc::Ways(assoc),
            hit_latency,
        }
    }

    pub fn effective_assoc(&self) -> Assoc {
        match self.kind {
            CacheKind::SaLru => self.assoc,
            CacheKind::Direct => Assoc::Ways(1),
            CacheKind::FaRandom => Assoc::Full,
            CacheKind::Newcache { .. } => Assoc::Full,
        }
    }

    /// Axis value shown next to the kind in reports: ways for SA-style caches,
    /// `k` for Newcache.
    pub fn param(&self) -> String {
        match self.kind {
            CacheKind::Newcache { k } => k.to_string(),
            _ => self.effective_assoc().to_string(),
        }
    }

    pub fn param_sort_key(&self) -> u64 {
        match self.kind {
            CacheKind::Newcache { k } => k as u64,
            _ => self.effective_assoc().sort_key(),
        }
    }
}

impl fmt::Display for LevelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.param())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    pub l1i: LevelConfig,
    pub l1d: LevelConfig,
    pub l2: LevelConfig,
    pub l3: LevelConfig,
    pub memory_latency: u64,
    pub uncacheable_latency: u64,
    pub base_cpi: f64,
    /// Charge the L1 hit latency on every L1 hit instead of folding it into
    /// the base CPI.
    pub charge_l1_hits: bool,
    pub address_bits: u32,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            l1i: LevelConfig::sa(32 * 1024, 4, 4),
            l1d: LevelConfig::sa(32 * 1024, 8, 4),
            l2: LevelConfig::sa(256 * 1024, 8, 10),
            l3: LevelConfig::sa(2 * 1024 * 1024, 16, 35),
            memory_latency: 200,
            uncacheable_latency: 200,
            base_cpi: 1.0,
            charge_l1_hits: false,
            address_bits: DEFAULT_ADDRESS_BITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HierarchyError {
    #[error("{level}: {source}")]
    Geometry {
        level: &'static str,
        source: GeometryError,
    },
    #[error("line size differs across levels ({level} has {found} B, l1d has {expected} B)")]
    LineSizeMismatch {
        level: &'static str,
        expected: u64,
        found: u64,
    },
    #[error("latencies must strictly increase down the hierarchy ({upper} {upper_cycles} >= {lower} {lower_cycles})")]
    LatencyOrder {
        upper: &'static str,
        upper_cycles: u64,
        lower: &'static str,
        lower_cycles: u64,
    },
    #[error("base CPI must be positive and finite (got {0})")]
    BaseCpi(f64),
    #[error("instruction count {instructions} is below the {fetches} instruction fetches in the trace")]
    InstructionCount { instructions: u64, fetches: u64 },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

pub const LEVEL_NAMES: [&str; 4] = ["l1i", "l1d", "l2", "l3"];
const L1I: usize = 0;
const L1D: usize = 1;
const L2: usize = 2;
const L3: usize = 3;

impl HierarchyConfig {
    pub fn levels(&self) -> [&LevelConfig; 4] {
        [&self.l1i, &self.l1d, &self.l2, &self.l3]
    }

    pub fn level_mut(&mut self, name: &str) -> Option<&mut LevelConfig> {
        match name {
            "l1i" => Some(&mut self.l1i),
            "l1d" => Some(&mut self.l1d),
            "l2" => Some(&mut self.l2),
            "l3" => Some(&mut self.l3),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), HierarchyError> {
        if !(self.base_cpi.is_finite() && self.base_cpi > 0.0) {
            return Err(HierarchyError::BaseCpi(self.base_cpi));
        }
        let line = self.l1d.line_bytes;
        for (name, level) in LEVEL_NAMES.iter().zip(self.levels()) {
            if level.line_bytes != line {
                return Err(HierarchyError::LineSizeMismatch {
                    level: name,
                    expected: line,
                    found: level.line_bytes,
                });
            }
        }
        let chain = [
            ("l1i", self.l1i.hit_latency),
            ("l2", self.l2.hit_latency),
            ("l3", self.l3.hit_latency),
            ("memory", self.memory_latency),
        ];
        let l1d_chain = [("l1d", self.l1d.hit_latency), chain[1]];
        for pair in chain.windows(2).chain(std::iter::once(&l1d_chain[..])) {
            let ((upper, u), (lower, l)) = (pair[0], pair[1]);
            if u >= l {
                return Err(HierarchyError::LatencyOrder {
                    upper,
                    upper_cycles: u,
                    lower,
                    lower_cycles: l,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LevelCounters {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub writebacks: u64,
}

impl LevelCounters {
    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LevelStats {
    pub l1i: LevelCounters,
    pub l1d: LevelCounters,
    pub l2: LevelCounters,
    pub l3: LevelCounters,
    pub memory_fetches: u64,
    pub memory_writebacks: u64,
    pub mem_ref_count: u64,
    pub uncacheable_count: u64,
    pub instruction_count: u64,
    /// Cycles beyond the base CPI.
    pub extra_cycles: u64,
    pub cycles: f64,
}

impl LevelStats {
    pub fn level(&self, name: &str) -> Option<&LevelCounters> {
        match name {
            "l1i" => Some(&self.l1i),
            "l1d" => Some(&self.l1d),
            "l2" => Some(&self.l2),
            "l3" => Some(&self.l3),
            _ => None,
        }
    }

    pub fn ipc(&self, base_cpi: f64) -> f64 {
        ipc(self.instruction_count, self.cycles, base_cpi)
    }
}

pub fn total_cycles(instructions: u64, base_cpi: f64, extra_cycles: u64) -> f64 {
    instructions as f64 * base_cpi + extra_cycles as f64
}

/// IPC, with an idle (zero-cycle) run defined as `1 / base_cpi`.
pub fn ipc(instructions: u64, cycles: f64, base_cpi: f64) -> f64 {
    if cycles <= 0.0 {
        1.0 / base_cpi
    } else {
        instructions as f64 / cycles
    }
}

#[derive(Debug, Clone)]
enum LevelCache {
    SetAssoc(SetAssocCache),
    Newcache(Newcache),
}

#[derive(Debug, Clone)]
struct Level {
    cache: LevelCache,
    rng: ChaCha8Rng,
    counters: LevelCounters,
}

impl Level {
    fn build(
        name: &'static str,
        cfg: &LevelConfig,
        address_bits: u32,
        seed: u64,
    ) -> Result<Self, GeometryError> {
        let cache = match cfg.kind {
            CacheKind::Newcache { k } => LevelCache::Newcache(Newcache::new(
                NewcacheGeometry::from_size(cfg.size_bytes, cfg.line_bytes, k, address_bits)?,
                name,
            )),
            kind => {
                let g = CacheGeometry::new(
                    cfg.size_bytes,
                    cfg.line_bytes,
                    cfg.effective_assoc(),
                    address_bits,
                )?;
                let policy = if kind == CacheKind::FaRandom {
                    Replacement::Random
                } else {
                    Replacement::Lru
                };
                LevelCache::SetAssoc(SetAssocCache::new(g, policy, name))
            }
        };
        Ok(Self {
            cache,
            rng: rng::stream(seed, name),
            counters: LevelCounters::default(),
        })
    }

    fn probe(&mut self, r: &MemoryRef) -> Result<AccessOutcome, CacheError> {
        match &mut self.cache {
            LevelCache::SetAssoc(c) => c.access(r, &mut self.rng),
            LevelCache::Newcache(c) => c.access(r, &mut self.rng),
        }
    }

    fn contains(&self, address: u64) -> bool {
        match &self.cache {
            LevelCache::SetAssoc(c) => c.contains(address),
            LevelCache::Newcache(c) => c.contains(address),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    config: HierarchyConfig,
    levels: [Level; 4],
    memory_fetches: u64,
    memory_writebacks: u64,
    mem_ref_count: u64,
    uncacheable_count: u64,
    instruction_count: u64,
    extra_cycles: u64,
}

impl Hierarchy {
    /// Instantiate every level. Each level gets its own random stream derived
    /// from `seed` and the level name.
    pub fn new(config: HierarchyConfig, seed: u64) -> Result<Self, HierarchyError> {
        config.validate()?;
        let build = |i: usize| {
            let name = LEVEL_NAMES[i];
            Level::build(name, config.levels()[i], config.address_bits, seed)
                .map_err(|source| HierarchyError::Geometry { level: name, source })
        };
        let levels = [build(L1I)?, build(L1D)?, build(L2)?, build(L3)?];
        Ok(Self {
            config,
            levels,
            memory_fetches: 0,
            memory_writebacks: 0,
            mem_ref_count: 0,
            uncacheable_count: 0,
            instruction_count: 0,
            extra_cycles: 0,
        })
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.config
    }

    /// Run one reference through the hierarchy and return the cycles it adds
    /// on top of the base CPI.
    pub fn access(&mut self, r: &MemoryRef) -> Result<u64, CacheError> {
        self.mem_ref_count += 1;
        if !r.is_cacheable {
            self.uncacheable_count += 1;
            self.extra_cycles += self.config.uncacheable_latency;
            return Ok(self.config.uncacheable_latency);
        }

        let l1 = if r.is_instruction { L1I } else { L1D };
        // Lower levels see a read for the line; dirtiness stays in L1.
        let fill = MemoryRef {
            is_write: false,
            ..*r
        };
        let mut pending: [Option<(usize, u64)>; 3] = [None; 3];
        let mut serviced = None;
        for (step, lvl) in [l1, L2, L3].into_iter().enumerate() {
            let probe = if step == 0 { *r } else { fill };
            let level = &mut self.levels[lvl];
            let out = level.probe(&probe)?;
            level.counters.accesses += 1;
            if let Some(v) = out.victim {
                level.counters.evictions += 1;
                if v.dirty {
                    level.counters.writebacks += 1;
                    pending[step] = Some((lvl, v.line_address));
                }
            }
            if out.kind.is_hit() {
                level.counters.hits += 1;
                serviced = Some(lvl);
                break;
            }
            level.counters.misses += 1;
        }

        let cycles = match serviced {
            Some(L1I) if self.config.charge_l1_hits => self.config.l1i.hit_latency,
            Some(L1D) if self.config.charge_l1_hits => self.config.l1d.hit_latency,
            Some(L1I | L1D) => 0,
            Some(L2) => self.config.l2.hit_latency,
            Some(_) => self.config.l3.hit_latency,
            None => {
                self.memory_fetches += 1;
                self.config.memory_latency
            }
        };
        for (from, line) in pending.into_iter().flatten() {
            self.write_back(from, line)?;
        }
        self.extra_cycles += cycles;
        Ok(cycles)
    }

    fn write_back(&mut self, from: usize, line: u64) -> Result<(), CacheError> {
        let mut next = match from {
            L1I | L1D => L2,
            L2 => L3,
            _ => {
                self.memory_writebacks += 1;
                return Ok(());
            }
        };
        let mut line = line;
        loop {
            let level = &mut self.levels[next];
            let out = level.probe(&MemoryRef::write(line))?;
            match out.victim {
                Some(v) => {
                    level.counters.evictions += 1;
                    if !v.dirty {
                        return Ok(());
                    }
                    level.counters.writebacks += 1;
                    line = v.line_address;
                }
                None => return Ok(()),
            }
            if next == L3 {
                self.memory_writebacks += 1;
                return Ok(());
            }
            next = L3;
        }
    }

    /// Count instructions retired alongside the references already applied.
    pub fn retire(&mut self, instructions: u64) {
        self.instruction_count += instructions;
    }

    /// Apply `refs` and retire `instruction_count` instructions.
    pub fn run_trace(
        &mut self,
        refs: &[MemoryRef],
        instruction_count: u64,
    ) -> Result<LevelStats, HierarchyError> {
        let fetches = refs.iter().filter(|r| r.is_instruction).count() as u64;
        if instruction_count < fetches {
            return Err(HierarchyError::InstructionCount {
                instructions: instruction_count,
                fetches,
            });
        }
        for r in refs {
            self.access(r)?;
        }
        self.retire(instruction_count);
        Ok(self.stats())
    }

    pub fn stats(&self) -> LevelStats {
        let c = |i: usize| self.levels[i].counters;
        LevelStats {
            l1i: c(L1I),
            l1d: c(L1D),
            l2: c(L2),
            l3: c(L3),
            memory_fetches: self.memory_fetches,
            memory_writebacks: self.memory_writebacks,
            mem_ref_count: self.mem_ref_count,
            uncacheable_count: self.uncacheable_count,
            instruction_count: self.instruction_count,
            extra_cycles: self.extra_cycles,
            cycles: total_cycles(self.instruction_count, self.config.base_cpi, self.extra_cycles),
        }
    }

    pub fn ipc(&self) -> f64 {
        self.stats().ipc(self.config.base_cpi)
    }

    /// Zero all counters, keeping cache contents and random streams.
    pub fn reset_stats(&mut self) {
        for level in &mut self.levels {
            level.counters = LevelCounters::default();
        }
        self.memory_fetches = 0;
        self.memory_writebacks = 0;
        self.mem_ref_count = 0;
        self.uncacheable_count = 0;
        self.instruction_count = 0;
        self.extra_cycles = 0;
    }

    pub fn level_contains(&self, name: &str, address: u64) -> bool {
        LEVEL_NAMES
            .iter()
            .position(|n| *n == name)
            .is_some_and(|i| self.levels[i].contains(address))
    }
}

use std::fmt;

use super::{Benchmark, WorkloadError, WorkloadSpec};

pub const LINE: u64 = 64;
const KB: u64 = 1024;
const MB: u64 = 1024 * KB;
const PAGE: u64 = 4 * KB;

pub const CODE_BYTES: u64 = 256 * KB;
pub const HEAP_BYTES: u64 = 4 * MB;
pub const FILE_CACHE_BYTES: u64 = 16 * MB;
pub const DB_RECORD_BYTES: u64 = 512;
pub const DB_INDEX_BYTES: u64 = 64 * KB;
pub const MAIL_QUEUE_BYTES: u64 = MB;
pub const STREAM_BUFFER_BYTES: u64 = 256 * KB;
pub const NIC_RING_BYTES: u64 = 64 * KB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionKind {
    Code,
    Heap,
    FileCache,
    DbTable,
    DbIndex,
    MailQueue,
    StreamBuffers,
    NicRing,
}

impl RegionKind {
    pub const ALL: [RegionKind; 8] = [
        RegionKind::Code,
        RegionKind::Heap,
        RegionKind::FileCache,
        RegionKind::DbTable,
        RegionKind::DbIndex,
        RegionKind::MailQueue,
        RegionKind::StreamBuffers,
        RegionKind::NicRing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegionKind::Code => "code",
            RegionKind::Heap => "heap",
            RegionKind::FileCache => "file_cache",
            RegionKind::DbTable => "db_table",
            RegionKind::DbIndex => "db_index",
            RegionKind::MailQueue => "mail_queue",
            RegionKind::StreamBuffers => "stream_buffers",
            RegionKind::NicRing => "nic_ring",
        }
    }

    // Each region has its own 16 MiB slot. Within the slot the start is an
    // irregular page offset, like a randomized mapping, so regions do not
    // line up modulo any cache's index span.
    fn base(self) -> u64 {
        match self {
            RegionKind::Code => 0x0040_0000,
            RegionKind::Heap => 0x0100_0000 + 181 * PAGE,
            RegionKind::FileCache => 0x0200_0000 + 301 * PAGE,
            RegionKind::DbTable => 0x0400_0000 + 419 * PAGE,
            RegionKind::DbIndex => 0x0600_0000 + 97 * PAGE,
            RegionKind::MailQueue => 0x0700_0000 + 263 * PAGE,
            RegionKind::StreamBuffers => 0x0800_0000 + 359 * PAGE,
            RegionKind::NicRing => 0x0f00_0000,
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub kind: RegionKind,
    pub base: u64,
    pub size: u64,
    pub cacheable: bool,
}

impl Region {
    pub fn lines(&self) -> u64 {
        self.size / LINE
    }

    /// Address of line `i`, wrapping inside the region.
    pub fn line(&self, i: u64) -> u64 {
        self.base + (i % self.lines()) * LINE
    }

    /// Address of byte offset `off`, wrapping inside the region, aligned down
    /// to a line.
    pub fn at(&self, off: u64) -> u64 {
        self.base + (off % self.size) / LINE * LINE
    }

    pub fn contains(&self, address: u64) -> bool {
        (self.base..self.base + self.size).contains(&address)
    }
}

/// Named address regions of the server process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintMap {
    regions: [Region; 8],
}

fn round_up(v: u64, to: u64) -> u64 {
    v.div_ceil(to) * to
}

impl FootprintMap {
    pub fn for_spec(spec: &WorkloadSpec) -> Result<Self, WorkloadError> {
        let b = spec.benchmark;
        let check = |what, region: RegionKind, needed: u64, capacity: u64| {
            if needed > capacity {
                Err(WorkloadError::FootprintTooLarge {
                    benchmark: b,
                    what,
                    region: region.name(),
                    needed,
                    capacity,
                })
            } else {
                Ok(())
            }
        };
        let mut records = 100;
        let mut streams = 1;
        match b {
            Benchmark::Web => check(
                "static pages",
                RegionKind::FileCache,
                spec.get("pages") * spec.get("page_kb") * KB,
                FILE_CACHE_BYTES,
            )?,
            Benchmark::Db => records = spec.get("records"),
            Benchmark::FileWrite | Benchmark::FileRead => check(
                "loadfile files",
                RegionKind::FileCache,
                spec.get("clients") * spec.get("files") * spec.get("file_kb") * KB,
                FILE_CACHE_BYTES,
            )?,
            Benchmark::Streaming => {
                streams = spec.get("streams");
                check(
                    "media files",
                    RegionKind::FileCache,
                    spec.get("media_files") * spec.get("media_kb") * KB,
                    FILE_CACHE_BYTES,
                )?;
            }
            Benchmark::Compute => check(
                "svm model",
                RegionKind::Heap,
                spec.get("support_vectors") * spec.get("features") * 4,
                super::templates::COMPUTE_MODEL_MAX,
            )?,
            Benchmark::Mail | Benchmark::App | Benchmark::Idle => {}
        }
        Ok(Self::with_sizes(records, streams))
    }

    fn with_sizes(db_records: u64, streams: u64) -> Self {
        let size = |kind: RegionKind| match kind {
            RegionKind::Code => CODE_BYTES,
            RegionKind::Heap => HEAP_BYTES,
            RegionKind::FileCache => FILE_CACHE_BYTES,
            RegionKind::DbTable => round_up(db_records * DB_RECORD_BYTES, PAGE),
            RegionKind::DbIndex => DB_INDEX_BYTES,
            RegionKind::MailQueue => MAIL_QUEUE_BYTES,
            RegionKind::StreamBuffers => streams * STREAM_BUFFER_BYTES,
            RegionKind::NicRing => NIC_RING_BYTES,
        };
        Self {
            regions: RegionKind::ALL.map(|kind| Region {
                kind,
                base: kind.base(),
                size: size(kind),
                cacheable: kind != RegionKind::NicRing,
            }),
        }
    }

    pub fn region(&self, kind: RegionKind) -> &Region {
        &self.regions[kind as usize]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region_of(&self, address: u64) -> Option<&Region> {
        self.regions.iter().find(|r| r.contains(address))
    }
}

//! Conventional cache models and the types shared by every cache level.

mod geometry;
mod set_assoc;

pub use geometry::{Assoc, CacheGeometry, GeometryError, DEFAULT_ADDRESS_BITS};
pub use set_assoc::{Replacement, SetAssocCache};

pub(crate) use geometry::{check_address, check_pow2, low_mask, shl, shr};

use thiserror::Error;

/// One memory access as seen by the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemoryRef {
    pub address: u64,
    pub is_write: bool,
    pub is_cacheable: bool,
    pub is_instruction: bool,
}

impl MemoryRef {
    pub fn read(address: u64) -> Self {
        Self {
            address,
            is_write: false,
            is_cacheable: true,
            is_instruction: false,
        }
    }

    pub fn write(address: u64) -> Self {
        Self {
            is_write: true,
            ..Self::read(address)
        }
    }

    pub fn fetch(address: u64) -> Self {
        Self {
            is_instruction: true,
            ..Self::read(address)
        }
    }

    pub fn uncached(address: u64, is_write: bool) -> Self {
        Self {
            address,
            is_write,
            is_cacheable: false,
            is_instruction: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Hit,
    /// Miss that filled an empty way.
    ColdMiss,
    /// Miss that evicted a valid line of the target set.
    ReplaceMiss,
    /// Newcache: the logical index matched a resident line but the tag did not.
    TagMiss,
    /// Newcache: no resident line carried the logical index.
    IndexMiss,
}

impl AccessKind {
    pub fn is_hit(self) -> bool {
        self == AccessKind::Hit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Eviction {
    pub line_address: u64,
    pub dirty: bool,
}

/// Result of probing one cache level.
///
/// For set-associative caches a victim is present exactly on `ReplaceMiss`.
/// Newcache always reports a victim on `TagMiss`, and on `IndexMiss` only when
/// the randomly chosen physical line was valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    pub kind: AccessKind,
    pub victim: Option<Eviction>,
    pub level: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("uncacheable reference {0:#x} passed to cache `{1}`")]
    UncacheableRef(u64, &'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

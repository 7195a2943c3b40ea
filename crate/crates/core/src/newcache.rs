//! Randomized-mapping secure cache.
//!
//! Logically this is a direct-mapped cache with `2^(n_bits + k)` slots, realized
//! on `2^n_bits` physical lines. Each physical line carries a line-number
//! register (LNreg) naming the logical slot it currently holds; which physical
//! line backs a logical slot is decided at random on every index miss, so the
//! memory-to-cache mapping is neither fixed nor observable from addresses.

use std::collections::HashMap;

use rand::Rng;

use crate::cache::{
    check_address, check_pow2, low_mask, shl, shr, AccessKind, AccessOutcome, CacheError,
    Eviction, GeometryError, MemoryRef,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NewcacheGeometry {
    /// log2 of the physical line count.
    pub n_bits: u32,
    /// Extra index bits beyond `n_bits`.
    pub k: u32,
    pub line_bytes: u64,
    pub address_bits: u32,
    pub offset_bits: u32,
    pub logical_index_bits: u32,
    pub tag_bits: u32,
}

impl NewcacheGeometry {
    pub fn new(n_bits: u32, k: u32, line_bytes: u64, address_bits: u32) -> Result<Self, GeometryError> {
        let offset_bits = check_pow2("line_bytes", line_bytes)?;
        let logical_index_bits = n_bits + k;
        let needed = logical_index_bits + offset_bits;
        if address_bits > 64 || address_bits < needed || n_bits > 32 {
            return Err(GeometryError::AddressTooNarrow {
                address_bits,
                needed,
            });
        }
        Ok(Self {
            n_bits,
            k,
            line_bytes,
            address_bits,
            offset_bits,
            logical_index_bits,
            tag_bits: address_bits - needed,
        })
    }

    /// Geometry for a cache of `size_bytes` capacity.
    pub fn from_size(
        size_bytes: u64,
        line_bytes: u64,
        k: u32,
        address_bits: u32,
    ) -> Result<Self, GeometryError> {
        check_pow2("size_bytes", size_bytes)?;
        check_pow2("line_bytes", line_bytes)?;
        if line_bytes > size_bytes {
            return Err(GeometryError::LineLargerThanCache {
                line: line_bytes,
                size: size_bytes,
            });
        }
        Self::new((size_bytes / line_bytes).trailing_zeros(), k, line_bytes, address_bits)
    }

    pub fn physical_lines(&self) -> usize {
        1usize << self.n_bits
    }

    /// `(logical_index, tag)` of the line holding `address`.
    pub fn split(&self, address: u64) -> Result<(u64, u64), GeometryError> {
        check_address(address, self.address_bits)?;
        let line = address >> self.offset_bits;
        Ok((
            line & low_mask(self.logical_index_bits),
            shr(line, self.logical_index_bits),
        ))
    }

    pub fn line_address(&self, lnreg: u64, tag: u64) -> u64 {
        (shl(tag, self.logical_index_bits) | lnreg) << self.offset_bits
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct PhysLine {
    lnreg: u64,
    tag: u64,
    valid: bool,
    dirty: bool,
}

#[derive(Debug, Clone)]
pub struct Newcache {
    geometry: NewcacheGeometry,
    label: &'static str,
    lines: Vec<PhysLine>,
    // LNreg -> physical line, for valid lines only. Stands in for the
    // parallel LNreg comparison done in hardware.
    by_lnreg: HashMap<u64, usize>,
}

/// Read-only view of the mapping table: `(lnreg, tag)` for each valid line,
/// ordered by LNreg.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NewcacheSnapshot {
    pub entries: Vec<(u64, u64)>,
}

impl NewcacheSnapshot {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lnregs_unique(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].0 != w[1].0)
    }
}

impl Newcache {
    pub fn new(geometry: NewcacheGeometry, label: &'static str) -> Self {
        Self {
            geometry,
            label,
            lines: vec![PhysLine::default(); geometry.physical_lines()],
            by_lnreg: HashMap::with_capacity(geometry.physical_lines()),
        }
    }

    pub fn geometry(&self) -> &NewcacheGeometry {
        &self.geometry
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn valid_lines(&self) -> usize {
        self.lines.iter().filter(|l| l.valid).count()
    }

    /// LNreg of every valid physical line, in physical-line order.
    pub fn lnregs(&self) -> impl Iterator<Item = u64> + '_ {
        self.lines.iter().filter(|l| l.valid).map(|l| l.lnreg)
    }

    pub fn contains(&self, address: u64) -> bool {
        match self.geometry.split(address) {
            Ok((lnreg, tag)) => self
                .by_lnreg
                .get(&lnreg)
                .is_some_and(|&p| self.lines[p].tag == tag),
            Err(_) => false,
        }
    }

    /// Probe the cache. Hits and tag misses draw nothing from `rng`; an index
    /// miss draws exactly one physical line uniformly over all lines.
    pub fn access<R: Rng + ?Sized>(
        &mut self,
        r: &MemoryRef,
        rng: &mut R,
    ) -> Result<AccessOutcome, CacheError> {
        if !r.is_cacheable {
            return Err(CacheError::UncacheableRef(r.address, self.label));
        }
        let (lnreg, tag) = self.geometry.split(r.address)?;

        if let Some(&p) = self.by_lnreg.get(&lnreg) {
            let line = &mut self.lines[p];
            if line.tag == tag {
                line.dirty |= r.is_write;
                return Ok(self.outcome(AccessKind::Hit, None));
            }
            let victim = Eviction {
                line_address: self.geometry.line_address(lnreg, line.tag),
                dirty: line.dirty,
            };
            line.tag = tag;
            line.dirty = r.is_write;
            return Ok(self.outcome(AccessKind::TagMiss, Some(victim)));
        }

        let p = rng.random_range(0..self.lines.len());
        let old = self.lines[p];
        let victim = old.valid.then(|| {
            self.by_lnreg.remove(&old.lnreg);
            Eviction {
                line_address: self.geometry.line_address(old.lnreg, old.tag),
                dirty: old.dirty,
            }
        });
        self.lines[p] = PhysLine {
            lnreg,
            tag,
            valid: true,
            dirty: r.is_write,
        };
        self.by_lnreg.insert(lnreg, p);
        Ok(self.outcome(AccessKind::IndexMiss, victim))
    }

    pub fn snapshot(&self) -> NewcacheSnapshot {
        let mut entries: Vec<_> = self
            .lines
            .iter()
            .filter(|l| l.valid)
            .map(|l| (l.lnreg, l.tag))
            .collect();
        entries.sort_unstable();
        NewcacheSnapshot { entries }
    }

    /// Physical line currently holding `lnreg`, if any.
    pub fn physical_line_of(&self, lnreg: u64) -> Option<usize> {
        self.by_lnreg.get(&lnreg).copied()
    }

    fn outcome(&self, kind: AccessKind, victim: Option<Eviction>) -> AccessOutcome {
        AccessOutcome {
            kind,
            victim,
            level: self.label,
        }
    }
}

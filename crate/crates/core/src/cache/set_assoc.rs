use rand::Rng;

use super::{AccessKind, AccessOutcome, CacheError, CacheGeometry, Eviction, MemoryRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replacement {
    /// Exact least-recently-used.
    Lru,
    /// Uniformly random victim among the valid ways of a full set.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Line {
    tag: u64,
    dirty: bool,
}

/// Set-associative cache with write-back, write-allocate semantics.
///
/// Direct-mapped is `Assoc::Ways(1)` and fully-associative is `Assoc::Full`.
/// Each set keeps its valid lines most-recently-used first.
#[derive(Debug, Clone)]
pub struct SetAssocCache {
    geometry: CacheGeometry,
    policy: Replacement,
    label: &'static str,
    sets: Vec<Vec<Line>>,
    installs: u64,
    evictions: u64,
}

impl SetAssocCache {
    pub fn new(geometry: CacheGeometry, policy: Replacement, label: &'static str) -> Self {
        let ways = geometry.ways as usize;
        Self {
            geometry,
            policy,
            label,
            sets: (0..geometry.num_sets)
                .map(|_| Vec::with_capacity(ways))
                .collect(),
            installs: 0,
            evictions: 0,
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn policy(&self) -> Replacement {
        self.policy
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn installs(&self) -> u64 {
        self.installs
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    pub fn valid_lines(&self) -> u64 {
        self.sets.iter().map(|s| s.len() as u64).sum()
    }

    /// Tags resident in `index`, most-recently-used first.
    pub fn set_contents(&self, index: u64) -> Vec<u64> {
        self.sets[index as usize].iter().map(|l| l.tag).collect()
    }

    pub fn contains(&self, address: u64) -> bool {
        match self.geometry.decompose(address) {
            Ok((tag, index, _)) => self.sets[index as usize].iter().any(|l| l.tag == tag),
            Err(_) => false,
        }
    }

    /// Look up `r`, installing its line on a miss.
    ///
    /// `rng` is drawn from only when the random policy must pick a victim.
    pub fn access<R: Rng + ?Sized>(
        &mut self,
        r: &MemoryRef,
        rng: &mut R,
    ) -> Result<AccessOutcome, CacheError> {
        if !r.is_cacheable {
            return Err(CacheError::UncacheableRef(r.address, self.label));
        }
        let (tag, index, _) = self.geometry.decompose(r.address)?;
        let ways = self.geometry.ways as usize;
        let set = &mut self.sets[index as usize];

        if let Some(pos) = set.iter().position(|l| l.tag == tag) {
            set[pos].dirty |= r.is_write;
            if self.policy == Replacement::Lru {
                set[..=pos].rotate_right(1);
            }
            return Ok(self.outcome(AccessKind::Hit, None));
        }

        let line = Line {
            tag,
            dirty: r.is_write,
        };
        self.installs += 1;
        if set.len() < ways {
            match self.policy {
                Replacement::Lru => set.insert(0, line),
                Replacement::Random => set.push(line),
            }
            return Ok(self.outcome(AccessKind::ColdMiss, None));
        }

        let old = match self.policy {
            Replacement::Lru => {
                let old = set.pop().expect("full set is non-empty");
                set.insert(0, line);
                old
            }
            Replacement::Random => {
                let slot = rng.random_range(0..ways);
                std::mem::replace(&mut set[slot], line)
            }
        };
        self.evictions += 1;
        let victim = Eviction {
            line_address: self.geometry.line_address(old.tag, index),
            dirty: old.dirty,
        };
        Ok(self.outcome(AccessKind::ReplaceMiss, Some(victim)))
    }

    fn outcome(&self, kind: AccessKind, victim: Option<Eviction>) -> AccessOutcome {
        AccessOutcome {
            kind,
            victim,
            level: self.label,
        }
    }
}

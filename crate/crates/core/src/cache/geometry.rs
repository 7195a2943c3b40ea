use std::fmt;

use thiserror::Error;

pub const DEFAULT_ADDRESS_BITS: u32 = 48;

/// Ways per set. `Full` makes the cache a single set holding every line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assoc {
    Ways(u32),
    Full,
}

impl Assoc {
    /// Sort key used when ordering report rows; `Full` sorts after any way count.
    pub fn sort_key(self) -> u64 {
        match self {
            Assoc::Ways(w) => w as u64,
            Assoc::Full => u64::MAX,
        }
    }
}

impl fmt::Display for Assoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assoc::Ways(w) => write!(f, "{w}"),
            Assoc::Full => f.write_str("full"),
        }
    }
}

impl std::str::FromStr for Assoc {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(Assoc::Full);
        }
        s.parse::<u32>()
            .map(Assoc::Ways)
            .map_err(|_| format!("invalid associativity `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("{field} must be a non-zero power of two (got {value})")]
    NonPowerOfTwo { field: &'static str, value: u64 },
    #[error("line_bytes ({line}) is larger than size_bytes ({size})")]
    LineLargerThanCache { line: u64, size: u64 },
    #[error("assoc ({assoc}) exceeds the number of lines ({lines})")]
    AssocExceedsLines { assoc: u32, lines: u64 },
    #[error("address_bits ({address_bits}) leaves no room for {needed} index+offset bits")]
    AddressTooNarrow { address_bits: u32, needed: u32 },
    #[error("address {address:#x} does not fit in {address_bits} bits")]
    AddressOutOfRange { address: u64, address_bits: u32 },
}

/// Size/line/associativity decomposition of a conventional cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheGeometry {
    pub size_bytes: u64,
    pub line_bytes: u64,
    pub assoc: Assoc,
    pub address_bits: u32,
    pub num_lines: u64,
    pub num_sets: u64,
    pub ways: u32,
    pub offset_bits: u32,
    pub index_bits: u32,
    pub tag_bits: u32,
}

pub(crate) fn check_pow2(field: &'static str, value: u64) -> Result<u32, GeometryError> {
    if value == 0 || !value.is_power_of_two() {
        return Err(GeometryError::NonPowerOfTwo { field, value });
    }
    Ok(value.trailing_zeros())
}

impl CacheGeometry {
    pub fn new(
        size_bytes: u64,
        line_bytes: u64,
        assoc: Assoc,
        address_bits: u32,
    ) -> Result<Self, GeometryError> {
        check_pow2("size_bytes", size_bytes)?;
        let offset_bits = check_pow2("line_bytes", line_bytes)?;
        if let Assoc::Ways(w) = assoc {
            check_pow2("assoc", w as u64)?;
        }
        if line_bytes > size_bytes {
            return Err(GeometryError::LineLargerThanCache {
                line: line_bytes,
                size: size_bytes,
            });
        }
        let num_lines = size_bytes / line_bytes;
        let ways = match assoc {
            Assoc::Full => num_lines,
            Assoc::Ways(w) if w as u64 > num_lines => {
                return Err(GeometryError::AssocExceedsLines {
                    assoc: w,
                    lines: num_lines,
                })
            }
            Assoc::Ways(w) => w as u64,
        };
        let num_sets = num_lines / ways;
        let index_bits = num_sets.trailing_zeros();
        if address_bits > 64 || address_bits < index_bits + offset_bits {
            return Err(GeometryError::AddressTooNarrow {
                address_bits,
                needed: index_bits + offset_bits,
            });
        }
        Ok(Self {
            size_bytes,
            line_bytes,
            assoc,
            address_bits,
            num_lines,
            num_sets,
            ways: u32::try_from(ways).expect("way count fits in u32"),
            offset_bits,
            index_bits,
            tag_bits: address_bits - index_bits - offset_bits,
        })
    }

    pub fn check_address(&self, address: u64) -> Result<(), GeometryError> {
        check_address(address, self.address_bits)
    }

    /// Split an address into `(tag, index, offset)`.
    pub fn decompose(&self, address: u64) -> Result<(u64, u64, u64), GeometryError> {
        self.check_address(address)?;
        let offset = address & low_mask(self.offset_bits);
        let index = (address >> self.offset_bits) & low_mask(self.index_bits);
        let tag = shr(address, self.offset_bits + self.index_bits);
        Ok((tag, index, offset))
    }

    pub fn recompose(&self, tag: u64, index: u64, offset: u64) -> u64 {
        shl(tag, self.index_bits + self.offset_bits) | (index << self.offset_bits) | offset
    }

    pub fn line_address(&self, tag: u64, index: u64) -> u64 {
        self.recompose(tag, index, 0)
    }
}

pub(crate) fn check_address(address: u64, address_bits: u32) -> Result<(), GeometryError> {
    if address_bits < 64 && address >> address_bits != 0 {
        return Err(GeometryError::AddressOutOfRange {
            address,
            address_bits,
        });
    }
    Ok(())
}

pub(crate) fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

// Shifts by >= 64 are legal for a zero-width tag and must yield 0.
pub(crate) fn shr(v: u64, bits: u32) -> u64 {
    v.checked_shr(bits).unwrap_or(0)
}

pub(crate) fn shl(v: u64, bits: u32) -> u64 {
    v.checked_shl(bits).unwrap_or(0)
}

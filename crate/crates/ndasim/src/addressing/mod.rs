//! Address spaces and the map between them.
//!
//! Two address spaces exist: flat physical byte addresses as seen by the
//! OS, and DRAM coordinates (channel, rank, bank, row, column). The map
//! between them is GF(2)-linear per output bit, with an optional
//! bank-partitioning remap layered on top.

mod allocator;
mod mapping;

pub use allocator::{AllocError, Allocation, Region, RegionKind};
pub use mapping::{MapError, MapMode, MappingConfig};

/// Cache-block size for all memory transactions, in bytes.
pub const BLOCK_BYTES: u64 = 64;
/// Bits of a physical address covered by the block offset.
pub const BLOCK_SHIFT: u32 = 6;
/// Bytes each chip owns within one block.
pub const CHIP_WORD_BYTES: u64 = 8;

/// Flat physical byte address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhysicalAddress(pub u64);

impl PhysicalAddress {
    pub fn block(self) -> u64 {
        self.0 >> BLOCK_SHIFT
    }

    pub fn block_aligned(self) -> bool {
        self.0 & (BLOCK_BYTES - 1) == 0
    }
}

/// DRAM coordinates of one cache block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub struct DramAddress {
    pub channel: u8,
    pub rank: u8,
    pub bank: u8,
    pub row: u32,
    pub column: u16,
}

impl DramAddress {
    /// (channel, rank) pair identifying one NDA partition.
    pub fn rank_id(&self) -> (u8, u8) {
        (self.channel, self.rank)
    }
}

/// Page-coloring value: the physical-address bits above the system-row
/// boundary that feed channel- or rank-selecting XOR masks. Allocations
/// sharing a color interleave across channels and ranks identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Color(pub u32);

/// Chip that owns a given byte offset within a 64B block.
///
/// Each 4-byte word lives in a single chip; chips own 8 contiguous bytes
/// (two words) of every block, so the host-visible block content is the
/// identity concatenation of the chip words.
pub fn word_home(block_offset: u64) -> u8 {
    debug_assert!(block_offset < BLOCK_BYTES);
    (block_offset / CHIP_WORD_BYTES) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_home_spans_chips() {
        assert_eq!(word_home(0), 0);
        assert_eq!(word_home(63), 7);
        // 16 four-byte elements per block: PE c owns elements {2c, 2c+1}.
        for elem in 0..16u64 {
            let chip = word_home(elem * 4);
            assert_eq!(chip as u64, elem / 2);
        }
    }
}

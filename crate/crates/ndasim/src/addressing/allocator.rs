//! System-row allocator.
//!
//! NDA operands are allocated at system-row granularity (one DRAM row per
//! bank in the system) inside a region of a single page color, so that all
//! operands of an instruction interleave across channels and ranks the
//! same way. Buddy-style first-fit is sufficient at this granularity.

use super::{Color, MapMode, MappingConfig, PhysicalAddress};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AllocError {
    #[error("region capacity exhausted for its color ({free} system rows free, {want} wanted)")]
    OutOfColorCapacity { free: usize, want: usize },
    #[error("allocation size must be positive")]
    ZeroSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    /// System rows of one page color in the hashed space.
    Colored(Color),
    /// The reserved top chunks of a partitioned configuration.
    Shared,
}

/// A pool of same-color system rows with a free/used bitmap.
#[derive(Debug, Clone)]
pub struct Region {
    pub kind: RegionKind,
    system_rows: Vec<u64>,
    used: Vec<bool>,
    system_row_bytes: u64,
}

/// One allocation: an ordered list of system rows concatenated into a
/// logical byte range. Element `i` of a vector lives at byte `i * width`
/// of the concatenation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub system_rows: Vec<u64>,
    pub len_bytes: u64,
    pub system_row_bytes: u64,
}

impl Region {
    /// All host-space system rows of the given color.
    pub fn for_color(cfg: &MappingConfig, color: Color) -> Region {
        let srow = cfg.system_row_bytes();
        let top = cfg.host_region_bytes();
        let mut rows = Vec::new();
        let mut base = 0u64;
        while base + srow <= top {
            if cfg.color_of(PhysicalAddress(base)).expect("in range") == color {
                rows.push(base);
            }
            base += srow;
        }
        Region {
            kind: RegionKind::Colored(color),
            used: vec![false; rows.len()],
            system_rows: rows,
            system_row_bytes: srow,
        }
    }

    /// The reserved shared space of a partitioned configuration.
    pub fn shared(cfg: &MappingConfig) -> Region {
        assert_eq!(cfg.mode, MapMode::Partitioned, "shared region needs partitioned mode");
        let srow = cfg.system_row_bytes();
        let mut rows = Vec::new();
        let mut base = cfg.host_region_bytes();
        while base + srow <= cfg.capacity() {
            rows.push(base);
            base += srow;
        }
        Region {
            kind: RegionKind::Shared,
            used: vec![false; rows.len()],
            system_rows: rows,
            system_row_bytes: srow,
        }
    }

    pub fn free_rows(&self) -> usize {
        self.used.iter().filter(|u| !**u).count()
    }

    pub fn system_row_bytes(&self) -> u64 {
        self.system_row_bytes
    }

    /// First-fit allocation of `size` bytes, rounded up to whole system rows.
    pub fn allocate(&mut self, size: u64) -> Result<Allocation, AllocError> {
        if size == 0 {
            return Err(AllocError::ZeroSize);
        }
        let want = size.div_ceil(self.system_row_bytes) as usize;
        let free = self.free_rows();
        if want > free {
            return Err(AllocError::OutOfColorCapacity { free, want });
        }
        let mut rows = Vec::with_capacity(want);
        for (i, used) in self.used.iter_mut().enumerate() {
            if !*used {
                *used = true;
                rows.push(self.system_rows[i]);
                if rows.len() == want {
                    break;
                }
            }
        }
        Ok(Allocation {
            system_rows: rows,
            len_bytes: size,
            system_row_bytes: self.system_row_bytes,
        })
    }

    pub fn release(&mut self, alloc: &Allocation) {
        for base in &alloc.system_rows {
            if let Some(i) = self.system_rows.iter().position(|b| b == base) {
                self.used[i] = false;
            }
        }
    }
}

impl Allocation {
    pub fn paddr_of_byte(&self, byte: u64) -> PhysicalAddress {
        debug_assert!(byte < self.capacity_bytes());
        let row = (byte / self.system_row_bytes) as usize;
        PhysicalAddress(self.system_rows[row] + byte % self.system_row_bytes)
    }

    pub fn paddr_of_block(&self, block: u64) -> PhysicalAddress {
        self.paddr_of_byte(block * 64)
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.system_rows.len() as u64 * self.system_row_bytes
    }

    pub fn num_blocks(&self) -> u64 {
        self.capacity_bytes() / 64
    }

    /// Offset of the base within its system row; equal offsets plus equal
    /// colors give identical channel/rank interleaving.
    pub fn base_offset(&self) -> u64 {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::MapMode;

    fn small() -> MappingConfig {
        MappingConfig::default_for(1, 1, 4, 2, 64, 16, 1, MapMode::Baseline).unwrap()
    }

    #[test]
    fn two_vectors_share_color_and_offset() {
        let cfg = small();
        let mut region = Region::for_color(&cfg, Color(0));
        let srow = cfg.system_row_bytes();
        let a = region.allocate(srow).unwrap();
        let b = region.allocate(srow).unwrap();
        assert_eq!(a.base_offset(), b.base_offset());
        let ca = cfg.color_of(a.paddr_of_byte(0)).unwrap();
        let cb = cfg.color_of(b.paddr_of_byte(0)).unwrap();
        assert_eq!(ca, cb);
        assert_ne!(a.system_rows[0], b.system_rows[0]);
    }

    #[test]
    fn capacity_exhaustion() {
        let cfg = small();
        let mut region = Region::for_color(&cfg, Color(0));
        let total = region.free_rows() as u64 * cfg.system_row_bytes();
        assert!(region.allocate(total + 1).is_err());
        region.allocate(total).unwrap();
        assert!(matches!(
            region.allocate(1),
            Err(AllocError::OutOfColorCapacity { .. })
        ));
    }

    #[test]
    fn operand_alignment_theorem_exhaustive() {
        // Same color + same offset within the system row implies the same
        // (channel, rank) for every element index.
        let cfg = MappingConfig::default_for(2, 2, 4, 2, 64, 16, 1, MapMode::Baseline).unwrap();
        let mut region = Region::for_color(&cfg, cfg.color_of(PhysicalAddress(0)).unwrap());
        let srow = cfg.system_row_bytes();
        let a = region.allocate(srow).unwrap();
        let b = region.allocate(srow).unwrap();
        for blk in 0..(srow / 64) {
            let da = cfg.map_physical(a.paddr_of_block(blk)).unwrap();
            let db = cfg.map_physical(b.paddr_of_block(blk)).unwrap();
            assert_eq!(da.rank_id(), db.rank_id(), "block {blk}");
        }
    }
}

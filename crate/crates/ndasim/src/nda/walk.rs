//! Operand walks: the deterministic block access pattern of an operand.
//!
//! A walk lists the rank-local blocks of an operand in ascending physical
//! order; the streaming visit order additionally interleaves bank groups
//! at block granularity so back-to-back column bursts pay tCCDS instead of
//! tCCDL. Functional accumulation stays in ascending index order (the lane
//! pipeline reorders within its small window), so oracles remain plain
//! loops.

use super::instruction::{OperandDesc, RawSpan};
use crate::addressing::{DramAddress, MappingConfig, PhysicalAddress};
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRef {
    pub paddr: u64,
    pub bank: u8,
    pub row: u32,
    pub column: u16,
}

impl BlockRef {
    pub fn dram(&self, channel: u8, rank: u8) -> DramAddress {
        DramAddress {
            channel,
            rank,
            bank: self.bank,
            row: self.row,
            column: self.column,
        }
    }
}

/// Enumerates the rank-local blocks of one system row, cached per engine
/// because microbenchmark kernels relaunch small instructions frequently.
#[derive(Debug, Default, Clone)]
pub struct WalkCache {
    srows: HashMap<(u64, u8, u8), Arc<Vec<BlockRef>>>,
}

impl WalkCache {
    pub fn srow_local(
        &mut self,
        map: &MappingConfig,
        srow_base: u64,
        rank_id: (u8, u8),
    ) -> Arc<Vec<BlockRef>> {
        let key = (srow_base, rank_id.0, rank_id.1);
        if let Some(v) = self.srows.get(&key) {
            return v.clone();
        }
        let srow = map.system_row_bytes();
        let mut out = Vec::new();
        let mut p = srow_base;
        while p < srow_base + srow {
            let d = map.map_physical(PhysicalAddress(p)).expect("in range");
            if d.rank_id() == rank_id {
                out.push(BlockRef {
                    paddr: p,
                    bank: d.bank,
                    row: d.row,
                    column: d.column,
                });
            }
            p += 64;
        }
        let arc = Arc::new(out);
        self.srows.insert(key, arc.clone());
        arc
    }

    /// Walk of an allocator-backed operand: local blocks from `base` to the
    /// end of its system row, truncated to `blocks`.
    pub fn operand_walk(
        &mut self,
        map: &MappingConfig,
        desc: &OperandDesc,
        rank_id: (u8, u8),
        blocks: usize,
    ) -> Vec<BlockRef> {
        if let Some(raw) = &desc.raw {
            return raw_walk(raw, blocks);
        }
        let srow = map.system_row_bytes();
        let srow_base = desc.base.0 - desc.base.0 % srow;
        let all = self.srow_local(map, srow_base, rank_id);
        all.iter()
            .filter(|b| b.paddr >= desc.base.0)
            .take(blocks)
            .copied()
            .collect()
    }
}

/// Synthetic whole-row walk for microbenchmarks: banks interleave per
/// block, rows advance once every bank finishes its row.
pub fn raw_walk(span: &RawSpan, blocks: usize) -> Vec<BlockRef> {
    let mut out = Vec::with_capacity(blocks);
    let mut k = 0u64;
    'outer: for row in span.row0..span.row0 + span.nrows {
        for col in 0..span.columns {
            for &bank in &span.banks {
                if out.len() >= blocks {
                    break 'outer;
                }
                if k >= span.skip_blocks {
                    out.push(BlockRef {
                        paddr: span.paddr_base + k * 64,
                        bank,
                        row,
                        column: col,
                    });
                }
                k += 1;
            }
        }
    }
    out
}

/// Streaming visit order: indices into `blocks`, round-robin across bank
/// groups, preserving ascending order within each group.
pub fn streaming_order(blocks: &[BlockRef], group_of: impl Fn(u8) -> u8, groups: u32) -> Vec<u32> {
    let mut queues: Vec<Vec<u32>> = vec![Vec::new(); groups as usize];
    for (i, b) in blocks.iter().enumerate() {
        queues[group_of(b.bank) as usize].push(i as u32);
    }
    let mut cursors = vec![0usize; queues.len()];
    let mut out = Vec::with_capacity(blocks.len());
    let mut g = 0usize;
    while out.len() < blocks.len() {
        let mut advanced = false;
        for step in 0..queues.len() {
            let q = (g + step) % queues.len();
            if cursors[q] < queues[q].len() {
                out.push(queues[q][cursors[q]]);
                cursors[q] += 1;
                g = (q + 1) % queues.len();
                advanced = true;
                break;
            }
        }
        debug_assert!(advanced);
    }
    out
}

/// Per-rank local block lists of one system row, for runtime-side
/// splitting and reductions.
pub fn srow_rank_blocks(
    map: &MappingConfig,
    srow_base: u64,
) -> HashMap<(u8, u8), Vec<BlockRef>> {
    let mut out: HashMap<(u8, u8), Vec<BlockRef>> = HashMap::new();
    let srow = map.system_row_bytes();
    let mut p = srow_base;
    while p < srow_base + srow {
        let d = map.map_physical(PhysicalAddress(p)).expect("in range");
        out.entry(d.rank_id()).or_default().push(BlockRef {
            paddr: p,
            bank: d.bank,
            row: d.row,
            column: d.column,
        });
        p += 64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::MapMode;

    fn map() -> MappingConfig {
        MappingConfig::default_for(2, 2, 16, 2, 8192, 128, 1, MapMode::Baseline).unwrap()
    }

    #[test]
    fn local_walk_is_ascending_and_rank_pure() {
        let m = map();
        let mut cache = WalkCache::default();
        let rank = (0u8, 0u8);
        let walk = cache.srow_local(&m, 0, rank);
        assert_eq!(walk.len() as u64, m.system_row_bytes() / 64 / 4);
        for w in walk.windows(2) {
            assert!(w[0].paddr < w[1].paddr);
        }
        for b in walk.iter() {
            let d = m.map_physical(PhysicalAddress(b.paddr)).unwrap();
            assert_eq!(d.rank_id(), rank);
            assert_eq!((d.bank, d.row, d.column), (b.bank, b.row, b.column));
        }
    }

    #[test]
    fn streaming_order_alternates_groups() {
        let m = map();
        let mut cache = WalkCache::default();
        let walk = cache.srow_local(&m, 0, (0, 0));
        let order = streaming_order(&walk, |b| m.bank_group_of(b), 2);
        assert_eq!(order.len(), walk.len());
        // While both groups have blocks left, consecutive visits alternate.
        let mut alternations = 0;
        for w in order.windows(2).take(walk.len() / 2) {
            let g0 = m.bank_group_of(walk[w[0] as usize].bank);
            let g1 = m.bank_group_of(walk[w[1] as usize].bank);
            if g0 != g1 {
                alternations += 1;
            }
        }
        assert!(alternations * 10 >= walk.len() / 2 * 9, "groups must alternate");
        // And it is a permutation.
        let mut seen = vec![false; walk.len()];
        for &i in &order {
            assert!(!seen[i as usize]);
            seen[i as usize] = true;
        }
    }

    #[test]
    fn raw_walk_interleaves_banks() {
        let span = RawSpan {
            banks: vec![0, 8],
            row0: 5,
            nrows: 2,
            columns: 4,
            skip_blocks: 0,
            paddr_base: 1 << 40,
        };
        let w = raw_walk(&span, 16);
        assert_eq!(w.len(), 16);
        assert_eq!(w[0].bank, 0);
        assert_eq!(w[1].bank, 8);
        assert_eq!(w[0].column, w[1].column);
        assert_eq!(w[8].row, 6);
    }
}

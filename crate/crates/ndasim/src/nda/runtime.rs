//! Host-side NDA runtime: vector handles over allocator-backed storage,
//! splitting of API-level operations into per-(system row, rank)
//! instructions, and the host reductions of per-lane partial results.
//!
//! The runtime communicates with the NDAs only through launch packets
//! (control writes) and ordinary memory transactions; completion is
//! tracked host-side through the replicated FSMs, so no polling traffic
//! exists.

use super::instruction::{LaunchError, NdaInstruction, Opcode, OperandDesc};
use super::walk::srow_rank_blocks;
use super::{Completion, DataPort};
use crate::addressing::{Allocation, MappingConfig, PhysicalAddress};
use crate::dram::Cycle;
use std::collections::HashMap;

/// Functional backing store, sparse over 64B blocks of f32 elements.
/// Untouched memory reads as zero.
#[derive(Debug, Default, Clone)]
pub struct FuncMem {
    blocks: HashMap<u64, [f32; 16]>,
}

impl FuncMem {
    pub fn read(&self, paddr: u64) -> [f32; 16] {
        debug_assert_eq!(paddr % 64, 0);
        self.blocks.get(&(paddr / 64)).copied().unwrap_or([0.0; 16])
    }

    pub fn write(&mut self, paddr: u64, value: [f32; 16]) {
        debug_assert_eq!(paddr % 64, 0);
        self.blocks.insert(paddr / 64, value);
    }

    pub fn read_elem(&self, paddr: u64) -> f32 {
        let block = paddr & !63;
        self.read(block)[((paddr % 64) / 4) as usize]
    }

    pub fn write_elem(&mut self, paddr: u64, v: f32) {
        let block = paddr & !63;
        let mut b = self.read(block);
        b[((paddr % 64) / 4) as usize] = v;
        self.write(block, b);
    }
}

impl DataPort for FuncMem {
    fn read_block(&mut self, paddr: u64) -> [f32; 16] {
        self.read(paddr)
    }
    fn write_block(&mut self, paddr: u64, value: [f32; 16]) {
        self.write(paddr, value);
    }
}

/// A shared (globally interleaved) vector of f32 elements.
#[derive(Debug, Clone)]
pub struct HVec {
    pub alloc: Allocation,
    pub len: u64,
}

impl HVec {
    pub fn paddr_of(&self, elem: u64) -> PhysicalAddress {
        self.alloc.paddr_of_byte(elem * 4)
    }

    /// Direct (uncharged) store of initial contents.
    pub fn store(&self, mem: &mut FuncMem, values: &[f32]) {
        assert!(values.len() as u64 <= self.len);
        for (i, v) in values.iter().enumerate() {
            mem.write_elem(self.paddr_of(i as u64).0, *v);
        }
    }

    pub fn load(&self, mem: &FuncMem, n: usize) -> Vec<f32> {
        (0..n as u64)
            .map(|i| mem.read_elem(self.paddr_of(i).0))
            .collect()
    }
}

/// A row-major matrix whose row tiles are aligned to system rows so that
/// every GEMV tile stays within one system row.
#[derive(Debug, Clone)]
pub struct HMat {
    pub alloc: Allocation,
    pub rows: u64,
    /// Padded column count, multiple of 16.
    pub cols: u64,
    pub rows_per_tile: u64,
}

impl HMat {
    pub fn tiles(&self) -> u64 {
        self.rows.div_ceil(self.rows_per_tile)
    }

    pub fn tile_rows(&self, t: u64) -> u64 {
        (self.rows - t * self.rows_per_tile).min(self.rows_per_tile)
    }

    pub fn paddr_of(&self, row: u64, col: u64) -> PhysicalAddress {
        let t = row / self.rows_per_tile;
        let local = row % self.rows_per_tile;
        PhysicalAddress(self.alloc.system_rows[t as usize] + (local * self.cols + col) * 4)
    }

    pub fn store(&self, mem: &mut FuncMem, values: &[Vec<f32>]) {
        for (r, rowv) in values.iter().enumerate() {
            for (c, v) in rowv.iter().enumerate() {
                mem.write_elem(self.paddr_of(r as u64, c as u64).0, *v);
            }
        }
    }
}

/// A rank-private (replicated or partial) vector: each rank holds its own
/// logical copy packed into its local blocks of the allocation.
#[derive(Debug, Clone)]
pub struct RVec {
    pub alloc: Allocation,
    /// Logical f32 elements per rank copy.
    pub len: u64,
}

/// Rank-local block addresses of one system row, ascending, per rank.
pub fn rank_blocks_of_srow(map: &MappingConfig, srow_base: u64) -> HashMap<(u8, u8), Vec<u64>> {
    srow_rank_blocks(map, srow_base)
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().map(|b| b.paddr).collect()))
        .collect()
}

pub fn all_ranks(map: &MappingConfig) -> Vec<(u8, u8)> {
    let mut v = Vec::new();
    for c in 0..map.channels as u8 {
        for r in 0..map.ranks as u8 {
            v.push((c, r));
        }
    }
    v
}

impl RVec {
    /// Packed block paddrs of one rank's copy (first local blocks).
    pub fn rank_paddrs(&self, map: &MappingConfig, rank: (u8, u8)) -> Vec<u64> {
        let blocks = self.len.div_ceil(16) as usize;
        let mut out = Vec::with_capacity(blocks);
        for srow in &self.alloc.system_rows {
            let per = rank_blocks_of_srow(map, *srow);
            out.extend(per.get(&rank).map(|v| v.as_slice()).unwrap_or(&[]));
            if out.len() >= blocks {
                break;
            }
        }
        out.truncate(blocks);
        out
    }

    /// Direct (uncharged) store of every rank's copy.
    pub fn store_all(&self, map: &MappingConfig, mem: &mut FuncMem, values: &[f32]) {
        for rank in all_ranks(map) {
            self.store_rank(map, mem, rank, values);
        }
    }

    pub fn store_rank(
        &self,
        map: &MappingConfig,
        mem: &mut FuncMem,
        rank: (u8, u8),
        values: &[f32],
    ) {
        let paddrs = self.rank_paddrs(map, rank);
        for (k, chunk) in values.chunks(16).enumerate() {
            let mut b = [0.0f32; 16];
            b[..chunk.len()].copy_from_slice(chunk);
            mem.write(paddrs[k], b);
        }
    }
}

/// Per-tile partial outputs of a GEMV.
#[derive(Debug, Clone)]
pub struct GemvPartials {
    pub tiles: Vec<RVec>,
}

/// Scalars attached to an operation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Scalars {
    pub alpha: f32,
    pub beta: f32,
    pub gamma: f32,
}

/// Splits an elementwise or reduction operation over shared vectors into
/// per-(system row, rank) instructions. All operands must be same-color,
/// same-offset allocations of equal length.
pub fn split_elementwise(
    map: &MappingConfig,
    opcode: Opcode,
    operands: &[&HVec],
    scalars: Scalars,
) -> Result<Vec<NdaInstruction>, LaunchError> {
    assert!(opcode != Opcode::Gemv);
    let len = operands[0].len;
    for o in operands {
        if o.len != len {
            return Err(LaunchError::Invalid("operand length mismatch".into()));
        }
    }
    let total_blocks = len.div_ceil(16);
    let blocks_per_srow = map.system_row_bytes() / 64;
    let mut out = Vec::new();
    let n_srows = total_blocks.div_ceil(blocks_per_srow);
    for s in 0..n_srows {
        let blocks_here = (total_blocks - s * blocks_per_srow).min(blocks_per_srow);
        // Per-rank local offsets are identical across operands (same color
        // and offset), so compute them once from the first operand's srow.
        let first_base = operands[0].alloc.system_rows[s as usize];
        let per_rank = rank_blocks_of_srow(map, first_base);
        let mut ranks: Vec<(u8, u8)> = per_rank.keys().copied().collect();
        ranks.sort();
        for rank in ranks {
            let local: Vec<u64> = per_rank[&rank]
                .iter()
                .copied()
                .filter(|p| (p - first_base) / 64 < blocks_here)
                .collect();
            if local.is_empty() {
                continue;
            }
            let mut n_local = local.len() as u64 * 16;
            let tail = len % 16;
            let global_tail_block = total_blocks - 1;
            let holds_tail = tail != 0
                && s == global_tail_block / blocks_per_srow
                && local
                    .iter()
                    .any(|p| (p - first_base) / 64 == global_tail_block % blocks_per_srow);
            if holds_tail {
                n_local = n_local - 16 + tail;
            }
            let first_off = local[0] - first_base;
            let descs = operands
                .iter()
                .map(|o| {
                    OperandDesc::sharded(PhysicalAddress(
                        o.alloc.system_rows[s as usize] + first_off,
                    ))
                })
                .collect();
            out.push(NdaInstruction {
                opcode,
                operands: descs,
                n_elems: n_local as u32,
                rows: 0,
                row_stride: 0,
                col0: 0,
                bound: n_local as u32,
                alpha: scalars.alpha,
                beta: scalars.beta,
                gamma: scalars.gamma,
                accumulate: false,
                target: rank,
            });
        }
    }
    Ok(out)
}

/// Splits `ypart[tile] = A_tile · x` into per-(tile, chunk, rank)
/// instructions. `x` is rank-replicated; `ypart.tiles[t]` holds per-lane
/// partials (block r of a rank's share = row r's 16 lane slots). Column
/// chunks beyond the first accumulate into the partials.
pub fn split_gemv(
    map: &MappingConfig,
    a: &HMat,
    x: &RVec,
    ypart: &GemvPartials,
) -> Result<Vec<NdaInstruction>, LaunchError> {
    let chunk_elems = 2048u64.min(a.cols);
    if a.cols % 16 != 0 {
        return Err(LaunchError::Invalid("GEMV columns must be padded to 16".into()));
    }
    let mut out = Vec::new();
    for t in 0..a.tiles() {
        let m_t = a.tile_rows(t);
        let srow_base = a.alloc.system_rows[t as usize];
        let per_rank = rank_blocks_of_srow(map, srow_base);
        let mut ranks: Vec<(u8, u8)> = per_rank.keys().copied().collect();
        ranks.sort();
        let mut chunk0 = 0u64;
        let mut chunk_idx = 0u64;
        while chunk0 < a.cols {
            let cols_here = chunk_elems.min(a.cols - chunk0);
            for &rank in &ranks {
                let local = &per_rank[&rank];
                let a_base = local[0];
                let elem0 = (a_base - srow_base) / 4;
                let x_paddrs = x.rank_paddrs(map, rank);
                let y_paddrs = ypart.tiles[t as usize].rank_paddrs(map, rank);
                if y_paddrs.len() < m_t as usize {
                    return Err(LaunchError::Invalid(
                        "partial vector share smaller than tile rows".into(),
                    ));
                }
                let x_chunk_block = (chunk0 / 16) as usize;
                out.push(NdaInstruction {
                    opcode: Opcode::Gemv,
                    operands: vec![
                        OperandDesc {
                            base: PhysicalAddress(a_base),
                            packed: false,
                            elem0: elem0 as u32,
                            raw: None,
                        },
                        OperandDesc::packed(PhysicalAddress(x_paddrs[x_chunk_block])),
                        OperandDesc::packed(PhysicalAddress(y_paddrs[0])),
                    ],
                    n_elems: cols_here as u32,
                    rows: m_t as u16,
                    row_stride: a.cols as u32,
                    col0: chunk0 as u32,
                    bound: (m_t * cols_here) as u32,
                    alpha: 0.0,
                    beta: 0.0,
                    gamma: 0.0,
                    accumulate: chunk_idx > 0,
                    target: rank,
                });
            }
            chunk0 += cols_here;
            chunk_idx += 1;
        }
    }
    Ok(out)
}

/// Host reduction of reduction-op lane accumulators: chip-major lane order
/// within each instruction, instructions in ticket order, all in f64.
pub fn reduce_scalar(completions: &[Completion]) -> f64 {
    let mut total = 0.0f64;
    for c in completions {
        let mut s = 0.0f64;
        for chip in 0..8 {
            for lane in 0..2 {
                s += c.accums[chip][lane] as f64;
            }
        }
        total += s;
    }
    total
}

/// Host reduction of GEMV partials for one tile: per row, sum the 16 lane
/// slots of every rank's partial block, ranks in ascending id order.
pub fn reduce_gemv_tile(
    map: &MappingConfig,
    mem: &FuncMem,
    ypart_tile: &RVec,
    m: usize,
) -> Vec<f64> {
    let mut ranks = all_ranks(map);
    ranks.sort();
    let mut y = vec![0.0f64; m];
    for rank in ranks {
        let paddrs = ypart_tile.rank_paddrs(map, rank);
        for (r, yv) in y.iter_mut().enumerate() {
            let block = mem.read(paddrs[r]);
            for slot in block.iter() {
                *yv += *slot as f64;
            }
        }
    }
    y
}

/// Cycle bookkeeping of one launched operation.
#[derive(Debug, Clone)]
pub struct TicketState {
    pub id: u64,
    pub created: Cycle,
    pub instrs: Vec<NdaInstruction>,
    pub completions: Vec<Option<Completion>>,
    pub done_cycle: Option<Cycle>,
}

impl TicketState {
    pub fn done(&self) -> bool {
        self.done_cycle.is_some()
    }

    /// Completions in instruction order; panics unless done.
    pub fn ordered_completions(&self) -> Vec<Completion> {
        self.completions
            .iter()
            .map(|c| c.expect("ticket complete"))
            .collect()
    }
}

//! Shared harness for driving allocator-backed NDA operations through a
//! full simulation and reading back results.

use ndasim::addressing::{Color, PhysicalAddress, Region};
use ndasim::nda::runtime::{
    reduce_gemv_tile, reduce_scalar, split_elementwise, split_gemv, GemvPartials, HMat, HVec,
    RVec, Scalars,
};
use ndasim::nda::{NdaInstruction, Opcode};
use ndasim::rng::CounterRng;
use ndasim::sim::config::SimConfig;
use ndasim::sim::{BulkTransfer, Simulator};

pub struct OpHarness {
    pub sim: Simulator,
    pub region: Region,
    pub srow: u64,
}

impl OpHarness {
    pub fn new(seed: u64) -> OpHarness {
        let cfg = SimConfig {
            cycles: u64::MAX,
            seed,
            ..Default::default()
        };
        let sim = Simulator::new(cfg).unwrap();
        let map = sim.core.map.clone();
        let color = map.color_of(PhysicalAddress(0)).unwrap();
        let region = Region::for_color(&map, Color(color.0));
        let srow = map.system_row_bytes();
        OpHarness { sim, region, srow }
    }

    pub fn alloc_vec(&mut self, len: u64) -> HVec {
        let bytes = (len * 4).max(1);
        HVec {
            alloc: self.region.allocate(bytes).unwrap(),
            len,
        }
    }

    pub fn alloc_rvec(&mut self, len: u64) -> RVec {
        RVec {
            alloc: self.region.allocate(self.srow).unwrap(),
            len,
        }
    }

    pub fn store_vec(&mut self, v: &HVec, vals: &[f32]) {
        v.store(&mut self.sim.core.mem, vals);
    }

    pub fn load_vec(&self, v: &HVec, n: usize) -> Vec<f32> {
        v.load(&self.sim.core.mem, n)
    }

    /// Launches and runs to completion; panics after a cycle bound.
    pub fn run_ticket(&mut self, instrs: Vec<NdaInstruction>, as_macro: bool) -> u64 {
        let now = self.sim.core.now;
        let ticket = if as_macro {
            self.sim.core.launch_macro(instrs, now).unwrap()
        } else {
            assert_eq!(instrs.len(), 1);
            self.sim
                .core
                .launch(instrs.into_iter().next().unwrap(), now)
                .unwrap()
        };
        for _ in 0..40_000_000u64 {
            if self.sim.core.ticket_done(ticket) {
                return ticket;
            }
            self.sim.step();
        }
        panic!("ticket never completed");
    }

    /// Runs an elementwise op over shared vectors as one macro.
    pub fn run_elementwise(&mut self, op: Opcode, operands: &[&HVec], scalars: Scalars) -> u64 {
        let instrs = split_elementwise(&self.sim.core.map.clone(), op, operands, scalars).unwrap();
        self.run_ticket(instrs, true)
    }

    /// Reduction read-back: one control read per instruction's rank, then
    /// the chip-major lane reduction.
    pub fn reduce(&mut self, ticket: u64) -> f64 {
        let ranks: Vec<(u8, u8)> = self.sim.core.ticket(ticket)
            .instrs
            .iter()
            .map(|i| i.target)
            .collect();
        let mut bulk = BulkTransfer::ctrl_reads(ranks);
        for _ in 0..1_000_000u64 {
            let now = self.sim.core.now;
            if bulk.step(&mut self.sim.core, now) {
                break;
            }
            self.sim.step();
        }
        assert!(bulk.done, "control reads never completed");
        reduce_scalar(&self.sim.core.ticket(ticket).ordered_completions())
    }

    /// Full GEMV flow: y = A·x with rank-replicated x, returning the
    /// host-reduced result.
    pub fn run_gemv(&mut self, a: &HMat, x_vals: &[f32]) -> Vec<f64> {
        let map = self.sim.core.map.clone();
        let x = self.alloc_rvec(a.cols);
        x.store_all(&map, &mut self.sim.core.mem, x_vals);
        let ypart = GemvPartials {
            tiles: (0..a.tiles())
                .map(|t| self.alloc_rvec(a.tile_rows(t) * 16))
                .collect(),
        };
        let instrs = split_gemv(&map, a, &x, &ypart).unwrap();
        self.run_ticket(instrs, true);
        let mut y = Vec::new();
        for (t, tile) in ypart.tiles.iter().enumerate() {
            y.extend(reduce_gemv_tile(
                &map,
                &self.sim.core.mem,
                tile,
                a.tile_rows(t as u64) as usize,
            ));
        }
        y
    }

    pub fn alloc_mat(&mut self, rows: u64, cols_padded: u64) -> HMat {
        let srow_elems = self.srow / 4;
        let rows_per_tile = (srow_elems / cols_padded).min(2048);
        let tiles = rows.div_ceil(rows_per_tile);
        HMat {
            alloc: self.region.allocate(tiles * self.srow).unwrap(),
            rows,
            cols: cols_padded,
            rows_per_tile,
        }
    }
}

pub fn random_f32s(rng: &mut CounterRng, n: usize) -> Vec<f32> {
    (0..n).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect()
}

/// Oracle-side grouping: (system row, rank) instruction partition exactly
/// as the runtime splits shared vectors; used to reproduce reduction order.
pub fn oracle_groups(
    map: &ndasim::addressing::MappingConfig,
    v: &HVec,
) -> Vec<Vec<(usize, usize)>> {
    // Returns, per instruction in ticket order, the (block index, valid
    // slots) list in ascending order.
    let total_blocks = v.len.div_ceil(16);
    let bps = map.system_row_bytes() / 64;
    let n_srows = total_blocks.div_ceil(bps);
    let mut out = Vec::new();
    for s in 0..n_srows {
        let blocks_here = (total_blocks - s * bps).min(bps);
        let mut per_rank: std::collections::BTreeMap<(u8, u8), Vec<(usize, usize)>> =
            Default::default();
        for b in 0..blocks_here {
            let global = s * bps + b;
            let paddr = v.alloc.paddr_of_block(global);
            let rank = map.map_physical(paddr).unwrap().rank_id();
            let valid = if global + 1 == total_blocks && v.len % 16 != 0 {
                (v.len % 16) as usize
            } else {
                16
            };
            per_rank.entry(rank).or_default().push((global as usize, valid));
        }
        for (_, blocks) in per_rank {
            out.push(blocks);
        }
    }
    out
}

//! Per-rank NDA memory controller and processing elements.
//!
//! One engine drives the 8 chips of a rank in lockstep. Execution follows
//! the microcoded batch flow: stream the first operand into the 1KB
//! per-chip buffer, then read the exec operand while the two FMA lanes per
//! chip compute, parking results in the write buffer, which drains in
//! write phases (entered at 64 blocks or at the tail, left when empty).
//!
//! The command stream is a pure function of the launch packet and the host
//! commands observed on the rank — never of data values. The engine
//! therefore runs identically against the real backing store or against a
//! null data plane, which is how the host-side replicas track it without
//! any NDA-to-host signaling.

use super::instruction::{NdaInstruction, Opcode};
use super::walk::{streaming_order, BlockRef, WalkCache};
use crate::addressing::MappingConfig;
use crate::dram::{CmdSource, CommandKind, Cycle, DramCommand, RankState, TimingParams};
use crate::rng::CounterRng;
use std::collections::VecDeque;
use std::sync::Arc;

/// Data plane used by the functional side of execution.
pub trait DataPort {
    fn read_block(&mut self, paddr: u64) -> [f32; 16];
    fn write_block(&mut self, paddr: u64, value: [f32; 16]);
}

/// Null data plane: replicas track control flow only.
pub struct ZeroPort;

impl DataPort for ZeroPort {
    fn read_block(&mut self, _paddr: u64) -> [f32; 16] {
        [0.0; 16]
    }
    fn write_block(&mut self, _paddr: u64, _value: [f32; 16]) {}
}

/// Host-side activity on this rank during the current cycle, as observable
/// from the command/address bus plus the host-originated sideband signals
/// (bank deference and the registered next-rank hint).
#[derive(Debug, Clone, Copy, Default)]
pub struct HostObserved {
    /// Host DRAM command to this rank this cycle: (kind, bank, row).
    pub cmd: Option<(CommandKind, u8, u32)>,
    /// Host control-register burst targeted this rank this cycle.
    pub ctrl_burst: bool,
    /// Banks with pending host transactions; NDA row commands defer.
    pub pending_banks: u32,
    /// Registered next-rank prediction points at this rank.
    pub hint_stall: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Streaming operand `stage` of the current window.
    Stream { stage: u8 },
    /// Reading the exec operand of the current window.
    Exec,
    /// GEMV: streaming the x chunk into the scratchpad.
    GemvX,
    /// GEMV: streaming one row of A (plus the old partial when
    /// accumulating).
    GemvRow,
    /// All reads done; residual write-buffer drain.
    Flush,
}

/// Architectural PE registers: control state shared by the rank's chips in
/// lockstep, accumulators per chip and FMA lane.
#[derive(Debug, Clone, PartialEq)]
pub struct PeState {
    pub phase: Phase,
    pub window_base: u32,
    pub window_len: u32,
    pub stage_sent: u32,
    pub stage_arrived: u32,
    pub row: u16,
    pub draining: bool,
    /// Two FMA-lane accumulators per chip, 8 chips.
    pub accums: [[f32; 2]; 8],
}

impl PeState {
    fn new() -> Self {
        PeState {
            phase: Phase::Stream { stage: 0 },
            window_base: 0,
            window_len: 0,
            stage_sent: 0,
            stage_arrived: 0,
            row: 0,
            draining: false,
            accums: [[0.0; 2]; 8],
        }
    }

    /// Architectural live-register footprint in bytes: phase+flags, block
    /// cursor, arrival counter, row index, write-buffer occupancy, and the
    /// counter RNG (seed + counter). The 1KB SRAMs and the 40-byte
    /// microcode image are budgeted separately.
    pub const LIVE_REGISTER_BYTES: usize = 1 + 4 + 2 + 2 + 1 + 8;
}

#[derive(Debug, Clone)]
struct PendingWrite {
    target: BlockRef,
    value: [f32; 16],
}

#[derive(Debug, Clone)]
struct ActiveInstr {
    ticket: u64,
    instr: NdaInstruction,
    walks: Vec<Arc<Vec<BlockRef>>>,
    /// Operand indices streamed before the exec stage.
    stream_ops: Vec<u8>,
    exec_op: u8,
    out_op: Option<u8>,
    n_blocks: u32,
    /// Streaming visit order of the current window (window-relative
    /// ascending positions, permuted across bank groups).
    visit: Vec<u32>,
    /// Stashed window values: [buffer, scratch, exec].
    vals: [Vec<[f32; 16]>; 3],
    arrivals: VecDeque<(Cycle, u32)>,
    /// GEMV: per-row (start, end) ranges into the A walk.
    row_ranges: Vec<(u32, u32)>,
    row_partial: [f32; 16],
    row_has_partial_read: bool,
    tile_base: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub ticket: u64,
    pub cycle: Cycle,
    /// Lane accumulators at completion (reductions only).
    pub accums: [[f32; 2]; 8],
}

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub params: TimingParams,
    pub banks: u32,
    pub bank_groups: u32,
    pub chips: u32,
    /// Bernoulli gate probability for NDA writes; `None` disables the gate.
    pub stochastic_p: Option<f64>,
    /// Blocks per stream window (1KB per chip).
    pub window_blocks: u32,
    /// Write buffer capacity in blocks.
    pub wbuf_cap: usize,
    /// Occupancy at which a write phase begins.
    pub wbuf_drain_start: usize,
}

impl EngineConfig {
    pub fn new(params: TimingParams, banks: u32, bank_groups: u32) -> Self {
        EngineConfig {
            params,
            banks,
            bank_groups,
            chips: 8,
            stochastic_p: None,
            window_blocks: 128,
            wbuf_cap: 128,
            wbuf_drain_start: 64,
        }
    }
}

/// Counters of issued work; meaningful on the real engine only.
#[derive(Debug, Clone, Copy, Default)]
pub struct EngineCounters {
    pub fma_ops: u64,
    pub buffer_accesses: u64,
    pub issued_reads: u64,
    pub issued_writes: u64,
    pub issued_row_cmds: u64,
    pub coin_stalled_cycles: u64,
    pub hint_stalled_cycles: u64,
}

#[derive(Debug, Clone)]
pub struct RankEngine {
    pub rank_id: (u8, u8),
    cfg: EngineConfig,
    map: Arc<MappingConfig>,
    /// Private mirror of the rank's protocol state, evolved from observed
    /// host commands plus this engine's own commands.
    view: RankState,
    host_burst_until: Cycle,
    queue: VecDeque<(u64, NdaInstruction, u32)>,
    active: Option<ActiveInstr>,
    pe: PeState,
    wbuf: VecDeque<PendingWrite>,
    rng: CounterRng,
    walk_cache: WalkCache,
    completions: Vec<Completion>,
    pub counters: EngineCounters,
}

impl RankEngine {
    pub fn new(rank_id: (u8, u8), cfg: EngineConfig, map: Arc<MappingConfig>) -> Self {
        RankEngine {
            rank_id,
            view: RankState::new(cfg.banks, cfg.bank_groups),
            host_burst_until: 0,
            queue: VecDeque::new(),
            active: None,
            pe: PeState::new(),
            wbuf: VecDeque::new(),
            rng: CounterRng::new(0),
            walk_cache: WalkCache::default(),
            completions: Vec::new(),
            counters: EngineCounters::default(),
            cfg,
            map,
        }
    }

    pub fn pe(&self) -> &PeState {
        &self.pe
    }

    pub fn rng_counter(&self) -> u32 {
        self.rng.counter()
    }

    /// Test hook: desynchronize the RNG (negative control for the replica
    /// equivalence checker).
    pub fn corrupt_rng(&mut self) {
        self.rng.skip(1);
    }

    pub fn wbuf_occupancy(&self) -> usize {
        self.wbuf.len()
    }

    pub fn in_write_phase(&self) -> bool {
        self.pe.draining
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len() + usize::from(self.active.is_some())
    }

    pub fn busy(&self) -> bool {
        self.active.is_some() || !self.queue.is_empty()
    }

    pub fn view(&self) -> &RankState {
        &self.view
    }

    pub fn drain_completions(&mut self) -> Vec<Completion> {
        std::mem::take(&mut self.completions)
    }

    /// Delivers a launched instruction (packet arrival).
    pub fn deliver(&mut self, ticket: u64, instr: NdaInstruction, seed: u32) {
        self.queue.push_back((ticket, instr, seed));
    }

    fn activate(&mut self) {
        let (ticket, instr, seed) = match self.queue.pop_front() {
            Some(e) => e,
            None => return,
        };
        debug_assert!(instr.n_elems <= instr.bound, "bound checked at launch");
        self.rng = CounterRng::new(seed);
        self.pe = PeState::new();
        let op = instr.opcode;
        let n_blocks = instr.n_elems.div_ceil(16);
        let (stream_ops, exec_op, out_op): (Vec<u8>, u8, Option<u8>) = match op {
            Opcode::Copy => (vec![], 0, Some(1)),
            Opcode::Scal => (vec![], 0, Some(0)),
            Opcode::Nrm2 => (vec![], 0, None),
            Opcode::Axpy => (vec![0], 1, Some(1)),
            Opcode::Xmy | Opcode::Axpby => (vec![0], 1, Some(2)),
            Opcode::Axpbypcz => (vec![0, 1], 2, Some(3)),
            Opcode::Dot => (vec![0], 1, None),
            Opcode::Gemv => (vec![], 0, Some(2)),
        };
        let mut walks: Vec<Arc<Vec<BlockRef>>> = Vec::new();
        let mut row_ranges = Vec::new();
        let mut tile_base = 0u64;
        if op == Opcode::Gemv {
            let stride = instr.row_stride as u64;
            let (col0, cols_here) = (instr.col0 as u64, instr.n_elems as u64);
            let a_desc = &instr.operands[0];
            tile_base = a_desc.base.0 - a_desc.elem0 as u64 * 4;
            let tile_end = tile_base + instr.rows as u64 * stride * 4;
            let a_all =
                self.walk_cache
                    .operand_walk(&self.map, a_desc, self.rank_id, usize::MAX);
            // Keep only blocks inside this chunk's column window.
            let a_walk: Vec<BlockRef> = a_all
                .into_iter()
                .filter(|b| {
                    if b.paddr >= tile_end {
                        return false;
                    }
                    let col = (b.paddr - tile_base) / 4 % stride;
                    col >= col0 && col < col0 + cols_here
                })
                .collect();
            let mut start = 0u32;
            for r in 0..instr.rows as u64 {
                let row_end_paddr = tile_base + (r + 1) * stride * 4;
                let mut end = start;
                while (end as usize) < a_walk.len() && a_walk[end as usize].paddr < row_end_paddr {
                    end += 1;
                }
                row_ranges.push((start, end));
                start = end;
            }
            let x_blocks = (instr.n_elems / 16) as usize;
            let x_walk = self.walk_cache.operand_walk(
                &self.map,
                &instr.operands[1],
                self.rank_id,
                x_blocks,
            );
            let y_walk = self.walk_cache.operand_walk(
                &self.map,
                &instr.operands[2],
                self.rank_id,
                instr.rows as usize,
            );
            debug_assert_eq!(x_walk.len(), x_blocks, "x share too small");
            debug_assert_eq!(y_walk.len(), instr.rows as usize, "partial share too small");
            walks.push(Arc::new(a_walk));
            walks.push(Arc::new(x_walk));
            walks.push(Arc::new(y_walk));
        } else {
            for desc in &instr.operands {
                let w = self.walk_cache.operand_walk(
                    &self.map,
                    desc,
                    self.rank_id,
                    n_blocks as usize,
                );
                debug_assert_eq!(w.len(), n_blocks as usize, "operand share too small");
                walks.push(Arc::new(w));
            }
        }
        let mut act = ActiveInstr {
            ticket,
            instr,
            walks,
            stream_ops,
            exec_op,
            out_op,
            n_blocks,
            visit: Vec::new(),
            vals: [Vec::new(), Vec::new(), Vec::new()],
            arrivals: VecDeque::new(),
            row_ranges,
            row_partial: [0.0; 16],
            row_has_partial_read: false,
            tile_base,
        };
        if op == Opcode::Gemv {
            self.pe.phase = Phase::GemvX;
            self.pe.window_len = act.instr.n_elems / 16;
            act.vals[1].resize(self.pe.window_len as usize, [0.0; 16]);
        } else {
            self.pe.phase = if act.stream_ops.is_empty() {
                Phase::Exec
            } else {
                Phase::Stream { stage: 0 }
            };
            self.start_window(&mut act, 0);
        }
        self.active = Some(act);
    }

    /// Prepares window [base, base+len) and its streaming visit order.
    fn start_window(&mut self, act: &mut ActiveInstr, base: u32) {
        let len = (act.n_blocks - base).min(self.cfg.window_blocks);
        self.pe.window_base = base;
        self.pe.window_len = len;
        self.pe.stage_sent = 0;
        self.pe.stage_arrived = 0;
        let walk = &act.walks[act.exec_op as usize];
        let window = &walk[base as usize..(base + len) as usize];
        let map = &self.map;
        act.visit = streaming_order(window, |b| map.bank_group_of(b), self.cfg.bank_groups);
        for v in act.vals.iter_mut() {
            v.clear();
            v.resize(len as usize, [0.0; 16]);
        }
    }

    fn valid_slots(&self, act: &ActiveInstr, abs_block: u32) -> usize {
        if abs_block + 1 == act.n_blocks {
            let rem = (act.instr.n_elems % 16) as usize;
            if rem == 0 {
                16
            } else {
                rem
            }
        } else {
            16
        }
    }

    /// Routes data arrivals up to `now` into stashes and advances phases.
    fn process_arrivals(&mut self, now: Cycle, port: &mut dyn DataPort) {
        let mut act = match self.active.take() {
            Some(a) => a,
            None => return,
        };
        while let Some(&(cyc, idx)) = act.arrivals.front() {
            if cyc > now {
                break;
            }
            act.arrivals.pop_front();
            self.pe.stage_arrived += 1;
            match self.pe.phase {
                Phase::Stream { stage } => {
                    let opi = act.stream_ops[stage as usize] as usize;
                    let b = act.walks[opi][(self.pe.window_base + idx) as usize];
                    act.vals[stage as usize][idx as usize] = port.read_block(b.paddr);
                    self.counters.buffer_accesses += self.cfg.chips as u64;
                    if self.pe.stage_arrived == self.pe.window_len {
                        let next = stage + 1;
                        self.pe.phase = if (next as usize) < act.stream_ops.len() {
                            Phase::Stream { stage: next }
                        } else {
                            Phase::Exec
                        };
                        self.pe.stage_sent = 0;
                        self.pe.stage_arrived = 0;
                    }
                }
                Phase::Exec => {
                    let b = act.walks[act.exec_op as usize][(self.pe.window_base + idx) as usize];
                    act.vals[2][idx as usize] = port.read_block(b.paddr);
                    self.counters.buffer_accesses += self.cfg.chips as u64;
                    if self.pe.stage_arrived == self.pe.window_len {
                        self.compute_window(&mut act, port);
                        let next_base = self.pe.window_base + self.pe.window_len;
                        if next_base < act.n_blocks {
                            self.pe.phase = if act.stream_ops.is_empty() {
                                Phase::Exec
                            } else {
                                Phase::Stream { stage: 0 }
                            };
                            self.start_window(&mut act, next_base);
                        } else {
                            self.pe.phase = Phase::Flush;
                        }
                    }
                }
                Phase::GemvX => {
                    let b = act.walks[1][idx as usize];
                    act.vals[1][idx as usize] = port.read_block(b.paddr);
                    self.counters.buffer_accesses += self.cfg.chips as u64;
                    if self.pe.stage_arrived == self.pe.window_len {
                        self.pe.phase = Phase::GemvRow;
                        self.pe.row = 0;
                        self.begin_rows(&mut act);
                    }
                }
                Phase::GemvRow => {
                    if act.row_has_partial_read && idx == 0 {
                        let b = act.walks[2][self.pe.row as usize];
                        act.row_partial = port.read_block(b.paddr);
                    } else {
                        let a_idx = if act.row_has_partial_read { idx - 1 } else { idx };
                        act.vals[2][a_idx as usize] = {
                            let (start, _) = act.row_ranges[self.pe.row as usize];
                            let b = act.walks[0][(start + a_idx) as usize];
                            port.read_block(b.paddr)
                        };
                    }
                    self.counters.buffer_accesses += self.cfg.chips as u64;
                    if self.pe.stage_arrived == self.pe.window_len {
                        self.compute_row(&mut act);
                        self.pe.row += 1;
                        self.begin_rows(&mut act);
                    }
                }
                Phase::Flush => unreachable!("no reads arrive in flush"),
            }
        }
        self.active = Some(act);
    }

    /// Sets up the next GEMV row with local work, emitting empty rows on
    /// the way; enters Flush when rows are exhausted.
    fn begin_rows(&mut self, act: &mut ActiveInstr) {
        loop {
            let r = self.pe.row as usize;
            if r >= act.row_ranges.len() {
                self.pe.phase = Phase::Flush;
                return;
            }
            let (start, end) = act.row_ranges[r];
            let a_blocks = end - start;
            if a_blocks == 0 {
                if !act.instr.accumulate {
                    if self.wbuf.len() >= self.cfg.wbuf_cap {
                        // Write buffer full: park here and retry after a
                        // drain (window_len == 0 marks the pending state).
                        self.pe.window_len = 0;
                        return;
                    }
                    let target = act.walks[2][r];
                    self.wbuf.push_back(PendingWrite {
                        target,
                        value: [0.0; 16],
                    });
                    self.counters.buffer_accesses += self.cfg.chips as u64;
                }
                self.pe.row += 1;
                continue;
            }
            act.row_has_partial_read = act.instr.accumulate;
            act.row_partial = [0.0; 16];
            self.pe.stage_sent = 0;
            self.pe.stage_arrived = 0;
            self.pe.window_len = a_blocks + u32::from(act.row_has_partial_read);
            act.vals[2].clear();
            act.vals[2].resize(a_blocks as usize, [0.0; 16]);
            return;
        }
    }

    /// Functional math for one completed window. Values latch at window
    /// completion; lane accumulation order is ascending (block, slot).
    fn compute_window(&mut self, act: &mut ActiveInstr, port: &mut dyn DataPort) {
        let op = act.instr.opcode;
        let (alpha, beta, gamma) = (act.instr.alpha, act.instr.beta, act.instr.gamma);
        let base = self.pe.window_base;
        let len = self.pe.window_len;
        let mut results: Vec<[f32; 16]> = vec![[0.0; 16]; len as usize];
        for k in 0..len {
            let abs = base + k;
            let valid = self.valid_slots(act, abs);
            let x = act.vals[0][k as usize];
            let y = act.vals[1][k as usize];
            let z = act.vals[2][k as usize];
            let out = &mut results[k as usize];
            *out = z;
            match op {
                Opcode::Copy => {}
                Opcode::Scal => {
                    for s in 0..valid {
                        out[s] = alpha * z[s];
                    }
                    self.counters.fma_ops += valid as u64;
                }
                Opcode::Axpy => {
                    for s in 0..valid {
                        out[s] = alpha.mul_add(z[s], x[s]);
                    }
                    self.counters.fma_ops += valid as u64;
                }
                Opcode::Xmy => {
                    for s in 0..valid {
                        out[s] = x[s] * z[s];
                    }
                    self.counters.fma_ops += valid as u64;
                }
                Opcode::Axpby => {
                    for s in 0..valid {
                        out[s] = alpha.mul_add(x[s], beta * z[s]);
                    }
                    self.counters.fma_ops += 2 * valid as u64;
                }
                Opcode::Axpbypcz => {
                    for s in 0..valid {
                        out[s] = alpha.mul_add(x[s], beta.mul_add(y[s], gamma * z[s]));
                    }
                    self.counters.fma_ops += 3 * valid as u64;
                }
                Opcode::Dot => {
                    for s in 0..valid {
                        self.pe.accums[s / 2][s % 2] =
                            x[s].mul_add(z[s], self.pe.accums[s / 2][s % 2]);
                    }
                    self.counters.fma_ops += valid as u64;
                }
                Opcode::Nrm2 => {
                    for s in 0..valid {
                        self.pe.accums[s / 2][s % 2] =
                            z[s].mul_add(z[s], self.pe.accums[s / 2][s % 2]);
                    }
                    self.counters.fma_ops += valid as u64;
                }
                Opcode::Gemv => unreachable!(),
            }
        }
        if let Some(out_op) = act.out_op {
            let out_walk = act.walks[out_op as usize].clone();
            debug_assert!(
                self.wbuf.len() + act.visit.len() <= self.cfg.wbuf_cap,
                "write buffer would overflow"
            );
            // Writes queue in streaming visit order.
            for &k in &act.visit {
                let abs = base + k;
                let mut value = results[k as usize];
                let valid = self.valid_slots(act, abs);
                let target = out_walk[abs as usize];
                if valid < 16 {
                    let old = port.read_block(target.paddr);
                    value[valid..].copy_from_slice(&old[valid..]);
                }
                self.wbuf.push_back(PendingWrite { target, value });
                self.counters.buffer_accesses += self.cfg.chips as u64;
            }
        }
    }

    /// Lane math for one completed GEMV row.
    fn compute_row(&mut self, act: &mut ActiveInstr) {
        let r = self.pe.row as usize;
        let (start, end) = act.row_ranges[r];
        let cols = act.instr.n_elems as u64;
        let mut vals = act.row_partial;
        for (i, a_idx) in (start..end).enumerate() {
            let b = act.walks[0][a_idx as usize];
            let elem0 = (b.paddr - act.tile_base) / 4;
            let col0 = (elem0 % cols) as usize;
            let a = act.vals[2][i];
            for s in 0..16 {
                let j = col0 + s;
                let xv = act.vals[1][j / 16][j % 16];
                vals[s] = a[s].mul_add(xv, vals[s]);
            }
            self.counters.fma_ops += 16;
        }
        let target = act.walks[2][r];
        self.wbuf.push_back(PendingWrite { target, value: vals });
        self.counters.buffer_accesses += self.cfg.chips as u64;
    }

    /// The `ahead`-th upcoming read of the current phase (0 = next).
    fn peek_read(&self, act: &ActiveInstr, ahead: u32) -> Option<BlockRef> {
        let pos = self.pe.stage_sent + ahead;
        if pos >= self.pe.window_len {
            return None;
        }
        match self.pe.phase {
            Phase::Stream { stage } => {
                let opi = act.stream_ops[stage as usize] as usize;
                let k = act.visit[pos as usize];
                Some(act.walks[opi][(self.pe.window_base + k) as usize])
            }
            Phase::Exec => {
                let k = act.visit[pos as usize];
                Some(act.walks[act.exec_op as usize][(self.pe.window_base + k) as usize])
            }
            Phase::GemvX => Some(act.walks[1][pos as usize]),
            Phase::GemvRow => {
                if act.row_has_partial_read && pos == 0 {
                    Some(act.walks[2][self.pe.row as usize])
                } else {
                    let a_off = if act.row_has_partial_read { pos - 1 } else { pos };
                    let (start, _) = act.row_ranges[self.pe.row as usize];
                    Some(act.walks[0][(start + a_off) as usize])
                }
            }
            Phase::Flush => None,
        }
    }

    /// Window-relative stash index for the read at position `pos`.
    fn arrival_index(&self, act: &ActiveInstr, pos: u32) -> u32 {
        match self.pe.phase {
            Phase::Stream { .. } | Phase::Exec => act.visit[pos as usize],
            _ => pos,
        }
    }

    /// One simulation cycle. `obs` must reflect this cycle's host command.
    pub fn step(
        &mut self,
        obs: &HostObserved,
        now: Cycle,
        port: &mut dyn DataPort,
    ) -> Option<DramCommand> {
        let t = self.cfg.params;
        if let Some((kind, bank, row)) = obs.cmd {
            self.view.observe_command(kind, bank, row, &t, now);
            if kind.is_column() {
                let lat = if kind == CommandKind::Rd { t.t_cl } else { t.t_cwl };
                self.host_burst_until = self.host_burst_until.max(now + lat + t.t_bl);
            }
        }
        if obs.ctrl_burst {
            self.view.observe_control_burst(now, &t);
            self.host_burst_until = self.host_burst_until.max(now + t.t_cwl + t.t_bl);
        }
        self.process_arrivals(now, port);
        self.check_done(now);
        if self.active.is_none() {
            self.activate();
        }

        // Opportunism gate: issue only when the rank is idle from the
        // host's perspective this cycle.
        if obs.cmd.is_some() || obs.ctrl_burst || now < self.host_burst_until {
            return None;
        }
        let mut act = self.active.take()?;
        let cmd = self.select_command(&mut act, obs, now, port);
        self.active = Some(act);
        self.check_done(now);
        cmd
    }

    fn check_done(&mut self, now: Cycle) {
        let done = match &self.active {
            Some(act) => {
                self.pe.phase == Phase::Flush && self.wbuf.is_empty() && act.arrivals.is_empty()
            }
            None => false,
        };
        if done {
            let act = self.active.take().unwrap();
            self.completions.push(Completion {
                ticket: act.ticket,
                cycle: now,
                accums: self.pe.accums,
            });
        }
    }

    fn update_drain_flag(&mut self) {
        let reads_pending = self.pe.phase != Phase::Flush;
        if self.pe.draining {
            if self.wbuf.is_empty() {
                self.pe.draining = false;
            }
        } else if self.wbuf.len() >= self.cfg.wbuf_drain_start
            || (!reads_pending && !self.wbuf.is_empty())
        {
            self.pe.draining = true;
        }
    }

    fn select_command(
        &mut self,
        act: &mut ActiveInstr,
        obs: &HostObserved,
        now: Cycle,
        port: &mut dyn DataPort,
    ) -> Option<DramCommand> {
        let t = self.cfg.params;
        if self.pe.phase == Phase::GemvRow && self.pe.window_len == 0 {
            self.begin_rows(act);
        }
        self.update_drain_flag();

        if self.pe.draining {
            if let Some(cmd) = self.try_write(obs, now, port) {
                return Some(cmd);
            }
            if let Some(cmd) = self.try_prepare_writes(obs, now) {
                return Some(cmd);
            }
            // Spare slots during the write phase prepare the next reads,
            // avoiding row-churn with the still-queued writes.
            let mut wbanks = 0u32;
            for w in self.wbuf.iter().take(8) {
                wbanks |= 1 << w.target.bank;
            }
            for ahead in 0..4 {
                if let Some(b) = self.peek_read(act, ahead) {
                    if wbanks & (1 << b.bank) == 0 {
                        if let Some(cmd) = self.try_row_for(b, obs, now) {
                            return Some(cmd);
                        }
                    }
                } else {
                    break;
                }
            }
            return None;
        }

        // Read phase: next block of the current stage, bank-group streams
        // already interleaved by the visit order.
        if let Some(block) = self.peek_read(act, 0) {
            if let Some(cmd) = self.try_column(CommandKind::Rd, block, now) {
                let widx = self.arrival_index(act, self.pe.stage_sent);
                self.pe.stage_sent += 1;
                act.arrivals.push_back((now + t.t_cl + t.t_bl, widx));
                self.counters.issued_reads += 1;
                return Some(cmd);
            }
            if let Some(cmd) = self.try_row_for(block, obs, now) {
                return Some(cmd);
            }
            for ahead in 1..8 {
                match self.peek_read(act, ahead) {
                    Some(b) if b.bank != block.bank => {
                        if let Some(cmd) = self.try_row_for(b, obs, now) {
                            return Some(cmd);
                        }
                    }
                    Some(_) => {}
                    None => break,
                }
            }
        }
        None
    }

    fn try_write(
        &mut self,
        obs: &HostObserved,
        now: Cycle,
        port: &mut dyn DataPort,
    ) -> Option<DramCommand> {
        let head = self.wbuf.front()?.target;
        if self.view.banks[head.bank as usize].open_row() != Some(head.row) {
            return None;
        }
        let legal = self
            .view
            .earliest_issue_local(CommandKind::Wr, head.bank, head.row, &self.cfg.params, now)
            .ok()?;
        if legal > now {
            return None;
        }
        // Write throttles: the registered next-rank hint, then the
        // stochastic coin (one draw per otherwise-ready attempt).
        if obs.hint_stall {
            self.counters.hint_stalled_cycles += 1;
            return None;
        }
        if let Some(p) = self.cfg.stochastic_p {
            if !self.rng.gen_bool(p) {
                self.counters.coin_stalled_cycles += 1;
                return None;
            }
        }
        let w = self.wbuf.pop_front().unwrap();
        port.write_block(w.target.paddr, w.value);
        self.view
            .apply_command_local(CommandKind::Wr, w.target.bank, w.target.row, &self.cfg.params, now)
            .expect("write checked legal");
        self.counters.issued_writes += 1;
        Some(DramCommand::new(
            CommandKind::Wr,
            CmdSource::Nda,
            w.target.dram(self.rank_id.0, self.rank_id.1),
            now,
        ))
    }

    fn try_prepare_writes(&mut self, obs: &HostObserved, now: Cycle) -> Option<DramCommand> {
        let mut targets: Vec<BlockRef> = Vec::new();
        let mut seen = 0u32;
        for w in self.wbuf.iter().take(8) {
            if seen & (1 << w.target.bank) == 0 {
                seen |= 1 << w.target.bank;
                targets.push(w.target);
            }
        }
        for b in targets {
            if let Some(cmd) = self.try_row_for(b, obs, now) {
                return Some(cmd);
            }
        }
        None
    }

    fn try_column(&mut self, kind: CommandKind, block: BlockRef, now: Cycle) -> Option<DramCommand> {
        if self.view.banks[block.bank as usize].open_row() != Some(block.row) {
            return None;
        }
        let legal = self
            .view
            .earliest_issue_local(kind, block.bank, block.row, &self.cfg.params, now)
            .ok()?;
        if legal > now {
            return None;
        }
        self.view
            .apply_command_local(kind, block.bank, block.row, &self.cfg.params, now)
            .expect("column checked legal");
        Some(DramCommand::new(
            kind,
            CmdSource::Nda,
            block.dram(self.rank_id.0, self.rank_id.1),
            now,
        ))
    }

    /// Row command (PRE or ACT) needed before `block` is accessible.
    /// Defers to pending host transactions on the same bank.
    fn try_row_for(&mut self, block: BlockRef, obs: &HostObserved, now: Cycle) -> Option<DramCommand> {
        let open = self.view.banks[block.bank as usize].open_row();
        if open == Some(block.row) {
            return None;
        }
        if obs.pending_banks & (1 << block.bank) != 0 {
            return None;
        }
        let kind = if open.is_some() {
            CommandKind::Pre
        } else {
            CommandKind::Act
        };
        let legal = self
            .view
            .earliest_issue_local(kind, block.bank, block.row, &self.cfg.params, now)
            .ok()?;
        if legal > now {
            return None;
        }
        self.view
            .apply_command_local(kind, block.bank, block.row, &self.cfg.params, now)
            .expect("row command checked legal");
        self.counters.issued_row_cmds += 1;
        Some(DramCommand::new(
            kind,
            CmdSource::Nda,
            block.dram(self.rank_id.0, self.rank_id.1),
            now,
        ))
    }
}

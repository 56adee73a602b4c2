//! NDA kernel driver for microbenchmarks.
//!
//! Operands are synthetic whole-row spans placed either across one bank of
//! each group (spread, streams at tCCDS) or in the reserved banks
//! (partitioned placement). The driver splits work into instructions of a
//! configurable cache-block count and keeps the NDAs busy, relaunching the
//! kernel when it finishes.

use crate::nda::{NdaInstruction, Opcode, OperandDesc, RawSpan};
use crate::sim::Core;
use crate::addressing::PhysicalAddress;
use crate::dram::Cycle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// One bank per bank group; contends with host rows.
    Spread,
    /// The reserved bank(s) of a partitioned configuration.
    Reserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaunchMode {
    /// Barrier per instruction group: every rank finishes sub-instruction
    /// k before any rank starts k+1. One packet per instruction.
    Blocking,
    /// Per-rank queues kept topped up; one packet per instruction.
    Pipelined,
    /// Whole rounds launched as macros: one packet per channel.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOpSpec {
    pub opcode: Opcode,
    pub alpha: f32,
    pub beta: f32,
    pub gamma: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub ops: Vec<KernelOpSpec>,
    pub placement: Placement,
    /// Blocks each operand spans per rank.
    pub vector_blocks: u64,
    /// Cache blocks per NDA instruction (0 = one instruction per operandful).
    pub blocks_per_instr: u32,
    pub launch: LaunchMode,
    /// In-flight instructions per rank in pipelined mode.
    pub queue_depth: u32,
    pub relaunch: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            ops: vec![KernelOpSpec {
                opcode: Opcode::Dot,
                alpha: 0.0,
                beta: 0.0,
                gamma: 0.0,
            }],
            placement: Placement::Spread,
            vector_blocks: 4096,
            blocks_per_instr: 0,
            launch: LaunchMode::Macro,
            queue_depth: 4,
            relaunch: true,
        }
    }
}

impl KernelSpec {
    pub fn set_key(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "op" => {
                let opcode = Opcode::from_str(v).ok_or_else(|| format!("unknown op {v}"))?;
                self.ops = vec![KernelOpSpec {
                    opcode,
                    alpha: 1.0,
                    beta: 1.0,
                    gamma: 1.0,
                }];
            }
            "blocks" => self.vector_blocks = v.parse().map_err(|e| format!("{e}"))?,
            "blocks_per_instr" => self.blocks_per_instr = v.parse().map_err(|e| format!("{e}"))?,
            "queue_depth" => self.queue_depth = v.parse().map_err(|e| format!("{e}"))?,
            "relaunch" => self.relaunch = matches!(v, "true" | "1" | "on"),
            "placement" => {
                self.placement = match v {
                    "spread" => Placement::Spread,
                    "reserved" => Placement::Reserved,
                    other => return Err(format!("unknown placement {other}")),
                }
            }
            "launch" => {
                self.launch = match v {
                    "blocking" => LaunchMode::Blocking,
                    "pipelined" => LaunchMode::Pipelined,
                    "macro" => LaunchMode::Macro,
                    other => return Err(format!("unknown launch mode {other}")),
                }
            }
            other => return Err(format!("unknown kernel key {other}")),
        }
        Ok(())
    }

    /// Parses the one-op-per-line instruction stream format:
    /// `opcode [alpha=..] [beta=..] [gamma=..]`.
    pub fn parse_program(&mut self, text: &str) -> Result<(), String> {
        let mut ops = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let name = it.next().unwrap();
            let opcode = Opcode::from_str(name).ok_or_else(|| format!("unknown op {name}"))?;
            let mut op = KernelOpSpec {
                opcode,
                alpha: 1.0,
                beta: 1.0,
                gamma: 1.0,
            };
            for tok in it {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| format!("bad token {tok}"))?;
                let val: f32 = v.parse().map_err(|e| format!("{e}"))?;
                match k {
                    "alpha" => op.alpha = val,
                    "beta" => op.beta = val,
                    "gamma" => op.gamma = val,
                    "n" => {} // block count comes from kernel.blocks
                    other => return Err(format!("unknown op key {other}")),
                }
            }
            ops.push(op);
        }
        if !ops.is_empty() {
            self.ops = ops;
        }
        Ok(())
    }
}

/// One instruction-group: the same sub-range on every eligible rank.
type Group = Vec<NdaInstruction>;

pub struct KernelDriver {
    spec: KernelSpec,
    /// groups[g] = per-rank instructions of sub-instruction g; one round =
    /// all groups.
    groups: Vec<Group>,
    mode_state: ModeState,
    pub rounds_completed: u64,
}

enum ModeState {
    Blocking {
        next_group: usize,
        outstanding: Vec<u64>,
    },
    Pipelined {
        /// Per eligible rank: flat instruction cursor and in-flight tickets.
        cursors: Vec<usize>,
        inflight: Vec<Vec<u64>>,
        per_rank: Vec<Vec<NdaInstruction>>,
    },
    Macro {
        outstanding: Option<u64>,
    },
}

impl KernelDriver {
    pub fn new(spec: KernelSpec, core: &Core) -> KernelDriver {
        let g = core.cfg.geometry;
        let ranks = core.nda_ranks();
        // Spread placement gives each operand its own bank per group so
        // phase switches between operands avoid row churn.
        let per_group = (g.banks / g.bank_groups) as u8;
        let banks_for = |slot: u8| -> Vec<u8> {
            match spec.placement {
                Placement::Spread => (0..g.bank_groups as u8)
                    .map(|grp| grp * per_group + slot % per_group)
                    .collect(),
                Placement::Reserved => {
                    ((g.banks - core.cfg.reserved_banks) as u8..g.banks as u8).collect()
                }
            }
        };
        let blocks_per_row_stripe = banks_for(0).len() as u64 * g.columns as u64;
        let nrows = spec.vector_blocks.div_ceil(blocks_per_row_stripe) as u32;
        let bpi = if spec.blocks_per_instr == 0 {
            spec.vector_blocks
        } else {
            spec.blocks_per_instr as u64
        };
        let n_sub = spec.vector_blocks.div_ceil(bpi);

        let mut groups: Vec<Group> = Vec::new();
        for sub in 0..n_sub {
            let skip = sub * bpi;
            let blocks_here = bpi.min(spec.vector_blocks - skip);
            let mut group = Vec::new();
            for (ri, &(ch, rk)) in ranks.iter().enumerate() {
                for (oi, op) in spec.ops.iter().enumerate() {
                    let n_operands = op.opcode.operand_count();
                    let mut operands = Vec::new();
                    for k in 0..n_operands {
                        let slot = (oi * 4 + k) as u8;
                        let base = (1u64 << 40)
                            + ((ri as u64) << 32)
                            + ((slot as u64) << 26);
                        operands.push(OperandDesc {
                            base: PhysicalAddress(base),
                            packed: false,
                            elem0: 0,
                            raw: Some(RawSpan {
                                banks: banks_for(slot),
                                row0: (slot as u32 / per_group as u32) * nrows,
                                nrows,
                                columns: g.columns as u16,
                                skip_blocks: skip,
                                paddr_base: base,
                            }),
                        });
                    }
                    group.push(NdaInstruction {
                        opcode: op.opcode,
                        operands,
                        n_elems: blocks_here as u32 * 16,
                        rows: 0,
                        row_stride: 0,
                        col0: 0,
                        bound: blocks_here as u32 * 16,
                        alpha: op.alpha,
                        beta: op.beta,
                        gamma: op.gamma,
                        accumulate: false,
                        target: (ch, rk),
                    });
                }
            }
            groups.push(group);
        }

        let mode_state = match spec.launch {
            LaunchMode::Blocking => ModeState::Blocking {
                next_group: 0,
                outstanding: Vec::new(),
            },
            LaunchMode::Pipelined => {
                // Flatten per rank: rank-local instruction streams.
                let mut per_rank: Vec<Vec<NdaInstruction>> = vec![Vec::new(); ranks.len()];
                for group in &groups {
                    for instr in group {
                        let ri = ranks.iter().position(|r| *r == instr.target).unwrap();
                        per_rank[ri].push(instr.clone());
                    }
                }
                ModeState::Pipelined {
                    cursors: vec![0; ranks.len()],
                    inflight: vec![Vec::new(); ranks.len()],
                    per_rank,
                }
            }
            LaunchMode::Macro => ModeState::Macro { outstanding: None },
        };
        KernelDriver {
            spec,
            groups,
            mode_state,
            rounds_completed: 0,
        }
    }

    pub fn step(&mut self, core: &mut Core, now: Cycle) {
        match &mut self.mode_state {
            ModeState::Blocking {
                next_group,
                outstanding,
            } => {
                outstanding.retain(|t| !core.ticket_done(*t));
                if !outstanding.is_empty() {
                    return;
                }
                if *next_group >= self.groups.len() {
                    self.rounds_completed += 1;
                    if !self.spec.relaunch {
                        return;
                    }
                    *next_group = 0;
                }
                for instr in self.groups[*next_group].clone() {
                    if let Ok(t) = core.launch(instr, now) {
                        outstanding.push(t);
                    }
                }
                *next_group += 1;
            }
            ModeState::Pipelined {
                cursors,
                inflight,
                per_rank,
            } => {
                let depth = self.spec.queue_depth as usize;
                let mut round_done = true;
                for ri in 0..per_rank.len() {
                    inflight[ri].retain(|t| !core.ticket_done(*t));
                    while inflight[ri].len() < depth {
                        if cursors[ri] >= per_rank[ri].len() {
                            break;
                        }
                        let instr = per_rank[ri][cursors[ri]].clone();
                        match core.launch(instr, now) {
                            Ok(t) => {
                                inflight[ri].push(t);
                                cursors[ri] += 1;
                            }
                            Err(_) => break,
                        }
                    }
                    if cursors[ri] < per_rank[ri].len() || !inflight[ri].is_empty() {
                        round_done = false;
                    }
                }
                if round_done {
                    self.rounds_completed += 1;
                    if self.spec.relaunch {
                        for c in cursors.iter_mut() {
                            *c = 0;
                        }
                    }
                }
            }
            ModeState::Macro { outstanding } => {
                if let Some(t) = outstanding {
                    if !core.ticket_done(*t) {
                        return;
                    }
                    self.rounds_completed += 1;
                    *outstanding = None;
                    if !self.spec.relaunch {
                        return;
                    }
                }
                let all: Vec<NdaInstruction> =
                    self.groups.iter().flat_map(|g| g.iter().cloned()).collect();
                if let Ok(t) = core.launch_macro(all, now) {
                    *outstanding = Some(t);
                }
            }
        }
    }
}

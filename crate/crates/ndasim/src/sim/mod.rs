//! Top-level simulation: one logical thread advancing all channels, host
//! controllers, NDA engines and their replicas one DRAM cycle at a time.
//! Deterministic for a given (config, seed).

pub mod compare;
pub mod config;
pub mod energy;
pub mod stats;
pub mod sweep;

use crate::addressing::{DramAddress, MappingConfig, PhysicalAddress};
use crate::dram::{ChannelState, CmdSource, CommandKind, Cycle, DramCommand};
use crate::host::{CompletedTxn, HostIssue, HostMc, Transaction, TxnKind};
use crate::nda::runtime::{FuncMem, TicketState};
use crate::nda::{EngineConfig, LaunchError, NdaInstruction, RankEngine};
use crate::replica::{ReplicaState, SyncChecker, TraceEntry};
use crate::rng::CounterRng;
use crate::workloads::kernels::KernelDriver;
use crate::workloads::svrg::{SvrgDriver, SvrgOutcome};
use crate::workloads::traffic::{TraceRecord, TrafficGen};
use config::{HostLoad, NdaLoad, SimConfig};
use energy::{EnergyBreakdown, EnergyEvent, EnergyLedger};
use stats::{OccupancySample, StatsCollector, StatsReport, TicketLatency};
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::cmp::Reverse;
use std::sync::Arc;

/// A queued launch-packet transmission.
#[derive(Debug, Clone)]
struct OutPacket {
    channel: u8,
    rank: u8,
    payload: Vec<(u64, NdaInstruction, u32)>,
}

#[derive(Debug)]
enum PendingEvent {
    TxnDone(CompletedTxn),
    PacketDelivery {
        channel: u8,
        payload: Vec<(u64, NdaInstruction, u32)>,
    },
}

/// Everything the drivers interact with.
pub struct Core {
    pub cfg: SimConfig,
    pub map: Arc<MappingConfig>,
    pub channels: Vec<ChannelState>,
    pub mcs: Vec<HostMc>,
    pub engines: Vec<RankEngine>,
    pub replicas: Vec<ReplicaState>,
    pub mem: FuncMem,
    pub stats: StatsCollector,
    pub ledger: EnergyLedger,
    pub checker: SyncChecker,
    pub log: Vec<DramCommand>,
    pub tickets: HashMap<u64, TicketState>,
    /// Completions visible to drivers during the current cycle.
    pub completed_this_cycle: Vec<CompletedTxn>,
    /// Transactions accepted into queues, for trace dumps.
    pub accepted_trace: Vec<TraceRecord>,
    outbox: VecDeque<OutPacket>,
    ctrl_payloads: HashMap<u64, (u8, Vec<(u64, NdaInstruction, u32)>)>,
    events: BinaryHeap<Reverse<(Cycle, u64)>>,
    event_bodies: HashMap<u64, PendingEvent>,
    instr2ticket: HashMap<u64, (u64, usize)>,
    registered_hint: Vec<Option<u8>>,
    ctrl_this_cycle: Vec<bool>,
    next_txn_id: u64,
    next_ticket_id: u64,
    next_instr_id: u64,
    next_event_seq: u64,
    pub now: Cycle,
    table_check_clean: bool,
}

impl Core {
    fn new(cfg: SimConfig) -> Result<Core, config::ConfigError> {
        cfg.validate()?;
        let map = Arc::new(cfg.effective_mapping()?);
        let g = cfg.geometry;
        let channels = (0..g.channels)
            .map(|_| ChannelState::new(cfg.timing, g.ranks, g.banks, g.bank_groups))
            .collect();
        let mcs = (0..g.channels)
            .map(|c| HostMc::new(c as u8, cfg.scheduler))
            .collect();
        let mut engines = Vec::new();
        for c in 0..g.channels {
            for r in 0..g.ranks {
                let mut ecfg = EngineConfig::new(cfg.timing, g.banks, g.bank_groups);
                ecfg.chips = g.chips;
                ecfg.stochastic_p = cfg.policy.stochastic_p;
                engines.push(RankEngine::new((c as u8, r as u8), ecfg, map.clone()));
            }
        }
        let replicas = engines.iter().map(ReplicaState::mirror_of).collect();
        Ok(Core {
            stats: StatsCollector::new(g.total_ranks() as usize),
            channels,
            mcs,
            engines,
            replicas,
            mem: FuncMem::default(),
            ledger: EnergyLedger::default(),
            checker: SyncChecker::default(),
            log: Vec::new(),
            tickets: HashMap::new(),
            completed_this_cycle: Vec::new(),
            accepted_trace: Vec::new(),
            outbox: VecDeque::new(),
            ctrl_payloads: HashMap::new(),
            events: BinaryHeap::new(),
            event_bodies: HashMap::new(),
            instr2ticket: HashMap::new(),
            registered_hint: vec![None; g.channels as usize],
            ctrl_this_cycle: vec![0; g.total_ranks() as usize].iter().map(|_| false).collect(),
            next_txn_id: 0,
            next_ticket_id: 0,
            next_instr_id: 0,
            next_event_seq: 0,
            now: 0,
            table_check_clean: true,
            map,
            cfg,
        })
    }

    pub fn global_rank(&self, channel: u8, rank: u8) -> usize {
        channel as usize * self.cfg.geometry.ranks as usize + rank as usize
    }

    /// Global rank indices the NDA kernels may use under the current
    /// policy (all ranks, or the dedicated ones under rank partitioning).
    pub fn nda_ranks(&self) -> Vec<(u8, u8)> {
        let g = self.cfg.geometry;
        let mut out = Vec::new();
        for c in 0..g.channels as u8 {
            for r in 0..g.ranks as u8 {
                if let Some(k) = self.cfg.policy.rank_partition {
                    if (r as u32) < g.ranks - k {
                        continue;
                    }
                }
                out.push((c, r));
            }
        }
        out
    }

    fn schedule_event(&mut self, at: Cycle, body: PendingEvent) {
        let seq = self.next_event_seq;
        self.next_event_seq += 1;
        self.events.push(Reverse((at, seq)));
        self.event_bodies.insert(seq, body);
    }

    /// Enqueues one host transaction; `None` = backpressure. Returns the
    /// transaction id used in completion reports.
    pub fn enqueue_host(&mut self, kind: TxnKind, paddr: PhysicalAddress, now: Cycle) -> Option<u64> {
        let (channel, dram) = match kind {
            TxnKind::Read | TxnKind::Write => {
                let d = self.map.map_physical(paddr).ok()?;
                (d.channel, d)
            }
            TxnKind::CtrlWrite { rank } | TxnKind::CtrlRead { rank } => {
                // Control region is addressed by (channel, rank) directly;
                // paddr carries the channel in the low bits by convention.
                (
                    (paddr.0 & 0xff) as u8,
                    DramAddress {
                        channel: (paddr.0 & 0xff) as u8,
                        rank,
                        ..DramAddress::default()
                    },
                )
            }
        };
        let id = self.next_txn_id;
        let txn = Transaction {
            id,
            kind,
            paddr,
            arrival: now,
        };
        if self.mcs[channel as usize].enqueue(txn, dram) {
            self.next_txn_id += 1;
            if kind.is_dram() && self.cfg.log_commands {
                self.accepted_trace.push(TraceRecord {
                    cycle: now,
                    is_read: kind == TxnKind::Read,
                    paddr: paddr.0,
                });
            }
            Some(id)
        } else {
            self.stats.rejected_enqueues += 1;
            None
        }
    }

    /// Launches one rank-local instruction with its own packet.
    pub fn launch(&mut self, instr: NdaInstruction, now: Cycle) -> Result<u64, LaunchError> {
        self.launch_group(vec![instr], now, false)
    }

    /// Launches a loop of instructions as a macro: one packet per involved
    /// channel, per-rank queues consume iterations independently.
    pub fn launch_macro(
        &mut self,
        instrs: Vec<NdaInstruction>,
        now: Cycle,
    ) -> Result<u64, LaunchError> {
        self.launch_group(instrs, now, true)
    }

    fn launch_group(
        &mut self,
        instrs: Vec<NdaInstruction>,
        now: Cycle,
        macro_mode: bool,
    ) -> Result<u64, LaunchError> {
        assert!(!instrs.is_empty());
        for i in &instrs {
            if i.operands.iter().all(|o| o.raw.is_none()) {
                i.validate(&self.map)?;
            } else if i.n_elems > i.bound {
                return Err(LaunchError::BoundsViolation {
                    n: i.n_elems,
                    bound: i.bound,
                });
            }
        }
        let ticket = self.next_ticket_id;
        self.next_ticket_id += 1;
        let mut with_ids = Vec::with_capacity(instrs.len());
        for (idx, instr) in instrs.iter().enumerate() {
            let instr_id = self.next_instr_id;
            self.next_instr_id += 1;
            let seed = CounterRng::derive(self.cfg.seed, instr_id.wrapping_add(0x5049)) ;
            self.instr2ticket.insert(instr_id, (ticket, idx));
            with_ids.push((instr_id, instr.clone(), seed));
        }
        self.tickets.insert(
            ticket,
            TicketState {
                id: ticket,
                created: now,
                completions: vec![None; instrs.len()],
                instrs,
                done_cycle: None,
            },
        );
        if macro_mode {
            // One packet per channel, addressed to the first target rank;
            // every rank controller on the channel snoops the payload.
            let mut by_channel: Vec<(u8, u8, Vec<(u64, NdaInstruction, u32)>)> = Vec::new();
            for (id, instr, seed) in with_ids {
                let (ch, rk) = instr.target;
                match by_channel.iter_mut().find(|(c, _, _)| *c == ch) {
                    Some((_, _, v)) => v.push((id, instr, seed)),
                    None => by_channel.push((ch, rk, vec![(id, instr, seed)])),
                }
            }
            for (channel, rank, payload) in by_channel {
                self.outbox.push_back(OutPacket {
                    channel,
                    rank,
                    payload,
                });
            }
        } else {
            for (id, instr, seed) in with_ids {
                let (channel, rank) = instr.target;
                self.outbox.push_back(OutPacket {
                    channel,
                    rank,
                    payload: vec![(id, instr, seed)],
                });
            }
        }
        Ok(ticket)
    }

    pub fn ticket_done(&self, id: u64) -> bool {
        self.tickets.get(&id).is_some_and(|t| t.done())
    }

    pub fn ticket(&self, id: u64) -> &TicketState {
        &self.tickets[&id]
    }

    /// Sends queued launch packets as control-write transactions.
    fn pump_outbox(&mut self, now: Cycle) {
        let mut still = VecDeque::new();
        while let Some(p) = self.outbox.pop_front() {
            let paddr = PhysicalAddress(p.channel as u64);
            match self.enqueue_host(TxnKind::CtrlWrite { rank: p.rank }, paddr, now) {
                Some(id) => {
                    self.ctrl_payloads.insert(id, (p.channel, p.payload));
                    self.stats.control_writes += 1;
                }
                None => still.push_back(p),
            }
        }
        self.outbox = still;
    }

    fn process_events(&mut self, now: Cycle) {
        self.completed_this_cycle.clear();
        while let Some(&Reverse((at, seq))) = self.events.peek() {
            if at > now {
                break;
            }
            self.events.pop();
            match self.event_bodies.remove(&seq).expect("event body") {
                PendingEvent::TxnDone(c) => {
                    if c.txn.kind == TxnKind::Read {
                        self.stats.read_latency.add(c.data_end - c.txn.arrival);
                    }
                    self.completed_this_cycle.push(c);
                }
                PendingEvent::PacketDelivery { channel, payload } => {
                    for (id, instr, seed) in payload {
                        debug_assert_eq!(instr.target.0, channel);
                        let g = self.global_rank(instr.target.0, instr.target.1);
                        self.engines[g].deliver(id, instr.clone(), seed);
                        self.replicas[g].deliver(id, instr, seed);
                    }
                }
            }
        }
    }

    fn host_schedule(&mut self, now: Cycle) -> Vec<Option<(CommandKind, u8, u32)>> {
        let ranks = self.cfg.geometry.ranks as usize;
        let mut observed: Vec<Option<(CommandKind, u8, u32)>> =
            vec![None; self.cfg.geometry.total_ranks() as usize];
        let mut ctrl: Vec<bool> = vec![false; observed.len()];
        for ch in 0..self.mcs.len() {
            let issue = {
                let chan = &mut self.channels[ch];
                self.mcs[ch].schedule(chan, now)
            };
            match issue {
                None => {}
                Some(HostIssue::Dram { cmd, completed }) => {
                    let g = ch * ranks + cmd.target.rank as usize;
                    observed[g] = Some((cmd.kind, cmd.target.bank, cmd.target.row));
                    self.stats.on_command(g, cmd.kind, CmdSource::Host);
                    match cmd.kind {
                        CommandKind::Act => self.ledger.account(EnergyEvent::Act),
                        CommandKind::Rd | CommandKind::Wr => {
                            self.ledger.account(EnergyEvent::HostBurst)
                        }
                        _ => {}
                    }
                    if cmd.kind.is_column() {
                        let lat = if cmd.kind == CommandKind::Rd {
                            self.cfg.timing.t_cl
                        } else {
                            self.cfg.timing.t_cwl
                        };
                        self.stats
                            .host_activity(g, now, now + lat + self.cfg.timing.t_bl);
                    } else {
                        self.stats.host_activity(g, now, now + 1);
                    }
                    if self.cfg.log_commands {
                        self.log.push(cmd);
                    }
                    if let Some(c) = completed {
                        self.schedule_event(c.data_end, PendingEvent::TxnDone(c));
                    }
                }
                Some(HostIssue::Control(c)) => {
                    let rank = match c.txn.kind {
                        TxnKind::CtrlWrite { rank } | TxnKind::CtrlRead { rank } => rank,
                        _ => unreachable!(),
                    };
                    let g = ch * ranks + rank as usize;
                    ctrl[g] = true;
                    self.ledger.account(EnergyEvent::HostBurst);
                    self.stats.host_activity(g, now, c.data_end);
                    if c.txn.kind.is_read_class() {
                        self.stats.control_reads += 1;
                    }
                    self.schedule_event(c.data_end, PendingEvent::TxnDone(c));
                    if let Some((channel, payload)) = self.ctrl_payloads.remove(&c.txn.id) {
                        self.schedule_event(
                            c.data_end,
                            PendingEvent::PacketDelivery { channel, payload },
                        );
                    }
                }
            }
        }
        self.ctrl_this_cycle = ctrl;
        observed
    }

    fn step_ndas(&mut self, now: Cycle, observed: &[Option<(CommandKind, u8, u32)>]) {
        let ranks = self.cfg.geometry.ranks as usize;
        for g in 0..self.engines.len() {
            let ch = g / ranks;
            let rank = (g % ranks) as u8;
            let obs = crate::nda::HostObserved {
                cmd: observed[g],
                ctrl_burst: self.ctrl_this_cycle[g],
                pending_banks: self.mcs[ch].pending_bank_mask(rank),
                hint_stall: self.cfg.policy.hint_enabled
                    && self.registered_hint[ch] == Some(rank),
            };
            let actual = self.engines[g].step(&obs, now, &mut self.mem);
            if let Some(cmd) = actual {
                self.channels[ch]
                    .apply_command(&cmd)
                    .expect("NDA command legal against ground truth");
                self.stats.on_command(g, cmd.kind, CmdSource::Nda);
                match cmd.kind {
                    CommandKind::Act => self.ledger.account(EnergyEvent::Act),
                    CommandKind::Rd | CommandKind::Wr => self.ledger.account(EnergyEvent::PeBurst),
                    _ => {}
                }
                if self.cfg.log_commands {
                    self.log.push(cmd);
                }
            }
            if self.cfg.replica_check {
                let predicted = self.replicas[g].step(&obs, now);
                self.checker.record(TraceEntry {
                    cycle: now,
                    rank: (ch as u8, rank),
                    predicted,
                    actual,
                    predicted_write_phase: self.replicas[g].in_write_phase(),
                    actual_write_phase: self.engines[g].in_write_phase(),
                });
                // The host MC's global state table (own commands plus
                // replica predictions) must match ground truth.
                if now % 256 == 255 && self.checker.report().is_clean() {
                    if *self.replicas[g].rank_table() != self.channels[ch].ranks[rank as usize] {
                        self.table_check_clean = false;
                    }
                }
            }
            // Instruction completions feed ticket bookkeeping.
            for c in self.engines[g].drain_completions() {
                if let Some(&(ticket, idx)) = self.instr2ticket.get(&c.ticket) {
                    let t = self.tickets.get_mut(&ticket).expect("ticket exists");
                    t.completions[idx] = Some(c);
                    if t.completions.iter().all(|x| x.is_some()) {
                        t.done_cycle = Some(now);
                        self.stats.tickets.push(TicketLatency {
                            ticket,
                            created: t.created,
                            done: now,
                        });
                    }
                }
            }
        }
    }

    fn end_cycle(&mut self, now: Cycle, observed: &[Option<(CommandKind, u8, u32)>]) {
        for g in 0..self.engines.len() {
            self.stats
                .idle_tick(g, now, observed[g].is_some() || self.ctrl_this_cycle[g]);
        }
        if now % 64 == 0 {
            for (ch, mc) in self.mcs.iter().enumerate() {
                self.stats.occupancy.push(OccupancySample {
                    cycle: now,
                    channel: ch as u8,
                    read_q: mc.read_occupancy() as u32,
                    write_q: mc.write_occupancy() as u32,
                });
            }
        }
        for ch in 0..self.mcs.len() {
            self.registered_hint[ch] = self.mcs[ch].next_rank_hint();
        }
    }
}

/// Driver-side helper: a batch of memory or control transactions issued
/// as fast as backpressure allows, completion-tracked by transaction id.
/// Write data commits to the functional store when the transaction enters
/// the queue.
#[derive(Debug)]
pub struct BulkTransfer {
    items: Vec<XferItem>,
    next: usize,
    outstanding: std::collections::HashSet<u64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub enum XferItem {
    Read(u64),
    Write(u64, [f32; 16]),
    /// Control-register read-back from (channel, rank).
    CtrlRead((u8, u8)),
}

impl BulkTransfer {
    pub fn reads(paddrs: Vec<u64>) -> BulkTransfer {
        BulkTransfer::new(paddrs.into_iter().map(XferItem::Read).collect())
    }

    pub fn writes(pairs: Vec<(u64, [f32; 16])>) -> BulkTransfer {
        BulkTransfer::new(pairs.into_iter().map(|(p, v)| XferItem::Write(p, v)).collect())
    }

    pub fn ctrl_reads(ranks: Vec<(u8, u8)>) -> BulkTransfer {
        BulkTransfer::new(ranks.into_iter().map(XferItem::CtrlRead).collect())
    }

    pub fn new(items: Vec<XferItem>) -> BulkTransfer {
        BulkTransfer {
            items,
            next: 0,
            outstanding: std::collections::HashSet::new(),
            done: false,
        }
    }

    /// Returns true when every transaction's data burst has finished.
    pub fn step(&mut self, core: &mut Core, now: Cycle) -> bool {
        if self.done {
            return true;
        }
        for c in &core.completed_this_cycle {
            self.outstanding.remove(&c.txn.id);
        }
        while self.next < self.items.len() {
            let accepted = match self.items[self.next].clone() {
                XferItem::Read(p) => core.enqueue_host(TxnKind::Read, PhysicalAddress(p), now),
                XferItem::Write(p, v) => {
                    match core.enqueue_host(TxnKind::Write, PhysicalAddress(p), now) {
                        Some(id) => {
                            core.mem.write(p, v);
                            Some(id)
                        }
                        None => None,
                    }
                }
                XferItem::CtrlRead((ch, rank)) => {
                    core.enqueue_host(TxnKind::CtrlRead { rank }, PhysicalAddress(ch as u64), now)
                }
            };
            match accepted {
                Some(id) => {
                    self.outstanding.insert(id);
                    self.next += 1;
                }
                None => break,
            }
        }
        self.done = self.next == self.items.len() && self.outstanding.is_empty();
        self.done
    }
}

pub enum HostDriver {
    None,
    Traffic(TrafficGen),
    Trace { records: Vec<TraceRecord>, next: usize, pending: Option<TraceRecord> },
}

impl HostDriver {
    fn step(&mut self, core: &mut Core, now: Cycle) {
        match self {
            HostDriver::None => {}
            HostDriver::Traffic(gen) => {
                if let Some((kind, paddr)) = gen.tick(&core.map) {
                    if core.enqueue_host(kind, paddr, now).is_none() {
                        gen.hold((kind, paddr));
                    }
                }
            }
            HostDriver::Trace {
                records,
                next,
                pending,
            } => {
                if let Some(r) = pending.take() {
                    let kind = if r.is_read { TxnKind::Read } else { TxnKind::Write };
                    if core.enqueue_host(kind, PhysicalAddress(r.paddr), now).is_none() {
                        *pending = Some(r);
                        return;
                    }
                }
                while *next < records.len() && records[*next].cycle <= now {
                    let r = records[*next];
                    *next += 1;
                    let kind = if r.is_read { TxnKind::Read } else { TxnKind::Write };
                    if core.enqueue_host(kind, PhysicalAddress(r.paddr), now).is_none() {
                        *pending = Some(r);
                        break;
                    }
                }
            }
        }
    }
}

pub enum NdaDriver {
    None,
    Kernel(KernelDriver),
    Svrg(Box<SvrgDriver>),
}

impl NdaDriver {
    fn step(&mut self, core: &mut Core, now: Cycle) {
        match self {
            NdaDriver::None => {}
            NdaDriver::Kernel(d) => d.step(core, now),
            NdaDriver::Svrg(d) => d.step(core, now),
        }
    }

    fn finished(&self) -> bool {
        match self {
            NdaDriver::None => true,
            NdaDriver::Kernel(_) => false,
            NdaDriver::Svrg(d) => d.finished(),
        }
    }
}

/// One simulation instance.
pub struct Simulator {
    pub core: Core,
    host_driver: HostDriver,
    nda_driver: NdaDriver,
    cycle: Cycle,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Simulator, config::ConfigError> {
        let mut core = Core::new(cfg)?;
        let host_driver = match &core.cfg.host_load {
            HostLoad::None => HostDriver::None,
            HostLoad::Traffic(p) => HostDriver::Traffic(TrafficGen::new(
                p.clone(),
                &core.map,
                CounterRng::derive(core.cfg.seed, 0x7261_6666),
            )),
            HostLoad::Trace(records) => HostDriver::Trace {
                records: records.clone(),
                next: 0,
                pending: None,
            },
        };
        let nda_driver = match &core.cfg.nda_load {
            NdaLoad::None => NdaDriver::None,
            NdaLoad::Kernel(spec) => NdaDriver::Kernel(KernelDriver::new(spec.clone(), &core)),
            NdaLoad::Svrg(cfg) => NdaDriver::Svrg(Box::new(SvrgDriver::new(cfg.clone(), &mut core))),
        };
        Ok(Simulator {
            core,
            host_driver,
            nda_driver,
            cycle: 0,
        })
    }

    pub fn step(&mut self) {
        let now = self.cycle;
        self.core.now = now;
        self.core.process_events(now);
        self.host_driver.step(&mut self.core, now);
        self.nda_driver.step(&mut self.core, now);
        self.core.pump_outbox(now);
        let observed = self.core.host_schedule(now);
        self.core.step_ndas(now, &observed);
        self.core.end_cycle(now, &observed);
        self.cycle += 1;
    }

    /// Runs to the configured cycle count (or until a finite workload
    /// finishes) and produces the report.
    pub fn run(mut self) -> Result<StatsReport, config::ConfigError> {
        let cycles = self.core.cfg.cycles;
        let finite_nda = matches!(self.nda_driver, NdaDriver::Svrg(_));
        for _ in 0..cycles {
            self.step();
            if finite_nda
                && self.nda_driver.finished()
                && matches!(self.host_driver, HostDriver::None)
            {
                break;
            }
        }
        Ok(self.into_report())
    }

    pub fn run_config(cfg: SimConfig) -> Result<StatsReport, config::ConfigError> {
        Simulator::new(cfg)?.run()
    }

    pub fn svrg_outcome(&self) -> Option<&SvrgOutcome> {
        match &self.nda_driver {
            NdaDriver::Svrg(d) => d.outcome(),
            _ => None,
        }
    }

    pub fn into_report(mut self) -> StatsReport {
        let cycles = self.cycle;
        self.core.stats.finish_idle(cycles);
        // Fold engine counters into the energy ledger.
        let mut fma = 0u64;
        let mut buf = 0u64;
        for e in &self.core.engines {
            fma += e.counters.fma_ops;
            buf += e.counters.buffer_accesses;
        }
        self.core.ledger.account(EnergyEvent::Fma(fma));
        self.core.ledger.account(EnergyEvent::BufferAccess(buf));
        let g = self.core.cfg.geometry;
        let buffer_instances = (g.total_ranks() * g.chips * 2) as u64;
        let energy =
            EnergyBreakdown::compute(&self.core.ledger, &self.core.cfg.energy, cycles, buffer_instances);
        let (mut served_reads, mut served_writes) = (0u64, 0u64);
        for mc in &self.core.mcs {
            let (r, w) = mc.served();
            served_reads += r;
            served_writes += w;
        }
        let s = &self.core.stats;
        let host_read_bursts: u64 = s.ranks.iter().map(|r| r.host_read_bursts).sum();
        let host_write_bursts: u64 = s.ranks.iter().map(|r| r.host_write_bursts).sum();
        let nda_read_bursts: u64 = s.ranks.iter().map(|r| r.nda_read_bursts).sum();
        let nda_write_bursts: u64 = s.ranks.iter().map(|r| r.nda_write_bursts).sum();
        let idle_cycles: u64 = s.ranks.iter().map(|r| r.host_idle_cycles).sum();
        // Analytic streaming ceiling: one 64B burst per tCCDS per rank.
        let ceiling = 64.0 / self.core.cfg.timing.t_ccds as f64;
        let idle_capacity = idle_cycles as f64 * ceiling;
        let nda_bytes = (nda_read_bursts + nda_write_bursts) * 64;
        let svrg = match &self.nda_driver {
            NdaDriver::Svrg(d) => d.outcome().cloned(),
            _ => None,
        };
        let replica_clean = self.core.checker.report().is_clean() && self.core.table_check_clean;
        StatsReport {
            cycles,
            seed: self.core.cfg.seed,
            ranks: s.ranks.clone(),
            read_latency: s.read_latency.clone(),
            served_reads,
            served_writes,
            control_writes: s.control_writes,
            control_reads: s.control_reads,
            rejected_enqueues: s.rejected_enqueues,
            occupancy: s.occupancy.clone(),
            tickets: s.tickets.clone(),
            energy_counts: self.core.ledger,
            energy,
            per_rank_ceiling_bytes_per_cycle: ceiling,
            host_read_bytes: host_read_bursts * 64,
            host_write_bytes: host_write_bursts * 64,
            nda_read_bytes: nda_read_bursts * 64,
            nda_write_bytes: nda_write_bursts * 64,
            host_idle_rank_cycles: idle_cycles,
            nda_share_of_idle_bw: if idle_capacity > 0.0 {
                nda_bytes as f64 / idle_capacity
            } else {
                0.0
            },
            replica_clean,
            replica_entries_checked: self.core.checker.entries_checked,
            svrg,
        }
    }

    /// Serialized command log (one record per line).
    pub fn dump_log(&self) -> String {
        let mut s = String::with_capacity(self.core.log.len() * 24);
        for c in &self.core.log {
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s
    }
}

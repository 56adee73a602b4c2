//! FR-FCFS host memory controller.
//!
//! One instance per channel: 32-entry read and write transaction queues,
//! open-page policy, write drain between high/low watermarks, an age cap
//! that preempts first-ready preference, and the next-rank prediction
//! signal consumed by the NDA controllers to stall their writes.
//!
//! Control-register transactions (NDA launch packets and register
//! read-backs) ride the same queues and occupy the bus like ordinary
//! transactions but touch no DRAM bank.

use crate::addressing::{DramAddress, PhysicalAddress};
use crate::dram::{ChannelState, CmdSource, CommandKind, Cycle, DramCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxnKind {
    Read,
    Write,
    /// Launch packet or other control-register write to an NDA rank.
    CtrlWrite { rank: u8 },
    /// Control-register read-back from an NDA rank.
    CtrlRead { rank: u8 },
}

impl TxnKind {
    pub fn is_read_class(self) -> bool {
        matches!(self, TxnKind::Read | TxnKind::CtrlRead { .. })
    }

    pub fn is_dram(self) -> bool {
        matches!(self, TxnKind::Read | TxnKind::Write)
    }
}

/// One 64B memory transaction presented to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transaction {
    pub id: u64,
    pub kind: TxnKind,
    pub paddr: PhysicalAddress,
    pub arrival: Cycle,
}

#[derive(Debug, Clone, Copy)]
struct QueuedTxn {
    txn: Transaction,
    /// DRAM coordinates; meaningless for control transactions.
    dram: DramAddress,
}

/// A transaction whose column command (or control burst) has issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompletedTxn {
    pub txn: Transaction,
    pub issue: Cycle,
    /// Cycle at which the data burst finishes.
    pub data_end: Cycle,
}

#[derive(Debug, Clone)]
pub enum HostIssue {
    Dram {
        cmd: DramCommand,
        /// Present when the command completes a transaction (RD/WR).
        completed: Option<CompletedTxn>,
    },
    Control(CompletedTxn),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerKnobs {
    pub read_queue_cap: usize,
    pub write_queue_cap: usize,
    /// Begin write drain at this write-queue occupancy.
    pub drain_high: usize,
    /// Stop write drain at this occupancy.
    pub drain_low: usize,
    /// A transaction older than this preempts first-ready preference.
    pub starvation_cap: Cycle,
}

impl Default for SchedulerKnobs {
    fn default() -> Self {
        SchedulerKnobs {
            read_queue_cap: 32,
            write_queue_cap: 32,
            drain_high: 24,
            drain_low: 8,
            starvation_cap: 2048,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HostMc {
    pub channel: u8,
    knobs: SchedulerKnobs,
    read_q: Vec<QueuedTxn>,
    write_q: Vec<QueuedTxn>,
    draining: bool,
    served_reads: u64,
    served_writes: u64,
}

impl HostMc {
    pub fn new(channel: u8, knobs: SchedulerKnobs) -> Self {
        HostMc {
            channel,
            knobs,
            read_q: Vec::with_capacity(knobs.read_queue_cap),
            write_q: Vec::with_capacity(knobs.write_queue_cap),
            draining: false,
            served_reads: 0,
            served_writes: 0,
        }
    }

    pub fn read_occupancy(&self) -> usize {
        self.read_q.len()
    }

    pub fn write_occupancy(&self) -> usize {
        self.write_q.len()
    }

    pub fn served(&self) -> (u64, u64) {
        (self.served_reads, self.served_writes)
    }

    pub fn is_empty(&self) -> bool {
        self.read_q.is_empty() && self.write_q.is_empty()
    }

    /// Appends to the matching queue; `false` signals backpressure.
    pub fn enqueue(&mut self, txn: Transaction, dram: DramAddress) -> bool {
        let (q, cap) = if txn.kind.is_read_class() {
            (&mut self.read_q, self.knobs.read_queue_cap)
        } else {
            (&mut self.write_q, self.knobs.write_queue_cap)
        };
        if q.len() >= cap {
            return false;
        }
        q.push(QueuedTxn { txn, dram });
        true
    }

    /// Target rank of the oldest queued DRAM transaction, if it is a read.
    /// This is the next-rank prediction signal; it becomes visible to the
    /// NDA controllers one cycle later (registered signaling).
    pub fn next_rank_hint(&self) -> Option<u8> {
        let oldest = self
            .read_q
            .iter()
            .chain(self.write_q.iter())
            .filter(|q| q.txn.kind.is_dram())
            .min_by_key(|q| (q.txn.arrival, q.txn.id))?;
        match oldest.txn.kind {
            TxnKind::Read => Some(oldest.dram.rank),
            _ => None,
        }
    }

    /// Banks of `rank` targeted by any queued DRAM transaction, as a
    /// bitmask. NDA row commands defer to these.
    pub fn pending_bank_mask(&self, rank: u8) -> u32 {
        let mut mask = 0u32;
        for q in self.read_q.iter().chain(self.write_q.iter()) {
            if q.txn.kind.is_dram() && q.dram.rank == rank {
                mask |= 1 << q.dram.bank;
            }
        }
        mask
    }

    fn update_drain(&mut self) {
        let writes = self.write_q.len();
        if self.draining {
            if writes <= self.knobs.drain_low {
                self.draining = false;
            }
        } else if writes >= self.knobs.drain_high {
            self.draining = true;
        }
    }

    /// True when any queued transaction in either queue hits the open row
    /// of (rank, bank). Used to guard precharges that would break hits.
    fn row_hit_pending(&self, chan: &ChannelState, rank: u8, bank: u8) -> bool {
        let open = match chan.bank(rank, bank).open_row() {
            Some(r) => r,
            None => return false,
        };
        self.read_q
            .iter()
            .chain(self.write_q.iter())
            .any(|q| q.txn.kind.is_dram() && q.dram.rank == rank && q.dram.bank == bank && q.dram.row == open)
    }

    fn col_kind(kind: TxnKind) -> CommandKind {
        match kind {
            TxnKind::Read => CommandKind::Rd,
            TxnKind::Write => CommandKind::Wr,
            _ => unreachable!("control transactions have no DRAM command"),
        }
    }

    /// Attempts to issue the transaction's next needed command at `now`.
    /// Returns the issue made, if any. `row_cmds` enables ACT/PRE.
    fn try_issue(
        &self,
        chan: &mut ChannelState,
        q: &QueuedTxn,
        now: Cycle,
        row_cmds: bool,
    ) -> Option<HostIssue> {
        match q.txn.kind {
            TxnKind::CtrlWrite { rank } | TxnKind::CtrlRead { rank } => {
                let write = matches!(q.txn.kind, TxnKind::CtrlWrite { .. });
                if chan.earliest_control_burst(rank, write, now) > now {
                    return None;
                }
                let lat = if write { chan.params.t_cwl } else { chan.params.t_cl };
                chan.apply_control_burst(rank, write, now);
                Some(HostIssue::Control(CompletedTxn {
                    txn: q.txn,
                    issue: now,
                    data_end: now + lat + chan.params.t_bl,
                }))
            }
            TxnKind::Read | TxnKind::Write => {
                let open = chan.bank(q.dram.rank, q.dram.bank).open_row();
                let (kind, completes) = match open {
                    Some(r) if r == q.dram.row => (Self::col_kind(q.txn.kind), true),
                    Some(_) => {
                        if !row_cmds || self.row_hit_pending(chan, q.dram.rank, q.dram.bank) {
                            return None;
                        }
                        (CommandKind::Pre, false)
                    }
                    None => {
                        if !row_cmds {
                            return None;
                        }
                        (CommandKind::Act, false)
                    }
                };
                let cmd = DramCommand::new(kind, CmdSource::Host, q.dram, now);
                if chan.earliest_issue(&cmd).ok()? > now {
                    return None;
                }
                chan.apply_command(&cmd).ok()?;
                let completed = completes.then(|| CompletedTxn {
                    txn: q.txn,
                    issue: now,
                    data_end: now
                        + chan.params.t_bl
                        + if kind == CommandKind::Rd {
                            chan.params.t_cl
                        } else {
                            chan.params.t_cwl
                        },
                });
                Some(HostIssue::Dram { cmd, completed })
            }
        }
    }

    fn is_row_hit(&self, chan: &ChannelState, q: &QueuedTxn) -> bool {
        match q.txn.kind {
            TxnKind::CtrlWrite { .. } | TxnKind::CtrlRead { .. } => true,
            _ => chan.bank(q.dram.rank, q.dram.bank).open_row() == Some(q.dram.row),
        }
    }

    /// FR-FCFS with open-page policy: column commands hitting open rows
    /// first (oldest wins), then row commands for the oldest misses; reads
    /// before writes unless draining; at most one command per cycle. Rows
    /// stay open after access.
    pub fn schedule(&mut self, chan: &mut ChannelState, now: Cycle) -> Option<HostIssue> {
        self.update_drain();

        // Age cap: a starved transaction preempts first-ready preference.
        let starved = self
            .read_q
            .iter()
            .chain(self.write_q.iter())
            .filter(|q| now.saturating_sub(q.txn.arrival) > self.knobs.starvation_cap)
            .min_by_key(|q| (q.txn.arrival, q.txn.id))
            .copied();
        if let Some(q) = starved {
            if let Some(issue) = self.try_issue(chan, &q, now, true) {
                return Some(self.commit(issue));
            }
        }

        let order: [bool; 2] = if self.draining {
            [false, true] // writes first while draining
        } else {
            [true, false]
        };
        for reads in order {
            let q = if reads { &self.read_q } else { &self.write_q };
            let mut hits: Vec<QueuedTxn> = q
                .iter()
                .filter(|e| self.is_row_hit(chan, e))
                .copied()
                .collect();
            hits.sort_by_key(|e| (e.txn.arrival, e.txn.id));
            for cand in &hits {
                if let Some(issue) = self.try_issue(chan, cand, now, false) {
                    return Some(self.commit(issue));
                }
            }
            let mut misses: Vec<QueuedTxn> = q
                .iter()
                .filter(|e| !self.is_row_hit(chan, e))
                .copied()
                .collect();
            misses.sort_by_key(|e| (e.txn.arrival, e.txn.id));
            for cand in &misses {
                if let Some(issue) = self.try_issue(chan, cand, now, true) {
                    return Some(self.commit(issue));
                }
            }
        }
        None
    }

    fn commit(&mut self, issue: HostIssue) -> HostIssue {
        let completed = match &issue {
            HostIssue::Dram { completed, .. } => *completed,
            HostIssue::Control(c) => Some(*c),
        };
        if let Some(c) = completed {
            let q = if c.txn.kind.is_read_class() {
                &mut self.read_q
            } else {
                &mut self.write_q
            };
            if let Some(pos) = q.iter().position(|e| e.txn.id == c.txn.id) {
                q.remove(pos);
            }
            if c.txn.kind.is_read_class() {
                self.served_reads += 1;
            } else {
                self.served_writes += 1;
            }
        }
        issue
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dram::TimingParams;

    fn chan() -> ChannelState {
        ChannelState::new(TimingParams::default(), 2, 16, 2)
    }

    fn mc() -> HostMc {
        HostMc::new(0, SchedulerKnobs::default())
    }

    fn dram(rank: u8, bank: u8, row: u32, column: u16) -> DramAddress {
        DramAddress {
            channel: 0,
            rank,
            bank,
            row,
            column,
        }
    }

    fn txn(id: u64, kind: TxnKind, arrival: Cycle) -> Transaction {
        Transaction {
            id,
            kind,
            paddr: PhysicalAddress(id * 64),
            arrival,
        }
    }

    #[test]
    fn enqueue_accept_reject_retry() {
        let mut m = mc();
        for i in 0..32 {
            assert!(m.enqueue(txn(i, TxnKind::Read, 0), dram(0, 0, 0, i as u16)));
        }
        // 33rd read into a full queue is rejected.
        assert!(!m.enqueue(txn(99, TxnKind::Read, 0), dram(0, 0, 0, 99)));
        let mut c = chan();
        let mut now = 0;
        while m.read_occupancy() == 32 {
            m.schedule(&mut c, now);
            now += 1;
        }
        // Retried after a dequeue: accepted.
        assert!(m.enqueue(txn(99, TxnKind::Read, now), dram(0, 0, 0, 99)));
    }

    #[test]
    fn row_hit_issues_before_older_miss() {
        let mut m = mc();
        let mut c = chan();
        // Open bank 0 row 5 via an older transaction's ACT.
        assert!(m.enqueue(txn(0, TxnKind::Read, 0), dram(0, 0, 5, 1)));
        match m.schedule(&mut c, 0).expect("ACT issues") {
            HostIssue::Dram { cmd, completed } => {
                assert_eq!(cmd.kind, CommandKind::Act);
                assert!(completed.is_none());
            }
            _ => panic!(),
        }
        // An older miss and a younger hit compete; the hit wins.
        assert!(m.enqueue(txn(1, TxnKind::Read, 1), dram(0, 1, 9, 0))); // miss
        assert!(m.enqueue(txn(2, TxnKind::Read, 2), dram(0, 0, 5, 3))); // hit
        let mut first_rd = None;
        for now in 1..100 {
            if let Some(HostIssue::Dram { cmd, completed }) = m.schedule(&mut c, now) {
                if cmd.kind == CommandKind::Rd {
                    first_rd = completed;
                    break;
                }
            }
        }
        // id 0 is the oldest hit; id 2 must still beat the miss id 1.
        let first = first_rd.unwrap().txn.id;
        assert!(first == 0 || first == 2);
    }

    #[test]
    fn empty_queues_no_command() {
        let mut m = mc();
        let mut c = chan();
        assert!(m.schedule(&mut c, 0).is_none());
    }

    #[test]
    fn closed_bank_read_act_then_rd_at_trcd() {
        let mut m = mc();
        let mut c = chan();
        assert!(m.enqueue(txn(0, TxnKind::Read, 0), dram(1, 3, 7, 2)));
        let mut cmds = Vec::new();
        for now in 0..60 {
            if let Some(HostIssue::Dram { cmd, .. }) = m.schedule(&mut c, now) {
                cmds.push(cmd);
            }
        }
        assert_eq!(cmds.len(), 2);
        assert_eq!(cmds[0].kind, CommandKind::Act);
        assert_eq!(cmds[1].kind, CommandKind::Rd);
        assert_eq!(cmds[1].issue_cycle, cmds[0].issue_cycle + 16);
    }

    #[test]
    fn hint_follows_oldest_read() {
        let mut m = mc();
        assert!(m.next_rank_hint().is_none());
        assert!(m.enqueue(txn(0, TxnKind::Write, 0), dram(0, 0, 1, 0)));
        assert!(m.enqueue(txn(1, TxnKind::Read, 1), dram(1, 2, 3, 0)));
        // Oldest outstanding is a write: no hint.
        assert!(m.next_rank_hint().is_none());
        let mut m2 = mc();
        assert!(m2.enqueue(txn(0, TxnKind::Read, 0), dram(1, 2, 3, 0)));
        assert!(m2.enqueue(txn(1, TxnKind::Write, 1), dram(0, 0, 1, 0)));
        assert_eq!(m2.next_rank_hint(), Some(1));
    }

    #[test]
    fn drain_watermarks() {
        let mut m = mc();
        let mut c = chan();
        for i in 0..24 {
            assert!(m.enqueue(txn(i, TxnKind::Write, 0), dram(0, (i % 8) as u8, 1, i as u16)));
        }
        assert!(m.enqueue(txn(100, TxnKind::Read, 0), dram(0, 9, 1, 0)));
        // With drain active, writes complete first even though a read waits.
        let mut first_col = None;
        for now in 0..200 {
            if let Some(HostIssue::Dram { cmd, completed }) = m.schedule(&mut c, now) {
                if completed.is_some() {
                    first_col = Some(cmd.kind);
                    break;
                }
            }
        }
        assert_eq!(first_col, Some(CommandKind::Wr));
    }

    #[test]
    fn pending_bank_mask_tracks_queues() {
        let mut m = mc();
        assert!(m.enqueue(txn(0, TxnKind::Read, 0), dram(0, 3, 1, 0)));
        assert!(m.enqueue(txn(1, TxnKind::Write, 0), dram(0, 5, 1, 0)));
        assert!(m.enqueue(txn(2, TxnKind::Read, 0), dram(1, 7, 1, 0)));
        assert_eq!(m.pending_bank_mask(0), (1 << 3) | (1 << 5));
        assert_eq!(m.pending_bank_mask(1), 1 << 7);
    }
}

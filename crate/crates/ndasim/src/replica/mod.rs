//! Host-side replicas of the per-rank NDA memory-issue FSMs.
//!
//! A replica is the same FSM as the rank engine, fed the same launch
//! packets and the same observed host activity, but bound to a null data
//! plane — command streams are data-independent, so the replica predicts
//! every NDA command and write-phase transition without any NDA-to-host
//! signaling. The host controller's global state table is maintained from
//! these predictions.
//!
//! `verify_sync` is the equivalence oracle: cycle-exact comparison of
//! predicted and actual command streams and write-phase boundaries.

use crate::dram::{Cycle, DramCommand, RankState};
use crate::nda::{HostObserved, NdaInstruction, PeState, RankEngine, ZeroPort};

/// Mirrored FSM of one rank's NDA controller.
///
/// Live architectural state fits the replication budget: the control
/// registers (`PeState::LIVE_REGISTER_BYTES` ≤ 20 bytes) plus the 40-byte
/// microcode image per queued instruction.
#[derive(Debug, Clone)]
pub struct ReplicaState {
    engine: RankEngine,
}

impl ReplicaState {
    /// Builds a replica with the same configuration as the real engine.
    pub fn mirror_of(engine: &RankEngine) -> ReplicaState {
        ReplicaState {
            engine: engine.clone(),
        }
    }

    /// Synchronized instruction delivery (same cycle as the real NDA).
    pub fn deliver(&mut self, ticket: u64, instr: NdaInstruction, seed: u32) {
        self.engine.deliver(ticket, instr, seed);
    }

    /// Advances the mirrored FSM one cycle from host-observable inputs
    /// only; returns the predicted NDA command.
    pub fn step(&mut self, obs: &HostObserved, now: Cycle) -> Option<DramCommand> {
        self.engine.step(obs, now, &mut ZeroPort)
    }

    pub fn in_write_phase(&self) -> bool {
        self.engine.in_write_phase()
    }

    pub fn wbuf_occupancy(&self) -> usize {
        self.engine.wbuf_occupancy()
    }

    pub fn pe(&self) -> &PeState {
        self.engine.pe()
    }

    pub fn rng_counter(&self) -> u32 {
        self.engine.rng_counter()
    }

    /// The host MC's per-rank bank/timing table, evolved from its own
    /// commands plus replica predictions.
    pub fn rank_table(&self) -> &RankState {
        self.engine.view()
    }

    /// Negative-control hook: skip one RNG draw.
    pub fn corrupt_rng(&mut self) {
        self.engine.corrupt_rng();
    }
}

/// One cycle of one rank in the replica trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub cycle: Cycle,
    pub rank: (u8, u8),
    pub predicted: Option<DramCommand>,
    pub actual: Option<DramCommand>,
    pub predicted_write_phase: bool,
    pub actual_write_phase: bool,
}

impl TraceEntry {
    pub fn matches(&self) -> bool {
        self.predicted == self.actual && self.predicted_write_phase == self.actual_write_phase
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyncReport {
    Clean,
    Diverged {
        cycle: Cycle,
        rank: (u8, u8),
        predicted: Option<DramCommand>,
        actual: Option<DramCommand>,
        phase_mismatch: bool,
    },
}

impl SyncReport {
    pub fn is_clean(&self) -> bool {
        matches!(self, SyncReport::Clean)
    }
}

/// Scans a replica trace for the first divergence between predictions and
/// ground truth (commands or write-phase boundaries).
pub fn verify_sync(trace: &[TraceEntry]) -> SyncReport {
    for e in trace {
        if !e.matches() {
            return SyncReport::Diverged {
                cycle: e.cycle,
                rank: e.rank,
                predicted: e.predicted,
                actual: e.actual,
                phase_mismatch: e.predicted_write_phase != e.actual_write_phase,
            };
        }
    }
    SyncReport::Clean
}

/// Online equivalence checker: records per-cycle comparisons, keeps the
/// first divergence and a bounded trailing window for dumps.
#[derive(Debug, Clone)]
pub struct SyncChecker {
    first_divergence: Option<SyncReport>,
    window: std::collections::VecDeque<TraceEntry>,
    window_cap: usize,
    pub entries_checked: u64,
}

impl Default for SyncChecker {
    fn default() -> Self {
        SyncChecker {
            first_divergence: None,
            window: std::collections::VecDeque::new(),
            window_cap: 256,
            entries_checked: 0,
        }
    }
}

impl SyncChecker {
    pub fn record(&mut self, entry: TraceEntry) {
        self.entries_checked += 1;
        if self.window.len() == self.window_cap {
            self.window.pop_front();
        }
        self.window.push_back(entry);
        if self.first_divergence.is_none() && !entry.matches() {
            self.first_divergence = Some(SyncReport::Diverged {
                cycle: entry.cycle,
                rank: entry.rank,
                predicted: entry.predicted,
                actual: entry.actual,
                phase_mismatch: entry.predicted_write_phase != entry.actual_write_phase,
            });
        }
    }

    pub fn report(&self) -> SyncReport {
        self.first_divergence.clone().unwrap_or(SyncReport::Clean)
    }

    /// Trailing trace for divergence debugging: cycle, predicted, actual.
    pub fn dump_window(&self) -> String {
        let mut s = String::new();
        for e in &self.window {
            s.push_str(&format!(
                "{} ({},{}) predicted={} actual={}\n",
                e.cycle,
                e.rank.0,
                e.rank.1,
                e.predicted.map_or("-".to_string(), |c| c.to_string()),
                e.actual.map_or("-".to_string(), |c| c.to_string()),
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::DramAddress;
    use crate::dram::{CmdSource, CommandKind};

    #[test]
    fn clean_and_divergent_traces() {
        let cmd = DramCommand::new(
            CommandKind::Rd,
            CmdSource::Nda,
            DramAddress::default(),
            5,
        );
        let ok = TraceEntry {
            cycle: 5,
            rank: (0, 0),
            predicted: Some(cmd),
            actual: Some(cmd),
            predicted_write_phase: false,
            actual_write_phase: false,
        };
        assert_eq!(verify_sync(&[ok]), SyncReport::Clean);
        let bad = TraceEntry {
            actual: None,
            ..ok
        };
        assert!(matches!(
            verify_sync(&[ok, bad]),
            SyncReport::Diverged { cycle: 5, .. }
        ));
    }

    #[test]
    fn replica_register_budget() {
        use crate::nda::PeState;
        // 20-byte live-register budget plus 40-byte microcode image.
        assert!(PeState::LIVE_REGISTER_BYTES <= 20);
    }
}

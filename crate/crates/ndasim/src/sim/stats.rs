//! Run statistics: per-source bandwidth, read-latency distribution,
//! turnaround counts, rank idle accounting, queue occupancy series, and
//! per-ticket NDA completion latencies.

use crate::dram::{CmdSource, CommandKind, Cycle};
use crate::sim::energy::{EnergyBreakdown, EnergyLedger};
use crate::workloads::svrg::SvrgOutcome;
use crate::workloads::traffic::IdleHistogram;
use serde::{Deserialize, Serialize};

/// Fixed-boundary latency histogram (cycles).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyHistogram {
    /// Bucket upper bounds: 32, 64, 128, 256, 512, 1024, inf.
    pub counts: [u64; 7],
    pub sum: u64,
    pub n: u64,
    pub max: u64,
}

impl LatencyHistogram {
    pub fn add(&mut self, v: u64) {
        let b = match v {
            0..=31 => 0,
            32..=63 => 1,
            64..=127 => 2,
            128..=255 => 3,
            256..=511 => 4,
            512..=1023 => 5,
            _ => 6,
        };
        self.counts[b] += 1;
        self.sum += v;
        self.n += 1;
        self.max = self.max.max(v);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum as f64 / self.n as f64
        }
    }
}

/// Per-rank traffic and idleness accounting, collected online.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub host_read_bursts: u64,
    pub host_write_bursts: u64,
    pub nda_read_bursts: u64,
    pub nda_write_bursts: u64,
    pub nda_acts: u64,
    pub host_acts: u64,
    /// Write-to-read direction switches on the rank data path.
    pub turnarounds: u64,
    /// Turnarounds where an NDA write preceded a host read.
    pub turnarounds_nda_wr_host_rd: u64,
    /// Cycles with no host command or host data on the rank.
    pub host_idle_cycles: u64,
    pub idle_histogram: IdleHistogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancySample {
    pub cycle: Cycle,
    pub channel: u8,
    pub read_q: u32,
    pub write_q: u32,
}

/// Completion record of one NDA ticket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TicketLatency {
    pub ticket: u64,
    pub created: Cycle,
    pub done: Cycle,
}

/// Online collector; folded into a `StatsReport` at the end of a run.
#[derive(Debug, Clone, Default)]
pub struct StatsCollector {
    pub ranks: Vec<RankStats>,
    pub read_latency: LatencyHistogram,
    pub served_reads: u64,
    pub served_writes: u64,
    pub control_writes: u64,
    pub control_reads: u64,
    pub rejected_enqueues: u64,
    pub occupancy: Vec<OccupancySample>,
    pub tickets: Vec<TicketLatency>,
    // Rank-path direction tracking for turnaround counting.
    last_col: Vec<Option<(CommandKind, CmdSource)>>,
    // Host-busy tracking for idle accounting.
    host_busy_until: Vec<Cycle>,
    idle_gap_start: Vec<Option<Cycle>>,
}

impl StatsCollector {
    pub fn new(total_ranks: usize) -> Self {
        StatsCollector {
            ranks: vec![RankStats::default(); total_ranks],
            last_col: vec![None; total_ranks],
            host_busy_until: vec![0; total_ranks],
            idle_gap_start: vec![Some(0); total_ranks],
            ..Default::default()
        }
    }

    pub fn on_command(&mut self, rank_index: usize, kind: CommandKind, source: CmdSource) {
        let r = &mut self.ranks[rank_index];
        match (kind, source) {
            (CommandKind::Act, CmdSource::Host) => r.host_acts += 1,
            (CommandKind::Act, CmdSource::Nda) => r.nda_acts += 1,
            (CommandKind::Rd, CmdSource::Host) => r.host_read_bursts += 1,
            (CommandKind::Rd, CmdSource::Nda) => r.nda_read_bursts += 1,
            (CommandKind::Wr, CmdSource::Host) => r.host_write_bursts += 1,
            (CommandKind::Wr, CmdSource::Nda) => r.nda_write_bursts += 1,
            _ => {}
        }
        if kind.is_column() {
            if let Some((CommandKind::Wr, prev_src)) = self.last_col[rank_index] {
                if kind == CommandKind::Rd {
                    r.turnarounds += 1;
                    if prev_src == CmdSource::Nda && source == CmdSource::Host {
                        r.turnarounds_nda_wr_host_rd += 1;
                    }
                }
            }
            self.last_col[rank_index] = Some((kind, source));
        }
    }

    /// Marks host activity on a rank (command issue or burst occupancy).
    pub fn host_activity(&mut self, rank_index: usize, now: Cycle, busy_until: Cycle) {
        if let Some(start) = self.idle_gap_start[rank_index].take() {
            if now > start {
                self.ranks[rank_index].idle_histogram.add_gap(now - start);
            }
        }
        let u = &mut self.host_busy_until[rank_index];
        *u = (*u).max(busy_until);
    }

    /// Per-cycle idle accounting; call once per rank per cycle after host
    /// scheduling.
    pub fn idle_tick(&mut self, rank_index: usize, now: Cycle, host_cmd_this_cycle: bool) {
        let busy = host_cmd_this_cycle || now < self.host_busy_until[rank_index];
        if !busy {
            self.ranks[rank_index].host_idle_cycles += 1;
            if self.idle_gap_start[rank_index].is_none() {
                self.idle_gap_start[rank_index] = Some(now);
            }
        }
    }

    pub fn finish_idle(&mut self, run_cycles: Cycle) {
        for (i, gap) in self.idle_gap_start.iter_mut().enumerate() {
            if let Some(start) = gap.take() {
                if run_cycles > start {
                    self.ranks[i].idle_histogram.add_gap(run_cycles - start);
                }
            }
            self.ranks[i].idle_histogram.total_cycles = run_cycles;
        }
    }
}

/// Measured outputs of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub cycles: u64,
    pub seed: u64,
    pub ranks: Vec<RankStats>,
    pub read_latency: LatencyHistogram,
    pub served_reads: u64,
    pub served_writes: u64,
    pub control_writes: u64,
    pub control_reads: u64,
    pub rejected_enqueues: u64,
    pub occupancy: Vec<OccupancySample>,
    pub tickets: Vec<TicketLatency>,
    pub energy_counts: EnergyLedger,
    pub energy: EnergyBreakdown,
    /// Bytes per cycle an idle rank's internal path can stream (analytic).
    pub per_rank_ceiling_bytes_per_cycle: f64,
    pub host_read_bytes: u64,
    pub host_write_bytes: u64,
    pub nda_read_bytes: u64,
    pub nda_write_bytes: u64,
    /// Total host-idle rank cycles across ranks.
    pub host_idle_rank_cycles: u64,
    /// NDA bytes over the idle-cycle streaming ceiling.
    pub nda_share_of_idle_bw: f64,
    pub replica_clean: bool,
    pub replica_entries_checked: u64,
    /// Case-study outputs when the workload was SVRG.
    pub svrg: Option<SvrgOutcome>,
}

impl StatsReport {
    pub fn nda_bytes(&self) -> u64 {
        self.nda_read_bytes + self.nda_write_bytes
    }

    pub fn nda_throughput_bytes_per_cycle(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.nda_bytes() as f64 / self.cycles as f64
        }
    }

    pub fn host_bytes(&self) -> u64 {
        self.host_read_bytes + self.host_write_bytes
    }

    pub fn avg_read_latency(&self) -> f64 {
        self.read_latency.mean()
    }

    pub fn served_reads_per_kilocycle(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.served_reads as f64 * 1000.0 / self.cycles as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One-screen human summary.
    pub fn summary(&self) -> String {
        format!(
            "cycles {}  host {:.3} B/cyc ({} rd / {} wr txns, avg rd lat {:.1})  \
             nda {:.3} B/cyc (idle share {:.1}%)  turnarounds {}  energy {:.3} uJ  replica {}",
            self.cycles,
            self.host_bytes() as f64 / self.cycles.max(1) as f64,
            self.served_reads,
            self.served_writes,
            self.avg_read_latency(),
            self.nda_throughput_bytes_per_cycle(),
            100.0 * self.nda_share_of_idle_bw,
            self.ranks.iter().map(|r| r.turnarounds).sum::<u64>(),
            self.energy.total_nj / 1000.0,
            if self.replica_clean { "CLEAN" } else { "DIVERGED" },
        )
    }
}

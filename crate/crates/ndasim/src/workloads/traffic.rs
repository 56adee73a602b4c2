//! Synthetic host traffic and trace replay.
//!
//! The generator stands in for multi-programmed host cores: a Bernoulli
//! burst process with tunable read fraction, row locality, footprint and
//! per-rank skew. Deterministic for a given seed.

use crate::addressing::{MappingConfig, PhysicalAddress};
use crate::dram::Cycle;
use crate::host::TxnKind;
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    /// Mean transactions per DRAM cycle per channel (burst process mean).
    pub rate: f64,
    pub read_fraction: f64,
    /// Probability the next address reuses the last 8KB row region.
    pub row_locality: f64,
    pub footprint_bytes: u64,
    /// Relative weight per global rank (channel-major); empty = uniform.
    pub rank_skew: Vec<f64>,
    /// Consecutive-cycle injections per burst start.
    pub burst_len: u32,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            rate: 0.3,
            read_fraction: 0.67,
            row_locality: 0.5,
            footprint_bytes: 256 << 20,
            rank_skew: Vec::new(),
            burst_len: 4,
        }
    }
}

impl TrafficProfile {
    pub fn high_intensity() -> Self {
        TrafficProfile {
            rate: 0.9,
            read_fraction: 0.67,
            row_locality: 0.6,
            ..Default::default()
        }
    }

    pub fn low_intensity() -> Self {
        TrafficProfile {
            rate: 0.05,
            read_fraction: 0.67,
            row_locality: 0.5,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.read_fraction) {
            return Err("read_fraction must be in [0,1]".into());
        }
        if self.rate < 0.0 {
            return Err("rate must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.row_locality) {
            return Err("row_locality must be in [0,1]".into());
        }
        if self.burst_len == 0 {
            return Err("burst_len must be positive".into());
        }
        if !self.rank_skew.is_empty() && self.rank_skew.iter().sum::<f64>() <= 0.0 {
            return Err("rank skew weights must sum to a positive value".into());
        }
        Ok(())
    }
}

/// Per-channel generator state.
#[derive(Debug, Clone)]
pub struct TrafficGen {
    profile: TrafficProfile,
    rng: CounterRng,
    burst_left: u32,
    last_region: Option<u64>,
    footprint: u64,
    /// Held transaction that met backpressure, retried next cycle.
    pending: Option<(TxnKind, PhysicalAddress)>,
}

/// 8KB region granularity for the row-locality model: within it, bank and
/// row are fixed for the default mapping.
const REGION_BYTES: u64 = 8192;

impl TrafficGen {
    pub fn new(profile: TrafficProfile, map: &MappingConfig, seed: u32) -> Self {
        let footprint = profile
            .footprint_bytes
            .min(map.host_region_bytes())
            .max(REGION_BYTES);
        TrafficGen {
            profile,
            rng: CounterRng::new(seed),
            burst_left: 0,
            last_region: None,
            footprint,
            pending: None,
        }
    }

    fn draw_addr(&mut self, map: &MappingConfig) -> PhysicalAddress {
        let blocks = self.footprint / 64;
        if let Some(region) = self.last_region {
            if self.rng.gen_bool(self.profile.row_locality) {
                let off = self.rng.gen_range(REGION_BYTES / 64) * 64;
                return PhysicalAddress(region + off);
            }
        }
        // Fresh draw, honoring rank skew by bounded rejection.
        let skew = &self.profile.rank_skew;
        let want_rank = if skew.is_empty() {
            None
        } else {
            let idx = self.rng.weighted(skew);
            Some((
                (idx as u32 / map.ranks) as u8,
                (idx as u32 % map.ranks) as u8,
            ))
        };
        let mut addr = PhysicalAddress(self.rng.gen_range(blocks) * 64);
        if let Some(want) = want_rank {
            for _ in 0..32 {
                let got = map.map_physical(addr).expect("in footprint").rank_id();
                if got == want {
                    break;
                }
                addr = PhysicalAddress(self.rng.gen_range(blocks) * 64);
            }
        }
        self.last_region = Some(addr.0 - addr.0 % REGION_BYTES);
        addr
    }

    /// Transactions to inject this cycle (at most one). Deterministic for
    /// a given seed; backpressure holds a rejected transaction for retry.
    pub fn tick(&mut self, map: &MappingConfig) -> Option<(TxnKind, PhysicalAddress)> {
        if let Some(held) = self.pending.take() {
            return Some(held);
        }
        if self.burst_left == 0 {
            // Burst-start probability chosen so the steady-state mean is
            // `rate` transactions per cycle.
            let rate = self.profile.rate.min(1.0);
            let bl = self.profile.burst_len as f64;
            let p_start = if rate >= 1.0 {
                1.0
            } else if rate <= 0.0 {
                0.0
            } else {
                1.0 / (bl * (1.0 / rate - 1.0) + 1.0)
            };
            if self.rng.gen_bool(p_start) {
                self.burst_left = self.profile.burst_len;
            }
        }
        if self.burst_left == 0 {
            return None;
        }
        self.burst_left -= 1;
        let kind = if self.rng.gen_bool(self.profile.read_fraction) {
            TxnKind::Read
        } else {
            TxnKind::Write
        };
        let addr = self.draw_addr(map);
        Some((kind, addr))
    }

    /// Re-queue a transaction the controller rejected.
    pub fn hold(&mut self, txn: (TxnKind, PhysicalAddress)) {
        debug_assert!(self.pending.is_none());
        self.pending = Some(txn);
    }
}

/// One line of the trace format: cycle, R/W, hex block address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: Cycle,
    pub is_read: bool,
    pub paddr: u64,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {:#x}",
            self.cycle,
            if self.is_read { "R" } else { "W" },
            self.paddr
        )
    }

    pub fn parse(line: &str) -> Option<TraceRecord> {
        let mut it = line.split_whitespace();
        let cycle = it.next()?.parse().ok()?;
        let is_read = match it.next()? {
            "R" => true,
            "W" => false,
            _ => return None,
        };
        let hex = it.next()?.trim_start_matches("0x");
        let paddr = u64::from_str_radix(hex, 16).ok()?;
        Some(TraceRecord {
            cycle,
            is_read,
            paddr,
        })
    }
}

pub fn parse_trace(text: &str) -> Vec<TraceRecord> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .filter_map(TraceRecord::parse)
        .collect()
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

/// Idle-gap breakdown of one rank: gap lengths bucketed and weighted by
/// total idle cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IdleHistogram {
    /// Idle cycles in gaps of <10, 10-99, 100-249, >=250 cycles.
    pub buckets: [u64; 4],
    pub total_idle: u64,
    pub total_cycles: u64,
}

impl IdleHistogram {
    pub fn add_gap(&mut self, len: u64) {
        let b = match len {
            0 => return,
            1..=9 => 0,
            10..=99 => 1,
            100..=249 => 2,
            _ => 3,
        };
        self.buckets[b] += len;
        self.total_idle += len;
    }

    pub fn fraction(&self, bucket: usize) -> f64 {
        if self.total_idle == 0 {
            0.0
        } else {
            self.buckets[bucket] as f64 / self.total_idle as f64
        }
    }
}

/// Builds per-rank idle histograms from a command log: a rank is busy (from
/// the host's perspective) while a host command issues on it or a host data
/// burst occupies it.
pub fn idle_histogram(
    log: &[crate::dram::DramCommand],
    params: &crate::dram::TimingParams,
    channels: u32,
    ranks: u32,
    run_cycles: Cycle,
) -> Vec<IdleHistogram> {
    use crate::dram::{CmdSource, CommandKind};
    let n = (channels * ranks) as usize;
    let mut hist = vec![IdleHistogram::default(); n];
    let mut busy_until = vec![0u64; n];
    for cmd in log.iter().filter(|c| c.source == CmdSource::Host) {
        let r = (cmd.target.channel as u32 * ranks + cmd.target.rank as u32) as usize;
        let t = cmd.issue_cycle;
        if t > busy_until[r] {
            hist[r].add_gap(t - busy_until[r]);
        }
        let end = match cmd.kind {
            CommandKind::Rd => t + params.t_cl + params.t_bl,
            CommandKind::Wr => t + params.t_cwl + params.t_bl,
            _ => t + 1,
        };
        busy_until[r] = busy_until[r].max(end);
    }
    for (r, h) in hist.iter_mut().enumerate() {
        if run_cycles > busy_until[r] {
            h.add_gap(run_cycles - busy_until[r]);
        }
        h.total_cycles = run_cycles;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::MapMode;
    use crate::dram::TimingParams;

    fn map() -> MappingConfig {
        MappingConfig::default_for(2, 2, 16, 2, 8192, 128, 1, MapMode::Baseline).unwrap()
    }

    #[test]
    fn zero_rate_generates_nothing() {
        let m = map();
        let mut g = TrafficGen::new(
            TrafficProfile {
                rate: 0.0,
                ..Default::default()
            },
            &m,
            1,
        );
        for _ in 0..10_000 {
            assert!(g.tick(&m).is_none());
        }
    }

    #[test]
    fn read_fraction_one_is_all_reads() {
        let m = map();
        let mut g = TrafficGen::new(
            TrafficProfile {
                rate: 0.8,
                read_fraction: 1.0,
                ..Default::default()
            },
            &m,
            2,
        );
        let mut n = 0;
        for _ in 0..10_000 {
            if let Some((kind, _)) = g.tick(&m) {
                assert_eq!(kind, TxnKind::Read);
                n += 1;
            }
        }
        assert!(n > 5000);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = map();
        let mk = || TrafficGen::new(TrafficProfile::high_intensity(), &m, 7);
        let mut a = mk();
        let mut b = mk();
        for _ in 0..5_000 {
            assert_eq!(a.tick(&m), b.tick(&m));
        }
    }

    #[test]
    fn skew_biases_ranks() {
        let m = map();
        let mut skew = vec![0.0; 4];
        skew[0] = 1.0; // all weight on global rank 0 = (ch 0, rank 0)
        let mut g = TrafficGen::new(
            TrafficProfile {
                rate: 1.0,
                row_locality: 0.0,
                rank_skew: skew,
                ..Default::default()
            },
            &m,
            3,
        );
        let mut hits = 0;
        let mut total = 0;
        for _ in 0..2_000 {
            if let Some((_, p)) = g.tick(&m) {
                total += 1;
                if m.map_physical(p).unwrap().rank_id() == (0, 0) {
                    hits += 1;
                }
            }
        }
        assert!(hits as f64 > 0.95 * total as f64, "{hits}/{total}");
    }

    #[test]
    fn trace_roundtrip() {
        let recs = vec![
            TraceRecord {
                cycle: 0,
                is_read: true,
                paddr: 0x1c0,
            },
            TraceRecord {
                cycle: 9,
                is_read: false,
                paddr: 0x40,
            },
        ];
        assert_eq!(parse_trace(&format_trace(&recs)), recs);
    }

    #[test]
    fn idle_histogram_edges() {
        use crate::addressing::DramAddress;
        use crate::dram::{CmdSource, CommandKind, DramCommand};
        let p = TimingParams::default();
        // Fully idle channel: one gap covering the run.
        let h = idle_histogram(&[], &p, 1, 1, 1000);
        assert_eq!(h[0].total_idle, 1000);
        assert_eq!(h[0].buckets[3], 1000);
        // Back-to-back saturation: zero idle.
        let mut log = Vec::new();
        let mut t = 0;
        let a = DramAddress::default();
        log.push(DramCommand::new(CommandKind::Act, CmdSource::Host, a, 0));
        while t < 980 {
            log.push(DramCommand::new(CommandKind::Rd, CmdSource::Host, a, t + 16));
            t += 4;
        }
        let h = idle_histogram(&log, &p, 1, 1, 1000);
        assert!(h[0].total_idle < 25, "{}", h[0].total_idle);
    }
}

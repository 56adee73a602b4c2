//! Energy accounting.
//!
//! Per-event energies use the configured constants; bursts are charged per
//! bit (64B = 512 bits). Buffer and scratchpad leakage accrues with wall
//! time at 1.2 GHz. The ledger stores raw event counts so the total is an
//! exact function of (counts, params, elapsed cycles) — the conservation
//! identity checked by the acceptance suite.

use serde::{Deserialize, Serialize};

pub const DRAM_CLOCK_HZ: f64 = 1.2e9;
pub const BITS_PER_BURST: f64 = 512.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// nJ per ACT.
    pub act_nj: f64,
    /// pJ per bit moved by a PE (rank-internal) burst.
    pub pe_rw_pj_per_bit: f64,
    /// pJ per bit moved by a host burst.
    pub host_rw_pj_per_bit: f64,
    /// pJ per FMA operation.
    pub fma_pj: f64,
    /// pJ per buffer or scratchpad access (8B word).
    pub buffer_pj_per_access: f64,
    /// mW leakage per buffer instance (buffer and scratchpad alike).
    pub buffer_leak_mw: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            act_nj: 1.0,
            pe_rw_pj_per_bit: 11.3,
            host_rw_pj_per_bit: 25.7,
            fma_pj: 20.0,
            buffer_pj_per_access: 20.0,
            buffer_leak_mw: 11.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("act_nj", self.act_nj),
            ("pe_rw_pj_per_bit", self.pe_rw_pj_per_bit),
            ("host_rw_pj_per_bit", self.host_rw_pj_per_bit),
            ("fma_pj", self.fma_pj),
            ("buffer_pj_per_access", self.buffer_pj_per_access),
            ("buffer_leak_mw", self.buffer_leak_mw),
        ] {
            if v < 0.0 {
                return Err(format!("energy parameter {name} must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyEvent {
    Act,
    HostBurst,
    PeBurst,
    Fma(u64),
    BufferAccess(u64),
}

/// Raw event counts; energies derive from them exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub acts: u64,
    pub host_bursts: u64,
    pub pe_bursts: u64,
    pub fma_ops: u64,
    pub buffer_accesses: u64,
}

impl EnergyLedger {
    pub fn account(&mut self, ev: EnergyEvent) {
        match ev {
            EnergyEvent::Act => self.acts += 1,
            EnergyEvent::HostBurst => self.host_bursts += 1,
            EnergyEvent::PeBurst => self.pe_bursts += 1,
            EnergyEvent::Fma(n) => self.fma_ops += n,
            EnergyEvent::BufferAccess(n) => self.buffer_accesses += n,
        }
    }
}

/// Energy breakdown in nanojoules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub act_nj: f64,
    pub host_burst_nj: f64,
    pub pe_burst_nj: f64,
    pub fma_nj: f64,
    pub buffer_nj: f64,
    pub leakage_nj: f64,
    pub total_nj: f64,
}

impl EnergyBreakdown {
    /// `buffer_instances`: buffer + scratchpad per PE, across all PEs.
    pub fn compute(
        ledger: &EnergyLedger,
        params: &EnergyParams,
        elapsed_cycles: u64,
        buffer_instances: u64,
    ) -> EnergyBreakdown {
        let act_nj = ledger.acts as f64 * params.act_nj;
        let host_burst_nj =
            ledger.host_bursts as f64 * BITS_PER_BURST * params.host_rw_pj_per_bit / 1000.0;
        let pe_burst_nj =
            ledger.pe_bursts as f64 * BITS_PER_BURST * params.pe_rw_pj_per_bit / 1000.0;
        let fma_nj = ledger.fma_ops as f64 * params.fma_pj / 1000.0;
        let buffer_nj = ledger.buffer_accesses as f64 * params.buffer_pj_per_access / 1000.0;
        let seconds = elapsed_cycles as f64 / DRAM_CLOCK_HZ;
        // mW = 1e-3 J/s = 1e6 nJ/s.
        let leakage_nj = params.buffer_leak_mw * 1e6 * seconds * buffer_instances as f64;
        let total_nj = act_nj + host_burst_nj + pe_burst_nj + fma_nj + buffer_nj + leakage_nj;
        EnergyBreakdown {
            act_nj,
            host_burst_nj,
            pe_burst_nj,
            fma_nj,
            buffer_nj,
            leakage_nj,
            total_nj,
        }
    }

    pub fn average_power_w(&self, elapsed_cycles: u64) -> f64 {
        if elapsed_cycles == 0 {
            return 0.0;
        }
        self.total_nj * 1e-9 / (elapsed_cycles as f64 / DRAM_CLOCK_HZ)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_energy_matches_hand_arithmetic() {
        let p = EnergyParams::default();
        let mut l = EnergyLedger::default();
        l.account(EnergyEvent::HostBurst);
        let e = EnergyBreakdown::compute(&l, &p, 0, 0);
        assert!((e.host_burst_nj - 13.1584).abs() < 1e-12);
        let mut l2 = EnergyLedger::default();
        l2.account(EnergyEvent::PeBurst);
        let e2 = EnergyBreakdown::compute(&l2, &p, 0, 0);
        assert!((e2.pe_burst_nj - 5.7856).abs() < 1e-12);
        let mut l3 = EnergyLedger::default();
        l3.account(EnergyEvent::Act);
        let e3 = EnergyBreakdown::compute(&l3, &p, 0, 0);
        assert!((e3.total_nj - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conservation_identity() {
        let p = EnergyParams::default();
        let l = EnergyLedger {
            acts: 17,
            host_bursts: 123,
            pe_bursts: 456,
            fma_ops: 7890,
            buffer_accesses: 1011,
        };
        let e = EnergyBreakdown::compute(&l, &p, 100_000, 64);
        let sum = e.act_nj + e.host_burst_nj + e.pe_burst_nj + e.fma_nj + e.buffer_nj + e.leakage_nj;
        assert_eq!(sum, e.total_nj);
    }
}

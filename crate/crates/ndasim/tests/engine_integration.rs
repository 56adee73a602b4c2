//! End-to-end engine checks: kernels drive real simulations and the
//! resulting command logs stand up to the independent auditor and the
//! replica equivalence checker.

use ndasim::dram::{audit_log, AuditGeometry, CmdSource};
use ndasim::sim::config::{HostLoad, NdaLoad, SimConfig};
use ndasim::sim::Simulator;
use ndasim::workloads::kernels::{KernelOpSpec, KernelSpec, LaunchMode, Placement};
use ndasim::workloads::traffic::TrafficProfile;
use ndasim::nda::Opcode;

fn kernel_cfg(op: Opcode, cycles: u64) -> SimConfig {
    SimConfig {
        cycles,
        nda_load: NdaLoad::Kernel(KernelSpec {
            ops: vec![KernelOpSpec {
                opcode: op,
                alpha: 1.5,
                beta: 0.5,
                gamma: 0.25,
            }],
            placement: Placement::Spread,
            vector_blocks: 2048,
            blocks_per_instr: 0,
            launch: LaunchMode::Macro,
            queue_depth: 4,
            relaunch: true,
        }),
        ..Default::default()
    }
}

fn audit_report(report_cfg: &SimConfig, sim: Simulator) -> (ndasim::StatsReport, usize) {
    let geom = AuditGeometry {
        channels: report_cfg.geometry.channels,
        ranks: report_cfg.geometry.ranks,
        banks: report_cfg.geometry.banks,
        bank_groups: report_cfg.geometry.bank_groups,
    };
    let log = sim.core.log.clone();
    let report = sim.into_report();
    let violations = audit_log(&log, &report_cfg.timing, &geom);
    for v in violations.iter().take(5) {
        eprintln!("violation: {v}");
    }
    (report, violations.len())
}

fn run_and_audit(cfg: SimConfig) -> ndasim::StatsReport {
    let cfg2 = cfg.clone();
    let mut sim = Simulator::new(cfg).unwrap();
    for _ in 0..cfg2.cycles {
        sim.step();
    }
    let (report, violations) = audit_report(&cfg2, sim);
    assert_eq!(violations, 0, "protocol violations found");
    assert!(report.replica_clean, "replica diverged");
    report
}

#[test]
fn copy_kernel_streams_and_audits_clean() {
    let report = run_and_audit(kernel_cfg(Opcode::Copy, 30_000));
    assert!(report.nda_read_bytes > 0, "no NDA reads issued");
    assert!(report.nda_write_bytes > 0, "no NDA writes issued");
    // Idle machine: COPY should reach a solid fraction of the streaming
    // ceiling (the acceptance suite pins the exact threshold).
    let per_rank = report.nda_throughput_bytes_per_cycle() / 4.0;
    assert!(
        per_rank > 0.5 * report.per_rank_ceiling_bytes_per_cycle,
        "per-rank throughput {per_rank:.2} B/cyc too low"
    );
}

#[test]
fn dot_kernel_with_host_traffic_audits_clean() {
    let mut cfg = kernel_cfg(Opcode::Dot, 30_000);
    cfg.host_load = HostLoad::Traffic(TrafficProfile::default());
    let report = run_and_audit(cfg);
    assert!(report.nda_read_bytes > 0);
    assert!(report.host_bytes() > 0);
    assert_eq!(report.nda_write_bytes, 0, "DOT must not write");
}

#[test]
fn all_opcodes_complete_and_audit_clean() {
    for op in [
        Opcode::Copy,
        Opcode::Scal,
        Opcode::Axpy,
        Opcode::Xmy,
        Opcode::Axpby,
        Opcode::Axpbypcz,
        Opcode::Dot,
        Opcode::Nrm2,
    ] {
        let mut cfg = kernel_cfg(op, 15_000);
        if let NdaLoad::Kernel(k) = &mut cfg.nda_load {
            k.vector_blocks = 512;
        }
        let report = run_and_audit(cfg);
        assert!(
            !report.tickets.is_empty(),
            "{op:?} never completed a round"
        );
    }
}

#[test]
fn host_priority_is_absolute() {
    // Wherever a host command issued on a rank, no NDA command may issue
    // in the same cycle on that rank.
    let mut cfg = kernel_cfg(Opcode::Copy, 20_000);
    cfg.host_load = HostLoad::Traffic(TrafficProfile::high_intensity());
    let cfg2 = cfg.clone();
    let mut sim = Simulator::new(cfg).unwrap();
    for _ in 0..cfg2.cycles {
        sim.step();
    }
    let log = sim.core.log.clone();
    let mut host_slots = std::collections::HashSet::new();
    for c in log.iter().filter(|c| c.source == CmdSource::Host) {
        host_slots.insert((c.issue_cycle, c.target.channel, c.target.rank));
    }
    for c in log.iter().filter(|c| c.source == CmdSource::Nda) {
        assert!(
            !host_slots.contains(&(c.issue_cycle, c.target.channel, c.target.rank)),
            "NDA command in a host cycle at {c}"
        );
    }
    let (report, violations) = audit_report(&cfg2, sim);
    assert_eq!(violations, 0);
    assert!(report.replica_clean);
}

use ndasim::nda::Opcode;
use ndasim::sim::config::{HostLoad, NdaLoad, SimConfig};
use ndasim::sim::Simulator;
use ndasim::workloads::kernels::{KernelOpSpec, KernelSpec, LaunchMode, Placement};
use ndasim::workloads::traffic::TrafficProfile;

fn kernel(op: Opcode) -> KernelSpec {
    KernelSpec {
        ops: vec![KernelOpSpec {
            opcode: op,
            alpha: 1.5,
            beta: 0.5,
            gamma: 0.25,
        }],
        placement: Placement::Spread,
        vector_blocks: 4096,
        blocks_per_instr: 0,
        launch: LaunchMode::Macro,
        queue_depth: 4,
        relaunch: true,
    }
}

fn main() {
    for op in [Opcode::Copy, Opcode::Dot, Opcode::Nrm2] {
        let cfg = SimConfig {
            cycles: 100_000,
            nda_load: NdaLoad::Kernel(kernel(op)),
            ..Default::default()
        };
        let r = Simulator::run_config(cfg).unwrap();
        let per_rank = r.nda_throughput_bytes_per_cycle() / 4.0;
        println!(
            "{:?}: per-rank {:.3} B/cyc = {:.1}% of ceiling {:.1}; idle share {:.3}",
            op,
            per_rank,
            100.0 * per_rank / r.per_rank_ceiling_bytes_per_cycle,
            r.per_rank_ceiling_bytes_per_cycle,
            r.nda_share_of_idle_bw,
        );
    }
    // low-intensity colocation
    let cfg = SimConfig {
        cycles: 100_000,
        nda_load: NdaLoad::Kernel(kernel(Opcode::Copy)),
        host_load: HostLoad::Traffic(TrafficProfile::low_intensity()),
        ..Default::default()
    };
    let r = Simulator::run_config(cfg).unwrap();
    println!(
        "COPY + low traffic: idle share {:.3}, host {:.2} B/cyc",
        r.nda_share_of_idle_bw,
        r.host_bytes() as f64 / r.cycles as f64
    );
}

//! Near-data accelerator: instructions, per-rank controllers/PEs, and the
//! host-side runtime that launches and reduces coarse-grain vector ops.

mod engine;
mod instruction;
pub mod runtime;
pub mod walk;

pub use engine::{
    Completion, DataPort, EngineConfig, EngineCounters, HostObserved, PeState, Phase, RankEngine,
    ZeroPort,
};
pub use instruction::{LaunchError, LaunchPacket, NdaInstruction, Opcode, OperandDesc, RawSpan};

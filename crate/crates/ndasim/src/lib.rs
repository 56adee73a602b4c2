//! Cycle-level simulator of a DDR4 main memory shared concurrently between a
//! host memory controller and per-rank near-data accelerators (NDAs).
//!
//! The crate models the full path from physical addresses down to DRAM
//! command timing:
//!
//! * [`dram`] — DDR4 command semantics, timing-constraint checking, and an
//!   independent protocol auditor.
//! * [`addressing`] — the GF(2)-linear physical-to-DRAM mapping, bank
//!   partitioning, page coloring, and the system-row allocator.
//! * [`host`] — an FR-FCFS host memory controller with write-drain
//!   watermarks and the next-rank prediction signal.
//! * [`nda`] — per-rank NDA memory controllers and processing elements
//!   executing coarse-grain vector operations.
//! * [`replica`] — host-side replicas of each NDA memory-issue FSM plus the
//!   cycle-exact equivalence checker.
//! * [`workloads`] — synthetic host traffic, trace replay, NDA kernel
//!   drivers, and the collaborative SVRG case study.
//! * [`sim`] — the top-level simulation loop, configuration, statistics,
//!   energy accounting, and the parallel sweep runner.
//!
//! Every simulation is deterministic given its configuration and seed.
//! Parameter sweeps run as independent simulations; with the default
//! `parallel` feature they are distributed over a rayon pool, otherwise
//! they run sequentially.

pub mod addressing;
pub mod dram;
pub mod host;
pub mod nda;
pub mod replica;
pub mod rng;
pub mod sim;
pub mod workloads;

pub use sim::config::SimConfig;
pub use sim::stats::StatsReport;
pub use sim::Simulator;

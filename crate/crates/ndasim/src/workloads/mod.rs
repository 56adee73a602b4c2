//! Host traffic generation, trace replay, NDA kernel drivers, and the
//! collaborative SVRG case study.

pub mod kernels;
pub mod svrg;
pub mod traffic;

pub use kernels::{KernelSpec, LaunchMode, Placement};
pub use svrg::{SvrgConfig, SvrgVariant};
pub use traffic::{idle_histogram, IdleHistogram, TraceRecord, TrafficProfile};

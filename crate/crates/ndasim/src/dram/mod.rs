//! DDR4 command semantics and timing-constraint enforcement.

pub mod audit;
mod command;
mod state;
mod timing;

pub use audit::{audit_log, AuditGeometry, Violation};
pub use command::{CmdSource, CommandKind, Cycle, DramCommand};
pub use state::{BankState, BankStatus, ChannelState, ProtocolError, RankState, TimingRule};
pub use timing::TimingParams;

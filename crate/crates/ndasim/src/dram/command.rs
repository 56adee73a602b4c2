//! DRAM commands and the command-log record format.

use crate::addressing::DramAddress;
use serde::{Deserialize, Serialize};
use std::fmt;

pub type Cycle = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandKind {
    Act,
    Pre,
    PreA,
    Rd,
    Wr,
}

impl CommandKind {
    pub fn is_column(self) -> bool {
        matches!(self, CommandKind::Rd | CommandKind::Wr)
    }

    pub fn is_row(self) -> bool {
        !self.is_column()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Act => "ACT",
            CommandKind::Pre => "PRE",
            CommandKind::PreA => "PREA",
            CommandKind::Rd => "RD",
            CommandKind::Wr => "WR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmdSource {
    Host,
    Nda,
}

impl CmdSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CmdSource::Host => "H",
            CmdSource::Nda => "N",
        }
    }
}

/// One DRAM command. Row is ignored for PRE; row and column for PREA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramCommand {
    pub kind: CommandKind,
    pub source: CmdSource,
    pub target: DramAddress,
    pub issue_cycle: Cycle,
}

impl DramCommand {
    pub fn new(kind: CommandKind, source: CmdSource, target: DramAddress, issue_cycle: Cycle) -> Self {
        DramCommand {
            kind,
            source,
            target,
            issue_cycle,
        }
    }
}

impl fmt::Display for DramCommand {
    /// Log record: cycle, source, kind, channel, rank, bank, row, column.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {} {}",
            self.issue_cycle,
            self.source.as_str(),
            self.kind.as_str(),
            self.target.channel,
            self.target.rank,
            self.target.bank,
            self.target.row,
            self.target.column
        )
    }
}

impl DramCommand {
    pub fn parse_record(line: &str) -> Option<DramCommand> {
        let mut it = line.split_whitespace();
        let issue_cycle: Cycle = it.next()?.parse().ok()?;
        let source = match it.next()? {
            "H" => CmdSource::Host,
            "N" => CmdSource::Nda,
            _ => return None,
        };
        let kind = match it.next()? {
            "ACT" => CommandKind::Act,
            "PRE" => CommandKind::Pre,
            "PREA" => CommandKind::PreA,
            "RD" => CommandKind::Rd,
            "WR" => CommandKind::Wr,
            _ => return None,
        };
        let channel = it.next()?.parse().ok()?;
        let rank = it.next()?.parse().ok()?;
        let bank = it.next()?.parse().ok()?;
        let row = it.next()?.parse().ok()?;
        let column = it.next()?.parse().ok()?;
        Some(DramCommand {
            kind,
            source,
            target: DramAddress {
                channel,
                rank,
                bank,
                row,
                column,
            },
            issue_cycle,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_roundtrip() {
        let cmd = DramCommand::new(
            CommandKind::Rd,
            CmdSource::Nda,
            DramAddress {
                channel: 1,
                rank: 0,
                bank: 7,
                row: 321,
                column: 12,
            },
            9876,
        );
        let line = cmd.to_string();
        assert_eq!(DramCommand::parse_record(&line), Some(cmd));
    }
}

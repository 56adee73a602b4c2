//! Independent protocol checker.
//!
//! Replays a command log against a from-scratch restatement of the DDR4
//! rules and reports every command that breaks one. Deliberately built on
//! a different representation than the live state machine: instead of
//! earliest-legal tables, it records the raw timestamps of past commands
//! and evaluates each rule formula at check time. The two paths share no
//! code, so agreement between them is evidence rather than tautology.
//!
//! One violation is reported per offending command: the rule with the
//! largest deficit, ties broken by a fixed rule order (row rules first).

use super::command::{CmdSource, CommandKind, Cycle, DramCommand};
use super::timing::TimingParams;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Index of the offending command in the log.
    pub index: usize,
    pub cmd: DramCommand,
    pub rule: String,
    pub deficit: u64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "#{}: {} violates {} by {} cycles",
            self.index, self.cmd, self.rule, self.deficit
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AuditGeometry {
    pub channels: u32,
    pub ranks: u32,
    pub banks: u32,
    pub bank_groups: u32,
}

impl AuditGeometry {
    fn group(&self, bank: u8) -> usize {
        (bank as u32 / (self.banks / self.bank_groups)) as usize
    }
}

const NONE: Cycle = Cycle::MAX;

/// Raw per-bank history: command timestamps, not derived limits.
#[derive(Clone, Copy)]
struct BankHist {
    open_row: Option<u32>,
    last_act: Cycle,
    last_rd: Cycle,
    last_wr: Cycle,
    last_precharge: Cycle,
}

impl Default for BankHist {
    fn default() -> Self {
        BankHist {
            open_row: None,
            last_act: NONE,
            last_rd: NONE,
            last_wr: NONE,
            last_precharge: NONE,
        }
    }
}

#[derive(Clone)]
struct RankHist {
    acts: Vec<Cycle>,
    last_act_any: Cycle,
    last_act_group: Vec<Cycle>,
    last_col_any: Cycle,
    last_col_group: Vec<Cycle>,
    last_wr_issue_any: Cycle,
    last_wr_issue_group: Vec<Cycle>,
    last_data_end: Cycle,
}

impl RankHist {
    fn new(groups: usize) -> Self {
        RankHist {
            acts: Vec::new(),
            last_act_any: NONE,
            last_act_group: vec![NONE; groups],
            last_col_any: NONE,
            last_col_group: vec![NONE; groups],
            last_wr_issue_any: NONE,
            last_wr_issue_group: vec![NONE; groups],
            last_data_end: 0,
        }
    }
}

struct RuleCheck {
    rule: &'static str,
    /// Priority for tie-breaking (lower wins).
    prio: u8,
    required: Cycle,
}

fn data_window(kind: CommandKind, issue: Cycle, t: &TimingParams) -> (Cycle, Cycle) {
    match kind {
        CommandKind::Rd => (issue + t.t_cl, issue + t.t_cl + t.t_bl),
        CommandKind::Wr => (issue + t.t_cwl, issue + t.t_cwl + t.t_bl),
        _ => (issue, issue),
    }
}

/// Replays `log` (sorted by issue cycle) and returns one violation per
/// offending command. An empty result means the log is protocol-clean.
pub fn audit_log(log: &[DramCommand], params: &TimingParams, geom: &AuditGeometry) -> Vec<Violation> {
    let groups = geom.bank_groups as usize;
    let nbanks = geom.banks as usize;
    let nranks = geom.ranks as usize;
    let mut banks: Vec<BankHist> =
        vec![BankHist::default(); geom.channels as usize * nranks * nbanks];
    let mut ranks: Vec<RankHist> =
        vec![RankHist::new(groups); geom.channels as usize * nranks];
    // Shared external bus per channel: (data end, rank) of the last host burst.
    let mut ext: Vec<Option<(Cycle, u8)>> = vec![None; geom.channels as usize];

    let bank_idx = |ch: u8, rk: u8, b: u8| -> usize {
        (ch as usize * nranks + rk as usize) * nbanks + b as usize
    };
    let rank_idx = |ch: u8, rk: u8| -> usize { ch as usize * nranks + rk as usize };

    let mut out = Vec::new();
    let mut last_cycle = 0;
    for (index, cmd) in log.iter().enumerate() {
        let t = cmd.issue_cycle;
        let ch = cmd.target.channel;
        let rk = cmd.target.rank;
        let b = cmd.target.bank;
        let g = geom.group(b);
        let mut checks: Vec<RuleCheck> = Vec::new();
        let mut illegal: Option<String> = None;

        if t < last_cycle {
            illegal = Some("log not sorted by issue cycle".into());
        }
        last_cycle = t;
        if (ch as u32) >= geom.channels || (rk as u32) >= geom.ranks || (b as u32) >= geom.banks {
            out.push(Violation {
                index,
                cmd: *cmd,
                rule: "illegal(target out of range)".into(),
                deficit: 0,
            });
            continue;
        }

        let bh = banks[bank_idx(ch, rk, b)];
        let rh = &ranks[rank_idx(ch, rk)];

        let push = |checks: &mut Vec<RuleCheck>, rule, prio, base: Cycle, gap: u64| {
            if base != NONE {
                checks.push(RuleCheck {
                    rule,
                    prio,
                    required: base + gap,
                });
            }
        };

        match cmd.kind {
            CommandKind::Act => {
                if bh.open_row.is_some() {
                    illegal = Some("ACT to open bank".into());
                }
                push(&mut checks, "tRC", 0, bh.last_act, params.t_rc);
                push(&mut checks, "tRP", 2, bh.last_precharge, params.t_rp);
                push(&mut checks, "tRRDL", 6, rh.last_act_group[g], params.t_rrdl);
                push(&mut checks, "tRRDS", 7, rh.last_act_any, params.t_rrds);
                if rh.acts.len() >= 4 {
                    let fourth_back = rh.acts[rh.acts.len() - 4];
                    push(&mut checks, "tFAW", 8, fourth_back, params.t_faw);
                }
            }
            CommandKind::Pre | CommandKind::PreA => {
                let targets: Vec<u8> = if cmd.kind == CommandKind::Pre {
                    if bh.open_row.is_none() {
                        illegal = Some("PRE to closed bank".into());
                    }
                    vec![b]
                } else {
                    (0..geom.banks as u8)
                        .filter(|&bb| banks[bank_idx(ch, rk, bb)].open_row.is_some())
                        .collect()
                };
                for bb in targets {
                    let h = banks[bank_idx(ch, rk, bb)];
                    push(&mut checks, "tRAS", 1, h.last_act, params.t_ras);
                    push(&mut checks, "tRTP", 4, h.last_rd, params.t_rtp);
                    push(
                        &mut checks,
                        "tWR",
                        5,
                        h.last_wr,
                        params.t_cwl + params.t_bl + params.t_wr,
                    );
                }
            }
            CommandKind::Rd | CommandKind::Wr => {
                match bh.open_row {
                    None => illegal = Some("column command to closed bank".into()),
                    Some(r) if r != cmd.target.row => {
                        illegal = Some(format!("column command to row {} while {} open", cmd.target.row, r))
                    }
                    _ => {}
                }
                push(&mut checks, "tRCD", 3, bh.last_act, params.t_rcd);
                push(&mut checks, "tCCDL", 9, rh.last_col_group[g], params.t_ccdl);
                push(&mut checks, "tCCDS", 10, rh.last_col_any, params.t_ccds);
                if cmd.kind == CommandKind::Rd {
                    push(
                        &mut checks,
                        "tWTRL",
                        11,
                        rh.last_wr_issue_group[g],
                        params.t_cwl + params.t_bl + params.t_wtrl,
                    );
                    push(
                        &mut checks,
                        "tWTRS",
                        12,
                        rh.last_wr_issue_any,
                        params.t_cwl + params.t_bl + params.t_wtrs,
                    );
                }
                // Rank-internal data path: this burst's data must start
                // after every earlier burst on the rank has finished.
                let (start, _) = data_window(cmd.kind, t, params);
                if start < rh.last_data_end {
                    checks.push(RuleCheck {
                        rule: "data-bus",
                        prio: 13,
                        required: t + (rh.last_data_end - start),
                    });
                }
                if cmd.source == CmdSource::Host {
                    if let Some((end, last_rank)) = ext[ch as usize] {
                        let need = if last_rank != rk { end + params.t_rtrs } else { end };
                        if start < need {
                            checks.push(RuleCheck {
                                rule: if last_rank != rk { "tRTRS" } else { "data-bus" },
                                prio: if last_rank != rk { 14 } else { 13 },
                                required: t + (need - start),
                            });
                        }
                    }
                }
            }
        }

        if let Some(reason) = illegal {
            out.push(Violation {
                index,
                cmd: *cmd,
                rule: format!("illegal({reason})"),
                deficit: 0,
            });
        } else {
            let mut worst: Option<&RuleCheck> = None;
            for c in checks.iter().filter(|c| c.required > t) {
                let better = match worst {
                    None => true,
                    Some(w) => {
                        let (cd, wd) = (c.required - t, w.required - t);
                        cd > wd || (cd == wd && c.prio < w.prio)
                    }
                };
                if better {
                    worst = Some(c);
                }
            }
            if let Some(w) = worst {
                out.push(Violation {
                    index,
                    cmd: *cmd,
                    rule: w.rule.to_string(),
                    deficit: w.required - t,
                });
            }
        }

        // Record effects (best effort even after a violation).
        let bh = &mut banks[bank_idx(ch, rk, b)];
        match cmd.kind {
            CommandKind::Act => {
                bh.open_row = Some(cmd.target.row);
                bh.last_act = t;
                let rh = &mut ranks[rank_idx(ch, rk)];
                rh.acts.push(t);
                rh.last_act_any = t;
                rh.last_act_group[g] = t;
            }
            CommandKind::Pre => {
                bh.open_row = None;
                bh.last_precharge = t;
            }
            CommandKind::PreA => {
                for bb in 0..geom.banks as u8 {
                    let h = &mut banks[bank_idx(ch, rk, bb)];
                    h.open_row = None;
                    h.last_precharge = t;
                }
            }
            CommandKind::Rd | CommandKind::Wr => {
                if cmd.kind == CommandKind::Rd {
                    bh.last_rd = t;
                } else {
                    bh.last_wr = t;
                }
                let rh = &mut ranks[rank_idx(ch, rk)];
                rh.last_col_any = t;
                rh.last_col_group[g] = t;
                if cmd.kind == CommandKind::Wr {
                    rh.last_wr_issue_any = t;
                    rh.last_wr_issue_group[g] = t;
                }
                let (_, end) = data_window(cmd.kind, t, params);
                rh.last_data_end = rh.last_data_end.max(end);
                if cmd.source == CmdSource::Host {
                    ext[ch as usize] = Some((end, rk));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::DramAddress;

    fn geom() -> AuditGeometry {
        AuditGeometry {
            channels: 1,
            ranks: 2,
            banks: 16,
            bank_groups: 2,
        }
    }

    fn cmd(kind: CommandKind, bank: u8, row: u32, at: Cycle) -> DramCommand {
        DramCommand::new(
            kind,
            CmdSource::Host,
            DramAddress {
                channel: 0,
                rank: 0,
                bank,
                row,
                column: 0,
            },
            at,
        )
    }

    #[test]
    fn empty_log_is_clean() {
        assert!(audit_log(&[], &TimingParams::default(), &geom()).is_empty());
    }

    #[test]
    fn trc_deficit_of_one() {
        // ACT, legal PRE, then a second ACT one cycle too early: both tRC
        // and tRP are short by 1; tRC wins the tie.
        let log = vec![
            cmd(CommandKind::Act, 0, 1, 100),
            cmd(CommandKind::Pre, 0, 0, 139),
            cmd(CommandKind::Act, 0, 2, 154),
        ];
        let v = audit_log(&log, &TimingParams::default(), &geom());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "tRC");
        assert_eq!(v[0].deficit, 1);
        assert_eq!(v[0].index, 2);
    }

    #[test]
    fn clean_reopen_passes() {
        let log = vec![
            cmd(CommandKind::Act, 0, 1, 100),
            cmd(CommandKind::Pre, 0, 0, 139),
            cmd(CommandKind::Act, 0, 2, 155),
        ];
        assert!(audit_log(&log, &TimingParams::default(), &geom()).is_empty());
    }

    #[test]
    fn structural_errors_reported() {
        let log = vec![cmd(CommandKind::Pre, 3, 0, 5)];
        let v = audit_log(&log, &TimingParams::default(), &geom());
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.starts_with("illegal"));
    }
}

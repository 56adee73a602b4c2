//! DDR4 timing parameters in DRAM command-clock cycles (1.2 GHz).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[allow(missing_docs)]
pub struct TimingParams {
    pub t_bl: u64,
    pub t_ccds: u64,
    pub t_ccdl: u64,
    pub t_rtrs: u64,
    pub t_cl: u64,
    pub t_rcd: u64,
    pub t_rp: u64,
    pub t_cwl: u64,
    pub t_ras: u64,
    pub t_rc: u64,
    pub t_rtp: u64,
    pub t_wtrs: u64,
    pub t_wtrl: u64,
    pub t_wr: u64,
    pub t_rrds: u64,
    pub t_rrdl: u64,
    pub t_faw: u64,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            t_bl: 4,
            t_ccds: 4,
            t_ccdl: 6,
            t_rtrs: 2,
            t_cl: 16,
            t_rcd: 16,
            t_rp: 16,
            t_cwl: 12,
            t_ras: 39,
            t_rc: 55,
            t_rtp: 9,
            t_wtrs: 3,
            t_wtrl: 9,
            t_wr: 18,
            t_rrds: 4,
            t_rrdl: 6,
            t_faw: 26,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("t_bl", self.t_bl),
            ("t_ccds", self.t_ccds),
            ("t_ccdl", self.t_ccdl),
            ("t_rtrs", self.t_rtrs),
            ("t_cl", self.t_cl),
            ("t_rcd", self.t_rcd),
            ("t_rp", self.t_rp),
            ("t_cwl", self.t_cwl),
            ("t_ras", self.t_ras),
            ("t_rc", self.t_rc),
            ("t_rtp", self.t_rtp),
            ("t_wtrs", self.t_wtrs),
            ("t_wtrl", self.t_wtrl),
            ("t_wr", self.t_wr),
            ("t_rrds", self.t_rrds),
            ("t_rrdl", self.t_rrdl),
            ("t_faw", self.t_faw),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(format!("{name} must be strictly positive"));
            }
        }
        if self.t_rc < self.t_ras + self.t_rp {
            return Err(format!(
                "t_rc ({}) must be >= t_ras + t_rp ({})",
                self.t_rc,
                self.t_ras + self.t_rp
            ));
        }
        Ok(())
    }

    pub fn set_key(&mut self, key: &str, value: u64) -> Result<(), String> {
        match key {
            "tbl" => self.t_bl = value,
            "tccds" => self.t_ccds = value,
            "tccdl" => self.t_ccdl = value,
            "trtrs" => self.t_rtrs = value,
            "tcl" => self.t_cl = value,
            "trcd" => self.t_rcd = value,
            "trp" => self.t_rp = value,
            "tcwl" => self.t_cwl = value,
            "tras" => self.t_ras = value,
            "trc" => self.t_rc = value,
            "trtp" => self.t_rtp = value,
            "twtrs" => self.t_wtrs = value,
            "twtrl" => self.t_wtrl = value,
            "twr" => self.t_wr = value,
            "trrds" => self.t_rrds = value,
            "trrdl" => self.t_rrdl = value,
            "tfaw" => self.t_faw = value,
            other => return Err(format!("unknown timing key {other}")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let t = TimingParams::default();
        t.validate().unwrap();
        assert_eq!(t.t_rc, 55);
        assert_eq!(t.t_faw, 26);
    }

    #[test]
    fn rejects_inconsistent_row_cycle() {
        let t = TimingParams {
            t_rc: 40,
            ..Default::default()
        };
        assert!(t.validate().is_err());
    }
}

//! Simulation configuration: geometry, timing, mapping, scheduler and NDA
//! policy knobs, workload selection, and the flat key=value text format
//! with include support. Every DRAM timing and energy constant is a named
//! key whose default is the reference part's value.

use crate::addressing::{MapError, MapMode, MappingConfig};
use crate::dram::TimingParams;
use crate::host::SchedulerKnobs;
use crate::sim::energy::EnergyParams;
use crate::workloads::kernels::KernelSpec;
use crate::workloads::svrg::SvrgConfig;
use crate::workloads::traffic::TrafficProfile;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config key {key}: {reason}")]
    Field { key: String, reason: String },
    #[error("unknown config key {0}")]
    UnknownKey(String),
    #[error("include not found: {0}")]
    Include(String),
    #[error("invalid mapping: {0}")]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GeometryParams {
    pub channels: u32,
    pub ranks: u32,
    pub banks: u32,
    pub bank_groups: u32,
    pub rows: u32,
    pub columns: u32,
    pub chips: u32,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            channels: 2,
            ranks: 2,
            banks: 16,
            bank_groups: 2,
            rows: 8192,
            columns: 128,
            chips: 8,
        }
    }
}

impl GeometryParams {
    pub fn total_ranks(&self) -> u32 {
        self.channels * self.ranks
    }
}

/// NDA-side policy knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct NdaPolicy {
    /// Bernoulli write-issue probability; `None` disables the gate.
    pub stochastic_p: Option<f64>,
    /// Next-rank prediction signal stalls NDA writes.
    pub hint_enabled: bool,
    /// Bank partitioning (reserved banks + swap mapping).
    pub partitioned: bool,
    /// Dedicated-rank baseline: this many ranks per channel belong to the
    /// NDAs exclusively; the host never touches them.
    pub rank_partition: Option<u32>,
}

impl Default for NdaPolicy {
    fn default() -> Self {
        NdaPolicy {
            stochastic_p: None,
            hint_enabled: false,
            partitioned: false,
            rank_partition: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum HostLoad {
    #[default]
    None,
    Traffic(TrafficProfile),
    /// Inline trace records (cycle, R/W, paddr), usually loaded from file.
    Trace(Vec<crate::workloads::traffic::TraceRecord>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum NdaLoad {
    #[default]
    None,
    Kernel(KernelSpec),
    Svrg(SvrgConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub geometry: GeometryParams,
    pub timing: TimingParams,
    /// None: derive the documented default mapping from the geometry.
    pub mapping: Option<MappingConfig>,
    pub reserved_banks: u32,
    pub scheduler: SchedulerKnobs,
    pub policy: NdaPolicy,
    pub host_load: HostLoad,
    pub nda_load: NdaLoad,
    pub cycles: u64,
    pub seed: u64,
    pub energy: EnergyParams,
    /// Keep the full command log in memory (needed for audits and dumps).
    pub log_commands: bool,
    /// Run the replica equivalence checker online.
    pub replica_check: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            geometry: GeometryParams::default(),
            timing: TimingParams::default(),
            mapping: None,
            reserved_banks: 1,
            scheduler: SchedulerKnobs::default(),
            policy: NdaPolicy::default(),
            host_load: HostLoad::None,
            nda_load: NdaLoad::None,
            cycles: 100_000,
            seed: 1,
            energy: EnergyParams::default(),
            log_commands: true,
            replica_check: true,
        }
    }
}

impl SimConfig {
    /// Builds the effective mapping: the explicit one if set, otherwise the
    /// documented default for the geometry, in the mode the policy asks for.
    pub fn effective_mapping(&self) -> Result<MappingConfig, MapError> {
        let mode = if self.policy.partitioned {
            MapMode::Partitioned
        } else {
            MapMode::Baseline
        };
        match &self.mapping {
            Some(m) => {
                let mut m = m.clone();
                m.mode = mode;
                m.validate()?;
                Ok(m)
            }
            None => MappingConfig::default_for(
                self.geometry.channels,
                self.geometry.ranks,
                self.geometry.banks,
                self.geometry.bank_groups,
                self.geometry.rows,
                self.geometry.columns,
                self.reserved_banks,
                mode,
            ),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.timing.validate().map_err(|reason| ConfigError::Field {
            key: "timing".into(),
            reason,
        })?;
        self.energy.validate().map_err(|reason| ConfigError::Field {
            key: "energy".into(),
            reason,
        })?;
        if let Some(p) = self.policy.stochastic_p {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Field {
                    key: "nda.stochastic_p".into(),
                    reason: "must be in [0,1]".into(),
                });
            }
        }
        if let Some(k) = self.policy.rank_partition {
            if k == 0 || k >= self.geometry.ranks {
                return Err(ConfigError::Field {
                    key: "nda.rank_partition".into(),
                    reason: format!("must be in 1..{}", self.geometry.ranks),
                });
            }
        }
        if let HostLoad::Traffic(p) = &self.host_load {
            p.validate().map_err(|reason| ConfigError::Field {
                key: "traffic".into(),
                reason,
            })?;
        }
        let map = self.effective_mapping()?;
        if map.channels != self.geometry.channels
            || map.ranks != self.geometry.ranks
            || map.banks != self.geometry.banks
            || map.rows != self.geometry.rows
            || map.columns != self.geometry.columns
        {
            return Err(ConfigError::Field {
                key: "map".into(),
                reason: "mapping dimensions disagree with geometry".into(),
            });
        }
        Ok(())
    }

    /// Applies one `key = value` pair from the flat text format.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let field_err = |key: &str, reason: String| ConfigError::Field {
            key: key.to_string(),
            reason,
        };
        let parse_u64 =
            |key: &str, v: &str| v.parse::<u64>().map_err(|e| field_err(key, e.to_string()));
        let parse_u32 =
            |key: &str, v: &str| v.parse::<u32>().map_err(|e| field_err(key, e.to_string()));
        let parse_f64 =
            |key: &str, v: &str| v.parse::<f64>().map_err(|e| field_err(key, e.to_string()));
        let parse_bool = |key: &str, v: &str| match v {
            "true" | "1" | "on" => Ok(true),
            "false" | "0" | "off" => Ok(false),
            other => Err(field_err(key, format!("bad bool {other}"))),
        };
        match key {
            "cycles" => self.cycles = parse_u64(key, v)?,
            "seed" => self.seed = parse_u64(key, v)?,
            "log_commands" => self.log_commands = parse_bool(key, v)?,
            "replica_check" => self.replica_check = parse_bool(key, v)?,
            "geometry.channels" => self.geometry.channels = parse_u32(key, v)?,
            "geometry.ranks" => self.geometry.ranks = parse_u32(key, v)?,
            "geometry.banks" => self.geometry.banks = parse_u32(key, v)?,
            "geometry.bank_groups" => self.geometry.bank_groups = parse_u32(key, v)?,
            "geometry.rows" => self.geometry.rows = parse_u32(key, v)?,
            "geometry.columns" => self.geometry.columns = parse_u32(key, v)?,
            "geometry.chips" => self.geometry.chips = parse_u32(key, v)?,
            "reserved_banks" => self.reserved_banks = parse_u32(key, v)?,
            "sched.read_queue" => self.scheduler.read_queue_cap = parse_u64(key, v)? as usize,
            "sched.write_queue" => self.scheduler.write_queue_cap = parse_u64(key, v)? as usize,
            "sched.drain_high" => self.scheduler.drain_high = parse_u64(key, v)? as usize,
            "sched.drain_low" => self.scheduler.drain_low = parse_u64(key, v)? as usize,
            "sched.starvation_cap" => self.scheduler.starvation_cap = parse_u64(key, v)?,
            "nda.stochastic_p" => {
                self.policy.stochastic_p = if v == "off" {
                    None
                } else {
                    Some(parse_f64(key, v)?)
                }
            }
            "nda.hint" => self.policy.hint_enabled = parse_bool(key, v)?,
            "nda.partitioned" => self.policy.partitioned = parse_bool(key, v)?,
            "nda.rank_partition" => {
                self.policy.rank_partition = if v == "off" {
                    None
                } else {
                    Some(parse_u32(key, v)?)
                }
            }
            "traffic.preset" => {
                self.host_load = HostLoad::Traffic(match v {
                    "high" => TrafficProfile::high_intensity(),
                    "low" => TrafficProfile::low_intensity(),
                    "default" => TrafficProfile::default(),
                    other => return Err(field_err(key, format!("unknown preset {other}"))),
                });
            }
            _ if key.starts_with("traffic.") => {
                let p = match &mut self.host_load {
                    HostLoad::Traffic(p) => p,
                    _ => {
                        self.host_load = HostLoad::Traffic(TrafficProfile::default());
                        match &mut self.host_load {
                            HostLoad::Traffic(p) => p,
                            _ => unreachable!(),
                        }
                    }
                };
                match key {
                    "traffic.rate" => p.rate = parse_f64(key, v)?,
                    "traffic.read_fraction" => p.read_fraction = parse_f64(key, v)?,
                    "traffic.row_locality" => p.row_locality = parse_f64(key, v)?,
                    "traffic.footprint" => p.footprint_bytes = parse_u64(key, v)?,
                    "traffic.burst_len" => p.burst_len = parse_u32(key, v)?,
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
            }
            _ if key.starts_with("timing.") => {
                let t = key.trim_start_matches("timing.");
                self.timing
                    .set_key(t, parse_u64(key, v)?)
                    .map_err(|reason| field_err(key, reason))?;
            }
            _ if key.starts_with("energy.") => match key {
                "energy.act_nj" => self.energy.act_nj = parse_f64(key, v)?,
                "energy.pe_rw_pj_per_bit" => self.energy.pe_rw_pj_per_bit = parse_f64(key, v)?,
                "energy.host_rw_pj_per_bit" => self.energy.host_rw_pj_per_bit = parse_f64(key, v)?,
                "energy.fma_pj" => self.energy.fma_pj = parse_f64(key, v)?,
                "energy.buffer_pj_per_access" => {
                    self.energy.buffer_pj_per_access = parse_f64(key, v)?
                }
                "energy.buffer_leak_mw" => self.energy.buffer_leak_mw = parse_f64(key, v)?,
                _ => return Err(ConfigError::UnknownKey(key.into())),
            },
            _ if key.starts_with("map.") => {
                if self.mapping.is_none() {
                    self.mapping = Some(self.effective_mapping()?);
                }
                self.mapping
                    .as_mut()
                    .unwrap()
                    .set_key(key.trim_start_matches("map."), v)?;
            }
            _ if key.starts_with("kernel.") || key.starts_with("svrg.") => {
                self.set_workload_key(key, v)?;
            }
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    fn set_workload_key(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        if key.starts_with("kernel.") {
            if !matches!(self.nda_load, NdaLoad::Kernel(_)) {
                self.nda_load = NdaLoad::Kernel(KernelSpec::default());
            }
            if let NdaLoad::Kernel(spec) = &mut self.nda_load {
                spec.set_key(key.trim_start_matches("kernel."), v)
                    .map_err(|reason| ConfigError::Field {
                        key: key.into(),
                        reason,
                    })?;
            }
        } else {
            if !matches!(self.nda_load, NdaLoad::Svrg(_)) {
                self.nda_load = NdaLoad::Svrg(SvrgConfig::default());
            }
            if let NdaLoad::Svrg(cfg) = &mut self.nda_load {
                cfg.set_key(key.trim_start_matches("svrg."), v)
                    .map_err(|reason| ConfigError::Field {
                        key: key.into(),
                        reason,
                    })?;
            }
        }
        Ok(())
    }

    /// Parses flat `key = value` text. `include <path>` splices another
    /// file relative to `base_dir`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, base_dir: &std::path::Path) -> Result<(), ConfigError> {
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(path) = line.strip_prefix("include ") {
                let full = base_dir.join(path.trim());
                let nested = std::fs::read_to_string(&full)
                    .map_err(|_| ConfigError::Include(full.display().to_string()))?;
                let nested_dir = full.parent().unwrap_or(base_dir).to_path_buf();
                self.apply_text(&nested, &nested_dir)?;
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::UnknownKey(line.to_string()))?;
            self.set_key(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &std::path::Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| ConfigError::Include(path.display().to_string()))?;
        let mut cfg = SimConfig::default();
        let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
        cfg.apply_text(&text, dir)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_part() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.timing.t_rc, 55);
        assert_eq!(cfg.geometry.channels, 2);
        assert_eq!(cfg.geometry.ranks, 2);
        assert_eq!(cfg.scheduler.read_queue_cap, 32);
        assert!((cfg.energy.act_nj - 1.0).abs() < 1e-12);
        cfg.validate().unwrap();
    }

    #[test]
    fn kv_text_parses_and_diagnoses() {
        let mut cfg = SimConfig::default();
        cfg.apply_text(
            "cycles = 5000\ntiming.trcd = 18 # longer part\nnda.stochastic_p = 0.25\ntraffic.rate = 0.5\n",
            std::path::Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.cycles, 5000);
        assert_eq!(cfg.timing.t_rcd, 18);
        assert_eq!(cfg.policy.stochastic_p, Some(0.25));
        let err = cfg.set_key("nda.stochastic_p", "1.5");
        assert!(err.is_ok());
        assert!(cfg.validate().is_err());
        let unknown = cfg.set_key("bogus.key", "1");
        assert!(matches!(unknown, Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn include_splices_files() {
        let dir = std::env::temp_dir().join(format!("ndasim-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("base.cfg"), "cycles = 777\n").unwrap();
        std::fs::write(dir.join("top.cfg"), "include base.cfg\nseed = 9\n").unwrap();
        let cfg = SimConfig::from_file(&dir.join("top.cfg")).unwrap();
        assert_eq!(cfg.cycles, 777);
        assert_eq!(cfg.seed, 9);
    }
}

//! Parameter sweeps: independent simulations with no shared mutable
//! state. With the `parallel` feature they fan out over a rayon pool; the
//! sequential path always exists and produces identical results.

use super::config::SimConfig;
use super::stats::StatsReport;
use super::Simulator;

/// Runs every configuration, preserving input order.
#[cfg(feature = "parallel")]
pub fn run_batch(configs: Vec<SimConfig>) -> Vec<StatsReport> {
    use rayon::prelude::*;
    configs
        .into_par_iter()
        .map(|cfg| Simulator::run_config(cfg).expect("config validated"))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(configs: Vec<SimConfig>) -> Vec<StatsReport> {
    run_batch_sequential(configs)
}

/// Sequential reference path, also the benchmark baseline.
pub fn run_batch_sequential(configs: Vec<SimConfig>) -> Vec<StatsReport> {
    configs
        .into_iter()
        .map(|cfg| Simulator::run_config(cfg).expect("config validated"))
        .collect()
}

/// Cartesian expansion of `--set key=v1,v2` style axes over a base config.
pub fn expand_grid(
    base: &SimConfig,
    axes: &[(String, Vec<String>)],
) -> Result<Vec<(String, SimConfig)>, super::config::ConfigError> {
    let mut out: Vec<(String, SimConfig)> = vec![(String::new(), base.clone())];
    for (key, values) in axes {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for (name, cfg) in &out {
            for v in values {
                let mut c = cfg.clone();
                c.set_key(key, v)?;
                let tag = if name.is_empty() {
                    format!("{key}={v}")
                } else {
                    format!("{name},{key}={v}")
                };
                next.push((tag, c));
            }
        }
        out = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expansion_is_cartesian() {
        let base = SimConfig {
            cycles: 10,
            ..Default::default()
        };
        let axes = vec![
            ("seed".to_string(), vec!["1".into(), "2".into()]),
            ("cycles".to_string(), vec!["10".into(), "20".into(), "30".into()]),
        ];
        let grid = expand_grid(&base, &axes).unwrap();
        assert_eq!(grid.len(), 6);
        assert!(grid.iter().any(|(n, c)| n == "seed=2,cycles=30" && c.cycles == 30));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mk = |seed| SimConfig {
            cycles: 2_000,
            seed,
            host_load: crate::sim::config::HostLoad::Traffic(
                crate::workloads::traffic::TrafficProfile::default(),
            ),
            ..Default::default()
        };
        let configs: Vec<SimConfig> = (1..5).map(mk).collect();
        let a = run_batch(configs.clone());
        let b = run_batch_sequential(configs);
        assert_eq!(a, b);
    }
}

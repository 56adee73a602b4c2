//! Paired-run experiment tables.

use super::stats::StatsReport;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("baseline {0} not among the reports")]
    MissingBaseline(String),
    #[error("mismatched pairing: {0}")]
    MismatchedPairing(String),
}

/// Emits CSV rows per configuration with bandwidth/latency/energy columns
/// and ratios against a named baseline. All runs must share the seed
/// (paired-seed comparisons).
pub fn compare_runs(
    reports: &[(String, StatsReport)],
    baseline: &str,
) -> Result<String, CompareError> {
    let base = reports
        .iter()
        .find(|(n, _)| n == baseline)
        .map(|(_, r)| r)
        .ok_or_else(|| CompareError::MissingBaseline(baseline.to_string()))?;
    for (name, r) in reports {
        if r.seed != base.seed {
            return Err(CompareError::MismatchedPairing(format!(
                "{name} has seed {} but baseline has {}",
                r.seed, base.seed
            )));
        }
    }
    let mut csv = String::from(
        "name,cycles,host_bytes_per_cycle,nda_bytes_per_cycle,avg_read_latency,\
         served_reads_per_kcyc,turnarounds,energy_nj,host_ratio,nda_ratio,latency_ratio,energy_ratio\n",
    );
    // Identical zero metrics compare as unity (a run against itself).
    let ratio = |a: f64, b: f64| {
        if b == 0.0 {
            if a == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            a / b
        }
    };
    let base_host = base.host_bytes() as f64 / base.cycles.max(1) as f64;
    let base_nda = base.nda_throughput_bytes_per_cycle();
    let base_lat = base.avg_read_latency();
    let base_energy = base.energy.total_nj;
    for (name, r) in reports {
        let host = r.host_bytes() as f64 / r.cycles.max(1) as f64;
        let nda = r.nda_throughput_bytes_per_cycle();
        let lat = r.avg_read_latency();
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.3},{:.3},{},{:.3},{:.6},{:.6},{:.6},{:.6}\n",
            name,
            r.cycles,
            host,
            nda,
            lat,
            r.served_reads_per_kilocycle(),
            r.ranks.iter().map(|x| x.turnarounds).sum::<u64>(),
            r.energy.total_nj,
            ratio(host, base_host),
            ratio(nda, base_nda),
            ratio(lat, base_lat),
            ratio(r.energy.total_nj, base_energy),
        ));
    }
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::SimConfig;
    use crate::sim::Simulator;

    #[test]
    fn self_comparison_is_unity() {
        let cfg = SimConfig {
            cycles: 1_000,
            host_load: crate::sim::config::HostLoad::Traffic(Default::default()),
            ..Default::default()
        };
        let r = Simulator::run_config(cfg).unwrap();
        let rows = compare_runs(
            &[("a".into(), r.clone()), ("b".into(), r)],
            "a",
        )
        .unwrap();
        let last = rows.lines().last().unwrap();
        let cols: Vec<&str> = last.split(',').collect();
        for ratio in &cols[cols.len() - 4..] {
            let v: f64 = ratio.parse().unwrap();
            assert!((v - 1.0).abs() < 1e-9, "{rows}");
        }
    }

    #[test]
    fn mismatched_seed_rejected() {
        let mk = |seed| {
            Simulator::run_config(SimConfig {
                cycles: 200,
                seed,
                ..Default::default()
            })
            .unwrap()
        };
        let err = compare_runs(&[("a".into(), mk(1)), ("b".into(), mk(2))], "a");
        assert_eq!(
            err,
            Err(CompareError::MismatchedPairing(
                "b has seed 2 but baseline has 1".into()
            ))
        );
    }
}

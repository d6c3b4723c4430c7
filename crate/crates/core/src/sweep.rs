//! Parallel batches of independent runs.

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Protocol};
use crate::experiment::{execute, Report};
use crate::sim::MS;

pub struct SweepResult {
    pub reports: Vec<Report>,
    /// Derived tables appended to the summary.
    pub extra: Option<String>,
}

/// Runs every config concurrently; results keep the input order.
pub fn run_all(configs: &[ExperimentConfig]) -> Vec<Report> {
    configs.par_iter().map(execute).collect()
}

/// Doubles the client count from 4 until throughput gains fall under 5% or
/// p99 latency passes 500 ms; returns the plateau run.
pub fn max_throughput(base: &ExperimentConfig) -> Report {
    let mut cfg = base.clone();
    cfg.workload.clients = 4;
    let mut best = execute(&cfg);
    loop {
        cfg.workload.clients *= 2;
        let next = execute(&cfg);
        let gain = next.summary.throughput_ops_s / best.summary.throughput_ops_s.max(1e-9);
        let overloaded = next.summary.p99_latency_us.is_some_and(|p| p > 500 * MS);
        if gain < 1.05 || overloaded {
            if gain > 1.0 && !overloaded {
                best = next;
            }
            return best;
        }
        best = next;
    }
}

pub fn max_throughput_all(configs: &[ExperimentConfig]) -> Vec<Report> {
    configs.par_iter().map(max_throughput).collect()
}

fn set_var(cfg: &mut ExperimentConfig, var: &str, value: &str) -> Result<(), String> {
    let num = || value.parse::<f64>().map_err(|_| format!("--values: `{value}` is not a number"));
    match var {
        "contention" => {
            let c = num()?;
            cfg.workload.contention = if c > 1.0 { c / 100.0 } else { c };
        }
        "nodes" => {
            cfg.nodes = num()? as usize;
            cfg.workload.clients = 2 * cfg.nodes as u32;
        }
        "deployment" => match value {
            "single" => crate::presets::single_region(cfg),
            "multi" => crate::presets::multi_region(cfg),
            _ => return Err(format!("--values: deployment must be single or multi, got `{value}`")),
        },
        _ => return Err(format!("--var: unknown variable `{var}` (contention, nodes, deployment)")),
    }
    Ok(())
}

/// Cross product of `values` and `protocols` over `base`; run `i` gets seed
/// `seed + i`.
pub fn var_sweep(
    base: &ExperimentConfig,
    var: &str,
    values: &[String],
    protocols: &[String],
    seed: Option<u64>,
) -> Result<SweepResult, String> {
    let protocols: Vec<Protocol> = if protocols.is_empty() {
        vec![base.protocol]
    } else {
        protocols.iter().map(|p| p.parse()).collect::<Result<_, _>>()?
    };
    let seed = seed.unwrap_or(base.seed);
    let mut configs = Vec::new();
    for v in values {
        for p in &protocols {
            let mut cfg = base.clone();
            cfg.protocol = *p;
            set_var(&mut cfg, var, v)?;
            cfg.seed = seed + configs.len() as u64;
            cfg.validate().map_err(|(k, m)| format!("key `{k}`: {m}"))?;
            configs.push(cfg);
        }
    }
    Ok(SweepResult { reports: run_all(&configs), extra: None })
}

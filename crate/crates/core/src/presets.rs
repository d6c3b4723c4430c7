//! Built-in experiment presets.
//!
//! Every preset runs 60 simulated seconds after a 10 s warm-up with 1 s
//! intervals unless noted. Paired presets (`geo-skewed`, `fluctuating`) give
//! both arms the same seed.

use std::fmt::Write as _;

use crate::config::{ExperimentConfig, NetworkConfig, Protocol};
use crate::experiment::Report;
use crate::lock::Ring;
use crate::sim::{Fault, NodeId, MS, SEC};
use crate::sweep::{max_throughput_all, run_all, SweepResult};
use crate::workload::{WorkloadSpec, HOT};

pub const BASE_PROTOCOLS: [Protocol; 4] = [Protocol::Clm, Protocol::Pdl, Protocol::Ldl, Protocol::Hl];

pub const NAMES: [&str; 7] = ["fig1", "fig2", "table1", "table2", "geo-skewed", "fluctuating", "mixed-resource"];

pub fn fig1_base() -> ExperimentConfig {
    ExperimentConfig {
        experiment: "fig1".into(),
        seed: 1,
        protocol: Protocol::Clm,
        nodes: 16,
        network: NetworkConfig::default(),
        workload: WorkloadSpec { resources: 100, clients: 32, ..WorkloadSpec::default() },
        lease: Default::default(),
        quorum: Default::default(),
        optimizations: Default::default(),
        faults: Vec::new(),
        service_us: 20,
        durable_write_us: 2_000,
        client_nodes: Vec::new(),
        adversarial_clocks: true,
    }
}

/// All nodes in one region.
pub fn single_region(cfg: &mut ExperimentConfig) {
    cfg.network = NetworkConfig { assignment: Vec::new(), ..NetworkConfig::default() };
}

/// Three regions 80 to 140 ms apart.
pub fn multi_region(cfg: &mut ExperimentConfig) {
    cfg.network = NetworkConfig {
        regions: vec!["us-east".into(), "eu-west".into(), "ap-south".into()],
        rtt_ms: vec![vec![1.0, 80.0, 140.0], vec![80.0, 1.0, 120.0], vec![140.0, 120.0, 1.0]],
        assignment: Vec::new(),
        jitter: 0.1,
        skew_ms: 50.0,
    };
}

fn named(name: &str) -> ExperimentConfig {
    ExperimentConfig { experiment: name.into(), ..fig1_base() }
}

fn numbered(mut v: Vec<ExperimentConfig>) -> Vec<ExperimentConfig> {
    for (i, c) in v.iter_mut().enumerate() {
        c.seed = 1 + i as u64;
    }
    v
}

pub fn fig1() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for c in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        for p in BASE_PROTOCOLS {
            let mut cfg = named("fig1");
            cfg.protocol = p;
            cfg.workload.contention = c;
            out.push(cfg);
        }
    }
    numbered(out)
}

pub const SIZES: [usize; 4] = [8, 16, 32, 64];

/// Base configs for the plateau search at 40% contention; the search picks
/// the client count.
pub fn fig2() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for n in SIZES {
        for p in BASE_PROTOCOLS {
            let mut cfg = named("fig2");
            cfg.protocol = p;
            cfg.nodes = n;
            cfg.workload.contention = 0.4;
            out.push(cfg);
        }
    }
    numbered(out)
}

/// 40% contention, two clients per node.
pub fn table1() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for n in SIZES {
        for p in BASE_PROTOCOLS {
            let mut cfg = named("table1");
            cfg.protocol = p;
            cfg.nodes = n;
            cfg.workload.contention = 0.4;
            cfg.workload.clients = 2 * n as u32;
            out.push(cfg);
        }
    }
    numbered(out)
}

/// Region-affine workload (every uniform draw stays in the client's home
/// pool) deployed in one region and then across three. The 1 s lease keeps
/// the validity window well above the widest one-way delay.
pub fn table2() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for multi in [false, true] {
        for p in BASE_PROTOCOLS {
            let mut cfg = named("table2");
            cfg.protocol = p;
            cfg.workload.locality = 1.0;
            cfg.lease.lease_ms = 1_000.0;
            if multi {
                multi_region(&mut cfg);
            }
            out.push(cfg);
        }
    }
    numbered(out)
}

/// LDL across three regions with 90% home-pool accesses; placement off, then
/// on.
pub fn geo_skewed() -> Vec<ExperimentConfig> {
    [false, true]
        .into_iter()
        .map(|on| {
            let mut cfg = named("geo-skewed");
            cfg.protocol = Protocol::Ldl;
            multi_region(&mut cfg);
            cfg.workload.locality = 0.9;
            cfg.lease.lease_ms = 1_000.0;
            cfg.optimizations.locality = on;
            cfg
        })
        .collect()
}

/// Contention alternating between 10% and 80% every 10 s while one node at
/// a time is cut off for 300 ms, a new one every second. Releases sent from
/// the cut-off node are lost, so its leases must run out. The hot resource's
/// manager is never cut off. Fixed leases run at 2 s; the adaptive arm starts
/// from the same base and may only shorten it.
pub fn fluctuating() -> Vec<ExperimentConfig> {
    let nodes = 16u32;
    let ring = Ring::new(&(0..nodes).map(NodeId).collect::<Vec<_>>());
    let hot_mgr = ring.route(HOT).expect("non-empty ring").0;
    let victims: Vec<u32> = (0..nodes).filter(|n| *n != hot_mgr).collect();
    let mut faults = Vec::new();
    for k in 0..59u64 {
        let node = victims[k as usize % victims.len()];
        let at = (k + 1) * SEC;
        faults.push(Fault::Partition { side: vec![node], start_us: at, end_us: at + 300 * MS });
    }
    [false, true]
        .into_iter()
        .map(|on| {
            let mut cfg = named("fluctuating");
            cfg.protocol = Protocol::Ldl;
            cfg.nodes = nodes as usize;
            cfg.lease.lease_ms = 2_000.0;
            cfg.workload.contention = 0.1;
            cfg.workload.fluctuation = (0..6).map(|i| (10.0 * i as f64, if i % 2 == 0 { 0.1 } else { 0.8 })).collect();
            cfg.optimizations.adaptive_lease = on;
            cfg.optimizations.lease.t_max_us = 2 * SEC;
            cfg.faults = faults.clone();
            cfg
        })
        .collect()
}

/// 60% contention with ten replication-critical resources; the four base
/// protocols and the hybrid on the same workload.
pub fn mixed_resource() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for p in BASE_PROTOCOLS.into_iter().chain([Protocol::Hybrid]) {
        let mut cfg = named("mixed-resource");
        cfg.protocol = p;
        cfg.workload.contention = 0.6;
        cfg.optimizations.critical_resources = (1..=10).collect();
        cfg.optimizations.epoch_us = 2 * SEC;
        out.push(cfg);
    }
    numbered(out)
}

fn find<'a>(reports: &'a [Report], p: Protocol, f: impl Fn(&Report) -> bool) -> Option<&'a Report> {
    reports.iter().find(|r| r.protocol == p && f(r))
}

fn mean_ms(r: &Report) -> f64 {
    r.summary.mean_latency_ms().unwrap_or(f64::NAN)
}

fn p99_ms(r: &Report) -> f64 {
    r.summary.p99_latency_ms().unwrap_or(f64::NAN)
}

fn fig2_extra(reports: &[Report]) -> String {
    let mut s = String::from("\nmax throughput (ops/s) at c=0.4\nprotocol");
    for n in SIZES {
        let _ = write!(s, ",n={n}");
    }
    for p in BASE_PROTOCOLS {
        let _ = write!(s, "\n{}", p.label());
        for n in SIZES {
            let r = find(reports, p, |r| r.nodes == n).expect("fig2 cell");
            let _ = write!(s, ",{:.1} (C={})", r.summary.throughput_ops_s, r.clients);
        }
    }
    s + "\n"
}

fn table1_extra(reports: &[Report]) -> String {
    let mut s = String::from("\nacquire latency (ms) at c=0.4: mean / p99\nprotocol");
    for n in SIZES {
        let _ = write!(s, ",n={n}");
    }
    s += ",mean n=64/n=8";
    for p in BASE_PROTOCOLS {
        let _ = write!(s, "\n{}", p.label());
        for n in SIZES {
            let r = find(reports, p, |r| r.nodes == n).expect("table1 cell");
            let _ = write!(s, ",{:.2} / {:.2}", mean_ms(r), p99_ms(r));
        }
        let lo = find(reports, p, |r| r.nodes == 8).map(mean_ms).unwrap_or(f64::NAN);
        let hi = find(reports, p, |r| r.nodes == 64).map(mean_ms).unwrap_or(f64::NAN);
        let _ = write!(s, ",x{:.2}", hi / lo);
    }
    s + "\n"
}

/// Multi-region mean latency increase over single-region, in percent.
pub fn table2_increase(reports: &[Report], p: Protocol) -> Option<f64> {
    let single = find(reports, p, |r| r.regions == 1)?;
    let multi = find(reports, p, |r| r.regions > 1)?;
    Some((mean_ms(multi) / mean_ms(single) - 1.0) * 100.0)
}

fn table2_extra(reports: &[Report]) -> String {
    let mut s = String::from("\nmean acquire latency (ms)\nprotocol,single-region,multi-region,increase");
    for p in BASE_PROTOCOLS {
        let single = find(reports, p, |r| r.regions == 1).map(mean_ms).unwrap_or(f64::NAN);
        let multi = find(reports, p, |r| r.regions > 1).map(mean_ms).unwrap_or(f64::NAN);
        let inc = table2_increase(reports, p).unwrap_or(f64::NAN);
        let _ = write!(s, "\n{},{single:.2},{multi:.2},{inc:+.1}%", p.label());
    }
    s + "\n"
}

/// `(off, on, change %)` of a paired preset under `metric`.
pub fn paired_change(reports: &[Report], metric: fn(&Report) -> f64) -> (f64, f64, f64) {
    let (off, on) = (metric(&reports[0]), metric(&reports[1]));
    (off, on, (on / off - 1.0) * 100.0)
}

fn paired_extra(title: &str, unit: &str, reports: &[Report], metric: fn(&Report) -> f64) -> String {
    let (off, on, d) = paired_change(reports, metric);
    format!("\n{title}: off {off:.2} {unit}, on {on:.2} {unit}, change {d:+.1}%\n")
}

/// Hybrid throughput over the best of the base protocols, in percent.
pub fn hybrid_gain(reports: &[Report]) -> Option<(Protocol, f64)> {
    let hybrid = find(reports, Protocol::Hybrid, |_| true)?.summary.throughput_ops_s;
    let best = reports
        .iter()
        .filter(|r| r.protocol != Protocol::Hybrid)
        .max_by(|a, b| a.summary.throughput_ops_s.total_cmp(&b.summary.throughput_ops_s))?;
    Some((best.protocol, (hybrid / best.summary.throughput_ops_s - 1.0) * 100.0))
}

fn mixed_extra(reports: &[Report]) -> String {
    match hybrid_gain(reports) {
        Some((p, g)) => format!("\nhybrid throughput vs best single protocol ({}): {g:+.1}%\n", p.label()),
        None => String::new(),
    }
}

/// Configs of a named preset, or `None` if the name is unknown.
pub fn configs(name: &str) -> Option<Vec<ExperimentConfig>> {
    Some(match name {
        "fig1" => fig1(),
        "fig2" => fig2(),
        "table1" => table1(),
        "table2" => table2(),
        "geo-skewed" => geo_skewed(),
        "fluctuating" => fluctuating(),
        "mixed-resource" => mixed_resource(),
        _ => return None,
    })
}

/// Runs a preset. With `seed`, run `i`'s seed becomes `seed + (preset seed - 1)`,
/// so paired runs stay paired.
pub fn run_preset(name: &str, seed: Option<u64>) -> Result<SweepResult, String> {
    let mut cfgs = configs(name).ok_or_else(|| format!("unknown preset `{name}` (one of {})", NAMES.join(", ")))?;
    if let Some(s) = seed {
        for c in &mut cfgs {
            c.seed = s + c.seed - 1;
        }
    }
    let reports = if name == "fig2" { max_throughput_all(&cfgs) } else { run_all(&cfgs) };
    let extra = match name {
        "fig2" => Some(fig2_extra(&reports)),
        "table1" => Some(table1_extra(&reports)),
        "table2" => Some(table2_extra(&reports)),
        "geo-skewed" => Some(paired_extra("locality-aware placement, mean latency", "ms", &reports, mean_ms)),
        "fluctuating" => Some(paired_extra("adaptive lease, throughput", "ops/s", &reports, |r| r.summary.throughput_ops_s)),
        "mixed-resource" => Some(mixed_extra(&reports)),
        _ => None,
    };
    Ok(SweepResult { reports, extra })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in NAMES {
            for cfg in configs(name).unwrap() {
                assert_eq!(cfg.validate(), Ok(()), "{name}");
                assert_eq!(cfg.experiment, name);
            }
        }
        assert!(configs("fig9").is_none());
    }

    #[test]
    fn fig1_is_six_contentions_by_four_protocols() {
        let v = fig1();
        assert_eq!(v.len(), 24);
        let seeds: std::collections::BTreeSet<u64> = v.iter().map(|c| c.seed).collect();
        assert_eq!(seeds.len(), 24);
        assert_eq!(v[23].workload.contention, 1.0);
        assert_eq!(v[23].protocol, Protocol::Hl);
    }

    #[test]
    fn paired_arms_share_a_seed() {
        for v in [geo_skewed(), fluctuating()] {
            assert_eq!(v.len(), 2);
            assert_eq!(v[0].seed, v[1].seed);
            assert_eq!(v[0].faults, v[1].faults);
        }
    }

    #[test]
    fn fluctuating_never_cuts_off_the_hot_manager() {
        let cfg = &fluctuating()[0];
        let ring = Ring::new(&(0..cfg.nodes as u32).map(NodeId).collect::<Vec<_>>());
        let hot = ring.route(HOT).unwrap().0;
        assert!(cfg.faults.iter().all(|f| matches!(f, Fault::Partition { side, .. } if side != &vec![hot])));
    }

    #[test]
    fn table2_increase_is_relative_change() {
        let mut cfgs = table2();
        for c in &mut cfgs {
            c.workload.duration_s = 2.0;
            c.workload.warmup_s = 0.5;
        }
        let reports = run_all(&cfgs);
        let clm: Vec<&Report> = reports.iter().filter(|r| r.protocol == Protocol::Clm).collect();
        let expect = (clm[1].summary.mean_latency_us.unwrap() / clm[0].summary.mean_latency_us.unwrap() - 1.0) * 100.0;
        assert!((table2_increase(&reports, Protocol::Clm).unwrap() - expect).abs() < 1e-9);
        assert!(table2_extra(&reports).contains("CLM,"));
    }
}

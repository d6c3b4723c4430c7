//! Trend and property criteria, one test each. Every test writes a single
//! `criterion N ... PASS|FAIL` line to stderr before asserting.

mod common;

use std::io::Write as _;

use dlsim::config::Protocol;
use dlsim::experiment::{csv, execute, Report};
use dlsim::metrics::percentile;
use dlsim::presets::{self, hybrid_gain, paired_change, table2_increase, BASE_PROTOCOLS};
use dlsim::sim::{Fault, MS};
use dlsim::sweep::run_all;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn verdict(n: u32, name: &str, ok: bool, detail: String) {
    let line = format!("criterion {n} ({name}): {} | {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
}

fn preset(name: &str) -> Vec<Report> {
    presets::run_preset(name, None).expect("preset").reports
}

fn get(reports: &[Report], p: Protocol, f: impl Fn(&Report) -> bool) -> &Report {
    reports.iter().find(|r| r.protocol == p && f(r)).expect("report present")
}

fn thr(r: &Report) -> f64 {
    r.summary.throughput_ops_s
}

fn mean(r: &Report) -> f64 {
    r.summary.mean_latency_us.expect("samples")
}

#[test]
fn criterion_1_contention_trend() {
    let reports = preset("fig1");
    let clm: Vec<f64> = reports.iter().filter(|r| r.protocol == Protocol::Clm).map(thr).collect();
    let decreasing = clm.len() == 6 && clm.windows(2).all(|w| w[1] < w[0]);
    let ratio = thr(get(&reports, Protocol::Ldl, |r| r.contention == 1.0)) / thr(get(&reports, Protocol::Clm, |r| r.contention == 1.0));
    let clm_s: Vec<String> = clm.iter().map(|t| format!("{t:.1}")).collect();
    verdict(
        1,
        "contention trend",
        decreasing && ratio >= 2.0,
        format!("CLM ops/s over c=0..1: [{}]; LDL/CLM at c=1: {ratio:.3} (need >= 2.0)", clm_s.join(", ")),
    );
}

#[test]
fn criterion_2_scalability_trend() {
    let reports = preset("fig2");
    let at = |p, n| thr(get(&reports, p, |r| r.nodes == n));
    let (c8, c64) = (at(Protocol::Clm, 8), at(Protocol::Clm, 64));
    let (l8, l64) = (at(Protocol::Ldl, 8), at(Protocol::Ldl, 64));
    verdict(
        2,
        "scalability trend",
        c64 <= c8 && l64 >= 1.15 * l8,
        format!("CLM max {c8:.1} -> {c64:.1} ops/s (need n=64 <= n=8); LDL max {l8:.1} -> {l64:.1} ops/s, x{:.3} (need >= 1.15)", l64 / l8),
    );
}

#[test]
fn criterion_3_latency_scaling() {
    let reports = preset("table1");
    let factor = |p| mean(get(&reports, p, |r| r.nodes == 64)) / mean(get(&reports, p, |r| r.nodes == 8));
    let (fc, fl) = (factor(Protocol::Clm), factor(Protocol::Ldl));
    let p99 = |p| get(&reports, p, |r| r.nodes == 64).summary.p99_latency_us.expect("samples");
    let (pl, pc) = (p99(Protocol::Ldl), p99(Protocol::Clm));
    verdict(
        3,
        "latency scaling",
        fc >= 2.5 && fl <= 1.8 && pl < pc,
        format!("CLM mean x{fc:.2} (need >= 2.5); LDL mean x{fl:.2} (need <= 1.8); p99 at n=64 LDL {pl} us vs CLM {pc} us (need LDL < CLM)"),
    );
}

#[test]
fn criterion_4_geo_distribution() {
    let reports = preset("table2");
    let inc: Vec<f64> = BASE_PROTOCOLS.iter().map(|p| table2_increase(&reports, *p).expect("pair")).collect();
    let (clm, pdl, ldl, hl) = (inc[0], inc[1], inc[2], inc[3]);
    let ordered = hl < ldl && ldl < pdl && pdl < clm;
    verdict(
        4,
        "geo-distribution",
        ordered && clm >= 250.0 && hl <= 150.0,
        format!(
            "increase CLM {clm:+.1}%, PDL {pdl:+.1}%, LDL {ldl:+.1}%, HL {hl:+.1}% (need HL < LDL < PDL < CLM, CLM >= 250%, HL <= 150%)"
        ),
    );
}

#[test]
fn criterion_5_optimization_gains() {
    let (_, _, geo) = paired_change(&preset("geo-skewed"), mean);
    let (_, _, adaptive) = paired_change(&preset("fluctuating"), thr);
    let (best, hybrid) = hybrid_gain(&preset("mixed-resource")).expect("hybrid run");
    let (a, b, c) = (-geo >= 20.0, adaptive >= 15.0, hybrid >= 10.0);
    verdict(
        5,
        "optimization gains",
        a && b && c,
        format!(
            "(a) placement latency {geo:+.1}% (need <= -20%); (b) adaptive lease throughput {adaptive:+.1}% (need >= +15%); (c) hybrid vs {} {hybrid:+.1}% (need >= +10%)",
            best.label()
        ),
    );
}

#[test]
fn criterion_6_safety_suite() {
    const RUNS: u64 = 1_000;
    let mut parts = Vec::new();
    let mut ok = true;
    for p in BASE_PROTOCOLS.into_iter().chain([Protocol::Hybrid]) {
        let (runs, violations, faults): (u64, usize, usize) = (0..RUNS)
            .into_par_iter()
            .map(|i| {
                let cfg = common::random_faulty(p, 1_000_000 + i);
                let r = execute(&cfg);
                (1, r.verdicts.mutual_exclusion.violations.len(), cfg.faults.len())
            })
            .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        ok &= violations == 0 && runs == RUNS;
        parts.push(format!("{} {runs} runs, {faults} faults, {violations} violations", p.label()));
    }
    verdict(6, "safety suite", ok, parts.join("; "));
}

#[test]
fn criterion_7_quorum_durability() {
    let mut schedules = Vec::new();
    for g in [3usize, 5] {
        for node in 0..g as u32 {
            for step in 1..=13u64 {
                for recover in [false, true] {
                    schedules.push((g, node, step * 100 * MS, recover));
                }
            }
        }
    }
    let failures: Vec<String> = schedules
        .par_iter()
        .enumerate()
        .filter_map(|(i, &(g, node, at, recover))| {
            let mut cfg = presets::fig1_base();
            cfg.experiment = "durability".into();
            cfg.protocol = Protocol::Pdl;
            cfg.seed = 500 + i as u64;
            cfg.nodes = g;
            cfg.quorum.group_size = g;
            cfg.workload.resources = 3;
            cfg.workload.clients = 4;
            cfg.workload.contention = 0.5;
            cfg.workload.duration_s = 1.5;
            cfg.workload.warmup_s = 0.0;
            cfg.faults.push(Fault::Crash { node, at_us: at });
            if recover {
                cfg.faults.push(Fault::Recover { node, at_us: at + 300 * MS });
            }
            let r = execute(&cfg);
            let d = r.verdicts.durability.as_ref().expect("replicated run");
            let ok = d.passed() && d.checked > 0 && r.verdicts.mutual_exclusion.passed();
            (!ok).then(|| format!("g={g} node={node} at={at}us recover={recover}: {} checked, {:?}", d.checked, d.violations.first()))
        })
        .collect();
    verdict(
        7,
        "quorum durability",
        failures.is_empty(),
        format!("{} single-crash schedules over g in {{3,5}}, {} failed{}", schedules.len(), failures.len(), failures.first().map(|f| format!(": {f}")).unwrap_or_default()),
    );
}

#[test]
fn criterion_8_determinism() {
    let mut same = Vec::new();
    for name in ["mixed-resource", "geo-skewed"] {
        let cfgs = presets::configs(name).expect("preset");
        let (a, b) = (csv(&run_all(&cfgs)), csv(&run_all(&cfgs)));
        same.push((name, a == b && a.lines().count() > 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=500);
        let set: Vec<u64> = (0..n).map(|_| rng.gen_range(0..10_000)).collect();
        for pct in [50usize, 90, 99] {
            // Smallest sample covering at least pct% of the set.
            let oracle = set.iter().copied().filter(|v| 100 * set.iter().filter(|x| *x <= v).count() >= pct * n).min();
            if percentile(&set, pct as f64 / 100.0) != oracle {
                mismatches += 1;
            }
        }
    }
    let csv_ok = same.iter().all(|(_, s)| *s);
    let runs: Vec<String> = same.iter().map(|(n, s)| format!("{n} {}", if *s { "identical" } else { "differs" })).collect();
    verdict(
        8,
        "determinism",
        csv_ok && mismatches == 0,
        format!("repeat CSVs: {}; percentile vs sort oracle: {mismatches} mismatches over 100 sets x 3 quantiles", runs.join(", ")),
    );
}

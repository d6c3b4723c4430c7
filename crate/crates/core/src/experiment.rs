//! Runs a configured experiment, checks it and renders its results.

use std::fmt::Write as _;

use serde::Serialize;

use crate::checker::{check_liveness, check_mutual_exclusion, check_quorum_durability, Verdict};
use crate::config::{ExperimentConfig, Protocol};
use crate::metrics::Summary;
use crate::proto::{Hybrid, Pdl};
use crate::run::{run, FaultAvailability, RunOutput};

pub const CSV_HEADER: &str =
    "experiment,protocol,nodes,regions,contention,interval_start_s,throughput_ops_s,avg_latency_ms,p99_latency_ms";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdicts {
    pub mutual_exclusion: Verdict,
    pub liveness: Verdict,
    pub durability: Option<Verdict>,
}

impl Verdicts {
    pub fn passed(&self) -> bool {
        self.mutual_exclusion.passed() && self.liveness.passed() && self.durability.as_ref().is_none_or(Verdict::passed)
    }
}

/// Everything a finished experiment reports.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub protocol: Protocol,
    pub nodes: usize,
    pub regions: usize,
    pub contention: f64,
    pub seed: u64,
    pub clients: u32,
    pub summary: Summary,
    pub verdicts: Verdicts,
    pub messages_sent: u64,
    pub cross_region_messages: u64,
    pub digest: u64,
}

pub fn execute(cfg: &ExperimentConfig) -> Report {
    let (report, _) = execute_full(cfg);
    report
}

/// Runs and checks one experiment, keeping the raw output.
pub fn execute_full(cfg: &ExperimentConfig) -> (Report, RunOutput) {
    let setup = cfg.setup();
    let topo = setup.topology.clone();
    let out = run(setup, cfg.engine(&topo));
    let mutual_exclusion = check_mutual_exclusion(&out.sections);
    let liveness = {
        let avail = FaultAvailability::new(&topo, &cfg.faults, out.engine.as_ref());
        check_liveness(&out.requests, &avail, out.end_us, cfg.liveness_grace_us(&topo))
    };
    let any = out.engine.as_any();
    let pdl = any.downcast_ref::<Pdl>().or_else(|| any.downcast_ref::<Hybrid>().map(|h| &h.quorum));
    let durability = pdl.map(|p| check_quorum_durability(&out.commits, &p.final_logs()));
    let report = Report {
        experiment: cfg.experiment.clone(),
        protocol: cfg.protocol,
        nodes: cfg.nodes,
        regions: cfg.network.regions.len(),
        contention: cfg.workload.contention,
        seed: cfg.seed,
        clients: cfg.workload.clients,
        summary: out.summary.clone(),
        verdicts: Verdicts { mutual_exclusion, liveness, durability },
        messages_sent: out.messages.sent,
        cross_region_messages: out.messages.cross_region,
        digest: out.digest,
    };
    (report, out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

impl Report {
    /// One CSV row per measurement interval.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for iv in &self.summary.intervals {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.3},{},{}",
                self.experiment,
                self.protocol.label(),
                self.nodes,
                self.regions,
                self.contention,
                iv.start_s,
                iv.throughput_ops_s,
                opt(iv.avg_latency_ms),
                opt(iv.p99_latency_ms),
            );
        }
        s
    }

    pub fn summary_line(&self) -> String {
        let s = &self.summary;
        format!(
            "{} {} n={} regions={} c={} clients={}: {:.1} ops/s, mean {} ms, p99 {} ms, retries {}, failures {}; safety {}, liveness {}{}",
            self.experiment,
            self.protocol.label(),
            self.nodes,
            self.regions,
            self.contention,
            self.clients,
            s.throughput_ops_s,
            opt(s.mean_latency_ms()),
            opt(s.p99_latency_ms()),
            s.retries,
            s.failures,
            self.verdicts.mutual_exclusion.label(),
            self.verdicts.liveness.label(),
            self.verdicts.durability.as_ref().map(|d| format!(", durability {}", d.label())).unwrap_or_default(),
        )
    }
}

pub fn csv(reports: &[Report]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in reports {
        s.push_str(&r.csv_rows());
    }
    s
}

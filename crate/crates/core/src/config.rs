//! Experiment configuration: one JSON document per run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lock::{ProtocolEngine, ResourceId};
use crate::optimizations::OptConfig;
use crate::proto::{Clm, ClmConfig, Hl, HlConfig, Hybrid, Ldl, LdlConfig, Pdl, PdlConfig};
use crate::run::RunSetup;
use crate::sim::{validate_faults, Fault, Micros, NodeId, RegionId, Topology, MS};
use crate::workload::WorkloadSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Clm,
    Pdl,
    Ldl,
    Hl,
    Hybrid,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [Protocol::Clm, Protocol::Pdl, Protocol::Ldl, Protocol::Hl, Protocol::Hybrid];

    pub fn label(self) -> &'static str {
        match self {
            Protocol::Clm => "CLM",
            Protocol::Pdl => "PDL",
            Protocol::Ldl => "LDL",
            Protocol::Hl => "HL",
            Protocol::Hybrid => "HYBRID",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown protocol `{s}`"))
    }
}

/// Regions, their round-trip matrix and the node-to-region assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub regions: Vec<String>,
    pub rtt_ms: Vec<Vec<f64>>,
    /// Region index per node; contiguous equal blocks when empty.
    pub assignment: Vec<u16>,
    pub jitter: f64,
    /// Clock skew bound Δ.
    pub skew_ms: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { regions: vec!["local".into()], rtt_ms: vec![vec![1.0]], assignment: Vec::new(), jitter: 0.1, skew_ms: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeaseParams {
    pub lease_ms: f64,
    pub region_lease_ms: f64,
    /// Extra manager-side delay per grant.
    pub grant_cost_us: Micros,
}

impl Default for LeaseParams {
    fn default() -> Self {
        Self { lease_ms: 200.0, region_lease_ms: 2_000.0, grant_cost_us: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuorumParams {
    pub group_size: usize,
    /// Explicit members; by default members are spread across regions.
    pub members: Vec<u32>,
    pub election_timeout_ms: Option<f64>,
}

impl Default for QuorumParams {
    fn default() -> Self {
        Self { group_size: 3, members: Vec::new(), election_timeout_ms: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub protocol: Protocol,
    pub nodes: usize,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub lease: LeaseParams,
    #[serde(default)]
    pub quorum: QuorumParams,
    #[serde(default)]
    pub optimizations: OptConfig,
    #[serde(default)]
    pub faults: Vec<Fault>,
    /// CPU time per delivered message.
    #[serde(default = "default_service")]
    pub service_us: Micros,
    /// Persistence delay for logged state (CLM log, PDL entries).
    #[serde(default = "default_durable")]
    pub durable_write_us: Micros,
    /// Hosts clients only on these nodes when non-empty.
    #[serde(default)]
    pub client_nodes: Vec<u32>,
    #[serde(default = "default_true")]
    pub adversarial_clocks: bool,
}

fn default_seed() -> u64 {
    1
}

fn default_service() -> Micros {
    20
}

fn default_durable() -> Micros {
    2 * MS
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("{}: {msg}", match .line { Some(l) => format!("line {l}, key `{key}`"), None => format!("key `{key}`") })]
    Invalid { key: String, line: Option<usize>, msg: String },
}

/// 1-based line of the first occurrence of the last path segment of `key`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next()?.split('[').next()?;
    let needle = format!("\"{leaf}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| ConfigError::Parse { line: e.line(), column: e.column(), msg: e.to_string() })?;
        cfg.validate().map_err(|(key, msg)| ConfigError::Invalid { line: line_of(text, &key), key, msg })?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Semantic checks; errors name the offending key.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let bad = |k: &str, m: String| Err((k.to_string(), m));
        if self.nodes == 0 {
            return bad("nodes", "at least one node is required".into());
        }
        let net = &self.network;
        if net.regions.is_empty() {
            return bad("network.regions", "at least one region is required".into());
        }
        if !net.assignment.is_empty() {
            if net.assignment.len() != self.nodes {
                return bad("network.assignment", format!("has {} entries for {} nodes", net.assignment.len(), self.nodes));
            }
            if let Some(r) = net.assignment.iter().find(|r| **r as usize >= net.regions.len()) {
                return bad("network.assignment", format!("unknown region index {r}"));
            }
        } else if self.nodes < net.regions.len() {
            return bad("nodes", format!("{} nodes cannot cover {} regions", self.nodes, net.regions.len()));
        }
        if net.skew_ms < 0.0 {
            return bad("network.skew_ms", "must be non-negative".into());
        }
        let topo = match self.topology() {
            Ok(t) => t,
            Err(e) => return bad("network.rtt_ms", e.to_string()),
        };
        if let Err(e) = self.workload.validate() {
            let key = e.split([' ', ':']).next().unwrap_or("workload").to_string();
            return Err((key, e));
        }
        if let Err(e) = validate_faults(&self.faults, self.nodes) {
            return bad("faults", e);
        }
        if let Some(c) = self.client_nodes.iter().find(|c| **c as usize >= self.nodes) {
            return bad("client_nodes", format!("node {c} out of range"));
        }
        if let Some(c) = self.optimizations.critical_resources.iter().find(|c| **c >= self.workload.resources) {
            return bad("optimizations.critical_resources", format!("resource {c} out of range"));
        }
        if self.lease.lease_ms <= 0.0 {
            return bad("lease.lease_ms", "must be positive".into());
        }
        match self.protocol {
            Protocol::Pdl | Protocol::Hybrid => {
                let q = &self.quorum;
                if q.group_size > self.nodes {
                    return bad("quorum.group_size", format!("group size {} exceeds node count {}", q.group_size, self.nodes));
                }
                if let Err(e) = self.pdl_config(&topo).validate(self.nodes) {
                    let key = if q.members.is_empty() { "quorum.group_size" } else { "quorum.members" };
                    return bad(key, e);
                }
                if self.protocol == Protocol::Hybrid {
                    self.ldl_config(&topo).validate(&topo).or_else(|e| bad("network.skew_ms", e))?;
                }
            }
            Protocol::Ldl => self.ldl_config(&topo).validate(&topo).or_else(|e| bad("network.skew_ms", e))?,
            Protocol::Hl => {
                let h = self.hl_config(&topo);
                if let Err(e) = h.validate(&topo) {
                    let key = if e.starts_with("region lease") { "lease.region_lease_ms" } else { "network.skew_ms" };
                    return bad(key, e);
                }
            }
            Protocol::Clm => {}
        }
        Ok(())
    }
}

fn ms(v: f64) -> Micros {
    (v * MS as f64).round() as Micros
}

impl ExperimentConfig {
    pub fn topology(&self) -> Result<Topology, crate::sim::TopologyError> {
        let net = &self.network;
        let k = net.regions.len();
        let assignment: Vec<RegionId> = if net.assignment.is_empty() {
            (0..self.nodes).map(|i| RegionId((i * k / self.nodes) as u16)).collect()
        } else {
            net.assignment.iter().map(|r| RegionId(*r)).collect()
        };
        let rtt = net.rtt_ms.iter().map(|row| row.iter().map(|v| ms(*v)).collect()).collect();
        Topology::new(assignment, net.regions.clone(), rtt, net.jitter, ms(net.skew_ms))
    }

    /// Replica members: explicit, or the first nodes of each region taken in
    /// turn so the group spans the deployment.
    pub fn quorum_members(&self, topo: &Topology) -> Vec<NodeId> {
        if !self.quorum.members.is_empty() {
            return self.quorum.members.iter().map(|n| NodeId(*n)).collect();
        }
        let per_region: Vec<Vec<NodeId>> =
            (0..topo.num_regions()).map(|r| topo.nodes_in(RegionId(r as u16))).collect();
        let mut out = Vec::new();
        let mut depth = 0;
        while out.len() < self.quorum.group_size.min(self.nodes) {
            for nodes in &per_region {
                if let Some(n) = nodes.get(depth) {
                    if out.len() < self.quorum.group_size {
                        out.push(*n);
                    }
                }
            }
            depth += 1;
        }
        out
    }

    pub fn pdl_config(&self, topo: &Topology) -> PdlConfig {
        let members = self.quorum_members(topo);
        let mut cfg = PdlConfig::with_groups(topo, vec![members.clone()]);
        let widest = members
            .iter()
            .flat_map(|a| members.iter().map(move |b| (a, b)))
            .map(|(a, b)| topo.rtt(*a, *b))
            .max()
            .unwrap_or(0);
        let election = match self.quorum.election_timeout_ms {
            Some(v) => ms(v),
            None => cfg.election_timeout_us.max(5 * widest),
        };
        cfg.election_timeout_us = election;
        cfg.heartbeat_us = (election / 4).max(1);
        cfg.durable_write_us = self.durable_write_us;
        cfg
    }

    pub fn ldl_config(&self, topo: &Topology) -> LdlConfig {
        let mut cfg = LdlConfig::new(topo);
        cfg.lease_us = ms(self.lease.lease_ms);
        cfg.sweep_us = (cfg.lease_us / 4).max(1);
        cfg.grant_cost_us = self.lease.grant_cost_us;
        cfg.opt = self.optimizations.clone();
        cfg.opt.lease.t_base_us = cfg.lease_us;
        if self.protocol == Protocol::Hybrid {
            cfg.opt.hybrid = true;
        }
        cfg
    }

    pub fn hl_config(&self, topo: &Topology) -> HlConfig {
        let mut cfg = HlConfig::new(topo);
        cfg.node_lease_us = ms(self.lease.lease_ms);
        cfg.region_lease_us = ms(self.lease.region_lease_ms);
        cfg
    }

    pub fn engine(&self, topo: &Topology) -> Box<dyn ProtocolEngine> {
        match self.protocol {
            Protocol::Clm => {
                let cfg = ClmConfig { durable_write_us: self.durable_write_us, ..ClmConfig::default() };
                Box::new(Clm::new(cfg))
            }
            Protocol::Pdl => Box::new(Pdl::new(self.pdl_config(topo), topo.n())),
            Protocol::Ldl => Box::new(Ldl::new(self.ldl_config(topo), topo)),
            Protocol::Hl => Box::new(Hl::new(self.hl_config(topo), topo)),
            Protocol::Hybrid => Box::new(Hybrid::new(
                self.optimizations.critical_resources.iter().map(|r| ResourceId(*r)),
                Pdl::new(self.pdl_config(topo), topo.n()),
                Ldl::new(self.ldl_config(topo), topo),
            )),
        }
    }

    /// Window after the end of a run in which unresolved requests are not
    /// counted against liveness.
    pub fn liveness_grace_us(&self, topo: &Topology) -> Micros {
        let t = match self.protocol {
            Protocol::Hl => ms(self.lease.region_lease_ms),
            _ => ms(self.lease.lease_ms),
        };
        let election = match self.protocol {
            Protocol::Pdl | Protocol::Hybrid => self.pdl_config(topo).election_timeout_us,
            _ => 0,
        };
        10 * t.max(election)
    }

    pub fn setup(&self) -> RunSetup {
        let topology = self.topology().expect("validated topology");
        RunSetup {
            seed: self.seed,
            topology,
            faults: self.faults.clone(),
            workload: self.workload.clone(),
            service_us: self.service_us,
            adversarial_clocks: self.adversarial_clocks,
            liveness_timeout_us: ms(self.lease.lease_ms).max(MS),
            client_nodes: (!self.client_nodes.is_empty()).then(|| self.client_nodes.iter().map(|n| NodeId(*n)).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid(text: &str) -> (String, Option<usize>) {
        match ExperimentConfig::parse(text) {
            Err(ConfigError::Invalid { key, line, .. }) => (key, line),
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_missing_blocks() {
        let cfg = ExperimentConfig::parse(r#"{"protocol": "ldl", "nodes": 4}"#).unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.network.regions.len(), 1);
        assert_eq!(cfg.workload.hold_time_us, MS);
    }

    #[test]
    fn json_round_trips() {
        let mut cfg = ExperimentConfig::parse(r#"{"protocol": "hybrid", "nodes": 5}"#).unwrap();
        cfg.optimizations.critical_resources = vec![1, 2];
        cfg.faults.push(crate::sim::Fault::Crash { node: 2, at_us: crate::sim::SEC });
        let back = ExperimentConfig::parse(&cfg.to_json()).unwrap();
        assert_eq!(back.to_json(), cfg.to_json());
    }

    #[test]
    fn oversized_group_names_key_and_line() {
        let text = "{\n \"protocol\": \"pdl\",\n \"nodes\": 2,\n \"quorum\": {\"group_size\": 3}\n}";
        assert_eq!(invalid(text), ("quorum.group_size".into(), Some(4)));
        // CLM ignores the quorum block.
        assert!(ExperimentConfig::parse(&text.replace("pdl", "clm")).is_ok());
    }

    #[test]
    fn unknown_nested_key_is_a_parse_error() {
        let text = "{\n \"protocol\": \"clm\",\n \"nodes\": 2,\n \"workload\": {\"contension\": 0.5}\n}";
        match ExperimentConfig::parse(text) {
            Err(ConfigError::Parse { line, msg, .. }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("contension"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lease_protocols_reject_delay_beyond_twice_skew() {
        let text = r#"{"protocol": "ldl", "nodes": 3,
            "network": {"regions": ["a", "b"], "rtt_ms": [[1, 300], [300, 1]], "skew_ms": 50}}"#;
        let (key, _) = invalid(text);
        assert!(key.starts_with("network") || key.starts_with("lease"), "{key}");
        assert!(ExperimentConfig::parse(&text.replace("ldl", "clm")).is_ok());
    }

    #[test]
    fn quorum_members_spread_over_regions() {
        let mut cfg = ExperimentConfig::parse(r#"{"protocol": "pdl", "nodes": 6}"#).unwrap();
        cfg.network.regions = vec!["a".into(), "b".into(), "c".into()];
        cfg.network.rtt_ms = vec![vec![1.0, 80.0, 140.0], vec![80.0, 1.0, 120.0], vec![140.0, 120.0, 1.0]];
        let topo = cfg.topology().unwrap();
        let m = cfg.quorum_members(&topo);
        let regions: std::collections::BTreeSet<_> = m.iter().map(|n| topo.region_of(*n)).collect();
        assert_eq!(m.len(), 3);
        assert_eq!(regions.len(), 3);
        // Election timeout covers five of the widest member round trips.
        assert!(cfg.pdl_config(&topo).election_timeout_us >= 5 * 140 * MS);
    }
}

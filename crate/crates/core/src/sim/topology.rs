use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use super::{Micros, NodeId, RegionId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("topology has no nodes")]
    Empty,
    #[error("node {0} assigned to unknown region {1}")]
    UnknownRegion(u32, u16),
    #[error("rtt matrix must be {0}x{0}")]
    BadMatrix(usize),
    #[error("rtt matrix not symmetric at ({0},{1})")]
    Asymmetric(usize, usize),
    #[error("intra-region rtt exceeds inter-region rtt for regions ({0},{1})")]
    IntraExceedsInter(usize, usize),
    #[error("jitter fraction {0} outside [0,1)")]
    BadJitter(String),
}

/// A node-set split: nodes in `side` cannot exchange messages with nodes
/// outside it while `start <= t < end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub side: BTreeSet<NodeId>,
    pub start: Micros,
    pub end: Micros,
}

impl Partition {
    pub fn active_at(&self, t: Micros) -> bool {
        self.start <= t && t < self.end
    }

    pub fn separates(&self, a: NodeId, b: NodeId) -> bool {
        self.side.contains(&a) != self.side.contains(&b)
    }
}

/// Region-aware latency and partition model.
#[derive(Debug, Clone)]
pub struct Topology {
    node_region: Vec<RegionId>,
    region_names: Vec<String>,
    rtt_us: Vec<Vec<Micros>>,
    jitter_frac: f64,
    skew_bound_us: Micros,
    partitions: Vec<Partition>,
}

impl Topology {
    pub fn new(
        node_region: Vec<RegionId>,
        region_names: Vec<String>,
        rtt_us: Vec<Vec<Micros>>,
        jitter_frac: f64,
        skew_bound_us: Micros,
    ) -> Result<Self, TopologyError> {
        let r = region_names.len();
        if node_region.is_empty() {
            return Err(TopologyError::Empty);
        }
        if rtt_us.len() != r || rtt_us.iter().any(|row| row.len() != r) {
            return Err(TopologyError::BadMatrix(r));
        }
        for (i, reg) in node_region.iter().enumerate() {
            if reg.index() >= r {
                return Err(TopologyError::UnknownRegion(i as u32, reg.0));
            }
        }
        for a in 0..r {
            for b in 0..r {
                if rtt_us[a][b] != rtt_us[b][a] {
                    return Err(TopologyError::Asymmetric(a, b));
                }
                if a != b && (rtt_us[a][a] > rtt_us[a][b] || rtt_us[b][b] > rtt_us[a][b]) {
                    return Err(TopologyError::IntraExceedsInter(a, b));
                }
            }
        }
        if !(0.0..1.0).contains(&jitter_frac) {
            return Err(TopologyError::BadJitter(jitter_frac.to_string()));
        }
        Ok(Self { node_region, region_names, rtt_us, jitter_frac, skew_bound_us, partitions: Vec::new() })
    }

    /// `n` nodes split into `regions` contiguous blocks, with one intra-region
    /// and one inter-region round trip.
    pub fn blocks(
        n: usize,
        regions: usize,
        intra: Micros,
        inter: Micros,
        jitter_frac: f64,
        skew_bound_us: Micros,
    ) -> Result<Self, TopologyError> {
        let node_region = (0..n).map(|i| RegionId((i * regions / n.max(1)) as u16)).collect();
        let names = (0..regions).map(|r| format!("r{r}")).collect();
        let rtt = (0..regions).map(|a| (0..regions).map(|b| if a == b { intra } else { inter }).collect()).collect();
        Self::new(node_region, names, rtt, jitter_frac, skew_bound_us)
    }

    /// Single region, uniform rtt between distinct nodes.
    pub fn single_region(n: usize, rtt: Micros, jitter_frac: f64, skew_bound_us: Micros) -> Self {
        Self::new(vec![RegionId(0); n], vec!["r0".into()], vec![vec![rtt]], jitter_frac, skew_bound_us)
            .expect("valid single-region topology")
    }

    pub fn n(&self) -> usize {
        self.node_region.len()
    }

    pub fn num_regions(&self) -> usize {
        self.region_names.len()
    }

    pub fn region_names(&self) -> &[String] {
        &self.region_names
    }

    pub fn region_of(&self, node: NodeId) -> RegionId {
        self.node_region[node.index()]
    }

    pub fn nodes_in(&self, region: RegionId) -> Vec<NodeId> {
        (0..self.n() as u32).map(NodeId).filter(|n| self.region_of(*n) == region).collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n() as u32).map(NodeId)
    }

    pub fn skew_bound(&self) -> Micros {
        self.skew_bound_us
    }

    pub fn jitter_frac(&self) -> f64 {
        self.jitter_frac
    }

    /// Base round trip between two nodes; zero for a node talking to itself.
    pub fn rtt(&self, a: NodeId, b: NodeId) -> Micros {
        if a == b {
            return 0;
        }
        self.rtt_us[self.region_of(a).index()][self.region_of(b).index()]
    }

    pub fn region_rtt(&self, a: RegionId, b: RegionId) -> Micros {
        self.rtt_us[a.index()][b.index()]
    }

    /// Largest one-way delay the jitter model can produce.
    pub fn max_one_way(&self) -> Micros {
        let max_rtt = self.rtt_us.iter().flatten().copied().max().unwrap_or(0);
        ((max_rtt as f64 / 2.0) * (1.0 + self.jitter_frac)).ceil() as Micros
    }

    /// One-way delay `(rtt/2)·(1+U(-j,+j))` drawn from `rng`.
    pub fn one_way_delay<R: Rng>(&self, a: NodeId, b: NodeId, rng: &mut R) -> Micros {
        let half = self.rtt(a, b) as f64 / 2.0;
        if half == 0.0 {
            return 0;
        }
        let j = if self.jitter_frac > 0.0 {
            rng.gen_range(-self.jitter_frac..=self.jitter_frac)
        } else {
            0.0
        };
        (half * (1.0 + j)).round() as Micros
    }

    pub fn add_partition(&mut self, p: Partition) {
        self.partitions.push(p);
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn separated(&self, a: NodeId, b: NodeId, t: Micros) -> bool {
        self.partitions.iter().any(|p| p.active_at(t) && p.separates(a, b))
    }
}

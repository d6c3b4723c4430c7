//! Deterministic discrete-event kernel.
//!
//! Virtual true time is an integer count of microseconds. Every node carries a
//! constant clock offset within `[-Δ, +Δ]` that is redrawn on recovery, a CPU
//! that serializes message handling, and an up/down status. Messages travel
//! with a region-pair latency plus symmetric uniform jitter, and are dropped
//! only by partitions and crashed receivers.

mod kernel;
mod topology;

pub use kernel::{rng_stream, Kernel, NodeStatus, SimError, SimEvent};
pub use topology::{Partition, Topology, TopologyError};

use serde::{Deserialize, Serialize};

/// True simulator time in microseconds.
pub type Micros = u64;

pub const MS: Micros = 1_000;
pub const SEC: Micros = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RegionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Scheduled fault actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    Crash { node: u32, at_us: Micros },
    Recover { node: u32, at_us: Micros },
    Partition { side: Vec<u32>, start_us: Micros, end_us: Micros },
}

impl Fault {
    pub fn at(&self) -> Micros {
        match self {
            Fault::Crash { at_us, .. } | Fault::Recover { at_us, .. } => *at_us,
            Fault::Partition { start_us, .. } => *start_us,
        }
    }
}

/// Rejects crash/recover schedules that contradict each other: a node must
/// alternate crash and recover, starting from up.
pub fn validate_faults(faults: &[Fault], n: usize) -> Result<(), String> {
    let mut per_node: Vec<Vec<(Micros, bool)>> = vec![Vec::new(); n];
    for (i, f) in faults.iter().enumerate() {
        match f {
            Fault::Crash { node, at_us } | Fault::Recover { node, at_us } => {
                if *node as usize >= n {
                    return Err(format!("faults[{i}]: node {node} out of range"));
                }
                per_node[*node as usize].push((*at_us, matches!(f, Fault::Crash { .. })));
            }
            Fault::Partition { side, start_us, end_us } => {
                if end_us <= start_us {
                    return Err(format!("faults[{i}]: partition ends before it starts"));
                }
                if let Some(bad) = side.iter().find(|s| **s as usize >= n) {
                    return Err(format!("faults[{i}]: node {bad} out of range"));
                }
            }
        }
    }
    for (node, evs) in per_node.iter_mut().enumerate() {
        evs.sort();
        let mut up = true;
        let mut last = None;
        for &(t, crash) in evs.iter() {
            if last == Some(t) {
                return Err(format!("node {node}: two faults at the same instant {t}"));
            }
            if crash != up {
                let what = if crash { "crash of a down node" } else { "recover of an up node" };
                return Err(format!("node {node}: {what} at {t}"));
            }
            up = !crash;
            last = Some(t);
        }
    }
    Ok(())
}

/// 64-bit FNV-1a, used for ring placement and run digests.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Continues an FNV-1a digest with more bytes.
pub fn fnv1a_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn contradictory_faults_rejected() {
        let ok = [
            Fault::Crash { node: 1, at_us: 10 },
            Fault::Recover { node: 1, at_us: 20 },
        ];
        assert!(validate_faults(&ok, 4).is_ok());
        let twice = [Fault::Crash { node: 1, at_us: 10 }, Fault::Crash { node: 1, at_us: 30 }];
        assert!(validate_faults(&twice, 4).is_err());
        let recover_up = [Fault::Recover { node: 0, at_us: 5 }];
        assert!(validate_faults(&recover_up, 4).is_err());
        let oob = [Fault::Crash { node: 9, at_us: 5 }];
        assert!(validate_faults(&oob, 4).is_err());
    }
}

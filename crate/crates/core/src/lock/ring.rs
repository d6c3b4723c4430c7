//! Consistent-hash placement of resources onto managers.
//!
//! Each manager owns [`VIRTUAL_POINTS`] points on a 64-bit ring. The point for
//! virtual index `v` of manager `m` is the 64-bit FNV-1a of the ASCII string
//! `"{v}:{m}"` (decimal ids); resource `r` hashes the decimal string `"{r}"` and is
//! owned by the first point at or after its hash, wrapping at the top of the
//! ring. Ties on a point value go to the lower manager id.

use crate::sim::{fnv1a, NodeId};

use super::ResourceId;

pub const VIRTUAL_POINTS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ring {
    points: Vec<(u64, NodeId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no live managers to route to")]
pub struct EmptyRing;

fn point_hash(m: NodeId, v: u32) -> u64 {
    fnv1a(format!("{}:{}", v, m.0).as_bytes())
}

pub fn resource_hash(r: ResourceId) -> u64 {
    fnv1a(r.0.to_string().as_bytes())
}

impl Ring {
    pub fn new(managers: &[NodeId]) -> Self {
        let mut points: Vec<(u64, NodeId)> = managers
            .iter()
            .flat_map(|&m| (0..VIRTUAL_POINTS).map(move |v| (point_hash(m, v), m)))
            .collect();
        points.sort();
        points.dedup();
        Self { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn route(&self, r: ResourceId) -> Result<NodeId, EmptyRing> {
        if self.points.is_empty() {
            return Err(EmptyRing);
        }
        let h = resource_hash(r);
        let idx = self.points.partition_point(|(p, _)| *p < h);
        Ok(self.points[idx % self.points.len()].1)
    }
}

/// Routes `r` over `live_managers`; a pure function of its inputs.
pub fn route(r: ResourceId, live_managers: &[NodeId]) -> Result<NodeId, EmptyRing> {
    Ring::new(live_managers).route(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_owns_everything() {
        for r in 0..100 {
            assert_eq!(route(ResourceId(r), &[NodeId(5)]), Ok(NodeId(5)));
        }
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(route(ResourceId(1), &[]), Err(EmptyRing));
    }

    #[test]
    fn deterministic() {
        let ms: Vec<NodeId> = (0..8).map(NodeId).collect();
        for r in 0..200 {
            assert_eq!(route(ResourceId(r), &ms), route(ResourceId(r), &ms));
        }
    }

    #[test]
    fn removing_one_of_eight_moves_about_an_eighth() {
        let all: Vec<NodeId> = (0..8).map(NodeId).collect();
        let fewer: Vec<NodeId> = all.iter().copied().filter(|m| *m != NodeId(3)).collect();
        let a = Ring::new(&all);
        let b = Ring::new(&fewer);
        let moved = (0..10_000)
            .filter(|r| a.route(ResourceId(*r)) != b.route(ResourceId(*r)))
            .count();
        let frac = moved as f64 / 10_000.0;
        assert!((0.08..=0.18).contains(&frac), "remapped fraction {frac}");
        for gone in 0..8 {
            let rest: Vec<NodeId> = all.iter().copied().filter(|m| m.0 != gone).collect();
            let c = Ring::new(&rest);
            let moved = (0..10_000).filter(|r| a.route(ResourceId(*r)) != c.route(ResourceId(*r))).count();
            let frac = moved as f64 / 10_000.0;
            assert!((0.08..=0.18).contains(&frac), "removing {gone}: {frac}");
        }
        // Only resources owned by the removed manager move.
        for r in 0..10_000 {
            let before = a.route(ResourceId(r)).unwrap();
            if before != NodeId(3) {
                assert_eq!(b.route(ResourceId(r)).unwrap(), before);
            }
        }
    }
}

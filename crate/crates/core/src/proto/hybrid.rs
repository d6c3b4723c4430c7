//! Per-resource protocol choice: resources on the critical list go through a
//! replicated log; the rest use leases, with hot contended resources switched
//! to optimistic commits at epoch boundaries.

use std::any::Any;
use std::collections::BTreeSet;

use crate::lock::{Ctx, Msg, ProtocolEngine, Requirement, ResourceId, Timer};
use crate::sim::NodeId;

use super::{Ldl, Pdl};

pub struct Hybrid {
    critical: BTreeSet<ResourceId>,
    pub quorum: Pdl,
    pub lease: Ldl,
}

impl Hybrid {
    pub fn new(critical: impl IntoIterator<Item = ResourceId>, quorum: Pdl, lease: Ldl) -> Self {
        Self { critical: critical.into_iter().collect(), quorum, lease }
    }

    pub fn is_critical(&self, r: ResourceId) -> bool {
        self.critical.contains(&r)
    }

    fn engine(&self, r: ResourceId) -> &dyn ProtocolEngine {
        if self.is_critical(r) {
            &self.quorum
        } else {
            &self.lease
        }
    }
}

impl ProtocolEngine for Hybrid {
    fn name(&self) -> &'static str {
        "HYBRID"
    }

    fn entry(&self, client_node: NodeId, r: ResourceId) -> NodeId {
        self.engine(r).entry(client_node, r)
    }

    fn required(&self, client_node: NodeId, r: ResourceId) -> Requirement {
        self.engine(r).required(client_node, r)
    }

    fn start(&mut self, ctx: &mut Ctx) {
        self.quorum.start(ctx);
        self.lease.start(ctx);
    }

    fn on_message(&mut self, ctx: &mut Ctx, from: NodeId, msg: Msg) {
        match &msg {
            Msg::Pdl(_) => self.quorum.on_message(ctx, from, msg),
            Msg::Ldl(_) | Msg::Hl(_) => self.lease.on_message(ctx, from, msg),
            m => match m.resource() {
                Some(r) if self.is_critical(r) => self.quorum.on_message(ctx, from, msg),
                _ => self.lease.on_message(ctx, from, msg),
            },
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::Election { .. } | Timer::Heartbeat { .. } => self.quorum.on_timer(ctx, timer),
            _ => self.lease.on_timer(ctx, timer),
        }
    }

    fn on_crash(&mut self, node: NodeId) {
        self.quorum.on_crash(node);
        self.lease.on_crash(node);
    }

    fn on_recover(&mut self, ctx: &mut Ctx) {
        self.quorum.on_recover(ctx);
        self.lease.on_recover(ctx);
    }

    fn suspect_watchers(&self) -> Vec<NodeId> {
        let mut w: BTreeSet<NodeId> = self.quorum.suspect_watchers().into_iter().collect();
        w.extend(self.lease.suspect_watchers());
        w.into_iter().collect()
    }

    fn on_suspect(&mut self, ctx: &mut Ctx, node: NodeId, incarnation: u32) {
        self.quorum.on_suspect(ctx, node, incarnation);
        self.lease.on_suspect(ctx, node, incarnation);
    }

    fn lease_based(&self) -> bool {
        true
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

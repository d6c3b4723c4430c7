use std::any::Any;

use rand_chacha::ChaCha8Rng;

use crate::sim::{Micros, NodeId, Topology};

use super::{Msg, ResourceId};

/// Timer tags engines can register. Timers are delivered to the node that set
/// them and are discarded if that node crashed in between.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    Election { group: u16, epoch: u64 },
    Heartbeat { group: u16 },
    Sweep,
    Epoch,
    GraceEnd,
    RevokeDeadline { resource: ResourceId, seq: u64 },
    DelegationRenew { resource: ResourceId, seq: u64 },
    LeaseLapse { resource: ResourceId, token: u64 },
    MigrationDrain { resource: ResourceId },
}

/// Side observations engines report to the run (not sent on the network).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Note {
    PdlCommitted { group: u16, index: u64, term: u64 },
    LeaderElected { group: u16, term: u64, leader: NodeId },
    StaleRelease { resource: ResourceId },
    Migrated { resource: ResourceId, from: NodeId, to: NodeId },
    Reclassified { resource: ResourceId, optimistic: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Send after an extra local delay (durable write, processing).
    Send { to: NodeId, msg: Msg, delay: Micros },
    SetTimer { after: Micros, timer: Timer },
    Note(Note),
}

/// Handler context: the node's view of the world plus an output buffer.
/// Engines only see local clocks; all randomness comes from `rng`.
pub struct Ctx<'a> {
    pub node: NodeId,
    pub local_now: i64,
    /// Number of times this node has crashed so far.
    pub incarnation: u32,
    pub topo: &'a Topology,
    pub rng: &'a mut ChaCha8Rng,
    out: Vec<Action>,
}

impl<'a> Ctx<'a> {
    pub fn new(node: NodeId, local_now: i64, incarnation: u32, topo: &'a Topology, rng: &'a mut ChaCha8Rng) -> Self {
        Self { node, local_now, incarnation, topo, rng, out: Vec::new() }
    }

    pub fn send(&mut self, to: NodeId, msg: Msg) {
        self.out.push(Action::Send { to, msg, delay: 0 });
    }

    pub fn send_after(&mut self, to: NodeId, msg: Msg, delay: Micros) {
        self.out.push(Action::Send { to, msg, delay });
    }

    pub fn set_timer(&mut self, after: Micros, timer: Timer) {
        self.out.push(Action::SetTimer { after, timer });
    }

    pub fn note(&mut self, note: Note) {
        self.out.push(Action::Note(note));
    }

    pub fn take(self) -> Vec<Action> {
        self.out
    }

    pub fn actions(&self) -> &[Action] {
        &self.out
    }
}

/// Which nodes a request needs reachable to make progress.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Requirement {
    All(Vec<NodeId>),
    Majority(Vec<NodeId>),
}

/// Uniform state-machine interface every protocol implements. One engine
/// value holds the per-node state of every node taking part in the protocol.
pub trait ProtocolEngine {
    fn name(&self) -> &'static str;

    /// Where a client on `client_node` first sends requests for `r`.
    fn entry(&self, client_node: NodeId, r: ResourceId) -> NodeId;

    /// Nodes whose reachability a request from `client_node` on `r` depends on.
    fn required(&self, client_node: NodeId, r: ResourceId) -> Requirement {
        Requirement::All(vec![self.entry(client_node, r)])
    }

    /// Called once per node at time zero.
    fn start(&mut self, _ctx: &mut Ctx) {}

    fn on_message(&mut self, ctx: &mut Ctx, from: NodeId, msg: Msg);

    fn on_timer(&mut self, _ctx: &mut Ctx, _timer: Timer) {}

    /// The node lost its volatile state.
    fn on_crash(&mut self, node: NodeId);

    fn on_recover(&mut self, ctx: &mut Ctx);

    /// Nodes that want to learn about client crashes.
    fn suspect_watchers(&self) -> Vec<NodeId> {
        Vec::new()
    }

    /// A client host crashed in incarnation `incarnation`.
    fn on_suspect(&mut self, _ctx: &mut Ctx, _node: NodeId, _incarnation: u32) {}

    /// Lease protocols clip holder validity by the skew bound.
    fn lease_based(&self) -> bool {
        false
    }

    fn as_any(&self) -> &dyn Any;
}

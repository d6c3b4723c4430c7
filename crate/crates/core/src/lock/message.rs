use crate::sim::{Micros, NodeId, RegionId};

use super::{FencingToken, RequestId, ResourceId};

/// Everything that crosses the simulated network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Msg {
    Acquire { resource: ResourceId, req: RequestId },
    /// Always carries a token; `lease_us` is set by lease protocols.
    Grant { resource: ResourceId, req: RequestId, token: FencingToken, lease_us: Option<Micros> },
    Deny { resource: ResourceId, req: RequestId, reason: DenyReason },
    Release { resource: ResourceId, req: RequestId, token: FencingToken },
    /// Release acknowledgement; clients retransmit releases until they see it.
    Released { resource: ResourceId, req: RequestId },
    Renew { resource: ResourceId, req: RequestId, token: FencingToken },
    Renewed { resource: ResourceId, req: RequestId, token: FencingToken, lease_us: Micros },
    /// Manager-side notice that a lease was cleared.
    Expire { resource: ResourceId, req: RequestId, token: FencingToken },

    ReadVersion { resource: ResourceId, req: RequestId },
    Version { resource: ResourceId, req: RequestId, version: u64 },
    Commit { resource: ResourceId, req: RequestId, expected: u64 },
    Committed { resource: ResourceId, req: RequestId, version: u64 },
    Abort { resource: ResourceId, req: RequestId, version: u64 },

    Pdl(PdlMsg),
    Hl(HlMsg),
    Ldl(LdlMsg),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    /// Not the authority; try this node instead.
    Redirect(NodeId),
    /// Lease already lapsed at the manager.
    Expired,
    /// Token does not match the current holder.
    Stale,
    /// Resource is in optimistic mode; current version attached.
    UseOptimistic(u64),
    /// Resource is in locking mode; use Acquire.
    UseLock,
}

impl Msg {
    /// Messages addressed to a client rather than to a protocol engine.
    pub fn client_bound(&self) -> Option<RequestId> {
        match self {
            Msg::Grant { req, .. }
            | Msg::Deny { req, .. }
            | Msg::Released { req, .. }
            | Msg::Renewed { req, .. }
            | Msg::Expire { req, .. }
            | Msg::Version { req, .. }
            | Msg::Committed { req, .. }
            | Msg::Abort { req, .. } => Some(*req),
            _ => None,
        }
    }

    pub fn resource(&self) -> Option<ResourceId> {
        match self {
            Msg::Acquire { resource, .. }
            | Msg::Grant { resource, .. }
            | Msg::Deny { resource, .. }
            | Msg::Release { resource, .. }
            | Msg::Released { resource, .. }
            | Msg::Renew { resource, .. }
            | Msg::Renewed { resource, .. }
            | Msg::Expire { resource, .. }
            | Msg::ReadVersion { resource, .. }
            | Msg::Version { resource, .. }
            | Msg::Commit { resource, .. }
            | Msg::Committed { resource, .. }
            | Msg::Abort { resource, .. } => Some(*resource),
            _ => None,
        }
    }
}

/// Replicated-log lock commands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PdlCommand {
    Noop,
    Acquire { resource: ResourceId, req: RequestId },
    Release { resource: ResourceId, req: RequestId, token: FencingToken },
    /// Drops every hold and queue entry of a crashed client incarnation.
    Cleanup { node: NodeId, incarnation: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PdlEntry {
    pub term: u64,
    pub cmd: PdlCommand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PdlMsg {
    Append {
        group: u16,
        term: u64,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<PdlEntry>,
        commit: u64,
    },
    AppendAck { group: u16, term: u64, success: bool, match_index: u64 },
    RequestVote { group: u16, term: u64, last_index: u64, last_term: u64 },
    Vote { group: u16, term: u64, granted: bool },
}

/// Hierarchical delegation traffic between region managers and the global
/// coordinator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HlMsg {
    DelegRequest { resource: ResourceId, region: RegionId },
    Delegate { resource: ResourceId, seq: u64, lease_us: Micros },
    DelegRenew { resource: ResourceId, seq: u64 },
    DelegRenewed { resource: ResourceId, seq: u64, lease_us: Micros },
    DelegRenewDenied { resource: ResourceId, seq: u64 },
    Revoke { resource: ResourceId, seq: u64 },
    RevokeAck { resource: ResourceId, seq: u64, last_token: FencingToken },
}

/// Manager-to-manager traffic for lease managers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LdlMsg {
    /// Hands authority for `resource` to the receiver.
    Transfer { resource: ResourceId, last_token: FencingToken, version: u64, optimistic: bool },
}

//! Hierarchical locking: a global coordinator hands out per-resource region
//! delegations; the region's manager grants node leases locally while the
//! delegation is valid.

use std::any::Any;
use std::collections::{BTreeMap, VecDeque};

use crate::lock::{
    Ctx, DenyReason, FencingToken, HlMsg, Msg, Note, ProtocolEngine, RequestId, Requirement, ResourceId, Ring, Timer,
};
use crate::sim::{Micros, NodeId, RegionId, Topology, MS, SEC};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HlConfig {
    pub coordinator: NodeId,
    pub node_lease_us: Micros,
    pub region_lease_us: Micros,
    pub skew_us: Micros,
    /// Shortest node lease worth granting near the end of a delegation.
    pub min_lease_us: Micros,
    /// Region managers re-ask for a delegation after this long without one.
    pub request_retry_us: Micros,
}

impl HlConfig {
    pub fn new(topo: &Topology) -> Self {
        let worst = topo.max_one_way() * 2;
        Self {
            coordinator: NodeId(0),
            node_lease_us: 200 * MS,
            region_lease_us: 2 * SEC,
            skew_us: topo.skew_bound(),
            min_lease_us: 20 * MS,
            request_retry_us: (4 * worst).max(50 * MS),
        }
    }

    pub fn validate(&self, topo: &Topology) -> Result<(), String> {
        if topo.max_one_way() >= 2 * self.skew_us {
            return Err(format!(
                "maximum one-way delay {} µs must be below twice the skew bound ({} µs) for lease safety",
                topo.max_one_way(),
                2 * self.skew_us
            ));
        }
        if self.region_lease_us <= self.node_lease_us + 2 * self.skew_us {
            return Err("region lease must exceed the node lease plus twice the skew bound".into());
        }
        Ok(())
    }
}

/// Coordinator-side view of one resource.
#[derive(Debug, Clone, Default)]
struct GlobalRec {
    /// `(manager, region, seq, granted_at)` of the live delegation.
    holding: Option<(NodeId, RegionId, u64, i64)>,
    pending: VecDeque<RegionId>,
    revoking: bool,
}

#[derive(Debug, Clone, Default)]
struct Coordinator {
    recs: BTreeMap<ResourceId, GlobalRec>,
    /// Durable per-resource delegation sequence.
    seqs: BTreeMap<ResourceId, u64>,
    grace_until: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delegation {
    pub seq: u64,
    /// Region-local end of validity, already shortened by Δ.
    pub valid_until: i64,
    pub counter: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLease {
    pub req: RequestId,
    pub token: FencingToken,
    pub granted_at: i64,
    pub len: Micros,
}

#[derive(Debug, Clone, Default)]
pub struct LocalRec {
    pub deleg: Option<Delegation>,
    pub holder: Option<NodeLease>,
    pub queue: VecDeque<RequestId>,
    requested: bool,
    revoking: bool,
    used: bool,
    last_token: u64,
    /// Highest delegation acknowledged as revoked; a revoke can overtake its
    /// own delegate message.
    revoked: u64,
    /// Revoke that overtook its delegate message.
    early_revoke: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct RegionManager {
    pub recs: BTreeMap<ResourceId, LocalRec>,
    grace_until: i64,
    deferred_acks: Vec<(ResourceId, u64)>,
}

pub fn token(seq: u64, counter: u64) -> FencingToken {
    FencingToken((seq << 32) | counter)
}

const RETRY: u64 = u64::MAX;

pub struct Hl {
    cfg: HlConfig,
    coord: Coordinator,
    pub managers: Vec<RegionManager>,
    region_rings: Vec<Ring>,
    node_region: Vec<RegionId>,
}

impl Hl {
    pub fn new(cfg: HlConfig, topo: &Topology) -> Self {
        Self {
            cfg,
            coord: Coordinator::default(),
            managers: vec![RegionManager::default(); topo.n()],
            region_rings: (0..topo.num_regions()).map(|g| Ring::new(&topo.nodes_in(RegionId(g as u16)))).collect(),
            node_region: topo.nodes().map(|n| topo.region_of(n)).collect(),
        }
    }

    pub fn region_manager(&self, region: RegionId, r: ResourceId) -> NodeId {
        self.region_rings[region.index()].route(r).expect("regions are non-empty")
    }

    /// Region currently delegated `r`, as the coordinator sees it.
    pub fn delegated_to(&self, r: ResourceId) -> Option<RegionId> {
        self.coord.recs.get(&r).and_then(|g| g.holding.map(|h| h.1))
    }

    pub fn local(&self, node: NodeId, r: ResourceId) -> Option<&LocalRec> {
        self.managers[node.index()].recs.get(&r)
    }

    fn lrec(&mut self, node: NodeId, r: ResourceId) -> &mut LocalRec {
        self.managers[node.index()].recs.entry(r).or_default()
    }

    // Region manager side.

    fn request_delegation(&mut self, ctx: &mut Ctx, r: ResourceId) {
        let region = self.node_region[ctx.node.index()];
        let coord = self.cfg.coordinator;
        let retry = self.cfg.request_retry_us;
        let rec = self.lrec(ctx.node, r);
        if rec.requested || rec.deleg.is_some() {
            return;
        }
        rec.requested = true;
        ctx.send(coord, Msg::Hl(HlMsg::DelegRequest { resource: r, region }));
        ctx.set_timer(retry, Timer::DelegationRenew { resource: r, seq: RETRY });
    }

    /// Grants the head waiter if the delegation allows it; otherwise asks for
    /// a delegation when there is demand.
    fn try_grant(&mut self, ctx: &mut Ctx, r: ResourceId) {
        let now = ctx.local_now;
        let delta = self.cfg.skew_us as i64;
        let (t, min) = (self.cfg.node_lease_us as i64, self.cfg.min_lease_us as i64);
        if now < self.managers[ctx.node.index()].grace_until {
            return;
        }
        let rec = self.lrec(ctx.node, r);
        if rec.holder.is_some() || rec.revoking || rec.queue.is_empty() {
            return;
        }
        if let Some(d) = rec.deleg {
            if now >= d.valid_until {
                rec.deleg = None;
            }
        }
        let Some(d) = rec.deleg.as_mut() else {
            self.request_delegation(ctx, r);
            return;
        };
        let len = t.min(d.valid_until - now - delta);
        if len < min {
            // Too close to the end; the renewal or the next delegation will do.
            return;
        }
        d.counter += 1;
        let tok = token(d.seq, d.counter);
        let req = rec.queue.pop_front().expect("non-empty");
        rec.holder = Some(NodeLease { req, token: tok, granted_at: now, len: len as Micros });
        rec.last_token = tok.0;
        rec.used = true;
        ctx.send(req.node, Msg::Grant { resource: r, req, token: tok, lease_us: Some(len as Micros) });
        ctx.set_timer(len as Micros + self.cfg.skew_us, Timer::LeaseLapse { resource: r, token: tok.0 });
    }

    fn ack_revoke(&mut self, ctx: &mut Ctx, r: ResourceId, seq: u64) {
        let coord = self.cfg.coordinator;
        let rec = self.lrec(ctx.node, r);
        let last = FencingToken(rec.last_token);
        rec.revoked = rec.revoked.max(seq);
        if rec.deleg.is_none_or(|d| d.seq == seq) {
            rec.deleg = None;
            rec.revoking = false;
        }
        ctx.send(coord, Msg::Hl(HlMsg::RevokeAck { resource: r, seq, last_token: last }));
        if !rec.queue.is_empty() {
            self.request_delegation(ctx, r);
        }
    }

    /// The node lease ended (release or lapse).
    fn holder_done(&mut self, ctx: &mut Ctx, r: ResourceId) {
        let rec = self.lrec(ctx.node, r);
        if rec.revoking {
            let seq = rec.deleg.map_or(0, |d| d.seq);
            self.ack_revoke(ctx, r, seq);
        } else {
            self.try_grant(ctx, r);
        }
    }

    fn on_region_msg(&mut self, ctx: &mut Ctx, msg: HlMsg) {
        let now = ctx.local_now;
        let delta = self.cfg.skew_us as i64;
        match msg {
            HlMsg::Delegate { resource: r, seq, lease_us } => {
                let renew_at = lease_us / 2;
                if now < self.managers[ctx.node.index()].grace_until {
                    // State from before the crash is gone; hand it straight back.
                    self.ack_revoke(ctx, r, seq);
                    return;
                }
                let rec = self.lrec(ctx.node, r);
                if rec.deleg.is_some_and(|d| d.seq >= seq) || seq <= rec.revoked {
                    return;
                }
                rec.deleg = Some(Delegation { seq, valid_until: now + lease_us as i64 - delta, counter: 0 });
                rec.requested = false;
                rec.revoking = false;
                rec.used = false;
                let early = rec.early_revoke.take() == Some(seq);
                ctx.set_timer(renew_at, Timer::DelegationRenew { resource: r, seq });
                self.try_grant(ctx, r);
                if early {
                    let rec = self.lrec(ctx.node, r);
                    rec.revoking = true;
                    if rec.holder.is_none() {
                        self.ack_revoke(ctx, r, seq);
                    }
                }
            }
            HlMsg::DelegRenewed { resource: r, seq, lease_us } => {
                let rec = self.lrec(ctx.node, r);
                if let Some(d) = rec.deleg.as_mut().filter(|d| d.seq == seq) {
                    d.valid_until = d.valid_until.max(now + lease_us as i64 - delta);
                    self.try_grant(ctx, r);
                }
            }
            HlMsg::Revoke { resource: r, seq } => {
                if now < self.managers[ctx.node.index()].grace_until {
                    self.managers[ctx.node.index()].deferred_acks.push((r, seq));
                    return;
                }
                let rec = self.lrec(ctx.node, r);
                match rec.deleg {
                    Some(d) if d.seq == seq => {
                        rec.revoking = true;
                        if rec.holder.is_none() {
                            self.ack_revoke(ctx, r, seq);
                        }
                    }
                    Some(d) if d.seq > seq => self.ack_revoke(ctx, r, seq),
                    _ if seq > rec.revoked => rec.early_revoke = Some(seq),
                    _ => self.ack_revoke(ctx, r, seq),
                }
            }
            _ => {}
        }
    }
}

impl Hl {
    // Coordinator side.

    fn delegate_next(&mut self, ctx: &mut Ctx, r: ResourceId) {
        if ctx.local_now < self.coord.grace_until {
            return;
        }
        let g = self.coord.recs.entry(r).or_default();
        if g.holding.is_some() {
            return;
        }
        let Some(region) = g.pending.pop_front() else { return };
        let seq = self.coord.seqs.entry(r).or_insert(0);
        *seq += 1;
        let seq = *seq;
        let mgr = self.region_manager(region, r);
        let g = self.coord.recs.get_mut(&r).expect("rec");
        g.holding = Some((mgr, region, seq, ctx.local_now));
        g.revoking = false;
        let lease = self.cfg.region_lease_us;
        ctx.send(mgr, Msg::Hl(HlMsg::Delegate { resource: r, seq, lease_us: lease }));
        ctx.set_timer(lease + self.cfg.skew_us, Timer::RevokeDeadline { resource: r, seq });
        if !g.pending.is_empty() {
            self.start_revoke(ctx, r);
        }
    }

    fn start_revoke(&mut self, ctx: &mut Ctx, r: ResourceId) {
        let g = self.coord.recs.get_mut(&r).expect("rec");
        if g.revoking {
            return;
        }
        if let Some((mgr, _, seq, _)) = g.holding {
            g.revoking = true;
            ctx.send(mgr, Msg::Hl(HlMsg::Revoke { resource: r, seq }));
        }
    }

    fn on_coord_msg(&mut self, ctx: &mut Ctx, from: NodeId, msg: HlMsg) {
        let lease = self.cfg.region_lease_us;
        match msg {
            HlMsg::DelegRequest { resource: r, region } => {
                let g = self.coord.recs.entry(r).or_default();
                if !g.pending.contains(&region) {
                    g.pending.push_back(region);
                }
                if g.holding.is_some() {
                    self.start_revoke(ctx, r);
                } else {
                    self.delegate_next(ctx, r);
                }
            }
            HlMsg::DelegRenew { resource: r, seq } => {
                let g = self.coord.recs.entry(r).or_default();
                match g.holding.as_mut() {
                    Some(h) if h.2 == seq && !g.revoking => {
                        h.3 = ctx.local_now;
                        ctx.send(from, Msg::Hl(HlMsg::DelegRenewed { resource: r, seq, lease_us: lease }));
                    }
                    _ => ctx.send(from, Msg::Hl(HlMsg::DelegRenewDenied { resource: r, seq })),
                }
            }
            HlMsg::RevokeAck { resource: r, seq, .. } => {
                let g = self.coord.recs.entry(r).or_default();
                if g.holding.is_some_and(|h| h.2 == seq) {
                    g.holding = None;
                    g.revoking = false;
                    self.delegate_next(ctx, r);
                }
            }
            _ => {}
        }
    }

    /// The delegation `seq` may have lapsed without an acknowledgement.
    fn revoke_deadline(&mut self, ctx: &mut Ctx, r: ResourceId, seq: u64) {
        let span = (self.cfg.region_lease_us + self.cfg.skew_us) as i64;
        let Some(g) = self.coord.recs.get_mut(&r) else { return };
        let Some((_, _, s, at)) = g.holding else { return };
        if s != seq {
            return;
        }
        let end = at + span;
        if ctx.local_now >= end {
            g.holding = None;
            g.revoking = false;
            self.delegate_next(ctx, r);
        } else {
            ctx.set_timer((end - ctx.local_now) as Micros, Timer::RevokeDeadline { resource: r, seq });
        }
    }

    fn on_client(&mut self, ctx: &mut Ctx, msg: Msg) {
        let Some(r) = msg.resource() else { return };
        let now = ctx.local_now;
        let delta = self.cfg.skew_us as i64;
        let t = self.cfg.node_lease_us as i64;
        match msg {
            Msg::Acquire { req, .. } => {
                let region = self.node_region[req.node.index()];
                let mgr = self.region_manager(region, r);
                if mgr != ctx.node {
                    ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::Redirect(mgr) });
                    return;
                }
                let rec = self.lrec(ctx.node, r);
                if let Some(l) = rec.holder.filter(|l| l.req == req) {
                    let left = (l.granted_at + l.len as i64 - now).max(0) as Micros;
                    ctx.send(req.node, Msg::Grant { resource: r, req, token: l.token, lease_us: Some(left) });
                    return;
                }
                if !rec.queue.contains(&req) {
                    rec.queue.push_back(req);
                }
                self.try_grant(ctx, r);
            }
            Msg::Release { req, token, .. } => {
                ctx.send(req.node, Msg::Released { resource: r, req });
                let rec = self.lrec(ctx.node, r);
                if rec.holder.is_some_and(|l| l.token == token) {
                    rec.holder = None;
                    self.holder_done(ctx, r);
                } else {
                    ctx.note(Note::StaleRelease { resource: r });
                }
            }
            Msg::Renew { req, token, .. } => {
                let rec = self.lrec(ctx.node, r);
                let deleg_end = rec.deleg.filter(|_| !rec.revoking).map(|d| d.valid_until);
                match rec.holder.as_mut() {
                    Some(l) if l.token == token && now < l.granted_at + l.len as i64 => {
                        let len = deleg_end.map_or(0, |v| t.min(v - now - delta));
                        if len > 0 {
                            l.granted_at = now;
                            l.len = len as Micros;
                            let tok = l.token;
                            ctx.send(req.node, Msg::Renewed { resource: r, req, token, lease_us: len as Micros });
                            ctx.set_timer(len as Micros + self.cfg.skew_us, Timer::LeaseLapse { resource: r, token: tok.0 });
                        } else {
                            ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::Expired });
                        }
                    }
                    Some(l) if l.token == token => {
                        ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::Expired });
                    }
                    _ => ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::Stale }),
                }
            }
            _ => {}
        }
    }
}

impl ProtocolEngine for Hl {
    fn name(&self) -> &'static str {
        "HL"
    }

    fn entry(&self, client_node: NodeId, r: ResourceId) -> NodeId {
        self.region_manager(self.node_region[client_node.index()], r)
    }

    fn required(&self, client_node: NodeId, r: ResourceId) -> Requirement {
        Requirement::All(vec![self.entry(client_node, r), self.cfg.coordinator])
    }

    fn on_message(&mut self, ctx: &mut Ctx, from: NodeId, msg: Msg) {
        match msg {
            Msg::Hl(m @ (HlMsg::DelegRequest { .. } | HlMsg::DelegRenew { .. } | HlMsg::RevokeAck { .. })) => {
                if ctx.node == self.cfg.coordinator {
                    self.on_coord_msg(ctx, from, m);
                }
            }
            Msg::Hl(m) => self.on_region_msg(ctx, m),
            other => self.on_client(ctx, other),
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        let now = ctx.local_now;
        match timer {
            Timer::LeaseLapse { resource: r, token } => {
                let delta = self.cfg.skew_us as i64;
                let rec = self.lrec(ctx.node, r);
                if let Some(l) = rec.holder.filter(|l| l.token.0 == token) {
                    if now >= l.granted_at + l.len as i64 + delta {
                        rec.holder = None;
                        ctx.send(l.req.node, Msg::Expire { resource: r, req: l.req, token: l.token });
                        self.holder_done(ctx, r);
                    }
                }
            }
            Timer::DelegationRenew { resource: r, seq: RETRY } => {
                let rec = self.lrec(ctx.node, r);
                if rec.requested && rec.deleg.is_none() {
                    rec.requested = false;
                    if !rec.queue.is_empty() {
                        self.request_delegation(ctx, r);
                    }
                }
            }
            Timer::DelegationRenew { resource: r, seq } => {
                let (coord, half) = (self.cfg.coordinator, self.cfg.region_lease_us / 2);
                let rec = self.lrec(ctx.node, r);
                if rec.deleg.is_some_and(|d| d.seq == seq) && !rec.revoking && rec.used {
                    rec.used = false;
                    ctx.send(coord, Msg::Hl(HlMsg::DelegRenew { resource: r, seq }));
                    ctx.set_timer(half, Timer::DelegationRenew { resource: r, seq });
                }
            }
            Timer::RevokeDeadline { resource: r, seq } => {
                if ctx.node == self.cfg.coordinator {
                    self.revoke_deadline(ctx, r, seq);
                }
            }
            Timer::GraceEnd => {
                let mgr = &mut self.managers[ctx.node.index()];
                if now >= mgr.grace_until {
                    for (r, seq) in std::mem::take(&mut mgr.deferred_acks) {
                        self.ack_revoke(ctx, r, seq);
                    }
                    let rs: Vec<ResourceId> = self.managers[ctx.node.index()].recs.keys().copied().collect();
                    for r in rs {
                        self.try_grant(ctx, r);
                    }
                }
                if ctx.node == self.cfg.coordinator && now >= self.coord.grace_until {
                    let rs: Vec<ResourceId> = self.coord.recs.keys().copied().collect();
                    for r in rs {
                        self.delegate_next(ctx, r);
                    }
                }
            }
            _ => {}
        }
    }

    fn on_crash(&mut self, node: NodeId) {
        self.managers[node.index()] = RegionManager::default();
        if node == self.cfg.coordinator {
            self.coord.recs.clear();
        }
    }

    fn on_recover(&mut self, ctx: &mut Ctx) {
        let region_grace = self.cfg.node_lease_us + self.cfg.skew_us;
        self.managers[ctx.node.index()].grace_until = ctx.local_now + region_grace as i64;
        ctx.set_timer(region_grace, Timer::GraceEnd);
        if ctx.node == self.cfg.coordinator {
            // Delegations handed out before the crash must lapse first.
            let grace = self.cfg.region_lease_us + self.cfg.skew_us;
            self.coord.grace_until = ctx.local_now + grace as i64;
            ctx.set_timer(grace, Timer::GraceEnd);
        }
    }

    fn suspect_watchers(&self) -> Vec<NodeId> {
        (0..self.managers.len() as u32).map(NodeId).collect()
    }

    fn on_suspect(&mut self, ctx: &mut Ctx, node: NodeId, incarnation: u32) {
        for rec in self.managers[ctx.node.index()].recs.values_mut() {
            rec.queue.retain(|q| !(q.node == node && q.incarnation() < incarnation));
        }
    }

    fn lease_based(&self) -> bool {
        true
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

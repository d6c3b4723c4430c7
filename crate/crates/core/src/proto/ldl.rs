//! Lease-based locking: per-resource managers placed on a hash ring grant
//! time-limited locks and re-grant only after `T + Δ` on their own clock.

use std::any::Any;
use std::collections::{BTreeMap, VecDeque};

use crate::lock::{
    Ctx, DenyReason, FencingToken, LdlMsg, Msg, Note, ProtocolEngine, RequestId, ResourceId, Ring, Timer,
};
use crate::optimizations::{occ_commit, rebalance_target, AccessStats, OptConfig};
use crate::sim::{Micros, NodeId, Topology, MS};

#[derive(Debug, Clone, PartialEq)]
pub struct LdlConfig {
    pub lease_us: Micros,
    /// Skew bound Δ the guards are computed with.
    pub skew_us: Micros,
    pub sweep_us: Micros,
    /// Manager processing delay added to each grant.
    pub grant_cost_us: Micros,
    /// Tokens reserved per durable counter write.
    pub token_block: u64,
    pub opt: OptConfig,
}

impl LdlConfig {
    pub fn new(topo: &Topology) -> Self {
        let lease_us = 200 * MS;
        Self {
            lease_us,
            skew_us: topo.skew_bound(),
            sweep_us: lease_us / 4,
            grant_cost_us: 0,
            token_block: 1_024,
            opt: OptConfig::default(),
        }
    }

    /// Lease safety needs every grant to arrive within `2Δ`.
    pub fn validate(&self, topo: &Topology) -> Result<(), String> {
        if self.lease_us <= self.skew_us {
            return Err(format!("lease {} µs must exceed the skew bound {} µs", self.lease_us, self.skew_us));
        }
        if topo.max_one_way() >= 2 * self.skew_us {
            return Err(format!(
                "maximum one-way delay {} µs must be below twice the skew bound ({} µs) for lease safety",
                topo.max_one_way(),
                2 * self.skew_us
            ));
        }
        Ok(())
    }

    /// Longest lease this configuration can hand out.
    pub fn max_lease(&self) -> Micros {
        if self.opt.adaptive_lease {
            self.opt.lease.t_max_us
        } else {
            self.lease_us
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lease {
    pub req: RequestId,
    pub token: FencingToken,
    /// Manager-local time of the grant or last renewal.
    pub granted_at: i64,
    pub len: Micros,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    pub holder: Option<Lease>,
    pub queue: VecDeque<RequestId>,
    /// Draining toward this manager.
    pub migrating: Option<NodeId>,
    pub version: u64,
    pub optimistic: bool,
    /// Switch to optimistic once the current holder is gone.
    pub to_optimistic: bool,
    pub stats: AccessStats,
}

#[derive(Debug, Clone, Default)]
pub struct Manager {
    pub records: BTreeMap<ResourceId, Record>,
    next_token: u64,
    /// Durable: every token below this may have been issued.
    reserved: u64,
    /// No grants before this local time (after a restart).
    grace_until: i64,
}

impl Manager {
    fn draw_token(&mut self, block: u64) -> FencingToken {
        self.next_token += 1;
        if self.next_token >= self.reserved {
            self.reserved = self.next_token + block;
        }
        FencingToken(self.next_token)
    }

    fn adopt(&mut self, last: u64, block: u64) {
        if last > self.next_token {
            self.next_token = last;
            if self.next_token >= self.reserved {
                self.reserved = self.next_token + block;
            }
        }
    }
}

pub struct Ldl {
    cfg: LdlConfig,
    ring: Ring,
    pub managers: Vec<Manager>,
    /// Resources moved off their ring position, with the last token issued
    /// before the move.
    directory: BTreeMap<ResourceId, (NodeId, u64)>,
    up: Vec<bool>,
    regions: usize,
}

fn stamp(local: i64) -> Micros {
    local.max(0) as Micros
}

impl Ldl {
    pub fn new(cfg: LdlConfig, topo: &Topology) -> Self {
        let nodes: Vec<NodeId> = topo.nodes().collect();
        Self {
            cfg,
            ring: Ring::new(&nodes),
            managers: vec![Manager::default(); nodes.len()],
            directory: BTreeMap::new(),
            up: vec![true; nodes.len()],
            regions: topo.num_regions(),
        }
    }

    pub fn config(&self) -> &LdlConfig {
        &self.cfg
    }

    pub fn owner(&self, r: ResourceId) -> NodeId {
        self.directory.get(&r).map_or_else(|| self.ring.route(r).expect("non-empty ring"), |d| d.0)
    }

    pub fn record(&self, r: ResourceId) -> Option<&Record> {
        self.managers[self.owner(r).index()].records.get(&r)
    }

    fn rec<'a>(mgr: &'a mut Manager, dir: &BTreeMap<ResourceId, (NodeId, u64)>, r: ResourceId, regions: usize, block: u64) -> &'a mut Record {
        if !mgr.records.contains_key(&r) {
            if let Some((_, floor)) = dir.get(&r) {
                mgr.adopt(*floor, block);
            }
            mgr.records.insert(r, Record { stats: AccessStats::new(regions), ..Record::default() });
        }
        mgr.records.get_mut(&r).expect("inserted")
    }

    fn lease_len(&self, rec: &Record, now: Micros) -> Micros {
        if self.cfg.opt.adaptive_lease {
            let hl = self.cfg.opt.half_life_us;
            self.cfg.opt.lease.duration(rec.stats.wait.mean(), rec.stats.failure_rate(now, hl))
        } else {
            self.cfg.lease_us
        }
    }

    /// Clears a lease the manager considers over: `T + Δ` past its grant.
    fn lapse_if_over(&mut self, ctx: &mut Ctx, r: ResourceId) -> bool {
        let delta = self.cfg.skew_us as i64;
        let hl = self.cfg.opt.half_life_us;
        let mgr = &mut self.managers[ctx.node.index()];
        let Some(rec) = mgr.records.get_mut(&r) else { return false };
        let Some(l) = rec.holder else { return false };
        if ctx.local_now < l.granted_at + l.len as i64 + delta {
            return false;
        }
        rec.holder = None;
        rec.version += 1;
        rec.stats.failures.hit(stamp(ctx.local_now), hl);
        ctx.send(l.req.node, Msg::Expire { resource: r, req: l.req, token: l.token });
        true
    }

    /// Grants the head waiter when the resource is free, or completes a
    /// pending migration.
    fn advance(&mut self, ctx: &mut Ctx, r: ResourceId) {
        let me = ctx.node.index();
        let mgr = &mut self.managers[me];
        if ctx.local_now < mgr.grace_until {
            return;
        }
        let Some(rec) = mgr.records.get_mut(&r) else { return };
        if rec.holder.is_some() {
            return;
        }
        if let Some(target) = rec.migrating {
            self.finish_migration(ctx, r, target);
            return;
        }
        if rec.to_optimistic {
            rec.to_optimistic = false;
            rec.optimistic = true;
            ctx.note(Note::Reclassified { resource: r, optimistic: true });
            let v = rec.version;
            for req in std::mem::take(&mut rec.queue) {
                ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::UseOptimistic(v) });
            }
        }
        if rec.optimistic {
            return;
        }
        if let Some(req) = rec.queue.pop_front() {
            self.grant(ctx, r, req);
        }
    }

    fn grant(&mut self, ctx: &mut Ctx, r: ResourceId, req: RequestId) {
        let now = stamp(ctx.local_now);
        let hl = self.cfg.opt.half_life_us;
        let block = self.cfg.token_block;
        let len = {
            let rec = &self.managers[ctx.node.index()].records[&r];
            self.lease_len(rec, now)
        };
        let mgr = &mut self.managers[ctx.node.index()];
        let token = mgr.draw_token(block);
        let rec = mgr.records.get_mut(&r).expect("record");
        let waiting = rec.queue.len() as f64;
        rec.stats.wait.sample(now, waiting, hl);
        rec.holder = Some(Lease { req, token, granted_at: ctx.local_now, len });
        let msg = Msg::Grant { resource: r, req, token, lease_us: Some(len) };
        ctx.send_after(req.node, msg, self.cfg.grant_cost_us);
    }

    fn finish_migration(&mut self, ctx: &mut Ctx, r: ResourceId, target: NodeId) {
        let mgr = &mut self.managers[ctx.node.index()];
        let rec = mgr.records.remove(&r).expect("record");
        let last = mgr.next_token;
        self.directory.insert(r, (target, last));
        for req in rec.queue {
            ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::Redirect(target) });
        }
        let msg = LdlMsg::Transfer { resource: r, last_token: FencingToken(last), version: rec.version, optimistic: rec.optimistic };
        ctx.send(target, Msg::Ldl(msg));
        ctx.note(Note::Migrated { resource: r, from: ctx.node, to: target });
    }
}

impl Ldl {
    fn on_client(&mut self, ctx: &mut Ctx, msg: Msg) {
        let Some(r) = msg.resource() else { return };
        let me = ctx.node;
        let owner = self.owner(r);
        let hl = self.cfg.opt.half_life_us;
        let (regions, block) = (self.regions, self.cfg.token_block);
        match msg {
            Msg::Acquire { req, .. } => {
                if owner != me {
                    ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::Redirect(owner) });
                    return;
                }
                let region = ctx.topo.region_of(req.node);
                let rec = Self::rec(&mut self.managers[me.index()], &self.directory, r, regions, block);
                rec.stats.access(stamp(ctx.local_now), region, hl);
                if rec.optimistic && rec.migrating.is_none() {
                    let v = rec.version;
                    ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::UseOptimistic(v) });
                    return;
                }
                if let Some(l) = rec.holder {
                    if l.req == req {
                        let left = l.granted_at + l.len as i64 - ctx.local_now;
                        let msg = Msg::Grant { resource: r, req, token: l.token, lease_us: Some(left.max(0) as Micros) };
                        ctx.send(req.node, msg);
                        return;
                    }
                }
                if !rec.queue.contains(&req) {
                    rec.queue.push_back(req);
                }
                self.lapse_if_over(ctx, r);
                self.advance(ctx, r);
            }
            Msg::Release { req, token, .. } => {
                let mgr = &mut self.managers[me.index()];
                let rec = mgr.records.get_mut(&r).filter(|rec| rec.holder.is_some_and(|l| l.token == token));
                ctx.send(req.node, Msg::Released { resource: r, req });
                match rec {
                    Some(rec) => {
                        rec.holder = None;
                        rec.version += 1;
                        self.advance(ctx, r);
                    }
                    None => ctx.note(Note::StaleRelease { resource: r }),
                }
            }
            Msg::Renew { req, token, .. } => {
                let now = ctx.local_now;
                let holder = self.managers[me.index()].records.get_mut(&r).and_then(|rec| rec.holder.as_mut());
                match holder {
                    Some(l) if l.token == token && now < l.granted_at + l.len as i64 => {
                        l.granted_at = now;
                        let msg = Msg::Renewed { resource: r, req, token, lease_us: l.len };
                        ctx.send(req.node, msg);
                    }
                    Some(l) if l.token == token => {
                        ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::Expired });
                    }
                    _ => ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::Stale }),
                }
            }
            Msg::ReadVersion { req, .. } => {
                if let Some(rec) = self.managers[me.index()].records.get(&r) {
                    ctx.send(req.node, Msg::Version { resource: r, req, version: rec.version });
                }
            }
            Msg::Commit { req, expected, .. } => {
                if owner != me {
                    ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::Redirect(owner) });
                    return;
                }
                let rec = Self::rec(&mut self.managers[me.index()], &self.directory, r, regions, block);
                if !rec.optimistic || rec.migrating.is_some() {
                    ctx.send(req.node, Msg::Deny { resource: r, req, reason: DenyReason::UseLock });
                    return;
                }
                let reply = match occ_commit(&mut rec.version, expected) {
                    Ok(version) => Msg::Committed { resource: r, req, version },
                    Err(version) => Msg::Abort { resource: r, req, version },
                };
                ctx.send(req.node, reply);
            }
            _ => {}
        }
    }

    fn sweep(&mut self, ctx: &mut Ctx) {
        let held: Vec<ResourceId> = self.managers[ctx.node.index()]
            .records
            .iter()
            .filter(|(_, rec)| rec.holder.is_some())
            .map(|(r, _)| *r)
            .collect();
        for r in held {
            if self.lapse_if_over(ctx, r) {
                self.advance(ctx, r);
            }
        }
    }

    /// Locality rebalancing and hybrid classification for this manager's
    /// resources.
    fn epoch(&mut self, ctx: &mut Ctx) {
        let me = ctx.node;
        let now = stamp(ctx.local_now);
        let opt = self.cfg.opt.clone();
        let here = ctx.topo.region_of(me);
        let rs: Vec<ResourceId> = self.managers[me.index()].records.keys().copied().collect();
        for r in rs {
            let rec = self.managers[me.index()].records.get_mut(&r).expect("record");
            if opt.hybrid {
                let class = crate::optimizations::classify(false, rec.stats.rate(now, opt.half_life_us), rec.stats.wait.mean(), opt.r_hot);
                let want = class == crate::optimizations::ResourceClass::Optimistic;
                if want && !rec.optimistic {
                    rec.to_optimistic = true;
                    self.advance(ctx, r);
                } else if !want && rec.optimistic {
                    rec.optimistic = false;
                    ctx.note(Note::Reclassified { resource: r, optimistic: false });
                    self.advance(ctx, r);
                } else if !want {
                    rec.to_optimistic = false;
                }
            }
            let rec = self.managers[me.index()].records.get_mut(&r).expect("record");
            if opt.locality && rec.migrating.is_none() {
                let rates = rec.stats.region_rates(now, opt.half_life_us);
                if let Some(region) = rebalance_target(&rates, here, opt.theta) {
                    let candidates = ctx.topo.nodes_in(region);
                    let Ok(target) = crate::lock::route(r, &candidates) else { continue };
                    if !self.up[target.index()] {
                        continue;
                    }
                    rec.migrating = Some(target);
                    self.lapse_if_over(ctx, r);
                    self.advance(ctx, r);
                }
            }
        }
    }

    fn arm(&mut self, ctx: &mut Ctx) {
        ctx.set_timer(self.cfg.sweep_us, Timer::Sweep);
        if self.cfg.opt.locality || self.cfg.opt.hybrid {
            ctx.set_timer(self.cfg.opt.epoch_us, Timer::Epoch);
        }
    }
}

impl ProtocolEngine for Ldl {
    fn name(&self) -> &'static str {
        "LDL"
    }

    fn entry(&self, _client_node: NodeId, r: ResourceId) -> NodeId {
        self.owner(r)
    }

    fn start(&mut self, ctx: &mut Ctx) {
        self.arm(ctx);
    }

    fn on_message(&mut self, ctx: &mut Ctx, _from: NodeId, msg: Msg) {
        match msg {
            Msg::Ldl(LdlMsg::Transfer { resource, last_token, version, optimistic }) => {
                let (regions, block) = (self.regions, self.cfg.token_block);
                let mgr = &mut self.managers[ctx.node.index()];
                mgr.adopt(last_token.0, block);
                let rec = Self::rec(mgr, &self.directory, resource, regions, block);
                rec.version = rec.version.max(version);
                rec.optimistic = optimistic;
                self.advance(ctx, resource);
            }
            other => self.on_client(ctx, other),
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::Sweep => {
                self.sweep(ctx);
                ctx.set_timer(self.cfg.sweep_us, Timer::Sweep);
            }
            Timer::Epoch => {
                self.epoch(ctx);
                ctx.set_timer(self.cfg.opt.epoch_us, Timer::Epoch);
            }
            Timer::GraceEnd => {
                let rs: Vec<ResourceId> = self.managers[ctx.node.index()].records.keys().copied().collect();
                for r in rs {
                    self.advance(ctx, r);
                }
            }
            _ => {}
        }
    }

    fn on_crash(&mut self, node: NodeId) {
        self.up[node.index()] = false;
        let mgr = &mut self.managers[node.index()];
        let reserved = mgr.reserved;
        *mgr = Manager { next_token: reserved, reserved, ..Manager::default() };
    }

    fn on_recover(&mut self, ctx: &mut Ctx) {
        self.up[ctx.node.index()] = true;
        // Leases granted before the crash are unknown; wait them out.
        let grace = self.cfg.max_lease() + self.cfg.skew_us;
        self.managers[ctx.node.index()].grace_until = ctx.local_now + grace as i64;
        ctx.set_timer(grace, Timer::GraceEnd);
        self.arm(ctx);
    }

    fn suspect_watchers(&self) -> Vec<NodeId> {
        (0..self.managers.len() as u32).map(NodeId).collect()
    }

    fn on_suspect(&mut self, ctx: &mut Ctx, node: NodeId, incarnation: u32) {
        let mgr = &mut self.managers[ctx.node.index()];
        for rec in mgr.records.values_mut() {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::{check_liveness, check_mutual_exclusion};
    use crate::lock::Action;
    use crate::proto::testkit::{acquire, grants, req, Hand};
    use crate::run::{run, FaultAvailability, RunSetup};
    use crate::sim::{Fault, SEC};
    use crate::workload::WorkloadSpec;

    const T: i64 = 200_000;
    const D: i64 = 50_000;

    fn hand() -> (Hand<Ldl>, NodeId) {
        let topo = Topology::single_region(4, 1_000, 0.0, D as Micros);
        let cfg = LdlConfig::new(&topo);
        let ldl = Ldl::new(cfg, &topo);
        let owner = ldl.owner(ResourceId(0));
        (Hand::new(ldl, topo), owner)
    }

    fn lease_of(acts: &[Action]) -> Option<Micros> {
        acts.iter().find_map(|a| match a {
            Action::Send { msg: Msg::Grant { lease_us, .. }, .. } => *lease_us,
            _ => None,
        })
    }

    #[test]
    fn free_resource_gets_default_lease() {
        let (mut h, m) = hand();
        let acts = h.deliver(m, NodeId(1), acquire(0, req(1, 1, 1)));
        assert_eq!(grants(&acts), vec![(1, 1)]);
        assert_eq!(lease_of(&acts), Some(200_000));
    }

    #[test]
    fn live_lease_queues_and_wrong_manager_redirects() {
        let (mut h, m) = hand();
        h.deliver(m, NodeId(1), acquire(0, req(1, 1, 1)));
        assert!(grants(&h.deliver(m, NodeId(2), acquire(0, req(2, 2, 1)))).is_empty());
        assert_eq!(h.engine.record(ResourceId(0)).unwrap().queue.len(), 1);
        let other = NodeId((m.0 + 1) % 4);
        let acts = h.deliver(other, NodeId(2), acquire(0, req(2, 2, 1)));
        assert!(matches!(acts.as_slice(), [Action::Send { msg: Msg::Deny { reason: DenyReason::Redirect(to), .. }, .. }] if *to == m));
    }

    #[test]
    fn regrant_waits_for_lease_plus_skew() {
        let (mut h, m) = hand();
        h.deliver(m, NodeId(1), acquire(0, req(1, 1, 1)));
        h.deliver(m, NodeId(2), acquire(0, req(2, 2, 1)));
        h.deliver(m, NodeId(3), acquire(0, req(3, 3, 1)));
        h.local_now = T + D - 1;
        assert!(grants(&h.timer(m, Timer::Sweep)).is_empty());
        h.local_now = T + D;
        let acts = h.timer(m, Timer::Sweep);
        assert_eq!(grants(&acts), vec![(2, 2)]);
        assert!(acts.iter().any(|a| matches!(a, Action::Send { msg: Msg::Expire { .. }, .. })));
    }

    #[test]
    fn empty_sweep_is_noop() {
        let (mut h, m) = hand();
        h.local_now = 10 * T;
        assert!(h.timer(m, Timer::Sweep).iter().all(|a| matches!(a, Action::SetTimer { .. })));
    }

    fn renew(token: u64) -> Msg {
        Msg::Renew { resource: ResourceId(0), req: req(1, 1, 1), token: FencingToken(token) }
    }

    #[test]
    fn renewal_rules() {
        let (mut h, m) = hand();
        h.deliver(m, NodeId(1), acquire(0, req(1, 1, 1)));
        h.local_now = T / 2;
        let acts = h.deliver(m, NodeId(1), renew(1));
        assert!(matches!(acts.as_slice(), [Action::Send { msg: Msg::Renewed { token: FencingToken(1), lease_us: 200_000, .. }, .. }]));
        // Renewed at T/2, so the lease now runs to 3T/2; 1 µs before that still extends.
        h.local_now = T / 2 + T - 1;
        let acts = h.deliver(m, NodeId(1), renew(1));
        assert!(matches!(acts.as_slice(), [Action::Send { msg: Msg::Renewed { .. }, .. }]));
        h.local_now += T;
        let acts = h.deliver(m, NodeId(1), renew(1));
        assert!(matches!(acts.as_slice(), [Action::Send { msg: Msg::Deny { reason: DenyReason::Expired, .. }, .. }]));
        let acts = h.deliver(m, NodeId(1), renew(7));
        assert!(matches!(acts.as_slice(), [Action::Send { msg: Msg::Deny { reason: DenyReason::Stale, .. }, .. }]));
    }

    #[test]
    fn restarted_manager_waits_out_old_leases() {
        let (mut h, m) = hand();
        h.deliver(m, NodeId(1), acquire(0, req(1, 1, 1)));
        h.local_now = 1_000;
        h.crash(m);
        h.local_now = 2_000;
        h.recover(m);
        assert!(grants(&h.deliver(m, NodeId(2), acquire(0, req(2, 2, 1)))).is_empty());
        h.local_now = 2_000 + T + D;
        let acts = h.timer(m, Timer::GraceEnd);
        let g = grants(&acts);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].0, 2);
        assert!(g[0].1 > 1, "token must move past pre-crash grants");
    }

    fn setup(faults: Vec<Fault>, seed: u64, clients: Option<Vec<NodeId>>) -> RunSetup {
        let workload = WorkloadSpec {
            resources: 10,
            contention: 0.8,
            clients: 6,
            hold_time_us: 2 * MS,
            duration_s: 3.0,
            warmup_s: 0.0,
            ..WorkloadSpec::default()
        };
        RunSetup {
            seed,
            topology: Topology::single_region(4, 1_000, 0.2, D as Micros),
            faults,
            workload,
            service_us: 10,
            adversarial_clocks: true,
            liveness_timeout_us: 100 * MS,
            client_nodes: clients,
        }
    }

    #[test]
    fn crashed_holder_is_replaced_within_bound() {
        let topo = Topology::single_region(4, 1_000, 0.2, D as Micros);
        let hot_mgr = Ldl::new(LdlConfig::new(&topo), &topo).owner(ResourceId(0));
        let victim = (0..4).find(|n| NodeId(*n) != hot_mgr).unwrap();
        let faults = vec![Fault::Crash { node: victim, at_us: SEC }];
        let s = setup(faults, 9, None);
        let out = run(s.clone(), Box::new(Ldl::new(LdlConfig::new(&s.topology), &s.topology)));
        assert!(check_mutual_exclusion(&out.sections).passed());
        let hot: Vec<_> = out.sections.iter().filter(|c| c.resource == ResourceId(0)).collect();
        let bound = (T + D + T / 4) as Micros + 20 * MS;
        let mut prev_exit = 0;
        for c in hot.iter().filter(|c| c.t_enter > SEC && c.t_enter < 2 * SEC) {
            assert!(c.t_enter - prev_exit.max(SEC) < bound, "gap {}", c.t_enter - prev_exit);
            prev_exit = prev_exit.max(c.t_exit);
        }
        assert!(hot.iter().any(|c| c.t_enter > SEC + bound));
    }

    #[test]
    fn manager_crash_is_safe_and_recovers() {
        let topo = Topology::single_region(4, 1_000, 0.2, D as Micros);
        let m = Ldl::new(LdlConfig::new(&topo), &topo).owner(ResourceId(0));
        let faults = vec![Fault::Crash { node: m.0, at_us: SEC }, Fault::Recover { node: m.0, at_us: SEC + 100 * MS }];
        let others: Vec<NodeId> = (0..4).map(NodeId).filter(|n| *n != m).collect();
        let s = setup(faults, 21, Some(others));
        let out = run(s.clone(), Box::new(Ldl::new(LdlConfig::new(&s.topology), &s.topology)));
        assert!(check_mutual_exclusion(&out.sections).passed());
        let after = SEC + 100 * MS + (T + D) as Micros;
        assert!(out.sections.iter().any(|c| c.resource == ResourceId(0) && c.t_enter >= after));
        let avail = FaultAvailability::new(&s.topology, &s.faults, out.engine.as_ref());
        assert!(check_liveness(&out.requests, &avail, out.end_us, SEC).violations.is_empty());
    }

    #[test]
    fn unsafe_delay_bound_rejected() {
        let topo = Topology::single_region(4, 300_000, 0.0, 50_000);
        assert!(LdlConfig::new(&topo).validate(&topo).is_err());
        let ok = Topology::single_region(4, 1_000, 0.0, 50_000);
        assert!(LdlConfig::new(&ok).validate(&ok).is_ok());
    }
}

//! Centralized lock manager: one coordinator, durable grant log, volatile
//! FIFO queues.

use std::any::Any;
use std::collections::BTreeMap;

use crate::lock::{Ctx, DenyReason, FencingToken, Msg, Note, ProtocolEngine, RequestId, ResourceId};
use crate::sim::{Micros, NodeId};

use super::table::{Applied, LockTable};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClmConfig {
    pub coordinator: NodeId,
    /// Delay before a logged grant or release is acknowledged.
    pub durable_write_us: Micros,
}

impl Default for ClmConfig {
    fn default() -> Self {
        Self { coordinator: NodeId(0), durable_write_us: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogRecord {
    Grant { resource: ResourceId, req: RequestId, token: FencingToken },
    Free { resource: ResourceId, token: FencingToken },
}

pub struct Clm {
    cfg: ClmConfig,
    table: LockTable,
    log: Vec<LogRecord>,
    up: bool,
}

impl Clm {
    pub fn new(cfg: ClmConfig) -> Self {
        Self { cfg, table: LockTable::default(), log: Vec::new(), up: true }
    }

    pub fn coordinator(&self) -> NodeId {
        self.cfg.coordinator
    }

    pub fn table(&self) -> &LockTable {
        &self.table
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    fn emit(&mut self, ctx: &mut Ctx, applied: Applied, freed: Option<(ResourceId, FencingToken)>) {
        if let Some((resource, token)) = freed {
            self.log.push(LogRecord::Free { resource, token });
        }
        for (resource, req, token) in applied.grants {
            self.log.push(LogRecord::Grant { resource, req, token });
            ctx.send_after(req.node, Msg::Grant { resource, req, token, lease_us: None }, self.cfg.durable_write_us);
        }
    }

    /// Rebuilds holders and token counters from the log.
    fn replay(&mut self) {
        let mut holders: BTreeMap<ResourceId, (Option<(RequestId, FencingToken)>, u64)> = BTreeMap::new();
        for rec in &self.log {
            match *rec {
                LogRecord::Grant { resource, req, token } => {
                    let e = holders.entry(resource).or_default();
                    e.0 = Some((req, token));
                    e.1 = e.1.max(token.0);
                }
                LogRecord::Free { resource, token } => {
                    let e = holders.entry(resource).or_default();
                    if e.0.is_some_and(|(_, t)| t == token) {
                        e.0 = None;
                    }
                }
            }
        }
        self.table = LockTable::default();
        for (r, (holder, last)) in holders {
            self.table.restore(r, holder, last);
        }
    }
}

impl ProtocolEngine for Clm {
    fn name(&self) -> &'static str {
        "CLM"
    }

    fn entry(&self, _client_node: NodeId, _r: ResourceId) -> NodeId {
        self.cfg.coordinator
    }

    fn on_message(&mut self, ctx: &mut Ctx, _from: NodeId, msg: Msg) {
        if ctx.node != self.cfg.coordinator {
            if let Msg::Acquire { resource, req } = msg {
                ctx.send(req.node, Msg::Deny { resource, req, reason: DenyReason::Redirect(self.cfg.coordinator) });
            }
            return;
        }
        match msg {
            Msg::Acquire { resource, req } => {
                let already = self.table.holder(resource).is_some_and(|(h, _)| h == req);
                let applied = self.table.acquire(resource, req);
                if already {
                    // Duplicate of the current holder: the grant is already logged.
                    for (resource, req, token) in applied.grants {
                        ctx.send(req.node, Msg::Grant { resource, req, token, lease_us: None });
                    }
                } else {
                    self.emit(ctx, applied, None);
                }
            }
            Msg::Release { resource, req, token } => {
                let applied = self.table.release(resource, token);
                if applied.stale {
                    ctx.note(Note::StaleRelease { resource });
                    ctx.send(req.node, Msg::Released { resource, req });
                } else {
                    ctx.send_after(req.node, Msg::Released { resource, req }, self.cfg.durable_write_us);
                    self.emit(ctx, applied, Some((resource, token)));
                }
            }
            _ => {}
        }
    }

    fn on_crash(&mut self, node: NodeId) {
        if node == self.cfg.coordinator {
            self.up = false;
            self.table = LockTable::default();
        }
    }

    fn on_recover(&mut self, ctx: &mut Ctx) {
        if ctx.node == self.cfg.coordinator {
            self.up = true;
            self.replay();
        }
    }

    fn suspect_watchers(&self) -> Vec<NodeId> {
        vec![self.cfg.coordinator]
    }

    fn on_suspect(&mut self, ctx: &mut Ctx, node: NodeId, incarnation: u32) {
        if ctx.node != self.cfg.coordinator || !self.up {
            return;
        }
        let before: Vec<(ResourceId, FencingToken)> = self
            .table
            .resources()
            .filter_map(|r| self.table.holder(r).filter(|(h, _)| h.node == node && h.incarnation() < incarnation).map(|(_, t)| (r, t)))
            .collect();
        let applied = self.table.cleanup(node, incarnation);
        for (resource, token) in before {
            self.log.push(LogRecord::Free { resource, token });
        }
        self.emit(ctx, applied, None);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::{check_liveness, check_mutual_exclusion, Outcome};
    use crate::proto::testkit::{acquire, grants, req, Hand};
    use crate::run::{run, FaultAvailability, RunSetup};
    use crate::sim::{Fault, Topology, MS, SEC};
    use crate::workload::WorkloadSpec;

    fn hand() -> Hand<Clm> {
        Hand::new(Clm::new(ClmConfig::default()), Topology::single_region(4, 1_000, 0.0, 0))
    }

    fn release(r: u32, req: RequestId, t: u64) -> Msg {
        Msg::Release { resource: ResourceId(r), req, token: FencingToken(t) }
    }

    #[test]
    fn sequential_clients_get_tokens_in_arrival_order() {
        let mut h = hand();
        let c = NodeId(0);
        let reqs = [req(1, 1, 1), req(2, 2, 1), req(3, 3, 1)];
        assert_eq!(grants(&h.deliver(c, NodeId(1), acquire(0, reqs[0]))), vec![(1, 1)]);
        assert!(grants(&h.deliver(c, NodeId(2), acquire(0, reqs[1]))).is_empty());
        assert!(grants(&h.deliver(c, NodeId(3), acquire(0, reqs[2]))).is_empty());
        assert_eq!(grants(&h.deliver(c, NodeId(1), release(0, reqs[0], 1))), vec![(2, 2)]);
        assert_eq!(grants(&h.deliver(c, NodeId(2), release(0, reqs[1], 2))), vec![(3, 3)]);
    }

    #[test]
    fn non_coordinator_redirects() {
        let mut h = hand();
        let acts = h.deliver(NodeId(2), NodeId(1), acquire(0, req(1, 1, 1)));
        assert!(matches!(
            acts.as_slice(),
            [crate::lock::Action::Send { msg: Msg::Deny { reason: DenyReason::Redirect(NodeId(0)), .. }, .. }]
        ));
    }

    #[test]
    fn stale_release_changes_nothing() {
        let mut h = hand();
        let c = NodeId(0);
        h.deliver(c, NodeId(1), acquire(0, req(1, 1, 1)));
        let acts = h.deliver(c, NodeId(2), release(0, req(2, 2, 1), 9));
        assert!(acts.iter().any(|a| matches!(a, crate::lock::Action::Note(Note::StaleRelease { .. }))));
        assert_eq!(h.engine.table().holder(ResourceId(0)).map(|(_, t)| t.0), Some(1));
    }

    #[test]
    fn holder_survives_coordinator_restart() {
        let mut h = hand();
        let c = NodeId(0);
        let holder = req(1, 1, 1);
        for i in 0..4 {
            let r = req(1, 1, 10 + i);
            h.deliver(c, NodeId(1), acquire(0, r));
            h.deliver(c, NodeId(1), release(0, r, i + 1));
        }
        assert_eq!(grants(&h.deliver(c, NodeId(1), acquire(0, holder))), vec![(1, 5)]);
        for w in 2..6 {
            h.deliver(c, NodeId(w % 4), acquire(0, req(w, w % 4, 1)));
        }
        h.crash(c);
        h.recover(c);
        assert_eq!(h.engine.table().queue_len(ResourceId(0)), 0);
        assert_eq!(h.engine.table().holder(ResourceId(0)), Some((holder, FencingToken(5))));
        let acts = h.deliver(c, NodeId(1), release(0, holder, 5));
        assert!(!acts.iter().any(|a| matches!(a, crate::lock::Action::Note(_))));
        assert_eq!(h.engine.table().holder(ResourceId(0)), None);
        assert_eq!(grants(&h.deliver(c, NodeId(2), acquire(0, req(2, 2, 1)))), vec![(2, 6)]);
    }

    #[test]
    fn empty_recovery_is_noop() {
        let mut h = hand();
        h.crash(NodeId(0));
        assert!(h.recover(NodeId(0)).is_empty());
        assert_eq!(h.engine.table().resources().count(), 0);
    }

    #[test]
    fn suspect_frees_crashed_holder() {
        let mut h = hand();
        let c = NodeId(0);
        h.deliver(c, NodeId(1), acquire(0, req(1, 1, 1)));
        h.deliver(c, NodeId(2), acquire(0, req(2, 2, 1)));
        assert_eq!(grants(&h.suspect(c, NodeId(1), 1)), vec![(2, 2)]);
    }

    fn hot_setup(faults: Vec<Fault>) -> RunSetup {
        let workload = WorkloadSpec {
            resources: 10,
            contention: 1.0,
            clients: 5,
            hold_time_us: 2 * MS,
            duration_s: 6.0,
            warmup_s: 0.0,
            ..WorkloadSpec::default()
        };
        RunSetup {
            seed: 11,
            topology: Topology::single_region(6, 1_000, 0.2, 0),
            faults,
            workload,
            service_us: 20,
            adversarial_clocks: false,
            liveness_timeout_us: 200 * MS,
            client_nodes: Some((1..6).map(NodeId).collect()),
        }
    }

    #[test]
    fn coordinator_crash_keeps_safety_and_waiters_reacquire() {
        let faults = vec![Fault::Crash { node: 0, at_us: 2 * SEC }, Fault::Recover { node: 0, at_us: 3 * SEC }];
        let setup = hot_setup(faults.clone());
        let out = run(setup.clone(), Box::new(Clm::new(ClmConfig::default())));
        assert!(check_mutual_exclusion(&out.sections).passed());
        let avail = FaultAvailability::new(&setup.topology, &faults, out.engine.as_ref());
        let v = check_liveness(&out.requests, &avail, out.end_us, SEC);
        assert!(v.violations.is_empty(), "{:?}", v.violations);
        // The request each client had in flight during the outage is granted
        // once the coordinator is back.
        for c in 0..5 {
            assert!(out.sections.iter().any(|s| s.holder.0 == c && s.t_enter > 3 * SEC), "client {c}");
            let stalled = out.requests.iter().filter(|r| r.client.0 == c && r.issued_at < 3 * SEC).last().unwrap();
            assert_eq!(stalled.outcome, Outcome::Granted, "client {c}");
        }
    }

    #[test]
    fn every_acquire_reaches_the_coordinator() {
        let out = run(hot_setup(Vec::new()), Box::new(Clm::new(ClmConfig::default())));
        assert!(out.messages.received[0] >= out.messages.acquires);
        assert!(out.summary.ops_completed > 100);
    }
}

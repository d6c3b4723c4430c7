//! FIFO lock table shared by the centralized manager and the replicated-log
//! state machine.

use std::collections::{BTreeMap, VecDeque};

use crate::lock::{FencingToken, RequestId, ResourceId, TokenTable};
use crate::sim::NodeId;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Entry {
    pub holder: Option<(RequestId, FencingToken)>,
    pub queue: VecDeque<RequestId>,
}

/// Result of applying a command: grants to hand out.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Applied {
    pub grants: Vec<(ResourceId, RequestId, FencingToken)>,
    pub stale: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LockTable {
    entries: BTreeMap<ResourceId, Entry>,
    tokens: TokenTable,
}

impl LockTable {
    pub fn entry(&self, r: ResourceId) -> Option<&Entry> {
        self.entries.get(&r)
    }

    pub fn holder(&self, r: ResourceId) -> Option<(RequestId, FencingToken)> {
        self.entries.get(&r).and_then(|e| e.holder)
    }

    pub fn queue_len(&self, r: ResourceId) -> usize {
        self.entries.get(&r).map_or(0, |e| e.queue.len())
    }

    pub fn last_token(&self, r: ResourceId) -> u64 {
        self.tokens.last(r)
    }

    /// Grants if free, re-grants a duplicate of the current holder, queues
    /// otherwise (duplicates of queued requests are ignored).
    pub fn acquire(&mut self, r: ResourceId, req: RequestId) -> Applied {
        let e = self.entries.entry(r).or_default();
        match e.holder {
            None => {
                let t = self.tokens.next_token(r);
                e.holder = Some((req, t));
                Applied { grants: vec![(r, req, t)], stale: false }
            }
            Some((h, t)) if h == req => Applied { grants: vec![(r, req, t)], stale: false },
            Some(_) => {
                if !e.queue.contains(&req) {
                    e.queue.push_back(req);
                }
                Applied::default()
            }
        }
    }

    /// Frees the resource if `token` is the holder's, granting the queue head.
    pub fn release(&mut self, r: ResourceId, token: FencingToken) -> Applied {
        let Some(e) = self.entries.get_mut(&r) else {
            return Applied { grants: Vec::new(), stale: true };
        };
        match e.holder {
            Some((_, t)) if t == token => {
                e.holder = None;
                self.promote(r)
            }
            _ => Applied { grants: Vec::new(), stale: true },
        }
    }

    fn promote(&mut self, r: ResourceId) -> Applied {
        let e = self.entries.get_mut(&r).expect("entry exists");
        let mut out = Applied::default();
        if e.holder.is_none() {
            if let Some(next) = e.queue.pop_front() {
                let t = self.tokens.next_token(r);
                e.holder = Some((next, t));
                out.grants.push((r, next, t));
            }
        }
        out
    }

    /// Drops holds and queue slots of requests issued by `node` before its
    /// crash number `incarnation`.
    pub fn cleanup(&mut self, node: NodeId, incarnation: u32) -> Applied {
        let dead = |req: &RequestId| req.node == node && req.incarnation() < incarnation;
        let mut out = Applied::default();
        let rs: Vec<ResourceId> = self.entries.keys().copied().collect();
        for r in rs {
            let e = self.entries.get_mut(&r).expect("key");
            e.queue.retain(|q| !dead(q));
            if e.holder.is_some_and(|(h, _)| dead(&h)) {
                e.holder = None;
                out.grants.extend(self.promote(r).grants);
            }
        }
        out
    }

    /// Restores a holder after recovery, keeping the token counter ahead.
    pub fn restore(&mut self, r: ResourceId, holder: Option<(RequestId, FencingToken)>, last_token: u64) {
        self.tokens.adopt(r, last_token);
        let e = self.entries.entry(r).or_default();
        e.holder = holder;
        e.queue.clear();
    }

    pub fn resources(&self) -> impl Iterator<Item = ResourceId> + '_ {
        self.entries.keys().copied()
    }
}

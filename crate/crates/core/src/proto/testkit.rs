//! Drives one engine by hand, without a kernel.

use rand_chacha::ChaCha8Rng;

use crate::lock::{Action, ClientId, Ctx, Msg, ProtocolEngine, RequestId, ResourceId, Timer};
use crate::sim::{rng_stream, NodeId, Topology};

pub struct Hand<E> {
    pub engine: E,
    pub topo: Topology,
    pub rng: ChaCha8Rng,
    pub local_now: i64,
    pub incarnation: Vec<u32>,
}

impl<E: ProtocolEngine> Hand<E> {
    pub fn new(engine: E, topo: Topology) -> Self {
        let n = topo.n();
        Self { engine, topo, rng: rng_stream(1, 4), local_now: 0, incarnation: vec![0; n] }
    }

    pub fn start(&mut self, node: NodeId) -> Vec<Action> {
        let mut ctx = Ctx::new(node, self.local_now, self.incarnation[node.index()], &self.topo, &mut self.rng);
        self.engine.start(&mut ctx);
        ctx.take()
    }

    pub fn deliver(&mut self, node: NodeId, from: NodeId, msg: Msg) -> Vec<Action> {
        let mut ctx = Ctx::new(node, self.local_now, self.incarnation[node.index()], &self.topo, &mut self.rng);
        self.engine.on_message(&mut ctx, from, msg);
        ctx.take()
    }

    pub fn timer(&mut self, node: NodeId, timer: Timer) -> Vec<Action> {
        let mut ctx = Ctx::new(node, self.local_now, self.incarnation[node.index()], &self.topo, &mut self.rng);
        self.engine.on_timer(&mut ctx, timer);
        ctx.take()
    }

    pub fn crash(&mut self, node: NodeId) {
        self.incarnation[node.index()] += 1;
        self.engine.on_crash(node);
    }

    pub fn recover(&mut self, node: NodeId) -> Vec<Action> {
        let mut ctx = Ctx::new(node, self.local_now, self.incarnation[node.index()], &self.topo, &mut self.rng);
        self.engine.on_recover(&mut ctx);
        ctx.take()
    }

    pub fn suspect(&mut self, node: NodeId, crashed: NodeId, inc: u32) -> Vec<Action> {
        let mut ctx = Ctx::new(node, self.local_now, self.incarnation[node.index()], &self.topo, &mut self.rng);
        self.engine.on_suspect(&mut ctx, crashed, inc);
        ctx.take()
    }
}

pub fn req(client: u32, node: u32, seq: u64) -> RequestId {
    RequestId { client: ClientId(client), node: NodeId(node), seq }
}

pub fn acquire(r: u32, req: RequestId) -> Msg {
    Msg::Acquire { resource: ResourceId(r), req }
}

/// Grants among `actions` as `(client, token)`.
pub fn grants(actions: &[Action]) -> Vec<(u32, u64)> {
    actions
        .iter()
        .filter_map(|a| match a {
            Action::Send { msg: Msg::Grant { req, token, .. }, .. } => Some((req.client.0, token.0)),
            _ => None,
        })
        .collect()
}

/// Synchronous FIFO delivery of engine sends between up nodes. Timers are
/// dropped; client-bound messages are collected.
pub struct Router {
    pub down: Vec<bool>,
    pub to_clients: Vec<Msg>,
    pub delivered: usize,
}

impl Router {
    pub fn new(n: usize) -> Self {
        Self { down: vec![false; n], to_clients: Vec::new(), delivered: 0 }
    }

    pub fn pump<E: ProtocolEngine>(&mut self, h: &mut Hand<E>, from: NodeId, actions: Vec<Action>) {
        let mut queue: std::collections::VecDeque<(NodeId, Action)> = actions.into_iter().map(|a| (from, a)).collect();
        while let Some((src, a)) = queue.pop_front() {
            let Action::Send { to, msg, .. } = a else { continue };
            if msg.client_bound().is_some() {
                self.to_clients.push(msg);
                continue;
            }
            if self.down[to.index()] || self.down[src.index()] {
                continue;
            }
            self.delivered += 1;
            let out = h.deliver(to, src, msg);
            queue.extend(out.into_iter().map(|a| (to, a)));
        }
    }

    pub fn client_grants(&self) -> Vec<(u32, u64)> {
        self.to_clients
            .iter()
            .filter_map(|m| match m {
                Msg::Grant { req, token, .. } => Some((req.client.0, token.0)),
                _ => None,
            })
            .collect()
    }
}

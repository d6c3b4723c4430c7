use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{fnv1a_extend, Micros, NodeId, Topology};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled in the past: fire_at {fire_at} < now {now}")]
    PastEvent { fire_at: Micros, now: Micros },
    #[error("clock read on down node {0}")]
    NodeDown(NodeId),
}

/// One queued event. Dispatch order is `(fire_at, seq)`.
#[derive(Debug, Clone)]
pub struct SimEvent<P> {
    pub fire_at: Micros,
    pub seq: u64,
    pub target: NodeId,
    pub payload: P,
}

impl<P> PartialEq for SimEvent<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<P> Eq for SimEvent<P> {}

impl<P> PartialOrd for SimEvent<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for SimEvent<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeStatus {
    pub up: bool,
    pub crash_count: u32,
    pub clock_offset_us: i64,
    /// CPU is busy handling messages until this true time.
    pub busy_until: Micros,
}

/// Event queue, node table, clocks and the network stream.
pub struct Kernel<P> {
    now: Micros,
    next_seq: u64,
    queue: BinaryHeap<Reverse<SimEvent<P>>>,
    topo: Topology,
    nodes: Vec<NodeStatus>,
    net_rng: ChaCha8Rng,
    clock_rng: ChaCha8Rng,
    adversarial_clocks: bool,
    digest: u64,
    dispatched: u64,
    last_fire: Micros,
}

/// Derives an independent stream for `purpose` from a run seed.
pub fn rng_stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

impl<P> Kernel<P> {
    /// Builds a kernel. With `adversarial_clocks`, offsets are pinned at
    /// `+Δ` for even nodes and `-Δ` for odd nodes instead of being drawn.
    pub fn new(topo: Topology, seed: u64, adversarial_clocks: bool) -> Self {
        let mut clock_rng = rng_stream(seed, 1);
        let nodes = (0..topo.n())
            .map(|i| NodeStatus {
                up: true,
                crash_count: 0,
                clock_offset_us: draw_offset(&topo, &mut clock_rng, adversarial_clocks, i, 0),
                busy_until: 0,
            })
            .collect();
        Self {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            topo,
            nodes,
            net_rng: rng_stream(seed, 2),
            clock_rng,
            adversarial_clocks,
            digest: 0xcbf2_9ce4_8422_2325,
            dispatched: 0,
            last_fire: 0,
        }
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn topology_mut(&mut self) -> &mut Topology {
        &mut self.topo
    }

    pub fn status(&self, node: NodeId) -> &NodeStatus {
        &self.nodes[node.index()]
    }

    pub fn is_up(&self, node: NodeId) -> bool {
        self.nodes[node.index()].up
    }

    pub fn incarnation(&self, node: NodeId) -> u32 {
        self.nodes[node.index()].crash_count
    }

    pub fn schedule(&mut self, fire_at: Micros, target: NodeId, payload: P) -> Result<u64, SimError> {
        if fire_at < self.now {
            return Err(SimError::PastEvent { fire_at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(SimEvent { fire_at, seq, target, payload }));
        Ok(seq)
    }

    /// Schedules `payload` at `now + delay`.
    pub fn schedule_in(&mut self, delay: Micros, target: NodeId, payload: P) -> u64 {
        let at = self.now + delay;
        self.schedule(at, target, payload).expect("relative schedule is never in the past")
    }

    /// Removes the next event and advances true time to it.
    pub fn pop(&mut self) -> Option<SimEvent<P>> {
        let Reverse(ev) = self.queue.pop()?;
        debug_assert!(ev.fire_at >= self.last_fire);
        self.now = ev.fire_at;
        self.last_fire = ev.fire_at;
        self.dispatched += 1;
        let mut buf = [0u8; 20];
        buf[..8].copy_from_slice(&ev.fire_at.to_le_bytes());
        buf[8..16].copy_from_slice(&ev.seq.to_le_bytes());
        buf[16..].copy_from_slice(&ev.target.0.to_le_bytes());
        self.digest = fnv1a_extend(self.digest, &buf);
        Some(ev)
    }

    pub fn peek_time(&self) -> Option<Micros> {
        self.queue.peek().map(|Reverse(e)| e.fire_at)
    }

    /// Digest over the `(fire_at, seq, target)` dispatch sequence.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Sends `payload` from `src` to `dst`. Returns the delivery time, or
    /// `None` when the message is dropped by a partition or a down sender.
    /// Whether `dst` is up is decided at delivery by the dispatcher.
    pub fn send(&mut self, src: NodeId, dst: NodeId, extra_delay: Micros, payload: P) -> Option<Micros> {
        if !self.is_up(src) || self.topo.separated(src, dst, self.now) {
            return None;
        }
        let delay = self.topo.one_way_delay(src, dst, &mut self.net_rng);
        let at = self.now + extra_delay + delay;
        self.schedule(at, dst, payload).expect("future delivery");
        Some(at)
    }

    /// Local clock of `node`: true time plus its constant offset.
    pub fn node_clock(&self, node: NodeId) -> Result<i64, SimError> {
        let st = &self.nodes[node.index()];
        if !st.up {
            return Err(SimError::NodeDown(node));
        }
        Ok(self.now as i64 + st.clock_offset_us)
    }

    pub fn crash(&mut self, node: NodeId) {
        let st = &mut self.nodes[node.index()];
        if st.up {
            st.up = false;
            st.crash_count += 1;
            st.busy_until = 0;
        }
    }

    pub fn recover(&mut self, node: NodeId) {
        let i = node.index();
        if self.nodes[i].up {
            return;
        }
        let cc = self.nodes[i].crash_count;
        let offset = draw_offset(&self.topo, &mut self.clock_rng, self.adversarial_clocks, i, cc);
        let st = &mut self.nodes[i];
        st.up = true;
        st.clock_offset_us = offset;
        st.busy_until = self.now;
    }

    /// Reserves `service` µs of CPU on `node`; returns when the work completes.
    pub fn reserve_cpu(&mut self, node: NodeId, service: Micros) -> Micros {
        let st = &mut self.nodes[node.index()];
        let start = st.busy_until.max(self.now);
        st.busy_until = start + service;
        st.busy_until
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

fn draw_offset(topo: &Topology, rng: &mut ChaCha8Rng, adversarial: bool, node: usize, crash_count: u32) -> i64 {
    let delta = topo.skew_bound() as i64;
    if delta == 0 {
        return 0;
    }
    if adversarial {
        // Alternate sign on every recovery as well as across nodes.
        return if (node + crash_count as usize) % 2 == 0 { delta } else { -delta };
    }
    rng.gen_range(-delta..=delta)
}

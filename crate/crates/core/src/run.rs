//! One simulation run: kernel + protocol engine + client population.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::checker::{Availability, CommitRecord, CsRecord, Outcome, RequestRecord};
use crate::lock::{Action, ClientId, Ctx, Msg, Note, ProtocolEngine, Requirement, Timer};
use crate::metrics::{Recorder, Summary, Window};
use crate::sim::{Fault, Kernel, Micros, NodeId, Partition, Topology};
use crate::workload::{Client, ClientAction, ClientParams, ClientTimer, Sampler, WorkloadSpec};

#[derive(Debug, Clone)]
pub struct RunSetup {
    pub seed: u64,
    pub topology: Topology,
    pub faults: Vec<Fault>,
    pub workload: WorkloadSpec,
    /// CPU time each delivered message costs its receiving node.
    pub service_us: Micros,
    pub adversarial_clocks: bool,
    /// Delay before watchers learn that a client host crashed.
    pub liveness_timeout_us: Micros,
    /// Hosts for the clients, cycled; defaults to all nodes.
    pub client_nodes: Option<Vec<NodeId>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageCounts {
    pub sent: u64,
    pub dropped: u64,
    pub cross_region: u64,
    pub received: Vec<u64>,
    pub acquires: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NoteCounts {
    pub stale_releases: u64,
    pub migrations: u64,
    pub elections: u64,
    pub reclassifications: u64,
}

pub struct RunOutput {
    pub summary: Summary,
    pub sections: Vec<CsRecord>,
    pub requests: Vec<RequestRecord>,
    pub commits: Vec<CommitRecord>,
    pub notes: NoteCounts,
    pub messages: MessageCounts,
    pub digest: u64,
    pub end_us: Micros,
    pub engine: Box<dyn ProtocolEngine>,
    /// `(time, contention)` steps actually applied.
    pub contention_steps: Vec<(Micros, f64)>,
}

#[derive(Debug, Clone)]
enum Ev {
    Start,
    Deliver { from: NodeId, msg: Msg },
    Process { from: NodeId, msg: Msg, inc: u32 },
    Outbox { to: NodeId, msg: Msg, inc: u32 },
    Timer { timer: Timer, inc: u32 },
    Client { client: u32, timer: ClientTimer, inc: u32 },
    Crash,
    Recover,
    Suspect { crashed: NodeId, inc: u32 },
    Contention(f64),
}

struct World {
    kernel: Kernel<Ev>,
    engine: Box<dyn ProtocolEngine>,
    engine_rng: ChaCha8Rng,
    work_rng: ChaCha8Rng,
    clients: Vec<Client>,
    client_req: Vec<Option<usize>>,
    by_node: Vec<Vec<u32>>,
    sampler: Sampler,
    params: ClientParams,
    spec: WorkloadSpec,
    contention: f64,
    recorder: Recorder,
    sections: Vec<CsRecord>,
    requests: Vec<RequestRecord>,
    commits: Vec<CommitRecord>,
    notes: NoteCounts,
    messages: MessageCounts,
    service_us: Micros,
    liveness_timeout_us: Micros,
    end: Micros,
    steps: Vec<(Micros, f64)>,
}

pub fn run(setup: RunSetup, engine: Box<dyn ProtocolEngine>) -> RunOutput {
    let mut topo = setup.topology.clone();
    for f in &setup.faults {
        if let Fault::Partition { side, start_us, end_us } = f {
            topo.add_partition(Partition {
                side: side.iter().map(|n| NodeId(*n)).collect::<BTreeSet<_>>(),
                start: *start_us,
                end: *end_us,
            });
        }
    }
    let n = topo.n();
    let regions = topo.num_regions();
    let hosts: Vec<NodeId> = setup.client_nodes.clone().unwrap_or_else(|| topo.nodes().collect());
    let clients: Vec<Client> = (0..setup.workload.clients)
        .map(|i| {
            let node = hosts[i as usize % hosts.len()];
            Client::new(ClientId(i), node, topo.region_of(node))
        })
        .collect();
    let mut by_node = vec![Vec::new(); n];
    for c in &clients {
        by_node[c.node.index()].push(c.id.0);
    }
    let spec = setup.workload.clone();
    let window = Window { warmup_us: spec.warmup_us(), duration_us: spec.duration_us(), interval_us: spec.interval_us() };
    let skew = topo.skew_bound();
    let mut kernel = Kernel::new(topo, setup.seed, setup.adversarial_clocks);
    kernel.schedule(0, NodeId(0), Ev::Start).expect("start");
    for f in &setup.faults {
        match f {
            Fault::Crash { node, at_us } => {
                kernel.schedule(*at_us, NodeId(*node), Ev::Crash).expect("crash time");
            }
            Fault::Recover { node, at_us } => {
                kernel.schedule(*at_us, NodeId(*node), Ev::Recover).expect("recover time");
            }
            Fault::Partition { .. } => {}
        }
    }
    for (t, c) in &spec.fluctuation {
        let at = (t * crate::sim::SEC as f64).round() as Micros;
        kernel.schedule(at, NodeId(0), Ev::Contention(*c)).expect("fluctuation time");
    }
    let mut world = World {
        kernel,
        engine,
        engine_rng: crate::sim::rng_stream(setup.seed, 4),
        work_rng: crate::sim::rng_stream(setup.seed, 3),
        client_req: vec![None; clients.len()],
        clients,
        by_node,
        sampler: Sampler::new(&spec, regions),
        params: ClientParams {
            hold_time_us: spec.hold_time_us,
            skew_us: skew,
            max_retries: spec.max_retries,
            occ_max_attempts: spec.occ_max_attempts,
            occ_backoff_us: spec.occ_backoff_us,
        },
        contention: spec.contention,
        recorder: Recorder::new(window),
        sections: Vec::new(),
        requests: Vec::new(),
        commits: Vec::new(),
        notes: NoteCounts::default(),
        messages: MessageCounts { received: vec![0; n], ..Default::default() },
        service_us: setup.service_us,
        liveness_timeout_us: setup.liveness_timeout_us,
        end: window.duration_us,
        steps: Vec::new(),
        spec,
    };
    world.run_loop();
    world.finish()
}

impl World {
    fn run_loop(&mut self) {
        while let Some(t) = self.kernel.peek_time() {
            if t >= self.end {
                break;
            }
            let ev = self.kernel.pop().expect("peeked");
            self.dispatch(ev.target, ev.payload);
        }
    }

    fn finish(mut self) -> RunOutput {
        // Sections still open at the end are closed at the horizon.
        let end = self.end;
        for c in 0..self.clients.len() {
            if self.kernel.is_up(self.clients[c].node) {
                let acts = self.clients[c].crash(end, 0);
                for a in acts {
                    if let ClientAction::Section { resource, token, enter, exit } = a {
                        self.sections.push(CsRecord { resource, token, holder: ClientId(c as u32), t_enter: enter, t_exit: exit });
                    }
                }
            }
        }
        RunOutput {
            summary: self.recorder.summarize(),
            sections: self.sections,
            requests: self.requests,
            commits: self.commits,
            notes: self.notes,
            messages: self.messages,
            digest: self.kernel.digest(),
            end_us: end,
            engine: self.engine,
            contention_steps: self.steps,
        }
    }

    fn now(&self) -> Micros {
        self.kernel.now()
    }

    fn dispatch(&mut self, node: NodeId, ev: Ev) {
        match ev {
            Ev::Start => self.start(),
            Ev::Deliver { from, msg } => {
                if !self.kernel.is_up(node) {
                    self.messages.dropped += 1;
                    return;
                }
                self.messages.received[node.index()] += 1;
                let inc = self.kernel.incarnation(node);
                if self.service_us == 0 {
                    self.process(node, from, msg);
                } else {
                    let done = self.kernel.reserve_cpu(node, self.service_us);
                    self.kernel.schedule(done, node, Ev::Process { from, msg, inc }).expect("cpu completion");
                }
            }
            Ev::Process { from, msg, inc } => {
                if self.alive(node, inc) {
                    self.process(node, from, msg);
                }
            }
            Ev::Outbox { to, msg, inc } => {
                if self.alive(node, inc) {
                    self.send(node, to, msg);
                }
            }
            Ev::Timer { timer, inc } => {
                if self.alive(node, inc) {
                    self.with_engine(node, |e, ctx| e.on_timer(ctx, timer));
                }
            }
            Ev::Client { client, timer, inc } => {
                if self.alive(node, inc) {
                    if let (ClientTimer::Timeout { .. }, Some(r)) = (timer, self.clients[client as usize].acquiring()) {
                        let entry = self.engine.entry(node, r);
                        self.clients[client as usize].refresh_target(entry);
                    }
                    if let ClientTimer::ReleaseRetry { req } = timer {
                        if let Some(r) = self.clients[client as usize].pending_release(req) {
                            let entry = self.engine.entry(node, r);
                            self.clients[client as usize].refresh_release(req, entry);
                        }
                    }
                    let timeout = self.timeout_for(client);
                    let now = self.now();
                    let acts = self.clients[client as usize].on_timer(now, timer, &self.params, timeout);
                    self.apply_client(client, acts);
                }
            }
            Ev::Crash => self.crash(node),
            Ev::Recover => self.recover(node),
            Ev::Suspect { crashed, inc } => {
                if self.kernel.is_up(node) {
                    self.with_engine(node, |e, ctx| e.on_suspect(ctx, crashed, inc));
                }
            }
            Ev::Contention(c) => {
                self.contention = c;
                self.steps.push((self.now(), c));
            }
        }
    }

    fn alive(&self, node: NodeId, inc: u32) -> bool {
        self.kernel.is_up(node) && self.kernel.incarnation(node) == inc
    }

    fn start(&mut self) {
        let nodes: Vec<NodeId> = self.kernel.topology().nodes().collect();
        for node in nodes {
            self.with_engine(node, |e, ctx| e.start(ctx));
        }
        for c in 0..self.clients.len() as u32 {
            // Spread client start times over the first millisecond.
            let jitter = self.work_rng.gen_range(0..1_000);
            let node = self.clients[c as usize].node;
            let inc = self.kernel.incarnation(node);
            self.kernel.schedule_in(jitter, node, Ev::Client { client: c, timer: ClientTimer::Start, inc });
        }
    }

    fn process(&mut self, node: NodeId, from: NodeId, msg: Msg) {
        if let Some(req) = msg.client_bound() {
            let c = req.client.0 as usize;
            if c < self.clients.len() && self.clients[c].node == node {
                let timeout = self.timeout_for(req.client.0);
                let now = self.now();
                let acts = self.clients[c].on_message(now, from, msg, &self.params, timeout);
                self.apply_client(req.client.0, acts);
            }
            return;
        }
        self.with_engine(node, |e, ctx| e.on_message(ctx, from, msg));
    }

    fn with_engine(&mut self, node: NodeId, f: impl FnOnce(&mut dyn ProtocolEngine, &mut Ctx)) {
        let local = self.kernel.node_clock(node).expect("engine runs on up nodes");
        let inc = self.kernel.incarnation(node);
        let mut ctx = Ctx::new(node, local, inc, self.kernel.topology(), &mut self.engine_rng);
        f(self.engine.as_mut(), &mut ctx);
        let actions = ctx.take();
        self.apply_engine(node, actions);
    }

    fn apply_engine(&mut self, node: NodeId, actions: Vec<Action>) {
        let inc = self.kernel.incarnation(node);
        for a in actions {
            match a {
                Action::Send { to, msg, delay: 0 } => self.send(node, to, msg),
                Action::Send { to, msg, delay } => {
                    self.kernel.schedule_in(delay, node, Ev::Outbox { to, msg, inc });
                }
                Action::SetTimer { after, timer } => {
                    self.kernel.schedule_in(after, node, Ev::Timer { timer, inc });
                }
                Action::Note(note) => match note {
                    Note::PdlCommitted { group, index, term } => self.commits.push(CommitRecord { group, index, term }),
                    Note::LeaderElected { .. } => self.notes.elections += 1,
                    Note::StaleRelease { .. } => self.notes.stale_releases += 1,
                    Note::Migrated { .. } => self.notes.migrations += 1,
                    Note::Reclassified { .. } => self.notes.reclassifications += 1,
                },
            }
        }
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Msg) {
        if matches!(msg, Msg::Acquire { .. }) {
            self.messages.acquires += 1;
        }
        let cross = self.kernel.topology().region_of(from) != self.kernel.topology().region_of(to);
        match self.kernel.send(from, to, 0, Ev::Deliver { from, msg }) {
            Some(_) => {
                self.messages.sent += 1;
                if cross {
                    self.messages.cross_region += 1;
                }
            }
            None => self.messages.dropped += 1,
        }
    }

    /// Acquire timeout: a multiple of the worst-case round trip to the node
    /// the client contacts first, floored by `min_timeout_us`.
    fn timeout_for(&self, client: u32) -> Micros {
        let c = &self.clients[client as usize];
        let topo = self.kernel.topology();
        let entry = self.engine.entry(c.node, crate::workload::HOT);
        let worst_rtt = topo.rtt(c.node, entry) as f64 * (1.0 + topo.jitter_frac());
        ((worst_rtt * self.spec.timeout_rtt_factor) as Micros).max(self.spec.min_timeout_us)
    }

    fn apply_client(&mut self, client: u32, actions: Vec<ClientAction>) {
        let node = self.clients[client as usize].node;
        let inc = self.kernel.incarnation(node);
        let now = self.now();
        for a in actions {
            match a {
                ClientAction::Send { to, msg } => self.send(node, to, msg),
                ClientAction::Timer { after, timer } => {
                    self.kernel.schedule_in(after, node, Ev::Client { client, timer, inc });
                }
                ClientAction::Section { resource, token, enter, exit } => {
                    self.sections.push(CsRecord { resource, token, holder: ClientId(client), t_enter: enter, t_exit: exit });
                }
                ClientAction::Completed { latency } => self.recorder.record(latency, now),
                ClientAction::Retry => self.recorder.retry(now),
                ClientAction::Failure => self.recorder.failure(now),
                ClientAction::Issued { resource } => {
                    self.client_req[client as usize] = Some(self.requests.len());
                    self.requests.push(RequestRecord {
                        client: ClientId(client),
                        node,
                        resource,
                        issued_at: now,
                        outcome: Outcome::Pending,
                    });
                }
                ClientAction::Resolved { granted, abandoned } => {
                    if let Some(i) = self.client_req[client as usize].take() {
                        self.requests[i].outcome = match (granted, abandoned) {
                            (true, _) => Outcome::Granted,
                            (false, true) => Outcome::Abandoned,
                            (false, false) => Outcome::Failed,
                        };
                    }
                }
            }
        }
        self.maybe_begin(client);
    }

    fn maybe_begin(&mut self, client: u32) {
        let c = &self.clients[client as usize];
        if !c.is_idle() || !self.kernel.is_up(c.node) || self.now() >= self.end {
            return;
        }
        let home = c.home;
        let node = c.node;
        let r = self.sampler.next_operation(self.contention, home, &mut self.work_rng);
        let entry = self.engine.entry(node, r);
        let timeout = self.timeout_for(client);
        let now = self.now();
        let acts = self.clients[client as usize].begin(now, r, entry, timeout);
        self.apply_client(client, acts);
    }

    fn crash(&mut self, node: NodeId) {
        if !self.kernel.is_up(node) {
            return;
        }
        self.kernel.crash(node);
        self.engine.on_crash(node);
        let inc = self.kernel.incarnation(node);
        let now = self.now();
        for c in self.by_node[node.index()].clone() {
            let acts = self.clients[c as usize].crash(now, inc);
            self.apply_client(c, acts);
        }
        for w in self.engine.suspect_watchers() {
            if w != node {
                self.kernel.schedule_in(self.liveness_timeout_us, w, Ev::Suspect { crashed: node, inc });
            }
        }
    }

    fn recover(&mut self, node: NodeId) {
        if self.kernel.is_up(node) {
            return;
        }
        self.kernel.recover(node);
        self.with_engine(node, |e, ctx| e.on_recover(ctx));
        for c in self.by_node[node.index()].clone() {
            self.maybe_begin(c);
        }
    }
}

/// Reachability of each request's required nodes under a fault schedule,
/// evaluated piecewise between fault boundaries.
pub struct FaultAvailability<'a> {
    topo: Topology,
    faults: &'a [Fault],
    engine: &'a dyn ProtocolEngine,
    cuts: Vec<Micros>,
}

impl<'a> FaultAvailability<'a> {
    pub fn new(topo: &Topology, faults: &'a [Fault], engine: &'a dyn ProtocolEngine) -> Self {
        let mut topo = topo.clone();
        let mut cuts = vec![0];
        for f in faults {
            match f {
                Fault::Crash { at_us, .. } | Fault::Recover { at_us, .. } => cuts.push(*at_us),
                Fault::Partition { side, start_us, end_us } => {
                    cuts.push(*start_us);
                    cuts.push(*end_us);
                    topo.add_partition(Partition {
                        side: side.iter().map(|n| NodeId(*n)).collect(),
                        start: *start_us,
                        end: *end_us,
                    });
                }
            }
        }
        cuts.sort_unstable();
        cuts.dedup();
        Self { topo, faults, engine, cuts }
    }

    fn up_at(&self, node: NodeId, t: Micros) -> bool {
        let mut up = true;
        let mut last = None;
        for f in self.faults {
            match f {
                Fault::Crash { node: n, at_us } | Fault::Recover { node: n, at_us } if *n == node.0 && *at_us <= t => {
                    if last.is_none_or(|l| *at_us >= l) {
                        up = matches!(f, Fault::Recover { .. });
                        last = Some(*at_us);
                    }
                }
                _ => {}
            }
        }
        up
    }

    fn available(&self, req: &RequestRecord, t: Micros) -> bool {
        if !self.up_at(req.node, t) {
            return true; // the client itself is gone; nothing is owed
        }
        let reach = |m: &NodeId| self.up_at(*m, t) && !self.topo.separated(req.node, *m, t);
        match self.engine.required(req.node, req.resource) {
            Requirement::All(ns) => ns.iter().all(reach),
            Requirement::Majority(ns) => ns.iter().filter(|m| reach(m)).count() > ns.len() / 2,
        }
    }
}

impl Availability for FaultAvailability<'_> {
    fn last_outage_end(&self, req: &RequestRecord, before: Micros) -> Option<Micros> {
        let mut last = None;
        for (i, &s) in self.cuts.iter().enumerate() {
            if s >= before {
                break;
            }
            let e = self.cuts.get(i + 1).copied().unwrap_or(Micros::MAX);
            if e <= req.issued_at {
                continue;
            }
            if !self.available(req, s.max(req.issued_at)) {
                last = Some(e);
            }
        }
        last
    }
}

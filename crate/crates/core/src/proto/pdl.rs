//! Quorum-replicated lock service: a leader-based log per replica group whose
//! applied state is the FIFO lock table.

use std::any::Any;
use std::collections::BTreeMap;

use rand::Rng;

use crate::lock::{
    Ctx, DenyReason, Msg, Note, PdlCommand, PdlEntry, PdlMsg, ProtocolEngine, Requirement, ResourceId, Timer,
};
use crate::sim::{Micros, NodeId, Topology};

use super::table::LockTable;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PdlConfig {
    /// Replica groups; resource `r` is served by group `r mod groups.len()`.
    pub groups: Vec<Vec<NodeId>>,
    /// Delay before appended entries count as persisted.
    pub durable_write_us: Micros,
    /// Mean election timeout; each wait is drawn from ±50% around it.
    pub election_timeout_us: Micros,
    pub heartbeat_us: Micros,
    /// Most entries carried by one append.
    pub max_batch: usize,
}

impl PdlConfig {
    /// One group of the first `g` nodes, timeouts derived from the
    /// intra-region one-way delay of the first member.
    pub fn single_group(topo: &Topology, g: usize) -> Self {
        let members: Vec<NodeId> = topo.nodes().take(g).collect();
        Self::with_groups(topo, vec![members])
    }

    pub fn with_groups(topo: &Topology, groups: Vec<Vec<NodeId>>) -> Self {
        let first = groups[0][0];
        let one_way = (topo.region_rtt(topo.region_of(first), topo.region_of(first)) / 2).max(1);
        let election = 10 * one_way;
        Self { groups, durable_write_us: 0, election_timeout_us: election, heartbeat_us: (election / 4).max(1), max_batch: 64 }
    }

    pub fn validate(&self, n: usize) -> Result<(), String> {
        if self.groups.is_empty() {
            return Err("at least one replica group is required".into());
        }
        for (i, g) in self.groups.iter().enumerate() {
            if g.is_empty() || g.len() % 2 == 0 {
                return Err(format!("group {i}: size {} must be odd", g.len()));
            }
            if g.len() > n {
                return Err(format!("group {i}: size {} exceeds node count {n}", g.len()));
            }
            if let Some(m) = g.iter().find(|m| m.index() >= n) {
                return Err(format!("group {i}: member {m} out of range"));
            }
        }
        Ok(())
    }
}

pub fn majority(g: usize) -> usize {
    g / 2 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Follower,
    Candidate,
    Leader,
}

/// One member's view of one group.
#[derive(Debug, Clone)]
pub struct Member {
    // Persistent.
    pub term: u64,
    pub voted_for: Option<NodeId>,
    pub log: Vec<PdlEntry>,
    // Volatile.
    pub role: Role,
    pub leader: Option<NodeId>,
    pub commit: u64,
    applied: u64,
    table: LockTable,
    votes: Vec<NodeId>,
    next_index: BTreeMap<NodeId, u64>,
    match_index: BTreeMap<NodeId, u64>,
    epoch: u64,
}

impl Member {
    fn new() -> Self {
        Self {
            term: 0,
            voted_for: None,
            log: Vec::new(),
            role: Role::Follower,
            leader: None,
            commit: 0,
            applied: 0,
            table: LockTable::default(),
            votes: Vec::new(),
            next_index: BTreeMap::new(),
            match_index: BTreeMap::new(),
            epoch: 0,
        }
    }

    fn lose_volatile(&mut self) {
        self.role = Role::Follower;
        self.leader = None;
        self.commit = 0;
        self.applied = 0;
        self.table = LockTable::default();
        self.votes.clear();
        self.next_index.clear();
        self.match_index.clear();
    }

    pub fn last_index(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn last_term(&self) -> u64 {
        self.log.last().map_or(0, |e| e.term)
    }

    fn term_at(&self, index: u64) -> u64 {
        if index == 0 {
            0
        } else {
            self.log[index as usize - 1].term
        }
    }

    pub fn table(&self) -> &LockTable {
        &self.table
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Timing {
    last_heard: i64,
    wait: Micros,
}

pub struct Pdl {
    cfg: PdlConfig,
    members: BTreeMap<(u16, NodeId), Member>,
    timing: BTreeMap<(u16, NodeId), Timing>,
    /// Most recently elected leader per group, used as the client entry point.
    hint: Vec<NodeId>,
    up: Vec<bool>,
}

impl Pdl {
    pub fn new(cfg: PdlConfig, n: usize) -> Self {
        let mut members = BTreeMap::new();
        let mut timing = BTreeMap::new();
        for (g, ms) in cfg.groups.iter().enumerate() {
            for m in ms {
                members.insert((g as u16, *m), Member::new());
                timing.insert((g as u16, *m), Timing { last_heard: 0, wait: 0 });
            }
        }
        let hint = cfg.groups.iter().map(|g| g[0]).collect();
        Self { cfg, members, timing, hint, up: vec![true; n] }
    }

    pub fn group_of(&self, r: ResourceId) -> u16 {
        (r.0 as usize % self.cfg.groups.len()) as u16
    }

    pub fn member(&self, group: u16, node: NodeId) -> Option<&Member> {
        self.members.get(&(group, node))
    }

    fn group_members(&self, g: u16) -> &[NodeId] {
        &self.cfg.groups[g as usize]
    }

    /// Up leader with the highest term per group.
    pub fn leader(&self, g: u16) -> Option<NodeId> {
        self.group_members(g)
            .iter()
            .filter(|m| self.up[m.index()])
            .filter_map(|m| {
                let st = &self.members[&(g, *m)];
                (st.role == Role::Leader).then_some((st.term, *m))
            })
            .max()
            .map(|(_, m)| m)
    }

    /// Term sequence of each group's authoritative log at the end of a run:
    /// the current leader's, or else the most up-to-date member's.
    pub fn final_logs(&self) -> BTreeMap<u16, Vec<u64>> {
        let mut out = BTreeMap::new();
        for g in 0..self.cfg.groups.len() as u16 {
            let node = self.leader(g).unwrap_or_else(|| {
                *self
                    .group_members(g)
                    .iter()
                    .max_by_key(|m| {
                        let st = &self.members[&(g, **m)];
                        (st.last_term(), st.last_index(), std::cmp::Reverse(m.0))
                    })
                    .expect("non-empty group")
            });
            out.insert(g, self.members[&(g, node)].log.iter().map(|e| e.term).collect());
        }
        out
    }

    fn groups_of(&self, node: NodeId) -> Vec<u16> {
        (0..self.cfg.groups.len() as u16).filter(|g| self.members.contains_key(&(*g, node))).collect()
    }

    fn arm(&mut self, ctx: &mut Ctx, g: u16) {
        let base = self.cfg.election_timeout_us as f64;
        let wait = (base * ctx.rng.gen_range(0.5..1.5)) as Micros;
        let m = self.members.get_mut(&(g, ctx.node)).expect("member");
        m.epoch += 1;
        let epoch = m.epoch;
        self.timing.insert((g, ctx.node), Timing { last_heard: ctx.local_now, wait });
        ctx.set_timer(wait.max(1), Timer::Election { group: g, epoch });
    }

    fn heard(&mut self, ctx: &Ctx, g: u16) {
        if let Some(t) = self.timing.get_mut(&(g, ctx.node)) {
            t.last_heard = ctx.local_now;
        }
    }

    /// Adopts a newer term, stepping down if needed.
    fn observe_term(&mut self, ctx: &mut Ctx, g: u16, term: u64) {
        let m = self.members.get_mut(&(g, ctx.node)).expect("member");
        if term > m.term {
            let was_leader = m.role == Role::Leader;
            m.term = term;
            m.voted_for = None;
            m.role = Role::Follower;
            m.leader = None;
            m.votes.clear();
            if was_leader {
                self.arm(ctx, g);
            }
        }
    }

    fn start_election(&mut self, ctx: &mut Ctx, g: u16) {
        let me = ctx.node;
        let peers: Vec<NodeId> = self.group_members(g).iter().copied().filter(|p| *p != me).collect();
        let m = self.members.get_mut(&(g, me)).expect("member");
        m.term += 1;
        m.role = Role::Candidate;
        m.voted_for = Some(me);
        m.leader = None;
        m.votes = vec![me];
        let (term, last_index, last_term) = (m.term, m.last_index(), m.last_term());
        if peers.is_empty() {
            self.become_leader(ctx, g);
            return;
        }
        for p in peers {
            let msg = PdlMsg::RequestVote { group: g, term, last_index, last_term };
            ctx.send_after(p, Msg::Pdl(msg), self.cfg.durable_write_us);
        }
        self.arm(ctx, g);
    }

    fn become_leader(&mut self, ctx: &mut Ctx, g: u16) {
        let me = ctx.node;
        let peers: Vec<NodeId> = self.group_members(g).to_vec();
        let m = self.members.get_mut(&(g, me)).expect("member");
        m.role = Role::Leader;
        m.leader = Some(me);
        let next = m.last_index() + 1;
        m.next_index = peers.iter().map(|p| (*p, next)).collect();
        m.match_index = peers.iter().map(|p| (*p, 0)).collect();
        let term = m.term;
        self.hint[g as usize] = me;
        ctx.note(Note::LeaderElected { group: g, term, leader: me });
        self.propose(ctx, g, PdlCommand::Noop);
        ctx.set_timer(self.cfg.heartbeat_us, Timer::Heartbeat { group: g });
    }
}

impl Pdl {
    fn propose(&mut self, ctx: &mut Ctx, g: u16, cmd: PdlCommand) {
        let me = ctx.node;
        let m = self.members.get_mut(&(g, me)).expect("member");
        let term = m.term;
        m.log.push(PdlEntry { term, cmd });
        let last = m.last_index();
        m.match_index.insert(me, last);
        let peers: Vec<NodeId> = self.group_members(g).iter().copied().filter(|p| *p != me).collect();
        for p in peers {
            self.send_append(ctx, g, p, false);
        }
        self.advance_commit(ctx, g);
    }

    /// Ships the entries `p` is missing, or an empty heartbeat when `p` is
    /// caught up and `heartbeat` is set. Assumes delivery: `next_index` moves
    /// past what was sent, and a rejection moves it back.
    fn send_append(&mut self, ctx: &mut Ctx, g: u16, p: NodeId, heartbeat: bool) {
        let batch = self.cfg.max_batch;
        let m = self.members.get_mut(&(g, ctx.node)).expect("member");
        let next = m.next_index[&p];
        let last = m.last_index();
        if next > last && !heartbeat {
            return;
        }
        let prev_index = next - 1;
        let end = last.min(prev_index + batch as u64);
        let entries = m.log[prev_index as usize..end as usize].to_vec();
        m.next_index.insert(p, end + 1);
        let msg = PdlMsg::Append { group: g, term: m.term, prev_index, prev_term: m.term_at(prev_index), entries, commit: m.commit };
        ctx.send(p, Msg::Pdl(msg));
    }

    fn advance_commit(&mut self, ctx: &mut Ctx, g: u16) {
        let need = majority(self.group_members(g).len());
        let m = self.members.get_mut(&(g, ctx.node)).expect("member");
        let mut matches: Vec<u64> = m.match_index.values().copied().collect();
        matches.sort_unstable_by(|a, b| b.cmp(a));
        let candidate = matches[need - 1];
        if candidate > m.commit && m.term_at(candidate) == m.term {
            for index in m.commit + 1..=candidate {
                ctx.note(Note::PdlCommitted { group: g, index, term: m.term_at(index) });
            }
            m.commit = candidate;
        }
        self.apply(ctx, g);
    }

    /// Applies committed entries; only the leader answers clients.
    fn apply(&mut self, ctx: &mut Ctx, g: u16) {
        let m = self.members.get_mut(&(g, ctx.node)).expect("member");
        let leader = m.role == Role::Leader;
        while m.applied < m.commit {
            m.applied += 1;
            let cmd = m.log[m.applied as usize - 1].cmd.clone();
            let (applied, released) = match cmd {
                PdlCommand::Noop => continue,
                PdlCommand::Acquire { resource, req } => (m.table.acquire(resource, req), None),
                PdlCommand::Release { resource, req, token } => (m.table.release(resource, token), Some((resource, req))),
                PdlCommand::Cleanup { node, incarnation } => (m.table.cleanup(node, incarnation), None),
            };
            if !leader {
                continue;
            }
            if let Some((resource, req)) = released {
                if applied.stale {
                    ctx.note(Note::StaleRelease { resource });
                }
                ctx.send(req.node, Msg::Released { resource, req });
            }
            for (resource, req, token) in applied.grants {
                ctx.send(req.node, Msg::Grant { resource, req, token, lease_us: None });
            }
        }
    }

    fn on_pdl(&mut self, ctx: &mut Ctx, from: NodeId, msg: PdlMsg) {
        let me = ctx.node;
        match msg {
            PdlMsg::Append { group: g, term, prev_index, prev_term, entries, commit } => {
                if !self.members.contains_key(&(g, me)) {
                    return;
                }
                self.observe_term(ctx, g, term);
                let m = self.members.get_mut(&(g, me)).expect("member");
                if term < m.term {
                    let msg = PdlMsg::AppendAck { group: g, term: m.term, success: false, match_index: 0 };
                    ctx.send(from, Msg::Pdl(msg));
                    return;
                }
                m.role = Role::Follower;
                m.leader = Some(from);
                if prev_index > m.last_index() || m.term_at(prev_index) != prev_term {
                    let hint = m.last_index().min(prev_index.saturating_sub(1));
                    let msg = PdlMsg::AppendAck { group: g, term: m.term, success: false, match_index: hint };
                    ctx.send(from, Msg::Pdl(msg));
                    self.heard(ctx, g);
                    return;
                }
                let wrote = !entries.is_empty();
                let mut idx = prev_index;
                for e in entries {
                    idx += 1;
                    if idx <= m.last_index() {
                        if m.term_at(idx) == e.term {
                            continue;
                        }
                        m.log.truncate(idx as usize - 1);
                    }
                    m.log.push(e);
                }
                m.commit = m.commit.max(commit.min(idx));
                let msg = PdlMsg::AppendAck { group: g, term: m.term, success: true, match_index: idx };
                let delay = if wrote { self.cfg.durable_write_us } else { 0 };
                ctx.send_after(from, Msg::Pdl(msg), delay);
                self.heard(ctx, g);
                self.apply(ctx, g);
            }
            PdlMsg::AppendAck { group: g, term, success, match_index } => {
                if !self.members.contains_key(&(g, me)) {
                    return;
                }
                self.observe_term(ctx, g, term);
                let m = self.members.get_mut(&(g, me)).expect("member");
                if m.role != Role::Leader || term != m.term {
                    return;
                }
                if success {
                    let cur = m.match_index.entry(from).or_insert(0);
                    *cur = (*cur).max(match_index);
                    let next = m.next_index.entry(from).or_insert(1);
                    *next = (*next).max(match_index + 1);
                    self.advance_commit(ctx, g);
                    self.send_append(ctx, g, from, false);
                } else {
                    let next = m.next_index.entry(from).or_insert(1);
                    *next = (*next).min(match_index + 1);
                    self.send_append(ctx, g, from, true);
                }
            }
            PdlMsg::RequestVote { group: g, term, last_index, last_term } => {
                if !self.members.contains_key(&(g, me)) {
                    return;
                }
                self.observe_term(ctx, g, term);
                let m = self.members.get_mut(&(g, me)).expect("member");
                let mine = (m.last_term(), m.last_index());
                let theirs = (last_term, last_index);
                let up_to_date = theirs > mine || (theirs == mine && from < me);
                let granted = term == m.term && m.voted_for.is_none_or(|v| v == from) && up_to_date;
                if granted {
                    m.voted_for = Some(from);
                }
                let reply = PdlMsg::Vote { group: g, term: m.term, granted };
                ctx.send_after(from, Msg::Pdl(reply), self.cfg.durable_write_us);
                if granted {
                    self.heard(ctx, g);
                }
            }
            PdlMsg::Vote { group: g, term, granted } => {
                if !self.members.contains_key(&(g, me)) {
                    return;
                }
                self.observe_term(ctx, g, term);
                let need = majority(self.group_members(g).len());
                let m = self.members.get_mut(&(g, me)).expect("member");
                if m.role != Role::Candidate || term != m.term || !granted || m.votes.contains(&from) {
                    return;
                }
                m.votes.push(from);
                if m.votes.len() >= need {
                    self.become_leader(ctx, g);
                }
            }
        }
    }

    fn on_client(&mut self, ctx: &mut Ctx, msg: Msg) {
        let Some(resource) = msg.resource() else { return };
        let g = self.group_of(resource);
        let me = ctx.node;
        let Some(m) = self.members.get(&(g, me)) else {
            if let Msg::Acquire { req, .. } = msg {
                let to = self.hint[g as usize];
                ctx.send(req.node, Msg::Deny { resource, req, reason: DenyReason::Redirect(to) });
            }
            return;
        };
        if m.role != Role::Leader {
            if let (Msg::Acquire { req, .. }, Some(l)) = (&msg, m.leader) {
                ctx.send(req.node, Msg::Deny { resource, req: *req, reason: DenyReason::Redirect(l) });
            }
            return;
        }
        let tail = &m.log[m.commit as usize..];
        match msg {
            Msg::Acquire { req, .. } => {
                if let Some((h, token)) = m.table.holder(resource) {
                    if h == req {
                        if m.applied == m.commit {
                            ctx.send(req.node, Msg::Grant { resource, req, token, lease_us: None });
                        }
                        return;
                    }
                }
                let queued = m.table.entry(resource).is_some_and(|e| e.queue.contains(&req));
                let pending = tail.iter().any(|e| matches!(e.cmd, PdlCommand::Acquire { req: q, .. } if q == req));
                if !queued && !pending {
                    self.propose(ctx, g, PdlCommand::Acquire { resource, req });
                }
            }
            Msg::Release { req, token, .. } => {
                let pending = tail.iter().any(|e| matches!(e.cmd, PdlCommand::Release { req: q, .. } if q == req));
                if !pending {
                    self.propose(ctx, g, PdlCommand::Release { resource, req, token });
                }
            }
            _ => {}
        }
    }
}

impl ProtocolEngine for Pdl {
    fn name(&self) -> &'static str {
        "PDL"
    }

    fn entry(&self, _client_node: NodeId, r: ResourceId) -> NodeId {
        self.hint[self.group_of(r) as usize]
    }

    fn required(&self, _client_node: NodeId, r: ResourceId) -> Requirement {
        Requirement::Majority(self.group_members(self.group_of(r)).to_vec())
    }

    fn start(&mut self, ctx: &mut Ctx) {
        for g in self.groups_of(ctx.node) {
            let first = self.group_members(g)[0];
            let m = self.members.get_mut(&(g, ctx.node)).expect("member");
            m.term = 1;
            m.voted_for = Some(first);
            m.leader = Some(first);
            if first == ctx.node {
                self.become_leader(ctx, g);
            } else {
                self.arm(ctx, g);
            }
        }
    }

    fn on_message(&mut self, ctx: &mut Ctx, from: NodeId, msg: Msg) {
        match msg {
            Msg::Pdl(p) => self.on_pdl(ctx, from, p),
            other => self.on_client(ctx, other),
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::Election { group: g, epoch } => {
                let Some(m) = self.members.get(&(g, ctx.node)) else { return };
                if m.epoch != epoch || m.role == Role::Leader {
                    return;
                }
                let t = self.timing[&(g, ctx.node)];
                let elapsed = (ctx.local_now - t.last_heard).max(0) as Micros;
                if elapsed >= t.wait {
                    self.start_election(ctx, g);
                } else {
                    ctx.set_timer(t.wait - elapsed, Timer::Election { group: g, epoch });
                }
            }
            Timer::Heartbeat { group: g } => {
                let Some(m) = self.members.get(&(g, ctx.node)) else { return };
                if m.role != Role::Leader {
                    return;
                }
                let peers: Vec<NodeId> = self.group_members(g).iter().copied().filter(|p| *p != ctx.node).collect();
                for p in peers {
                    // Rewind to the acknowledged prefix so lost appends are resent.
                    let m = self.members.get_mut(&(g, ctx.node)).expect("member");
                    let acked = m.match_index.get(&p).copied().unwrap_or(0);
                    m.next_index.insert(p, acked + 1);
                    self.send_append(ctx, g, p, true);
                }
                ctx.set_timer(self.cfg.heartbeat_us, Timer::Heartbeat { group: g });
            }
            _ => {}
        }
    }

    fn on_crash(&mut self, node: NodeId) {
        self.up[node.index()] = false;
        for g in self.groups_of(node) {
            self.members.get_mut(&(g, node)).expect("member").lose_volatile();
        }
    }

    fn on_recover(&mut self, ctx: &mut Ctx) {
        self.up[ctx.node.index()] = true;
        for g in self.groups_of(ctx.node) {
            self.arm(ctx, g);
        }
    }

    fn suspect_watchers(&self) -> Vec<NodeId> {
        let mut all: Vec<NodeId> = self.cfg.groups.iter().flatten().copied().collect();
        all.sort();
        all.dedup();
        all
    }

    fn on_suspect(&mut self, ctx: &mut Ctx, node: NodeId, incarnation: u32) {
        for g in self.groups_of(ctx.node) {
            if self.members[&(g, ctx.node)].role == Role::Leader {
                self.propose(ctx, g, PdlCommand::Cleanup { node, incarnation });
            }
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

//! Closed-loop client population.
//!
//! Each client repeats acquire → hold → release and starts its next operation
//! as soon as the release is sent. Contention is a single shared hot resource
//! (resource 0) picked with probability `c`; other picks are uniform over the
//! remaining resources, optionally biased towards the client's home region.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lock::{ClientId, DenyReason, FencingToken, Msg, RequestId, ResourceId};
use crate::sim::{Micros, NodeId, RegionId, MS, SEC};

pub const HOT: ResourceId = ResourceId(0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    pub resources: u32,
    pub contention: f64,
    pub locality: f64,
    pub clients: u32,
    pub hold_time_us: Micros,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub interval_s: f64,
    /// `(time_s, contention)` steps applied in order.
    pub fluctuation: Vec<(f64, f64)>,
    /// Acquire timeout as a multiple of the worst-case round trip to the
    /// first contact node.
    pub timeout_rtt_factor: f64,
    /// Floor for the acquire timeout, covering server-side processing.
    pub min_timeout_us: Micros,
    /// Retries of one acquire before the client abandons it.
    pub max_retries: u32,
    /// Attempts of one optimistic commit before it is surfaced as a failure.
    pub occ_max_attempts: u32,
    pub occ_backoff_us: Micros,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            resources: 100,
            contention: 0.0,
            locality: 0.0,
            clients: 16,
            hold_time_us: MS,
            duration_s: 60.0,
            warmup_s: 10.0,
            interval_s: 1.0,
            fluctuation: Vec::new(),
            timeout_rtt_factor: 4.0,
            min_timeout_us: 5 * MS,
            max_retries: 40,
            occ_max_attempts: 8,
            occ_backoff_us: 200,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.contention) {
            return Err("workload.contention must be in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.locality) {
            return Err("workload.locality must be in [0,1]".into());
        }
        if self.resources == 0 || (self.contention < 1.0 && self.resources < 2) {
            return Err("workload.resources must be >= 2 when contention < 1".into());
        }
        if self.clients == 0 {
            return Err("workload.clients must be positive".into());
        }
        if self.interval_s <= 0.0 || self.duration_s <= self.warmup_s || self.warmup_s < 0.0 {
            return Err("workload: need 0 <= warmup_s < duration_s and interval_s > 0".into());
        }
        for (i, (_, c)) in self.fluctuation.iter().enumerate() {
            if !(0.0..=1.0).contains(c) {
                return Err(format!("workload.fluctuation[{i}] contention outside [0,1]"));
            }
        }
        if self.occ_max_attempts == 0 {
            return Err("workload.occ_max_attempts must be positive".into());
        }
        Ok(())
    }

    pub fn duration_us(&self) -> Micros {
        (self.duration_s * SEC as f64).round() as Micros
    }

    pub fn warmup_us(&self) -> Micros {
        (self.warmup_s * SEC as f64).round() as Micros
    }

    pub fn interval_us(&self) -> Micros {
        (self.interval_s * SEC as f64).round() as Micros
    }
}

/// Picks target resources. Non-hot resources are split into per-region pools
/// by `r mod regions`.
#[derive(Debug, Clone)]
pub struct Sampler {
    resources: u32,
    regions: u16,
    locality: f64,
}

impl Sampler {
    pub fn new(spec: &WorkloadSpec, regions: usize) -> Self {
        Self { resources: spec.resources, regions: regions.max(1) as u16, locality: spec.locality }
    }

    pub fn home_region(&self, r: ResourceId) -> RegionId {
        if r == HOT {
            RegionId(0)
        } else {
            RegionId((r.0 % self.regions as u32) as u16)
        }
    }

    /// With probability `contention` the hot resource, else a uniform draw
    /// over the others. With several regions, that draw stays inside the
    /// client's home pool with probability `locality` and otherwise goes to
    /// the other pools.
    pub fn next_operation(&self, contention: f64, home: RegionId, rng: &mut ChaCha8Rng) -> ResourceId {
        if self.resources == 1 || rng.gen_bool(contention.clamp(0.0, 1.0)) {
            return HOT;
        }
        let others = self.resources - 1;
        if self.regions <= 1 {
            return ResourceId(1 + rng.gen_range(0..others));
        }
        let k = self.regions as u32;
        let h = home.0 as u32;
        let last = self.resources - 1;
        // Members of pool h within 1..=last are h, h+k, ... (0 excluded).
        let first = if h == 0 { k } else { h };
        let home_size = if first > last { 0 } else { (last - first) / k + 1 };
        if rng.gen_bool(self.locality) && home_size > 0 {
            return ResourceId(first + rng.gen_range(0..home_size) * k);
        }
        if home_size == others {
            return ResourceId(1 + rng.gen_range(0..others));
        }
        loop {
            let r = 1 + rng.gen_range(0..others);
            if r % k != h {
                return ResourceId(r);
            }
        }
    }
}

/// Client-side timers; stale generations are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientTimer {
    Start,
    Timeout { gen: u64 },
    HoldEnd { gen: u64 },
    LeaseLapse { gen: u64, lease_gen: u64 },
    Renew { gen: u64, lease_gen: u64 },
    OccRetry { gen: u64 },
    ReleaseRetry { req: RequestId },
}

/// What a client asks the run to do.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientAction {
    Send { to: NodeId, msg: Msg },
    Timer { after: Micros, timer: ClientTimer },
    /// A critical section ended (true time).
    Section { resource: ResourceId, token: FencingToken, enter: Micros, exit: Micros },
    Completed { latency: Micros },
    Retry,
    Failure,
    /// Request lifecycle for the liveness checker.
    Issued { resource: ResourceId },
    Resolved { granted: bool, abandoned: bool },
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Idle,
    Acquiring {
        resource: ResourceId,
        req: RequestId,
        target: NodeId,
        started: Micros,
        retries: u32,
    },
    Holding {
        resource: ResourceId,
        req: RequestId,
        token: FencingToken,
        authority: NodeId,
        started: Micros,
        granted: Micros,
        /// True-time end of holder-side validity (lease protocols).
        valid_until: Option<Micros>,
        lease_gen: u64,
    },
    Optimistic {
        resource: ResourceId,
        req: RequestId,
        target: NodeId,
        started: Micros,
        attempts: u32,
        expected: u64,
        committing: bool,
    },
}

#[derive(Debug, Clone)]
struct PendingRelease {
    resource: ResourceId,
    token: FencingToken,
    to: NodeId,
    tries: u32,
}

/// Parameters the client loop needs from the rest of the run.
#[derive(Debug, Clone, Copy)]
pub struct ClientParams {
    pub hold_time_us: Micros,
    pub skew_us: Micros,
    pub max_retries: u32,
    pub occ_max_attempts: u32,
    pub occ_backoff_us: Micros,
}

/// One closed-loop client. Never has more than one outstanding acquire.
#[derive(Debug, Clone)]
pub struct Client {
    pub id: ClientId,
    pub node: NodeId,
    pub home: RegionId,
    incarnation: u32,
    next_seq: u32,
    gen: u64,
    phase: Phase,
    routes: HashMap<ResourceId, NodeId>,
    releases: HashMap<RequestId, PendingRelease>,
}

impl Client {
    pub fn new(id: ClientId, node: NodeId, home: RegionId) -> Self {
        Self {
            id,
            node,
            home,
            incarnation: 0,
            next_seq: 0,
            gen: 0,
            phase: Phase::Idle,
            routes: HashMap::new(),
            releases: HashMap::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.phase == Phase::Idle
    }

    pub fn outstanding_acquires(&self) -> usize {
        matches!(self.phase, Phase::Acquiring { .. }) as usize
    }

    /// Resource of the acquire in flight, if any.
    pub fn acquiring(&self) -> Option<ResourceId> {
        match self.phase {
            Phase::Acquiring { resource, .. } | Phase::Optimistic { resource, .. } => Some(resource),
            _ => None,
        }
    }

    /// After a timeout, falls back from a cached or redirected target to the
    /// protocol's current entry point.
    pub fn refresh_target(&mut self, entry: NodeId) {
        if let Phase::Acquiring { resource, target, retries, .. } = &mut self.phase {
            if *retries >= 1 && *target != entry {
                *target = entry;
                self.routes.remove(resource);
            }
        }
    }

    pub fn pending_release(&self, req: RequestId) -> Option<ResourceId> {
        self.releases.get(&req).map(|pr| pr.resource)
    }

    /// Like `refresh_target`, for a release that keeps timing out.
    pub fn refresh_release(&mut self, req: RequestId, entry: NodeId) {
        if let Some(pr) = self.releases.get_mut(&req) {
            if pr.tries >= 1 {
                pr.to = entry;
            }
        }
    }

    fn new_req(&mut self) -> RequestId {
        self.next_seq += 1;
        RequestId { client: self.id, node: self.node, seq: ((self.incarnation as u64) << 32) | self.next_seq as u64 }
    }

    fn target(&self, r: ResourceId, default: NodeId) -> NodeId {
        self.routes.get(&r).copied().unwrap_or(default)
    }

    /// Begins the next operation on `resource`.
    pub fn begin(&mut self, now: Micros, resource: ResourceId, default_entry: NodeId, timeout: Micros) -> Vec<ClientAction> {
        debug_assert!(self.is_idle());
        self.gen += 1;
        let req = self.new_req();
        let target = self.target(resource, default_entry);
        self.phase = Phase::Acquiring { resource, req, target, started: now, retries: 0 };
        vec![
            ClientAction::Issued { resource },
            ClientAction::Send { to: target, msg: Msg::Acquire { resource, req } },
            ClientAction::Timer { after: timeout, timer: ClientTimer::Timeout { gen: self.gen } },
        ]
    }

    /// Drops volatile state. Returns the section cut short by the crash.
    pub fn crash(&mut self, now: Micros, new_incarnation: u32) -> Vec<ClientAction> {
        let mut out = Vec::new();
        match std::mem::replace(&mut self.phase, Phase::Idle) {
            Phase::Holding { resource, token, granted, valid_until, .. } => {
                let exit = valid_until.map_or(now, |v| v.min(now));
                out.push(ClientAction::Section { resource, token, enter: granted, exit });
                out.push(ClientAction::Resolved { granted: true, abandoned: false });
            }
            Phase::Acquiring { .. } => out.push(ClientAction::Resolved { granted: false, abandoned: true }),
            Phase::Optimistic { .. } => out.push(ClientAction::Resolved { granted: false, abandoned: true }),
            Phase::Idle => {}
        }
        self.gen += 1;
        self.incarnation = new_incarnation;
        self.next_seq = 0;
        self.routes.clear();
        self.releases.clear();
        out
    }

    pub fn on_timer(&mut self, now: Micros, timer: ClientTimer, p: &ClientParams, timeout: Micros) -> Vec<ClientAction> {
        let mut out = Vec::new();
        match timer {
            ClientTimer::Start => {}
            ClientTimer::Timeout { gen } if gen == self.gen => match &mut self.phase {
                Phase::Acquiring { resource, req, target, retries, .. } => {
                    *retries += 1;
                    if *retries > p.max_retries {
                        self.phase = Phase::Idle;
                        out.push(ClientAction::Failure);
                        out.push(ClientAction::Resolved { granted: false, abandoned: true });
                        return out;
                    }
                    out.push(ClientAction::Retry);
                    out.push(ClientAction::Send { to: *target, msg: Msg::Acquire { resource: *resource, req: *req } });
                    let backoff = timeout.saturating_mul(1 << (*retries).min(6));
                    out.push(ClientAction::Timer { after: backoff, timer: ClientTimer::Timeout { gen } });
                }
                Phase::Optimistic { resource, req, target, attempts, expected, committing, .. } => {
                    // Lost read or commit: resend whichever was in flight.
                    *attempts += 1;
                    if *attempts > p.occ_max_attempts {
                        self.phase = Phase::Idle;
                        out.push(ClientAction::Failure);
                        out.push(ClientAction::Resolved { granted: false, abandoned: true });
                        return out;
                    }
                    out.push(ClientAction::Retry);
                    let msg = if *committing {
                        Msg::Commit { resource: *resource, req: *req, expected: *expected }
                    } else {
                        Msg::Acquire { resource: *resource, req: *req }
                    };
                    out.push(ClientAction::Send { to: *target, msg });
                    out.push(ClientAction::Timer { after: timeout * 2, timer: ClientTimer::Timeout { gen } });
                }
                _ => {}
            },
            ClientTimer::HoldEnd { gen } if gen == self.gen => {
                if let Phase::Holding { resource, req, token, authority, started, granted, valid_until, .. } = self.phase {
                    self.phase = Phase::Idle;
                    match valid_until {
                        Some(v) if v <= now => {
                            out.push(ClientAction::Section { resource, token, enter: granted, exit: v });
                            out.push(ClientAction::Failure);
                        }
                        _ => {
                            out.push(ClientAction::Section { resource, token, enter: granted, exit: now });
                            out.push(ClientAction::Completed { latency: granted - started });
                        }
                    }
                    self.releases.insert(req, PendingRelease { resource, token, to: authority, tries: 0 });
                    out.push(ClientAction::Send { to: authority, msg: Msg::Release { resource, req, token } });
                    out.push(ClientAction::Timer { after: timeout, timer: ClientTimer::ReleaseRetry { req } });
                }
            }
            ClientTimer::LeaseLapse { gen, lease_gen } if gen == self.gen => {
                if let Phase::Holding { resource, token, granted, valid_until: Some(v), lease_gen: lg, .. } = self.phase {
                    if lg == lease_gen && v <= now {
                        self.phase = Phase::Idle;
                        out.push(ClientAction::Section { resource, token, enter: granted, exit: v });
                        out.push(ClientAction::Failure);
                    }
                }
            }
            ClientTimer::Renew { gen, lease_gen } if gen == self.gen => {
                if let Phase::Holding { resource, req, token, authority, lease_gen: lg, .. } = self.phase {
                    if lg == lease_gen {
                        out.push(ClientAction::Send { to: authority, msg: Msg::Renew { resource, req, token } });
                    }
                }
            }
            ClientTimer::OccRetry { gen } if gen == self.gen => {
                if let Phase::Optimistic { resource, req, target, expected, committing, .. } = &mut self.phase {
                    *committing = true;
                    out.push(ClientAction::Send {
                        to: *target,
                        msg: Msg::Commit { resource: *resource, req: *req, expected: *expected },
                    });
                    out.push(ClientAction::Timer { after: timeout * 2, timer: ClientTimer::Timeout { gen } });
                }
            }
            ClientTimer::ReleaseRetry { req } => {
                if let Some(pr) = self.releases.get_mut(&req) {
                    pr.tries += 1;
                    if pr.tries > p.max_retries {
                        self.releases.remove(&req);
                    } else {
                        let msg = Msg::Release { resource: pr.resource, req, token: pr.token };
                        out.push(ClientAction::Send { to: pr.to, msg });
                        let backoff = timeout.saturating_mul(1 << pr.tries.min(6));
                        out.push(ClientAction::Timer { after: backoff, timer: ClientTimer::ReleaseRetry { req } });
                    }
                }
            }
            _ => {}
        }
        out
    }

    /// Handles a reply. `from` is the sending node.
    pub fn on_message(&mut self, now: Micros, from: NodeId, msg: Msg, p: &ClientParams, timeout: Micros) -> Vec<ClientAction> {
        let mut out = Vec::new();
        match msg {
            Msg::Grant { resource, req, token, lease_us } => {
                let current = match self.phase {
                    Phase::Acquiring { req: want, started, .. } if want == req => Some(started),
                    _ => None,
                };
                let Some(started) = current else {
                    // A grant for a request this client already gave up on:
                    // hand it back so the resource is not stranded.
                    let held = matches!(self.phase, Phase::Holding { req: h, .. } if h == req);
                    if !held && !self.releases.contains_key(&req) && req.incarnation() == self.incarnation {
                        out.push(ClientAction::Send { to: from, msg: Msg::Release { resource, req, token } });
                    }
                    return out;
                };
                self.routes.insert(resource, from);
                self.gen += 1;
                let valid_until = lease_us.map(|l| now + l.saturating_sub(p.skew_us));
                if let Some(v) = valid_until {
                    if v <= now {
                        // Nothing usable; give the lock straight back.
                        self.phase = Phase::Idle;
                        out.push(ClientAction::Resolved { granted: true, abandoned: false });
                        out.push(ClientAction::Failure);
                        self.releases.insert(req, PendingRelease { resource, token, to: from, tries: 0 });
                        out.push(ClientAction::Send { to: from, msg: Msg::Release { resource, req, token } });
                        out.push(ClientAction::Timer { after: timeout, timer: ClientTimer::ReleaseRetry { req } });
                        return out;
                    }
                }
                self.phase = Phase::Holding {
                    resource,
                    req,
                    token,
                    authority: from,
                    started,
                    granted: now,
                    valid_until,
                    lease_gen: 0,
                };
                out.push(ClientAction::Resolved { granted: true, abandoned: false });
                out.push(ClientAction::Timer { after: p.hold_time_us, timer: ClientTimer::HoldEnd { gen: self.gen } });
                if let (Some(v), Some(l)) = (valid_until, lease_us) {
                    self.lease_timers(&mut out, now, v, l, 0);
                }
            }
            Msg::Renewed { req, token, lease_us, .. } => {
                if let Phase::Holding { req: r, token: t, valid_until: Some(v), lease_gen, .. } = &mut self.phase {
                    if *r == req && *t == token {
                        let nv = now + lease_us.saturating_sub(p.skew_us);
                        if nv > *v {
                            *v = nv;
                            *lease_gen += 1;
                            let (nv, lg) = (*v, *lease_gen);
                            self.lease_timers(&mut out, now, nv, lease_us, lg);
                        }
                    }
                }
            }
            Msg::Deny { resource, req, reason } => self.on_deny(now, resource, req, reason, p, timeout, &mut out),
            Msg::Released { req, .. } => {
                self.releases.remove(&req);
            }
            Msg::Expire { req, token, .. } => {
                // The manager already cleared the lease; stop at once.
                if let Phase::Holding { resource, req: r, token: t, granted, valid_until, .. } = self.phase {
                    if r == req && t == token {
                        self.phase = Phase::Idle;
                        self.gen += 1;
                        let exit = valid_until.map_or(now, |v| v.min(now));
                        out.push(ClientAction::Section { resource, token, enter: granted, exit });
                        out.push(ClientAction::Failure);
                    }
                }
            }
            Msg::Version { req, version, .. } => {
                if let Phase::Optimistic { req: r, expected, committing, .. } = &mut self.phase {
                    if *r == req && !*committing {
                        *expected = version;
                        self.gen += 1;
                        out.push(ClientAction::Timer { after: p.hold_time_us, timer: ClientTimer::OccRetry { gen: self.gen } });
                    }
                }
            }
            Msg::Committed { req, .. } => {
                if let Phase::Optimistic { req: r, started, committing: true, .. } = self.phase {
                    if r == req {
                        self.phase = Phase::Idle;
                        self.gen += 1;
                        let latency = (now - started).saturating_sub(p.hold_time_us);
                        out.push(ClientAction::Resolved { granted: true, abandoned: false });
                        out.push(ClientAction::Completed { latency });
                    }
                }
            }
            Msg::Abort { req, version, .. } => {
                if let Phase::Optimistic { req: r, attempts, expected, committing, .. } = &mut self.phase {
                    if *r == req && *committing {
                        *attempts += 1;
                        self.gen += 1;
                        if *attempts >= p.occ_max_attempts {
                            self.phase = Phase::Idle;
                            out.push(ClientAction::Failure);
                            out.push(ClientAction::Resolved { granted: false, abandoned: true });
                            return out;
                        }
                        *expected = version;
                        *committing = false;
                        let backoff = p.occ_backoff_us.saturating_mul(1 << (*attempts - 1).min(6));
                        out.push(ClientAction::Retry);
                        // Redo the work on the fresh version after backing off.
                        out.push(ClientAction::Timer {
                            after: backoff + p.hold_time_us,
                            timer: ClientTimer::OccRetry { gen: self.gen },
                        });
                    }
                }
            }
            _ => {}
        }
        out
    }

    fn lease_timers(&self, out: &mut Vec<ClientAction>, now: Micros, valid_until: Micros, lease: Micros, lease_gen: u64) {
        out.push(ClientAction::Timer {
            after: valid_until - now,
            timer: ClientTimer::LeaseLapse { gen: self.gen, lease_gen },
        });
        out.push(ClientAction::Timer { after: lease / 2, timer: ClientTimer::Renew { gen: self.gen, lease_gen } });
    }

    #[allow(clippy::too_many_arguments)]
    fn on_deny(
        &mut self,
        now: Micros,
        resource: ResourceId,
        req: RequestId,
        reason: DenyReason,
        p: &ClientParams,
        timeout: Micros,
        out: &mut Vec<ClientAction>,
    ) {
        if let Some(pr) = self.releases.get_mut(&req) {
            if let DenyReason::Redirect(to) = reason {
                pr.to = to;
                out.push(ClientAction::Send { to, msg: Msg::Release { resource, req, token: pr.token } });
            }
            return;
        }
        match (&mut self.phase, reason) {
            (Phase::Acquiring { req: r, target, .. }, DenyReason::Redirect(to)) if *r == req => {
                *target = to;
                self.routes.insert(resource, to);
                out.push(ClientAction::Send { to, msg: Msg::Acquire { resource, req } });
            }
            (Phase::Acquiring { req: r, target, started, .. }, DenyReason::UseOptimistic(version)) if *r == req => {
                let (target, started) = (*target, *started);
                self.gen += 1;
                self.phase = Phase::Optimistic {
                    resource,
                    req,
                    target,
                    started,
                    attempts: 0,
                    expected: version,
                    committing: false,
                };
                out.push(ClientAction::Timer { after: p.hold_time_us, timer: ClientTimer::OccRetry { gen: self.gen } });
            }
            (Phase::Optimistic { req: r, target, started, .. }, DenyReason::UseLock) if *r == req => {
                let (target, started) = (*target, *started);
                self.gen += 1;
                self.phase = Phase::Acquiring { resource, req, target, started, retries: 0 };
                out.push(ClientAction::Send { to: target, msg: Msg::Acquire { resource, req } });
                out.push(ClientAction::Timer { after: timeout, timer: ClientTimer::Timeout { gen: self.gen } });
            }
            (Phase::Optimistic { req: r, expected, committing: false, .. }, DenyReason::UseOptimistic(version))
                if *r == req =>
            {
                // Answer to a re-sent read.
                *expected = version;
                self.gen += 1;
                out.push(ClientAction::Timer { after: p.hold_time_us, timer: ClientTimer::OccRetry { gen: self.gen } });
            }
            (Phase::Optimistic { req: r, target, committing, .. }, DenyReason::Redirect(to)) if *r == req => {
                *target = to;
                *committing = false;
                self.gen += 1;
                out.push(ClientAction::Timer { after: timeout * 2, timer: ClientTimer::Timeout { gen: self.gen } });
                self.routes.insert(resource, to);
                out.push(ClientAction::Send { to, msg: Msg::Acquire { resource, req } });
            }
            (Phase::Holding { req: r, resource: res, token, granted, valid_until, .. }, DenyReason::Expired | DenyReason::Stale)
                if *r == req =>
            {
                // Renewal refused: stop using the lock now.
                let (res, token, granted) = (*res, *token, *granted);
                let exit = valid_until.map_or(now, |v| v.min(now));
                self.phase = Phase::Idle;
                self.gen += 1;
                out.push(ClientAction::Section { resource: res, token, enter: granted, exit });
                out.push(ClientAction::Failure);
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn freq(spec: &WorkloadSpec, regions: usize, home: RegionId, draws: usize) -> Vec<usize> {
        let s = Sampler::new(spec, regions);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0usize; spec.resources as usize];
        for _ in 0..draws {
            counts[s.next_operation(spec.contention, home, &mut rng).0 as usize] += 1;
        }
        counts
    }

    #[test]
    fn full_contention_always_hot() {
        let spec = WorkloadSpec { contention: 1.0, resources: 10, ..Default::default() };
        let c = freq(&spec, 1, RegionId(0), 1000);
        assert_eq!(c[0], 1000);
    }

    #[test]
    fn zero_contention_uniform_over_rest() {
        let spec = WorkloadSpec { contention: 0.0, resources: 101, ..Default::default() };
        let c = freq(&spec, 1, RegionId(0), 100_000);
        assert_eq!(c[0], 0);
        for (r, n) in c.iter().enumerate().skip(1) {
            let f = *n as f64 / 100_000.0;
            assert!((f - 0.01).abs() <= 0.02, "resource {r}: {f}");
        }
    }

    #[test]
    fn hot_frequency_tracks_contention() {
        let spec = WorkloadSpec { contention: 0.4, resources: 50, ..Default::default() };
        let c = freq(&spec, 1, RegionId(0), 100_000);
        let f = c[0] as f64 / 100_000.0;
        assert!((f - 0.4).abs() <= 0.02, "{f}");
    }

    #[test]
    fn locality_keeps_draws_home() {
        let spec = WorkloadSpec { contention: 0.0, locality: 1.0, resources: 31, ..Default::default() };
        let s = Sampler::new(&spec, 3);
        let c = freq(&spec, 3, RegionId(2), 10_000);
        for (r, n) in c.iter().enumerate() {
            if *n > 0 {
                assert_eq!(s.home_region(ResourceId(r as u32)), RegionId(2));
            }
        }
        let c0 = freq(&spec, 3, RegionId(0), 10_000);
        assert_eq!(c0[0], 0);
        assert!(c0.iter().enumerate().all(|(r, n)| *n == 0 || r % 3 == 0));
    }

    #[test]
    fn partial_locality_share() {
        let spec = WorkloadSpec { contention: 0.0, locality: 0.9, resources: 301, ..Default::default() };
        let s = Sampler::new(&spec, 3);
        let c = freq(&spec, 3, RegionId(1), 100_000);
        let home: usize = c.iter().enumerate().filter(|(r, _)| s.home_region(ResourceId(*r as u32)) == RegionId(1)).map(|(_, n)| n).sum();
        let f = home as f64 / 100_000.0;
        assert!((f - 0.9).abs() < 0.01, "{f}");
    }

    fn params() -> ClientParams {
        ClientParams { hold_time_us: 1_000, skew_us: 0, max_retries: 3, occ_max_attempts: 8, occ_backoff_us: 100 }
    }

    #[test]
    fn closed_loop_single_outstanding_acquire() {
        let mut c = Client::new(ClientId(0), NodeId(1), RegionId(0));
        let acts = c.begin(0, ResourceId(3), NodeId(0), 100);
        assert_eq!(c.outstanding_acquires(), 1);
        let req = match &acts[1] {
            ClientAction::Send { msg: Msg::Acquire { req, .. }, .. } => *req,
            other => panic!("{other:?}"),
        };
        let p = params();
        let grant = Msg::Grant { resource: ResourceId(3), req, token: FencingToken(1), lease_us: None };
        let acts = c.on_message(50, NodeId(0), grant, &p, 100);
        assert_eq!(c.outstanding_acquires(), 0);
        let gen = acts
            .iter()
            .find_map(|a| match a {
                ClientAction::Timer { timer: ClientTimer::HoldEnd { gen }, .. } => Some(*gen),
                _ => None,
            })
            .unwrap();
        let acts = c.on_timer(1_050, ClientTimer::HoldEnd { gen }, &p, 100);
        assert!(acts.contains(&ClientAction::Completed { latency: 50 }));
        assert!(acts.contains(&ClientAction::Section { resource: ResourceId(3), token: FencingToken(1), enter: 50, exit: 1_050 }));
        assert!(c.is_idle());
    }

    #[test]
    fn retry_reuses_request_id_and_gives_up() {
        let mut c = Client::new(ClientId(0), NodeId(1), RegionId(0));
        let acts = c.begin(0, ResourceId(3), NodeId(0), 100);
        let ClientAction::Timer { timer, .. } = acts[2] else { panic!() };
        let p = params();
        let first = c.on_timer(100, timer, &p, 100);
        assert!(first.contains(&ClientAction::Retry));
        let same_req = first.iter().any(|a| matches!(a, ClientAction::Send { msg: Msg::Acquire { req, .. }, .. } if req.seq == 1));
        assert!(same_req);
        for _ in 0..3 {
            c.on_timer(100, timer, &p, 100);
        }
        assert!(c.is_idle());
    }

    #[test]
    fn lease_validity_shortened_by_skew() {
        let mut c = Client::new(ClientId(0), NodeId(1), RegionId(0));
        let acts = c.begin(0, ResourceId(3), NodeId(0), 100);
        let ClientAction::Send { msg: Msg::Acquire { req, .. }, .. } = acts[1] else { panic!() };
        let p = ClientParams { skew_us: 50, hold_time_us: 10_000, ..params() };
        let acts = c.on_message(10, NodeId(0), Msg::Grant { resource: ResourceId(3), req, token: FencingToken(4), lease_us: Some(200) }, &p, 100);
        let lapse = acts
            .iter()
            .find_map(|a| match a {
                ClientAction::Timer { after, timer: ClientTimer::LeaseLapse { .. } } => Some(*after),
                _ => None,
            })
            .unwrap();
        assert_eq!(lapse, 150);
    }
}

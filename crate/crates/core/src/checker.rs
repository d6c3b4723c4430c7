//! Post-hoc safety and liveness oracles over the true-time trace.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::lock::{ClientId, FencingToken, ResourceId};
use crate::sim::{Micros, NodeId};

/// One critical section in true time, half-open `[t_enter, t_exit)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CsRecord {
    pub resource: ResourceId,
    pub token: FencingToken,
    pub holder: ClientId,
    pub t_enter: Micros,
    pub t_exit: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    Overlap { first: CsRecord, second: CsRecord },
    TokenRegression { first: CsRecord, second: CsRecord },
    NegativeInterval(CsRecord),
    Stalled { client: ClientId, issued_at: Micros },
    LostCommit { group: u16, index: u64, term: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub checked: usize,
    pub excused: usize,
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Passed, but only because some items were excused.
    pub fn conditional(&self) -> bool {
        self.passed() && self.excused > 0
    }

    pub fn label(&self) -> &'static str {
        match (self.passed(), self.excused > 0) {
            (true, false) => "passed",
            (true, true) => "conditionally passed",
            (false, _) => "failed",
        }
    }
}

/// Per resource, sorts by `t_enter` and flags overlapping neighbours and
/// tokens that do not strictly increase in entry order.
pub fn check_mutual_exclusion(records: &[CsRecord]) -> Verdict {
    let mut by_res: BTreeMap<ResourceId, Vec<CsRecord>> = BTreeMap::new();
    let mut violations = Vec::new();
    for r in records {
        if r.t_exit < r.t_enter {
            violations.push(Violation::NegativeInterval(*r));
        }
        by_res.entry(r.resource).or_default().push(*r);
    }
    for recs in by_res.values_mut() {
        recs.sort_by_key(|r| (r.t_enter, r.token, r.t_exit));
        // Track the furthest exit so far, not just the neighbour's: a long
        // section can overlap several later ones.
        let mut reach: Option<CsRecord> = None;
        for pair in recs.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let prev = match reach {
                Some(r) if r.t_exit > a.t_exit => r,
                _ => a,
            };
            if b.t_enter < prev.t_exit {
                violations.push(Violation::Overlap { first: prev, second: b });
            }
            if b.token <= a.token {
                violations.push(Violation::TokenRegression { first: a, second: b });
            }
            reach = Some(prev);
        }
    }
    Verdict { checked: records.len(), excused: 0, violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Granted,
    Failed,
    Abandoned,
    Pending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RequestRecord {
    pub client: ClientId,
    pub node: NodeId,
    pub resource: ResourceId,
    pub issued_at: Micros,
    pub outcome: Outcome,
}

/// Answers when the authority a request depends on was last unreachable.
pub trait Availability {
    /// End of the latest outage affecting `req` that started before `before`,
    /// or `None` if it was never affected.
    fn last_outage_end(&self, req: &RequestRecord, before: Micros) -> Option<Micros>;
}

/// Every request issued before `end - grace` must be resolved, unless an
/// outage of its authority lasted into the final grace window.
pub fn check_liveness(requests: &[RequestRecord], avail: &dyn Availability, end: Micros, grace: Micros) -> Verdict {
    let horizon = end.saturating_sub(grace);
    let mut violations = Vec::new();
    let mut excused = 0;
    let mut checked = 0;
    for r in requests.iter().filter(|r| r.issued_at < horizon) {
        checked += 1;
        if r.outcome != Outcome::Pending {
            continue;
        }
        match avail.last_outage_end(r, end) {
            Some(t) if t > horizon => excused += 1,
            _ => violations.push(Violation::Stalled { client: r.client, issued_at: r.issued_at }),
        }
    }
    Verdict { checked, excused, violations }
}

/// A commit observed somewhere during a replicated-log run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CommitRecord {
    pub group: u16,
    pub index: u64,
    pub term: u64,
}

/// Every committed `(index, term)` must be present in the final leader's log
/// of its group. `final_logs[g]` lists entry terms, index 1 first.
pub fn check_quorum_durability(commits: &[CommitRecord], final_logs: &BTreeMap<u16, Vec<u64>>) -> Verdict {
    let mut violations = Vec::new();
    for c in commits {
        let present = final_logs
            .get(&c.group)
            .and_then(|log| log.get(c.index as usize - 1))
            .is_some_and(|t| *t == c.term);
        if !present {
            violations.push(Violation::LostCommit { group: c.group, index: c.index, term: c.term });
        }
    }
    Verdict { checked: commits.len(), excused: 0, violations }
}

/// `resource,token,holder,t_enter_us,t_exit_us`, one record per line.
pub fn trace_dump(records: &[CsRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{}", r.resource.0, r.token.0, r.holder.0, r.t_enter, r.t_exit);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(token: u64, a: Micros, b: Micros) -> CsRecord {
        CsRecord { resource: ResourceId(0), token: FencingToken(token), holder: ClientId(token as u32), t_enter: a, t_exit: b }
    }

    #[test]
    fn touching_sections_pass() {
        assert!(check_mutual_exclusion(&[cs(1, 0, 10), cs(2, 10, 20)]).passed());
    }

    #[test]
    fn overlap_fails() {
        let v = check_mutual_exclusion(&[cs(1, 0, 10), cs(2, 5, 15)]);
        assert!(matches!(v.violations[0], Violation::Overlap { .. }));
    }

    #[test]
    fn token_regression_fails() {
        let v = check_mutual_exclusion(&[cs(1, 0, 1), cs(3, 2, 3), cs(2, 4, 5)]);
        assert_eq!(v.violations.len(), 1);
        assert!(matches!(v.violations[0], Violation::TokenRegression { .. }));
    }

    #[test]
    fn long_section_overlapping_a_later_one() {
        let v = check_mutual_exclusion(&[cs(1, 0, 100), cs(2, 10, 20), cs(3, 30, 40)]);
        assert_eq!(v.violations.len(), 2);
    }

    #[test]
    fn different_resources_independent() {
        let mut b = cs(1, 5, 15);
        b.resource = ResourceId(1);
        assert!(check_mutual_exclusion(&[cs(1, 0, 10), b]).passed());
    }

    struct Outages(Vec<(Micros, Micros)>);
    impl Availability for Outages {
        fn last_outage_end(&self, req: &RequestRecord, before: Micros) -> Option<Micros> {
            self.0.iter().filter(|(s, e)| *s < before && *e > req.issued_at).map(|(_, e)| *e).max()
        }
    }

    fn req(at: Micros, outcome: Outcome) -> RequestRecord {
        RequestRecord { client: ClientId(0), node: NodeId(1), resource: ResourceId(0), issued_at: at, outcome }
    }

    #[test]
    fn liveness_no_faults() {
        let v = check_liveness(&[req(1, Outcome::Granted), req(2, Outcome::Failed)], &Outages(vec![]), 100, 10);
        assert_eq!(v.label(), "passed");
        let v = check_liveness(&[req(1, Outcome::Pending)], &Outages(vec![]), 100, 10);
        assert!(!v.passed());
    }

    #[test]
    fn permanent_outage_excuses() {
        let v = check_liveness(&[req(50, Outcome::Pending)], &Outages(vec![(40, u64::MAX)]), 100, 10);
        assert_eq!(v.label(), "conditionally passed");
        assert_eq!(v.excused, 1);
    }

    #[test]
    fn healed_outage_does_not_excuse() {
        let v = check_liveness(&[req(50, Outcome::Pending)], &Outages(vec![(40, 60)]), 100, 10);
        assert!(!v.passed());
    }

    #[test]
    fn durability_check() {
        let logs = BTreeMap::from([(0u16, vec![1, 1, 2])]);
        let ok = [CommitRecord { group: 0, index: 2, term: 1 }, CommitRecord { group: 0, index: 3, term: 2 }];
        assert!(check_quorum_durability(&ok, &logs).passed());
        let lost = [CommitRecord { group: 0, index: 3, term: 1 }];
        assert!(!check_quorum_durability(&lost, &logs).passed());
        let beyond = [CommitRecord { group: 0, index: 4, term: 2 }];
        assert!(!check_quorum_durability(&beyond, &logs).passed());
    }

    #[test]
    fn dump_format() {
        assert_eq!(trace_dump(&[cs(1, 0, 10)]), "0,1,1,0,10\n");
    }
}

//! Protocol-neutral lock vocabulary and the engine contract.

mod engine;
mod message;
mod ring;

pub use engine::{Action, Ctx, Note, ProtocolEngine, Requirement, Timer};
pub use message::{DenyReason, HlMsg, LdlMsg, Msg, PdlCommand, PdlEntry, PdlMsg};
pub use ring::{resource_hash, route, EmptyRing, Ring, VIRTUAL_POINTS};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::sim::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResourceId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClientId(pub u32);

/// Unique per (client, run): the sequence number embeds the client's
/// incarnation in its high 32 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestId {
    pub client: ClientId,
    /// Node hosting the client; replies go here.
    pub node: NodeId,
    pub seq: u64,
}

impl RequestId {
    pub fn incarnation(&self) -> u32 {
        (self.seq >> 32) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FencingToken(pub u64);

impl std::fmt::Display for FencingToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-resource token counters held by the current authority.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenTable {
    last: HashMap<ResourceId, u64>,
}

impl TokenTable {
    pub fn next_token(&mut self, r: ResourceId) -> FencingToken {
        let v = self.last.entry(r).or_insert(0);
        *v += 1;
        FencingToken(*v)
    }

    pub fn last(&self, r: ResourceId) -> u64 {
        self.last.get(&r).copied().unwrap_or(0)
    }

    /// Installs a counter handed over by a previous authority. Never moves a
    /// counter backwards.
    pub fn adopt(&mut self, r: ResourceId, last: u64) {
        let v = self.last.entry(r).or_insert(0);
        *v = (*v).max(last);
    }

    pub fn take(&mut self, r: ResourceId) -> u64 {
        self.last.remove(&r).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_token_is_one() {
        let mut t = TokenTable::default();
        assert_eq!(t.next_token(ResourceId(0)), FencingToken(1));
    }

    #[test]
    fn counter_after_five() {
        let mut t = TokenTable::default();
        for _ in 0..5 {
            t.next_token(ResourceId(3));
        }
        assert_eq!(t.next_token(ResourceId(3)), FencingToken(6));
        assert_eq!(t.next_token(ResourceId(4)), FencingToken(1));
    }

    #[test]
    fn migration_preserves_counter() {
        let mut old = TokenTable::default();
        let mut issued = Vec::new();
        for _ in 0..4 {
            issued.push(old.next_token(ResourceId(1)).0);
        }
        let mut new = TokenTable::default();
        new.adopt(ResourceId(1), old.take(ResourceId(1)));
        for _ in 0..3 {
            issued.push(new.next_token(ResourceId(1)).0);
        }
        // migrate back
        old.adopt(ResourceId(1), new.take(ResourceId(1)));
        issued.push(old.next_token(ResourceId(1)).0);
        assert!(issued.windows(2).all(|w| w[0] < w[1]), "{issued:?}");
    }
}

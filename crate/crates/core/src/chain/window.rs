use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use crate::crypto::Group;
use crate::hash::Hash256;

use super::blocks::{KeyBlock, NodeId};
use super::ChainError;

/// One share: credited to the miner of one keyblock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share<G: Group> {
    pub miner: NodeId,
    pub key: G::Element,
    pub keyblock: Hash256,
}

/// The last `w` keyblocks' miners, oldest first. Clones share storage until
/// one of them is updated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareWindow<G: Group> {
    size: usize,
    shares: Arc<VecDeque<Share<G>>>,
    tip: Hash256,
}

impl<G: Group> ShareWindow<G> {
    /// An empty window that expects its first keyblock to extend `tip`.
    pub fn new(size: usize, tip: Hash256) -> Self {
        assert!(size > 0, "window size must be positive");
        Self {
            size,
            shares: Arc::new(VecDeque::with_capacity(size + 1)),
            tip,
        }
    }

    pub fn capacity(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn tip(&self) -> Hash256 {
        self.tip
    }

    /// Miners in window order, oldest first.
    pub fn miners(&self) -> impl DoubleEndedIterator<Item = NodeId> + '_ {
        self.shares.iter().map(|s| s.miner)
    }

    pub fn shares(&self) -> impl DoubleEndedIterator<Item = &Share<G>> + '_ {
        self.shares.iter()
    }

    /// Share `k` counting back from the newest (`k = 0`).
    pub fn recent(&self, k: usize) -> Option<&Share<G>> {
        self.shares.len().checked_sub(k + 1).map(|i| &self.shares[i])
    }

    /// Credits the miner of `kb` and expires the oldest share past `w`.
    pub fn update(&mut self, group: &G, kb: &KeyBlock<G>) -> Result<(), ChainError> {
        if kb.prev != self.tip {
            return Err(ChainError::DoesNotExtend {
                expected: self.tip,
                got: kb.prev,
            });
        }
        self.push(kb.miner, kb.miner_key, kb.hash(group));
        Ok(())
    }

    /// Credits a share without chain-link checks; for fixtures and analysis.
    pub fn push(&mut self, miner: NodeId, key: G::Element, keyblock: Hash256) {
        let shares = Arc::make_mut(&mut self.shares);
        shares.push_back(Share {
            miner,
            key,
            keyblock,
        });
        if shares.len() > self.size {
            shares.pop_front();
        }
        self.tip = keyblock;
    }

    pub fn voting_power(&self, miner: NodeId) -> u64 {
        self.shares.iter().filter(|s| s.miner == miner).count() as u64
    }

    pub fn roster(&self) -> Roster<G> {
        Roster::from_window(self)
    }
}

/// Consequence of updating a window: returns the window with `kb` applied.
pub fn update_window<G: Group>(
    group: &G,
    window: &ShareWindow<G>,
    kb: &KeyBlock<G>,
) -> Result<ShareWindow<G>, ChainError> {
    let mut next = window.clone();
    next.update(group, kb)?;
    Ok(next)
}

pub fn voting_power<G: Group>(roster: &Roster<G>, miner: NodeId) -> u64 {
    roster
        .position(miner)
        .map_or(0, |i| roster.members[i].shares)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member<G: Group> {
    pub id: NodeId,
    pub key: G::Element,
    pub shares: u64,
}

/// The consensus group derived from a share window.
///
/// Members are ordered by their most recent share, newest first, so position
/// 0 is the latest keyblock's miner. A miner holding `s` shares is one member
/// with weight `s`; collective-signature masks index this order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster<G: Group> {
    members: Vec<Member<G>>,
    index: HashMap<NodeId, usize>,
    keys: Arc<[G::Element]>,
    weights: Arc<[u64]>,
    total: u64,
}

impl<G: Group> Roster<G> {
    pub fn from_window(window: &ShareWindow<G>) -> Self {
        let mut members: Vec<Member<G>> = Vec::new();
        let mut index: HashMap<NodeId, usize> = HashMap::new();
        for share in window.shares().rev() {
            match index.get(&share.miner) {
                Some(&i) => members[i].shares += 1,
                None => {
                    index.insert(share.miner, members.len());
                    members.push(Member {
                        id: share.miner,
                        key: share.key,
                        shares: 1,
                    });
                }
            }
        }
        Self {
            total: window.len() as u64,
            keys: members.iter().map(|m| m.key).collect(),
            weights: members.iter().map(|m| m.shares).collect(),
            members,
            index,
        }
    }

    pub fn members(&self) -> &[Member<G>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn total_shares(&self) -> u64 {
        self.total
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.position(id).is_some()
    }

    pub fn weights(&self) -> Arc<[u64]> {
        self.weights.clone()
    }

    pub fn keys(&self) -> Arc<[G::Element]> {
        self.keys.clone()
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.members.iter().map(|m| m.id).collect()
    }

    /// Fault bound `f = floor((w - 2) / 3)`, so that `w >= 3f + 2`.
    pub fn f(&self) -> u64 {
        fault_bound(self.total)
    }

    pub fn commit_quorum(&self) -> u64 {
        commit_quorum(self.total)
    }

    pub fn era_first_quorum(&self) -> u64 {
        era_first_quorum(self.total)
    }
}

pub fn fault_bound(total_shares: u64) -> u64 {
    total_shares.saturating_sub(2) / 3
}

/// Smallest share weight `q` such that any two sets of weight `q` overlap in
/// more than `f` shares, so two conflicting quorums always share an honest
/// member: `q = floor((w + f) / 2) + 1`.
///
/// This is `2f + 1` when `w = 3f + 1` and `2f + 2` when `w = 3f + 2`.
pub fn commit_quorum(total_shares: u64) -> u64 {
    let f = fault_bound(total_shares);
    ((total_shares + f) / 2 + 1).min(total_shares)
}

/// Support the first microblock of an era needs: at least `2f + 2`, and never
/// less than the ordinary commit quorum.
pub fn era_first_quorum(total_shares: u64) -> u64 {
    let f = fault_bound(total_shares);
    (2 * f + 2).max(commit_quorum(total_shares)).min(total_shares)
}

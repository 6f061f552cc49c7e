use std::collections::{BTreeMap, BTreeSet};

use super::blocks::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RewardSplit {
    pub paid: BTreeMap<NodeId, u64>,
    /// Portions belonging to members that did not co-sign. These are burned,
    /// not handed to the members who were online.
    pub discarded: u64,
}

impl RewardSplit {
    pub fn total(&self) -> u64 {
        self.paid.values().sum::<u64>() + self.discarded
    }
}

/// Splits `total` across `shares` in proportion to share counts.
///
/// Integer remainders go one unit each to the largest fractional parts, ties
/// broken by lowest miner id. Portions of members in `excepted` are
/// discarded. Duplicate miner ids are merged.
pub fn split_reward(total: u64, shares: &[(NodeId, u64)], excepted: &BTreeSet<NodeId>) -> RewardSplit {
    let mut merged: BTreeMap<NodeId, u64> = BTreeMap::new();
    for &(id, s) in shares {
        *merged.entry(id).or_default() += s;
    }
    merged.retain(|_, s| *s > 0);
    let weight: u128 = merged.values().map(|&s| u128::from(s)).sum();
    if weight == 0 {
        return RewardSplit {
            paid: BTreeMap::new(),
            discarded: total,
        };
    }

    let mut alloc: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut remainders: Vec<(u128, NodeId)> = Vec::with_capacity(merged.len());
    let mut handed_out = 0u64;
    for (&id, &s) in &merged {
        let exact = u128::from(total) * u128::from(s);
        let base = (exact / weight) as u64;
        alloc.insert(id, base);
        handed_out += base;
        remainders.push((exact % weight, id));
    }
    // largest remainder first, then lowest id
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, id) in remainders.iter().take((total - handed_out) as usize) {
        *alloc.get_mut(&id).expect("allocated") += 1;
    }

    let mut split = RewardSplit::default();
    for (id, amount) in alloc {
        if excepted.contains(&id) {
            split.discarded += amount;
        } else {
            split.paid.insert(id, amount);
        }
    }
    split
}
